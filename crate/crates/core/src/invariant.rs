//! Invariant measures of the semigroup models. Ornstein–Uhlenbeck laws come
//! from the Lyapunov equation and 1-D diffusions from a stationary density
//! solve; the Has'minskii table checks a Lyapunov function on shells.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{CompactWindow, Grid, SampledField};
use crate::means::{cesaro_mean, CesaroReport};
use crate::models::SemigroupModel;
use crate::quadrature::{NormalRule, QuadratureSpec};
use crate::report::csv_table;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

#[derive(Serialize)]
struct GaussianJson<'a> {
    mean: &'a [f64],
    covariance: Vec<Vec<f64>>,
}

impl GaussianMeasure {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.shape() != (mean.len(), mean.len()) || !crate::models::is_spd(&covariance) {
            return Err(Error::NonSpdInput);
        }
        Ok(Self { mean, covariance })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            covariance: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Density of a 1-D Gaussian.
    pub fn pdf_1d(&self, x: f64) -> f64 {
        let v = self.covariance[(0, 0)];
        let z = x - self.mean[0];
        (-0.5 * z * z / v).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    }

    /// `∫ g dμ` by tensor Gauss–Hermite through the Cholesky factor.
    pub fn expect(&self, order: usize, g: impl Fn(&[f64]) -> f64) -> f64 {
        let n = self.dim();
        let l = self
            .covariance
            .clone()
            .cholesky()
            .expect("validated covariance")
            .l();
        let rule = NormalRule::get(order);
        let mut y = vec![0.0; n];
        rule.tensor(n)
            .iter()
            .map(|(z, w)| {
                for i in 0..n {
                    y[i] = self.mean[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>();
                }
                w * g(&y)
            })
            .sum()
    }

    pub fn to_json(&self) -> String {
        let n = self.dim();
        let covariance = (0..n)
            .map(|i| (0..n).map(|j| self.covariance[(i, j)]).collect())
            .collect();
        crate::report::to_json(&GaussianJson {
            mean: &self.mean,
            covariance,
        })
        .expect("serializes")
    }
}

/// Normalised density of a 1-D invariant measure on a grid.
#[derive(Debug, Clone)]
pub struct InvariantDensity1D {
    grid: Arc<Grid>,
    rho: Vec<f64>,
    /// Grid mass of the unnormalised density `(1/q) exp(∫_0^x b/q)`.
    pub normalization: f64,
    /// Mass outside the grid box relative to the total, from the divergence scan.
    pub tail_mass: f64,
}

impl InvariantDensity1D {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    fn weights(&self) -> Vec<f64> {
        trapezoid_weights(self.grid.axis(0).coords())
    }

    pub fn total_mass(&self) -> f64 {
        self.weights().iter().zip(&self.rho).map(|(w, r)| w * r).sum()
    }

    /// Trapezoid `∫ g ρ` on the density grid.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        let c = self.grid.axis(0).coords();
        self.weights()
            .iter()
            .zip(&self.rho)
            .zip(c)
            .map(|((w, r), &x)| w * r * g(x))
            .sum()
    }

    /// Difference between the trapezoid on every node and on every second
    /// node, divided by 3: the Richardson estimate of the quadrature error.
    pub fn richardson_estimate(&self, g: impl Fn(f64) -> f64) -> f64 {
        let c = self.grid.axis(0).coords();
        let fine = self.expect(&g);
        let coarse_c: Vec<f64> = c.iter().step_by(2).copied().collect();
        let coarse_r: Vec<f64> = self.rho.iter().step_by(2).copied().collect();
        let coarse: f64 = trapezoid_weights(&coarse_c)
            .iter()
            .zip(&coarse_r)
            .zip(&coarse_c)
            .map(|((w, r), &x)| w * r * g(x))
            .sum();
        (fine - coarse).abs() / 3.0
    }

    pub fn to_csv(&self) -> String {
        let c = self.grid.axis(0).coords();
        csv_table(&["x", "rho"], c.iter().zip(&self.rho).map(|(&x, &r)| vec![x, r]))
    }
}

fn trapezoid_weights(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = c[i + 1] - c[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

#[derive(Debug, Clone)]
pub enum Measure {
    Gaussian(GaussianMeasure),
    Density(InvariantDensity1D),
}

impl Measure {
    pub fn integrate(&self, f: &SampledField, q: &QuadratureSpec) -> f64 {
        match self {
            Measure::Gaussian(g) => g.expect(q.gh_order, |x| f.eval(x)),
            Measure::Density(d) => d.expect(|x| f.eval1(x)),
        }
    }

    pub fn expect_fn(&self, q: &QuadratureSpec, g: impl Fn(f64) -> f64) -> f64 {
        match self {
            Measure::Gaussian(m) => m.expect(q.gh_order, |x| g(x[0])),
            Measure::Density(d) => d.expect(g),
        }
    }
}

/// Gaussian invariant law of the OU semigroup with drift `B` and diffusion
/// `Q`, or `None` when the spectrum of `B` leaves the open left half-plane.
pub fn ou_invariant(b: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Option<GaussianMeasure>> {
    let n = b.nrows();
    if !b.is_square() || q.shape() != (n, n) || !crate::models::is_spd(q) {
        return Err(Error::NonSpdInput);
    }
    let scale = b.amax().max(1.0);
    let max_re = b
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_re >= -1e-12 * scale {
        return Ok(None);
    }
    let sigma = solve_lyapunov(b, q)?;
    Ok(Some(GaussianMeasure::new(vec![0.0; n], sigma)?))
}

/// Solves `BΣ + ΣBᵀ = −2Q` through `(I⊗B + B⊗I) vec Σ = −2 vec Q`.
pub fn solve_lyapunov(b: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let k = eye.kronecker(b) + b.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -2.0 * v));
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditioned(f64::INFINITY))?;
    let sigma = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(0.5 * (&sigma + sigma.transpose()))
}

/// `max |BΣ + ΣBᵀ + 2Q|`.
pub fn lyapunov_residual(b: &DMatrix<f64>, q: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
    (b * sigma + sigma * b.transpose() + q * 2.0).amax()
}

/// Radii of the divergence scan.
pub const SCAN_START: f64 = 1e3;
pub const SCAN_DOUBLINGS: usize = 4;
/// Mass growth per doubling above which the density is declared non-normalisable.
pub const DIVERGENCE_GROWTH: f64 = 0.1;

/// Stationary density `ρ ∝ (1/q) exp(∫_0^x b/q)` of `q u'' + b u'`, normalised on
/// the grid box, after an integrability scan over `L = 10³·2^j`.
pub fn stationary_density_1d(q_fn: &Expr, b_fn: &Expr, grid: Arc<Grid>) -> Result<InvariantDensity1D> {
    if grid.dim() != 1 {
        return Err(Error::GridMismatch("stationary density needs a 1-D grid".into()));
    }
    let ratio = |x: f64| {
        let q = q_fn.eval_x(x);
        if !(q > 0.0) {
            return Err(Error::InvalidModel(format!("q({x}) = {q} is not positive")));
        }
        Ok(b_fn.eval_x(x) / q)
    };
    let log_rho = |x: f64, phi: f64| phi - q_fn.eval_x(x).ln();

    // integrability scan in the log domain, outward from 0 on both sides
    let radii: Vec<f64> = (0..=SCAN_DOUBLINGS).map(|j| SCAN_START * 2f64.powi(j as i32)).collect();
    let box_l = grid.half_width();
    let mut checkpoints = radii.clone();
    checkpoints.push(box_l);
    checkpoints.sort_by(f64::total_cmp);
    checkpoints.dedup();
    let mut log_mass = vec![f64::NEG_INFINITY; checkpoints.len()];
    for dir in [1.0, -1.0] {
        let mut x = 0.0_f64;
        let mut phi = 0.0;
        let mut acc = f64::NEG_INFINITY;
        let mut next = 0;
        let mut g0 = ratio(0.0)?;
        let mut l0 = log_rho(0.0, 0.0);
        while next < checkpoints.len() {
            let step = (0.01 * (1.0 + x)).min(2.0).min(checkpoints[next] - x);
            let xm = x + 0.5 * step;
            let x1 = x + step;
            let gm = ratio(dir * xm)?;
            let g1 = ratio(dir * x1)?;
            // Simpson for the potential, then Simpson for the mass of the cell
            let phi_m = phi + dir * step / 24.0 * (5.0 * g0 + 8.0 * gm - g1);
            let phi1 = phi + dir * step / 6.0 * (g0 + 4.0 * gm + g1);
            let lm = log_rho(dir * xm, phi_m);
            let l1 = log_rho(dir * x1, phi1);
            let peak = l0.max(lm).max(l1);
            let cell = peak
                + (step / 6.0 * ((l0 - peak).exp() + 4.0 * (lm - peak).exp() + (l1 - peak).exp())).ln();
            acc = log_add(acc, cell);
            x = x1;
            phi = phi1;
            g0 = g1;
            l0 = l1;
            if (x - checkpoints[next]).abs() <= 1e-9 * checkpoints[next] {
                log_mass[next] = log_add(log_mass[next], acc);
                next += 1;
            }
            if !acc.is_finite() && acc > 0.0 {
                return Err(Error::NoInvariantMeasure { growth: f64::INFINITY });
            }
        }
    }
    let mass_at = |l: f64| {
        let i = checkpoints.iter().position(|&c| c == l).expect("checkpoint");
        log_mass[i]
    };
    let mut worst = 0.0_f64;
    for w in radii.windows(2) {
        let growth = (mass_at(w[1]) - mass_at(w[0])).exp_m1();
        if !growth.is_finite() {
            return Err(Error::NoInvariantMeasure { growth: f64::INFINITY });
        }
        worst = worst.max(growth);
    }
    if worst > DIVERGENCE_GROWTH {
        return Err(Error::NoInvariantMeasure { growth: worst });
    }
    let total = mass_at(*radii.last().expect("radii"));
    let inside = mass_at(box_l);
    let tail_mass = if box_l >= *radii.last().unwrap() {
        0.0
    } else {
        -(inside - total).exp_m1()
    };

    // density on the requested grid, potential by per-cell Simpson from 0
    let c = grid.axis(0).coords().to_vec();
    let zero = c.partition_point(|&x| x < 0.0);
    let mut phi = vec![0.0; c.len()];
    let cell = |a: f64, b: f64| -> Result<f64> {
        Ok((b - a) / 6.0 * (ratio(a)? + 4.0 * ratio(0.5 * (a + b))? + ratio(b)?))
    };
    let start = if zero < c.len() && c[zero] == 0.0 {
        zero
    } else {
        // no node at the origin: integrate from 0 to the nearest node first
        phi[zero] = cell(0.0, c[zero])?;
        zero
    };
    for i in start + 1..c.len() {
        phi[i] = phi[i - 1] + cell(c[i - 1], c[i])?;
    }
    if start > 0 {
        let first_neg = start - 1;
        phi[first_neg] = phi[start] - cell(c[first_neg], c[start])?;
        for i in (0..first_neg).rev() {
            phi[i] = phi[i + 1] - cell(c[i], c[i + 1])?;
        }
    }
    let logs: Vec<f64> = c.iter().zip(&phi).map(|(&x, &p)| log_rho(x, p)).collect();
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
    let mass: f64 = trapezoid_weights(&c).iter().zip(&unnorm).map(|(w, r)| w * r).sum();
    let rho = unnorm.iter().map(|r| r / mass).collect();
    Ok(InvariantDensity1D {
        grid,
        rho,
        normalization: mass * peak.exp(),
        tail_mass,
    })
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `|∫ T(t) f dμ − ∫ f dμ|`.
pub fn invariance_residual(
    m: &SemigroupModel,
    mu: &Measure,
    f: &SampledField,
    t: f64,
    q: &QuadratureSpec,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let moved = m.apply(t, f, q)?;
    Ok((mu.integrate(&moved, q) - mu.integrate(f, q)).abs())
}

/// `|∫ (A f) ρ|` for a smooth, compactly supported test field.
pub fn adjoint_residual(m: &SemigroupModel, rho: &InvariantDensity1D, f: &SampledField) -> Result<f64> {
    let af = m.generator_apply(f)?;
    Ok(rho.expect(|x| af.eval1(x)).abs())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LimitCheck {
    /// `∫ f dμ`.
    pub mean: f64,
    /// `p_w(P̂ f − ∫ f dμ)`.
    pub residual: f64,
    /// Largest invariance residual over the sampled times.
    pub invariance: f64,
}

/// Compares the converged Cesàro limit with the constant `∫ f dμ`.
pub fn mean_ergodic_limit_check(
    m: &SemigroupModel,
    mu: &Measure,
    f: &SampledField,
    report: &CesaroReport,
    q: &QuadratureSpec,
) -> Result<LimitCheck> {
    let limit = report.limit().ok_or(Error::NotConverged)?;
    let w = CompactWindow::new(report.window);
    let mean = mu.integrate(f, q);
    let residual = limit.map(|v| v - mean)?.seminorm(w)?;
    let mut invariance = 0.0_f64;
    for t in [0.5, 1.0] {
        invariance = invariance.max(invariance_residual(m, mu, f, t, q)?);
    }
    Ok(LimitCheck {
        mean,
        residual,
        invariance,
    })
}

/// `(∫ |C(r) f − ∫ f dμ|^p dμ)^{1/p}`.
pub fn ergodic_lp_residual(
    m: &SemigroupModel,
    mu: &Measure,
    f: &SampledField,
    r: f64,
    p: u32,
    q: &QuadratureSpec,
) -> Result<f64> {
    if p == 0 {
        return Err(Error::InvalidModel("p must be at least 1".into()));
    }
    let mean = mu.integrate(f, q);
    let c = cesaro_mean(m, f, r, q)?;
    let dev = c.map(|v| (v - mean).abs().powi(p as i32))?;
    Ok(mu.integrate(&dev, q).max(0.0).powf(1.0 / p as f64))
}

#[derive(Debug, Clone, Serialize)]
pub struct HasminskiiRow {
    pub radius: f64,
    pub min_v: f64,
    pub max_av: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HasminskiiReport {
    pub rows: Vec<HasminskiiRow>,
    pub pass: bool,
}

impl HasminskiiReport {
    pub fn to_csv(&self) -> String {
        csv_table(
            &["radius", "minV", "maxAV"],
            self.rows.iter().map(|r| vec![r.radius, r.min_v, r.max_av]),
        )
    }
}

/// Lyapunov-function table on the shells `|x| = radius` of a 1-D model:
/// passes when `min V` strictly increases, `max AV` strictly decreases and the
/// last `max AV` is negative.
pub fn hasminskii_report(m: &SemigroupModel, v: &Expr, radii: &[f64]) -> Result<HasminskiiReport> {
    if m.dim() != Some(1) && !matches!(m, SemigroupModel::Heat { .. }) {
        return Err(Error::Unsupported("Lyapunov shells are implemented for 1-D models".into()));
    }
    if radii.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::InvalidModel("radii must increase".into()));
    }
    let rows: Vec<HasminskiiRow> = radii
        .iter()
        .map(|&r| {
            let mut min_v = f64::INFINITY;
            let mut max_av = f64::NEG_INFINITY;
            for x in [-r, r] {
                let (d1, d2) = v.derivatives_x(x, 0.0);
                let (qm, drift) = m.coefficients_at(&[x]);
                min_v = min_v.min(v.eval_x(x));
                max_av = max_av.max(qm[0] * d2 + drift[0] * d1);
            }
            HasminskiiRow {
                radius: r,
                min_v,
                max_av,
            }
        })
        .collect();
    let pass = rows.len() >= 2
        && rows.windows(2).all(|p| p[1].min_v > p[0].min_v && p[1].max_av < p[0].max_av)
        && rows.last().is_some_and(|r| r.max_av < 0.0);
    Ok(HasminskiiReport { rows, pass })
}
