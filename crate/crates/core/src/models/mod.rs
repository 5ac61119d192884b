//! Concrete semigroups on bounded continuous functions: left translation,
//! heat, Ornstein–Uhlenbeck (one and several dimensions) and a 1-D elliptic
//! Feller model with variable coefficients.
//!
//! Every model exposes `apply(t, f) ≈ T(t) f` and the generator action
//! `A f` on interior grid nodes.

mod ou;
pub(crate) mod parabolic;

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{CompactWindow, Extension, Grid, SampledField};
use crate::quadrature::{NormalRule, QuadratureSpec};

pub use ou::OuNd;
pub(crate) use ou::is_spd;
pub(crate) use parabolic::{Coefficients, ThetaScheme};

/// Relative Richardson estimate above which [`generator_apply`] refuses a grid.
pub const GENERATOR_TOLERANCE: f64 = 1e-3;

/// `‖T(t)‖ ≤ M e^{ωt}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthBound {
    pub m: f64,
    pub omega: f64,
}

/// Variable-coefficient model `A u = q(x) u'' + b(x) u'` on the line, solved
/// with absorbing boundaries on the expanding intervals of `domain_schedule`.
#[derive(Debug, Clone, PartialEq)]
pub struct Elliptic1D {
    pub q: Expr,
    pub b: Expr,
    pub domain_schedule: Vec<f64>,
    /// Allowed sup difference between the last two truncations on the field box.
    pub truncation_tol: f64,
    pub theta: f64,
    pub time_step: f64,
}

impl Elliptic1D {
    pub fn new(q: Expr, b: Expr, domain_schedule: Vec<f64>) -> Result<Self> {
        let e = Self {
            q,
            b,
            domain_schedule,
            truncation_tol: 1e-6,
            theta: 0.5,
            time_step: 1e-3,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn with_truncation_tol(mut self, tol: f64) -> Self {
        self.truncation_tol = tol;
        self
    }

    pub fn with_time_step(mut self, dt: f64) -> Self {
        self.time_step = dt;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.domain_schedule.is_empty() {
            return Err(Error::InvalidModel("domain_schedule is empty".into()));
        }
        if self.domain_schedule.windows(2).any(|w| !(w[1] > w[0])) || self.domain_schedule[0] <= 0.0 {
            return Err(Error::InvalidModel(
                "domain_schedule must be positive and strictly increasing".into(),
            ));
        }
        if self.q.depends_on_time() || self.b.depends_on_time() {
            return Err(Error::InvalidModel(
                "autonomous coefficients may not depend on s".into(),
            ));
        }
        if !(self.time_step > 0.0) || !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidModel("invalid time_step or theta".into()));
        }
        Ok(())
    }
}

impl Coefficients for Elliptic1D {
    fn q(&self, _s: f64, x: f64) -> f64 {
        self.q.eval_x(x)
    }
    fn b(&self, _s: f64, x: f64) -> f64 {
        self.b.eval_x(x)
    }
    fn time_dependent(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SemigroupModel {
    /// `T(t) f(x) = f(x + t)`.
    Translation,
    /// `A = κ Δ`.
    Heat { kappa: f64 },
    /// `A = q d²/dx² − a x d/dx`.
    Ou1d { a: f64, q: f64 },
    /// `A = Σ q_ij D_ij + ⟨Bx, ∇⟩`.
    OuNd(OuNd),
    Elliptic1d(Elliptic1D),
}

impl SemigroupModel {
    pub fn heat(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidModel(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self::Heat { kappa })
    }

    pub fn ou1d(a: f64, q: f64) -> Result<Self> {
        if !(a > 0.0 && q > 0.0 && a.is_finite() && q.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "OU-1D needs a > 0 and q > 0, got a = {a}, q = {q}"
            )));
        }
        Ok(Self::Ou1d { a, q })
    }

    pub fn ou_nd(b: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        Ok(Self::OuNd(OuNd::new(b, q)?))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Translation => "translation",
            Self::Heat { .. } => "heat",
            Self::Ou1d { .. } => "ou-1d",
            Self::OuNd(_) => "ou-nd",
            Self::Elliptic1d(_) => "elliptic-1d",
        }
    }

    /// All shipped models are contractions.
    pub fn growth_bound(&self) -> GrowthBound {
        GrowthBound { m: 1.0, omega: 0.0 }
    }

    /// Spatial dimension the model acts on, when fixed.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Heat { .. } => None,
            Self::OuNd(o) => Some(o.dim()),
            _ => Some(1),
        }
    }

    fn check_dim(&self, f: &SampledField) -> Result<()> {
        match self.dim() {
            Some(d) if d != f.dim() => Err(Error::GridMismatch(format!(
                "{} acts on dimension {d}, field has dimension {}",
                self.kind(),
                f.dim()
            ))),
            _ => Ok(()),
        }
    }

    /// Second-order coefficients (row-major `N×N`) and drift at `x`.
    pub fn coefficients_at(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self {
            Self::Translation => (vec![0.0], vec![1.0]),
            Self::Heat { kappa } => {
                let n = x.len();
                let mut q = vec![0.0; n * n];
                for i in 0..n {
                    q[i * n + i] = *kappa;
                }
                (q, vec![0.0; n])
            }
            Self::Ou1d { a, q } => (vec![*q], vec![-a * x[0]]),
            Self::OuNd(o) => o.coefficients_at(x),
            Self::Elliptic1d(e) => (vec![e.q.eval_x(x[0])], vec![e.b.eval_x(x[0])]),
        }
    }

    /// `T(t) f` on the grid of `f`.
    pub fn apply(&self, t: f64, f: &SampledField, q: &QuadratureSpec) -> Result<SampledField> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidModel(format!("time must be nonnegative, got {t}")));
        }
        self.check_dim(f)?;
        if t == 0.0 {
            return Ok(f.clone());
        }
        q.validate()?;
        match self {
            Self::Translation => nodewise(f, |x| f.eval1(x[0] + t)),
            Self::Heat { kappa } => {
                if let Some(out) = heat_spectral(*kappa, t, f)? {
                    return Ok(out);
                }
                let sd = (2.0 * kappa * t).sqrt();
                gaussian_average(f, q.gh_order, |x, z, y| {
                    for k in 0..x.len() {
                        y[k] = x[k] + sd * z[k];
                    }
                })
            }
            Self::Ou1d { a, q: diff } => {
                let decay = (-a * t).exp();
                let sd = (diff / a * (-(-2.0 * a * t).exp_m1())).sqrt();
                let rule = NormalRule::get(q.gh_order);
                nodewise(f, |x| {
                    let m = decay * x[0];
                    rule.expect(|z| f.eval1(m + sd * z))
                })
            }
            Self::OuNd(o) => {
                let (flow, chol) = o.transition(t)?;
                let n = o.dim();
                gaussian_average(f, q.gh_order, |x, z, y| {
                    for i in 0..n {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += flow[(i, j)] * x[j];
                        }
                        for j in 0..=i {
                            acc += chol[(i, j)] * z[j];
                        }
                        y[i] = acc;
                    }
                })
            }
            Self::Elliptic1d(e) => elliptic_apply(e, f, &[t]).map(|mut v| v.pop().expect("one time")),
        }
    }

    /// Calls `visit(k, T(times[k]) f)` for increasing `times`, sharing work
    /// between consecutive times where the model allows it.
    pub fn sweep(
        &self,
        f: &SampledField,
        times: &[f64],
        q: &QuadratureSpec,
        mut visit: impl FnMut(usize, &SampledField) -> Result<()>,
    ) -> Result<()> {
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidQuadrature("sweep times must be nondecreasing".into()));
        }
        if let Self::Elliptic1d(e) = self {
            self.check_dim(f)?;
            return elliptic_sweep(e, f, times, &mut visit);
        }
        const CHUNK: usize = 32;
        for (c, chunk) in times.chunks(CHUNK).enumerate() {
            let fields: Vec<Result<SampledField>> =
                chunk.par_iter().map(|&t| self.apply(t, f, q)).collect();
            for (i, field) in fields.into_iter().enumerate() {
                visit(c * CHUNK + i, &field?)?;
            }
        }
        Ok(())
    }

    /// `A f` on the interior grid (one boundary ring removed).
    pub fn generator_apply(&self, f: &SampledField) -> Result<SampledField> {
        self.check_dim(f)?;
        let h = f.spacing().ok_or_else(|| {
            Error::Unsupported("finite-difference generator needs a uniform grid".into())
        })?;
        let fine = self.fd_generator(f, 1, h)?;
        // Richardson estimate from the doubled stencil on the ring-2 interior
        if f.grid().axes().iter().all(|a| a.len() >= 7) {
            let coarse = self.fd_generator(f, 2, h)?;
            let inner = f.grid().interior(2)?;
            let fine_grid = fine.grid().clone();
            let mut est = 0.0_f64;
            let mut x = vec![0.0; f.dim()];
            for i in 0..inner.len() {
                inner.node_into(i, &mut x);
                let a = fine.values()[index_of(&fine_grid, &x)];
                let b = coarse.values()[index_of(coarse.grid(), &x)];
                est = est.max((a - b).abs() / 3.0);
            }
            let scale = fine.sup_norm().max(1.0);
            if est / scale > GENERATOR_TOLERANCE {
                return Err(Error::GridTooCoarse {
                    estimate: est / scale,
                    tolerance: GENERATOR_TOLERANCE,
                });
            }
        }
        Ok(fine)
    }

    /// Central differences with stencil half-width `k·h`, on the interior ring `k`.
    fn fd_generator(&self, f: &SampledField, k: usize, h: f64) -> Result<SampledField> {
        let grid = f.grid();
        let dim = grid.dim();
        let inner = Arc::new(grid.interior(k)?);
        let strides = grid.strides().to_vec();
        let d = k as f64 * h;
        let vals = f.values();
        let values: Vec<f64> = (0..inner.len())
            .into_par_iter()
            .map_init(
                || (vec![0.0; dim], vec![0usize; dim]),
                |(x, mi), i| {
                    inner.node_into(i, x);
                    inner.multi_index(i, mi);
                    let centre: usize = mi.iter().zip(&strides).map(|(m, s)| (m + k) * s).sum();
                    let at = |off: &[(usize, isize)]| {
                        let mut idx = centre as isize;
                        for &(axis, o) in off {
                            idx += o * (k * strides[axis]) as isize;
                        }
                        vals[idx as usize]
                    };
                    let (qm, drift) = self.coefficients_at(x);
                    let f0 = vals[centre];
                    let mut acc = 0.0;
                    for a in 0..dim {
                        let fp = at(&[(a, 1)]);
                        let fm = at(&[(a, -1)]);
                        acc += drift[a] * (fp - fm) / (2.0 * d);
                        acc += qm[a * dim + a] * (fp - 2.0 * f0 + fm) / (d * d);
                        for b in a + 1..dim {
                            let c = qm[a * dim + b] + qm[b * dim + a];
                            if c != 0.0 {
                                let mixed = at(&[(a, 1), (b, 1)]) - at(&[(a, 1), (b, -1)])
                                    - at(&[(a, -1), (b, 1)])
                                    + at(&[(a, -1), (b, -1)]);
                                acc += c * mixed / (4.0 * d * d);
                            }
                        }
                    }
                    acc
                },
            )
            .collect();
        SampledField::new(inner, values, f.extension()).map(|g| g.with_interpolation(f.interpolation()))
    }
}

fn index_of(grid: &Grid, x: &[f64]) -> usize {
    let mut idx = 0;
    for (k, axis) in grid.axes().iter().enumerate() {
        let c = axis.coords();
        let i = match c.binary_search_by(|v| v.total_cmp(&x[k])) {
            Ok(i) => i,
            Err(i) => {
                if i > 0 && (x[k] - c[i - 1]).abs() < (c.get(i).copied().unwrap_or(f64::INFINITY) - x[k]).abs() {
                    i - 1
                } else {
                    i.min(c.len() - 1)
                }
            }
        };
        idx += i * grid.strides()[k];
    }
    idx
}

fn nodewise(f: &SampledField, g: impl Fn(&[f64]) -> f64 + Sync) -> Result<SampledField> {
    let grid = f.grid().clone();
    let dim = grid.dim();
    let values = (0..grid.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; dim],
            |x, i| {
                grid.node_into(i, x);
                g(x)
            },
        )
        .collect();
    f.with_values(values)
}

/// `E f(y(x, Z))` with `Z` standard normal on `R^N`, via tensor Gauss–Hermite.
fn gaussian_average(
    f: &SampledField,
    order: usize,
    map: impl Fn(&[f64], &[f64], &mut [f64]) + Sync,
) -> Result<SampledField> {
    let dim = f.dim();
    let rule = NormalRule::get(order);
    if dim == 1 {
        return nodewise(f, |x| {
            rule.expect(|z| {
                let mut y = [0.0];
                map(x, &[z], &mut y);
                f.eval1(y[0])
            })
        });
    }
    let points = rule.tensor(dim);
    nodewise(f, |x| {
        let mut y = vec![0.0; dim];
        points
            .iter()
            .map(|(z, w)| {
                map(x, z, &mut y);
                w * f.eval(&y)
            })
            .sum()
    })
}

/// Exact spectral heat flow for 1-D periodic fields on uniform grids.
fn heat_spectral(kappa: f64, t: f64, f: &SampledField) -> Result<Option<SampledField>> {
    use rustfft::num_complex::Complex;
    use rustfft::FftPlanner;
    if f.dim() != 1 || f.extension() != Extension::Periodic || f.spacing().is_none() {
        return Ok(None);
    }
    let vals = f.values();
    let n = vals.len() - 1;
    let period = 2.0 * f.half_width();
    let mut buf: Vec<Complex<f64>> = vals[..n].iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (m, c) in buf.iter_mut().enumerate() {
        let freq = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
        let k = 2.0 * std::f64::consts::PI * freq / period;
        *c *= (-kappa * k * k * t).exp() / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    out.push(out[0]);
    f.with_values(out).map(Some)
}

/// Offsets of the field nodes in each truncated scheme and the schemes themselves.
fn elliptic_schemes(e: &Elliptic1D, f: &SampledField) -> Result<Vec<(ThetaScheme, usize)>> {
    truncation_schemes(&e.domain_schedule, e.theta, e.time_step, f)
}

/// Schemes on the last two truncation domains, each paired with the node
/// offset of the field box inside it.
pub(crate) fn truncation_schemes(
    domain_schedule: &[f64],
    theta: f64,
    time_step: f64,
    f: &SampledField,
) -> Result<Vec<(ThetaScheme, usize)>> {
    let h = f.spacing().ok_or_else(|| {
        Error::Unsupported("θ-scheme evolution needs a uniform field grid".into())
    })?;
    if f.dim() != 1 {
        return Err(Error::Unsupported("θ-scheme evolution is one-dimensional".into()));
    }
    let lf = f.half_width();
    let schedule: Vec<f64> = domain_schedule.iter().rev().take(2).rev().copied().collect();
    if schedule.is_empty() {
        return Err(Error::InvalidModel("domain_schedule is empty".into()));
    }
    if schedule[0] < lf * (1.0 - 1e-12) {
        return Err(Error::InvalidModel(format!(
            "truncation {} is smaller than the field box {lf}",
            schedule[0]
        )));
    }
    schedule
        .iter()
        .map(|&l| {
            let offset = (l - lf) / h;
            if (offset - offset.round()).abs() > 1e-6 {
                return Err(Error::SpacingMismatch { spacing: h, width: 2.0 * l });
            }
            Ok((
                ThetaScheme::new(l, h, theta, time_step)?,
                offset.round() as usize,
            ))
        })
        .collect()
}

/// Evolves `f` from `s` to `t` on every scheme and returns the values of the
/// largest domain on the field box, after checking the truncation spread.
pub(crate) fn truncated_evolve(
    schemes: &[(ThetaScheme, usize)],
    coeffs: &dyn Coefficients,
    f: &SampledField,
    s: f64,
    t: f64,
    truncation_tol: f64,
) -> Result<Vec<f64>> {
    let n_f = f.values().len();
    let results = schemes
        .par_iter()
        .map(|(scheme, off)| {
            let mut u: Vec<f64> = (0..scheme.nodes()).map(|j| f.eval1(scheme.x(j))).collect();
            let last = u.len() - 1;
            u[0] = 0.0;
            u[last] = 0.0;
            scheme.evolve(&mut u, coeffs, s, t, true, None)?;
            Ok(u[*off..*off + n_f].to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    let last = results[results.len() - 1].clone();
    if results.len() > 1 {
        let diff = results[0]
            .iter()
            .zip(&last)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if diff > truncation_tol {
            return Err(Error::TruncationInsufficient {
                difference: diff,
                tolerance: truncation_tol,
            });
        }
    }
    Ok(last)
}

fn elliptic_apply(e: &Elliptic1D, f: &SampledField, times: &[f64]) -> Result<Vec<SampledField>> {
    let mut out = Vec::with_capacity(times.len());
    elliptic_sweep(e, f, times, &mut |_, g| {
        out.push(g.clone());
        Ok(())
    })?;
    Ok(out)
}

fn elliptic_sweep(
    e: &Elliptic1D,
    f: &SampledField,
    times: &[f64],
    visit: &mut dyn FnMut(usize, &SampledField) -> Result<()>,
) -> Result<()> {
    e.validate()?;
    let schemes = elliptic_schemes(e, f)?;
    let n_f = f.values().len();
    let mut states: Vec<(Vec<f64>, parabolic::Tridiag)> = schemes
        .iter()
        .map(|(s, _)| {
            let mut u: Vec<f64> = (0..s.nodes()).map(|j| f.eval1(s.x(j))).collect();
            let last = u.len() - 1;
            u[0] = 0.0;
            u[last] = 0.0;
            s.operator(e, 0.0).map(|op| (u, op))
        })
        .collect::<Result<_>>()?;
    let mut now = 0.0;
    for (k, &t) in times.iter().enumerate() {
        if t == 0.0 {
            visit(k, f)?;
            continue;
        }
        let first = now == 0.0;
        states
            .par_iter_mut()
            .zip(schemes.par_iter())
            .try_for_each(|((u, op), (scheme, _))| {
                scheme.evolve(u, e, now, t, first, Some(op))
            })?;
        now = t;
        let pick = |i: usize| -> Vec<f64> {
            let off = schemes[i].1;
            states[i].0[off..off + n_f].to_vec()
        };
        let last = pick(schemes.len() - 1);
        if schemes.len() > 1 {
            let prev = pick(0);
            let diff = prev
                .iter()
                .zip(&last)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            if diff > e.truncation_tol {
                return Err(Error::TruncationInsufficient {
                    difference: diff,
                    tolerance: e.truncation_tol,
                });
            }
        }
        visit(k, &f.with_values(last)?)?;
    }
    Ok(())
}

/// `p_w(T(s+t) f − T(t) T(s) f)`.
pub fn semigroup_law_residual(
    m: &SemigroupModel,
    s: f64,
    t: f64,
    f: &SampledField,
    w: CompactWindow,
    q: &QuadratureSpec,
) -> Result<f64> {
    let joint = m.apply(s + t, f, q)?;
    let split = m.apply(t, &m.apply(s, f, q)?, q)?;
    joint.distance(&split, w)
}

/// `max(0, ‖T f‖ − ‖f‖)`: how far an output exceeds the contraction bound.
pub fn contraction_excess(f: &SampledField, image: &SampledField) -> f64 {
    (image.sup_norm() - f.sup_norm()).max(0.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    /// `(t, p_w(T(t) f − f))` in the order of the time grid.
    pub gaps: Vec<(f64, f64)>,
    /// Least-squares slope of `log gap` against `log t`, when all gaps are positive.
    pub order: Option<f64>,
    pub pass: bool,
}

/// Gaps `p_w(T(t) f − f)` along a time grid decreasing to zero; passes when
/// the last gap is below `tol` and the gaps never grow by more than `tol`
/// plus a factor 1.5 while `t` shrinks.
pub fn orbit_continuity_check(
    m: &SemigroupModel,
    f: &SampledField,
    w: CompactWindow,
    t_grid: &[f64],
    q: &QuadratureSpec,
    tol: f64,
) -> Result<ContinuityReport> {
    if t_grid.is_empty() || t_grid.windows(2).any(|p| !(p[1] < p[0])) || t_grid[t_grid.len() - 1] <= 0.0 {
        return Err(Error::InvalidQuadrature(
            "t_grid must be positive and strictly decreasing".into(),
        ));
    }
    let gaps = t_grid
        .iter()
        .map(|&t| Ok((t, m.apply(t, f, q)?.distance(f, w)?)))
        .collect::<Result<Vec<_>>>()?;
    let monotone = gaps.windows(2).all(|p| p[1].1 <= 1.5 * p[0].1 + tol);
    let pass = monotone && gaps.last().is_some_and(|g| g.1 <= tol);
    let order = if gaps.len() >= 2 && gaps.iter().all(|g| g.1 > 0.0) {
        let pts: Vec<(f64, f64)> = gaps.iter().map(|&(t, g)| (t.ln(), g.ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    Ok(ContinuityReport { gaps, order, pass })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PositivityReport {
    pub holds: bool,
    pub min_on_window: f64,
}

/// Checks `min_w T(t) f ≥ −slack` for a nonnegative field.
pub fn positivity_check(
    m: &SemigroupModel,
    t: f64,
    f: &SampledField,
    w: CompactWindow,
    q: &QuadratureSpec,
    slack: f64,
) -> Result<PositivityReport> {
    if f.min_value() < 0.0 {
        return Err(Error::InvalidModel("positivity check needs a nonnegative field".into()));
    }
    let min_on_window = m.apply(t, f, q)?.min_on_window(w)?;
    Ok(PositivityReport {
        holds: min_on_window >= -slack,
        min_on_window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Interpolation;
    use approx::assert_abs_diff_eq;

    fn line(l: f64, h: f64) -> Arc<Grid> {
        Arc::new(Grid::uniform(1, l, h).unwrap())
    }

    fn field(l: f64, h: f64, g: impl Fn(f64) -> f64 + Sync) -> SampledField {
        SampledField::from_fn(line(l, h), Extension::ConstantExtend, |x| g(x[0])).unwrap()
    }

    #[test]
    fn ou_closed_form_example() {
        let m = SemigroupModel::ou1d(1.0, 1.0).unwrap();
        let f = field(20.0, 0.01, |x| x * x);
        let out = m.apply(0.5, &f, &QuadratureSpec::default()).unwrap();
        assert_abs_diff_eq!(out.eval1(2.0), 2.103_638_323_514_327, epsilon = 1e-8);
    }

    #[test]
    fn zero_time_is_identity_and_constants_are_fixed() {
        let q = QuadratureSpec::default();
        let f = field(20.0, 0.05, |x| x.sin());
        let one = field(20.0, 0.05, |_| 1.0);
        for m in [
            SemigroupModel::Translation,
            SemigroupModel::heat(1.0).unwrap(),
            SemigroupModel::ou1d(2.0, 0.5).unwrap(),
        ] {
            assert_eq!(m.apply(0.0, &f, &q).unwrap().values(), f.values());
            let c = m.apply(0.8, &one, &q).unwrap();
            assert!(c.values().iter().all(|v| (v - 1.0).abs() < 1e-13));
        }
    }

    #[test]
    fn translation_shifts_exactly() {
        let f = field(20.0, 0.5, |x| x).with_interpolation(Interpolation::Linear);
        let out = SemigroupModel::Translation
            .apply(1.5, &f, &QuadratureSpec::default())
            .unwrap();
        assert_abs_diff_eq!(out.eval1(2.0), 3.5, epsilon = 1e-12);
    }

    #[test]
    fn heat_spectral_matches_closed_form() {
        let period = 2.0 * std::f64::consts::PI;
        let g = Arc::new(Grid::uniform(1, std::f64::consts::PI, period / 64.0).unwrap());
        let f = SampledField::from_fn(g, Extension::Periodic, |x| x[0].cos()).unwrap();
        let out = SemigroupModel::heat(1.0)
            .unwrap()
            .apply(0.5, &f, &QuadratureSpec::default())
            .unwrap();
        assert_abs_diff_eq!(out.value_at_origin(), (-0.5f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn heat_semigroup_law() {
        let m = SemigroupModel::heat(1.0).unwrap();
        let f = field(20.0, 0.01, |x| x.cos());
        let q = QuadratureSpec::default();
        let r = semigroup_law_residual(&m, 0.5, 0.5, &f, CompactWindow::new(5.0), &q).unwrap();
        assert!(r <= 1e-4, "{r}");
        let out = m.apply(1.0, &f, &q).unwrap();
        assert_abs_diff_eq!(out.value_at_origin(), (-1.0f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn ou_nd_matches_product_of_1d() {
        let b = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let qm = DMatrix::identity(2, 2);
        let m = SemigroupModel::ou_nd(b, qm).unwrap();
        let g = Arc::new(Grid::uniform(2, 8.0, 0.1).unwrap());
        let f = SampledField::from_fn(g, Extension::ConstantExtend, |x| x[0] * x[0] + x[1] * x[1])
            .unwrap();
        let q = QuadratureSpec::default().with_gh_order(12);
        let out = m.apply(0.3, &f, &q).unwrap();
        // E|X_t|² = Σ e^{2 b_i t} x_i² + (q/|b_i|)(1 − e^{2 b_i t})
        let x = [1.0, -0.5];
        let exact = (-0.6f64).exp() * 1.0 + (1.0 - (-0.6f64).exp())
            + (-1.2f64).exp() * 0.25
            + 0.5 * (1.0 - (-1.2f64).exp());
        assert_abs_diff_eq!(out.eval(&x), exact, epsilon = 1e-6);
    }

    #[test]
    fn generator_examples() {
        let ou = SemigroupModel::ou1d(1.0, 1.0).unwrap();
        let f = field(20.0, 0.01, |x| x * x);
        let af = ou.generator_apply(&f).unwrap();
        assert_abs_diff_eq!(af.eval1(1.0), 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(af.eval1(3.0), 2.0 - 18.0, epsilon = 1e-7);
        let s = field(20.0, 0.01, |x| x.sin());
        let ds = SemigroupModel::Translation.generator_apply(&s).unwrap();
        assert_abs_diff_eq!(ds.eval1(0.5), 0.5f64.cos(), epsilon = 1e-4);
        let c = field(20.0, 0.01, |_| 3.0);
        assert!(ou.generator_apply(&c).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn generator_rejects_rough_fields() {
        let f = field(20.0, 0.5, |x| (40.0 * x).sin());
        assert!(matches!(
            SemigroupModel::Translation.generator_apply(&f),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn elliptic_matches_ou_and_checks_truncation() {
        let e = Elliptic1D::new(
            Expr::parse("1").unwrap(),
            Expr::parse("-x").unwrap(),
            vec![12.0, 16.0],
        )
        .unwrap()
        .with_truncation_tol(1e-4);
        let m = SemigroupModel::Elliptic1d(e);
        let f = field(8.0, 0.02, |x| (-x * x).exp());
        let q = QuadratureSpec::default();
        let pde = m.apply(0.5, &f, &q).unwrap();
        let exact = SemigroupModel::ou1d(1.0, 1.0).unwrap().apply(0.5, &f, &q).unwrap();
        let d = pde.distance(&exact, CompactWindow::new(5.0)).unwrap();
        assert!(d < 1e-4, "{d}");
        let tight = Elliptic1D::new(
            Expr::parse("1").unwrap(),
            Expr::parse("0").unwrap(),
            vec![8.0, 9.0],
        )
        .unwrap()
        .with_truncation_tol(1e-12);
        let one = field(8.0, 0.02, |_| 1.0);
        assert!(matches!(
            SemigroupModel::Elliptic1d(tight).apply(4.0, &one, &q),
            Err(Error::TruncationInsufficient { .. })
        ));
    }

    #[test]
    fn positivity_and_continuity() {
        let q = QuadratureSpec::default();
        let hat = field(20.0, 0.01, |x| (1.0 - x.abs()).max(0.0));
        let heat = SemigroupModel::heat(1.0).unwrap();
        let p = positivity_check(&heat, 1.0, &hat, CompactWindow::new(5.0), &q, 1e-12).unwrap();
        assert!(p.holds && p.min_on_window > 0.0);
        let ou = SemigroupModel::ou1d(1.0, 1.0).unwrap();
        let f = field(20.0, 0.01, |x| x * x);
        let rep = orbit_continuity_check(
            &ou,
            &f,
            CompactWindow::new(5.0),
            &[0.1, 0.01, 0.001],
            &q,
            0.1,
        )
        .unwrap();
        assert!(rep.pass);
        assert!((rep.order.unwrap() - 1.0).abs() < 0.1);
    }
}
