//! Dilated-kernel spans in `L¹(0, ∞)`, their Mellin symbols, and the transfer
//! from Laplace (Abel) averages to Cesàro averages of a semigroup orbit.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{CompactWindow, SampledField};
use crate::means::{abel_means, cesaro_means};
use crate::models::SemigroupModel;
use crate::quadrature::QuadratureSpec;
use crate::report::csv_table;

/// Largest accepted condition number of the weighted fit matrix.
pub const CONDITION_CAP: f64 = 1e13;
/// Reweighted least-squares passes of the L¹ fit.
pub const IRLS_ITERATIONS: usize = 30;
const IRLS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    /// `e^{−t}`.
    ExpDecay,
    /// `χ_[0,1]`, taking the value 1/2 at the jump.
    Indicator,
    /// An expression in `x`, read as the time variable.
    Custom(Expr),
}

/// A kernel on `(0, ∞)` sampled on a log-uniform grid over `[t_min, t_max]`.
///
/// The grid is `t_k = e^{k h}` with `h = ln(t_max/t_min)/(points − 1)`, shifted
/// so that `t = 1` is a node.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Self {
        Self {
            kind,
            t_min: 1e-8,
            t_max: 60.0,
            points: 20001,
        }
    }

    pub fn exp_decay() -> Self {
        Self::new(KernelKind::ExpDecay)
    }

    pub fn indicator() -> Self {
        Self::new(KernelKind::Indicator)
    }

    pub fn custom(source: &str) -> Result<Self> {
        Ok(Self::new(KernelKind::Custom(Expr::parse(source)?)))
    }

    pub fn with_range(mut self, t_min: f64, t_max: f64) -> Self {
        self.t_min = t_min;
        self.t_max = t_max;
        self
    }

    pub fn with_points(mut self, points: usize) -> Self {
        self.points = points;
        self
    }

    pub fn name(&self) -> String {
        match &self.kind {
            KernelKind::ExpDecay => "exp(-t)".into(),
            KernelKind::Indicator => "indicator[0,1]".into(),
            KernelKind::Custom(e) => e.source().to_string(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            KernelKind::ExpDecay => (-t).exp(),
            KernelKind::Indicator => {
                if (t - 1.0).abs() <= 1e-12 {
                    0.5
                } else if (0.0..1.0).contains(&t) {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::Custom(e) => e.eval_x(t),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_min < self.t_max && self.t_max.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "kernel range [{}, {}] must satisfy 0 < t_min < t_max",
                self.t_min, self.t_max
            )));
        }
        if self.points < 3 {
            return Err(Error::InvalidModel("kernel grid needs at least 3 points".into()));
        }
        Ok(())
    }

    /// Log step and first log-node.
    fn log_grid(&self) -> (f64, i64, i64) {
        let h = (self.t_max / self.t_min).ln() / (self.points - 1) as f64;
        let k0 = (self.t_min.ln() / h).floor() as i64;
        let k1 = (self.t_max.ln() / h).ceil() as i64;
        (h, k0, k1)
    }

    pub fn nodes(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let (h, k0, k1) = self.log_grid();
        Ok((k0..=k1).map(|k| (k as f64 * h).exp()).collect())
    }

    /// Values on [`Self::nodes`]; fails on non-finite samples.
    pub fn samples(&self) -> Result<Vec<f64>> {
        let t = self.nodes()?;
        let v: Vec<f64> = t.iter().map(|&t| self.eval(t)).collect();
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(v)
    }

    pub fn l1_norm(&self) -> Result<f64> {
        let t = self.nodes()?;
        let v = self.samples()?;
        Ok(trapezoid_weights(&t)
            .iter()
            .zip(&v)
            .map(|(w, x)| w * x.abs())
            .sum())
    }
}

fn trapezoid_weights(t: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; t.len()];
    for i in 0..t.len() - 1 {
        let d = 0.5 * (t[i + 1] - t[i]);
        w[i] += d;
        w[i + 1] += d;
    }
    w
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MellinRow {
    pub xi: f64,
    pub modulus: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MellinTable {
    pub kernel: String,
    pub rows: Vec<MellinRow>,
    pub all_positive: bool,
}

impl MellinTable {
    pub fn to_csv(&self) -> String {
        csv_table(&["xi", "modulus"], self.rows.iter().map(|r| vec![r.xi, r.modulus]))
    }
}

/// `|∫_0^∞ K(t) t^{−iξ} dt|` for each `ξ`, computed as the trapezoid rule in
/// `y = ln t` of `K(e^y) e^{y} e^{−iξy}`.
pub fn mellin_nonvanishing(k: &KernelSpec, xi_grid: &[f64]) -> Result<MellinTable> {
    let t = k.nodes()?;
    let v = k.samples()?;
    let (h, _, _) = k.log_grid();
    let rows: Vec<MellinRow> = xi_grid
        .par_iter()
        .map(|&xi| {
            let (mut re, mut im) = (0.0, 0.0);
            let last = t.len() - 1;
            for (j, (&tj, &kj)) in t.iter().zip(&v).enumerate() {
                let w = if j == 0 || j == last { 0.5 } else { 1.0 };
                let g = w * kj * tj;
                let phase = xi * tj.ln();
                re += g * phase.cos();
                im -= g * phase.sin();
            }
            MellinRow {
                xi,
                modulus: h * re.hypot(im),
            }
        })
        .collect();
    let all_positive = rows.iter().all(|r| r.modulus > 0.0);
    Ok(MellinTable {
        kernel: k.name(),
        rows,
        all_positive,
    })
}

/// Interval from which dilations are drawn log-uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DilationRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for DilationRange {
    fn default() -> Self {
        Self {
            lo: 1.0 / 16.0,
            hi: 64.0,
        }
    }
}

impl DilationRange {
    /// `n` log-uniform points; a single dilation sits at the geometric mean.
    pub fn dilations(&self, n: usize) -> Vec<f64> {
        let (a, b) = (self.lo.ln(), self.hi.ln());
        if n == 1 {
            return vec![(0.5 * (a + b)).exp()];
        }
        (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelApproxResult {
    pub kernel: String,
    pub target: String,
    pub dilations: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// Trapezoid `∫ |h − Σ γ_i K(α_i ·)|` on the sampling grid.
    pub l1_error: f64,
    pub condition: f64,
}

/// Fits `target ≈ Σ γ_i K(α_i t)` by iteratively reweighted least squares,
/// which drives the weighted L² objective toward the L¹ one.
pub fn dilated_span_approx(
    k: &KernelSpec,
    target: &KernelSpec,
    n: usize,
    range: DilationRange,
) -> Result<KernelApproxResult> {
    if n == 0 {
        return Err(Error::InvalidModel("at least one dilation is required".into()));
    }
    if !(range.lo > 0.0 && range.lo <= range.hi && range.hi.is_finite()) {
        return Err(Error::InvalidModel(format!(
            "dilation range [{}, {}] must satisfy 0 < lo <= hi",
            range.lo, range.hi
        )));
    }
    let t = target.nodes()?;
    let h = target.samples()?;
    let w = trapezoid_weights(&t);
    let alphas = range.dilations(n);
    let a = DMatrix::from_fn(t.len(), n, |j, i| k.eval(alphas[i] * t[j]));
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(0));
    }

    let solve = |weights: &[f64]| -> Result<(DVector<f64>, f64)> {
        let mut m = a.clone();
        let mut rhs = DVector::zeros(t.len());
        for j in 0..t.len() {
            let s = weights[j].sqrt();
            m.row_mut(j).scale_mut(s);
            rhs[j] = s * h[j];
        }
        let svd = m.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        let g = svd
            .solve(&rhs, smax * 1e-13)
            .map_err(|e| Error::InvalidModel(e.to_string()))?;
        Ok((g, cond))
    };
    let l1 = |g: &DVector<f64>| -> Vec<f64> {
        let fit = &a * g;
        h.iter().zip(fit.iter()).map(|(y, f)| (y - f).abs()).collect()
    };

    let (mut g, condition) = solve(&w)?;
    if condition > CONDITION_CAP {
        return Err(Error::IllConditioned(condition));
    }
    let mut r = l1(&g);
    let mut best = (weighted_sum(&w, &r), g.clone());
    for _ in 0..IRLS_ITERATIONS {
        let ww: Vec<f64> = w.iter().zip(&r).map(|(w, r)| w / r.max(IRLS_FLOOR)).collect();
        g = solve(&ww)?.0;
        r = l1(&g);
        let e = weighted_sum(&w, &r);
        if e < best.0 {
            best = (e, g.clone());
        }
    }
    Ok(KernelApproxResult {
        kernel: k.name(),
        target: target.name(),
        dilations: alphas,
        coefficients: best.1.iter().copied().collect(),
        l1_error: best.0,
        condition,
    })
}

fn weighted_sum(w: &[f64], r: &[f64]) -> f64 {
    w.iter().zip(r).map(|(w, r)| w * r).sum()
}

/// Fits for each `n` of a schedule in parallel and flags whether the error
/// never increases along it.
pub fn dilated_span_schedule(
    k: &KernelSpec,
    target: &KernelSpec,
    schedule: &[usize],
    range: DilationRange,
) -> Result<(Vec<KernelApproxResult>, bool)> {
    let results = schedule
        .par_iter()
        .map(|&n| dilated_span_approx(k, target, n, range))
        .collect::<Result<Vec<_>>>()?;
    let monotone = results
        .windows(2)
        .all(|p| p[1].l1_error <= p[0].l1_error * (1.0 + 1e-9));
    Ok((results, monotone))
}

/// A family `λ ↦ V(λ)` is treated as Cauchy when its spread over the trailing
/// log-window is at most this fraction of the spread over the leading one.
pub const CAUCHY_CONTRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransferRow {
    pub lambda: f64,
    /// `p_w(λR(λ)f − C(1/λ)f)`.
    pub residual: f64,
    pub abel_value_at_origin: f64,
    pub cesaro_value_at_origin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferVerdict {
    /// Both families settle and their distance shrinks.
    Consistent,
    /// Neither family settles.
    JointlyDivergent,
    /// Exactly one family settles, or both settle apart.
    Inconsistent,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FamilySpread {
    /// Largest pairwise window distance on the leading log-window of `λ`.
    pub head: f64,
    /// The same on the trailing log-window.
    pub tail: f64,
    pub cauchy: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferReport {
    pub rows: Vec<TransferRow>,
    pub abel: FamilySpread,
    pub cesaro: FamilySpread,
    pub verdict: TransferVerdict,
    pub pass: bool,
}

impl TransferReport {
    pub fn to_csv(&self) -> String {
        csv_table(
            &["lambda", "residual", "abel_value_at_origin", "cesaro_value_at_origin"],
            self.rows.iter().map(|r| {
                vec![r.lambda, r.residual, r.abel_value_at_origin, r.cesaro_value_at_origin]
            }),
        )
    }
}

fn spread(family: &[SampledField], idx: &[usize], w: CompactWindow) -> Result<f64> {
    let mut s: f64 = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            s = s.max(family[i].distance(&family[j], w)?);
        }
    }
    Ok(s)
}

fn family_spread(
    family: &[SampledField],
    head: &[usize],
    tail: &[usize],
    w: CompactWindow,
    scale: f64,
) -> Result<FamilySpread> {
    let head = spread(family, head, w)?;
    let tail = spread(family, tail, w)?;
    let cauchy = tail <= CAUCHY_CONTRACTION * head || tail <= 1e-12 * scale;
    Ok(FamilySpread { head, tail, cauchy })
}

/// Compares `λR(λ)f` with `C(1/λ)f` along a decreasing `λ` grid.
///
/// Leading and trailing windows span `min(1, span/3)` decades of `λ`.
pub fn abel_to_cesaro_transfer_check(
    m: &SemigroupModel,
    f: &SampledField,
    lambda_grid: &[f64],
    q: &QuadratureSpec,
    w: CompactWindow,
) -> Result<TransferReport> {
    if lambda_grid.len() < 3 {
        return Err(Error::InvalidModel("transfer check needs at least 3 values of λ".into()));
    }
    if lambda_grid.windows(2).any(|p| !(p[1] < p[0])) || !(lambda_grid[lambda_grid.len() - 1] > 0.0) {
        return Err(Error::InvalidModel("λ grid must be positive and strictly decreasing".into()));
    }
    let abel = abel_means(m, f, lambda_grid, q)?;
    let radii: Vec<f64> = lambda_grid.iter().map(|l| 1.0 / l).collect();
    let cesaro = cesaro_means(m, f, &radii, q)?;

    let rows = lambda_grid
        .iter()
        .zip(abel.iter().zip(&cesaro))
        .map(|(&lambda, (a, c))| {
            Ok(TransferRow {
                lambda,
                residual: a.distance(c, w)?,
                abel_value_at_origin: a.value_at_origin(),
                cesaro_value_at_origin: c.value_at_origin(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let logs: Vec<f64> = lambda_grid.iter().map(|l| l.log10()).collect();
    let width = (logs[0] - logs[logs.len() - 1]).min(3.0) / 3.0;
    let head: Vec<usize> = (0..logs.len()).filter(|&i| logs[i] >= logs[0] - width).collect();
    let tail: Vec<usize> = (0..logs.len())
        .filter(|&i| logs[i] <= logs[logs.len() - 1] + width)
        .collect();
    let scale = 1.0 + f.seminorm(w)?;
    let abel_spread = family_spread(&abel, &head, &tail, w, scale)?;
    let cesaro_spread = family_spread(&cesaro, &head, &tail, w, scale)?;

    let first = rows[0].residual;
    let last = rows[rows.len() - 1].residual;
    let verdict = match (abel_spread.cauchy, cesaro_spread.cauchy) {
        (true, true) if last <= first || last <= 1e-12 * scale => TransferVerdict::Consistent,
        (false, false) => TransferVerdict::JointlyDivergent,
        _ => TransferVerdict::Inconsistent,
    };
    Ok(TransferReport {
        rows,
        abel: abel_spread,
        cesaro: cesaro_spread,
        pass: verdict != TransferVerdict::Inconsistent,
        verdict,
    })
}
