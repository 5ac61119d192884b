//! Time-periodic evolution operators `P(t, s)` for
//! `D_t u = q(t,x) u_xx + b(t,x) u_x` with their evolution systems of measures.
//! The Howland semigroup lifts them to an autonomous semigroup on `𝕋 × ℝ`.
//!
//! `P(t, s) f` is the value at time `t` of the solution started from `f` at
//! time `s ≤ t`. An evolution system `{μ_s}` satisfies
//! `∫ P(t,s) f dμ_t = ∫ f dμ_s`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{CompactWindow, Extension, Grid, SampledField};
use crate::models::{truncated_evolve, truncation_schemes, Coefficients, ThetaScheme};
use crate::quadrature::{NormalRule, QuadratureSpec, TimeMesh};
use crate::report::csv_table;

/// Default number of `s`-nodes per period.
pub const S_NODES: usize = 64;
/// Allowed `|q(s+T,x) − q(s,x)|` (and the same for `b`) on the sample grid.
pub const PERIODICITY_TOL: f64 = 1e-12;
/// L¹ change between consecutive periods below which a pullback has settled.
pub const STABILIZATION_TOL: f64 = 1e-9;
/// Largest mass fraction a pullback may lose through the boundary per period.
pub const LEAK_TOL: f64 = 1e-6;
const MAX_PULLBACK_PERIODS: usize = 200;

/// Forcing of the closed-form test model
/// `dX = (−X + c sin(ωs)) ds + √2 dW`, `ω = 2π/T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodicDrift {
    pub c: f64,
    pub omega: f64,
}

impl PeriodicDrift {
    /// `M(s) = c ∫_0^∞ e^{−u} sin(ω(s+u)) du = c (sin ωs + ω cos ωs)/(1+ω²)`,
    /// the mean of `μ_s`.
    pub fn mean(&self, s: f64) -> f64 {
        let w = self.omega;
        self.c * ((w * s).sin() + w * (w * s).cos()) / (1.0 + w * w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionModel {
    pub period: f64,
    pub q: Expr,
    pub b: Expr,
    /// `Some` for the test model, which then uses its Gaussian closed form.
    pub closed_form: Option<PeriodicDrift>,
    pub domain_schedule: Vec<f64>,
    pub truncation_tol: f64,
    pub theta: f64,
    pub time_step: f64,
    /// Grid spacing of the pullback densities of stepped models.
    pub measure_spacing: f64,
    pub s_nodes: usize,
}

impl EvolutionModel {
    /// The periodic-drift OU test model with period `period`.
    pub fn test_model(c: f64, period: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite() && c.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "test model needs a positive period and finite c (T = {period}, c = {c})"
            )));
        }
        let omega = 2.0 * PI / period;
        let b = Expr::parse(&format!("-x + {c:e} * sin({omega:e} * s)"))?;
        let e = Self {
            period,
            q: Expr::constant(1.0),
            b,
            closed_form: Some(PeriodicDrift { c, omega }),
            domain_schedule: vec![12.0, 16.0],
            truncation_tol: 1e-6,
            theta: 0.5,
            time_step: 1e-2,
            measure_spacing: 0.05,
            s_nodes: S_NODES,
        };
        e.validate()?;
        Ok(e)
    }

    /// A general model advanced by the θ-scheme.
    pub fn stepped(period: f64, q: Expr, b: Expr, domain_schedule: Vec<f64>) -> Result<Self> {
        let e = Self {
            period,
            q,
            b,
            closed_form: None,
            domain_schedule,
            truncation_tol: 1e-6,
            theta: 0.5,
            time_step: 1e-2,
            measure_spacing: 0.05,
            s_nodes: S_NODES,
        };
        e.validate()?;
        Ok(e)
    }

    /// The same coefficients with the closed form switched off.
    pub fn as_stepped(&self) -> Self {
        Self {
            closed_form: None,
            ..self.clone()
        }
    }

    pub fn with_time_step(mut self, dt: f64) -> Self {
        self.time_step = dt;
        self
    }

    pub fn with_truncation_tol(mut self, tol: f64) -> Self {
        self.truncation_tol = tol;
        self
    }

    pub fn with_s_nodes(mut self, n: usize) -> Self {
        self.s_nodes = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidModel(format!("period must be positive, got {}", self.period)));
        }
        if self.domain_schedule.is_empty()
            || self.domain_schedule[0] <= 0.0
            || self.domain_schedule.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::InvalidModel(
                "domain_schedule must be positive and strictly increasing".into(),
            ));
        }
        if !(self.time_step > 0.0) || !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidModel(format!(
                "time_step must be positive and theta in [0, 1] (dt = {}, theta = {})",
                self.time_step, self.theta
            )));
        }
        if self.s_nodes < 4 {
            return Err(Error::InvalidModel("at least 4 s-nodes per period are required".into()));
        }
        let l = self.domain_schedule[self.domain_schedule.len() - 1];
        for i in 0..=40 {
            let x = -l + 2.0 * l * i as f64 / 40.0;
            for k in 0..16 {
                let s = self.period * k as f64 / 16.0;
                let dq = (self.q.eval(x, s + self.period) - self.q.eval(x, s)).abs();
                let db = (self.b.eval(x, s + self.period) - self.b.eval(x, s)).abs();
                if dq.max(db) > PERIODICITY_TOL || !dq.is_finite() || !db.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "coefficients are not {}-periodic at (s, x) = ({s}, {x}): deviation {}",
                        self.period,
                        dq.max(db)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn s_grid(&self) -> Vec<f64> {
        (0..self.s_nodes)
            .map(|i| self.period * i as f64 / self.s_nodes as f64)
            .collect()
    }
}

impl Coefficients for EvolutionModel {
    fn q(&self, s: f64, x: f64) -> f64 {
        self.q.eval(x, s)
    }
    fn b(&self, s: f64, x: f64) -> f64 {
        self.b.eval(x, s)
    }
    fn time_dependent(&self) -> bool {
        true
    }
}

fn nodewise_1d(f: &SampledField, g: impl Fn(f64) -> f64 + Sync) -> Result<SampledField> {
    let values = f.grid().axis(0).coords().par_iter().map(|&x| g(x)).collect();
    f.with_values(values)
}

/// `P(t, s) f` on the grid of `f`.
pub fn evolution_apply(
    e: &EvolutionModel,
    t: f64,
    s: f64,
    f: &SampledField,
    q: &QuadratureSpec,
) -> Result<SampledField> {
    if !(s <= t) || !t.is_finite() || !s.is_finite() {
        return Err(Error::InvalidModel(format!("evolution needs s ≤ t, got s = {s}, t = {t}")));
    }
    if f.dim() != 1 {
        return Err(Error::Unsupported("periodic evolution is one-dimensional".into()));
    }
    if t == s {
        return Ok(f.clone());
    }
    match e.closed_form {
        Some(drift) => {
            let decay = (-(t - s)).exp();
            let sd = (-(-2.0 * (t - s)).exp_m1()).sqrt();
            let (mt, ms) = (drift.mean(t), drift.mean(s));
            let rule = NormalRule::get(q.gh_order);
            nodewise_1d(f, |x| {
                let c = decay * (x - mt) + ms;
                rule.expect(|z| f.eval1(c + sd * z))
            })
        }
        None => {
            let schemes = truncation_schemes(&e.domain_schedule, e.theta, e.time_step, f)?;
            let values = truncated_evolve(&schemes, e, f, s, t, e.truncation_tol)?;
            f.with_values(values)
        }
    }
}

/// `p_w(P(t, r) P(r, s) f − P(t, s) f)`.
pub fn cocycle_residual(
    e: &EvolutionModel,
    (s, r, t): (f64, f64, f64),
    f: &SampledField,
    q: &QuadratureSpec,
    w: CompactWindow,
) -> Result<f64> {
    let split = evolution_apply(e, t, r, &evolution_apply(e, r, s, f, q)?, q)?;
    split.distance(&evolution_apply(e, t, s, f, q)?, w)
}

/// `p_w(P(t+T, s+T) f − P(t, s) f)`.
pub fn periodicity_residual(
    e: &EvolutionModel,
    s: f64,
    t: f64,
    f: &SampledField,
    q: &QuadratureSpec,
    w: CompactWindow,
) -> Result<f64> {
    let shifted = evolution_apply(e, t + e.period, s + e.period, f, q)?;
    shifted.distance(&evolution_apply(e, t, s, f, q)?, w)
}

/// One member `μ_s` of an evolution system.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SliceMeasure {
    Gaussian { mean: f64, variance: f64 },
    /// Point masses on a uniform grid.
    Discrete { x: Vec<f64>, mass: Vec<f64> },
}

impl SliceMeasure {
    pub fn expect(&self, g: impl Fn(f64) -> f64, gh_order: usize) -> f64 {
        match self {
            SliceMeasure::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                NormalRule::get(gh_order).expect(|z| g(mean + sd * z))
            }
            SliceMeasure::Discrete { x, mass } => x.iter().zip(mass).map(|(x, m)| m * g(*x)).sum(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            SliceMeasure::Gaussian { .. } => 1.0,
            SliceMeasure::Discrete { mass, .. } => mass.iter().sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            SliceMeasure::Gaussian { mean, .. } => *mean,
            SliceMeasure::Discrete { .. } => self.expect(|x| x, 2),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            SliceMeasure::Gaussian { variance, .. } => *variance,
            SliceMeasure::Discrete { .. } => {
                let m = self.mean();
                self.expect(|x| (x - m) * (x - m), 2)
            }
        }
    }
}

/// `s ↦ μ_s` sampled at the `s`-nodes of one period.
#[derive(Debug, Clone, Serialize)]
pub struct EvolutionSystem {
    pub period: f64,
    pub s: Vec<f64>,
    pub slices: Vec<SliceMeasure>,
    #[serde(skip)]
    closed_form: Option<PeriodicDrift>,
    /// Periods of pullback used for stepped models.
    pub pullback_periods: usize,
}

impl EvolutionSystem {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// `∫ g dμ_s` at any `s`; between nodes of a stepped system the nodal
    /// expectations are interpolated linearly.
    pub fn expect_at(&self, s: f64, g: impl Fn(f64) -> f64, gh_order: usize) -> f64 {
        if let Some(d) = self.closed_form {
            return SliceMeasure::Gaussian {
                mean: d.mean(s),
                variance: 1.0,
            }
            .expect(g, gh_order);
        }
        let n = self.len();
        let u = s.rem_euclid(self.period) / self.period * n as f64;
        let i = (u.floor() as usize).min(n - 1);
        let frac = u - i as f64;
        let a = self.slices[i].expect(&g, gh_order);
        if frac < 1e-12 {
            return a;
        }
        let b = self.slices[(i + 1) % n].expect(&g, gh_order);
        a + frac * (b - a)
    }

    pub fn to_csv(&self) -> String {
        csv_table(
            &["s", "mean", "variance"],
            self.s
                .iter()
                .zip(&self.slices)
                .map(|(&s, m)| vec![s, m.mean(), m.variance()]),
        )
    }
}

/// The periodic evolution system of `e`: closed-form Gaussians for the test
/// model, otherwise the normalized adjoint pullback of a Gaussian bump over
/// whole periods until it stops changing.
pub fn evolution_measures(e: &EvolutionModel) -> Result<EvolutionSystem> {
    e.validate()?;
    let s_grid = e.s_grid();
    if let Some(d) = e.closed_form {
        return Ok(EvolutionSystem {
            period: e.period,
            slices: s_grid
                .iter()
                .map(|&s| SliceMeasure::Gaussian {
                    mean: d.mean(s),
                    variance: 1.0,
                })
                .collect(),
            s: s_grid,
            closed_form: Some(d),
            pullback_periods: 0,
        });
    }
    let l = e.domain_schedule[e.domain_schedule.len() - 1];
    let scheme = ThetaScheme::new(l, e.measure_spacing, e.theta, e.time_step)?;
    let n = e.s_nodes;
    let len = e.period / n as f64;
    let steps = (len / e.time_step - 1e-9).ceil().max(1.0) as usize;
    let dt = len / steps as f64;
    // operators of every sub-step in one period, in forward time order
    let ops = (0..n * steps)
        .into_par_iter()
        .map(|k| scheme.operator(e, (k as f64 + 0.5) * dt))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = (0..scheme.nodes()).map(|j| scheme.x(j)).collect();
    let mut mass: Vec<f64> = xs.iter().map(|x| (-0.5 * x * x).exp()).collect();
    let last = mass.len() - 1;
    mass[0] = 0.0;
    mass[last] = 0.0;
    normalize(&mut mass);

    let mut slices = vec![Vec::new(); n];
    for period in 1..=MAX_PULLBACK_PERIODS {
        let start = mass.clone();
        for i in (0..n).rev() {
            for k in (0..steps).rev() {
                scheme.step_transpose(&mut mass, &ops[i * steps + k], dt, e.theta);
            }
            slices[i] = mass.clone();
        }
        let leak = 1.0 - mass.iter().sum::<f64>();
        if leak > LEAK_TOL {
            return Err(Error::NoStabilization { change: leak });
        }
        normalize(&mut mass);
        let change: f64 = mass.iter().zip(&start).map(|(a, b)| (a - b).abs()).sum();
        if change < STABILIZATION_TOL {
            return Ok(EvolutionSystem {
                period: e.period,
                s: s_grid,
                slices: slices
                    .into_iter()
                    .map(|mut m| {
                        normalize(&mut m);
                        SliceMeasure::Discrete { x: xs.clone(), mass: m }
                    })
                    .collect(),
                closed_form: None,
                pullback_periods: period,
            });
        }
        if period == MAX_PULLBACK_PERIODS {
            return Err(Error::NoStabilization { change });
        }
    }
    unreachable!("the pullback loop returns")
}

fn normalize(m: &mut [f64]) {
    let total: f64 = m.iter().sum();
    if total > 0.0 {
        m.iter_mut().for_each(|v| *v /= total);
    }
}

/// `|∫ P(t,s) f dμ_t − ∫ f dμ_s|`.
pub fn evolution_invariance_residual(
    e: &EvolutionModel,
    sys: &EvolutionSystem,
    f: &SampledField,
    s: f64,
    t: f64,
    q: &QuadratureSpec,
) -> Result<f64> {
    let image = evolution_apply(e, t, s, f, q)?;
    let lhs = sys.expect_at(t, |x| image.eval1(x), q.gh_order);
    let rhs = sys.expect_at(s, |x| f.eval1(x), q.gh_order);
    Ok((lhs - rhs).abs())
}

/// A function on `𝕋 × ℝ` sampled at the uniform `s`-nodes of one period.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    pub period: f64,
    slices: Vec<SampledField>,
}

impl SpaceTimeField {
    pub fn new(period: f64, slices: Vec<SampledField>) -> Result<Self> {
        if !(period > 0.0) {
            return Err(Error::NonPositiveInterval(period));
        }
        if slices.len() < 4 {
            return Err(Error::InvalidModel("a space-time field needs at least 4 slices".into()));
        }
        if slices.iter().any(|f| !f.is_compatible(&slices[0])) {
            return Err(Error::GridMismatch("space-time slices must share one grid".into()));
        }
        Ok(Self { period, slices })
    }

    pub fn from_fn(
        period: f64,
        s_nodes: usize,
        grid: Arc<Grid>,
        extension: Extension,
        g: impl Fn(f64, f64) -> f64 + Sync,
    ) -> Result<Self> {
        let slices = (0..s_nodes)
            .map(|i| {
                let s = period * i as f64 / s_nodes as f64;
                SampledField::from_fn(grid.clone(), extension, |x| g(s, x[0]))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(period, slices)
    }

    /// `F(s, x) = f(x)` for every `s`.
    pub fn stationary(period: f64, s_nodes: usize, f: &SampledField) -> Result<Self> {
        Self::new(period, vec![f.clone(); s_nodes])
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn s(&self, i: usize) -> f64 {
        self.period * i as f64 / self.len() as f64
    }

    pub fn slice(&self, i: usize) -> &SampledField {
        &self.slices[i]
    }

    pub fn slices(&self) -> &[SampledField] {
        &self.slices
    }

    /// `F(s, ·)` at any `s`, by periodic four-point Lagrange interpolation
    /// between slices.
    pub fn slice_at(&self, s: f64) -> Result<SampledField> {
        let n = self.len();
        let u = s.rem_euclid(self.period) / self.period * n as f64;
        let i0 = u.floor();
        let frac = u - i0;
        let i = i0 as usize % n;
        if frac < 1e-9 {
            return Ok(self.slices[i].clone());
        }
        if frac > 1.0 - 1e-9 {
            return Ok(self.slices[(i + 1) % n].clone());
        }
        let w = [
            -frac * (frac - 1.0) * (frac - 2.0) / 6.0,
            (frac + 1.0) * (frac - 1.0) * (frac - 2.0) / 2.0,
            -(frac + 1.0) * frac * (frac - 2.0) / 2.0,
            (frac + 1.0) * frac * (frac - 1.0) / 6.0,
        ];
        let idx = [(i + n - 1) % n, i, (i + 1) % n, (i + 2) % n];
        let len = self.slices[0].values().len();
        let values = (0..len)
            .map(|j| (0..4).map(|k| w[k] * self.slices[idx[k]].values()[j]).sum())
            .collect();
        self.slices[0].with_values(values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.slices.iter().fold(0.0, |m, f| m.max(f.sup_norm()))
    }

    /// Sup over the `s`-nodes of the window seminorm of the difference.
    pub fn distance(&self, other: &SpaceTimeField, w: CompactWindow) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::GridMismatch("space-time fields differ in s-nodes".into()));
        }
        self.slices
            .iter()
            .zip(&other.slices)
            .try_fold(0.0_f64, |m, (a, b)| Ok(m.max(a.distance(b, w)?)))
    }

    /// Largest minus smallest nodal value over all slices.
    pub fn oscillation(&self) -> f64 {
        let (lo, hi) = self.slices.iter().flat_map(|f| f.values()).fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), &v| (lo.min(v), hi.max(v)),
        );
        hi - lo
    }
}

/// `(𝒯(t) F)(s, x) = (P(s, s−t) F(s−t, ·))(x)`.
pub fn howland_apply(
    e: &EvolutionModel,
    t: f64,
    field: &SpaceTimeField,
    q: &QuadratureSpec,
) -> Result<SpaceTimeField> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidModel(format!("time must be nonnegative, got {t}")));
    }
    if (field.period - e.period).abs() > 1e-12 * e.period {
        return Err(Error::GridMismatch(format!(
            "space-time field period {} differs from model period {}",
            field.period, e.period
        )));
    }
    if t == 0.0 {
        return Ok(field.clone());
    }
    let slices = (0..field.len())
        .into_par_iter()
        .map(|i| {
            let s = field.s(i);
            let g = field.slice_at(s - t)?;
            evolution_apply(e, s, s - t, &g, q)
        })
        .collect::<Result<Vec<_>>>()?;
    SpaceTimeField::new(field.period, slices)
}

/// `sup_s p_w(𝒯(t₁+t₂) F − 𝒯(t₁) 𝒯(t₂) F)`.
pub fn howland_law_residual(
    e: &EvolutionModel,
    t1: f64,
    t2: f64,
    field: &SpaceTimeField,
    q: &QuadratureSpec,
    w: CompactWindow,
) -> Result<f64> {
    let joint = howland_apply(e, t1 + t2, field, q)?;
    let split = howland_apply(e, t1, &howland_apply(e, t2, field, q)?, q)?;
    joint.distance(&split, w)
}

/// `μ(A × B) = (1/T) ∫_A μ_s(B) ds` on `𝕋 × ℝ`.
#[derive(Debug, Clone)]
pub struct ProductMeasure {
    pub system: EvolutionSystem,
}

pub fn product_measure(sys: &EvolutionSystem) -> ProductMeasure {
    ProductMeasure { system: sys.clone() }
}

impl ProductMeasure {
    /// Weights of the `s`-marginal at the nodes (periodic trapezoid rule).
    pub fn s_marginal(&self) -> Vec<f64> {
        vec![1.0 / self.system.len() as f64; self.system.len()]
    }

    /// `∫ g dμ` for a function given in closed form.
    pub fn expect_fn(&self, g: impl Fn(f64, f64) -> f64, gh_order: usize) -> f64 {
        let w = self.s_marginal();
        self.system
            .s
            .iter()
            .zip(&self.system.slices)
            .zip(w)
            .map(|((&s, m), w)| w * m.expect(|x| g(s, x), gh_order))
            .sum()
    }

    /// `∫ F dμ` for a field sampled on the same `s`-nodes.
    pub fn integrate(&self, field: &SpaceTimeField, gh_order: usize) -> Result<f64> {
        if field.len() != self.system.len() || (field.period - self.system.period).abs() > 1e-12 {
            return Err(Error::GridMismatch(
                "space-time field and product measure use different s-nodes".into(),
            ));
        }
        let w = self.s_marginal();
        Ok(field
            .slices
            .iter()
            .zip(&self.system.slices)
            .zip(w)
            .map(|((f, m), w)| w * m.expect(|x| f.eval1(x), gh_order))
            .sum())
    }

    pub fn total_mass(&self) -> f64 {
        self.system.slices.iter().map(|m| m.total_mass()).sum::<f64>() / self.system.len() as f64
    }
}

/// `|∫ 𝒯(t) F dμ − ∫ F dμ|`.
pub fn howland_invariance_residual(
    e: &EvolutionModel,
    mu: &ProductMeasure,
    field: &SpaceTimeField,
    t: f64,
    q: &QuadratureSpec,
) -> Result<f64> {
    let image = howland_apply(e, t, field, q)?;
    Ok((mu.integrate(&image, q.gh_order)? - mu.integrate(field, q.gh_order)?).abs())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimeAverageRow {
    pub s: f64,
    pub t: f64,
    /// `p_w((1/t) ∫_0^t (P(s,−r) f − m_{−r} f) dr)`.
    pub residual: f64,
    /// `((1/t) ∫_0^t P(s,−r) f dr)(0)`.
    pub orbit_average_at_origin: f64,
    /// `(1/t) ∫_0^t m_{−r} f dr`.
    pub measure_average: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeAverageReport {
    pub rows: Vec<TimeAverageRow>,
    /// `(1/T) ∫_0^T m_s f ds`.
    pub period_average: f64,
    /// Largest `|orbit_average_at_origin − period_average|` at the last `t`.
    pub identity_residual: f64,
    /// The residual never grows along the schedule, for every `s`.
    pub pass: bool,
}

impl TimeAverageReport {
    pub fn to_csv(&self) -> String {
        csv_table(&["t", "residual"], self.rows.iter().map(|r| vec![r.t, r.residual]))
    }
}

/// Running averages in `r` of `P(s,−r) f − m_{−r} f` at fixed `s`, where
/// `m_σ f = ∫ f dμ_σ`.
pub fn time_average_check(
    e: &EvolutionModel,
    f: &SampledField,
    s_list: &[f64],
    t_schedule: &[f64],
    q: &QuadratureSpec,
    w: CompactWindow,
) -> Result<TimeAverageReport> {
    if t_schedule.is_empty()
        || t_schedule[0] <= 0.0
        || t_schedule.windows(2).any(|p| !(p[1] > p[0]))
    {
        return Err(Error::InvalidQuadrature(
            "t_schedule must be positive and strictly increasing".into(),
        ));
    }
    let sys = evolution_measures(e)?;
    let m_of = |sigma: f64| sys.expect_at(sigma, |x| f.eval1(x), q.gh_order);
    let period_average = sys
        .s
        .iter()
        .map(|&s| m_of(s))
        .sum::<f64>()
        / sys.len() as f64;
    let end = t_schedule[t_schedule.len() - 1];
    let mesh = TimeMesh::new(end, t_schedule, q)?;
    let n = f.values().len();
    let origin = f.grid().axis(0).coords().iter().position(|&x| x == 0.0);

    let mut rows = Vec::new();
    for &s in s_list {
        // per-node orbit fields in parallel, accumulated in mesh order
        let orbit = mesh
            .nodes()
            .par_iter()
            .map(|node| {
                let r = node.t;
                let g = evolution_apply(e, s, -r, f, q)?;
                Ok((g.values().to_vec(), m_of(-r), origin.map_or_else(|| g.value_at_origin(), |i| g.values()[i])))
            })
            .collect::<Result<Vec<_>>>()?;
        for &t in t_schedule {
            let mut acc = vec![0.0; n];
            let (mut m_acc, mut o_acc) = (0.0, 0.0);
            for (node, (v, m, o)) in mesh.nodes().iter().zip(&orbit) {
                let wt = node.weight_until(t);
                if wt == 0.0 {
                    continue;
                }
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += wt * (x - m);
                }
                m_acc += wt * m;
                o_acc += wt * o;
            }
            let avg = f.with_values(acc.into_iter().map(|a| a / t).collect())?;
            rows.push(TimeAverageRow {
                s,
                t,
                residual: avg.seminorm(w)?,
                orbit_average_at_origin: o_acc / t,
                measure_average: m_acc / t,
            });
        }
    }
    let k = t_schedule.len();
    let pass = rows
        .chunks(k)
        .all(|c| c.windows(2).all(|p| p[1].residual <= p[0].residual * (1.0 + 1e-9) + 1e-14));
    let identity_residual = rows
        .chunks(k)
        .map(|c| (c[k - 1].orbit_average_at_origin - period_average).abs())
        .fold(0.0, f64::max);
    Ok(TimeAverageReport {
        rows,
        period_average,
        identity_residual,
        pass,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LiouvilleRow {
    /// `sup_t p_w(𝒯(t) F − F)` over `t ∈ {T/4, T/2, T}`.
    pub residual: f64,
    pub constant: bool,
    pub fixed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LiouvilleReport {
    pub rows: Vec<LiouvilleRow>,
    pub tol: f64,
    /// Exactly the constant candidates are fixed by the Howland semigroup.
    pub pass: bool,
}

pub fn liouville_check(
    e: &EvolutionModel,
    candidates: &[SpaceTimeField],
    q: &QuadratureSpec,
    w: CompactWindow,
) -> Result<LiouvilleReport> {
    const TOL: f64 = 1e-3;
    let times = [0.25 * e.period, 0.5 * e.period, e.period];
    let rows = candidates
        .iter()
        .map(|field| {
            let scale = field.sup_norm().max(1.0);
            let residual = times.iter().try_fold(0.0_f64, |m, &t| {
                Ok::<_, Error>(m.max(howland_apply(e, t, field, q)?.distance(field, w)?))
            })?;
            Ok(LiouvilleRow {
                residual,
                constant: field.oscillation() <= 1e-12 * scale,
                fixed: residual <= TOL * scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = rows.iter().all(|r| r.constant == r.fixed);
    Ok(LiouvilleReport { rows, tol: TOL, pass })
}
