//! Invariant suites behind `check --suite`: each runs a module's identities on
//! a fixed desk-scale test set and reports one named check per identity.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{CompactWindow, Extension, Grid, SampledField};
use crate::invariant::{
    adjoint_residual, lyapunov_residual, ou_invariant, stationary_density_1d, GaussianMeasure,
};
use crate::means::{
    abel_means, cesaro_means, counterexample_field, ergodic_project, CounterexampleSpec,
};
use crate::models::{
    contraction_excess, semigroup_law_residual, Elliptic1D, SemigroupModel,
};
use crate::periodic::{
    cocycle_residual, evolution_invariance_residual, evolution_measures, howland_invariance_residual,
    howland_law_residual, periodicity_residual, product_measure, EvolutionModel, SpaceTimeField,
};
use crate::quadrature::{riemann_integral, QuadratureSpec, Rule};
use crate::report::{csv_table, to_json};
use crate::wiener::{
    abel_to_cesaro_transfer_check, dilated_span_schedule, mellin_nonvanishing, DilationRange,
    KernelSpec,
};

pub const SUITES: [&str; 6] = ["fields", "models", "means", "invariant", "wiener", "periodic"];

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    fn le(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }

    fn ge(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value >= bound,
        }
    }

    fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 0.0 } else { 1.0 },
            bound: 0.0,
            pass: ok,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub suite: String,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suites: Vec<SuiteResult>,
    pub pass: bool,
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        to_json(self).expect("suite report serializes")
    }

    /// CSV `suite,check,value,bound,pass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("suite,check,value,bound,pass\n");
        for s in &self.suites {
            for c in &s.checks {
                let row = csv_table(&[""], [vec![c.value, c.bound]]);
                let nums = row.lines().nth(1).unwrap_or_default();
                out.push_str(&format!("{},{},{},{}\n", s.suite, c.name, nums, c.pass));
            }
        }
        out
    }
}

/// Runs `"all"` or one named suite.
pub fn run_suites(name: &str) -> Result<SuiteReport> {
    let names: Vec<&str> = if name == "all" {
        SUITES.to_vec()
    } else if SUITES.contains(&name) {
        vec![name]
    } else {
        return Err(Error::InvalidModel(format!(
            "unknown suite '{name}' (expected all, {})",
            SUITES.join(", ")
        )));
    };
    let suites = names
        .into_iter()
        .map(|n| {
            let checks = match n {
                "fields" => fields_suite(),
                "models" => models_suite(),
                "means" => means_suite(),
                "invariant" => invariant_suite(),
                "wiener" => wiener_suite(),
                _ => periodic_suite(),
            }?;
            Ok(SuiteResult {
                suite: n.to_string(),
                pass: checks.iter().all(|c| c.pass),
                checks,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport {
        pass: suites.iter().all(|s| s.pass),
        suites,
    })
}

fn field(l: f64, h: f64, g: impl Fn(f64) -> f64 + Sync) -> Result<SampledField> {
    let grid = Arc::new(Grid::uniform(1, l, h)?);
    SampledField::from_fn(grid, Extension::ConstantExtend, |x| g(x[0]))
}

fn doubling(n: i32) -> Vec<f64> {
    (0..=n).map(|k| 2f64.powi(k)).collect()
}

/// Largest `|a(x) − b(x)|` over the nodes of `b` inside the window.
fn window_gap(a: &SampledField, b: &SampledField, w: CompactWindow) -> f64 {
    b.grid()
        .axis(0)
        .coords()
        .iter()
        .zip(b.values())
        .filter(|(x, _)| x.abs() <= w.radius)
        .fold(0.0_f64, |m, (&x, &v)| m.max((a.eval1(x) - v).abs()))
}

fn fields_suite() -> Result<Vec<Check>> {
    let f = field(10.0, 0.05, |x| (1.3 * x).sin() * (0.2 * x).cosh().recip() + 0.01 * x * x)?;
    let mut monotone = true;
    let mut prev = 0.0;
    for r in [0.0, 0.5, 1.0, 2.5, 5.0, 10.0] {
        let s = f.seminorm(CompactWindow::new(r))?;
        monotone &= s >= prev && s <= f.sup_norm();
        prev = s;
    }
    let q = QuadratureSpec::default().with_dt(0.05);
    let u = |t: f64| field(2.0, 0.5, move |x| (x * t).sin());
    let v = |t: f64| field(2.0, 0.5, move |x| (-t).exp() + x);
    let iu = riemann_integral(u, 1.5, &q)?;
    let iv = riemann_integral(v, 1.5, &q)?;
    let combo = riemann_integral(|t| u(t)?.scale(2.0)?.add(&v(t)?.scale(-3.0)?), 1.5, &q)?;
    let linear = combo.sub(&iu.scale(2.0)?.add(&iv.scale(-3.0)?)?)?.sup_norm();

    let exact = (1.0 - (-2.0f64).exp()) / 2.0;
    let err = |dt: f64| -> Result<f64> {
        let q = QuadratureSpec::default().with_rule(Rule::Simpson).with_dt(dt);
        let trivial = field(1.0, 1.0, |_| 0.0)?;
        let i = riemann_integral(|t| trivial.map(|_| (-2.0 * t).exp()), 1.0, &q)?;
        Ok((i.value_at_origin() - exact).abs())
    };
    let ratio = err(0.1)? / err(0.05)?;
    Ok(vec![
        Check::holds("seminorm monotone in R and below sup norm", monotone),
        Check::le("riemann integral linearity", linear, 1e-12),
        Check::ge("simpson error ratio under dt/2", ratio, 8.0),
    ])
}

fn models_suite() -> Result<Vec<Check>> {
    let q = QuadratureSpec::default();
    let w = CompactWindow::new(3.0);
    let f = field(12.0, 0.05, |x| (0.8 * x).cos() / (1.0 + 0.1 * x * x))?;
    let models = [
        SemigroupModel::Translation,
        SemigroupModel::heat(0.5)?,
        SemigroupModel::ou1d(1.0, 1.0)?,
    ];
    let mut checks = Vec::new();
    let mut excess = 0.0_f64;
    for m in &models {
        for t in [0.1, 0.5, 2.0] {
            excess = excess.max(contraction_excess(&f, &m.apply(t, &f, &q)?));
        }
    }
    let ou2 = SemigroupModel::ou_nd(
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
        DMatrix::identity(2, 2),
    )?;
    let grid2 = Arc::new(Grid::uniform(2, 6.0, 0.25)?);
    let f2 = SampledField::from_fn(grid2, Extension::ConstantExtend, |x| (x[0] - 0.5 * x[1]).cos())?;
    excess = excess.max(contraction_excess(&f2, &ou2.apply(0.5, &f2, &q)?));
    checks.push(Check::le("contraction excess on closed-form models", excess, 1e-6));

    let mut law = 0.0_f64;
    for m in &models[1..] {
        law = law.max(semigroup_law_residual(m, 0.3, 0.7, &f, w, &q)?);
    }
    checks.push(Check::le("semigroup law residual", law, 1e-4));

    let ou = &models[2];
    let af = ou.generator_apply(&f)?;
    let quotient = |h: f64| -> Result<f64> {
        let d = ou.apply(h, &f, &q)?.sub(&f)?.scale(1.0 / h)?;
        Ok(window_gap(&d, &af, w))
    };
    let (e1, e2) = (quotient(0.02)?, quotient(0.01)?);
    checks.push(Check::ge("generator difference quotient is first order", e1 / e2, 1.5));

    let t = 0.5;
    let qi = QuadratureSpec::default().with_dt(0.01);
    let integral = riemann_integral(|s| ou.apply(s, &af, &qi), t, &qi)?;
    let lhs = ou.apply(t, &f, &q)?.sub(&f)?;
    checks.push(Check::le(
        "T(t)f - f equals the integral of T(s)Af",
        window_gap(&lhs, &integral, w),
        1e-3,
    ));

    let bump = field(4.0, 0.05, |x| (-x * x).exp())?;
    let solve = |l: f64| -> Result<SampledField> {
        let e = Elliptic1D::new(Expr::constant(1.0), Expr::parse("-x")?, vec![l])?;
        SemigroupModel::Elliptic1d(e).apply(0.5, &bump, &q)
    };
    let (small, large) = (solve(4.0)?, solve(6.0)?);
    let dip = small
        .values()
        .iter()
        .zip(large.values())
        .fold(0.0_f64, |m, (a, b)| m.max(a - b));
    checks.push(Check::le("truncated solutions nondecreasing in the domain", dip, 1e-12));
    Ok(checks)
}

fn means_suite() -> Result<Vec<Check>> {
    let q = QuadratureSpec::default().with_dt(0.01).with_growth(1.0);
    let w = CompactWindow::new(5.0);
    let tol = 1e-2;
    let ou = SemigroupModel::ou1d(1.0, 1.0)?;
    let heat = SemigroupModel::heat(1.0)?;
    let x2 = field(20.0, 0.05, |x| x * x)?;
    let cos = field(20.0, 0.05, f64::cos)?;
    let schedule = doubling(13);
    let mut checks = Vec::new();

    let radii = [0.5, 4.0, 64.0];
    let mut excess = 0.0_f64;
    for (m, f) in [(&ou, &cos), (&heat, &cos)] {
        for c in cesaro_means(m, f, &radii, &q)? {
            excess = excess.max(contraction_excess(f, &c));
        }
    }
    checks.push(Check::le("cesaro contraction excess", excess, 1e-6));

    let rep_x2 = ergodic_project(&ou, &x2, &schedule, &q, w, tol)?;
    let rep_cos = ergodic_project(&ou, &cos, &schedule, &q, w, tol)?;
    let heat_grid = Arc::new(Grid::uniform(1, 8.0 * PI, PI / 32.0)?);
    let heat_cos = SampledField::from_fn(heat_grid, Extension::Periodic, |x| x[0].cos())?;
    let rep_heat = ergodic_project(&heat, &heat_cos, &doubling(10), &q, w, tol)?;
    let sound = [&rep_x2, &rep_cos, &rep_heat]
        .iter()
        .all(|r| r.verdict.name() != "oscillating");
    checks.push(Check::holds("closed-form convergent cases are not flagged oscillating", sound));

    let lambdas: Vec<f64> = schedule.iter().map(|r| 1.0 / r).collect();
    let abel = abel_means(&ou, &x2, &lambdas, &q)?;
    let gap = abel
        .last()
        .zip(rep_x2.iterates.last())
        .map(|(a, it)| a.distance(&it.snapshot, w))
        .transpose()?
        .unwrap_or(f64::INFINITY);
    checks.push(Check::le("abel and cesaro limits agree", gap, 2.0 * tol));

    let hull = rep_x2.hull_violation.unwrap_or(f64::INFINITY).max(rep_cos.hull_violation.unwrap_or(f64::INFINITY));
    checks.push(Check::le("converged mean within observed orbit range", hull, 1e-9));

    let combo = x2.scale(0.5)?.add(&cos.scale(-0.25)?)?;
    let rep_combo = ergodic_project(&ou, &combo, &schedule, &q, w, tol)?;
    let linearity = match (rep_combo.limit(), rep_x2.limit(), rep_cos.limit()) {
        (Some(c), Some(a), Some(b)) => c.distance(&a.scale(0.5)?.add(&b.scale(-0.25)?)?, w)?,
        _ => f64::INFINITY,
    };
    checks.push(Check::le("limit linearity", linearity, 2.0 * tol));
    Ok(checks)
}

/// Drift matrices with and without spectrum in the open left half-plane, with
/// the expected existence of a Gaussian invariant law.
pub fn spectral_cases() -> Vec<(DMatrix<f64>, bool)> {
    let m = |n: usize, v: &[f64]| DMatrix::from_row_slice(n, n, v);
    vec![
        (m(1, &[-1.0]), true),
        (m(1, &[0.0]), false),
        (m(1, &[0.5]), false),
        (m(2, &[-1.0, 0.0, 0.0, -2.0]), true),
        (m(2, &[-1.0, 0.0, 0.0, 1.0]), false),
        (m(2, &[-1.0, 1.0, 0.0, -1.0]), true),
        (m(2, &[0.0, 1.0, 0.0, 0.0]), false),
        (m(2, &[-0.1, 2.0, -2.0, -0.1]), true),
        (m(2, &[0.0, 1.0, -1.0, 0.0]), false),
        (m(2, &[0.1, 3.0, -3.0, 0.1]), false),
        (m(3, &[-1.0, 5.0, 0.0, 0.0, -2.0, 1.0, 0.0, 0.0, -0.5]), true),
        (m(3, &[-1.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 1e-3]), false),
    ]
}

fn invariant_suite() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut consistent = true;
    let mut lyap = 0.0_f64;
    for (b, exists) in spectral_cases() {
        let q = DMatrix::identity(b.nrows(), b.nrows());
        let mu = ou_invariant(&b, &q)?;
        consistent &= mu.is_some() == exists;
        if let Some(mu) = mu {
            lyap = lyap.max(lyapunov_residual(&b, &q, &mu.covariance));
        }
    }
    checks.push(Check::holds("no invariant law exactly for spectra off the left half-plane", consistent));
    checks.push(Check::le("lyapunov residual", lyap, 1e-10));

    let grid = Arc::new(Grid::uniform(1, 8.0, 0.01)?);
    let rho = stationary_density_1d(&Expr::constant(1.0), &Expr::parse("-x")?, grid)?;
    let gauss = GaussianMeasure::new(vec![0.0], DMatrix::from_element(1, 1, 1.0))?;
    let coords = rho.grid().axis(0).coords().to_vec();
    let mismatch = coords
        .iter()
        .zip(rho.rho())
        .filter(|(x, _)| x.abs() <= 5.0)
        .fold(0.0_f64, |m, (&x, &r)| m.max((r - gauss.pdf_1d(x)).abs()));
    checks.push(Check::le("stationary density matches the lyapunov gaussian", mismatch, 1e-6));

    let ou = SemigroupModel::ou1d(1.0, 1.0)?;
    let mut adj = 0.0_f64;
    for c in [0.0, 1.0, -2.0] {
        let f = field(8.0, 0.01, move |x| (-(x - c) * (x - c)).exp())?;
        adj = adj.max(adjoint_residual(&ou, &rho, &f)?);
    }
    checks.push(Check::le("adjoint residual of the stationary density", adj, 1e-4));

    let q = QuadratureSpec::default().with_dt(0.01).with_growth(1.0);
    let smooth = field(20.0, 0.05, |x| (0.5 * x).sin() + 1.0 / (1.0 + x * x))?;
    let rep = ergodic_project(&ou, &smooth, &doubling(13), &q, CompactWindow::new(5.0), 1e-2)?;
    checks.push(Check::holds("model with invariant measure converges", rep.limit().is_some()));
    let ce = counterexample_field(CounterexampleSpec::default())?;
    let schedule: Vec<f64> = (1..=5).map(|n| 10f64.powi(n + 1) - 0.5).collect();
    let rep = ergodic_project(
        &SemigroupModel::Translation,
        &ce,
        &schedule,
        &QuadratureSpec::default(),
        CompactWindow::new(10.0),
        1e-2,
    )?;
    checks.push(Check::holds("translation counterexample oscillates", rep.verdict.name() == "oscillating"));
    Ok(checks)
}

fn wiener_suite() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let xi: Vec<f64> = (0..=40).map(|k| 0.25 * k as f64).collect();
    let table = mellin_nonvanishing(&KernelSpec::exp_decay(), &xi)?;
    let min = table.rows.iter().map(|r| r.modulus).fold(f64::INFINITY, f64::min);
    checks.push(Check::ge("smallest mellin modulus of exp(-t)", min, 1e-12));

    let mut monotone = true;
    for target in [KernelSpec::indicator(), KernelSpec::custom("x*exp(-x)")?] {
        let (_, ok) = dilated_span_schedule(&KernelSpec::exp_decay(), &target, &[5, 10, 20, 40], DilationRange::default())?;
        monotone &= ok;
    }
    checks.push(Check::holds("span error nonincreasing as n doubles", monotone));

    let ou = SemigroupModel::ou1d(1.0, 1.0)?;
    let q = QuadratureSpec::default().with_dt(0.01).with_growth(1.0);
    let w = CompactWindow::new(5.0);
    let f = field(20.0, 0.05, |x| x * x)?;
    let schedule = doubling(13);
    let rep = ergodic_project(&ou, &f, &schedule, &q, w, 1e-2)?;
    let final_residual = rep
        .iterates
        .last()
        .and_then(|it| it.residual_previous)
        .unwrap_or(0.0);
    let lambdas: Vec<f64> = schedule.iter().rev().take(6).rev().map(|r| 1.0 / r).collect();
    let transfer = abel_to_cesaro_transfer_check(&ou, &f, &lambdas, &q, w)?;
    let smallest = transfer.rows.last().map_or(f64::INFINITY, |r| r.residual);
    checks.push(Check::holds("transfer verdict consistent", transfer.pass && rep.limit().is_some()));
    checks.push(Check::le("transfer residual at smallest lambda", smallest, 3.0 * final_residual));
    Ok(checks)
}

fn periodic_suite() -> Result<Vec<Check>> {
    let e = EvolutionModel::test_model(1.0, 2.0 * PI)?;
    let q = QuadratureSpec::default();
    let w = CompactWindow::new(3.0);
    let f = field(16.0, 0.05, |x| (0.7 * x).sin() + 0.1 * x * x)?;
    let mut checks = Vec::new();
    let mut cocycle = 0.0_f64;
    for triple in [(0.0, 0.5, 1.5), (-1.0, 1.0, 2.0), (2.0, 4.0, 8.0)] {
        cocycle = cocycle.max(cocycle_residual(&e, triple, &f, &q, w)?);
    }
    checks.push(Check::le("cocycle law", cocycle, 1e-4));
    checks.push(Check::le("periodicity", periodicity_residual(&e, 0.0, 1.0, &f, &q, w)?, 1e-6));

    let sys = evolution_measures(&e)?;
    let mut inv = 0.0_f64;
    for g in [
        field(16.0, 0.05, |_| 1.0)?,
        field(16.0, 0.05, |x| x)?,
        field(16.0, 0.05, |x| x * x - x)?,
    ] {
        for (s, t) in [(0.0, 0.5), (0.0, PI), (1.0, 3.0), (-2.0, 5.0)] {
            inv = inv.max(evolution_invariance_residual(&e, &sys, &g, s, t, &q)?);
        }
    }
    checks.push(Check::le("evolution system invariance", inv, 1e-4));

    let grid = Arc::new(Grid::uniform(1, 16.0, 0.1)?);
    let big = SpaceTimeField::from_fn(e.period, e.s_nodes, grid, Extension::ConstantExtend, |s, x| {
        (x + s.sin()).cos() + 0.05 * x * x
    })?;
    let mut law = 0.0_f64;
    for t1 in [0.25 * e.period, 0.5 * e.period] {
        for t2 in [0.25 * e.period, 0.5 * e.period] {
            law = law.max(howland_law_residual(&e, t1, t2, &big, &q, w)?);
        }
    }
    checks.push(Check::le("howland semigroup law", law, 2e-4));
    let mu = product_measure(&sys);
    let hi = howland_invariance_residual(&e, &mu, &big, 0.25 * e.period, &q)?;
    checks.push(Check::le("product measure invariant under howland", hi, 1e-4));
    Ok(checks)
}
