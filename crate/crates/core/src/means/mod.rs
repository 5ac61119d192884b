//! Cesàro means `C(r) f = (1/r) ∫_0^r T(s) f ds`, Abel means `λ R(λ) f` and
//! the resolvent, all computed from one orbit sweep with cumulative sums.

mod counterexample;
mod project;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{CompactWindow, Interpolation, SampledField};
use crate::models::SemigroupModel;
use crate::quadrature::{QuadratureSpec, TimeMesh};

pub use counterexample::{counterexample_field, counterexample_value, CounterexampleSpec};
pub use project::{
    ergodic_project, fix_equals_kernel_check, projection_laws_check, AbelCheck, CesaroReport,
    FixKernelReport, FixKernelRow, Iterate, ProjectionLawsReport, Verdict,
};

/// Largest Laplace horizon [`abel_mean`] will enlarge to.
pub const LAPLACE_HORIZON_CAP: f64 = 1e8;
/// Relative tail bound `e^{-λ T} ‖f‖ ≤ TAIL_TOLERANCE ‖f‖`.
pub const TAIL_TOLERANCE: f64 = 1e-6;

/// One orbit integral `∫_0^end e^{-λ t} T(t) f dt`.
#[derive(Debug, Clone, Copy)]
struct OrbitIntegral {
    end: f64,
    lambda: f64,
}

/// Pointwise orbit range on the window nodes, recorded during a sweep.
#[derive(Debug, Clone)]
pub(crate) struct OrbitHull {
    pub indices: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

fn exact_translation(m: &SemigroupModel, f: &SampledField) -> bool {
    matches!(m, SemigroupModel::Translation)
        && f.dim() == 1
        && f.interpolation() == Interpolation::Linear
}

/// Evaluates all requested orbit integrals in one pass. Laplace integrals
/// receive the tail closure `e^{-λT} T(T) f / λ`, exact for orbits that have
/// settled.
fn orbit_integrals(
    m: &SemigroupModel,
    f: &SampledField,
    specs: &[OrbitIntegral],
    q: &QuadratureSpec,
    mut hull: Option<&mut OrbitHull>,
) -> Result<Vec<Vec<f64>>> {
    let n = f.values().len();
    if exact_translation(m, f) {
        let coords = f.grid().axis(0).coords().to_vec();
        return specs
            .iter()
            .map(|s| {
                coords
                    .iter()
                    .map(|&x| {
                        if s.lambda == 0.0 {
                            f.integrate_exact(x, x + s.end)
                        } else {
                            let tail = (-s.lambda * s.end).exp() * f.eval1(x + s.end) / s.lambda;
                            Ok(f.laplace_exact(x, s.lambda, s.end)? + tail)
                        }
                    })
                    .collect()
            })
            .collect();
    }
    let end = specs.iter().fold(0.0_f64, |a, s| a.max(s.end));
    let breaks: Vec<f64> = specs.iter().map(|s| s.end).collect();
    let mesh = TimeMesh::new(end, &breaks, q)?;
    let eps = |e: f64| 1e-12 * e.abs().max(1.0);
    // Laplace horizons always get an orbit sample for the tail closure
    let mut entries: Vec<(f64, Option<usize>)> =
        mesh.nodes().iter().enumerate().map(|(i, n)| (n.t, Some(i))).collect();
    for s in specs.iter().filter(|s| s.lambda > 0.0) {
        if !entries.iter().any(|e| (e.0 - s.end).abs() <= eps(s.end)) {
            entries.push((s.end, None));
        }
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    let times: Vec<f64> = entries.iter().map(|e| e.0).collect();
    let nodes = mesh.nodes();
    let mut sums = vec![vec![0.0; n]; specs.len()];
    m.sweep(f, &times, q, |i, g| {
        let (t, node) = entries[i];
        let v = g.values();
        for (s, sum) in specs.iter().zip(sums.iter_mut()) {
            if t > s.end + eps(s.end) {
                continue;
            }
            let mut w = node.map_or(0.0, |k| nodes[k].weight_until(s.end));
            if s.lambda > 0.0 {
                w *= (-s.lambda * t).exp();
                if (t - s.end).abs() <= eps(s.end) {
                    w += (-s.lambda * t).exp() / s.lambda;
                }
            }
            if w != 0.0 {
                for (acc, x) in sum.iter_mut().zip(v) {
                    *acc += w * x;
                }
            }
        }
        if let Some(h) = hull.as_deref_mut() {
            for (k, &idx) in h.indices.iter().enumerate() {
                h.lo[k] = h.lo[k].min(v[idx]);
                h.hi[k] = h.hi[k].max(v[idx]);
            }
        }
        Ok(())
    })?;
    Ok(sums)
}

/// `C(r) f` at each checkpoint of an increasing list.
pub fn cesaro_means(
    m: &SemigroupModel,
    f: &SampledField,
    checkpoints: &[f64],
    q: &QuadratureSpec,
) -> Result<Vec<SampledField>> {
    cesaro_with_hull(m, f, checkpoints, q, None)
}

pub(crate) fn cesaro_with_hull(
    m: &SemigroupModel,
    f: &SampledField,
    checkpoints: &[f64],
    q: &QuadratureSpec,
    hull: Option<&mut OrbitHull>,
) -> Result<Vec<SampledField>> {
    if let Some(&r) = checkpoints.iter().find(|&&r| !(r > 0.0)) {
        return Err(Error::NonPositiveInterval(r));
    }
    let specs: Vec<OrbitIntegral> = checkpoints
        .iter()
        .map(|&r| OrbitIntegral { end: r, lambda: 0.0 })
        .collect();
    let sums = orbit_integrals(m, f, &specs, q, hull)?;
    sums.into_iter()
        .zip(checkpoints)
        .map(|(s, &r)| f.with_values(s.into_iter().map(|v| v / r).collect()))
        .collect()
}

pub fn cesaro_mean(
    m: &SemigroupModel,
    f: &SampledField,
    r: f64,
    q: &QuadratureSpec,
) -> Result<SampledField> {
    Ok(cesaro_means(m, f, &[r], q)?.remove(0))
}

/// Laplace horizon meeting the tail bound for this `λ`.
pub fn laplace_horizon(lambda: f64, q: &QuadratureSpec) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::NonPositiveInterval(lambda));
    }
    let needed = (1.0 / TAIL_TOLERANCE).ln() / lambda;
    let horizon = q.t_max.max(needed);
    if horizon > LAPLACE_HORIZON_CAP {
        return Err(Error::TailBoundUnreachable {
            needed,
            cap: LAPLACE_HORIZON_CAP,
        });
    }
    Ok(horizon)
}

/// `λ R(λ) f` for each `λ`.
pub fn abel_means(
    m: &SemigroupModel,
    f: &SampledField,
    lambdas: &[f64],
    q: &QuadratureSpec,
) -> Result<Vec<SampledField>> {
    let specs = lambdas
        .iter()
        .map(|&l| Ok(OrbitIntegral { end: laplace_horizon(l, q)?, lambda: l }))
        .collect::<Result<Vec<_>>>()?;
    let sums = orbit_integrals(m, f, &specs, q, None)?;
    sums.into_iter()
        .zip(lambdas)
        .map(|(s, &l)| f.with_values(s.into_iter().map(|v| l * v).collect()))
        .collect()
}

pub fn abel_mean(
    m: &SemigroupModel,
    f: &SampledField,
    lambda: f64,
    q: &QuadratureSpec,
) -> Result<SampledField> {
    Ok(abel_means(m, f, &[lambda], q)?.remove(0))
}

/// `R(λ) f = ∫_0^∞ e^{-λt} T(t) f dt`.
pub fn resolvent(
    m: &SemigroupModel,
    f: &SampledField,
    lambda: f64,
    q: &QuadratureSpec,
) -> Result<SampledField> {
    abel_mean(m, f, lambda, q)?.scale(1.0 / lambda)
}

/// `p_w(R(λ)f − R(μ)f − (μ−λ) R(λ)R(μ)f)`.
pub fn resolvent_identity_residual(
    m: &SemigroupModel,
    f: &SampledField,
    lambda: f64,
    mu: f64,
    q: &QuadratureSpec,
    w: CompactWindow,
) -> Result<f64> {
    if lambda == mu {
        return Err(Error::InvalidModel("resolvent identity needs λ ≠ μ".into()));
    }
    let rl = resolvent(m, f, lambda, q)?;
    let rm = resolvent(m, f, mu, q)?;
    let rlrm = resolvent(m, &rm, lambda, q)?;
    let rhs = rlrm.scale(mu - lambda)?;
    rl.sub(&rm)?.sub(&rhs)?.seminorm(w)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CommutationReport {
    /// `max(p_w((I−T(t))C(r)f − C(r)(I−T(t))f), p_w((I−T(t))C(r)f − (1/r)(I−T(r))∫_0^t T(s)f ds))`.
    pub residual: f64,
    /// `‖(I−T(t)) C(r) f‖`.
    pub norm: f64,
    /// `2t/r ‖f‖`.
    pub bound: f64,
    pub bound_excess: f64,
}

pub fn commutation_residual(
    m: &SemigroupModel,
    f: &SampledField,
    t: f64,
    r: f64,
    q: &QuadratureSpec,
    w: CompactWindow,
) -> Result<CommutationReport> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveInterval(t));
    }
    let cr = cesaro_mean(m, f, r, q)?;
    let lhs = cr.sub(&m.apply(t, &cr, q)?)?;
    let diff = f.sub(&m.apply(t, f, q)?)?;
    let right = cesaro_mean(m, &diff, r, q)?;
    let integral = cesaro_mean(m, f, t, q)?.scale(t)?;
    let closed = integral.sub(&m.apply(r, &integral, q)?)?.scale(1.0 / r)?;
    let residual = lhs.distance(&right, w)?.max(lhs.distance(&closed, w)?);
    let norm = lhs.sup_norm();
    let bound = 2.0 * t / r * f.sup_norm();
    Ok(CommutationReport {
        residual,
        norm,
        bound,
        bound_excess: (norm - bound).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Extension, Grid};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn field(l: f64, h: f64, g: impl Fn(f64) -> f64 + Sync) -> SampledField {
        let grid = Arc::new(Grid::uniform(1, l, h).unwrap());
        SampledField::from_fn(grid, Extension::ConstantExtend, |x| g(x[0])).unwrap()
    }

    fn ou() -> SemigroupModel {
        SemigroupModel::ou1d(1.0, 1.0).unwrap()
    }

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default().with_dt(0.01).with_growth(1.0)
    }

    #[test]
    fn cesaro_ou_closed_form() {
        let f = field(20.0, 0.02, |x| x * x);
        let c = cesaro_mean(&ou(), &f, 1.0, &quad()).unwrap();
        assert_abs_diff_eq!(c.value_at_origin(), 0.567_667_641_618_306_3, epsilon = 1e-7);
        let e = (1.0 - (-2.0f64).exp()) / 2.0;
        assert_abs_diff_eq!(c.eval1(2.0), 4.0 * e + 1.0 - e, epsilon = 1e-6);
    }

    #[test]
    fn constants_are_preserved() {
        let one = field(20.0, 0.1, |_| 2.5);
        let q = quad();
        for m in [ou(), SemigroupModel::heat(1.0).unwrap(), SemigroupModel::Translation] {
            let c = cesaro_mean(&m, &one, 3.0, &q).unwrap();
            let a = abel_mean(&m, &one, 0.5, &q).unwrap();
            assert!(c.values().iter().all(|v| (v - 2.5).abs() < 1e-10));
            assert!(a.values().iter().all(|v| (v - 2.5).abs() < 1e-9), "{}", a.value_at_origin());
        }
    }

    #[test]
    fn abel_and_resolvent_closed_forms() {
        let f = field(20.0, 0.02, |x| x * x);
        let q = quad();
        let a = abel_mean(&ou(), &f, 0.1, &q).unwrap();
        assert_abs_diff_eq!(a.value_at_origin(), 2.0 / 2.1, epsilon = 1e-6);
        let r = resolvent(&ou(), &f, 1.0, &q).unwrap();
        assert_abs_diff_eq!(r.value_at_origin(), 2.0 / 3.0, epsilon = 1e-6);
        let one = field(20.0, 0.1, |_| 1.0);
        let half = resolvent(&ou(), &one, 2.0, &q).unwrap();
        assert_abs_diff_eq!(half.value_at_origin(), 0.5, epsilon = 1e-8);
        let cos = field(20.0, 0.02, f64::cos);
        let h = resolvent(&SemigroupModel::heat(1.0).unwrap(), &cos, 1.0, &q).unwrap();
        assert_abs_diff_eq!(h.value_at_origin(), 0.5, epsilon = 1e-6);
    }

    #[test]
    fn resolvent_identity_examples() {
        let q = quad();
        let w = CompactWindow::new(5.0);
        let f = field(20.0, 0.02, |x| x * x);
        assert!(resolvent_identity_residual(&ou(), &f, 1.0, 0.5, &q, w).unwrap() <= 1e-4);
        let s = field(40.0, 0.01, f64::sin).with_interpolation(Interpolation::Linear);
        let r = resolvent_identity_residual(&SemigroupModel::Translation, &s, 1.0, 3.0, &q, w).unwrap();
        assert!(r <= 1e-3, "{r}");
    }

    #[test]
    fn commutation_examples() {
        let q = quad();
        let w = CompactWindow::new(5.0);
        let f = field(20.0, 0.02, |x| x * x);
        let rep = commutation_residual(&ou(), &f, 0.5, 4.0, &q, w).unwrap();
        assert!(rep.residual <= 1e-4, "{rep:?}");
        assert!(rep.bound_excess <= 1e-6);
        let s = field(40.0, 0.01, f64::sin).with_interpolation(Interpolation::Linear);
        let rep = commutation_residual(&SemigroupModel::Translation, &s, 1.0, 10.0, &q, w).unwrap();
        assert!(rep.residual <= 1e-6, "{rep:?}");
    }

    #[test]
    fn horizon_cap() {
        let q = QuadratureSpec::default();
        assert!(matches!(
            laplace_horizon(1e-9, &q),
            Err(Error::TailBoundUnreachable { .. })
        ));
        assert!(laplace_horizon(1e-4, &q).unwrap() > 1e5);
    }
}
