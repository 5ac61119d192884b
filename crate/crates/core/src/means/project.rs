use serde::Serialize;

use super::{abel_means, cesaro_mean, cesaro_with_hull, OrbitHull};
use crate::error::{Error, Result};
use crate::fields::{CompactWindow, SampledField};
use crate::models::SemigroupModel;
use crate::quadrature::QuadratureSpec;
use crate::report::csv_table;

/// Number of trailing iterates a verdict is based on.
pub const VERDICT_WINDOW: usize = 3;

#[derive(Debug, Clone, Serialize)]
pub struct Iterate {
    pub r: f64,
    pub value_at_origin: f64,
    pub window_min: f64,
    pub window_max: f64,
    /// `p_w(C(r_k) f − C(r_{k−1}) f)`.
    pub residual_previous: Option<f64>,
    /// `p_w(C(r_k) f − C(r_last) f)`, distance to the candidate limit.
    pub residual_limit: f64,
    #[serde(skip)]
    pub snapshot: SampledField,
}

#[derive(Debug, Clone, Serialize)]
pub struct AbelCheck {
    pub lambda: f64,
    /// `p_w(C(1/λ) f − λ R(λ) f)`.
    pub gap: f64,
    pub abel_value_at_origin: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Converged {
        value_at_origin: f64,
        #[serde(skip)]
        limit: SampledField,
    },
    Oscillating {
        band: (f64, f64),
    },
    Inconclusive,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Converged { .. } => "converged",
            Verdict::Oscillating { .. } => "oscillating",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    pub fn limit(&self) -> Option<&SampledField> {
        match self {
            Verdict::Converged { limit, .. } => Some(limit),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CesaroReport {
    pub model: String,
    pub window: f64,
    pub tol: f64,
    pub iterates: Vec<Iterate>,
    #[serde(flatten)]
    pub verdict: Verdict,
    pub abel_crosscheck: Vec<AbelCheck>,
    /// Largest distance of the final mean outside the pointwise orbit range on
    /// the window; `None` when the orbit was not sampled.
    pub hull_violation: Option<f64>,
}

impl CesaroReport {
    pub fn limit(&self) -> Option<&SampledField> {
        self.verdict.limit()
    }

    pub fn to_json(&self) -> String {
        crate::report::to_json(self).expect("report serializes")
    }

    /// CSV `r,residual,value_at_origin`, residual measured against the last iterate.
    pub fn to_csv(&self) -> String {
        csv_table(
            &["r", "residual", "value_at_origin"],
            self.iterates
                .iter()
                .map(|it| vec![it.r, it.residual_limit, it.value_at_origin]),
        )
    }

    pub fn values_at_origin(&self) -> Vec<f64> {
        self.iterates.iter().map(|it| it.value_at_origin).collect()
    }
}

/// Evaluates `C(r_k) f` along an increasing schedule (one orbit sweep),
/// cross-checks against `λ_k = 1/r_k` Abel means and classifies the sequence.
///
/// * converged: the last three consecutive residuals are below `tol`;
/// * oscillating: for the last three `k`, consecutive iterates stay at least
///   `10·tol` apart while iterates two steps apart are closer, i.e. two
///   interleaved subsequences separate;
/// * inconclusive otherwise.
pub fn ergodic_project(
    m: &SemigroupModel,
    f: &SampledField,
    schedule: &[f64],
    q: &QuadratureSpec,
    w: CompactWindow,
    tol: f64,
) -> Result<CesaroReport> {
    if schedule.len() < VERDICT_WINDOW + 2 {
        return Err(Error::InvalidModel(format!(
            "schedule needs at least {} points, got {}",
            VERDICT_WINDOW + 2,
            schedule.len()
        )));
    }
    if schedule.windows(2).any(|p| !(p[1] > p[0])) || !(schedule[0] > 0.0) {
        return Err(Error::InvalidModel("schedule must be positive and increasing".into()));
    }
    w.check(f.half_width())?;
    let indices = f.grid().window_indices(w.radius);
    let mut hull = OrbitHull {
        lo: indices.iter().map(|&i| f.values()[i]).collect(),
        hi: indices.iter().map(|&i| f.values()[i]).collect(),
        indices,
    };
    let means = cesaro_with_hull(m, f, schedule, q, Some(&mut hull))?;
    let sampled = !matches!(m, SemigroupModel::Translation) || f.interpolation() != crate::Interpolation::Linear;

    let last = means.last().expect("nonempty");
    let mut iterates = Vec::with_capacity(means.len());
    for (k, (c, &r)) in means.iter().zip(schedule).enumerate() {
        let vals = c.window_values(w)?;
        iterates.push(Iterate {
            r,
            value_at_origin: c.value_at_origin(),
            window_min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            window_max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            residual_previous: if k == 0 { None } else { Some(c.distance(&means[k - 1], w)?) },
            residual_limit: c.distance(last, w)?,
            snapshot: c.clone(),
        });
    }

    let lambdas: Vec<f64> = schedule.iter().map(|r| 1.0 / r).collect();
    let abels = abel_means(m, f, &lambdas, q)?;
    let abel_crosscheck = abels
        .iter()
        .zip(&means)
        .zip(&lambdas)
        .map(|((a, c), &lambda)| {
            Ok(AbelCheck {
                lambda,
                gap: a.distance(c, w)?,
                abel_value_at_origin: a.value_at_origin(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let hull_violation = sampled.then(|| {
        let v = last.values();
        hull.indices
            .iter()
            .enumerate()
            .map(|(k, &i)| (hull.lo[k] - v[i]).max(v[i] - hull.hi[k]).max(0.0))
            .fold(0.0_f64, f64::max)
    });

    let verdict = classify(&means, w, tol)?;
    Ok(CesaroReport {
        model: m.kind().to_string(),
        window: w.radius,
        tol,
        iterates,
        verdict,
        abel_crosscheck,
        hull_violation,
    })
}

fn classify(means: &[SampledField], w: CompactWindow, tol: f64) -> Result<Verdict> {
    let n = means.len();
    let d = |a: usize, b: usize| means[a].distance(&means[b], w);
    let recent = n - VERDICT_WINDOW..n;
    let mut converged = true;
    let mut oscillating = true;
    for k in recent {
        let step = d(k, k - 1)?;
        converged &= step < tol;
        oscillating &= step >= 10.0 * tol && d(k, k - 2)? < step;
    }
    if converged {
        let limit = means[n - 1].clone();
        return Ok(Verdict::Converged {
            value_at_origin: limit.value_at_origin(),
            limit,
        });
    }
    if oscillating {
        let vals: Vec<f64> = means.iter().map(|c| c.value_at_origin()).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Ok(Verdict::Oscillating { band: (lo, hi) });
    }
    Ok(Verdict::Inconclusive)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionLawsReport {
    /// `(t, p_w(T(t) P̂f − P̂f))`.
    pub fixed: Vec<(f64, f64)>,
    /// `p_w(A P̂f)` on the interior grid.
    pub generator: f64,
    /// `p_w(C(r_last) P̂f − P̂f)`, the idempotence `P² = P`.
    pub idempotence: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn projection_laws_check(
    m: &SemigroupModel,
    report: &CesaroReport,
    t_grid: &[f64],
    q: &QuadratureSpec,
    w: CompactWindow,
    tol: f64,
) -> Result<ProjectionLawsReport> {
    let p = report.limit().ok_or(Error::NotConverged)?;
    let fixed = t_grid
        .iter()
        .map(|&t| Ok((t, m.apply(t, p, q)?.distance(p, w)?)))
        .collect::<Result<Vec<_>>>()?;
    let generator = m.generator_apply(p)?.seminorm(w)?;
    let r_last = report.iterates.last().map(|i| i.r).ok_or(Error::NotConverged)?;
    let idempotence = cesaro_mean(m, p, r_last, q)?.distance(p, w)?;
    let pass = fixed.iter().all(|x| x.1 <= tol) && generator <= tol && idempotence <= tol;
    Ok(ProjectionLawsReport {
        fixed,
        generator,
        idempotence,
        tol,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FixKernelRow {
    /// `max_t p_w(T(t) f − f)`.
    pub fix_residual: f64,
    /// `p_w(A f)`.
    pub generator_residual: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixKernelReport {
    pub rows: Vec<FixKernelRow>,
    pub pass: bool,
}

/// For each candidate: membership in the fixed space and in the kernel of the
/// generator must agree (both small or both large relative to `tol`).
pub fn fix_equals_kernel_check(
    m: &SemigroupModel,
    candidates: &[SampledField],
    t_grid: &[f64],
    w: CompactWindow,
    q: &QuadratureSpec,
    tol: f64,
) -> Result<FixKernelReport> {
    let rows = candidates
        .iter()
        .map(|f| {
            let mut fix_residual = 0.0_f64;
            for &t in t_grid {
                fix_residual = fix_residual.max(m.apply(t, f, q)?.distance(f, w)?);
            }
            let generator_residual = m.generator_apply(f)?.seminorm(w)?;
            Ok(FixKernelRow {
                fix_residual,
                generator_residual,
                consistent: (fix_residual <= tol) == (generator_residual <= tol),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = rows.iter().all(|r| r.consistent);
    Ok(FixKernelReport { rows, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Extension, Grid};
    use crate::means::{counterexample_field, CounterexampleSpec};
    use std::sync::Arc;

    fn field(l: f64, h: f64, g: impl Fn(f64) -> f64 + Sync) -> SampledField {
        let grid = Arc::new(Grid::uniform(1, l, h).unwrap());
        SampledField::from_fn(grid, Extension::ConstantExtend, |x| g(x[0])).unwrap()
    }

    fn doubling(n: u32) -> Vec<f64> {
        (0..=n).map(|k| 2f64.powi(k as i32)).collect()
    }

    #[test]
    fn ou_converges_to_invariant_mean() {
        let m = SemigroupModel::ou1d(1.0, 1.0).unwrap();
        let f = field(20.0, 0.05, |x| x * x);
        let q = QuadratureSpec::default().with_dt(0.01).with_growth(1.0);
        let w = CompactWindow::new(5.0);
        let rep = ergodic_project(&m, &f, &doubling(13), &q, w, 1e-2).unwrap();
        let limit = rep.limit().expect("converged");
        let err = limit.map(|v| v - 1.0).unwrap().seminorm(w).unwrap();
        assert!(err < 1e-2, "{err}");
        assert!(rep.hull_violation.unwrap() < 1e-9);
        let gaps: Vec<f64> = rep.abel_crosscheck.iter().map(|a| a.gap).collect();
        assert!(gaps.last().unwrap() < &gaps[3]);
        assert!(rep.to_csv().starts_with("r,residual,value_at_origin\n1,"));
        assert!(rep.to_json().contains("\"verdict\": \"converged\""));
    }

    #[test]
    fn constants_converge_immediately() {
        let m = SemigroupModel::heat(1.0).unwrap();
        let f = field(20.0, 0.1, |_| 0.75);
        let q = QuadratureSpec::default().with_dt(0.01).with_growth(1.0);
        let rep = ergodic_project(&m, &f, &doubling(4), &q, CompactWindow::new(5.0), 1e-6).unwrap();
        assert_eq!(rep.verdict.name(), "converged");
        assert!((rep.iterates[0].value_at_origin - 0.75).abs() < 1e-12);
        let laws = projection_laws_check(&m, &rep, &[0.5, 1.0], &q, CompactWindow::new(5.0), 1e-9)
            .unwrap();
        assert!(laws.pass, "{laws:?}");
    }

    #[test]
    fn counterexample_oscillates() {
        let f = counterexample_field(CounterexampleSpec::default()).unwrap();
        let schedule: Vec<f64> = (1..=5).map(|n| 10f64.powi(n + 1) - 0.5).collect();
        let q = QuadratureSpec::default();
        let rep = ergodic_project(
            &SemigroupModel::Translation,
            &f,
            &schedule,
            &q,
            CompactWindow::new(10.0),
            1e-2,
        )
        .unwrap();
        let v = rep.values_at_origin();
        let oracle = [-0.81407035, 0.81890945, -0.81814091, 0.81818909, -0.81818141];
        for (a, b) in v.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        match rep.verdict {
            Verdict::Oscillating { band } => {
                assert!(band.0 < -0.8 && band.1 > 0.8);
            }
            other => panic!("expected oscillating, got {}", other.name()),
        }
        assert!(rep.hull_violation.is_none());
    }

    #[test]
    fn fix_and_kernel_agree() {
        let m = SemigroupModel::ou1d(1.0, 1.0).unwrap();
        let q = QuadratureSpec::default();
        let one = field(20.0, 0.01, |_| 1.0);
        let id = field(20.0, 0.01, |x| x);
        let rep = fix_equals_kernel_check(&m, &[one.clone(), id], &[0.5, 1.0], CompactWindow::new(5.0), &q, 1e-6)
            .unwrap();
        assert!(rep.pass);
        assert!(rep.rows[0].fix_residual < 1e-14);
        assert!(rep.rows[1].fix_residual > 1.0 && rep.rows[1].generator_residual > 1.0);
        let tr = fix_equals_kernel_check(
            &SemigroupModel::Translation,
            &[one],
            &[0.5],
            CompactWindow::new(5.0),
            &q,
            1e-6,
        )
        .unwrap();
        assert!(tr.pass && tr.rows[0].generator_residual == 0.0);
    }
}
