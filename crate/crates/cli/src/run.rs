//! Task dispatch: each subcommand turns a validated [`RunConfig`] into named
//! CSV/JSON artifacts plus an outcome label that drives the exit status.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ergodelab_core::expr::Expr;
use ergodelab_core::invariant::{invariance_residual, ou_invariant, stationary_density_1d, Measure};
use ergodelab_core::means::{
    abel_means, counterexample_field, ergodic_project, projection_laws_check, CounterexampleSpec,
};
use ergodelab_core::models::SemigroupModel;
use ergodelab_core::periodic::{
    cocycle_residual, evolution_invariance_residual, evolution_measures, periodicity_residual,
    time_average_check, EvolutionModel,
};
use ergodelab_core::report::{csv_table, fmt_sig, to_json};
use ergodelab_core::suite::run_suites;
use ergodelab_core::wiener::{dilated_span_schedule, mellin_nonvanishing, DilationRange, KernelSpec};
use ergodelab_core::{CompactWindow, Elliptic1D, Error, Grid, SampledField};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::config::{RunConfig, MAX_COUNTEREXAMPLE_N};

/// Smallest Cesàro schedule the verdict classifier accepts.
const MIN_VERDICT_RADII: u32 = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    /// Bad input; exit status 2.
    #[error("{0}")]
    Usage(String),
    /// The computation failed or a check did not hold; exit status 1.
    #[error("{0}")]
    Failed(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 2,
            RunError::Failed(_) => 1,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::WindowExceedsDomain { .. }
            | Error::NonPositiveInterval(_)
            | Error::SpacingMismatch { .. }
            | Error::GridMismatch(_)
            | Error::InvalidQuadrature(_)
            | Error::InvalidModel(_)
            | Error::NonSpdInput
            | Error::ExpressionParse { .. }
            | Error::Unsupported(_) => RunError::Usage(e.to_string()),
            _ => RunError::Failed(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, RunError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    /// File name inside the output directory.
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub task: String,
    /// Verdict-like label compared against `task.expect`.
    pub label: String,
    /// Whether the task's own checks held.
    pub pass: bool,
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

pub fn kernel_spec(src: &str) -> std::result::Result<KernelSpec, Error> {
    match src {
        "exp" | "exp-decay" => Ok(KernelSpec::exp_decay()),
        "indicator" => Ok(KernelSpec::indicator()),
        other => KernelSpec::custom(other),
    }
}

pub fn build_model(cfg: &RunConfig) -> Result<SemigroupModel> {
    let m = &cfg.model;
    Ok(match m.kind.as_str() {
        "translation" => SemigroupModel::Translation,
        "heat" => SemigroupModel::heat(m.kappa)?,
        "ou1d" => SemigroupModel::ou1d(m.a, m.q)?,
        "ou-nd" => SemigroupModel::ou_nd(matrix(&m.drift), matrix(&m.diffusion))?,
        "elliptic1d" => SemigroupModel::Elliptic1d(
            Elliptic1D::new(
                Expr::parse(&m.q_fn)?,
                Expr::parse(&m.b_fn)?,
                m.domain_schedule.clone(),
            )?
            .with_truncation_tol(m.truncation_tol)
            .with_time_step(m.time_step),
        ),
        "periodic" => {
            return Err(RunError::Usage(
                "periodic models are nonautonomous; use the evolve task".into(),
            ))
        }
        other => return Err(RunError::Usage(format!("unknown model kind '{other}'"))),
    })
}

pub fn build_evolution(cfg: &RunConfig) -> Result<EvolutionModel> {
    let m = &cfg.model;
    if m.kind != "periodic" {
        return Err(RunError::Usage(format!(
            "evolve needs model kind 'periodic', got '{}'",
            m.kind
        )));
    }
    let mut e = EvolutionModel::test_model(m.c, m.period)?;
    e.domain_schedule = m.domain_schedule.clone();
    if m.stepped {
        e = e.as_stepped();
    }
    let e = e
        .with_time_step(m.time_step)
        .with_truncation_tol(m.truncation_tol);
    e.validate()?;
    Ok(e)
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_row_iterator(n, n, rows.iter().flatten().copied())
}

pub fn build_field(cfg: &RunConfig, dim: usize) -> Result<SampledField> {
    let grid = Arc::new(Grid::uniform(dim, cfg.grid.half_width, cfg.grid.spacing)?);
    let expr = Expr::parse(&cfg.task.field)?;
    Ok(SampledField::from_fn(grid, cfg.extension(), |x| expr.eval_x(x[0]))?
        .with_interpolation(cfg.interpolation()))
}

/// `1, 2, 4, ...` up to `r_max`.
pub fn doubling_schedule(r_max: f64) -> Vec<f64> {
    std::iter::successors(Some(1.0_f64), |r| Some(2.0 * r))
        .take_while(|&r| r <= r_max * (1.0 + 1e-12))
        .collect()
}

/// `λ_max, λ_max/2, ...` down to `λ_min`.
pub fn halving_lambdas(lambda_max: f64, lambda_min: f64) -> Vec<f64> {
    std::iter::successors(Some(lambda_max), |l| Some(0.5 * l))
        .take_while(|&l| l >= lambda_min * (1.0 - 1e-12))
        .collect()
}

/// `r_n = 10^{n+1} − 1/2`.
pub fn counterexample_radius(n: u32) -> f64 {
    10f64.powi(n as i32 + 1) - 0.5
}

/// Predicted `C(r_n) f(0) = (−1)^n (9/11) 10^{n+1} / r_n` up to `O(10^{−n})`.
pub fn counterexample_prediction(n: u32) -> f64 {
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * 9.0 / 11.0 * 10f64.powi(n as i32 + 1) / counterexample_radius(n)
}

fn json_artifact(name: &str, v: &Value) -> Artifact {
    Artifact {
        name: format!("{name}.json"),
        contents: to_json(v).expect("json value serializes") + "\n",
    }
}

fn csv_artifact(name: &str, contents: String) -> Artifact {
    Artifact {
        name: format!("{name}.csv"),
        contents,
    }
}

fn parsed(json: String) -> Value {
    serde_json::from_str(&json).expect("core reports emit valid json")
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report serializes")
}

fn field_rows(t: f64, f: &SampledField) -> String {
    f.to_csv()
        .lines()
        .skip(1)
        .map(|l| format!("{},{l}\n", fmt_sig(t)))
        .collect()
}

fn field_header(dim: usize) -> String {
    let mut h = String::from("t");
    for k in 1..=dim {
        h.push_str(&format!(",x{k}"));
    }
    h.push_str(",value\n");
    h
}

/// Runs one task and returns its artifacts; the label is checked against
/// `task.expect` when that is set.
pub fn execute(cfg: &RunConfig, task: &str) -> Result<Outcome> {
    cfg.validate().map_err(|e| RunError::Usage(e.to_string()))?;
    if let Some(k) = &cfg.task.kind {
        if k != task {
            return Err(RunError::Usage(format!(
                "config task '{k}' does not match subcommand '{task}'"
            )));
        }
    }
    let mut out = match task {
        "apply" => apply(cfg)?,
        "cesaro" => cesaro(cfg)?,
        "abel" => abel(cfg)?,
        "project" => project(cfg)?,
        "invariant" => invariant(cfg)?,
        "evolve" => evolve(cfg)?,
        "wiener" => wiener(cfg)?,
        "counterexample" => counterexample(cfg)?,
        "check" => check(cfg)?,
        other => return Err(RunError::Usage(format!("unknown task '{other}'"))),
    };
    if let Some(expect) = &cfg.task.expect {
        out.pass = out.label == *expect;
    }
    let formats: Vec<&str> = cfg.output.formats.iter().map(String::as_str).collect();
    out.artifacts
        .retain(|a| formats.iter().any(|f| a.name.ends_with(&format!(".{f}"))));
    Ok(out)
}

fn apply(cfg: &RunConfig) -> Result<Outcome> {
    let m = build_model(cfg)?;
    let q = cfg.quadrature_spec();
    let f = build_field(cfg, m.dim().unwrap_or(1))?;
    let mut csv = field_header(f.dim());
    let mut rows = Vec::new();
    for &t in &cfg.task.t {
        let image = m.apply(t, &f, &q)?;
        csv.push_str(&field_rows(t, &image));
        rows.push(json!({
            "t": t,
            "value_at_origin": image.value_at_origin(),
            "contraction_excess": ergodelab_core::models::contraction_excess(&f, &image),
        }));
    }
    let report = json!({ "model": m.kind(), "field": cfg.task.field, "rows": rows });
    Ok(Outcome {
        task: "apply".into(),
        label: "done".into(),
        pass: true,
        artifacts: vec![csv_artifact("apply", csv), json_artifact("apply", &report)],
    })
}

fn cesaro(cfg: &RunConfig) -> Result<Outcome> {
    let m = build_model(cfg)?;
    let f = build_field(cfg, m.dim().unwrap_or(1))?;
    let rep = ergodic_project(
        &m,
        &f,
        &doubling_schedule(cfg.task.r_max),
        &cfg.quadrature_spec(),
        CompactWindow::new(cfg.task.window),
        cfg.task.tol,
    )?;
    Ok(Outcome {
        task: "cesaro".into(),
        label: rep.verdict.name().into(),
        pass: true,
        artifacts: vec![
            csv_artifact("cesaro", rep.to_csv()),
            json_artifact("cesaro", &parsed(rep.to_json())),
        ],
    })
}

fn abel(cfg: &RunConfig) -> Result<Outcome> {
    let m = build_model(cfg)?;
    let f = build_field(cfg, m.dim().unwrap_or(1))?;
    let w = CompactWindow::new(cfg.task.window);
    let lambdas = halving_lambdas(cfg.task.lambda_max, cfg.task.lambda_min);
    let means = abel_means(&m, &f, &lambdas, &cfg.quadrature_spec())?;
    let last = means.last().expect("nonempty λ grid");
    let mut rows = Vec::with_capacity(means.len());
    for (a, &l) in means.iter().zip(&lambdas) {
        rows.push(vec![l, a.distance(last, w)?, a.value_at_origin()]);
    }
    let report = json!({
        "model": m.kind(),
        "window": cfg.task.window,
        "rows": rows.iter().map(|r| json!({"lambda": r[0], "residual": r[1], "value_at_origin": r[2]})).collect::<Vec<_>>(),
    });
    Ok(Outcome {
        task: "abel".into(),
        label: "done".into(),
        pass: true,
        artifacts: vec![
            csv_artifact("abel", csv_table(&["lambda", "residual", "value_at_origin"], rows)),
            json_artifact("abel", &report),
        ],
    })
}

fn gaussian_invariant(m: &SemigroupModel) -> Result<Option<Measure>> {
    let (b, q) = match m {
        SemigroupModel::Ou1d { a, q } => (DMatrix::from_element(1, 1, -a), DMatrix::from_element(1, 1, *q)),
        SemigroupModel::OuNd(ou) => (ou.drift().clone(), ou.diffusion().clone()),
        _ => return Ok(None),
    };
    Ok(ou_invariant(&b, &q)?.map(Measure::Gaussian))
}

fn project(cfg: &RunConfig) -> Result<Outcome> {
    let m = build_model(cfg)?;
    let q = cfg.quadrature_spec();
    let w = CompactWindow::new(cfg.task.window);
    let f = build_field(cfg, m.dim().unwrap_or(1))?;
    let rep = ergodic_project(&m, &f, &doubling_schedule(cfg.task.r_max), &q, w, cfg.task.tol)?;
    let mut report = json!({ "report": parsed(rep.to_json()) });
    let mut artifacts = vec![csv_artifact("project", rep.to_csv())];
    let mut pass = true;
    if let Some(limit) = rep.limit() {
        let laws = projection_laws_check(&m, &rep, &cfg.task.t, &q, w, cfg.task.tol)?;
        pass = laws.pass;
        report["projection_laws"] = to_value(&laws);
        if let Some(mu) = gaussian_invariant(&m)? {
            let check = ergodelab_core::invariant::mean_ergodic_limit_check(&m, &mu, &f, &rep, &q)?;
            report["invariant_mean"] = to_value(&check);
        }
        artifacts.push(csv_artifact("limit", limit.to_csv()));
    }
    artifacts.push(json_artifact("project", &report));
    Ok(Outcome {
        task: "project".into(),
        label: rep.verdict.name().into(),
        pass,
        artifacts,
    })
}

fn invariant(cfg: &RunConfig) -> Result<Outcome> {
    let m = build_model(cfg)?;
    let q = cfg.quadrature_spec();
    let f = build_field(cfg, m.dim().unwrap_or(1))?;
    let mut artifacts = Vec::new();
    let (measure, description) = match &m {
        SemigroupModel::Ou1d { .. } | SemigroupModel::OuNd(_) => match gaussian_invariant(&m)? {
            Some(Measure::Gaussian(g)) => {
                let d = parsed(g.to_json());
                (Some(Measure::Gaussian(g)), d)
            }
            _ => (None, Value::Null),
        },
        SemigroupModel::Elliptic1d(e) => {
            let grid = f.grid().clone();
            match stationary_density_1d(&e.q, &e.b, grid) {
                Ok(rho) => {
                    artifacts.push(csv_artifact("density", rho.to_csv()));
                    let d = json!({ "total_mass": rho.total_mass(), "mean": rho.expect(|x| x) });
                    (Some(Measure::Density(rho)), d)
                }
                Err(Error::NoInvariantMeasure { growth }) => (None, json!({ "mass_growth": growth })),
                Err(e) => return Err(e.into()),
            }
        }
        _ => (None, Value::Null),
    };
    let mut rows = Vec::new();
    if let Some(mu) = &measure {
        for &t in &cfg.task.t {
            rows.push(vec![t, invariance_residual(&m, mu, &f, t, &q)?]);
        }
    }
    let pass = rows.iter().all(|r| r[1] <= cfg.task.tol);
    let label = if measure.is_some() { "exists" } else { "none" };
    let report = json!({
        "model": m.kind(),
        "invariant_measure": label,
        "measure": description,
        "residuals": rows.iter().map(|r| json!({"t": r[0], "residual": r[1]})).collect::<Vec<_>>(),
        "tol": cfg.task.tol,
        "pass": pass,
    });
    artifacts.push(csv_artifact("invariant", csv_table(&["t", "residual"], rows)));
    artifacts.push(json_artifact("invariant", &report));
    Ok(Outcome {
        task: "invariant".into(),
        label: label.into(),
        pass,
        artifacts,
    })
}

fn evolve(cfg: &RunConfig) -> Result<Outcome> {
    let e = build_evolution(cfg)?;
    let q = cfg.quadrature_spec();
    let w = CompactWindow::new(cfg.task.window);
    let f = build_field(cfg, 1)?;
    let period = e.period;
    let sys = evolution_measures(&e)?;
    let cocycle = cocycle_residual(&e, (0.0, period / 3.0, period / 2.0), &f, &q, w)?;
    let periodicity = periodicity_residual(&e, 0.0, period / 2.0, &f, &q, w)?;
    let mut invariance = Vec::new();
    for &t in &cfg.task.t {
        invariance.push(json!({
            "s": 0.0,
            "t": t,
            "residual": evolution_invariance_residual(&e, &sys, &f, 0.0, t, &q)?,
        }));
    }
    let horizon: Vec<f64> = std::iter::successors(Some(1u32), |k| k.checked_mul(2))
        .take_while(|&k| k <= cfg.task.periods_max)
        .map(|k| k as f64 * period)
        .collect();
    let avg = time_average_check(&e, &f, &cfg.task.s, &horizon, &q, w)?;
    let report = json!({
        "period": period,
        "closed_form": e.closed_form.is_some(),
        "cocycle_residual": cocycle,
        "periodicity_residual": periodicity,
        "invariance": invariance,
        "pullback_periods": sys.pullback_periods,
        "time_average": to_value(&avg),
    });
    Ok(Outcome {
        task: "evolve".into(),
        label: if avg.pass { "pass".into() } else { "fail".into() },
        pass: avg.pass,
        artifacts: vec![
            csv_artifact("measures", sys.to_csv()),
            csv_artifact("time_average", avg.to_csv()),
            json_artifact("evolve", &report),
        ],
    })
}

fn wiener(cfg: &RunConfig) -> Result<Outcome> {
    let k = kernel_spec(&cfg.task.kernel)?;
    let target = kernel_spec(&cfg.task.target)?;
    let table = mellin_nonvanishing(&k, &cfg.task.xi)?;
    let (fits, monotone) = dilated_span_schedule(&k, &target, &cfg.task.dilations, DilationRange::default())?;
    let span_csv = csv_table(
        &["n", "l1_error", "condition"],
        fits.iter()
            .map(|r| vec![r.dilations.len() as f64, r.l1_error, r.condition]),
    );
    let pass = table.all_positive && monotone;
    let report = json!({
        "mellin": to_value(&table),
        "fits": fits.iter().map(|r| json!({
            "n": r.dilations.len(),
            "l1_error": r.l1_error,
            "condition": r.condition,
        })).collect::<Vec<_>>(),
        "monotone": monotone,
        "pass": pass,
    });
    Ok(Outcome {
        task: "wiener".into(),
        label: if pass { "pass".into() } else { "fail".into() },
        pass,
        artifacts: vec![
            csv_artifact("mellin", table.to_csv()),
            csv_artifact("span", span_csv),
            json_artifact("wiener", &report),
        ],
    })
}

fn counterexample(cfg: &RunConfig) -> Result<Outcome> {
    let max_n = cfg.task.max_n.min(MAX_COUNTEREXAMPLE_N);
    let verdict_n = max_n.max(MIN_VERDICT_RADII);
    let schedule: Vec<f64> = (1..=verdict_n).map(counterexample_radius).collect();
    let f = counterexample_field(CounterexampleSpec::default())?;
    let rep = ergodic_project(
        &SemigroupModel::Translation,
        &f,
        &schedule,
        &cfg.quadrature_spec(),
        CompactWindow::new(cfg.task.window),
        cfg.task.tol,
    )?;
    let rows: Vec<Vec<f64>> = rep
        .iterates
        .iter()
        .zip(1..=max_n)
        .map(|(it, n)| vec![n as f64, it.r, it.value_at_origin, counterexample_prediction(n)])
        .collect();
    let label = rep.verdict.name();
    let report = json!({
        "max_n": max_n,
        "verdict_max_n": verdict_n,
        "report": parsed(rep.to_json()),
    });
    Ok(Outcome {
        task: "counterexample".into(),
        label: label.into(),
        pass: label == "oscillating",
        artifacts: vec![
            csv_artifact(
                "counterexample",
                csv_table(&["n", "r", "value_at_origin", "predicted"], rows),
            ),
            json_artifact("counterexample", &report),
        ],
    })
}

fn check(cfg: &RunConfig) -> Result<Outcome> {
    let rep = run_suites(&cfg.task.suite)?;
    Ok(Outcome {
        task: "check".into(),
        label: if rep.pass { "pass".into() } else { "fail".into() },
        pass: rep.pass,
        artifacts: vec![
            csv_artifact("check", rep.to_csv()),
            Artifact {
                name: "check.json".into(),
                contents: rep.to_json() + "\n",
            },
        ],
    })
}

/// Writes a CSV document verbatim; rows already use LF endings and 12
/// significant digits.
pub fn emit_plotdata(csv: &str, path: &Path) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, csv)
}

/// Writes every artifact into `dir` and returns the paths in order.
pub fn write_artifacts(outcome: &Outcome, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    outcome
        .artifacts
        .iter()
        .map(|a| {
            let p = dir.join(&a.name);
            emit_plotdata(&a.contents, &p)?;
            Ok(p)
        })
        .collect()
}
