//! Run configuration: a sectioned TOML file with `[model]`, `[grid]`,
//! `[quadrature]`, `[task]` and `[output]` tables. Every key has a default, so
//! an empty file is a valid config.

use std::fmt;
use std::path::Path;

use ergodelab_core::expr::Expr;
use ergodelab_core::fields::{Extension, Interpolation};
use ergodelab_core::quadrature::{QuadratureSpec, Rule};
use ergodelab_core::suite::SUITES;
use serde::{Deserialize, Serialize};

pub const MODEL_KINDS: [&str; 6] = ["translation", "heat", "ou1d", "ou-nd", "elliptic1d", "periodic"];

pub const TASK_KINDS: [&str; 9] = [
    "apply",
    "cesaro",
    "abel",
    "project",
    "invariant",
    "evolve",
    "wiener",
    "counterexample",
    "check",
];

pub const MAX_COUNTEREXAMPLE_N: u32 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: String,
    /// OU-1D restoring rate.
    pub a: f64,
    /// OU-1D diffusion coefficient.
    pub q: f64,
    pub kappa: f64,
    /// OU-ND drift matrix `B`, row major.
    pub drift: Vec<Vec<f64>>,
    /// OU-ND diffusion matrix `Q`, row major.
    pub diffusion: Vec<Vec<f64>>,
    /// Elliptic1D coefficient `q(x)`.
    pub q_fn: String,
    /// Elliptic1D coefficient `b(x)`.
    pub b_fn: String,
    pub domain_schedule: Vec<f64>,
    pub truncation_tol: f64,
    pub time_step: f64,
    /// Periodic test model: drift amplitude.
    pub c: f64,
    pub period: f64,
    /// Periodic test model advanced by the θ-scheme instead of the closed form.
    pub stepped: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: "ou1d".into(),
            a: 1.0,
            q: 1.0,
            kappa: 1.0,
            drift: vec![vec![-1.0, 0.0], vec![0.0, -2.0]],
            diffusion: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            q_fn: "1".into(),
            b_fn: "-x".into(),
            domain_schedule: vec![12.0, 16.0],
            truncation_tol: 1e-6,
            time_step: 1e-2,
            c: 1.0,
            period: 2.0 * std::f64::consts::PI,
            stepped: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Half-width `L` of the sampling box `[-L, L]^N`.
    pub half_width: f64,
    /// Node spacing `h`.
    pub spacing: f64,
    pub extension: String,
    pub interpolation: String,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            half_width: 20.0,
            spacing: 0.05,
            extension: "constant".into(),
            interpolation: "cubic".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSection {
    pub rule: String,
    pub dt: f64,
    pub t_max: f64,
    pub gh_order: usize,
    /// Panel growth: width `dt * (1 + growth * t)`.
    pub growth: f64,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        Self {
            rule: "simpson".into(),
            dt: 0.01,
            t_max: 50.0,
            gh_order: 32,
            growth: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    /// Optional; must match the subcommand when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// Test field `f(x)`; on N-D grids it is evaluated at the first coordinate.
    pub field: String,
    /// Times for `apply`, the fixed-point laws and invariance residuals.
    pub t: Vec<f64>,
    /// Cesàro schedule `1, 2, 4, ..., r_max`.
    pub r_max: f64,
    /// Abel grid `lambda_max, lambda_max/2, ...` down to `lambda_min`.
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// Window radius `R` of the seminorm.
    pub window: f64,
    pub tol: f64,
    /// Expected outcome; a mismatch exits with status 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expect: Option<String>,
    pub max_n: u32,
    pub suite: String,
    pub kernel: String,
    pub target: String,
    pub xi: Vec<f64>,
    pub dilations: Vec<usize>,
    /// Evolution start times for the periodic time average.
    pub s: Vec<f64>,
    /// Time-average horizon in periods, reached by doubling from one period.
    pub periods_max: u32,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            kind: None,
            field: "x^2".into(),
            t: vec![0.5, 1.0, 2.0],
            r_max: 8192.0,
            lambda_max: 0.5,
            lambda_min: 1.0 / 256.0,
            window: 5.0,
            tol: 1e-2,
            expect: None,
            max_n: 4,
            suite: "all".into(),
            kernel: "exp".into(),
            target: "indicator".into(),
            xi: vec![0.0, 0.5, 1.0, 2.0],
            dilations: vec![5, 10, 20, 40],
            s: vec![0.0],
            periods_max: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "ergodelab-out".into(),
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub quadrature: QuadratureSection,
    pub task: TaskSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ParseError {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.diagnostics.iter().map(|d| d.to_string()).collect();
        write!(f, "invalid config:\n  {}", lines.join("\n  "))
    }
}

impl ParseError {
    fn single(field: &str, message: impl Into<String>) -> Self {
        Self {
            diagnostics: vec![Diagnostic {
                line: None,
                field: field.into(),
                message: message.into(),
            }],
        }
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ParseError> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| ParseError::single("file", format!("{}: {e}", path.display())))?;
    parse_config_str(&src)
}

pub fn parse_config_str(src: &str) -> Result<RunConfig, ParseError> {
    let cfg: RunConfig = toml::from_str(src).map_err(|e| ParseError {
        diagnostics: vec![Diagnostic {
            line: e.span().map(|s| line_of_offset(src, s.start)),
            field: "toml".into(),
            message: e.message().to_string(),
        }],
    })?;
    let diagnostics = cfg.diagnostics(Some(src));
    if diagnostics.is_empty() {
        Ok(cfg)
    } else {
        Err(ParseError { diagnostics })
    }
}

/// The default config as TOML.
pub fn defaults_toml() -> String {
    toml::to_string(&RunConfig::default()).expect("defaults serialize")
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]`.
fn line_of_key(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Collector<'a> {
    src: Option<&'a str>,
    out: Vec<Diagnostic>,
}

impl Collector<'_> {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        let (section, key) = field.split_once('.').unwrap_or(("", field));
        self.out.push(Diagnostic {
            line: self.src.and_then(|s| line_of_key(s, section, key)),
            field: field.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, field: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.push(field, format!("must be positive and finite, got {v}"));
        }
    }
}

fn square(m: &[Vec<f64>]) -> Option<usize> {
    let n = m.len();
    (n > 0 && m.iter().all(|r| r.len() == n && r.iter().all(|v| v.is_finite()))).then_some(n)
}

impl RunConfig {
    /// Field-level problems; empty when the config is valid.
    pub fn diagnostics(&self, src: Option<&str>) -> Vec<Diagnostic> {
        let mut c = Collector { src, out: Vec::new() };
        let m = &self.model;
        if !MODEL_KINDS.contains(&m.kind.as_str()) {
            c.push(
                "model.kind",
                format!(
                    "unknown model kind '{}' (valid kinds: {})",
                    m.kind,
                    MODEL_KINDS.join(", ")
                ),
            );
        }
        match m.kind.as_str() {
            "ou1d" => {
                c.positive("model.a", m.a);
                c.positive("model.q", m.q);
            }
            "heat" => c.positive("model.kappa", m.kappa),
            "ou-nd" => match (square(&m.drift), square(&m.diffusion)) {
                (Some(n), Some(k)) if n == k && n <= 4 => {}
                (Some(n), Some(k)) if n == k => c.push("model.drift", format!("dimension {n} exceeds 4")),
                (Some(_), Some(_)) => c.push("model.diffusion", "must match the shape of model.drift"),
                (None, _) => c.push("model.drift", "must be a nonempty square matrix"),
                (_, None) => c.push("model.diffusion", "must be a nonempty square matrix"),
            },
            "elliptic1d" => {
                for (key, src) in [("model.q_fn", &m.q_fn), ("model.b_fn", &m.b_fn)] {
                    if let Err(e) = Expr::parse(src) {
                        c.push(key, e.to_string());
                    }
                }
            }
            "periodic" => {
                c.positive("model.period", m.period);
                if !m.c.is_finite() {
                    c.push("model.c", "must be finite");
                }
            }
            _ => {}
        }
        if matches!(m.kind.as_str(), "elliptic1d" | "periodic") {
            let s = &m.domain_schedule;
            if s.is_empty()
                || !(s[0] > 0.0)
                || s.windows(2).any(|p| !(p[1] > p[0]))
                || s.iter().any(|v| !v.is_finite())
            {
                c.push("model.domain_schedule", "must be positive and strictly increasing");
            }
            c.positive("model.truncation_tol", m.truncation_tol);
            c.positive("model.time_step", m.time_step);
        }

        let g = &self.grid;
        c.positive("grid.half_width", g.half_width);
        c.positive("grid.spacing", g.spacing);
        if g.spacing > 0.0 && g.half_width > 0.0 && g.spacing >= g.half_width {
            c.push("grid.spacing", "must be below grid.half_width");
        }
        if let Err(e) = g.extension.parse::<Extension>() {
            c.push("grid.extension", e);
        }
        if let Err(e) = parse_interpolation(&g.interpolation) {
            c.push("grid.interpolation", e);
        }

        let q = &self.quadrature;
        if let Err(e) = q.rule.parse::<Rule>() {
            c.push("quadrature.rule", e);
        }
        c.positive("quadrature.dt", q.dt);
        if q.t_max <= q.dt {
            c.push("quadrature.t_max", format!("must exceed quadrature.dt = {}", q.dt));
        }
        if !(2..=256).contains(&q.gh_order) {
            c.push("quadrature.gh_order", format!("must lie in 2..=256, got {}", q.gh_order));
        }
        if !(q.growth >= 0.0 && q.growth.is_finite()) {
            c.push("quadrature.growth", format!("must be nonnegative, got {}", q.growth));
        }

        let t = &self.task;
        if let Some(k) = &t.kind {
            if !TASK_KINDS.contains(&k.as_str()) {
                c.push(
                    "task.kind",
                    format!("unknown task '{k}' (valid tasks: {})", TASK_KINDS.join(", ")),
                );
            }
        }
        if let Err(e) = Expr::parse(&t.field) {
            c.push("task.field", e.to_string());
        }
        if t.t.is_empty() || t.t.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            c.push("task.t", "must be a nonempty list of positive times");
        }
        if !(t.r_max >= 16.0 && t.r_max.is_finite()) {
            c.push("task.r_max", format!("must be at least 16, got {}", t.r_max));
        }
        c.positive("task.lambda_min", t.lambda_min);
        if !(t.lambda_max > t.lambda_min && t.lambda_max.is_finite()) {
            c.push("task.lambda_max", "must exceed task.lambda_min");
        }
        c.positive("task.window", t.window);
        if t.window > g.half_width && g.half_width > 0.0 {
            c.push(
                "task.window",
                format!(
                    "window exceeds domain (R = {} > L = {})",
                    t.window, g.half_width
                ),
            );
        }
        c.positive("task.tol", t.tol);
        if let Some(e) = &t.expect {
            const EXPECT: [&str; 6] = ["converged", "oscillating", "inconclusive", "exists", "none", "pass"];
            if !EXPECT.contains(&e.as_str()) {
                c.push("task.expect", format!("unknown outcome '{e}' (valid: {})", EXPECT.join(", ")));
            }
        }
        if !(1..=MAX_COUNTEREXAMPLE_N).contains(&t.max_n) {
            c.push("task.max_n", format!("must lie in 1..={MAX_COUNTEREXAMPLE_N}, got {}", t.max_n));
        }
        if t.suite != "all" && !SUITES.contains(&t.suite.as_str()) {
            c.push(
                "task.suite",
                format!("unknown suite '{}' (valid: all, {})", t.suite, SUITES.join(", ")),
            );
        }
        for (key, src) in [("task.kernel", &t.kernel), ("task.target", &t.target)] {
            if let Err(e) = crate::run::kernel_spec(src) {
                c.push(key, e.to_string());
            }
        }
        if t.xi.iter().any(|v| !v.is_finite()) {
            c.push("task.xi", "must be finite");
        }
        if t.dilations.is_empty() || t.dilations.contains(&0) {
            c.push("task.dilations", "must be a nonempty list of positive counts");
        }
        if t.s.is_empty() || t.s.iter().any(|v| !v.is_finite()) {
            c.push("task.s", "must be a nonempty list of finite times");
        }
        if t.periods_max == 0 {
            c.push("task.periods_max", "must be positive");
        }

        for fmt in &self.output.formats {
            if fmt != "csv" && fmt != "json" {
                c.push("output.formats", format!("unknown format '{fmt}' (valid: csv, json)"));
            }
        }
        c.out
    }

    pub fn validate(&self) -> Result<(), ParseError> {
        let diagnostics = self.diagnostics(None);
        if diagnostics.is_empty() {
            Ok(())
        } else {
            Err(ParseError { diagnostics })
        }
    }

    pub fn quadrature_spec(&self) -> QuadratureSpec {
        let q = &self.quadrature;
        QuadratureSpec {
            rule: q.rule.parse().unwrap_or(Rule::Simpson),
            dt: q.dt,
            t_max: q.t_max,
            gh_order: q.gh_order,
            growth: q.growth,
        }
    }

    pub fn extension(&self) -> Extension {
        self.grid.extension.parse().unwrap_or_default()
    }

    pub fn interpolation(&self) -> Interpolation {
        parse_interpolation(&self.grid.interpolation).unwrap_or_default()
    }

    pub fn wants(&self, format: &str) -> bool {
        self.output.formats.iter().any(|f| f == format)
    }
}

fn parse_interpolation(s: &str) -> Result<Interpolation, String> {
    match s {
        "linear" => Ok(Interpolation::Linear),
        "cubic" => Ok(Interpolation::Cubic),
        other => Err(format!("unknown interpolation '{other}' (expected linear, cubic)")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(parse_config_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn defaults_round_trip() {
        assert_eq!(parse_config_str(&defaults_toml()).unwrap(), RunConfig::default());
    }

    #[test]
    fn minimal_ou_config_fills_defaults() {
        let cfg = parse_config_str("[model]\nkind = \"ou1d\"\na = 2.0\n").unwrap();
        assert_eq!(cfg.model.a, 2.0);
        assert_eq!(cfg.model.q, 1.0);
        assert_eq!(cfg.grid, GridSection::default());
        assert_eq!(cfg.task.window, 5.0);
    }

    #[test]
    fn window_beyond_domain_is_rejected_with_line() {
        let src = "[grid]\nhalf_width = 20.0\n\n[task]\nwindow = 30.0\n";
        let err = parse_config_str(src).unwrap_err();
        assert_eq!(err.diagnostics.len(), 1);
        let d = &err.diagnostics[0];
        assert_eq!(d.field, "task.window");
        assert_eq!(d.line, Some(5));
        assert!(d.message.contains("window exceeds domain"));
    }

    #[test]
    fn unknown_model_kind_lists_valid_kinds() {
        let err = parse_config_str("[model]\nkind = \"brownian\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("brownian"));
        for k in MODEL_KINDS {
            assert!(msg.contains(k), "{msg}");
        }
        assert_eq!(err.diagnostics[0].line, Some(2));
    }

    #[test]
    fn unknown_keys_and_bad_toml_report_lines() {
        let err = parse_config_str("[grid]\nhalfwidth = 3\n").unwrap_err();
        assert_eq!(err.diagnostics[0].line, Some(2));
        let err = parse_config_str("[task]\ntol = = 1\n").unwrap_err();
        assert_eq!(err.diagnostics[0].line, Some(2));
    }

    #[test]
    fn several_diagnostics_are_collected() {
        let src = "[quadrature]\ndt = -1\ngh_order = 1\n[task]\nfield = \"x +\"\n";
        let err = parse_config_str(src).unwrap_err();
        let fields: Vec<&str> = err.diagnostics.iter().map(|d| d.field.as_str()).collect();
        assert!(fields.contains(&"quadrature.dt"));
        assert!(fields.contains(&"quadrature.gh_order"));
        assert!(fields.contains(&"task.field"));
    }

    #[test]
    fn ou_nd_shapes_are_checked() {
        let err = parse_config_str("[model]\nkind = \"ou-nd\"\ndrift = [[-1.0, 0.0]]\n").unwrap_err();
        assert_eq!(err.diagnostics[0].field, "model.drift");
    }
}
