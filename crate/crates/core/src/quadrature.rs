//! Time quadrature for the Riemann integrals of semigroup orbits and
//! Gauss–Hermite rules for Gaussian expectations.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::hermite::GaussHermite;
use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::SampledField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Midpoint,
    Simpson,
    /// Gauss–Legendre with `k` nodes per panel.
    GaussLegendre(usize),
}

impl std::str::FromStr for Rule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "midpoint" => Ok(Rule::Midpoint),
            "simpson" => Ok(Rule::Simpson),
            other => {
                let k = other
                    .strip_prefix("gauss-legendre(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k > 0);
                k.map(Rule::GaussLegendre).ok_or_else(|| {
                    format!(
                        "unknown rule '{other}' (expected midpoint, simpson, gauss-legendre(k))"
                    )
                })
            }
        }
    }
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rule::Midpoint => write!(f, "midpoint"),
            Rule::Simpson => write!(f, "simpson"),
            Rule::GaussLegendre(k) => write!(f, "gauss-legendre({k})"),
        }
    }
}

/// Quadrature settings shared by all orbit integrals.
///
/// Panels have width `dt * (1 + growth * t)`; `growth = 0` gives a uniform mesh.
/// Graded meshes make long Cesàro and Laplace horizons affordable for orbits
/// that settle down exponentially.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: Rule,
    pub dt: f64,
    pub t_max: f64,
    pub gh_order: usize,
    #[serde(default)]
    pub growth: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rule: Rule::Simpson,
            dt: 1e-3,
            t_max: 50.0,
            gh_order: 32,
            growth: 0.0,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidQuadrature(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.dt < self.t_max) {
            return Err(Error::InvalidQuadrature(format!(
                "dt = {} must be below t_max = {}",
                self.dt, self.t_max
            )));
        }
        if self.gh_order < 2 {
            return Err(Error::InvalidQuadrature(format!(
                "gh_order must be at least 2, got {}",
                self.gh_order
            )));
        }
        if !(self.growth >= 0.0 && self.growth.is_finite()) {
            return Err(Error::InvalidQuadrature(format!(
                "growth must be nonnegative, got {}",
                self.growth
            )));
        }
        if let Rule::GaussLegendre(0) = self.rule {
            return Err(Error::InvalidQuadrature("gauss-legendre needs k >= 1".into()));
        }
        Ok(())
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_rule(mut self, rule: Rule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_growth(mut self, growth: f64) -> Self {
        self.growth = growth;
        self
    }

    pub fn with_gh_order(mut self, order: usize) -> Self {
        self.gh_order = order;
        self
    }
}

/// One distinct quadrature time; `parts` holds `(weight, panel_end)` for each
/// panel the node belongs to.
#[derive(Debug, Clone)]
pub struct MeshNode {
    pub t: f64,
    pub parts: Vec<(f64, f64)>,
}

impl MeshNode {
    /// Total weight contributed to integrals that stop at `end`.
    pub fn weight_until(&self, end: f64) -> f64 {
        let cut = end + 1e-12 * end.abs().max(1.0);
        self.parts
            .iter()
            .filter(|(_, e)| *e <= cut)
            .map(|(w, _)| w)
            .sum()
    }
}

/// Composite quadrature on `[0, end]` whose panel boundaries include every
/// requested breakpoint, so cumulative sums give exact checkpoint integrals.
#[derive(Debug, Clone)]
pub struct TimeMesh {
    nodes: Vec<MeshNode>,
    end: f64,
}

impl TimeMesh {
    pub fn new(end: f64, breakpoints: &[f64], spec: &QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        if !(end > 0.0) {
            return Err(Error::NonPositiveInterval(end));
        }
        let mut cuts: Vec<f64> = breakpoints
            .iter()
            .copied()
            .filter(|&b| b > 0.0 && b < end)
            .collect();
        cuts.push(end);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut panels = Vec::new();
        let mut a = 0.0;
        for &b in &cuts {
            push_panels(a, b, spec, &mut panels);
            a = b;
        }

        let rule_nodes = rule_nodes(spec.rule);
        let mut nodes: Vec<MeshNode> = Vec::new();
        for (p0, p1) in panels {
            let half = 0.5 * (p1 - p0);
            let mid = 0.5 * (p0 + p1);
            for &(xi, w) in rule_nodes.iter() {
                let t = if xi == -1.0 {
                    p0
                } else if xi == 1.0 {
                    p1
                } else {
                    mid + half * xi
                };
                let weight = half * w;
                match nodes.last_mut() {
                    Some(last) if last.t == t => last.parts.push((weight, p1)),
                    _ => nodes.push(MeshNode {
                        t,
                        parts: vec![(weight, p1)],
                    }),
                }
            }
        }
        Ok(Self { nodes, end })
    }

    pub fn nodes(&self) -> &[MeshNode] {
        &self.nodes
    }

    pub fn times(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.t).collect()
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// Scalar quadrature of `g` on `[0, end]`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.weight_until(self.end) * g(n.t))
            .sum()
    }
}

fn push_panels(a: f64, b: f64, spec: &QuadratureSpec, out: &mut Vec<(f64, f64)>) {
    if spec.growth == 0.0 {
        let m = ((b - a) / spec.dt - 1e-9).ceil().max(1.0) as usize;
        let w = (b - a) / m as f64;
        for i in 0..m {
            let p0 = if i == 0 { a } else { a + i as f64 * w };
            let p1 = if i + 1 == m { b } else { a + (i + 1) as f64 * w };
            out.push((p0, p1));
        }
        return;
    }
    let mut t = a;
    loop {
        let w = spec.dt * (1.0 + spec.growth * t);
        let rest = b - t;
        if rest <= w {
            out.push((t, b));
            return;
        }
        if rest <= 1.5 * w {
            let m = t + 0.5 * rest;
            out.push((t, m));
            out.push((m, b));
            return;
        }
        out.push((t, t + w));
        t += w;
    }
}

type RuleCache = Mutex<HashMap<Rule, Arc<Vec<(f64, f64)>>>>;

/// Reference nodes and weights on `[-1, 1]`.
fn rule_nodes(rule: Rule) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut map = cache.lock().expect("rule cache");
    map.entry(rule)
        .or_insert_with(|| {
            Arc::new(match rule {
                Rule::Midpoint => vec![(0.0, 2.0)],
                Rule::Simpson => vec![(-1.0, 1.0 / 3.0), (0.0, 4.0 / 3.0), (1.0, 1.0 / 3.0)],
                Rule::GaussLegendre(k) => {
                    let gl = GaussLegendre::new(NonZeroUsize::new(k).expect("k >= 1"));
                    let mut v: Vec<(f64, f64)> =
                        gl.iter().map(|(x, w)| (*x, *w)).collect();
                    v.sort_by(|a, b| a.0.total_cmp(&b.0));
                    v
                }
            })
        })
        .clone()
}

/// Nodewise `∫_0^r curve(t) dt`.
pub fn riemann_integral(
    curve: impl Fn(f64) -> Result<SampledField>,
    r: f64,
    q: &QuadratureSpec,
) -> Result<SampledField> {
    if !(r > 0.0) {
        return Err(Error::NonPositiveInterval(r));
    }
    let mesh = TimeMesh::new(r, &[], q)?;
    let mut acc: Option<(SampledField, Vec<f64>)> = None;
    for node in mesh.nodes() {
        let w = node.weight_until(r);
        let field = curve(node.t)?;
        match acc.as_mut() {
            None => {
                let sums = field.values().iter().map(|v| w * v).collect();
                acc = Some((field, sums));
            }
            Some((proto, sums)) => {
                if !proto.is_compatible(&field) {
                    return Err(Error::GridMismatch("curve changed grid".into()));
                }
                for (s, v) in sums.iter_mut().zip(field.values()) {
                    *s += w * v;
                }
            }
        }
    }
    let (proto, sums) = acc.expect("mesh has nodes");
    proto.with_values(sums)
}

/// Gauss–Hermite rule for the standard normal law: `E g(Z) ≈ Σ w_i g(z_i)`.
#[derive(Debug, Clone)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NormalRule {
    pub fn get(order: usize) -> Arc<NormalRule> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<NormalRule>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut map = cache.lock().expect("hermite cache");
        map.entry(order)
            .or_insert_with(|| {
                let gh = GaussHermite::new(NonZeroUsize::new(order.max(1)).expect("order"));
                let mut pairs: Vec<(f64, f64)> = gh
                    .iter()
                    .map(|(x, w)| (std::f64::consts::SQRT_2 * x, w / std::f64::consts::PI.sqrt()))
                    .collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                // normalise away the rounding in Σw so constants are reproduced exactly
                let total: f64 = pairs.iter().map(|p| p.1).sum();
                Arc::new(NormalRule {
                    nodes: pairs.iter().map(|p| p.0).collect(),
                    weights: pairs.iter().map(|p| p.1 / total).collect(),
                })
            })
            .clone()
    }

    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * g(z))
            .sum()
    }

    /// Tensor-product points `(z, w)` for the standard normal law on `R^dim`.
    pub fn tensor(&self, dim: usize) -> Vec<(Vec<f64>, f64)> {
        let n = self.nodes.len();
        let total = n.pow(dim as u32);
        (0..total)
            .map(|mut idx| {
                let mut z = vec![0.0; dim];
                let mut w = 1.0;
                for k in (0..dim).rev() {
                    let i = idx % n;
                    idx /= n;
                    z[k] = self.nodes[i];
                    w *= self.weights[i];
                }
                (z, w)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Extension, Grid};
    use approx::assert_abs_diff_eq;

    fn unit_field() -> SampledField {
        let g = Arc::new(Grid::uniform(1, 1.0, 0.5).unwrap());
        SampledField::from_fn(g, Extension::ConstantExtend, |x| 1.0 + x[0] * x[0]).unwrap()
    }

    #[test]
    fn constant_curve() {
        let g = unit_field();
        let q = QuadratureSpec::default().with_dt(0.01);
        let out = riemann_integral(|_| Ok(g.clone()), 3.0, &q).unwrap();
        for (a, b) in out.values().iter().zip(g.values()) {
            assert_abs_diff_eq!(*a, 3.0 * b, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_curve_exact_for_simpson() {
        let g = unit_field();
        let q = QuadratureSpec::default().with_dt(0.3);
        let out = riemann_integral(|t| g.scale(t), 2.0, &q).unwrap();
        for (a, b) in out.values().iter().zip(g.values()) {
            assert_abs_diff_eq!(*a, 2.0 * b, epsilon = 1e-12);
        }
    }

    #[test]
    fn exponential_curve() {
        let g = unit_field();
        let q = QuadratureSpec::default().with_dt(0.01);
        let out = riemann_integral(|t| g.scale((-2.0 * t).exp()), 1.0, &q).unwrap();
        let exact = 0.432_332_358_381_693_65;
        for (a, b) in out.values().iter().zip(g.values()) {
            assert_abs_diff_eq!(*a, exact * b, epsilon = 1e-10);
        }
    }

    #[test]
    fn non_positive_interval() {
        let g = unit_field();
        let q = QuadratureSpec::default();
        assert_eq!(
            riemann_integral(|_| Ok(g.clone()), 0.0, &q).unwrap_err(),
            Error::NonPositiveInterval(0.0)
        );
    }

    #[test]
    fn mesh_honours_breakpoints() {
        let q = QuadratureSpec::default().with_dt(0.3).with_growth(0.5);
        let mesh = TimeMesh::new(10.0, &[1.0, 2.0, 4.0], &q).unwrap();
        let times = mesh.times();
        for b in [1.0, 2.0, 4.0, 10.0] {
            assert!(times.contains(&b), "missing breakpoint {b}");
        }
        for end in [1.0, 2.0, 4.0, 10.0] {
            let len: f64 = mesh.nodes().iter().map(|n| n.weight_until(end)).sum();
            assert_abs_diff_eq!(len, end, epsilon = 1e-12);
        }
    }

    #[test]
    fn gauss_legendre_panels() {
        let q = QuadratureSpec::default()
            .with_dt(0.5)
            .with_rule(Rule::GaussLegendre(4));
        let mesh = TimeMesh::new(3.0, &[], &q).unwrap();
        assert_abs_diff_eq!(mesh.integrate(|t| t.powi(7)), 3f64.powi(8) / 8.0, epsilon = 1e-9);
    }

    #[test]
    fn normal_rule_moments() {
        let r = NormalRule::get(20);
        assert_abs_diff_eq!(r.expect(|_| 1.0), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.expect(|z| z * z), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.expect(|z| z.powi(4)), 3.0, epsilon = 1e-11);
        assert_abs_diff_eq!(r.expect(f64::cos), (-0.5f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("gauss-legendre(5)".parse::<Rule>().unwrap(), Rule::GaussLegendre(5));
        assert!("trapezoid".parse::<Rule>().is_err());
    }
}
