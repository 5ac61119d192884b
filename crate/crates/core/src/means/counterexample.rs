use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fields::{Axis, Extension, Grid, Interpolation, SampledField};

/// Layout of the piecewise-linear field whose translation orbit has
/// non-convergent Cesàro means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSpec {
    /// Blocks `k = 0..=max_k` are resolved node by node; the ramp into block
    /// `max_k + 1` is included and its plateau continues by constant extension.
    pub max_k: u32,
    /// Near-field node spacing on `[-near, near]`.
    pub near_spacing: f64,
    pub near: f64,
}

impl Default for CounterexampleSpec {
    fn default() -> Self {
        Self {
            max_k: 7,
            near_spacing: 0.5,
            near: 20.0,
        }
    }
}

/// The piecewise definition: on block `k ≥ 0` a ramp from 0 to `(−1)^k` on
/// `[10^k − 1/2, 10^k)`, the plateau `(−1)^k` up to `10^{k+1} − 1`, and a ramp
/// back to 0 at `10^{k+1} − 1/2`; zero for `x < 1/2`.
pub fn counterexample_value(x: f64) -> f64 {
    if x < 0.5 {
        return 0.0;
    }
    // block index: largest k with 10^k − 1/2 ≤ x
    let mut k = ((x + 0.5).log10().floor() as i32).max(0);
    while 10f64.powi(k) - 0.5 > x {
        k -= 1;
    }
    while 10f64.powi(k + 1) - 0.5 <= x {
        k += 1;
    }
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    let p = 10f64.powi(k);
    let next = 10f64.powi(k + 1);
    if x < p {
        2.0 * sign * (x - p + 0.5)
    } else if x < next - 1.0 {
        sign
    } else {
        -2.0 * sign * (x - next + 0.5)
    }
}

/// Nonuniform field with nodes on every branch joint, linear interpolation and
/// constant extension beyond `L = 10^{max_k+1} + 1`.
pub fn counterexample_field(spec: CounterexampleSpec) -> Result<SampledField> {
    let mut pts = Vec::new();
    let steps = (spec.near / spec.near_spacing).round() as i64;
    for i in -steps..=steps {
        pts.push(i as f64 * spec.near_spacing);
    }
    for k in 0..=spec.max_k as i32 {
        let p = 10f64.powi(k);
        let next = 10f64.powi(k + 1);
        pts.extend([p - 0.5, p, next - 1.0, next - 0.5]);
    }
    let top = 10f64.powi(spec.max_k as i32 + 1);
    pts.extend([top, top + 1.0]);
    let positive: Vec<f64> = pts.iter().copied().filter(|&x| x > 0.0).collect();
    pts.extend(positive.iter().map(|x| -x));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let grid = Arc::new(Grid::from_axes(vec![Axis::from_coords(pts)?])?);
    Ok(
        SampledField::from_fn(grid, Extension::ConstantExtend, |x| counterexample_value(x[0]))?
            .with_interpolation(Interpolation::Linear),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::CompactWindow;

    #[test]
    fn branch_values() {
        assert_eq!(counterexample_value(0.0), 0.0);
        assert_eq!(counterexample_value(1.0), 1.0);
        assert_eq!(counterexample_value(10.0), -1.0);
        assert_eq!(counterexample_value(0.75), 0.5);
        assert_eq!(counterexample_value(9.25), 0.5);
        assert_eq!(counterexample_value(9.5), 0.0);
        assert_eq!(counterexample_value(9.75), -0.5);
        assert_eq!(counterexample_value(150.0), 1.0);
        assert_eq!(counterexample_value(-3.0), 0.0);
    }

    #[test]
    fn field_is_exact_at_nodes_and_continuous() {
        let f = counterexample_field(CounterexampleSpec::default()).unwrap();
        assert_eq!(f.value_at_origin(), 0.0);
        assert_eq!(f.eval1(1.0), 1.0);
        assert_eq!(f.eval1(10.0), -1.0);
        assert_eq!(f.eval1(5e7), -1.0);
        assert_eq!(f.eval1(2e8), 1.0);
        assert_eq!(f.seminorm(CompactWindow::new(10.0)).unwrap(), 1.0);
        for x in [0.6, 9.1, 9.9, 99.2, 99.6, 998.7, 4321.0] {
            assert!((f.eval1(x) - counterexample_value(x)).abs() < 1e-12, "x = {x}");
        }
        assert!(f.half_width() >= 1e4 + 1.0);
    }
}
