//! Bounded continuous functions sampled on truncated boxes, together with the
//! window seminorms `p_R(f) = sup_{|x|_inf <= R} |f(x)|` that realise the
//! topology of uniform convergence on compact sets.
//!
//! A [`SampledField`] carries its grid and node values; an [`Extension`]
//! policy fixes evaluation outside the box.

mod grid;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use grid::{Axis, Extension, Grid, Interpolation};

use crate::error::{Error, Result};
use crate::report::fmt_sig;

/// Radius of the compact cube `[-R, R]^N` defining one seminorm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactWindow {
    pub radius: f64,
}

impl CompactWindow {
    pub fn new(radius: f64) -> Self {
        Self { radius }
    }

    pub fn check(&self, half_width: f64) -> Result<()> {
        if self.radius > half_width * (1.0 + 1e-12) || !(self.radius >= 0.0) {
            return Err(Error::WindowExceedsDomain {
                radius: self.radius,
                half_width,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SampledField {
    grid: Arc<Grid>,
    values: Vec<f64>,
    extension: Extension,
    interpolation: Interpolation,
    sup_bound: f64,
}

impl SampledField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>, extension: Extension) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let sup_bound = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(Self {
            grid,
            values,
            extension,
            interpolation: Interpolation::default(),
            sup_bound,
        })
    }

    pub fn from_fn(
        grid: Arc<Grid>,
        extension: Extension,
        f: impl Fn(&[f64]) -> f64 + Sync,
    ) -> Result<Self> {
        use rayon::prelude::*;
        let dim = grid.dim();
        let values = (0..grid.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; dim],
                |x, i| {
                    grid.node_into(i, x);
                    f(x)
                },
            )
            .collect();
        Self::new(grid, values, extension)
    }

    pub fn constant(grid: Arc<Grid>, extension: Extension, c: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![c; n], extension)
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    /// Same grid, extension and interpolation, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Ok(Self::new(self.grid.clone(), values, self.extension)?
            .with_interpolation(self.interpolation))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn half_width(&self) -> f64 {
        self.grid.half_width()
    }

    pub fn spacing(&self) -> Option<f64> {
        self.grid.spacing()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_bound
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max |f|` over the grid nodes inside the window.
    pub fn seminorm(&self, window: CompactWindow) -> Result<f64> {
        window.check(self.half_width())?;
        Ok(self
            .grid
            .window_indices(window.radius)
            .into_iter()
            .fold(0.0_f64, |m, i| m.max(self.values[i].abs())))
    }

    /// Values at the window nodes, in grid order.
    pub fn window_values(&self, window: CompactWindow) -> Result<Vec<f64>> {
        window.check(self.half_width())?;
        Ok(self
            .grid
            .window_indices(window.radius)
            .into_iter()
            .map(|i| self.values[i])
            .collect())
    }

    pub fn min_on_window(&self, window: CompactWindow) -> Result<f64> {
        Ok(self
            .window_values(window)?
            .into_iter()
            .fold(f64::INFINITY, f64::min))
    }

    pub fn value_at_origin(&self) -> f64 {
        self.eval(&vec![0.0; self.dim()])
    }

    pub fn is_compatible(&self, other: &SampledField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid)
    }

    fn check_compatible(&self, other: &SampledField) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch("fields live on different grids".into()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &SampledField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_compatible(other)?;
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn sub(&self, other: &SampledField) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &SampledField) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        self.map(|v| c * v)
    }

    /// `p_w(self - other)`.
    pub fn distance(&self, other: &SampledField, window: CompactWindow) -> Result<f64> {
        self.check_compatible(other)?;
        window.check(self.half_width())?;
        Ok(self
            .grid
            .window_indices(window.radius)
            .into_iter()
            .fold(0.0_f64, |m, i| m.max((self.values[i] - other.values[i]).abs())))
    }

    /// Maps a coordinate into the box according to the extension policy;
    /// `None` means the point evaluates to zero.
    fn fold_coord(&self, x: f64) -> Option<f64> {
        let l = self.half_width();
        if (-l..=l).contains(&x) {
            return Some(x);
        }
        match self.extension {
            Extension::ConstantExtend => Some(x.clamp(-l, l)),
            Extension::ZeroExtend => None,
            Extension::Periodic => Some(-l + (x + l).rem_euclid(2.0 * l)),
        }
    }

    /// Interpolation stencil along one axis: up to four (index, weight) pairs.
    fn stencil(&self, axis: &Axis, x: f64, out: &mut [(usize, f64); 4]) -> usize {
        let c = axis.coords();
        let n = c.len();
        let i = axis.locate(x);
        let linear = |out: &mut [(usize, f64); 4]| {
            let t = (x - c[i]) / (c[i + 1] - c[i]);
            out[0] = (i, 1.0 - t);
            out[1] = (i + 1, t);
            2
        };
        if self.interpolation == Interpolation::Linear || n < 4 {
            return linear(out);
        }
        let periodic = self.extension == Extension::Periodic;
        let width = 2.0 * axis.half_width();
        // node j of the stencil as (storage index, coordinate)
        let node = |j: isize| -> (usize, f64) {
            if !periodic {
                let j = j as usize;
                return (j, c[j]);
            }
            let m = (n - 1) as isize;
            let wraps = j.div_euclid(m);
            let r = j.rem_euclid(m) as usize;
            (r, c[r] + wraps as f64 * width)
        };
        let start: isize = if periodic {
            i as isize - 1
        } else {
            (i as isize - 1).clamp(0, n as isize - 4)
        };
        let pts: [(usize, f64); 4] = [node(start), node(start + 1), node(start + 2), node(start + 3)];
        for a in 0..4 {
            let mut w = 1.0;
            for b in 0..4 {
                if a != b {
                    w *= (x - pts[b].1) / (pts[a].1 - pts[b].1);
                }
            }
            out[a] = (pts[a].0, w);
        }
        4
    }

    /// Evaluates the field at an arbitrary point (interpolation inside the box,
    /// extension policy outside).
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        if self.dim() == 1 {
            return self.eval1(x[0]);
        }
        let dim = self.dim();
        let mut sten = [[(0usize, 0.0f64); 4]; 8];
        let mut lens = [0usize; 8];
        assert!(dim <= 8, "fields are limited to 8 dimensions");
        for k in 0..dim {
            let Some(xk) = self.fold_coord(x[k]) else {
                return 0.0;
            };
            let mut s = [(0usize, 0.0); 4];
            lens[k] = self.stencil(self.grid.axis(k), xk, &mut s);
            sten[k] = s;
        }
        let strides = self.grid.strides();
        let mut pos = [0usize; 8];
        let mut acc = 0.0;
        loop {
            let mut w = 1.0;
            let mut idx = 0;
            for k in 0..dim {
                let (i, wk) = sten[k][pos[k]];
                w *= wk;
                idx += i * strides[k];
            }
            acc += w * self.values[idx];
            let mut k = dim;
            loop {
                if k == 0 {
                    return acc;
                }
                k -= 1;
                pos[k] += 1;
                if pos[k] < lens[k] {
                    break;
                }
                pos[k] = 0;
            }
        }
    }

    pub fn eval1(&self, x: f64) -> f64 {
        let Some(x) = self.fold_coord(x) else {
            return 0.0;
        };
        let mut s = [(0usize, 0.0); 4];
        let n = self.stencil(self.grid.axis(0), x, &mut s);
        s[..n].iter().map(|&(i, w)| w * self.values[i]).sum()
    }

    fn require_linear_1d(&self) -> Result<()> {
        if self.dim() != 1 || self.interpolation != Interpolation::Linear {
            return Err(Error::Unsupported(
                "exact segment integration needs a 1-D linearly interpolated field".into(),
            ));
        }
        Ok(())
    }

    /// Visits the linear pieces of a 1-D linear field on `[a, b]` as
    /// `(x0, x1, f(x0), f(x1))`, including the extension outside the box.
    fn for_each_piece(&self, a: f64, b: f64, mut visit: impl FnMut(f64, f64, f64, f64)) {
        let c = self.grid.axis(0).coords();
        let l = self.half_width();
        match self.extension {
            Extension::Periodic => {
                // unroll periods so every piece stays inside one copy of the box
                let width = 2.0 * l;
                let mut k = ((a + l) / width).floor();
                loop {
                    let off = k * width;
                    let lo = a.max(-l + off);
                    let hi = b.min(l + off);
                    if lo < hi {
                        self.pieces_in_box(c, lo - off, hi - off, |x0, x1, f0, f1| {
                            visit(x0 + off, x1 + off, f0, f1)
                        });
                    }
                    if l + off >= b {
                        break;
                    }
                    k += 1.0;
                }
            }
            ext => {
                let outside = |x0: f64, x1: f64, edge: f64, visit: &mut dyn FnMut(f64, f64, f64, f64)| {
                    if x0 < x1 {
                        let v = if ext == Extension::ZeroExtend { 0.0 } else { edge };
                        visit(x0, x1, v, v);
                    }
                };
                outside(a, b.min(-l), self.values[0], &mut visit);
                let lo = a.max(-l);
                let hi = b.min(l);
                if lo < hi {
                    self.pieces_in_box(c, lo, hi, &mut visit);
                }
                outside(a.max(l), b, *self.values.last().unwrap(), &mut visit);
            }
        }
    }

    fn pieces_in_box(&self, c: &[f64], lo: f64, hi: f64, mut visit: impl FnMut(f64, f64, f64, f64)) {
        let mut i = self.grid.axis(0).locate(lo);
        let mut x0 = lo;
        let mut f0 = self.eval1(lo);
        while x0 < hi {
            let x1 = c[i + 1].min(hi);
            let f1 = if x1 == c[i + 1] {
                self.values[i + 1]
            } else {
                self.eval1(x1)
            };
            if x1 > x0 {
                visit(x0, x1, f0, f1);
            }
            x0 = x1;
            f0 = f1;
            i += 1;
            if i + 1 >= c.len() {
                break;
            }
        }
    }

    /// Exact `∫_a^b f` for a 1-D linearly interpolated field.
    pub fn integrate_exact(&self, a: f64, b: f64) -> Result<f64> {
        self.require_linear_1d()?;
        if b < a {
            return Ok(-self.integrate_exact(b, a)?);
        }
        let mut acc = 0.0;
        self.for_each_piece(a, b, |x0, x1, f0, f1| acc += 0.5 * (f0 + f1) * (x1 - x0));
        Ok(acc)
    }

    /// Exact `∫_0^horizon e^{-λt} f(x + t) dt` for a 1-D linearly interpolated field.
    pub fn laplace_exact(&self, x: f64, lambda: f64, horizon: f64) -> Result<f64> {
        self.require_linear_1d()?;
        let mut acc = 0.0;
        self.for_each_piece(x, x + horizon, |x0, x1, f0, f1| {
            let (t0, t1) = (x0 - x, x1 - x);
            if !(t1 > t0) {
                return;
            }
            let e0 = (-lambda * t0).exp();
            let e1 = (-lambda * t1).exp();
            let i0 = (e0 - e1) / lambda;
            let i1 = (t0 * e0 - t1 * e1) / lambda + i0 / lambda;
            let slope = (f1 - f0) / (t1 - t0);
            acc += f0 * i0 + slope * (i1 - t0 * i0);
        });
        Ok(acc)
    }

    /// CSV with header `x1,...,xN,value`.
    pub fn to_csv(&self) -> String {
        let dim = self.dim();
        let mut out = String::new();
        for k in 1..=dim {
            out.push_str(&format!("x{k},"));
        }
        out.push_str("value\n");
        let mut x = vec![0.0; dim];
        for (i, v) in self.values.iter().enumerate() {
            self.grid.node_into(i, &mut x);
            for c in &x {
                out.push_str(&fmt_sig(*c));
                out.push(',');
            }
            out.push_str(&fmt_sig(*v));
            out.push('\n');
        }
        out
    }

    pub fn metadata(&self) -> FieldMetadata {
        FieldMetadata {
            dim: self.dim(),
            half_width: self.half_width(),
            spacing: self.spacing(),
            extension: self.extension,
            interpolation: self.interpolation,
            nodes: self.grid.len(),
        }
    }
}

/// Sidecar describing a serialized field.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FieldMetadata {
    pub dim: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "h")]
    pub spacing: Option<f64>,
    pub extension: Extension,
    pub interpolation: Interpolation,
    pub nodes: usize,
}
