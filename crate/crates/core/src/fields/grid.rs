use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const COORD_EPS: f64 = 1e-9;

/// One coordinate axis spanning `[-L, L]`, either uniformly spaced or with
/// explicit (strictly increasing) breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    coords: Vec<f64>,
    spacing: Option<f64>,
}

impl Axis {
    pub fn uniform(half_width: f64, spacing: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "half-width must be positive, got {half_width}"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::SpacingMismatch {
                spacing,
                width: 2.0 * half_width,
            });
        }
        let width = 2.0 * half_width;
        let cells = (width / spacing).round();
        if cells < 1.0 || (cells * spacing - width).abs() > 1e-9 * width.max(1.0) {
            return Err(Error::SpacingMismatch { spacing, width });
        }
        let n = cells as usize + 1;
        let coords = (0..n)
            .map(|i| {
                if i + 1 == n {
                    half_width
                } else {
                    -half_width + i as f64 * spacing
                }
            })
            .collect();
        Ok(Self {
            coords,
            spacing: Some(spacing),
        })
    }

    /// Explicit breakpoints; the first and last coordinate define `[-L, L]`.
    pub fn from_coords(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::GridMismatch("axis needs at least two nodes".into()));
        }
        if coords.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch(
                "axis coordinates must be strictly increasing".into(),
            ));
        }
        let lo = coords[0];
        let hi = coords[coords.len() - 1];
        if (lo + hi).abs() > COORD_EPS * hi.abs().max(1.0) {
            return Err(Error::GridMismatch(format!(
                "axis must be symmetric, got [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            coords,
            spacing: None,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn spacing(&self) -> Option<f64> {
        self.spacing
    }

    pub fn half_width(&self) -> f64 {
        self.coords[self.coords.len() - 1]
    }

    /// Cell index `i` such that `coords[i] <= x <= coords[i+1]`, for `x` in the box.
    pub(crate) fn locate(&self, x: f64) -> usize {
        let n = self.coords.len();
        let i = match self.spacing {
            Some(h) => ((x + self.half_width()) / h).floor() as isize,
            None => self.coords.partition_point(|&c| c <= x) as isize - 1,
        };
        i.clamp(0, n as isize - 2) as usize
    }

    /// Index range of nodes with `|x| <= radius`.
    pub(crate) fn window_range(&self, radius: f64) -> std::ops::Range<usize> {
        let lo = self.coords.partition_point(|&c| c < -radius - COORD_EPS);
        let hi = self.coords.partition_point(|&c| c <= radius + COORD_EPS);
        lo..hi
    }
}

/// Rectilinear grid on the box `[-L, L]^N`, nodes in row-major order
/// (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    half_width: f64,
    axes: Vec<Axis>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn uniform(dim: usize, half_width: f64, spacing: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::GridMismatch("dimension must be positive".into()));
        }
        let axis = Axis::uniform(half_width, spacing)?;
        Self::from_axes(vec![axis; dim])
    }

    pub fn from_axes(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::GridMismatch("grid needs at least one axis".into()));
        }
        let half_width = axes[0].half_width();
        if axes
            .iter()
            .any(|a| (a.half_width() - half_width).abs() > COORD_EPS * half_width.max(1.0))
        {
            return Err(Error::GridMismatch(
                "all axes must share the same half-width".into(),
            ));
        }
        let mut strides = vec![1; axes.len()];
        for k in (0..axes.len() - 1).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].len();
        }
        Ok(Self {
            half_width,
            axes,
            strides,
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    /// Uniform spacing shared by every axis, if there is one.
    pub fn spacing(&self) -> Option<f64> {
        let h = self.axes[0].spacing()?;
        self.axes
            .iter()
            .all(|a| a.spacing() == Some(h))
            .then_some(h)
    }

    pub fn len(&self) -> usize {
        self.strides[0] * self.axes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn multi_index(&self, mut index: usize, out: &mut [usize]) {
        for (k, &s) in self.strides.iter().enumerate() {
            out[k] = index / s;
            index %= s;
        }
    }

    pub fn node_into(&self, index: usize, out: &mut [f64]) {
        let mut rem = index;
        for (k, &s) in self.strides.iter().enumerate() {
            out[k] = self.axes[k].coords[rem / s];
            rem %= s;
        }
    }

    pub fn node(&self, index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.node_into(index, &mut out);
        out
    }

    /// Flat indices of the nodes inside the cube `[-R, R]^N`.
    pub fn window_indices(&self, radius: f64) -> Vec<usize> {
        let ranges: Vec<_> = self.axes.iter().map(|a| a.window_range(radius)).collect();
        if ranges.iter().any(|r| r.is_empty()) {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(ranges.iter().map(|r| r.len()).product());
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.start).collect();
        loop {
            out.push(idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum());
            let mut k = idx.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < ranges[k].end {
                    break;
                }
                idx[k] = ranges[k].start;
            }
        }
    }

    /// Grid with the outermost `ring` nodes removed from each side of every axis.
    pub fn interior(&self, ring: usize) -> Result<Self> {
        let axes = self
            .axes
            .iter()
            .map(|a| {
                if a.len() <= 2 * ring + 1 {
                    return Err(Error::GridMismatch("grid too small for interior".into()));
                }
                let coords = a.coords[ring..a.len() - ring].to_vec();
                match a.spacing {
                    Some(h) => Ok(Axis {
                        coords,
                        spacing: Some(h),
                    }),
                    None => Axis::from_coords(coords),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_axes(axes)
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || self == other
    }
}

/// Behaviour of a field outside its sampling box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Extension {
    #[default]
    ConstantExtend,
    ZeroExtend,
    Periodic,
}

impl Extension {
    pub fn name(self) -> &'static str {
        match self {
            Extension::ConstantExtend => "constant-extend",
            Extension::ZeroExtend => "zero-extend",
            Extension::Periodic => "periodic",
        }
    }
}

impl std::str::FromStr for Extension {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "constant-extend" | "constant" => Ok(Extension::ConstantExtend),
            "zero-extend" | "zero" => Ok(Extension::ZeroExtend),
            "periodic" => Ok(Extension::Periodic),
            other => Err(format!(
                "unknown extension '{other}' (expected constant-extend, zero-extend, periodic)"
            )),
        }
    }
}

/// Between-node reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    Linear,
    /// Four-point Lagrange; exact on cubic polynomials.
    #[default]
    Cubic,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_axis_counts_nodes() {
        let a = Axis::uniform(20.0, 0.01).unwrap();
        assert_eq!(a.len(), 4001);
        assert_eq!(a.coords()[0], -20.0);
        assert_eq!(a.coords()[4000], 20.0);
    }

    #[test]
    fn spacing_must_divide_width() {
        assert!(matches!(
            Axis::uniform(1.0, 0.3),
            Err(Error::SpacingMismatch { .. })
        ));
    }

    #[test]
    fn window_indices_2d() {
        let g = Grid::uniform(2, 2.0, 1.0).unwrap();
        let idx = g.window_indices(1.0);
        assert_eq!(idx.len(), 9);
        for i in idx {
            let x = g.node(i);
            assert!(x.iter().all(|c| c.abs() <= 1.0));
        }
    }

    #[test]
    fn interior_drops_ring() {
        let g = Grid::uniform(1, 1.0, 0.5).unwrap();
        let inner = g.interior(1).unwrap();
        assert_eq!(inner.axis(0).coords(), &[-0.5, 0.0, 0.5]);
        assert_eq!(inner.spacing(), Some(0.5));
    }
}
