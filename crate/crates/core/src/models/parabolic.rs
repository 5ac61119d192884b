//! θ-scheme for `u_t = q(s,x) u_xx + b(s,x) u_x` on `[-L, L]` with absorbing
//! (zero Dirichlet) boundaries. Shared by the elliptic Feller model and the
//! stepped periodic evolution operator.

use crate::error::{Error, Result};

/// Second-order coefficient and drift as functions of `(s, x)`.
pub(crate) trait Coefficients: Sync {
    fn q(&self, s: f64, x: f64) -> f64;
    fn b(&self, s: f64, x: f64) -> f64;
    fn time_dependent(&self) -> bool;
}

/// Tridiagonal spatial operator on interior nodes `1..n-1`.
#[derive(Debug, Clone)]
pub(crate) struct Tridiag {
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ThetaScheme {
    pub half_width: f64,
    pub h: f64,
    pub theta: f64,
    pub dt: f64,
    nodes: usize,
}

impl ThetaScheme {
    pub fn new(half_width: f64, h: f64, theta: f64, dt: f64) -> Result<Self> {
        let cells = (2.0 * half_width / h).round();
        if (cells * h - 2.0 * half_width).abs() > 1e-9 * half_width.max(1.0) || cells < 3.0 {
            return Err(Error::SpacingMismatch {
                spacing: h,
                width: 2.0 * half_width,
            });
        }
        if !(0.0..=1.0).contains(&theta) || !(dt > 0.0) {
            return Err(Error::InvalidModel(format!(
                "theta must lie in [0, 1] and dt be positive (theta = {theta}, dt = {dt})"
            )));
        }
        Ok(Self {
            half_width,
            h,
            theta,
            dt,
            nodes: cells as usize + 1,
        })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.h
    }

    /// Index of the scheme node closest to `x`.
    #[cfg(test)]
    pub fn index_of(&self, x: f64) -> usize {
        ((x + self.half_width) / self.h).round() as usize
    }

    pub fn operator(&self, coeffs: &dyn Coefficients, s: f64) -> Result<Tridiag> {
        let n = self.nodes;
        let h = self.h;
        let mut lo = vec![0.0; n];
        let mut di = vec![0.0; n];
        let mut up = vec![0.0; n];
        for j in 1..n - 1 {
            let x = self.x(j);
            let q = coeffs.q(s, x);
            let b = coeffs.b(s, x);
            if !(q > 0.0) || !q.is_finite() || !b.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "diffusion coefficient must be positive and finite, got q({x}) = {q}"
                )));
            }
            let d = q / (h * h);
            // central drift while the cell Péclet number allows it, upwind beyond
            let (l, u) = if b.abs() * h <= 2.0 * q {
                (d - b / (2.0 * h), d + b / (2.0 * h))
            } else if b > 0.0 {
                (d, d + b / h)
            } else {
                (d - b / h, d)
            };
            lo[j] = l;
            up[j] = u;
            di[j] = -(l + u);
        }
        Ok(Tridiag { lo, di, up })
    }

    /// One step `(I - θ dt L) u' = (I + (1-θ) dt L) u`.
    pub fn step(&self, u: &mut [f64], op: &Tridiag, dt: f64, theta: f64) {
        let n = self.nodes;
        let ex = (1.0 - theta) * dt;
        let mut rhs = vec![0.0; n];
        for j in 1..n - 1 {
            rhs[j] = u[j] + ex * (op.lo[j] * u[j - 1] + op.di[j] * u[j] + op.up[j] * u[j + 1]);
        }
        let im = theta * dt;
        // Thomas algorithm on interior unknowns, zero boundary values
        let m = n - 2;
        let mut c = vec![0.0; m];
        let mut d = vec![0.0; m];
        for k in 0..m {
            let j = k + 1;
            let a = -im * op.lo[j];
            let bdiag = 1.0 - im * op.di[j];
            let cu = -im * op.up[j];
            let denom = if k == 0 { bdiag } else { bdiag - a * c[k - 1] };
            c[k] = cu / denom;
            d[k] = if k == 0 {
                rhs[j] / denom
            } else {
                (rhs[j] - a * d[k - 1]) / denom
            };
        }
        u[n - 1] = 0.0;
        u[0] = 0.0;
        let mut next = 0.0;
        for k in (0..m).rev() {
            let v = d[k] - c[k] * next;
            u[k + 1] = v;
            next = v;
        }
    }

    /// Transpose of [`step`]: `u ← (I + (1-θ) dt L)^T (I - θ dt L)^{-T} u`.
    pub fn step_transpose(&self, u: &mut [f64], op: &Tridiag, dt: f64, theta: f64) {
        let n = self.nodes;
        let im = theta * dt;
        let m = n - 2;
        // transposed implicit matrix: sub-diagonal row k is -im*up[j-1], super is -im*lo[j+1]
        let mut c = vec![0.0; m];
        let mut d = vec![0.0; m];
        for k in 0..m {
            let j = k + 1;
            let a = if k == 0 { 0.0 } else { -im * op.up[j - 1] };
            let bdiag = 1.0 - im * op.di[j];
            let cu = if k + 1 == m { 0.0 } else { -im * op.lo[j + 1] };
            let denom = if k == 0 { bdiag } else { bdiag - a * c[k - 1] };
            c[k] = cu / denom;
            d[k] = if k == 0 { u[j] / denom } else { (u[j] - a * d[k - 1]) / denom };
        }
        let mut y = vec![0.0; n];
        let mut next = 0.0;
        for k in (0..m).rev() {
            let v = d[k] - c[k] * next;
            y[k + 1] = v;
            next = v;
        }
        let ex = (1.0 - theta) * dt;
        for j in 1..n - 1 {
            let mut acc = y[j] * (1.0 + ex * op.di[j]);
            if j > 1 {
                acc += ex * op.up[j - 1] * y[j - 1];
            }
            if j + 2 < n {
                acc += ex * op.lo[j + 1] * y[j + 1];
            }
            u[j] = acc;
        }
        u[0] = 0.0;
        u[n - 1] = 0.0;
    }

    /// Evolves `u` from time `s` to `t`. With `smooth_start`, the first two
    /// steps are replaced by four implicit half-steps to damp the start-up
    /// oscillations of Crank–Nicolson on rough data.
    pub fn evolve(
        &self,
        u: &mut [f64],
        coeffs: &dyn Coefficients,
        s: f64,
        t: f64,
        smooth_start: bool,
        cached: Option<&Tridiag>,
    ) -> Result<()> {
        if t <= s {
            return Ok(());
        }
        let steps = ((t - s) / self.dt - 1e-9).ceil().max(1.0) as usize;
        let dt = (t - s) / steps as f64;
        let mut time = s;
        let mut local;
        for k in 0..steps {
            let op = match cached {
                Some(op) if !coeffs.time_dependent() => op,
                _ => {
                    local = self.operator(coeffs, time + 0.5 * dt)?;
                    &local
                }
            };
            if smooth_start && k < 2 && self.theta < 1.0 {
                self.step(u, op, 0.5 * dt, 1.0);
                self.step(u, op, 0.5 * dt, 1.0);
            } else {
                self.step(u, op, dt, self.theta);
            }
            time += dt;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Ou;
    impl Coefficients for Ou {
        fn q(&self, _: f64, _: f64) -> f64 {
            1.0
        }
        fn b(&self, _: f64, x: f64) -> f64 {
            -x
        }
        fn time_dependent(&self) -> bool {
            false
        }
    }

    #[test]
    fn matches_ou_closed_form_in_interior() {
        let scheme = ThetaScheme::new(12.0, 0.05, 0.5, 1e-3).unwrap();
        let mut u: Vec<f64> = (0..scheme.nodes()).map(|j| scheme.x(j).powi(2)).collect();
        let n = u.len();
        u[0] = 0.0;
        u[n - 1] = 0.0;
        scheme.evolve(&mut u, &Ou, 0.0, 0.5, true, None).unwrap();
        let e = (-1.0f64).exp();
        for x in [-2.0, 0.0, 1.0, 2.0] {
            let j = scheme.index_of(x);
            let exact = e * x * x + 1.0 - e;
            assert!((u[j] - exact).abs() < 2e-3, "x = {x}: {} vs {exact}", u[j]);
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let scheme = ThetaScheme::new(2.0, 0.25, 0.5, 0.01).unwrap();
        let op = scheme.operator(&Ou, 0.0).unwrap();
        let n = scheme.nodes();
        let f: Vec<f64> = (0..n).map(|j| if j == 0 || j == n - 1 { 0.0 } else { (j as f64).sin() }).collect();
        let g: Vec<f64> = (0..n).map(|j| if j == 0 || j == n - 1 { 0.0 } else { (j as f64 * 0.7).cos() }).collect();
        let mut sf = f.clone();
        scheme.step(&mut sf, &op, 0.01, 0.5);
        let mut tg = g.clone();
        scheme.step_transpose(&mut tg, &op, 0.01, 0.5);
        let lhs: f64 = sf.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = f.iter().zip(&tg).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }
}
