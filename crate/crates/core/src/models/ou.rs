use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Ornstein–Uhlenbeck data: drift matrix `B` and diffusion matrix `Q`
/// (the generator's second-order coefficients, so the noise has covariance `2Q`).
#[derive(Debug, Clone, PartialEq)]
pub struct OuNd {
    b: DMatrix<f64>,
    q: DMatrix<f64>,
}

impl OuNd {
    pub fn new(b: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        let n = b.nrows();
        if n == 0 || !b.is_square() || q.shape() != (n, n) {
            return Err(Error::InvalidModel(format!(
                "B is {}x{} and Q is {}x{}; both must be square of the same size",
                b.nrows(),
                b.ncols(),
                q.nrows(),
                q.ncols()
            )));
        }
        if b.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite matrix entry".into()));
        }
        if !is_spd(&q) {
            return Err(Error::NonSpdCovariance);
        }
        Ok(Self { b, q })
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn drift(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub(crate) fn coefficients_at(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let q = (0..n * n).map(|k| self.q[(k / n, k % n)]).collect();
        let drift = (0..n)
            .map(|i| (0..n).map(|j| self.b[(i, j)] * x[j]).sum())
            .collect();
        (q, drift)
    }

    /// `Σ_t = ∫_0^t e^{sB} (2Q) e^{sBᵀ} ds` by composite 8-point Gauss–Legendre.
    pub fn covariance(&self, t: f64) -> DMatrix<f64> {
        let n = self.dim();
        let scale = 1.0 + self.b.norm();
        let panels = ((t * scale * 4.0).ceil() as usize).max(1);
        let gl = GaussLegendre::new(NonZeroUsize::new(8).expect("nonzero"));
        let width = t / panels as f64;
        let two_q = &self.q * 2.0;
        let mut acc = DMatrix::zeros(n, n);
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * width;
            for (x, w) in gl.iter() {
                let s = mid + 0.5 * width * x;
                let e = (&self.b * s).exp();
                acc += (&e * &two_q * e.transpose()) * (0.5 * width * w);
            }
        }
        0.5 * (&acc + acc.transpose())
    }

    /// `(e^{tB}, L)` with `L Lᵀ = Σ_t`.
    pub(crate) fn transition(&self, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let flow = (&self.b * t).exp();
        let cov = self.covariance(t);
        let chol = cov.cholesky().ok_or(Error::NonSpdCovariance)?;
        Ok((flow, chol.l()))
    }
}

pub(crate) fn is_spd(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return false;
            }
        }
    }
    m.clone().symmetric_eigenvalues().iter().all(|&l| l > 0.0)
}
