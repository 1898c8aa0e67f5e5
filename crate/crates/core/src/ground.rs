//! Scalar kernels on the 1-D domain.
//!
//! These are the `k₀(s, t)` used as Gaussian-process covariances, as the
//! integral kernels behind `C_{k₀}` feature maps, and as interpolation
//! kernels for reconstruction.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroundKernel {
    /// `exp(−(s−t)²/(2l²))`
    SquaredExponential { lengthscale: f64 },
    /// `(1 + √3|s−t|/l)·exp(−√3|s−t|/l)`
    Matern15 { lengthscale: f64 },
    /// `Σ_{n<F} cos(2πn(s−t))`
    Cosine { n_freq: usize },
    /// Squared exponential times the cosine sum.
    CosineExponential { n_freq: usize, lengthscale: f64 },
    /// White noise, `1` on the diagonal and `0` elsewhere.
    Dirac,
}

impl GroundKernel {
    pub fn squared_exponential(lengthscale: f64) -> Result<Self> {
        let k = GroundKernel::SquaredExponential { lengthscale };
        k.validate()?;
        Ok(k)
    }

    pub fn matern15(lengthscale: f64) -> Result<Self> {
        let k = GroundKernel::Matern15 { lengthscale };
        k.validate()?;
        Ok(k)
    }

    pub fn cosine(n_freq: usize) -> Result<Self> {
        let k = GroundKernel::Cosine { n_freq };
        k.validate()?;
        Ok(k)
    }

    pub fn cosine_exponential(n_freq: usize, lengthscale: f64) -> Result<Self> {
        let k = GroundKernel::CosineExponential {
            n_freq,
            lengthscale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |l: f64| {
            if l > 0.0 && l.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("lengthscale must be positive, got {l}")))
            }
        };
        let freq = |f: usize| {
            if f >= 1 {
                Ok(())
            } else {
                Err(invalid("cosine kernels need at least one frequency"))
            }
        };
        match *self {
            GroundKernel::SquaredExponential { lengthscale }
            | GroundKernel::Matern15 { lengthscale } => pos(lengthscale),
            GroundKernel::Cosine { n_freq } => freq(n_freq),
            GroundKernel::CosineExponential {
                n_freq,
                lengthscale,
            } => freq(n_freq).and(pos(lengthscale)),
            GroundKernel::Dirac => Ok(()),
        }
    }

    /// `k₀(s, t)` with raw arguments.
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        let d = s - t;
        match *self {
            GroundKernel::SquaredExponential { lengthscale } => se(d, lengthscale),
            GroundKernel::Matern15 { lengthscale } => {
                let r = 3f64.sqrt() * d.abs() / lengthscale;
                (1.0 + r) * (-r).exp()
            }
            GroundKernel::Cosine { n_freq } => cosine_sum(d, n_freq),
            GroundKernel::CosineExponential {
                n_freq,
                lengthscale,
            } => se(d, lengthscale) * cosine_sum(d, n_freq),
            GroundKernel::Dirac => {
                if s == t {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `k₀` on a mesh interval. Cosine-type kernels count frequencies in
    /// cycles per interval, so their arguments are first mapped to `[0, 1]`.
    pub fn eval_on(&self, interval: (f64, f64), s: f64, t: f64) -> f64 {
        match self {
            GroundKernel::Cosine { .. } | GroundKernel::CosineExponential { .. } => {
                let (lo, hi) = interval;
                let len = hi - lo;
                self.eval((s - lo) / len, (t - lo) / len)
            }
            _ => self.eval(s, t),
        }
    }

    /// Gram matrix `K[i][j] = k₀(tᵢ, tⱼ)` on the mesh points.
    pub fn gram(&self, mesh: &Mesh) -> DMatrix<f64> {
        self.cross_gram(mesh.interval(), mesh.points(), mesh.points())
    }

    /// `K[i][j] = k₀(sᵢ, tⱼ)` evaluated on `interval`.
    pub fn cross_gram(&self, interval: (f64, f64), s: &[f64], t: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(s.len(), t.len(), |i, j| self.eval_on(interval, s[i], t[j]))
    }

    /// Discretised covariance operator `C_{k₀}`.
    ///
    /// Returns `(A, B)` with `A = K·W` the action on mesh values under the
    /// quadrature rule, and `B = W^{1/2}·K·W^{1/2}` its symmetric similar
    /// form. Spectra, traces and determinants are taken from `B`.
    pub fn covariance_operator_matrix(&self, mesh: &Mesh) -> (DMatrix<f64>, DMatrix<f64>) {
        let k = self.gram(mesh);
        operator_forms(&k, mesh)
    }
}

/// `(K·W, W^{1/2}·K·W^{1/2})` for a kernel matrix on `mesh`.
pub fn operator_forms(k: &DMatrix<f64>, mesh: &Mesh) -> (DMatrix<f64>, DMatrix<f64>) {
    let w = mesh.weights();
    let sw = mesh.sqrt_weights();
    let n = mesh.len();
    let a = DMatrix::from_fn(n, n, |i, j| k[(i, j)] * w[j]);
    let b = DMatrix::from_fn(n, n, |i, j| sw[i] * k[(i, j)] * sw[j]);
    (a, b)
}

fn se(d: f64, l: f64) -> f64 {
    (-d * d / (2.0 * l * l)).exp()
}

fn cosine_sum(d: f64, n_freq: usize) -> f64 {
    (0..n_freq).map(|n| (2.0 * PI * n as f64 * d).cos()).sum()
}
