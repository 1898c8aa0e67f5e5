//! Small dense symmetric linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    max_abs(&(m - m.transpose())) <= rel_tol * scale
}

/// Symmetric and eigenvalues ≥ `−1e−8 · max|λ|`.
pub(crate) fn check_psd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if !is_symmetric(m, 1e-8) {
        return Err(Error::InvalidOperator(format!("{name} is not symmetric")));
    }
    let (vals, _) = sym_eigen(m);
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if let Some(&min) = vals.last() {
        if min < -1e-8 * top.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidOperator(format!(
                "{name} has negative eigenvalue {min:e}"
            )));
        }
    }
    Ok(())
}

/// `‖AB − BA‖_max < 1e−8 · ‖A‖_max ‖B‖_max`.
pub(crate) fn commute(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let c = a * b - b * a;
    let scale = (max_abs(a) * max_abs(b) * a.nrows() as f64).max(f64::MIN_POSITIVE);
    max_abs(&c) < 1e-8 * scale
}

/// Symmetric PSD square root, negative eigenvalues clipped at zero.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let d = DVector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0).sqrt()));
    &vecs * DMatrix::from_diagonal(&d) * vecs.transpose()
}

/// Spectral factorisation of a symmetric positive-definite matrix, used for
/// log-determinants and quadratic forms in the closed-form formulas.
pub(crate) struct SpdFactor {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl SpdFactor {
    pub(crate) fn new(m: &DMatrix<f64>) -> Result<Self> {
        let (values, vectors) = sym_eigen(m);
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::NumericalFailure(
                "matrix expected to be positive definite".into(),
            ));
        }
        Ok(SpdFactor { values, vectors })
    }

    pub(crate) fn log_det(&self) -> f64 {
        self.values.iter().map(|v| v.ln()).sum()
    }

    /// `⟨M⁻¹ u, v⟩`.
    pub(crate) fn inv_form(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let pu = self.vectors.tr_mul(u);
        let pv = self.vectors.tr_mul(v);
        pu.iter()
            .zip(pv.iter())
            .zip(&self.values)
            .map(|((a, b), l)| a * b / l)
            .sum()
    }

    pub(crate) fn solve(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut pu = self.vectors.tr_mul(u);
        for (p, l) in pu.iter_mut().zip(&self.values) {
            *p /= l;
        }
        &self.vectors * pu
    }
}

/// `log det(I + M)` for symmetric PSD `M`, summed in the log domain.
pub(crate) fn log_det_i_plus(m: &DMatrix<f64>) -> Result<f64> {
    let (vals, _) = sym_eigen(m);
    let mut acc = 0.0;
    for v in vals {
        let x = 1.0 + v;
        if !(x > 0.0) {
            return Err(Error::InvalidOperator(format!(
                "I + M is singular or indefinite (eigenvalue {v:e})"
            )));
        }
        acc += v.ln_1p();
    }
    Ok(acc)
}

pub(crate) fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}
