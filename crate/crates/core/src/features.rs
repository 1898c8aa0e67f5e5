//! Feature maps `T` used inside the SE-T and IMQ-T kernels.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::ground::GroundKernel;
use crate::linalg::sym_eigen;
use crate::mesh::{dot_weighted, same_mesh, FunctionSample, FunctionSet, Mesh};

/// Eigenpairs `(λₙ, eₙ)` with `eₙ` orthonormal in the mesh inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    eigenfunctions: FunctionSet,
}

impl SpectralBasis {
    pub fn new(eigenvalues: Vec<f64>, eigenfunctions: FunctionSet) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.len() != eigenfunctions.len() {
            return Err(invalid(format!(
                "{} eigenvalues for {} eigenfunctions",
                eigenvalues.len(),
                eigenfunctions.len()
            )));
        }
        if eigenvalues.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(invalid("eigenvalues must be positive and finite"));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(invalid("eigenvalues must be sorted descending"));
        }
        let w = eigenfunctions.mesh().weights();
        for (i, ei) in eigenfunctions.iter().enumerate() {
            for (j, ej) in eigenfunctions.iter().enumerate().skip(i) {
                let ip = dot_weighted(w, ei.values(), ej.values());
                let target = if i == j { 1.0 } else { 0.0 };
                if (ip - target).abs() > 1e-8 {
                    return Err(invalid(format!(
                        "eigenfunctions {i} and {j} are not orthonormal (inner product {ip})"
                    )));
                }
            }
        }
        Ok(SpectralBasis {
            eigenvalues,
            eigenfunctions,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &FunctionSet {
        &self.eigenfunctions
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.eigenfunctions.mesh()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `⟨x, eₙ⟩` for every basis function.
    pub fn coefficients(&self, x: &FunctionSample) -> Result<Vec<f64>> {
        if !same_mesh(x.mesh(), self.mesh()) {
            return Err(Error::IncompatibleMesh);
        }
        let w = self.mesh().weights();
        Ok(self
            .eigenfunctions
            .iter()
            .map(|e| dot_weighted(w, x.values(), e.values()))
            .collect())
    }

    /// `Σ λₙ^{1/2}⟨x, eₙ⟩ eₙ`
    fn apply(&self, x: &FunctionSample) -> Result<FunctionSample> {
        let coef = self.coefficients(x)?;
        let mut out = vec![0.0; x.len()];
        for ((c, l), e) in coef.iter().zip(&self.eigenvalues).zip(self.eigenfunctions.iter()) {
            let s = c * l.sqrt();
            for (o, v) in out.iter_mut().zip(e.values()) {
                *o += s * v;
            }
        }
        Ok(FunctionSample::from_parts_unchecked(self.mesh().clone(), out))
    }

    /// Operator `Σ λₙ^{1/2} eₙ⊗eₙ` in quadrature coordinates.
    fn matrix(&self) -> DMatrix<f64> {
        let sw = self.mesh().sqrt_weights();
        let n = sw.len();
        let mut m = DMatrix::zeros(n, n);
        for (l, e) in self.eigenvalues.iter().zip(self.eigenfunctions.iter()) {
            let u = DVector::from_iterator(n, e.values().iter().zip(&sw).map(|(v, s)| v * s));
            m += (&u * u.transpose()) * l.sqrt();
        }
        m
    }
}

/// Discretised integral operator acting on mesh values as `x ↦ A·x`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralOperator {
    ground: Option<GroundKernel>,
    mesh: Arc<Mesh>,
    action: DMatrix<f64>,
    symmetric: DMatrix<f64>,
}

impl IntegralOperator {
    pub fn from_ground(ground: GroundKernel, mesh: Arc<Mesh>) -> Result<Self> {
        ground.validate()?;
        let (action, symmetric) = ground.covariance_operator_matrix(&mesh);
        Ok(IntegralOperator {
            ground: Some(ground),
            mesh,
            action,
            symmetric,
        })
    }

    /// From a symmetric kernel matrix `K[i][j] = k(tᵢ, tⱼ)` on `mesh`.
    pub fn from_kernel_matrix(k: &DMatrix<f64>, mesh: Arc<Mesh>) -> Result<Self> {
        if k.nrows() != mesh.len() || k.ncols() != mesh.len() {
            return Err(invalid("kernel matrix does not match mesh size"));
        }
        let (action, symmetric) = crate::ground::operator_forms(k, &mesh);
        Ok(IntegralOperator {
            ground: None,
            mesh,
            action,
            symmetric,
        })
    }

    pub fn ground(&self) -> Option<GroundKernel> {
        self.ground
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// `A = K·W`
    pub fn action(&self) -> &DMatrix<f64> {
        &self.action
    }

    /// `W^{1/2}·K·W^{1/2}`
    pub fn symmetric(&self) -> &DMatrix<f64> {
        &self.symmetric
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    Identity,
    /// `x ↦ Σ λₙ^{1/2}⟨x, eₙ⟩ eₙ`
    Spectral(SpectralBasis),
    /// `x ↦ C_{k₀} x`, no square root.
    IntegralOp(IntegralOperator),
    /// `x ↦ (x, x²)` into the direct sum `L² ⊕ L²`.
    Square,
    /// Empirical principal components, applied like `Spectral`.
    Fpca { basis: SpectralBasis, var_fraction: f64 },
}

/// `T(x)`: one part, or two for `Square`.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedSample {
    pub parts: Vec<FunctionSample>,
}

impl FeatureMap {
    pub fn integral_op(ground: GroundKernel, mesh: Arc<Mesh>) -> Result<Self> {
        Ok(FeatureMap::IntegralOp(IntegralOperator::from_ground(ground, mesh)?))
    }

    pub fn n_parts(&self) -> usize {
        match self {
            FeatureMap::Square => 2,
            _ => 1,
        }
    }

    /// Whether the map is linear in `x`.
    pub fn is_linear(&self) -> bool {
        !matches!(self, FeatureMap::Square)
    }

    fn check_mesh(&self, mesh: &Arc<Mesh>) -> Result<()> {
        let own = match self {
            FeatureMap::Spectral(b) | FeatureMap::Fpca { basis: b, .. } => b.mesh(),
            FeatureMap::IntegralOp(op) => op.mesh(),
            FeatureMap::Identity | FeatureMap::Square => return Ok(()),
        };
        if same_mesh(own, mesh) {
            Ok(())
        } else {
            Err(Error::IncompatibleMesh)
        }
    }

    pub fn apply(&self, x: &FunctionSample) -> Result<MappedSample> {
        self.check_mesh(x.mesh())?;
        let parts = match self {
            FeatureMap::Identity => vec![x.clone()],
            FeatureMap::Spectral(b) | FeatureMap::Fpca { basis: b, .. } => vec![b.apply(x)?],
            FeatureMap::IntegralOp(op) => {
                let v = op.action() * DVector::from_column_slice(x.values());
                vec![FunctionSample::from_parts_unchecked(
                    x.mesh().clone(),
                    v.iter().copied().collect(),
                )]
            }
            FeatureMap::Square => vec![x.clone(), x.map(|v| v * v)],
        };
        Ok(MappedSample { parts })
    }

    /// Euclidean coordinates of each part of `T(x)`: the Euclidean distance
    /// between embeddings equals the L² distance between mapped samples.
    ///
    /// Spectral maps embed into their `F` coefficients, everything else into
    /// quadrature coordinates `W^{1/2}·v`.
    pub fn embed(&self, x: &FunctionSample) -> Result<Vec<Vec<f64>>> {
        self.check_mesh(x.mesh())?;
        match self {
            FeatureMap::Spectral(b) | FeatureMap::Fpca { basis: b, .. } => {
                let coef = b.coefficients(x)?;
                Ok(vec![coef
                    .iter()
                    .zip(b.eigenvalues())
                    .map(|(c, l)| c * l.sqrt())
                    .collect()])
            }
            _ => Ok(self
                .apply(x)?
                .parts
                .iter()
                .map(|p| p.quadrature_coords())
                .collect()),
        }
    }

    /// `Σ_p ‖T(x)_p − T(y)_p‖² / γ_p²`
    pub fn mapped_sq_distance(
        &self,
        x: &FunctionSample,
        y: &FunctionSample,
        bandwidths: &[f64],
    ) -> Result<f64> {
        check_bandwidths(self, bandwidths)?;
        if !same_mesh(x.mesh(), y.mesh()) {
            return Err(Error::IncompatibleMesh);
        }
        let ex = self.embed(x)?;
        let ey = self.embed(y)?;
        Ok(scaled_sq_distance(&ex, &ey, bandwidths))
    }

    /// Matrix of a linear map in quadrature coordinates, `W^{1/2}·M·W^{-1/2}`.
    /// This is the form the Gaussian closed-form formulas expect.
    pub fn matrix(&self, mesh: &Arc<Mesh>) -> Result<DMatrix<f64>> {
        self.check_mesh(mesh)?;
        match self {
            FeatureMap::Identity => Ok(DMatrix::identity(mesh.len(), mesh.len())),
            FeatureMap::Spectral(b) | FeatureMap::Fpca { basis: b, .. } => Ok(b.matrix()),
            FeatureMap::IntegralOp(op) => Ok(op.symmetric().clone()),
            FeatureMap::Square => Err(invalid("the square map is not linear")),
        }
    }
}

pub(crate) fn check_bandwidths(t: &FeatureMap, bandwidths: &[f64]) -> Result<()> {
    if bandwidths.len() != t.n_parts() {
        return Err(invalid(format!(
            "expected {} bandwidth(s), got {}",
            t.n_parts(),
            bandwidths.len()
        )));
    }
    if bandwidths.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
        return Err(invalid("bandwidths must be positive and finite"));
    }
    Ok(())
}

pub(crate) fn euclid_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn scaled_sq_distance(a: &[Vec<f64>], b: &[Vec<f64>], bandwidths: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(bandwidths)
        .map(|((pa, pb), g)| euclid_sq(pa, pb) / (g * g))
        .sum()
}

/// Empirical functional principal components of a pooled sample.
///
/// Centres on the pooled mean, uses the `1/(n−1)` covariance and keeps the
/// smallest number of components explaining `var_fraction` of the variance.
pub fn fit_fpca(pool: &FunctionSet, var_fraction: f64) -> Result<FeatureMap> {
    if !(var_fraction > 0.0 && var_fraction <= 1.0) {
        return Err(invalid(format!(
            "var_fraction must lie in (0, 1], got {var_fraction}"
        )));
    }
    let n = pool.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "FPCA needs at least 2 samples, got {n}"
        )));
    }
    let mesh = pool.mesh().clone();
    let m = mesh.len();
    let mean = pool.mean()?;
    let sw = mesh.sqrt_weights();
    let u = DMatrix::from_fn(n, m, |i, j| {
        sw[j] * (pool.get(i).values()[j] - mean.values()[j])
    });
    let scale = pool.iter().map(|x| x.norm_sq()).sum::<f64>() / n as f64;
    let denom = (n - 1) as f64;

    // Eigenpairs of B = UᵀU/(n−1), via the smaller of the two Gram forms.
    let (values, vectors) = if n < m {
        let g = (&u * u.transpose()) / denom;
        let (mu, a) = sym_eigen(&g);
        let mut vecs = Vec::new();
        for (k, &l) in mu.iter().enumerate() {
            if l <= 0.0 {
                break;
            }
            vecs.push(u.tr_mul(&a.column(k)) / (denom * l).sqrt());
        }
        // Small eigenvalues lose orthogonality in the dual map; restore it.
        let vecs = if vecs.is_empty() {
            vecs
        } else {
            let q = DMatrix::from_columns(&vecs).qr().q();
            (0..vecs.len()).map(|k| q.column(k).into_owned()).collect()
        };
        (mu[..vecs.len()].to_vec(), vecs)
    } else {
        let b = u.tr_mul(&u) / denom;
        let (vals, vecs) = sym_eigen(&b);
        let cols = (0..m).map(|k| vecs.column(k).into_owned()).collect();
        (vals, cols)
    };

    let top = values.first().copied().unwrap_or(0.0);
    if !(top > 1e-12 * scale.max(1.0)) {
        return Err(Error::DegenerateSpectrum);
    }
    let kept: Vec<f64> = values.iter().copied().take_while(|&l| l > 1e-12 * top).collect();
    let total: f64 = kept.iter().sum();
    let mut f = kept.len();
    let mut acc = 0.0;
    for (k, l) in kept.iter().enumerate() {
        acc += l;
        if acc >= var_fraction * total * (1.0 - 1e-12) {
            f = k + 1;
            break;
        }
    }

    let mut functions = Vec::with_capacity(f);
    for v in vectors.iter().take(f) {
        let pivot = v.iter().copied().fold(0.0f64, |best, x| {
            if x.abs() > best.abs() {
                x
            } else {
                best
            }
        });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        let vals = v.iter().zip(&sw).map(|(x, s)| sign * x / s).collect();
        functions.push(FunctionSample::from_parts_unchecked(mesh.clone(), vals));
    }
    let basis = SpectralBasis::new(kept[..f].to_vec(), FunctionSet::new(mesh, functions)?)?;
    Ok(FeatureMap::Fpca {
        basis,
        var_fraction,
    })
}
