//! Kernels on function space, Gram matrices and the median heuristic.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::features::{check_bandwidths, fit_fpca, scaled_sq_distance, FeatureMap, SpectralBasis};
use crate::ground::GroundKernel;
use crate::mesh::{same_mesh, FunctionSample, FunctionSet};
use crate::seed::child_rng;

/// Scalar feature `Φ` of a random-feature kernel.
#[derive(Debug, Clone, Copy)]
pub enum FeatureFn {
    Cos,
    Sin,
    /// `(cos, sin)` stacked, so that `Φ(a)·Φ(b) = cos(a − b)`.
    CosSin,
    Custom(fn(f64) -> f64),
}

impl PartialEq for FeatureFn {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (FeatureFn::Custom(a), FeatureFn::Custom(b)) => std::ptr::fn_addr_eq(*a, *b),
            _ => std::mem::discriminant(self) == std::mem::discriminant(other),
        }
    }
}

impl FeatureFn {
    fn width(&self) -> usize {
        match self {
            FeatureFn::CosSin => 2,
            _ => 1,
        }
    }

    fn push(&self, z: f64, out: &mut Vec<f64>) {
        match self {
            FeatureFn::Cos => out.push(z.cos()),
            FeatureFn::Sin => out.push(z.sin()),
            FeatureFn::CosSin => {
                out.push(z.cos());
                out.push(z.sin());
            }
            FeatureFn::Custom(f) => out.push(f(z)),
        }
    }
}

/// `k(x, y) = (1/n_S) Σ_l Φ(Σ_i λ_i^{1/2} x_i η_i^l)·Φ(Σ_j λ_j^{1/2} y_j η_j^l)`
/// with `x_i = ⟨x, e_i⟩` and `η` standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatureKernel {
    basis: SpectralBasis,
    n_features: usize,
    feature: FeatureFn,
    seed: u64,
    /// Row `l` holds `λ_i^{1/2} η_i^l`.
    directions: DMatrix<f64>,
}

impl RandomFeatureKernel {
    pub fn new(basis: SpectralBasis, n_features: usize, feature: FeatureFn, seed: u64) -> Result<Self> {
        if n_features == 0 {
            return Err(invalid("random-feature kernels need n_features ≥ 1"));
        }
        let dim = basis.len();
        let rows: Vec<Vec<f64>> = (0..n_features)
            .into_par_iter()
            .map(|l| {
                let mut rng = child_rng(seed, l as u64);
                basis
                    .eigenvalues()
                    .iter()
                    .map(|lam| {
                        let eta: f64 = StandardNormal.sample(&mut rng);
                        lam.sqrt() * eta
                    })
                    .collect()
            })
            .collect();
        let directions = DMatrix::from_fn(n_features, dim, |l, i| rows[l][i]);
        Ok(RandomFeatureKernel {
            basis,
            n_features,
            feature,
            seed,
            directions,
        })
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Feature vector `φ(x)` with `k(x, y) = ⟨φ(x), φ(y)⟩`.
    pub fn features(&self, x: &FunctionSample) -> Result<Vec<f64>> {
        let coef = nalgebra::DVector::from_vec(self.basis.coefficients(x)?);
        let z = &self.directions * coef;
        let scale = (self.n_features as f64).sqrt().recip();
        let mut out = Vec::with_capacity(self.n_features * self.feature.width());
        for v in z.iter() {
            self.feature.push(*v, &mut out);
        }
        out.iter_mut().for_each(|v| *v *= scale);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `exp(−½ Σ_p ‖T(x)_p − T(y)_p‖²/γ_p²)`
    SeT { map: FeatureMap, bandwidths: Vec<f64> },
    /// `(Σ_p ‖T(x)_p − T(y)_p‖²/γ_p² + 1)^{−1/2}`
    ImqT { map: FeatureMap, bandwidths: Vec<f64> },
    /// `⟨x, y⟩²`
    Cov,
    RandomFeature(RandomFeatureKernel),
}

/// Precomputed per-sample representation used to fill Gram matrices.
enum Embedded {
    Parts(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl KernelSpec {
    pub fn se_t(map: FeatureMap, bandwidths: Vec<f64>) -> Result<Self> {
        check_bandwidths(&map, &bandwidths)?;
        Ok(KernelSpec::SeT { map, bandwidths })
    }

    pub fn imq_t(map: FeatureMap, bandwidths: Vec<f64>) -> Result<Self> {
        check_bandwidths(&map, &bandwidths)?;
        Ok(KernelSpec::ImqT { map, bandwidths })
    }

    /// SE-T with each bandwidth set by the median heuristic on `X ∪ Y`.
    pub fn se_t_median(map: FeatureMap, x: &FunctionSet, y: &FunctionSet) -> Result<Self> {
        let g2 = median_heuristic(&map, x, y)?;
        KernelSpec::se_t(map, g2.iter().map(|v| v.sqrt()).collect())
    }

    pub fn map(&self) -> Option<&FeatureMap> {
        match self {
            KernelSpec::SeT { map, .. } | KernelSpec::ImqT { map, .. } => Some(map),
            _ => None,
        }
    }

    pub fn bandwidths(&self) -> Option<&[f64]> {
        match self {
            KernelSpec::SeT { bandwidths, .. } | KernelSpec::ImqT { bandwidths, .. } => {
                Some(bandwidths)
            }
            _ => None,
        }
    }

    fn embed(&self, x: &FunctionSample) -> Result<Embedded> {
        match self {
            KernelSpec::SeT { map, .. } | KernelSpec::ImqT { map, .. } => {
                Ok(Embedded::Parts(map.embed(x)?))
            }
            KernelSpec::Cov => Ok(Embedded::Flat(x.quadrature_coords())),
            KernelSpec::RandomFeature(rf) => Ok(Embedded::Flat(rf.features(x)?)),
        }
    }

    fn eval_embedded(&self, a: &Embedded, b: &Embedded) -> f64 {
        match (self, a, b) {
            (KernelSpec::SeT { bandwidths, .. }, Embedded::Parts(a), Embedded::Parts(b)) => {
                (-0.5 * scaled_sq_distance(a, b, bandwidths)).exp()
            }
            (KernelSpec::ImqT { bandwidths, .. }, Embedded::Parts(a), Embedded::Parts(b)) => {
                (scaled_sq_distance(a, b, bandwidths) + 1.0).sqrt().recip()
            }
            (KernelSpec::Cov, Embedded::Flat(a), Embedded::Flat(b)) => {
                let d: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
                d * d
            }
            (KernelSpec::RandomFeature(_), Embedded::Flat(a), Embedded::Flat(b)) => {
                a.iter().zip(b).map(|(p, q)| p * q).sum()
            }
            _ => unreachable!("embedding does not match kernel variant"),
        }
    }

    pub fn eval(&self, x: &FunctionSample, y: &FunctionSample) -> Result<f64> {
        if !same_mesh(x.mesh(), y.mesh()) {
            return Err(Error::IncompatibleMesh);
        }
        Ok(self.eval_embedded(&self.embed(x)?, &self.embed(y)?))
    }

    /// Symmetric Gram matrix over one set. Each unordered pair is evaluated
    /// once, so the result is exactly symmetric.
    pub fn gram(&self, z: &FunctionSet) -> Result<DMatrix<f64>> {
        let emb = z.iter().map(|s| self.embed(s)).collect::<Result<Vec<_>>>()?;
        let n = emb.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i..n).map(|j| self.eval_embedded(&emb[i], &emb[j])).collect())
            .collect();
        let mut g = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            for (off, v) in row.iter().enumerate() {
                g[(i, i + off)] = *v;
                g[(i + off, i)] = *v;
            }
        }
        Ok(g)
    }

    /// Gram matrix of the pooled sample `X ∪ Y` (X first).
    pub fn pooled_gram(&self, x: &FunctionSet, y: &FunctionSet) -> Result<DMatrix<f64>> {
        if !same_mesh(x.mesh(), y.mesh()) {
            return Err(Error::IncompatibleMesh);
        }
        self.gram(&x.concat(y)?)
    }

    /// `(Kxx, Kyy, Kxy)`
    pub fn gram_matrices(
        &self,
        x: &FunctionSet,
        y: &FunctionSet,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let g = self.pooled_gram(x, y)?;
        Ok(split_pooled(&g, x.len()))
    }
}

pub(crate) fn split_pooled(
    g: &DMatrix<f64>,
    nx: usize,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let ny = g.nrows() - nx;
    (
        g.view((0, 0), (nx, nx)).into_owned(),
        g.view((nx, nx), (ny, ny)).into_owned(),
        g.view((0, nx), (nx, ny)).into_owned(),
    )
}

/// Median heuristic: for each part of `T`, the median of
/// `‖T(a)_p − T(b)_p‖²` over unordered pairs `a ≠ b` of `X ∪ Y`.
///
/// Returns `γ_p²`. Even pair counts take the midpoint of the central two.
/// A zero median (in particular, all samples identical) is an error.
pub fn median_heuristic(map: &FeatureMap, x: &FunctionSet, y: &FunctionSet) -> Result<Vec<f64>> {
    if !same_mesh(x.mesh(), y.mesh()) {
        return Err(Error::IncompatibleMesh);
    }
    let emb = x
        .iter()
        .chain(y.iter())
        .map(|s| map.embed(s))
        .collect::<Result<Vec<_>>>()?;
    let n = emb.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "median heuristic needs at least 2 samples, got {n}"
        )));
    }
    let mut out = Vec::with_capacity(map.n_parts());
    for p in 0..map.n_parts() {
        let mut d: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                d.push(crate::features::euclid_sq(&emb[i][p], &emb[j][p]));
            }
        }
        let med = median(&mut d);
        if !(med > 0.0) {
            return Err(Error::DegenerateBandwidth);
        }
        out.push(med);
    }
    Ok(out)
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, hi, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let hi = *hi;
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Named kernel constructions used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelRecipe {
    /// SE-T with `T = I`.
    Id,
    /// SE-T with `T = C_{k₀}`, `k₀` cosine-exponential with 20 frequencies and `l = √10`.
    Cexp,
    Cov,
    /// SE-T with `T(x) = (x, x²)` and one bandwidth per part.
    Sqr,
    /// SE-T with `T` from principal components explaining 95% of the pooled variance.
    Fpca,
}

impl KernelRecipe {
    pub const ALL: [KernelRecipe; 5] = [
        KernelRecipe::Id,
        KernelRecipe::Cexp,
        KernelRecipe::Cov,
        KernelRecipe::Sqr,
        KernelRecipe::Fpca,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            KernelRecipe::Id => "ID",
            KernelRecipe::Cexp => "CEXP",
            KernelRecipe::Cov => "COV",
            KernelRecipe::Sqr => "SQR",
            KernelRecipe::Fpca => "FPCA",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        KernelRecipe::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown kernel '{s}'")))
    }

    /// Builds the kernel for one test, fitting any data-dependent parts on
    /// the pooled sample.
    pub fn build(&self, x: &FunctionSet, y: &FunctionSet) -> Result<KernelSpec> {
        let map = match self {
            KernelRecipe::Cov => return Ok(KernelSpec::Cov),
            KernelRecipe::Id => FeatureMap::Identity,
            KernelRecipe::Sqr => FeatureMap::Square,
            KernelRecipe::Cexp => FeatureMap::integral_op(
                GroundKernel::cosine_exponential(20, 10f64.sqrt())?,
                x.mesh().clone(),
            )?,
            KernelRecipe::Fpca => fit_fpca(&x.concat(y)?, 0.95)?,
        };
        KernelSpec::se_t_median(map, x, y)
    }
}

impl std::fmt::Display for KernelRecipe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
