//! Gaussian processes on a mesh and exact formulas for SE-T kernels.
//!
//! Operators are matrices in quadrature coordinates `u = W^{1/2}x`, where
//! the mesh inner product is Euclidean. A covariance matrix `Σ` on mesh
//! values becomes `W^{1/2} Σ W^{1/2}`; a linear feature map with bandwidth
//! `γ` becomes `FeatureMap::matrix / γ`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::ground::GroundKernel;
use crate::kernels::KernelSpec;
use crate::linalg::{check_psd, commute, identity, log_det_i_plus, sqrt_psd, symmetrize, SpdFactor};
use crate::mesh::{FunctionSample, FunctionSet, Mesh};
use crate::seed::rng_from_seed;

/// Law of `mean + N(0, Σ)` on mesh values.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    mean: FunctionSample,
    covariance: DMatrix<f64>,
    jitter: f64,
}

impl GaussianSpec {
    /// Default jitter is `1e−10 · tr(Σ)/N`, or `1e−10` when the trace is zero.
    pub fn new(mean: FunctionSample, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if covariance.shape() != (n, n) {
            return Err(invalid(format!(
                "covariance is {:?} but the mesh has {n} points",
                covariance.shape()
            )));
        }
        check_psd(&covariance, "covariance")?;
        let tr = covariance.trace();
        let jitter = if tr > 0.0 { 1e-10 * tr / n as f64 } else { 1e-10 };
        Ok(GaussianSpec {
            mean,
            covariance,
            jitter,
        })
    }

    /// `GP(mean, k₀)` restricted to the mean's mesh.
    pub fn from_ground(mean: FunctionSample, ground: GroundKernel) -> Result<Self> {
        ground.validate()?;
        let k = ground.gram(mean.mesh());
        GaussianSpec::new(mean, k)
    }

    pub fn with_jitter(mut self, jitter: f64) -> Result<Self> {
        if !(jitter > 0.0 && jitter.is_finite()) {
            return Err(invalid(format!("jitter must be positive, got {jitter}")));
        }
        self.jitter = jitter;
        Ok(self)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.mean.mesh()
    }

    pub fn mean(&self) -> &FunctionSample {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Covariance operator in quadrature coordinates, `W^{1/2} Σ W^{1/2}`.
    pub fn operator(&self) -> DMatrix<f64> {
        let sw = self.mesh().sqrt_weights();
        let n = sw.len();
        DMatrix::from_fn(n, n, |i, j| sw[i] * self.covariance[(i, j)] * sw[j])
    }

    /// Mean in quadrature coordinates.
    pub fn mean_coords(&self) -> DVector<f64> {
        DVector::from_vec(self.mean.quadrature_coords())
    }

    /// Factorises `Σ + jitter·I`, multiplying the jitter by 10 up to three
    /// times if the factorisation fails.
    pub fn sampler(&self) -> Result<GpSampler> {
        let n = self.mean.len();
        let mut jitter = self.jitter;
        for _ in 0..4 {
            let m = &self.covariance + DMatrix::identity(n, n) * jitter;
            if let Some(ch) = Cholesky::new(m) {
                return Ok(GpSampler {
                    mean: self.mean.clone(),
                    factor: ch.l(),
                });
            }
            jitter *= 10.0;
        }
        Err(Error::NumericalFailure(format!(
            "covariance factorisation failed with jitter up to {:e}",
            jitter / 10.0
        )))
    }
}

/// Reusable sampler holding the covariance factor.
#[derive(Debug, Clone)]
pub struct GpSampler {
    mean: FunctionSample,
    factor: DMatrix<f64>,
}

impl GpSampler {
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> FunctionSet {
        let dim = self.mean.len();
        let z = DMatrix::from_fn(dim, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let draws = &self.factor * z;
        let mesh = self.mean.mesh().clone();
        let samples = (0..n)
            .map(|j| {
                let vals = draws
                    .column(j)
                    .iter()
                    .zip(self.mean.values())
                    .map(|(d, m)| m + d)
                    .collect();
                FunctionSample::from_parts_unchecked(mesh.clone(), vals)
            })
            .collect();
        FunctionSet::new(mesh, samples).expect("samples share the sampler mesh")
    }
}

/// `n` independent draws from `spec`.
pub fn sample_gp(spec: &GaussianSpec, n: usize, seed: u64) -> Result<FunctionSet> {
    if n == 0 {
        return Err(invalid("sample count must be positive"));
    }
    Ok(spec.sampler()?.sample(n, &mut rng_from_seed(seed)))
}

/// Feature operator `T` of an SE-T kernel with a linear map and one
/// bandwidth, in quadrature coordinates.
pub fn kernel_operator(kernel: &KernelSpec, mesh: &Arc<Mesh>) -> Result<DMatrix<f64>> {
    match kernel {
        KernelSpec::SeT { map, bandwidths } if bandwidths.len() == 1 => {
            Ok(map.matrix(mesh)? / bandwidths[0])
        }
        _ => Err(invalid(
            "closed forms need an SE-T kernel with a linear map and one bandwidth",
        )),
    }
}

/// Feature operator `T` and the covariances `S`, `R` of the two measures.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorTriple {
    t: DMatrix<f64>,
    s: DMatrix<f64>,
    r: DMatrix<f64>,
    tst: DMatrix<f64>,
    trt: DMatrix<f64>,
    commuting: bool,
}

impl OperatorTriple {
    pub fn new(t: DMatrix<f64>, s: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = t.nrows();
        if [t.shape(), s.shape(), r.shape()].iter().any(|sh| *sh != (n, n)) {
            return Err(invalid("T, S and R must be square and of equal size"));
        }
        check_psd(&t, "T")?;
        check_psd(&s, "S")?;
        check_psd(&r, "R")?;
        let commuting = commute(&t, &s) && commute(&s, &r) && commute(&t, &r);
        let tst = symmetrize(&(&t * &s * &t));
        let trt = symmetrize(&(&t * &r * &t));
        Ok(OperatorTriple {
            t,
            s,
            r,
            tst,
            trt,
            commuting,
        })
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Whether `T`, `S`, `R` pairwise commute (checked numerically).
    pub fn commuting(&self) -> bool {
        self.commuting
    }

    /// The triple with the two measures exchanged.
    pub fn swapped(&self) -> Self {
        OperatorTriple {
            t: self.t.clone(),
            s: self.r.clone(),
            r: self.s.clone(),
            tst: self.trt.clone(),
            trt: self.tst.clone(),
            commuting: self.commuting,
        }
    }

    fn shift(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
        if a.len() != self.dim() || b.len() != self.dim() {
            return Err(invalid("mean dimension does not match the operators"));
        }
        Ok(&self.t * (a - b))
    }
}

/// `det(M)^{−1/2}` from `log det(M)`.
fn inv_sqrt_det(log_det: f64) -> f64 {
    (-0.5 * log_det).exp()
}

/// `det(I + A)^{−1/2} · exp(−½⟨(I + A)⁻¹d, d⟩)` for symmetric PSD `A`.
fn gauss_factor(a: &DMatrix<f64>, d: &DVector<f64>) -> Result<f64> {
    let f = SpdFactor::new(&(identity(a.nrows()) + a))?;
    Ok((-0.5 * f.log_det() - 0.5 * f.inv_form(d, d)).exp())
}

/// `det(I + TST)^{−1/2} · exp(−½⟨(I + TST)⁻¹T(x − a), T(x − a)⟩)`, the
/// SE-T mean embedding of `N(a, S)` evaluated at `x`.
pub fn mean_embedding(
    t: &DMatrix<f64>,
    s: &DMatrix<f64>,
    a: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<f64> {
    let n = t.nrows();
    if s.shape() != (n, n) || a.len() != n || x.len() != n {
        return Err(invalid("dimensions of T, S, a and x disagree"));
    }
    check_psd(t, "T")?;
    check_psd(s, "S")?;
    let tst = symmetrize(&(t * s * t));
    gauss_factor(&tst, &(t * (x - a)))
}

/// Squared MMD between `N(a, S)` and `N(b, R)` under the SE-T kernel.
/// Uses the simplified determinant when the operators commute.
pub fn closed_form_mmd(ops: &OperatorTriple, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    if ops.commuting {
        closed_form_mmd_commuting(ops, a, b)
    } else {
        closed_form_mmd_general(ops, a, b)
    }
}

/// General form with symmetric square roots:
/// `det(I+2S')^{−½} + det(I+2R')^{−½}
///  − 2 det((I+S')(I+R'^{½}(I+S')⁻¹R'^{½}))^{−½} exp(−½⟨(I+S'+R')⁻¹d, d⟩)`
/// where `S' = TST`, `R' = TRT`, `d = T(a − b)`.
pub fn closed_form_mmd_general(
    ops: &OperatorTriple,
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> Result<f64> {
    let d = ops.shift(a, b)?;
    let (s, r) = (&ops.tst, &ops.trt);
    let pp = inv_sqrt_det(log_det_i_plus(&(s * 2.0))?);
    let qq = inv_sqrt_det(log_det_i_plus(&(r * 2.0))?);
    let i_s = SpdFactor::new(&(identity(ops.dim()) + s))?;
    let r_half = sqrt_psd(r);
    let mut inner = DMatrix::zeros(ops.dim(), ops.dim());
    for j in 0..ops.dim() {
        let col = i_s.solve(&r_half.column(j).into_owned());
        inner.set_column(j, &(&r_half * col));
    }
    let cross_det = i_s.log_det() + log_det_i_plus(&symmetrize(&inner))?;
    let sum = SpdFactor::new(&(identity(ops.dim()) + s + r))?;
    let pq = inv_sqrt_det(cross_det) * (-0.5 * sum.inv_form(&d, &d)).exp();
    Ok(pp + qq - 2.0 * pq)
}

/// Commuting form: the cross term becomes `det(I + S' + R')^{−½}`.
pub fn closed_form_mmd_commuting(
    ops: &OperatorTriple,
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> Result<f64> {
    if !ops.commuting {
        return Err(Error::InvalidOperator("T, S and R do not commute".into()));
    }
    let d = ops.shift(a, b)?;
    let (s, r) = (&ops.tst, &ops.trt);
    let pp = inv_sqrt_det(log_det_i_plus(&(s * 2.0))?);
    let qq = inv_sqrt_det(log_det_i_plus(&(r * 2.0))?);
    let pq = gauss_factor(&(s + r), &d)?;
    Ok(pp + qq - 2.0 * pq)
}

/// Clips round-off negatives; anything clearly negative is a failure.
fn clip_variance(v: f64, scale: f64, name: &str) -> Result<f64> {
    let tol = 1e-10 * scale.max(1.0);
    if v < -tol || !v.is_finite() {
        return Err(Error::NumericalFailure(format!("{name} evaluated to {v:e}")));
    }
    Ok(v.max(0.0))
}

/// `(ξ₁, ξ₂)` for `P = N(0, S)` against `Q = N(m, S)`, with `T` and `S`
/// commuting. Here `ξ₁ = Var_z E_{z'} h(z, z')` and `ξ₂ = Var h(z, z')`.
pub fn xi_mean_shift(t: &DMatrix<f64>, s: &DMatrix<f64>, m: &DVector<f64>) -> Result<(f64, f64)> {
    let n = t.nrows();
    if s.shape() != (n, n) || m.len() != n {
        return Err(invalid("dimensions of T, S and m disagree"));
    }
    check_psd(t, "T")?;
    check_psd(s, "S")?;
    if !commute(t, s) {
        return Err(Error::InvalidOperator("T and S do not commute".into()));
    }
    let id = identity(n);
    let st = symmetrize(&(t * s * t));
    let tm = t * m;

    let i2 = SpdFactor::new(&(&id + &st * 2.0))?;
    let i3 = SpdFactor::new(&(&id + &st * 3.0))?;
    let i4 = SpdFactor::new(&(&id + &st * 4.0))?;
    let sigma = SpdFactor::new(&symmetrize(&((&id + &st) * (&id + &st * 3.0))))?;

    let q2 = i2.inv_form(&tm, &tm);
    let q3 = i3.inv_form(&tm, &tm);
    let q4 = i4.inv_form(&tm, &tm);
    let qs = sigma.solve(&tm).dot(&((&id + &st * 2.0) * &tm));

    let det_sigma = inv_sqrt_det(sigma.log_det());
    let det_2 = (-i2.log_det()).exp();
    let det_4 = inv_sqrt_det(i4.log_det());

    let xi1_terms = [
        2.0 * det_sigma * (1.0 + (-q3).exp() - 2.0 * (-0.5 * qs).exp()),
        -2.0 * det_2 * (1.0 + (-q2).exp() - 2.0 * (-0.5 * q2).exp()),
    ];
    let xi2_terms = [
        2.0 * det_4 * (1.0 + (-q4).exp()),
        -2.0 * det_2 * (1.0 + (-q2).exp() - 4.0 * (-0.5 * q2).exp()),
        -8.0 * det_sigma * (-0.5 * qs).exp(),
    ];
    let scale = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
    Ok((
        clip_variance(xi1_terms.iter().sum(), scale(&xi1_terms), "xi1")?,
        clip_variance(xi2_terms.iter().sum(), scale(&xi2_terms), "xi2")?,
    ))
}

/// Gaussian integrals behind the variance formulas, with `S`, `R` already
/// conjugated by `T` and `d = T(a − b)`.
struct Integrals<'a> {
    id: DMatrix<f64>,
    s: &'a DMatrix<f64>,
    r: &'a DMatrix<f64>,
    d: &'a DVector<f64>,
}

impl Integrals<'_> {
    /// `log det(I + M)` and `⟨(I + M)⁻¹d, d⟩`.
    fn ld_q(&self, m: &DMatrix<f64>) -> Result<(f64, f64)> {
        let f = SpdFactor::new(&(&self.id + m))?;
        Ok((f.log_det(), f.inv_form(self.d, self.d)))
    }

    /// `det(Σ)^{−½} exp(−½⟨(I + 2S)Σ⁻¹d, d⟩)` with
    /// `Σ = (I + S)(I + R) + S(2I + S + R)`.
    fn cross_third(&self, s: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<f64> {
        let sigma = (&self.id + s) * (&self.id + r) + s * (&self.id * 2.0 + s + r);
        let f = SpdFactor::new(&symmetrize(&sigma))?;
        let q = f.solve(self.d).dot(&((&self.id + s * 2.0) * self.d));
        Ok(inv_sqrt_det(f.log_det()) * (-0.5 * q).exp())
    }

    fn alpha(&self, s: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Vec<f64>> {
        let (ld_s, _) = self.ld_q(s)?;
        let (ld_3s, _) = self.ld_q(&(s * 3.0))?;
        let (ld_2s, _) = self.ld_q(&(s * 2.0))?;
        let (ld_r, _) = self.ld_q(r)?;
        let (ld_2sr, q_2sr) = self.ld_q(&(s * 2.0 + r))?;
        let (ld_sr, q_sr) = self.ld_q(&(s + r))?;
        Ok(vec![
            inv_sqrt_det(ld_s + ld_3s),
            -(-ld_2s).exp(),
            inv_sqrt_det(ld_r + ld_2sr) * (-q_2sr).exp(),
            -(-ld_sr).exp() * (-q_sr).exp(),
            -2.0 * self.cross_third(s, r)?,
            2.0 * inv_sqrt_det(ld_2s + ld_sr) * (-0.5 * q_sr).exp(),
        ])
    }

    fn beta(&self, s: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Vec<f64>> {
        let (ld_4s, _) = self.ld_q(&(s * 4.0))?;
        let (ld_2s, _) = self.ld_q(&(s * 2.0))?;
        let (ld_2sr, q_2sr) = self.ld_q(&((s + r) * 2.0))?;
        let (ld_sr, q_sr) = self.ld_q(&(s + r))?;
        Ok(vec![
            inv_sqrt_det(ld_4s),
            -(-ld_2s).exp(),
            inv_sqrt_det(ld_2sr) * (-q_2sr).exp(),
            -(-ld_sr).exp() * (-q_sr).exp(),
            4.0 * inv_sqrt_det(ld_sr + ld_2s) * (-0.5 * q_sr).exp(),
            -4.0 * self.cross_third(s, r)?,
        ])
    }
}

/// `(ξ₁, ξ₂)` for `N(a, S)` against `N(b, R)` with commuting `T, S, R`:
/// `ξ₁ = α(S, R) + α(R, S)` and `ξ₂ = β(S, R) + β(R, S)`.
pub fn xi_general(ops: &OperatorTriple, a: &DVector<f64>, b: &DVector<f64>) -> Result<(f64, f64)> {
    if !ops.commuting {
        return Err(Error::InvalidOperator("T, S and R do not commute".into()));
    }
    let d = ops.shift(a, b)?;
    let ints = Integrals {
        id: identity(ops.dim()),
        s: &ops.tst,
        r: &ops.trt,
        d: &d,
    };
    let mut xi1 = ints.alpha(ints.s, ints.r)?;
    xi1.extend(ints.alpha(ints.r, ints.s)?);
    let mut xi2 = ints.beta(ints.s, ints.r)?;
    xi2.extend(ints.beta(ints.r, ints.s)?);
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let scale = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
    Ok((
        clip_variance(sum(&xi1), scale(&xi1), "xi1")?,
        clip_variance(sum(&xi2), scale(&xi2), "xi2")?,
    ))
}

/// `MMD² / √ξ₂`.
pub fn snr_ratio(ops: &OperatorTriple, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    let (_, xi2) = xi_general(ops, a, b)?;
    if !(xi2 > 1e-300) {
        return Err(Error::DegenerateSnr(xi2));
    }
    Ok(closed_form_mmd(ops, a, b)? / xi2.sqrt())
}

/// Noise model for the large-mesh limit of the signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingCase {
    /// Independent `N(0, 1)` noise at every mesh point.
    WhiteNoise,
    /// `GP(0, k₀)` noise with a continuous covariance.
    SmoothCov(GroundKernel),
}

/// Limit of `MMD²/√ξ₂` for a mean shift `m` as the mesh is refined with
/// bandwidths growing faster than `√N`:
/// white noise gives `√N‖m‖²/(2√(1 + ‖m‖²))`,
/// smooth noise `‖m‖²/(2√(‖C_{k₀}‖²_HS + ‖C_{k₀}^{1/2}m‖²))`.
///
/// Norms and `C_{k₀}` are evaluated on the mesh of `m`, which should be fine.
pub fn scaling_rhs(case: &ScalingCase, m: &FunctionSample, n_points: usize) -> Result<f64> {
    let m2 = m.norm_sq();
    match case {
        ScalingCase::WhiteNoise => {
            Ok((n_points as f64).sqrt() * m2 / (2.0 * (1.0 + m2).sqrt()))
        }
        ScalingCase::SmoothCov(k0) => {
            k0.validate()?;
            if m2 == 0.0 {
                return Ok(0.0);
            }
            let (_, b) = k0.covariance_operator_matrix(m.mesh());
            let u = DVector::from_vec(m.quadrature_coords());
            let hs2 = b.norm_squared();
            let cm = (&b * &u).dot(&u);
            Ok(m2 / (2.0 * (hs2 + cm).sqrt()))
        }
    }
}

/// Expected squared Euclidean distance between independent `N(μ₁, Σ₁)` and
/// `N(μ₂, Σ₂)` draws, and the bound on `|median/expectation − 1|`.
pub fn median_lemma(
    mu1: &DVector<f64>,
    mu2: &DVector<f64>,
    sigma1: &DMatrix<f64>,
    sigma2: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    let n = mu1.len();
    if mu2.len() != n || sigma1.shape() != (n, n) || sigma2.shape() != (n, n) {
        return Err(invalid("dimensions of the means and covariances disagree"));
    }
    check_psd(sigma1, "Σ₁")?;
    check_psd(sigma2, "Σ₂")?;
    let shift = (mu1 - mu2).norm_squared();
    let expectation = sigma1.trace() + sigma2.trace() + shift;
    if expectation == 0.0 {
        return Ok((0.0, 0.0));
    }
    let ratio = shift * shift / (expectation * expectation);
    Ok((expectation, 2f64.sqrt() * (1.0 - ratio).max(0.0).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand_distr::{Distribution, Normal};

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn vec1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    /// Random symmetric PSD matrix `Q diag(λ) Qᵀ` with a shared basis `Q`.
    fn commuting_family(n: usize, seed: u64, count: usize) -> Vec<DMatrix<f64>> {
        let mut rng = rng_from_seed(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = a.qr().q();
        (0..count)
            .map(|_| {
                let d = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0);
                &q * DMatrix::from_diagonal(&d) * q.transpose()
            })
            .collect()
    }

    #[test]
    fn embedding_examples() {
        let t = scalar(1.0);
        assert_eq!(mean_embedding(&t, &scalar(0.0), &vec1(0.3), &vec1(0.3)).unwrap(), 1.0);
        let v = mean_embedding(&t, &scalar(1.0), &vec1(0.0), &vec1(0.0)).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-14);

        // oracle: ∫ exp(−y²/2) φ(y) dy by the midpoint rule
        let h = 1e-3;
        let quad: f64 = (-10_000..10_000)
            .map(|i| {
                let y = (i as f64 + 0.5) * h;
                (-0.5 * y * y).exp() * (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt() * h
            })
            .sum();
        assert!((v - quad).abs() < 1e-9);

        let fam = commuting_family(4, 1, 2);
        let a = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.0]);
        let v = mean_embedding(&fam[0], &fam[1], &a, &a).unwrap();
        let tst = &fam[0] * &fam[1] * &fam[0];
        let direct = (DMatrix::identity(4, 4) + tst).determinant().powf(-0.5);
        assert!((v - direct).abs() < 1e-12);
    }

    #[test]
    fn closed_form_scalar_cases() {
        let one = scalar(1.0);
        let ops = OperatorTriple::new(one.clone(), one.clone(), one.clone()).unwrap();
        assert!(ops.commuting());
        let v = closed_form_mmd(&ops, &vec1(0.0), &vec1(1.0)).unwrap();
        let expected = 2.0 / 3f64.sqrt() * (1.0 - (-1.0f64 / 6.0).exp());
        assert!((v - expected).abs() < 1e-14);
        assert!((v - 0.17728).abs() < 2e-5);

        let ops = OperatorTriple::new(one.clone(), one.clone(), scalar(2.0)).unwrap();
        let v = closed_form_mmd(&ops, &vec1(0.0), &vec1(0.0)).unwrap();
        let expected = 3f64.powf(-0.5) + 5f64.powf(-0.5) - 2.0 * 4f64.powf(-0.5);
        assert!((v - expected).abs() < 1e-14);
        assert!((v - 0.02456).abs() < 1e-5);
        let g = closed_form_mmd_general(&ops, &vec1(0.0), &vec1(0.0)).unwrap();
        assert!((g - v).abs() < 1e-14);
    }

    #[test]
    fn closed_form_matches_scalar_monte_carlo() {
        // one million (x, x', y, y') draws of h for S = R = 1, a = 0, b = 1
        let mut rng = rng_from_seed(17);
        let p = Normal::new(0.0, 1.0).unwrap();
        let q = Normal::new(1.0, 1.0).unwrap();
        let k = |u: f64, v: f64| (-0.5 * (u - v) * (u - v)).exp();
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let (x, x2, y, y2) = (p.sample(&mut rng), p.sample(&mut rng), q.sample(&mut rng), q.sample(&mut rng));
            let h = k(x, x2) + k(y, y2) - k(x, y2) - k(x2, y);
            sum += h;
            sq += h * h;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        let one = scalar(1.0);
        let ops = OperatorTriple::new(one.clone(), one.clone(), one).unwrap();
        let exact = closed_form_mmd(&ops, &vec1(0.0), &vec1(1.0)).unwrap();
        assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn identical_measures_have_zero_mmd() {
        let fam = commuting_family(5, 2, 2);
        let a = DVector::from_fn(5, |i, _| i as f64 * 0.1);
        let ops = OperatorTriple::new(fam[0].clone(), fam[1].clone(), fam[1].clone()).unwrap();
        assert!(closed_form_mmd(&ops, &a, &a).unwrap().abs() < 1e-10);
        assert!(closed_form_mmd_general(&ops, &a, &a).unwrap().abs() < 1e-10);
    }

    #[test]
    fn general_and_commuting_forms_agree() {
        for seed in 0..10 {
            let fam = commuting_family(6, 100 + seed, 3);
            let mut rng = rng_from_seed(seed);
            let a = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
            let ops = OperatorTriple::new(fam[0].clone(), fam[1].clone(), fam[2].clone()).unwrap();
            assert!(ops.commuting());
            let g = closed_form_mmd_general(&ops, &a, &b).unwrap();
            let c = closed_form_mmd_commuting(&ops, &a, &b).unwrap();
            assert!((g - c).abs() < 1e-8, "{g} {c}");
        }
    }

    #[test]
    fn non_commuting_triples() {
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let ops = OperatorTriple::new(t.clone(), s.clone(), DMatrix::identity(2, 2)).unwrap();
        assert!(!ops.commuting());
        let z = DVector::zeros(2);
        assert!(closed_form_mmd_commuting(&ops, &z, &z).is_err());
        assert!(matches!(xi_general(&ops, &z, &z), Err(Error::InvalidOperator(_))));
        assert!(matches!(xi_mean_shift(&t, &s, &z), Err(Error::InvalidOperator(_))));
        // the general form is symmetric in the two measures
        let b = DVector::from_vec(vec![0.3, -0.1]);
        let ab = closed_form_mmd(&ops, &z, &b).unwrap();
        let ba = closed_form_mmd(&ops.swapped(), &b, &z).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab > 0.0);
    }

    #[test]
    fn invalid_operators_rejected() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let id = DMatrix::identity(2, 2);
        assert!(matches!(
            OperatorTriple::new(id.clone(), bad.clone(), id.clone()),
            Err(Error::InvalidOperator(_))
        ));
        let z = DVector::zeros(2);
        assert!(mean_embedding(&id, &bad, &z, &z).is_err());
    }

    #[test]
    fn xi_degenerate_point_masses() {
        let (x1, x2) = xi_mean_shift(&scalar(1.0), &scalar(0.0), &vec1(0.0)).unwrap();
        assert_eq!((x1, x2), (0.0, 0.0));
    }

    #[test]
    fn xi_scalar_values() {
        let (x1, x2) = xi_mean_shift(&scalar(1.0), &scalar(1.0), &vec1(1.0)).unwrap();
        assert!((x1 - 0.0697).abs() < 1e-3, "{x1}");
        assert!((x2 - 0.3948).abs() < 1e-3, "{x2}");
    }

    #[test]
    fn xi_scalar_matches_simulation() {
        // ξ₂ = Var h and ξ₁ = Var g with g(z) = E_{z'} h(z, z') computed
        // from the scalar mean embeddings.
        let mut rng = rng_from_seed(23);
        let (s, r, a, b): (f64, f64, f64, f64) = (1.0, 2.0, 0.0, 0.7);
        let p = Normal::new(a, s.sqrt()).unwrap();
        let q = Normal::new(b, r.sqrt()).unwrap();
        let k = |u: f64, v: f64| (-0.5 * (u - v) * (u - v)).exp();
        let emb = |var: f64, mean: f64, x: f64| (1.0 + var).powf(-0.5) * (-0.5 * (x - mean).powi(2) / (1.0 + var)).exp();
        let n = 400_000;
        let (mut hs, mut hq, mut gs, mut gq) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let (x, x2, y, y2) = (p.sample(&mut rng), p.sample(&mut rng), q.sample(&mut rng), q.sample(&mut rng));
            let h = k(x, x2) + k(y, y2) - k(x, y2) - k(x2, y);
            hs += h;
            hq += h * h;
            let g = emb(s, a, x) + emb(r, b, y) - emb(r, b, x) - emb(s, a, y);
            gs += g;
            gq += g * g;
        }
        let var = |s: f64, q: f64| q / n as f64 - (s / n as f64).powi(2);
        let ops = OperatorTriple::new(scalar(1.0), scalar(s), scalar(r)).unwrap();
        let (x1, x2) = xi_general(&ops, &vec1(a), &vec1(b)).unwrap();
        assert!((var(gs, gq) / x1 - 1.0).abs() < 0.03, "{} vs {x1}", var(gs, gq));
        assert!((var(hs, hq) / x2 - 1.0).abs() < 0.03, "{} vs {x2}", var(hs, hq));
    }

    #[test]
    fn xi_general_reduces_to_mean_shift() {
        for seed in 0..8 {
            let fam = commuting_family(5, 300 + seed, 2);
            let mut rng = rng_from_seed(seed);
            let m = DVector::from_fn(5, |_, _| rng.sample::<f64, _>(StandardNormal));
            let z = DVector::zeros(5);
            let ops = OperatorTriple::new(fam[0].clone(), fam[1].clone(), fam[1].clone()).unwrap();
            let (g1, g2) = xi_general(&ops, &z, &m).unwrap();
            let (s1, s2) = xi_mean_shift(&fam[0], &fam[1], &m).unwrap();
            assert!((g1 - s1).abs() < 1e-10 && (g2 - s2).abs() < 1e-10);
            assert!(s2 >= s1);
        }
    }

    #[test]
    fn xi_general_symmetric_under_swap() {
        let fam = commuting_family(4, 9, 3);
        let a = DVector::from_vec(vec![0.2, 0.0, -0.4, 1.0]);
        let b = DVector::from_vec(vec![0.0, 0.5, 0.1, -0.3]);
        let ops = OperatorTriple::new(fam[0].clone(), fam[1].clone(), fam[2].clone()).unwrap();
        let (a1, a2) = xi_general(&ops, &a, &b).unwrap();
        let (b1, b2) = xi_general(&ops.swapped(), &b, &a).unwrap();
        assert!((a1 - b1).abs() < 1e-12 && (a2 - b2).abs() < 1e-12);
        assert!(a2 >= a1);
    }

    #[test]
    fn asymmetric_scalar_xi_is_finite() {
        let ops = OperatorTriple::new(scalar(1.0), scalar(1.0), scalar(2.0)).unwrap();
        let (x1, x2) = xi_general(&ops, &vec1(0.0), &vec1(0.0)).unwrap();
        assert!(x1.is_finite() && x2.is_finite() && x1 >= 0.0 && x2 >= 0.0);
    }

    #[test]
    fn large_eigenvalues_stay_finite() {
        let t = DMatrix::identity(3, 3);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1e6, 1.0, 1e-3]));
        let ops = OperatorTriple::new(t.clone(), s.clone(), s * 2.0).unwrap();
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let z = DVector::zeros(3);
        assert!(closed_form_mmd(&ops, &z, &a).unwrap().is_finite());
        let (x1, x2) = xi_general(&ops, &z, &a).unwrap();
        assert!(x1.is_finite() && x2.is_finite());
    }

    #[test]
    fn snr_null_and_degenerate() {
        let one = scalar(1.0);
        let ops = OperatorTriple::new(one.clone(), one.clone(), one.clone()).unwrap();
        assert!(snr_ratio(&ops, &vec1(0.0), &vec1(0.0)).unwrap().abs() < 1e-12);
        let zero = OperatorTriple::new(one, scalar(0.0), scalar(0.0)).unwrap();
        assert!(matches!(snr_ratio(&zero, &vec1(0.0), &vec1(0.0)), Err(Error::DegenerateSnr(_))));
    }

    #[test]
    fn scaling_rhs_values() {
        let m = Mesh::uniform(100, (0.0, 1.0)).unwrap();
        let zero = FunctionSample::zeros(m.clone());
        assert_eq!(scaling_rhs(&ScalingCase::WhiteNoise, &zero, 100).unwrap(), 0.0);
        let se = ScalingCase::SmoothCov(GroundKernel::squared_exponential(0.5).unwrap());
        assert_eq!(scaling_rhs(&se, &zero, 100).unwrap(), 0.0);

        let c = FunctionSample::constant(m, 0.05).unwrap();
        let v = scaling_rhs(&ScalingCase::WhiteNoise, &c, 100).unwrap();
        assert!((v - 0.012484).abs() < 1e-6, "{v}");

        let fine = |n| FunctionSample::constant(Mesh::uniform(n, (0.0, 1.0)).unwrap(), 0.05).unwrap();
        let a = scaling_rhs(&se, &fine(400), 400).unwrap();
        let b = scaling_rhs(&se, &fine(800), 100).unwrap();
        assert!((a / b - 1.0).abs() < 1e-2);
    }

    #[test]
    fn median_lemma_examples() {
        let z = DVector::zeros(10);
        let id = DMatrix::identity(10, 10);
        let (e, b) = median_lemma(&z, &z, &id, &id).unwrap();
        assert_eq!(e, 20.0);
        assert!((b - 2f64.sqrt()).abs() < 1e-15);

        let zero = DMatrix::zeros(10, 10);
        let mut e1 = DVector::zeros(10);
        e1[0] = 1.0;
        let (e, b) = median_lemma(&z, &e1, &zero, &zero).unwrap();
        assert_eq!((e, b), (1.0, 0.0));
    }

    #[test]
    fn sampling_zero_covariance_returns_mean() {
        let m = Mesh::uniform(10, (0.0, 1.0)).unwrap();
        let mean = FunctionSample::from_fn(m.clone(), |t| t).unwrap();
        let spec = GaussianSpec::new(mean.clone(), DMatrix::zeros(10, 10)).unwrap();
        assert_eq!(spec.jitter(), 1e-10);
        let draws = sample_gp(&spec, 5, 1).unwrap();
        let tol = 3.0 * spec.jitter().sqrt();
        for x in draws.iter() {
            for (v, mu) in x.values().iter().zip(mean.values()) {
                assert!((v - mu).abs() <= tol);
            }
        }
    }

    #[test]
    fn white_noise_pointwise_variance() {
        let m = Mesh::uniform(1000, (0.0, 1.0)).unwrap();
        let spec = GaussianSpec::from_ground(FunctionSample::zeros(m), GroundKernel::Dirac).unwrap();
        let draws = sample_gp(&spec, 2000, 2).unwrap();
        for j in (0..1000).step_by(97) {
            let var = draws.iter().map(|x| x.values()[j].powi(2)).sum::<f64>() / 2000.0;
            assert!((0.9..=1.1).contains(&var), "{var}");
        }
    }

    #[test]
    fn se_empirical_covariance() {
        let m = Mesh::uniform(20, (0.0, 1.0)).unwrap();
        let k0 = GroundKernel::squared_exponential(0.2).unwrap();
        let spec = GaussianSpec::from_ground(FunctionSample::zeros(m.clone()), k0).unwrap();
        let draws = sample_gp(&spec, 5000, 3).unwrap();
        let g = k0.gram(&m);
        for i in 0..20 {
            for j in 0..20 {
                let c = draws.iter().map(|x| x.values()[i] * x.values()[j]).sum::<f64>() / 5000.0;
                assert!((c - g[(i, j)]).abs() < 0.05);
            }
        }
    }

    #[test]
    fn sampling_rejects_bad_inputs() {
        let m = Mesh::uniform(3, (0.0, 1.0)).unwrap();
        let mean = FunctionSample::zeros(m);
        assert!(GaussianSpec::new(mean.clone(), DMatrix::identity(2, 2)).is_err());
        let indefinite = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(GaussianSpec::new(mean.clone(), indefinite).is_err());
        let spec = GaussianSpec::new(mean, DMatrix::identity(3, 3)).unwrap();
        assert!(sample_gp(&spec, 0, 1).is_err());
        assert!(spec.with_jitter(0.0).is_err());
    }

    #[test]
    fn kernel_operator_of_identity() {
        use crate::features::FeatureMap;
        let m = Mesh::uniform(4, (0.0, 1.0)).unwrap();
        let k = KernelSpec::se_t(FeatureMap::Identity, vec![2.0]).unwrap();
        let t = kernel_operator(&k, &m).unwrap();
        assert_eq!(t, DMatrix::identity(4, 4) * 0.5);
        assert!(kernel_operator(&KernelSpec::Cov, &m).is_err());
    }
}
