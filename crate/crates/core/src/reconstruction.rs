//! Discretisation of functions at finitely many locations and reconstruction
//! back onto a shared mesh.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::estimators::mmd_u;
use crate::ground::GroundKernel;
use crate::kernels::KernelSpec;
use crate::mesh::{inner_product, linear_interpolate, same_mesh, FunctionSample, FunctionSet, Mesh};
use crate::seed::rng_from_seed;

/// Noisy point evaluations of one function.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    locations: Vec<f64>,
    values: Vec<f64>,
    noise_sd: f64,
}

impl Observation {
    pub fn new(locations: Vec<f64>, values: Vec<f64>, noise_sd: f64) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::InsufficientData("observation has no locations".into()));
        }
        if locations.len() != values.len() {
            return Err(invalid(format!(
                "{} locations but {} values",
                locations.len(),
                values.len()
            )));
        }
        if locations.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(invalid("observation contains non-finite entries"));
        }
        if locations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("observation locations must be strictly increasing"));
        }
        if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
            return Err(invalid(format!("noise sd must be nonnegative, got {noise_sd}")));
        }
        Ok(Observation {
            locations,
            values,
            noise_sd,
        })
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}

/// Evaluates `x` (linearly interpolated) at `locations` and adds iid
/// `N(0, noise_sd²)` noise.
pub fn discretise(
    x: &FunctionSample,
    locations: &[f64],
    noise_sd: f64,
    seed: u64,
) -> Result<Observation> {
    let pts = x.mesh().points();
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    if let Some(t) = locations.iter().find(|t| !(**t >= lo && **t <= hi)) {
        return Err(invalid(format!(
            "location {t} lies outside the mesh span [{lo}, {hi}]"
        )));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(invalid(format!("noise sd must be nonnegative, got {noise_sd}")));
    }
    let mut values: Vec<f64> = locations.iter().map(|&t| x.interpolate(t)).collect();
    if noise_sd > 0.0 {
        let noise = Normal::new(0.0, noise_sd).expect("validated sd");
        let mut rng = rng_from_seed(seed);
        for v in &mut values {
            *v += noise.sample(&mut rng);
        }
    }
    Observation::new(locations.to_vec(), values, noise_sd)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Piecewise linear, constant beyond the end observations.
    LinearInterp,
    /// `k₀(t, Ξ)(K₀ + σ²I)⁻¹ values`; `σ² = 0` interpolates, `σ² > 0` is the
    /// GP posterior mean.
    KernelInterp { ground: GroundKernel, noise_var: f64 },
    /// First `keep` coefficients in an orthonormal basis on the target mesh.
    BasisProjection { basis: FunctionSet, keep: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstructor {
    method: Method,
    target: Arc<Mesh>,
}

impl Reconstructor {
    pub fn linear(target: Arc<Mesh>) -> Self {
        Reconstructor {
            method: Method::LinearInterp,
            target,
        }
    }

    pub fn kernel(ground: GroundKernel, noise_var: f64, target: Arc<Mesh>) -> Result<Self> {
        ground.validate()?;
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(invalid(format!("noise variance must be nonnegative, got {noise_var}")));
        }
        Ok(Reconstructor {
            method: Method::KernelInterp { ground, noise_var },
            target,
        })
    }

    /// The basis must be orthonormal under the inner product of its mesh,
    /// which becomes the target mesh.
    pub fn projection(basis: FunctionSet, keep: usize) -> Result<Self> {
        if keep == 0 || keep > basis.len() {
            return Err(invalid(format!(
                "keep must lie in 1..={}, got {keep}",
                basis.len()
            )));
        }
        for i in 0..basis.len() {
            for j in 0..=i {
                let g = inner_product(basis.get(i), basis.get(j))?;
                let want = if i == j { 1.0 } else { 0.0 };
                if (g - want).abs() > 1e-8 {
                    return Err(invalid(format!(
                        "basis is not orthonormal: <e{i}, e{j}> = {g}"
                    )));
                }
            }
        }
        let target = basis.mesh().clone();
        Ok(Reconstructor {
            method: Method::BasisProjection { basis, keep },
            target,
        })
    }

    pub fn method(&self) -> &Method {
        &self.method
    }

    pub fn target(&self) -> &Arc<Mesh> {
        &self.target
    }

    pub fn reconstruct(&self, obs: &Observation) -> Result<FunctionSample> {
        let pts = self.target.points();
        let values = match &self.method {
            Method::LinearInterp => pts
                .iter()
                .map(|&t| linear_interpolate(&obs.locations, &obs.values, t))
                .collect(),
            Method::KernelInterp { ground, noise_var } => {
                kernel_interpolate(ground, *noise_var, obs, &self.target)?
            }
            Method::BasisProjection { basis, keep } => {
                let x = FunctionSample::new(
                    self.target.clone(),
                    pts.iter()
                        .map(|&t| linear_interpolate(&obs.locations, &obs.values, t))
                        .collect(),
                )?;
                let mut out = vec![0.0; pts.len()];
                for e in basis.iter().take(*keep) {
                    let c = inner_product(&x, e)?;
                    for (o, v) in out.iter_mut().zip(e.values()) {
                        *o += c * v;
                    }
                }
                out
            }
        };
        FunctionSample::new(self.target.clone(), values)
    }

    /// Reconstructs every observation onto the target mesh.
    pub fn reconstruct_all(&self, obs: &[Observation]) -> Result<FunctionSet> {
        let samples = obs
            .par_iter()
            .map(|o| self.reconstruct(o))
            .collect::<Result<Vec<_>>>()?;
        FunctionSet::new(self.target.clone(), samples)
    }
}

fn kernel_interpolate(
    ground: &GroundKernel,
    noise_var: f64,
    obs: &Observation,
    target: &Arc<Mesh>,
) -> Result<Vec<f64>> {
    let interval = target.interval();
    let k = ground.cross_gram(interval, &obs.locations, &obs.locations);
    let n = k.nrows();
    let mean_diag = k.trace() / n as f64;
    let mut jitter = 1e-10 * if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let rhs = DVector::from_column_slice(&obs.values);
    for _ in 0..4 {
        let m = &k + DMatrix::identity(n, n) * (noise_var + jitter);
        if let Some(ch) = Cholesky::new(m) {
            let c = ch.solve(&rhs);
            let kt = ground.cross_gram(interval, target.points(), &obs.locations);
            return Ok((kt * c).iter().copied().collect());
        }
        jitter *= 10.0;
    }
    Err(Error::NumericalFailure(
        "kernel interpolation system is singular".into(),
    ))
}

/// Returns `(|MMD̂²(X, Y) − MMD̂²(RX, RY)|, bound)` where the bound is
/// `(4L/n) Σ_i ‖T(RXᵢ) − T(Xᵢ)‖ + ‖T(RYᵢ) − T(Yᵢ)‖`.
///
/// With `φ(u) = exp(−u²/2)` (SE) or `(1 + u²)^{−1/2}` (IMQ), the kernel is
/// `φ(‖D‖)` for the stacked vector `D = (T_p(x − y)/γ_p)_p`. `φ` is
/// Lipschitz with `L = sup|φ'|`, i.e. `e^{−1/2}` at `u = 1` and
/// `2/(3√3)` at `u = 1/√2`. Since `γ` already sits inside `D`, measuring
/// the reconstruction error in the γ-scaled mapped norm is the same as
/// using `L/γ` with the unscaled norm.
pub fn approx_mmd_bound(
    k: &KernelSpec,
    x: &FunctionSet,
    y: &FunctionSet,
    rx: &FunctionSet,
    ry: &FunctionSet,
) -> Result<(f64, f64)> {
    let (map, bandwidths, lip) = match k {
        KernelSpec::SeT { map, bandwidths } => (map, bandwidths, (-0.5f64).exp()),
        KernelSpec::ImqT { map, bandwidths } => (map, bandwidths, 2.0 / (3.0 * 3f64.sqrt())),
        _ => return Err(invalid("the bound needs an SE-T or IMQ-T kernel")),
    };
    let n = x.len();
    if y.len() != n || rx.len() != n || ry.len() != n {
        return Err(invalid("all four sample sets must have the same size"));
    }
    if ![y.mesh(), rx.mesh(), ry.mesh()].iter().all(|m| same_mesh(x.mesh(), m)) {
        return Err(Error::IncompatibleMesh);
    }
    let lhs = (mmd_u(k, x, y)? - mmd_u(k, rx, ry)?).abs();
    let mut err = 0.0;
    for (a, b) in x.iter().zip(rx.iter()).chain(y.iter().zip(ry.iter())) {
        err += map.mapped_sq_distance(a, b, bandwidths)?.sqrt();
    }
    Ok((lhs, 4.0 * lip * err / n as f64))
}

/// Observation locations drawn uniformly from `[lo, hi]`, sorted, always
/// including both ends.
pub fn random_locations<R: Rng + ?Sized>(n: usize, interval: (f64, f64), rng: &mut R) -> Result<Vec<f64>> {
    let (lo, hi) = interval;
    if n < 2 || !(hi > lo) {
        return Err(invalid("need at least two locations on a nondegenerate interval"));
    }
    let mut t: Vec<f64> = (0..n - 2).map(|_| rng.random_range(lo..hi)).collect();
    t.push(lo);
    t.push(hi);
    t.sort_by(|a, b| a.total_cmp(b));
    t.dedup();
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMap;
    use crate::gaussian::{sample_gp, GaussianSpec};
    use crate::mesh::sq_distance;
    use rand_distr::StandardNormal;

    fn unit(n: usize) -> Arc<Mesh> {
        Mesh::uniform(n, (0.0, 1.0)).unwrap()
    }

    #[test]
    fn discretise_at_mesh_points() {
        let m = unit(11);
        let x = FunctionSample::from_fn(m.clone(), |t| (3.0 * t).sin()).unwrap();
        let obs = discretise(&x, m.points(), 0.0, 1).unwrap();
        assert_eq!(obs.values(), x.values());

        let lin = FunctionSample::from_fn(m.clone(), |t| 2.0 * t + 1.0).unwrap();
        let mid = (m.points()[3] + m.points()[4]) / 2.0;
        let obs = discretise(&lin, &[mid], 0.0, 1).unwrap();
        assert!((obs.values()[0] - (2.0 * mid + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn discretise_errors() {
        let m = unit(5);
        let x = FunctionSample::zeros(m.clone());
        let hi = m.points()[4];
        assert!(discretise(&x, &[hi + 1e-3], 0.0, 1).is_err());
        assert!(discretise(&x, &[0.5], -1.0, 1).is_err());
        assert!(discretise(&x, &[0.6, 0.5], 0.0, 1).is_err());
        assert!(Observation::new(vec![], vec![], 0.0).is_err());
    }

    #[test]
    fn discretise_noise_level() {
        let m = unit(5);
        let x = FunctionSample::constant(m.clone(), 1.0).unwrap();
        let locs = vec![0.5; 1];
        let draws: Vec<f64> = (0..10_000)
            .map(|s| discretise(&x, &locs, 0.5, s).unwrap().values()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
        assert!((0.45..=0.55).contains(&sd), "{sd}");
    }

    #[test]
    fn linear_round_trip_and_clamping() {
        let m = unit(9);
        let x = FunctionSample::from_fn(m.clone(), |t| t * t).unwrap();
        let obs = discretise(&x, m.points(), 0.0, 0).unwrap();
        assert_eq!(Reconstructor::linear(m.clone()).reconstruct(&obs).unwrap(), x);

        let obs = Observation::new(vec![0.3, 0.6], vec![1.0, 2.0], 0.0).unwrap();
        let r = Reconstructor::linear(Mesh::from_points(vec![0.0, 0.45, 1.0]).unwrap());
        assert_eq!(r.reconstruct(&obs).unwrap().values(), &[1.0, 1.5, 2.0]);
    }

    #[test]
    fn linear_error_is_second_order() {
        let fine = unit(4000);
        let x = FunctionSample::from_fn(fine.clone(), |t| t * t).unwrap();
        let err = |k: usize| {
            let locs: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
            let obs = Observation::new(locs.clone(), locs.iter().map(|t| t * t).collect(), 0.0).unwrap();
            let rx = Reconstructor::linear(fine.clone()).reconstruct(&obs).unwrap();
            sq_distance(&rx, &x).unwrap().sqrt()
        };
        let ratio = err(10) / err(20);
        // spacing 1/9 versus 1/19
        let expected = (19.0f64 / 9.0).powi(2);
        assert!((ratio / expected - 1.0).abs() < 0.05, "{ratio}");
        assert!((3.5..=5.0).contains(&ratio));
    }

    #[test]
    fn kernel_interpolation_is_exact_at_data() {
        let locs: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
        let vals: Vec<f64> = locs.iter().map(|t| (4.0 * t).cos()).collect();
        let obs = Observation::new(locs.clone(), vals.clone(), 0.0).unwrap();
        let target = Mesh::from_points(locs).unwrap();
        let g = GroundKernel::squared_exponential(0.1).unwrap();
        let r = Reconstructor::kernel(g, 0.0, target).unwrap();
        let rx = r.reconstruct(&obs).unwrap();
        for (a, b) in rx.values().iter().zip(&vals) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn kernel_smoothing_grows_residual() {
        let mut rng = rng_from_seed(3);
        let locs: Vec<f64> = (0..15).map(|i| i as f64 / 14.0).collect();
        let vals: Vec<f64> = locs
            .iter()
            .map(|t| (6.0 * t).sin() + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let obs = Observation::new(locs.clone(), vals.clone(), 0.3).unwrap();
        let target = Mesh::from_points(locs).unwrap();
        let g = GroundKernel::matern15(0.3).unwrap();
        let mut last = -1.0;
        for s2 in [0.0, 0.01, 0.1, 1.0, 10.0] {
            let rx = Reconstructor::kernel(g, s2, target.clone()).unwrap().reconstruct(&obs).unwrap();
            let res: f64 = rx.values().iter().zip(&vals).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(res > last - 1e-12, "{s2}: {res} after {last}");
            last = res;
        }
    }

    fn orthonormal_basis(m: &Arc<Mesh>, k: usize, seed: u64) -> FunctionSet {
        let mut rng = rng_from_seed(seed);
        let a = DMatrix::from_fn(m.len(), k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = a.qr().q();
        let rows = (0..k)
            .map(|j| {
                let c: Vec<f64> = q.column(j).iter().copied().collect();
                FunctionSample::from_quadrature_coords(m.clone(), &c).unwrap()
            })
            .collect();
        FunctionSet::new(m.clone(), rows).unwrap()
    }

    #[test]
    fn projection_error_is_tail_energy() {
        let m = unit(40);
        let basis = orthonormal_basis(&m, 10, 4);
        let coefs: Vec<f64> = (0..10).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let mut vals = vec![0.0; 40];
        for (c, e) in coefs.iter().zip(basis.iter()) {
            for (v, b) in vals.iter_mut().zip(e.values()) {
                *v += c * b;
            }
        }
        let x = FunctionSample::new(m.clone(), vals).unwrap();
        let obs = discretise(&x, m.points(), 0.0, 0).unwrap();
        for keep in [1, 4, 10] {
            let r = Reconstructor::projection(basis.clone(), keep).unwrap();
            let px = r.reconstruct(&obs).unwrap();
            let tail: f64 = coefs[keep..].iter().map(|c| c * c).sum();
            assert!((sq_distance(&px, &x).unwrap() - tail).abs() < 1e-8);
        }
        assert!(Reconstructor::projection(basis.clone(), 11).is_err());
        let bad = FunctionSet::from_rows(m.clone(), vec![vec![1.0; 40], vec![1.0; 40]]).unwrap();
        assert!(Reconstructor::projection(bad, 1).is_err());
    }

    #[test]
    fn bound_trivial_and_errors() {
        let m = unit(20);
        let spec = GaussianSpec::from_ground(FunctionSample::zeros(m.clone()), GroundKernel::squared_exponential(0.2).unwrap()).unwrap();
        let x = sample_gp(&spec, 6, 1).unwrap();
        let y = sample_gp(&spec, 6, 2).unwrap();
        let k = KernelSpec::se_t(FeatureMap::Identity, vec![1.0]).unwrap();
        assert_eq!(approx_mmd_bound(&k, &x, &y, &x, &y).unwrap(), (0.0, 0.0));
        assert!(approx_mmd_bound(&KernelSpec::Cov, &x, &y, &x, &y).is_err());
        let other = sample_gp(&GaussianSpec::from_ground(FunctionSample::zeros(unit(21)), GroundKernel::Dirac).unwrap(), 6, 3).unwrap();
        assert!(matches!(approx_mmd_bound(&k, &x, &y, &other, &y), Err(Error::IncompatibleMesh)));
    }

    #[test]
    fn bound_holds_for_interpolated_gp_draws() {
        let m = unit(200);
        let spec = GaussianSpec::from_ground(FunctionSample::zeros(m.clone()), GroundKernel::squared_exponential(0.1).unwrap()).unwrap();
        let shifted = GaussianSpec::from_ground(FunctionSample::constant(m.clone(), 0.5).unwrap(), GroundKernel::squared_exponential(0.1).unwrap()).unwrap();
        let locs: Vec<f64> = (0..12).map(|i| m.points()[0] + i as f64 * (m.points()[199] - m.points()[0]) / 11.0).collect();
        let recon = |s: &FunctionSet| {
            let obs: Vec<Observation> = s.iter().map(|x| discretise(x, &locs, 0.0, 0).unwrap()).collect();
            Reconstructor::linear(m.clone()).reconstruct_all(&obs).unwrap()
        };
        for seed in 0..20 {
            let x = sample_gp(&spec, 5, 2 * seed).unwrap();
            let y = sample_gp(&shifted, 5, 2 * seed + 1).unwrap();
            let (rx, ry) = (recon(&x), recon(&y));
            for k in [
                KernelSpec::se_t(FeatureMap::Identity, vec![0.3]).unwrap(),
                KernelSpec::imq_t(FeatureMap::Identity, vec![0.3]).unwrap(),
                KernelSpec::se_t(FeatureMap::Square, vec![0.5, 0.5]).unwrap(),
            ] {
                let (lhs, rhs) = approx_mmd_bound(&k, &x, &y, &rx, &ry).unwrap();
                assert!(lhs <= rhs, "seed {seed}: {lhs} > {rhs}");
                assert!(rhs > 0.0);
            }
        }
    }

    #[test]
    fn random_locations_cover_interval() {
        let mut rng = rng_from_seed(1);
        let t = random_locations(10, (2.0, 3.0), &mut rng).unwrap();
        assert_eq!(t[0], 2.0);
        assert_eq!(*t.last().unwrap(), 3.0);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }
}
