//! Synthetic data for the benchmark experiments.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use fmmd_core::{
    FunctionSample, FunctionSet, GaussianSpec, GpSampler, GroundKernel, Mesh, Observation,
    Reconstructor, Result,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Normal, StandardNormal};

pub type Generator = Box<dyn Fn(usize, &mut ChaCha8Rng) -> Result<FunctionSet> + Send + Sync>;

/// Two laws to test against each other, sampled on `mesh`.
pub struct Scenario {
    pub mesh: Arc<Mesh>,
    pub p: Generator,
    pub q: Generator,
}

fn z<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Student-t as a normal over a scaled chi.
pub fn student_t<R: Rng + ?Sized>(df: f64, rng: &mut R) -> f64 {
    let chi2 = ChiSquared::new(df).expect("positive degrees of freedom");
    z(rng) / (chi2.sample(rng) / df).sqrt()
}

/// Draws `n` curves, each from its own coefficient draw plus optional iid
/// pointwise noise.
fn curves<R, F>(mesh: &Arc<Mesh>, n: usize, noise_sd: f64, rng: &mut R, mut draw: F) -> Result<FunctionSet>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Box<dyn Fn(f64) -> f64>,
{
    let rows = (0..n)
        .map(|_| {
            let f = draw(rng);
            mesh.points()
                .iter()
                .map(|&t| f(t) + if noise_sd > 0.0 { noise_sd * z(rng) } else { 0.0 })
                .collect()
        })
        .collect();
    FunctionSet::from_rows(mesh.clone(), rows)
}

/// `x = t + ξ₁₀√2 sin 2πt + ξ₅√2 cos 2πt`, `y` the same plus `δt³`, with
/// `ξ_v ~ N(0, v)` and `N(0, 0.25)` observation noise.
pub fn mean_shift(delta: f64, mesh_n: usize) -> Result<Scenario> {
    let mesh = Mesh::uniform(mesh_n, (0.0, 1.0))?;
    let make = |shift: f64| -> Generator {
        let mesh = mesh.clone();
        Box::new(move |n, rng| {
            curves(&mesh, n, 0.5, rng, |rng| {
                let a = 10f64.sqrt() * z(rng);
                let b = 5f64.sqrt() * z(rng);
                Box::new(move |t| {
                    t + shift * t.powi(3) + a * SQRT_2 * (2.0 * PI * t).sin() + b * SQRT_2 * (2.0 * PI * t).cos()
                })
            })
        })
    };
    Ok(Scenario {
        mesh: mesh.clone(),
        p: make(0.0),
        q: make(delta),
    })
}

/// Variance `10` on the sine frequency for `x`, `10 + δ` for `y`.
pub fn var_shift_1(delta: f64, mesh_n: usize) -> Result<Scenario> {
    if 10.0 + delta <= 0.0 {
        return Err(fmmd_core::Error::InvalidArgument(format!("variance 10 + {delta} is not positive")));
    }
    let mesh = Mesh::uniform(mesh_n, (0.0, 1.0))?;
    let make = |var_sin: f64| -> Generator {
        let mesh = mesh.clone();
        Box::new(move |n, rng| {
            curves(&mesh, n, 0.5, rng, |rng| {
                let a = var_sin.sqrt() * z(rng);
                let b = 5f64.sqrt() * z(rng);
                Box::new(move |t| a * SQRT_2 * (2.0 * PI * t).sin() + b * SQRT_2 * (2.0 * PI * t).cos())
            })
        })
    };
    Ok(Scenario {
        mesh: mesh.clone(),
        p: make(10.0),
        q: make(10.0 + delta),
    })
}

/// Ten sine and cosine modes with `n^{−1/2}` decay and t(5) coefficients;
/// `y` is `δ` times an independent copy.
pub fn var_shift_2(delta: f64, mesh_n: usize) -> Result<Scenario> {
    let mesh = Mesh::uniform(mesh_n, (0.0, 1.0))?;
    let make = |scale: f64| -> Generator {
        let mesh = mesh.clone();
        Box::new(move |n, rng| {
            curves(&mesh, n, 0.0, rng, |rng| {
                let c: Vec<(f64, f64)> = (1..=10)
                    .map(|_| (student_t(5.0, rng), student_t(5.0, rng)))
                    .collect();
                Box::new(move |t| {
                    scale
                        * c.iter()
                            .enumerate()
                            .map(|(i, (xi, eta))| {
                                let k = (i + 1) as f64;
                                let w = SQRT_2 / k.sqrt();
                                w * (xi * (PI * k * t).sin() + eta * (PI * k * t).cos())
                            })
                            .sum::<f64>()
                })
            })
        })
    };
    Ok(Scenario {
        mesh: mesh.clone(),
        p: make(1.0),
        q: make(delta),
    })
}

/// `ψ₁ = 1`, `ψ_n(t) = √2 sin((n−1)πt)`.
pub fn hall_psi(n: usize, t: f64) -> f64 {
    if n == 1 {
        1.0
    } else {
        SQRT_2 * ((n - 1) as f64 * PI * t).sin()
    }
}

/// `ψ*₁ = 1`; `√2 cos((n−1)π(2t−1))` for even `n`, `√2 sin(…)` for odd.
pub fn hall_psi_star(n: usize, t: f64) -> f64 {
    let arg = (n - 1) as f64 * PI * (2.0 * t - 1.0);
    match n {
        1 => 1.0,
        _ if n % 2 == 0 => SQRT_2 * arg.cos(),
        _ => SQRT_2 * arg.sin(),
    }
}

/// Inverse CDF of the density `0.8 + 0.4t` on `[0, 1]`.
pub fn sloped_location(u: f64) -> f64 {
    (-0.8 + (0.64 + 0.8 * u).sqrt()) / 0.4
}

pub const HALL_LOCATIONS: usize = 20;

/// Higher-order differences observed at 20 random locations per curve
/// (uniform for `x`, density `0.8 + 0.4t` for `y`) with noise sd 0.1 and
/// 0.3, then smoothed onto the mesh by a Matérn-1.5 GP posterior mean
/// with noise variance 0.01.
pub fn higher_order(delta: f64, mesh_n: usize) -> Result<Scenario> {
    let mesh = Mesh::uniform(mesh_n, (0.0, 1.0))?;
    let recon = Arc::new(Reconstructor::kernel(GroundKernel::matern15(1.0)?, 0.01, mesh.clone())?);
    let p: Generator = {
        let recon = recon.clone();
        Box::new(move |n, rng| {
            let obs = (0..n)
                .map(|_| {
                    let c: Vec<f64> = (0..15).map(|_| z(rng)).collect();
                    let f = |t: f64| (1..=15).map(|k| (-(k as f64) / 2.0).exp() * c[k - 1] * hall_psi(k, t)).sum::<f64>();
                    let locs: Vec<f64> = {
                        let mut l: Vec<f64> = (0..HALL_LOCATIONS).map(|_| rng.random::<f64>()).collect();
                        l.sort_by(|a, b| a.total_cmp(b));
                        l
                    };
                    let vals = locs.iter().map(|&t| f(t) + 0.1 * z(rng)).collect();
                    Observation::new(locs, vals, 0.1)
                })
                .collect::<Result<Vec<_>>>()?;
            recon.reconstruct_all(&obs)
        })
    };
    let q: Generator = Box::new(move |n, rng| {
        let obs = (0..n)
            .map(|_| {
                let c1: Vec<f64> = (0..15).map(|_| z(rng)).collect();
                let c2: Vec<f64> = (0..15).map(|_| z(rng)).collect();
                let f = |t: f64| {
                    (1..=15)
                        .map(|k| {
                            let kf = k as f64;
                            (-kf / 2.0).exp() * c1[k - 1] * hall_psi(k, t)
                                + delta * c2[k - 1] * hall_psi_star(k, t) / (kf * kf)
                        })
                        .sum::<f64>()
                };
                let locs: Vec<f64> = {
                    let mut l: Vec<f64> = (0..HALL_LOCATIONS).map(|_| sloped_location(rng.random::<f64>())).collect();
                    l.sort_by(|a, b| a.total_cmp(b));
                    l
                };
                let vals = locs.iter().map(|&t| f(t) + 0.3 * z(rng)).collect();
                Observation::new(locs, vals, 0.3)
            })
            .collect::<Result<Vec<_>>>()?;
        recon.reconstruct_all(&obs)
    });
    Ok(Scenario { mesh, p, q })
}

/// `GP(0, k_l)` against `GP(shift, k_l)` on a uniform mesh of `[0, 1]`,
/// with `l = 0` meaning white noise.
pub fn gp_mean_shift(lengthscale: f64, shift: f64, mesh_n: usize) -> Result<Scenario> {
    let mesh = Mesh::uniform(mesh_n, (0.0, 1.0))?;
    let k0 = if lengthscale == 0.0 {
        GroundKernel::Dirac
    } else {
        GroundKernel::squared_exponential(lengthscale)?
    };
    let p_spec = GaussianSpec::from_ground(FunctionSample::zeros(mesh.clone()), k0)?;
    let q_spec = GaussianSpec::from_ground(FunctionSample::constant(mesh.clone(), shift)?, k0)?;
    let sampler = |s: GpSampler| -> Generator { Box::new(move |n, rng| Ok(s.sample(n, rng))) };
    Ok(Scenario {
        mesh,
        p: sampler(p_spec.sampler()?),
        q: sampler(q_spec.sampler()?),
    })
}

/// Ages of the 31 measurements in the Berkeley growth study.
pub fn growth_ages() -> Vec<f64> {
    let mut t = vec![1.0, 1.25, 1.5, 1.75, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
    t.extend((0..20).map(|i| 8.5 + 0.5 * i as f64));
    t
}

/// Growth-like height curves on the Berkeley ages: linear growth, an early
/// saturating component and a logistic pubertal spurt, all with random
/// parameters, plus measurement noise. Used as a null pool when no real
/// data is supplied.
pub fn synthetic_growth_pool(n: usize, rng: &mut ChaCha8Rng) -> Result<FunctionSet> {
    let mesh = Mesh::from_points(growth_ages())?;
    let pos = |mean: f64, sd: f64| Normal::new(mean, sd).expect("valid normal");
    let (a, g, b, s, p, w) = (
        pos(75.0, 2.5),
        pos(4.5, 0.4),
        pos(8.0, 1.5),
        pos(12.0, 2.0),
        pos(11.5, 1.0),
        pos(0.9, 0.1),
    );
    curves(&mesh, n, 0.3, rng, |rng| {
        let (a, g, b, s, p) = (a.sample(rng), g.sample(rng), b.sample(rng), s.sample(rng), p.sample(rng));
        let w = w.sample(rng).abs().max(0.3);
        Box::new(move |t| a + g * (t - 1.0) + b * (1.0 - (-(t - 1.0) / 1.5).exp()) + s / (1.0 + (-(t - p) / w).exp()))
    })
}
