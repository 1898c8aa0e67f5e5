//! MMD estimators, the permutation test and the power harness.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kernels::{split_pooled, KernelRecipe, KernelSpec};
use crate::mesh::{same_mesh, FunctionSet};
use crate::seed::{child_rng, derive_seed};

/// Unbiased U-statistic
/// `(1/(n(n−1))) Σ_{i≠j} Kxx[i,j] + Kyy[i,j] − Kxy[i,j] − Kxy[j,i]`.
pub fn mmd_u_statistic(kxx: &DMatrix<f64>, kyy: &DMatrix<f64>, kxy: &DMatrix<f64>) -> Result<f64> {
    let n = kxx.nrows();
    if kxx.shape() != (n, n) || kyy.shape() != (n, n) || kxy.shape() != (n, n) {
        return Err(invalid(format!(
            "U-statistic needs equal sample sizes, got Kxx {:?}, Kyy {:?}, Kxy {:?}",
            kxx.shape(),
            kyy.shape(),
            kxy.shape()
        )));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "U-statistic needs n ≥ 2, got {n}"
        )));
    }
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                acc += kxx[(i, j)] + kyy[(i, j)] - kxy[(i, j)] - kxy[(j, i)];
            }
        }
    }
    Ok(acc / (n * (n - 1)) as f64)
}

fn check_pair(x: &FunctionSet, y: &FunctionSet) -> Result<usize> {
    if !same_mesh(x.mesh(), y.mesh()) {
        return Err(Error::IncompatibleMesh);
    }
    if x.len() != y.len() {
        return Err(invalid(format!(
            "equal sample sizes required, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(x.len())
}

/// U-statistic computed from sample sets.
pub fn mmd_u(k: &KernelSpec, x: &FunctionSet, y: &FunctionSet) -> Result<f64> {
    check_pair(x, y)?;
    let (kxx, kyy, kxy) = k.gram_matrices(x, y)?;
    mmd_u_statistic(&kxx, &kyy, &kxy)
}

/// Linear-time estimator `(2/n) Σ_{i=1}^{n/2} h(z_{2i−1}, z_{2i})`.
pub fn mmd_linear(k: &KernelSpec, x: &FunctionSet, y: &FunctionSet) -> Result<f64> {
    let n = check_pair(x, y)?;
    if n < 2 || n % 2 != 0 {
        return Err(invalid(format!(
            "linear estimator needs an even n ≥ 2, got {n}"
        )));
    }
    let mut acc = 0.0;
    for i in (0..n).step_by(2) {
        let (x1, x2, y1, y2) = (x.get(i), x.get(i + 1), y.get(i), y.get(i + 1));
        acc += k.eval(x1, x2)? + k.eval(y1, y2)? - k.eval(x1, y2)? - k.eval(x2, y1)?;
    }
    Ok(2.0 * acc / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub reject: bool,
    pub n_permutations: usize,
    pub alpha: f64,
}

/// U-statistic of the split of a pooled `2n × 2n` Gram given by a
/// permutation: positions `< n` form X, the rest Y.
///
/// With `ε = +1` on X and `−1` on Y the off-diagonal sum
/// `Σ_{a≠b} ε_a ε_b G[a,b]` equals `Sxx + Syy − 2·Sxy` (all `i, j` in `Sxy`),
/// and the paired diagonal terms `Kxy[i,i]` are added back.
fn permuted_statistic(g: &DMatrix<f64>, perm: &[usize], n: usize) -> f64 {
    let mut eps = DVector::zeros(2 * n);
    for (pos, &k) in perm.iter().enumerate() {
        eps[k] = if pos < n { 1.0 } else { -1.0 };
    }
    let quad = (g * &eps).dot(&eps) - g.trace();
    let paired: f64 = (0..n).map(|i| g[(perm[i], perm[n + i])]).sum();
    (quad + 2.0 * paired) / (n * (n - 1)) as f64
}

/// Permutation test on a precomputed pooled Gram matrix (X first).
pub fn permutation_test_gram(
    g: &DMatrix<f64>,
    n: usize,
    alpha: f64,
    n_perm: usize,
    seed: u64,
) -> Result<TestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if n_perm == 0 {
        return Err(invalid("at least one permutation is required"));
    }
    if g.shape() != (2 * n, 2 * n) {
        return Err(invalid("pooled Gram matrix must be 2n × 2n"));
    }
    let (kxx, kyy, kxy) = split_pooled(g, n);
    let statistic = mmd_u_statistic(&kxx, &kyy, &kxy)?;

    let mut perm_stats: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|b| {
            let mut idx: Vec<usize> = (0..2 * n).collect();
            idx.shuffle(&mut child_rng(seed, b as u64));
            permuted_statistic(g, &idx, n)
        })
        .collect();

    let exceed = perm_stats.iter().filter(|s| **s >= statistic).count();
    perm_stats.sort_by(|a, b| a.total_cmp(b));
    let rank = (((1.0 - alpha) * (n_perm + 1) as f64).ceil() as usize).clamp(1, n_perm);
    let threshold = perm_stats[rank - 1];
    Ok(TestResult {
        statistic,
        threshold,
        p_value: (1 + exceed) as f64 / (n_perm + 1) as f64,
        reject: statistic > threshold,
        n_permutations: n_perm,
        alpha,
    })
}

/// Permutation two-sample test. The Gram matrix is built once; each
/// permutation relabels the pooled indices.
pub fn permutation_test(
    k: &KernelSpec,
    x: &FunctionSet,
    y: &FunctionSet,
    alpha: f64,
    n_perm: usize,
    seed: u64,
) -> Result<TestResult> {
    let n = check_pair(x, y)?;
    let g = k.pooled_gram(x, y)?;
    permutation_test_gram(&g, n, alpha, n_perm, seed)
}

/// How each trial of the power harness picks its kernel.
pub enum KernelSelection<'a> {
    Fixed(KernelSpec),
    /// Rebuilt from each trial's data (median heuristic, FPCA fit).
    Recipe(KernelRecipe),
    PerTrial(&'a (dyn Fn(&FunctionSet, &FunctionSet) -> Result<KernelSpec> + Sync)),
}

impl KernelSelection<'_> {
    pub fn test(
        &self,
        x: &FunctionSet,
        y: &FunctionSet,
        alpha: f64,
        n_perm: usize,
        seed: u64,
    ) -> Result<TestResult> {
        match self {
            KernelSelection::Fixed(k) => permutation_test(k, x, y, alpha, n_perm, seed),
            KernelSelection::Recipe(r) => permutation_test(&r.build(x, y)?, x, y, alpha, n_perm, seed),
            KernelSelection::PerTrial(f) => permutation_test(&f(x, y)?, x, y, alpha, n_perm, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerReport {
    pub rejection_rate: f64,
    pub rejections: usize,
    pub n_trials: usize,
    pub trial_seeds: Vec<u64>,
}

impl PowerReport {
    pub fn from_outcomes(outcomes: &[bool], trial_seeds: Vec<u64>) -> Self {
        let rejections = outcomes.iter().filter(|r| **r).count();
        let n_trials = outcomes.len();
        PowerReport {
            rejection_rate: rejections as f64 / n_trials.max(1) as f64,
            rejections,
            n_trials,
            trial_seeds,
        }
    }

    /// Binomial standard error of the rejection rate.
    pub fn stderr(&self) -> f64 {
        let p = self.rejection_rate;
        (p * (1.0 - p) / self.n_trials.max(1) as f64).sqrt()
    }
}

/// Seed of trial `t`; the trial draws data from `child_rng(seed, 0)` and
/// permutes with `derive_seed(seed, 1)`.
pub fn trial_seed(master: u64, t: usize) -> u64 {
    derive_seed(master, t as u64)
}

#[allow(clippy::too_many_arguments)]
pub fn power_harness<P, Q>(
    gen_p: P,
    gen_q: Q,
    n: usize,
    kernel: &KernelSelection<'_>,
    alpha: f64,
    n_trials: usize,
    n_perm: usize,
    seed: u64,
) -> Result<PowerReport>
where
    P: Fn(usize, &mut ChaCha8Rng) -> Result<FunctionSet> + Sync,
    Q: Fn(usize, &mut ChaCha8Rng) -> Result<FunctionSet> + Sync,
{
    if n_trials == 0 {
        return Err(invalid("n_trials must be positive"));
    }
    let seeds: Vec<u64> = (0..n_trials).map(|t| trial_seed(seed, t)).collect();
    let outcomes = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = child_rng(s, 0);
            let x = gen_p(n, &mut rng)?;
            let y = gen_q(n, &mut rng)?;
            Ok(kernel.test(&x, &y, alpha, n_perm, derive_seed(s, 1))?.reject)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(PowerReport::from_outcomes(&outcomes, seeds))
}
