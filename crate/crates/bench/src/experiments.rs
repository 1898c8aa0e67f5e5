//! Experiment drivers. Each grid cell gets a seed derived from the master
//! seed and its grid position, shared by all kernels so that kernels are
//! compared on identical data.

use std::sync::Arc;

use fmmd_core::estimators::{trial_seed, KernelSelection, PowerReport};
use fmmd_core::seed::{child_rng, derive_seed};
use fmmd_core::{
    closed_form_mmd, kernel_operator, load_function_set, mmd_u_statistic, power_harness,
    xi_general, Error, FeatureMap, FunctionSample, FunctionSet, GaussianSpec, GroundKernel,
    KernelRecipe, KernelSpec, Mesh, OperatorTriple, Result,
};
use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig};
use crate::generators::{
    gp_mean_shift, higher_order, mean_shift, synthetic_growth_pool, var_shift_1, var_shift_2,
    Scenario,
};
use crate::output::{PowerRow, ValidateRow};

pub type Selector = Box<dyn Fn(&FunctionSet, &FunctionSet) -> Result<KernelSpec> + Send + Sync>;

/// Per-trial kernel construction for `recipe`. Mesh-only parts (the CEXP
/// integral operator) are built once.
pub fn selector(recipe: KernelRecipe, mesh: &Arc<Mesh>) -> Result<Selector> {
    match recipe {
        KernelRecipe::Cexp => {
            let map = FeatureMap::integral_op(
                GroundKernel::cosine_exponential(20, 10f64.sqrt())?,
                mesh.clone(),
            )?;
            Ok(Box::new(move |x, y| KernelSpec::se_t_median(map.clone(), x, y)))
        }
        r => Ok(Box::new(move |x, y| r.build(x, y))),
    }
}

pub fn cell_seed(master: u64, i: usize, j: usize) -> u64 {
    derive_seed(derive_seed(master, i as u64), j as u64)
}

fn row(experiment: &str, kernel: KernelRecipe, delta: f64, n: usize, mesh: usize, rep: &PowerReport, seed: u64) -> PowerRow {
    PowerRow {
        experiment: experiment.to_string(),
        kernel: kernel.name().to_string(),
        delta,
        n,
        mesh,
        power: rep.rejection_rate,
        stderr: rep.stderr(),
        seed,
    }
}

/// Power for every `(δ, N, n, kernel)` cell of the configuration.
pub fn power_grid<S>(cfg: &ExperimentConfig, name: &str, scenario: S) -> Result<Vec<PowerRow>>
where
    S: Fn(f64, usize) -> Result<Scenario> + Sync,
{
    let cells: Vec<(usize, f64, usize, usize)> = cfg
        .deltas
        .iter()
        .enumerate()
        .flat_map(|(i, &d)| cfg.mesh.iter().enumerate().map(move |(j, &m)| (i, d, j, m)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(i, delta, j, mesh_n)| {
            let sc = scenario(delta, mesh_n)?;
            let seed = cell_seed(cfg.seed, i, j);
            let mut rows = Vec::new();
            for &n in &cfg.n {
                for &recipe in &cfg.kernels {
                    let sel = selector(recipe, &sc.mesh)?;
                    let rep = power_harness(
                        &sc.p,
                        &sc.q,
                        n,
                        &KernelSelection::PerTrial(&*sel),
                        cfg.alpha,
                        cfg.trials,
                        cfg.perms,
                        seed,
                    )?;
                    rows.push(row(name, recipe, delta, n, sc.mesh.len(), &rep, seed));
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Mean shift `m ≡ 0.05` between GPs with SE covariance of lengthscale
/// `l` (the δ grid; `l = 0` is white noise), across the mesh grid. Rows
/// named `scaling-null` repeat the grid with no shift.
pub fn run_scaling(cfg: &ExperimentConfig) -> Result<Vec<PowerRow>> {
    let mut rows = power_grid(cfg, "scaling", |l, n| gp_mean_shift(l, 0.05, n))?;
    rows.extend(power_grid(cfg, "scaling-null", |l, n| gp_mean_shift(l, 0.0, n))?);
    Ok(rows)
}

pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<Vec<PowerRow>> {
    let name = cfg.experiment.name();
    match cfg.experiment {
        Experiment::MeanShift => power_grid(cfg, name, mean_shift),
        Experiment::VarShift1 => power_grid(cfg, name, var_shift_1),
        Experiment::VarShift2 => power_grid(cfg, name, var_shift_2),
        Experiment::HigherOrder => power_grid(cfg, name, higher_order),
        other => Err(Error::InvalidArgument(format!("'{other}' is not a benchmark experiment"))),
    }
}

/// Rejection rate over trials whose two samples come from `draw`.
pub fn resampled_power<D>(draw: D, sel: &Selector, cfg: &ExperimentConfig, seed: u64) -> Result<PowerReport>
where
    D: Fn(&mut ChaCha8Rng) -> Result<(FunctionSet, FunctionSet)> + Sync,
{
    let seeds: Vec<u64> = (0..cfg.trials).map(|t| trial_seed(seed, t)).collect();
    let selection = KernelSelection::PerTrial(&**sel);
    let outcomes = seeds
        .par_iter()
        .map(|&s| {
            let (x, y) = draw(&mut child_rng(s, 0))?;
            Ok(selection.test(&x, &y, cfg.alpha, cfg.perms, derive_seed(s, 1))?.reject)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(PowerReport::from_outcomes(&outcomes, seeds))
}

pub const SYNTHETIC_POOL_SIZE: usize = 54;

/// Null pool for `size`: `--data-x` if given, else synthetic growth curves.
pub fn size_pool(cfg: &ExperimentConfig) -> Result<FunctionSet> {
    match &cfg.data_x {
        Some(p) => Ok(load_function_set(p)?.set),
        None => synthetic_growth_pool(SYNTHETIC_POOL_SIZE, &mut child_rng(cfg.seed, u64::MAX)),
    }
}

/// Rejection rate for two disjoint size-`M` subsamples of one pool.
pub fn run_size(cfg: &ExperimentConfig) -> Result<Vec<PowerRow>> {
    let pool = size_pool(cfg)?;
    size_table(cfg, &pool)
}

pub fn size_table(cfg: &ExperimentConfig, pool: &FunctionSet) -> Result<Vec<PowerRow>> {
    let mut rows = Vec::new();
    for (i, &m) in cfg.n.iter().enumerate() {
        if 2 * m > pool.len() {
            return Err(Error::InvalidArgument(format!(
                "two disjoint subsamples of size {m} need {} curves, the pool has {}",
                2 * m,
                pool.len()
            )));
        }
        let seed = cell_seed(cfg.seed, i, 0);
        for &recipe in &cfg.kernels {
            let sel = selector(recipe, pool.mesh())?;
            let draw = |rng: &mut ChaCha8Rng| {
                let idx = sample_indices(rng, pool.len(), 2 * m).into_vec();
                Ok((pool.select(&idx[..m]), pool.select(&idx[m..])))
            };
            let rep = resampled_power(draw, &sel, cfg, seed)?;
            rows.push(row("size", recipe, 0.0, m, pool.mesh().len(), &rep, seed));
        }
    }
    Ok(rows)
}

/// Power for size-`M` subsamples drawn from the two groups.
pub fn run_growth(cfg: &ExperimentConfig) -> Result<Vec<PowerRow>> {
    let (Some(px), Some(py)) = (&cfg.data_x, &cfg.data_y) else {
        return Err(Error::InvalidArgument(
            "growth needs --data-x and --data-y function-set CSV files".into(),
        ));
    };
    let x = load_function_set(px)?.set;
    let y = load_function_set(py)?.set;
    growth_table(cfg, &x, &y)
}

pub fn growth_table(cfg: &ExperimentConfig, x: &FunctionSet, y: &FunctionSet) -> Result<Vec<PowerRow>> {
    if !fmmd_core::mesh::same_mesh(x.mesh(), y.mesh()) {
        return Err(Error::IncompatibleMesh);
    }
    let mut rows = Vec::new();
    for (i, &m) in cfg.n.iter().enumerate() {
        if m > x.len() || m > y.len() {
            return Err(Error::InvalidArgument(format!(
                "subsample size {m} exceeds a group size ({} and {})",
                x.len(),
                y.len()
            )));
        }
        let seed = cell_seed(cfg.seed, i, 0);
        for &recipe in &cfg.kernels {
            let sel = selector(recipe, x.mesh())?;
            let draw = |rng: &mut ChaCha8Rng| {
                let ix = sample_indices(rng, x.len(), m).into_vec();
                let iy = sample_indices(rng, y.len(), m).into_vec();
                Ok((x.select(&ix), y.select(&iy)))
            };
            let rep = resampled_power(draw, &sel, cfg, seed)?;
            rows.push(row("growth", recipe, 0.0, m, x.mesh().len(), &rep, seed));
        }
    }
    Ok(rows)
}

/// Two Gaussian measures and an SE-T kernel with a linear map.
pub struct BatteryCase {
    pub name: String,
    pub p: GaussianSpec,
    pub q: GaussianSpec,
    pub kernel: KernelSpec,
}

impl BatteryCase {
    pub fn ops(&self) -> Result<OperatorTriple> {
        let t = kernel_operator(&self.kernel, self.p.mesh())?;
        OperatorTriple::new(t, self.p.operator(), self.q.operator())
    }

    pub fn closed_form(&self) -> Result<f64> {
        closed_form_mmd(&self.ops()?, &self.p.mean_coords(), &self.q.mean_coords())
    }

    /// `(ξ₁, ξ₂)` when the operators commute.
    pub fn xi(&self) -> Result<Option<(f64, f64)>> {
        let ops = self.ops()?;
        if !ops.commuting() {
            return Ok(None);
        }
        xi_general(&ops, &self.p.mean_coords(), &self.q.mean_coords()).map(Some)
    }
}

/// Cases on a uniform mesh of `[0, 1]`: identical laws, a mean shift, a
/// covariance scaling, a mean shift seen through a smoothing operator, and
/// a pair whose covariances do not commute.
pub fn validation_battery(mesh_n: usize) -> Result<Vec<BatteryCase>> {
    let mesh = Mesh::uniform(mesh_n, (0.0, 1.0))?;
    let se = GroundKernel::squared_exponential(0.2)?;
    let zero = FunctionSample::zeros(mesh.clone());
    let gp = |mean: FunctionSample, k: GroundKernel| GaussianSpec::from_ground(mean, k);
    let id = || KernelSpec::se_t(FeatureMap::Identity, vec![1.0]);
    let ramp = FunctionSample::from_fn(mesh.clone(), |t| 0.8 * t)?;
    Ok(vec![
        BatteryCase {
            name: "identical".into(),
            p: gp(zero.clone(), se)?,
            q: gp(zero.clone(), se)?,
            kernel: id()?,
        },
        BatteryCase {
            name: "mean-shift".into(),
            p: gp(zero.clone(), se)?,
            q: gp(ramp.clone(), se)?,
            kernel: id()?,
        },
        BatteryCase {
            name: "cov-shift".into(),
            p: gp(zero.clone(), se)?,
            q: GaussianSpec::new(zero.clone(), se.gram(&mesh) * 2.0)?,
            kernel: id()?,
        },
        BatteryCase {
            name: "smoothed-mean-shift".into(),
            p: gp(zero.clone(), se)?,
            q: gp(FunctionSample::constant(mesh.clone(), 0.5)?, se)?,
            kernel: KernelSpec::se_t(FeatureMap::integral_op(se, mesh.clone())?, vec![0.5])?,
        },
        BatteryCase {
            name: "non-commuting".into(),
            p: gp(zero, se)?,
            q: gp(FunctionSample::from_fn(mesh.clone(), |t| 0.3 * t)?, GroundKernel::matern15(0.3)?)?,
            kernel: id()?,
        },
    ])
}

/// One-point mesh with unit weight: `N(0, 1)` against `N(1, 1)`.
pub fn scalar_case() -> Result<BatteryCase> {
    let mesh = Mesh::new(vec![0.5], vec![1.0], (0.0, 1.0))?;
    let one = DMatrix::from_element(1, 1, 1.0);
    Ok(BatteryCase {
        name: "scalar".into(),
        p: GaussianSpec::new(FunctionSample::zeros(mesh.clone()), one.clone())?,
        q: GaussianSpec::new(FunctionSample::constant(mesh, 1.0)?, one)?,
        kernel: KernelSpec::se_t(FeatureMap::Identity, vec![1.0])?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub mean: f64,
    pub se: f64,
    /// Sample variance of `h` over disjoint consecutive pairs.
    pub h_var: f64,
}

/// `reps` U-statistics with `n` draws per measure.
pub fn monte_carlo(case: &BatteryCase, n: usize, reps: usize, seed: u64) -> Result<McSummary> {
    if reps < 2 || n < 2 {
        return Err(Error::InvalidArgument("need at least 2 replicates of 2 samples".into()));
    }
    let sp = case.p.sampler()?;
    let sq = case.q.sampler()?;
    let per_rep = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = child_rng(derive_seed(seed, r as u64), 0);
            let x = sp.sample(n, &mut rng);
            let y = sq.sample(n, &mut rng);
            let (kxx, kyy, kxy) = case.kernel.gram_matrices(&x, &y)?;
            let u = mmd_u_statistic(&kxx, &kyy, &kxy)?;
            let h: Vec<f64> = (0..n / 2)
                .map(|i| {
                    let (a, b) = (2 * i, 2 * i + 1);
                    kxx[(a, b)] + kyy[(a, b)] - kxy[(a, b)] - kxy[(b, a)]
                })
                .collect();
            Ok((u, h))
        })
        .collect::<Result<Vec<_>>>()?;
    let us: Vec<f64> = per_rep.iter().map(|(u, _)| *u).collect();
    let hs: Vec<f64> = per_rep.into_iter().flat_map(|(_, h)| h).collect();
    let (mean, var) = mean_var(&us);
    let (_, h_var) = mean_var(&hs);
    Ok(McSummary {
        mean,
        se: (var / reps as f64).sqrt(),
        h_var,
    })
}

/// Mean and unbiased variance.
pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn validate_case(case: &BatteryCase, n: usize, reps: usize, seed: u64) -> Result<ValidateRow> {
    let cf = case.closed_form()?;
    let mc = monte_carlo(case, n, reps, seed)?;
    let xi2 = case.xi()?.map(|(_, x2)| x2).unwrap_or(f64::NAN);
    Ok(ValidateRow {
        case: case.name.clone(),
        closed_form: cf,
        mc_mean: mc.mean,
        mc_se: mc.se,
        xi2_theory: xi2,
        xi2_empirical: mc.h_var,
        flag: (mc.mean - cf).abs() > 3.0 * mc.se,
    })
}

/// Closed forms against Monte-Carlo U-statistics for the battery on
/// `cfg.mesh[0]` points plus the scalar case; `cfg.trials` replicates of
/// `cfg.n[0]` samples each.
pub fn run_validate(cfg: &ExperimentConfig) -> Result<Vec<ValidateRow>> {
    let mut cases = validation_battery(cfg.mesh[0])?;
    cases.push(scalar_case()?);
    cases
        .iter()
        .enumerate()
        .map(|(i, c)| validate_case(c, cfg.n[0], cfg.trials, cell_seed(cfg.seed, i, 0)))
        .collect()
}
