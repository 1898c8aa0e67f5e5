//! Experiment configuration: per-experiment defaults, a flat JSON file and
//! command-line flags, applied in that order.

use std::path::{Path, PathBuf};

use fmmd_core::{Error, KernelRecipe, Result};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Scaling,
    MeanShift,
    VarShift1,
    VarShift2,
    HigherOrder,
    Validate,
    Size,
    Growth,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Scaling,
        Experiment::MeanShift,
        Experiment::VarShift1,
        Experiment::VarShift2,
        Experiment::HigherOrder,
        Experiment::Validate,
        Experiment::Size,
        Experiment::Growth,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Scaling => "scaling",
            Experiment::MeanShift => "mean-shift",
            Experiment::VarShift1 => "var-shift-1",
            Experiment::VarShift2 => "var-shift-2",
            Experiment::HigherOrder => "higher-order",
            Experiment::Validate => "validate",
            Experiment::Size => "size",
            Experiment::Growth => "growth",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| usage(format!("unknown experiment '{s}'")))
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Deviation grid. For `scaling` this is the GP lengthscale grid, with
    /// `0` meaning white noise.
    pub deltas: Vec<f64>,
    /// Samples per group. For `size` and `growth` this is the subsample
    /// size grid `M`.
    pub n: Vec<usize>,
    /// Mesh sizes. Only `scaling` uses more than one.
    pub mesh: Vec<usize>,
    pub kernels: Vec<KernelRecipe>,
    pub alpha: f64,
    /// Monte-Carlo repetitions (the replicate count for `validate`).
    pub trials: usize,
    pub perms: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub data_x: Option<PathBuf>,
    pub data_y: Option<PathBuf>,
}

pub const DEFAULT_SEED: u64 = 20_211_104;
pub const DESK_TRIALS: usize = 100;
pub const DESK_PERMS: usize = 200;
pub const PAPER_TRIALS: usize = 500;
pub const PAPER_PERMS: usize = 1000;

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        use Experiment::*;
        let (deltas, n, mesh): (Vec<f64>, Vec<usize>, Vec<usize>) = match experiment {
            Scaling => (vec![0.0, 0.02, 0.5], vec![50], vec![10, 25, 50, 100, 250]),
            MeanShift => (vec![0.0, 0.5, 1.0, 1.5, 2.0], vec![100], vec![100]),
            VarShift1 => (vec![0.0, 5.0, 10.0, 15.0, 20.0], vec![100], vec![100]),
            VarShift2 => (vec![1.0, 1.2, 1.4, 1.6, 1.8, 2.0], vec![25], vec![500]),
            HigherOrder => (vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![15], vec![100]),
            Validate => (vec![0.0], vec![500], vec![50]),
            Size => (vec![0.0], vec![5, 15, 25], vec![31]),
            Growth => (vec![0.0], vec![5, 15, 25, 35], vec![31]),
        };
        let kernels = match experiment {
            Scaling => vec![KernelRecipe::Id],
            _ => KernelRecipe::ALL.to_vec(),
        };
        let trials = if experiment == Validate { 200 } else { DESK_TRIALS };
        ExperimentConfig {
            experiment,
            deltas,
            n,
            mesh,
            kernels,
            alpha: 0.05,
            trials,
            perms: DESK_PERMS,
            seed: DEFAULT_SEED,
            out: None,
            data_x: None,
            data_y: None,
        }
    }

    /// Defaults, then the JSON file, then flags.
    pub fn resolve(experiment: Experiment, file: Option<&Overrides>, flags: &Overrides) -> Result<Self> {
        let mut cfg = ExperimentConfig::defaults(experiment);
        if let Some(f) = file {
            f.apply(&mut cfg);
        }
        flags.apply(&mut cfg);
        // --paper-scale only fills counts that were not set explicitly
        let paper = flags.paper_scale.or(file.and_then(|f| f.paper_scale)).unwrap_or(false);
        if paper && experiment != Experiment::Validate {
            let explicit = |get: fn(&Overrides) -> Option<usize>| {
                get(flags).or_else(|| file.and_then(get))
            };
            if explicit(|o| o.trials).is_none() {
                cfg.trials = PAPER_TRIALS;
            }
            if explicit(|o| o.perms).is_none() {
                cfg.perms = PAPER_PERMS;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(usage(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.trials == 0 || self.perms == 0 {
            return Err(usage("trials and perms must be positive"));
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|d| !d.is_finite()) {
            return Err(usage("delta grid must be nonempty and finite"));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(usage("sample sizes must be positive"));
        }
        if self.mesh.is_empty() || self.mesh.iter().any(|&m| m < 2) {
            return Err(usage("mesh sizes must be at least 2"));
        }
        if self.kernels.is_empty() {
            return Err(usage("at least one kernel is required"));
        }
        if self.experiment == Experiment::Scaling && self.deltas.iter().any(|l| *l < 0.0) {
            return Err(usage("scaling lengthscales must be nonnegative"));
        }
        Ok(())
    }
}

/// Optional settings from flags or a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub trials: Option<usize>,
    pub perms: Option<usize>,
    pub n: Option<Vec<usize>>,
    pub mesh: Option<Vec<usize>>,
    pub kernels: Option<Vec<KernelRecipe>>,
    pub deltas: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub paper_scale: Option<bool>,
    pub data_x: Option<PathBuf>,
    pub data_y: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($($f:ident => $g:ident),*) => {$(
                if let Some(v) = &self.$f {
                    cfg.$g = v.clone();
                }
            )*};
        }
        set!(seed => seed, alpha => alpha, trials => trials, perms => perms,
             n => n, mesh => mesh, kernels => kernels, deltas => deltas);
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if self.data_x.is_some() {
            cfg.data_x = self.data_x.clone();
        }
        if self.data_y.is_some() {
            cfg.data_y = self.data_y.clone();
        }
    }

    /// Flat JSON object whose keys mirror the flags, e.g.
    /// `{"seed": 3, "n": [5, 15], "kernel": "ID,COV", "paper_scale": true}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Data {
            line: e.line() as u64,
            message: format!("config is not valid JSON: {e}"),
        })?;
        let obj = v
            .as_object()
            .ok_or_else(|| usage("config must be a JSON object"))?;
        let mut o = Overrides::default();
        for (key, val) in obj {
            let bad = || usage(format!("config key '{key}' has an invalid value"));
            match key.replace('-', "_").as_str() {
                "seed" => o.seed = Some(val.as_u64().ok_or_else(bad)?),
                "alpha" => o.alpha = Some(val.as_f64().ok_or_else(bad)?),
                "trials" => o.trials = Some(val.as_u64().ok_or_else(bad)? as usize),
                "perms" => o.perms = Some(val.as_u64().ok_or_else(bad)? as usize),
                "n" => o.n = Some(json_list(val, parse_usize).map_err(|_| bad())?),
                "mesh" => o.mesh = Some(json_list(val, parse_usize).map_err(|_| bad())?),
                "deltas" | "delta" => o.deltas = Some(json_list(val, parse_f64).map_err(|_| bad())?),
                "kernel" | "kernels" => o.kernels = Some(json_list(val, KernelRecipe::parse)?),
                "out" => o.out = Some(PathBuf::from(val.as_str().ok_or_else(bad)?)),
                "data_x" => o.data_x = Some(PathBuf::from(val.as_str().ok_or_else(bad)?)),
                "data_y" => o.data_y = Some(PathBuf::from(val.as_str().ok_or_else(bad)?)),
                "paper_scale" => o.paper_scale = Some(val.as_bool().ok_or_else(bad)?),
                _ => return Err(usage(format!("unknown config key '{key}'"))),
            }
        }
        Ok(o)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Overrides::from_json(&std::fs::read_to_string(path)?)
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| usage(format!("'{s}' is not a nonnegative integer")))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| usage(format!("'{s}' is not a number")))
}

/// Parses a comma-separated list such as `5,15,25`.
pub fn parse_list<T>(s: &str, item: fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(item).collect()
}

pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    parse_list(s, parse_usize)
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    parse_list(s, parse_f64)
}

pub fn parse_kernel_list(s: &str) -> Result<Vec<KernelRecipe>> {
    parse_list(s, |k| KernelRecipe::parse(k.trim()))
}

/// A JSON scalar, array or comma-separated string.
fn json_list<T>(v: &Value, item: fn(&str) -> Result<T>) -> Result<Vec<T>> {
    match v {
        Value::Array(items) => items
            .iter()
            .map(|x| match x {
                Value::String(s) => item(s),
                other => item(&other.to_string()),
            })
            .collect(),
        Value::String(s) => parse_list(s, item),
        Value::Number(n) => Ok(vec![item(&n.to_string())?]),
        _ => Err(usage("expected a list")),
    }
}
