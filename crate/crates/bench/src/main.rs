use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fmmd_bench::config::{parse_f64_list, parse_kernel_list, parse_usize_list};
use fmmd_bench::experiments::{run_benchmark, run_growth, run_scaling, run_size, run_validate};
use fmmd_bench::output::emit;
use fmmd_bench::{Experiment, ExperimentConfig, Overrides};
use fmmd_core::{Error, Result};

/// Power experiments for kernel two-sample tests on functional data.
#[derive(Parser)]
#[command(name = "fmmd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean shift between GPs as the mesh is refined (δ grid = SE lengthscales, 0 = white noise)
    Scaling(Flags),
    /// Mean shift `δ·t` against a Brownian-type process
    MeanShift(Flags),
    /// Variance scaling of the leading coefficients
    #[command(name = "var-shift-1")]
    VarShift1(Flags),
    /// Heavy-tailed coefficients against a rescaled copy
    #[command(name = "var-shift-2")]
    VarShift2(Flags),
    /// Reconstructed sparse curves differing beyond second order
    HigherOrder(Flags),
    /// Closed-form MMD against Monte-Carlo U-statistics
    Validate(Flags),
    /// Test size from disjoint subsamples of one pool
    Size(Flags),
    /// Power between two groups of curves
    Growth(Flags),
}

#[derive(Args, Default)]
struct Flags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    perms: Option<usize>,
    /// Sample sizes per group, comma separated
    #[arg(long)]
    n: Option<String>,
    /// Mesh sizes, comma separated
    #[arg(long)]
    mesh: Option<String>,
    /// Kernel recipes, comma separated (ID, CEXP, SQR, FPCA, COV)
    #[arg(long)]
    kernel: Option<String>,
    /// Effect sizes, comma separated
    #[arg(long)]
    deltas: Option<String>,
    /// Output CSV; stdout if omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// 500 trials and 1000 permutations unless set explicitly
    #[arg(long)]
    paper_scale: bool,
    /// JSON file of settings, overridden by flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Function-set CSV for the first group
    #[arg(long)]
    data_x: Option<PathBuf>,
    /// Function-set CSV for the second group
    #[arg(long)]
    data_y: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Result<Overrides> {
        Ok(Overrides {
            seed: self.seed,
            alpha: self.alpha,
            trials: self.trials,
            perms: self.perms,
            n: self.n.as_deref().map(parse_usize_list).transpose()?,
            mesh: self.mesh.as_deref().map(parse_usize_list).transpose()?,
            kernels: self.kernel.as_deref().map(parse_kernel_list).transpose()?,
            deltas: self.deltas.as_deref().map(parse_f64_list).transpose()?,
            out: self.out.clone(),
            paper_scale: self.paper_scale.then_some(true),
            data_x: self.data_x.clone(),
            data_y: self.data_y.clone(),
        })
    }
}

fn split(cmd: Command) -> (Experiment, Flags) {
    match cmd {
        Command::Scaling(f) => (Experiment::Scaling, f),
        Command::MeanShift(f) => (Experiment::MeanShift, f),
        Command::VarShift1(f) => (Experiment::VarShift1, f),
        Command::VarShift2(f) => (Experiment::VarShift2, f),
        Command::HigherOrder(f) => (Experiment::HigherOrder, f),
        Command::Validate(f) => (Experiment::Validate, f),
        Command::Size(f) => (Experiment::Size, f),
        Command::Growth(f) => (Experiment::Growth, f),
    }
}

/// Returns whether any validation row was flagged.
fn run(cmd: Command) -> Result<bool> {
    let (experiment, flags) = split(cmd);
    let file = flags.config.as_deref().map(Overrides::from_json_file).transpose()?;
    let cfg = ExperimentConfig::resolve(experiment, file.as_ref(), &flags.overrides()?)?;
    let out = cfg.out.as_deref();
    match experiment {
        Experiment::Scaling => emit(out, &run_scaling(&cfg)?)?,
        Experiment::Size => emit(out, &run_size(&cfg)?)?,
        Experiment::Growth => emit(out, &run_growth(&cfg)?)?,
        Experiment::Validate => {
            let rows = run_validate(&cfg)?;
            emit(out, &rows)?;
            return Ok(rows.iter().any(|r| r.flag));
        }
        _ => emit(out, &run_benchmark(&cfg)?)?,
    }
    Ok(false)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("fmmd: closed form and Monte-Carlo mean differ by more than 3 standard errors");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("fmmd: {e}");
            ExitCode::from(match e {
                Error::InvalidArgument(_) => 2,
                Error::Data { .. } | Error::Io(_) => 3,
                _ => 1,
            })
        }
    }
}
