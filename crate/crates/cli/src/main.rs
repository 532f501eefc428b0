mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kerrfb::config::{ExperimentConfig, Profile};
use kerrfb::dynamics::SteadyStateMethod;
use kerrfb::Error;

#[derive(Parser, Debug)]
#[command(name = "kerrfb", version, about = "Kerr cavity bistability under coherent feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overwrite truncation and horizons with a preset.
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
    /// Output directory; takes precedence over KERRFB_OUTPUT_DIR and the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for ensembles and sweeps.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProfileArg {
    Desk,
    Full,
}

#[derive(Args, Debug, Clone)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Average this many trajectories instead of writing a single one.
    #[arg(long, default_value_t = 1)]
    pub ensemble: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ClosedTrajectoryArgs {
    #[command(flatten)]
    pub traj: TrajectoryArgs,
    #[arg(long)]
    pub phi: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
pub enum LoopKind {
    Open,
    Static,
    Closed,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    NullSpace,
    LongTime,
    Auto,
}

impl From<MethodArg> for SteadyStateMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::NullSpace => SteadyStateMethod::NullSpace,
            MethodArg::LongTime => SteadyStateMethod::LongTime,
            MethodArg::Auto => SteadyStateMethod::Auto,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SteadyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "loop", value_enum, default_value = "open")]
    pub loop_kind: LoopKind,
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of grid points.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Quantum-jump trajectory of the driven plant alone.
    OpenloopTrajectory(TrajectoryArgs),
    /// Quantum-jump trajectory of plant and controller in the feedback loop.
    ClosedloopTrajectory(ClosedTrajectoryArgs),
    /// Steady state of the open, static-feedback or closed-loop model.
    SteadyState(SteadyArgs),
    /// Controller steady-state phase against drive amplitude.
    PhaseCurve(GridArgs),
    /// Closed-loop plant bistability across loop phases.
    PhiSweep(GridArgs),
    /// Relaxation timescales of the open loop and each configured phase.
    Regression(GridArgs),
}

/// Loads the configuration and applies command-line overrides.
pub fn load_config(common: &Common) -> kerrfb::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = common.profile {
        cfg.apply_profile(match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Full => Profile::Full,
        });
    }
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        cfg.sweep.workers = w;
    }
    Ok(cfg)
}

pub fn output_dir(common: &Common, cfg: &ExperimentConfig, command: &str) -> PathBuf {
    common
        .out
        .clone()
        .unwrap_or_else(|| cfg.resolved_output_dir())
        .join(command)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::OpenloopTrajectory(a) => commands::trajectory(a, None),
        Command::ClosedloopTrajectory(a) => commands::trajectory(&a.traj, Some(a.phi)),
        Command::SteadyState(a) => commands::steady(a),
        Command::PhaseCurve(a) => commands::phase_curve(a),
        Command::PhiSweep(a) => commands::phi_sweep(a),
        Command::Regression(a) => commands::regression(a),
    };
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
