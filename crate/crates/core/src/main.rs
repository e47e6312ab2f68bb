use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gauss_cml::cli::{resolve_out_dir, run_experiment, ExperimentKind};
use gauss_cml::Config;

/// Coupled Gauss map lattice: simulation and scaling analysis.
#[derive(Parser)]
#[command(name = "gauss-cml", version, about)]
struct CliArgs {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory (default: the config's out_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// override a config key, e.g. --set beta=-0.69 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Single-map and coupled-lattice bifurcation scans over beta
    Bifurcation(RunArgs),
    /// F(t) and P(t) decay at one beta, with power-law and corrected fits
    CriticalDecay(RunArgs),
    /// Finite-size scaling collapse over a list of system sizes
    Fss(RunArgs),
    /// Off-critical scaling collapse over a list of distances from beta_c
    OffCritical(RunArgs),
    /// Replica damage spreading: d(t), D(t) and the damage field
    Damage(RunArgs),
    /// Largest Lyapunov exponent over a beta sweep
    Lyapunov(RunArgs),
}

fn execute(kind: ExperimentKind, args: RunArgs) -> gauss_cml::Result<()> {
    let mut config = match &args.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    for assignment in &args.set {
        config.apply_set(assignment)?;
    }
    config.validate()?;
    let out_dir = resolve_out_dir(&config, args.out);
    let record = run_experiment(kind, &config, &out_dir)?;
    eprintln!(
        "{}: wrote {} file(s) to {} in {:.2}s",
        kind.as_str(),
        record.outputs.len() + 1,
        out_dir.display(),
        record.wall_time_s
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = CliArgs::parse();
    let (kind, args) = match cli.command {
        Command::Bifurcation(a) => (ExperimentKind::Bifurcation, a),
        Command::CriticalDecay(a) => (ExperimentKind::CriticalDecay, a),
        Command::Fss(a) => (ExperimentKind::Fss, a),
        Command::OffCritical(a) => (ExperimentKind::OffCritical, a),
        Command::Damage(a) => (ExperimentKind::Damage, a),
        Command::Lyapunov(a) => (ExperimentKind::Lyapunov, a),
    };
    match execute(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
