use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fredholm::config::ExperimentConfig;
use fredholm::{CliError, Mode, Pool};

#[derive(Parser)]
#[command(name = "fredholm", version, about = "Monte-Carlo solver for Fredholm equations of the second kind")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate y on the grid with a confidence band.
    Solve(Common),
    /// Estimate the parametric integral ∫ K(t, x) f(x) μ(dx).
    Integrate(Common),
    /// Estimate y′ (1-D problems with a kernel derivative).
    Derivative(Common),
    /// Geometric-length estimator for y = f + λ S y.
    Geometric(Common),
    /// Write allocation.json only.
    Allocate(Common),
    /// Sup-error against budget for each rate method.
    RateStudy(Common),
    /// Empirical coverage of the Gauss-sim band.
    CoverageStudy(Common),
    /// Print the normalized configuration.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    per_term: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(b) = self.budget {
            cfg.budget = b;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        cfg.per_term |= self.per_term;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cmd: Command) -> Result<(), CliError> {
    let (mode, common) = match &cmd {
        Command::Solve(c) => (Some(Mode::Solve), c),
        Command::Integrate(c) => (Some(Mode::Integrate), c),
        Command::Derivative(c) => (Some(Mode::Derivative), c),
        Command::Geometric(c) => (Some(Mode::Geometric), c),
        Command::Allocate(c) => (Some(Mode::AllocateOnly), c),
        Command::RateStudy(c) => (Some(Mode::RateStudy), c),
        Command::CoverageStudy(c) => (Some(Mode::CoverageStudy), c),
        Command::Validate(c) => (None, c),
    };
    let mut cfg = common.load()?;
    let Some(mode) = mode else {
        println!("{}", cfg.to_pretty_json());
        return Ok(());
    };
    cfg.mode = mode;
    let pool = Pool::new(cfg.workers).map_err(|e| CliError::Other(e.to_string()))?;
    let summary = fredholm::run(&cfg, &pool)?;
    for line in &summary.lines {
        println!("{line}");
    }
    println!("wrote {} artifacts to {}", summary.artifacts.len(), summary.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
