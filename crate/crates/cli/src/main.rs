use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use coepi::config::ScenarioConfig;
use coepi::error::CliError;
use coepi::generator::{generate_scenario, GeneratorSpec, TargetRegime};
use coepi::output::Summary;
use coepi::run::{self, ensure_dir, SUMMARY_FILE};
use coepi::Scenario;
use coepi_core::analysis::EnumerationOptions;
use coepi_core::control::SearchMode;

#[derive(Parser)]
#[command(name = "coepi", version, about = "Coupled SIS epidemic and signed opinion dynamics")]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Do not print the report to stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Greedy,
    Exhaustive,
}

impl From<Mode> for SearchMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Greedy => SearchMode::Greedy,
            Mode::Exhaustive => SearchMode::Exhaustive,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Mild,
    Severe,
    Moderate,
}

impl From<RegimeArg> for TargetRegime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Mild => TargetRegime::Mild,
            RegimeArg::Severe => TargetRegime::Severe,
            RegimeArg::Moderate => TargetRegime::Moderate,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the scenario and write trajectory.csv, plot.dat, summary.toml.
    Simulate,
    /// Report R_min, R_max and the regime.
    Classify,
    /// Enumerate equilibria and their stability.
    Equilibria {
        /// Enumerate all sign patterns while 2^n stays within this cap.
        #[arg(long, default_value_t = 1 << 16)]
        pattern_cap: usize,
        /// Patterns drawn when 2^n exceeds the cap.
        #[arg(long, default_value_t = 1 << 16)]
        samples: usize,
    },
    /// Uniform threshold opinion with R(alpha e) = 1.
    Threshold {
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Smallest set of communities to pin at +0.5.
    SelectStubborn {
        #[arg(long, value_enum, default_value_t = Mode::Greedy)]
        mode: Mode,
    },
    /// Simulate with the scenario's stubborn set (or a selected one).
    VerifyPlan {
        #[arg(long, value_enum, default_value_t = Mode::Greedy)]
        mode: Mode,
    },
    /// Write a random scenario in the requested regime.
    Generate {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, value_enum)]
        regime: RegimeArg,
        #[arg(long, default_value_t = 0.3)]
        density: f64,
        /// Draw an independent topology for the opinion graph.
        #[arg(long)]
        separate_opinion_graph: bool,
    },
    /// Compare the analytic Jacobian with central differences.
    JacobianCheck {
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
}

fn load_scenario(cli: &Cli) -> Result<Scenario, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.resolve(base)
}

fn emit(cli: &Cli, text: &str) {
    if !cli.quiet {
        print!("{text}");
    }
}

fn report(cli: &Cli, s: &Summary, write: bool) -> Result<(), CliError> {
    if write {
        ensure_dir(&cli.out)?;
        s.write(&cli.out.join(SUMMARY_FILE))?;
    }
    emit(cli, &s.to_toml_string());
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate {
            n,
            regime,
            density,
            separate_opinion_graph,
        } => {
            let mut spec = GeneratorSpec::new(*n, (*regime).into());
            spec.edge_density = *density;
            spec.same_topology_for_opinions = !separate_opinion_graph;
            let cfg = generate_scenario(&spec, cli.seed.unwrap_or(0))?;
            let text = cfg.to_toml_string();
            ensure_dir(&cli.out)?;
            let path = cli.out.join("scenario.toml");
            fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
            emit(cli, &text);
        }
        Command::Simulate => {
            let sc = load_scenario(cli)?;
            let s = run::run(&sc, &cli.out)?;
            emit(cli, &s.to_toml_string());
        }
        Command::Classify => report(cli, &run::classify(&load_scenario(cli)?)?, true)?,
        Command::Equilibria {
            pattern_cap,
            samples,
        } => {
            let sc = load_scenario(cli)?;
            let opts = EnumerationOptions {
                pattern_cap: *pattern_cap,
                samples: *samples,
                seed: sc.seed,
            };
            report(cli, &run::equilibria_summary(&sc, &opts)?, true)?;
        }
        Command::Threshold { tol } => report(cli, &run::threshold(&load_scenario(cli)?, *tol)?, true)?,
        Command::SelectStubborn { mode } => {
            report(cli, &run::select_stubborn(&load_scenario(cli)?, (*mode).into())?, true)?
        }
        Command::VerifyPlan { mode } => {
            let sc = load_scenario(cli)?;
            let s = run::verify(&sc, (*mode).into(), &cli.out)?;
            emit(cli, &s.to_toml_string());
        }
        Command::JacobianCheck { samples, step, tol } => {
            let sc = load_scenario(cli)?;
            let check = run::jacobian_check(&sc, *samples, *step, *tol)?;
            let text = toml::to_string(&check).expect("check serializes");
            ensure_dir(&cli.out)?;
            let path = cli.out.join("jacobian_check.toml");
            fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
            emit(cli, &text);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let text = toml::to_string(&e.record()).expect("error record serializes");
            eprint!("{text}");
            if fs::create_dir_all(&cli.out).is_ok() {
                let _ = fs::write(cli.out.join("error.toml"), &text);
            }
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
