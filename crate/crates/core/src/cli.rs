//! `cavsim` command line: `run`, `compare` and `validate`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::io::{load_config, write_results, Comparison, ConfigError, ModeSelection, ScenarioConfig};
use crate::sim::{run_scenario, Mode, ScenarioResult, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "cavsim",
    version,
    about = "Corridor coordination of connected automated vehicles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Optimal,
    Baseline,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write trajectories, metrics and schedule.
    Run {
        /// Scenario TOML file.
        config: PathBuf,
        /// Overrides `simulation.mode`.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Output directory; `both` writes one subdirectory per mode.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Trajectory sampling interval.
        #[arg(long, value_name = "SECONDS")]
        sample_dt: Option<f64>,
    },
    /// Run both modes and report relative differences.
    Compare {
        /// Scenario TOML file.
        config: PathBuf,
        /// Also write both result sets and `comparison.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Trajectory sampling interval.
        #[arg(long, value_name = "SECONDS")]
        sample_dt: Option<f64>,
    },
    /// Check a configuration without simulating.
    Validate {
        /// Scenario TOML file.
        config: PathBuf,
    },
}

enum Failure {
    Config(String),
    Infeasible(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Infeasible(_) => EXIT_INFEASIBLE,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Infeasible(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Infeasible(e.to_string())
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn cli_main<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
            } else {
                let _ = write!(stdout, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message());
            f.code()
        }
    }
}

fn load(path: &Path, sample_dt: Option<f64>) -> Result<ScenarioConfig, Failure> {
    let mut cfg = load_config(path)?;
    if let Some(dt) = sample_dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Failure::Config("--sample-dt must be > 0".into()));
        }
        cfg.simulation.sample_dt = dt;
    }
    Ok(cfg)
}

fn output_dir(cfg: &ScenarioConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| cfg.simulation.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn save(result: &ScenarioResult, dir: &Path, stdout: &mut dyn Write) -> Result<(), Failure> {
    let files = write_results(result, dir).map_err(|e| Failure::Config(e.to_string()))?;
    for f in files {
        let _ = writeln!(stdout, "wrote {}", f.display());
    }
    Ok(())
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Validate { config } => {
            let cfg = load(&config, None)?;
            let _ = writeln!(
                stdout,
                "{}: ok ({} zones, {} routes, {} arrivals)",
                config.display(),
                cfg.corridor.zones.len(),
                cfg.routes.len(),
                cfg.all_arrivals().len()
            );
            Ok(())
        }
        Command::Run {
            config,
            mode,
            out,
            sample_dt,
        } => {
            let cfg = load(&config, sample_dt)?;
            let selection = match mode {
                Some(ModeArg::Optimal) => ModeSelection::Optimal,
                Some(ModeArg::Baseline) => ModeSelection::Baseline,
                Some(ModeArg::Both) => ModeSelection::Both,
                None => cfg.simulation.mode,
            };
            let dir = output_dir(&cfg, out);
            let scenario = cfg.scenario();
            let modes: &[Mode] = match selection {
                ModeSelection::Optimal => &[Mode::Optimal],
                ModeSelection::Baseline => &[Mode::Baseline],
                ModeSelection::Both => &[Mode::Optimal, Mode::Baseline],
            };
            for &m in modes {
                let result = run_scenario(&scenario, m)?;
                let target = if modes.len() > 1 {
                    dir.join(m.as_str())
                } else {
                    dir.clone()
                };
                save(&result, &target, stdout)?;
            }
            Ok(())
        }
        Command::Compare { config, out, sample_dt } => {
            let cfg = load(&config, sample_dt)?;
            let scenario = cfg.scenario();
            let optimal = run_scenario(&scenario, Mode::Optimal)?;
            let baseline = run_scenario(&scenario, Mode::Baseline)?;
            let cmp = Comparison::new(&optimal, &baseline);
            if let Some(dir) = out {
                save(&optimal, &dir.join("optimal"), stdout)?;
                save(&baseline, &dir.join("baseline"), stdout)?;
                let path = dir.join("comparison.json");
                std::fs::write(&path, cmp.to_json())
                    .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
                let _ = writeln!(stdout, "wrote {}", path.display());
            }
            let _ = write!(stdout, "{}", cmp.report());
            Ok(())
        }
    }
}
