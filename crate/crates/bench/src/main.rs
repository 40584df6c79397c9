use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use stiffexp_bench::commands::{self, CommandError, DEFAULT_COST_TARGETS, EXIT_CONFIG, EXIT_OK};
use stiffexp_bench::config::ConfigError;
use stiffexp_bench::RunConfig;

/// Exponential and classical integrators on the Beeler-Reuter model.
///
/// Settings come from defaults, then `--config`, then `--set`, then the
/// dedicated flags. Exit codes: 0 success, 2 divergence, 3 biomarkers
/// undefined, 4 configuration error.
#[derive(Debug, Parser)]
#[command(name = "stiffexp", version)]
struct Cli {
    /// Plain-text `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` setting (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Scheme family (`RL`) or full name (`RL_3`).
    #[arg(long, global = true)]
    scheme: Option<String>,
    #[arg(long, global = true)]
    order: Option<usize>,
    /// Step size in ms.
    #[arg(long, global = true, conflicts_with = "m")]
    h: Option<f64>,
    /// Number of steps.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Reference refinement exponent.
    #[arg(long, global = true)]
    r: Option<u32>,
    /// Final time in ms.
    #[arg(long = "T", global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Timing repeats per cell; 0 skips timing in `converge`.
    #[arg(long, global = true)]
    repeats: Option<usize>,
    /// Expectations file to check the results against.
    #[arg(long, global = true)]
    expectations: Option<PathBuf>,
    /// Comma-separated scheme list, or `all`.
    #[arg(long, global = true)]
    schemes: Option<String>,
    /// Comma-separated step sizes.
    #[arg(long, global = true)]
    steps: Option<String>,
    /// Directory for two-column plot data.
    #[arg(long, global = true)]
    plot_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate once, write the trajectory and print biomarkers.
    Run,
    /// Compute or reuse the cached RK_4 reference.
    Reference,
    /// Errors and fitted orders over the scheme and step grid.
    Converge,
    /// CPU time against accuracy.
    Cost {
        /// Errors at which to interpolate the cost.
        #[arg(long, value_delimiter = ',')]
        target: Vec<f64>,
    },
    /// Stable or diverged, per scheme and step.
    Stability,
}

fn build_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    let path = |p: &PathBuf| p.display().to_string();
    let overrides: [(&str, Option<String>); 13] = [
        ("scheme", cli.scheme.clone()),
        ("order", cli.order.map(|v| v.to_string())),
        ("h", cli.h.map(|v| v.to_string())),
        ("m", cli.m.map(|v| v.to_string())),
        ("r", cli.r.map(|v| v.to_string())),
        ("T", cli.horizon.map(|v| v.to_string())),
        ("out", cli.out.as_ref().map(path)),
        ("repeats", cli.repeats.map(|v| v.to_string())),
        ("expectations", cli.expectations.as_ref().map(path)),
        ("schemes", cli.schemes.clone()),
        ("steps", cli.steps.clone()),
        ("plot_dir", cli.plot_dir.as_ref().map(path)),
        ("cache_dir", cli.cache_dir.as_ref().map(path)),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<i32, CommandError> {
    let mut out = std::io::stdout().lock();
    match &cli.command {
        Command::Run => commands::cmd_run(cfg, &mut out),
        Command::Reference => commands::cmd_reference(cfg, &mut out),
        Command::Converge => commands::cmd_converge(cfg, &mut out).map(|r| r.0),
        Command::Cost { target } => {
            let targets = if target.is_empty() { DEFAULT_COST_TARGETS.to_vec() } else { target.clone() };
            commands::cmd_cost(cfg, &targets, &mut out).map(|r| r.0)
        }
        Command::Stability => commands::cmd_stability(cfg, &mut out).map(|r| r.0),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match build_config(&cli).map_err(CommandError::from).and_then(|cfg| dispatch(&cli, &cfg)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
