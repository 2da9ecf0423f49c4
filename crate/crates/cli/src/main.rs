use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scenfc_cli::config::parse_override;
use scenfc_cli::{commands, init_threads, CliError, CliResult, RunConfig};

/// Scenario forecasting with a Wasserstein GAN.
///
/// Settings come from a flat TOML file (--config) with flags applied on top.
/// Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical
/// failure. SCENFC_THREADS sets the worker thread count.
#[derive(Parser)]
#[command(name = "scenfc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic AR(1) + diurnal power series.
    Synth(Flags),
    /// Train a WGAN on windows of the training split.
    Train(Flags),
    /// Search the generator's latent space for scenarios on test windows.
    Forecast(Flags),
    /// Fit the Gaussian-copula baseline and sample scenarios on test windows.
    Copula(Flags),
    /// Compare scenario sets: CRPS, autocorrelation and correlation.
    Eval(Flags),
}

#[derive(Args)]
struct Flags {
    /// Flat TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override any configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    overrides: Vec<(String, toml::Value)>,
    #[arg(long)]
    seed: Option<u64>,
    /// Input series CSV.
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Trained model (forecast).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Generator iterations (train).
    #[arg(long)]
    iterations: Option<usize>,
    /// Resume training from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Interval parameters, comma separated (forecast, copula).
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    /// Lead-time horizons, comma separated (forecast, copula).
    #[arg(long, value_delimiter = ',')]
    horizons: Vec<usize>,
    /// Scenario batch files to compare (eval, repeatable).
    #[arg(long = "scenarios", value_name = "FILE")]
    scenarios: Vec<PathBuf>,
}

fn path_value(p: &std::path::Path) -> toml::Value {
    toml::Value::String(p.to_string_lossy().into_owned())
}

impl Flags {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut o = self.overrides.clone();
        let mut put = |k: &str, v: toml::Value| o.push((k.to_string(), v));
        if let Some(s) = self.seed {
            let s = i64::try_from(s).map_err(|_| CliError::Usage(format!("seed {s} is too large")))?;
            put("seed", toml::Value::Integer(s));
        }
        if let Some(p) = &self.input {
            put("input", path_value(p));
        }
        if let Some(p) = &self.output {
            put("output", path_value(p));
        }
        if let Some(p) = &self.model {
            put("model", path_value(p));
        }
        if let Some(n) = self.iterations {
            put("iterations", toml::Value::Integer(n as i64));
        }
        if let Some(p) = &self.resume {
            put("resume", path_value(p));
        }
        if !self.alphas.is_empty() {
            put("alphas", self.alphas.iter().map(|a| toml::Value::Float(*a)).collect::<Vec<_>>().into());
        }
        if !self.horizons.is_empty() {
            put("horizons", self.horizons.iter().map(|k| toml::Value::Integer(*k as i64)).collect::<Vec<_>>().into());
        }
        if !self.scenarios.is_empty() {
            put("sets", self.scenarios.iter().map(|p| path_value(p)).collect::<Vec<_>>().into());
        }
        RunConfig::resolve(self.config.as_deref(), &o)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match cli.command {
        Command::Synth(f) => commands::synth(&f.resolve()?),
        Command::Train(f) => commands::train(&f.resolve()?),
        Command::Forecast(f) => commands::forecast(&f.resolve()?),
        Command::Copula(f) => commands::copula(&f.resolve()?),
        Command::Eval(f) => commands::eval(&f.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
