use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hspsmux::experiment::{run_experiment, ExperimentConfig, Scenario};
use hspsmux::Error;

/// Monte-Carlo simulator of a frequency-multiplexed heralded single-photon
/// source.
#[derive(Debug, Parser)]
#[command(name = "hspsmux", version)]
struct Args {
    /// TOML experiment configuration.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Scenario to run, overriding the configuration.
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,

    /// Random seed, overriding the configuration.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Output directory; results go to <DIR>/<run_id>/.
    #[arg(long, value_name = "DIR", default_value = "results")]
    out: PathBuf,

    /// Built-in preset used when no --config is given.
    #[arg(long, value_name = "NAME", default_value = "paper2021")]
    preset: String,
}

fn run(args: &Args) -> Result<PathBuf, Error> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::preset(&args.preset)?,
    };
    if let Some(s) = &args.scenario {
        config.scenario = s.parse::<Scenario>()?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let result = run_experiment(&config)?;
    result.write(&args.out)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
            });
            eprintln!("{record}");
            ExitCode::from(2)
        }
    }
}
