use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use delayed_glm_bandit::verify::{run_suite, SuiteOptions};
use dgb_cli::{run_config_file, Preset};

#[derive(Parser)]
#[command(
    name = "dgb",
    version,
    about = "Delayed-feedback generalized linear bandit experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment in a JSON config and write results.csv and meta.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `base_seed` from the config.
        #[arg(long, env = "BANDIT_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "BANDIT_WORKERS")]
        workers: Option<usize>,
        /// Accept Poisson-reward cells.
        #[arg(long)]
        allow_unbounded_noise: bool,
    },
    /// Check the lemma inequalities numerically.
    Verify {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, env = "BANDIT_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Print a named config as JSON.
    Preset {
        #[arg(long, value_enum)]
        name: Preset,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            workers,
            allow_unbounded_noise,
        } => {
            let workers = workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            match run_config_file(&config, &out, workers, seed, allow_unbounded_noise) {
                Ok(result) if result.failed_runs == 0 => ExitCode::SUCCESS,
                Ok(result) => {
                    log::error!("{} run(s) failed", result.failed_runs);
                    ExitCode::FAILURE
                }
                Err(e) => {
                    log::error!("{e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Verify { instances, seed } => {
            let reports = run_suite(
                SuiteOptions {
                    instances: instances.max(1),
                    ..SuiteOptions::default()
                },
                seed,
            );
            for r in &reports {
                println!("{r}");
            }
            if reports.iter().all(|r| r.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Command::Preset { name } => {
            println!("{}", name.spec().to_json());
            ExitCode::SUCCESS
        }
    }
}
