//! The `fdxbl` command-line interface.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::config::{checkpoint_filename, ExperimentConfig};
use super::dataset::{generate_dataset, save_dataset};
use super::experiment::{run_cdf_experiment, run_kappa_sweep};
use crate::error::Result;
use crate::learner::{self, ScenarioSampler};
use crate::math::derive_seed;
use crate::metrics::NoiseModel;

#[derive(Parser)]
#[command(
    name = "fdxbl",
    about = "Full-duplex active beam learning: training, evaluation, and dataset tooling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to the config's, then $FDXBL_OUT, then `.`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per (horizon, kappa, seed) and save checkpoints.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate INR/SINR CDFs over the evaluation pairs (Rician factor
    /// `cdf_kappa_db`).
    EvalCdf {
        #[command(flatten)]
        common: CommonArgs,
        /// Evaluate a single explicit checkpoint instead of the configured
        /// horizon list.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Mean sum spectral efficiency per method across the configured
    /// Rician factors.
    SweepKappa {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Serialize the evaluation channel realizations for regression tests.
    GenDataset {
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Run the CLI on explicit arguments; returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage/help text; help and version requests
            // exit successfully.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seeds = vec![seed];
        config.eval_seed = seed;
    }
    Ok(config)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common } => {
            let config = load_config(&common)?;
            let out_dir = config.resolve_output_dir(common.out.as_deref());
            std::fs::create_dir_all(&out_dir)?;
            train_all(&config, &out_dir)
        }
        Command::EvalCdf { common, checkpoint } => {
            let mut config = load_config(&common)?;
            let out_dir = config.resolve_output_dir(common.out.as_deref());
            std::fs::create_dir_all(&out_dir)?;
            let ckpt_dir = if let Some(path) = checkpoint {
                // A single explicit checkpoint: narrow the horizon list to
                // its embedded config and stage it under the expected name.
                let ckpt = learner::load_params(&path)?;
                config.horizons = vec![ckpt.config.horizon];
                let staged_dir = out_dir.join("staged_checkpoint");
                std::fs::create_dir_all(&staged_dir)?;
                let staged = staged_dir.join(checkpoint_filename(
                    ckpt.config.horizon,
                    config.cdf_kappa_db,
                    config.seeds[0],
                ));
                learner::save_params(&ckpt.params, &ckpt.config, &staged)?;
                staged_dir
            } else {
                config.resolve_checkpoint_dir(common.out.as_deref())
            };
            let output = run_cdf_experiment(&config, &ckpt_dir, &out_dir)?;
            for f in &output.files {
                println!("wrote {}", f.display());
            }
            for (tag, cdf) in &output.inr_cdfs {
                let below_zero = cdf
                    .iter()
                    .filter(|(v, _)| *v <= 0.0)
                    .map(|(_, p)| *p)
                    .fold(0.0f64, f64::max);
                println!("{tag}: fraction of pairs with INR <= 0 dB: {below_zero:.3}");
            }
            Ok(())
        }
        Command::SweepKappa { common } => {
            let config = load_config(&common)?;
            let out_dir = config.resolve_output_dir(common.out.as_deref());
            std::fs::create_dir_all(&out_dir)?;
            let ckpt_dir = config.resolve_checkpoint_dir(common.out.as_deref());
            let output = run_kappa_sweep(&config, &ckpt_dir, &out_dir)?;
            for f in &output.files {
                println!("wrote {}", f.display());
            }
            println!("method,kappa_db,mean_r_sum");
            for p in &output.points {
                println!("{},{},{:.4}", p.method, p.kappa_db, p.mean_r_sum);
            }
            Ok(())
        }
        Command::GenDataset { common } => {
            let config = load_config(&common)?;
            let out_dir = config.resolve_output_dir(common.out.as_deref());
            std::fs::create_dir_all(&out_dir)?;
            let dataset = generate_dataset(&config, config.cdf_kappa_db)?;
            let path = out_dir.join(format!(
                "dataset_k{}_s{}.json",
                config.cdf_kappa_db, config.eval_seed
            ));
            save_dataset(&dataset, &path)?;
            println!("wrote {} ({} realizations)", path.display(), dataset.len());
            Ok(())
        }
    }
}

fn train_all(config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let noise = NoiseModel::new(config.sigma2)?;
    for &kappa in &config.kappa_db {
        for &horizon in &config.horizons {
            for &seed in &config.seeds {
                let learner_config = config.learner_for(horizon, seed);
                let scenario = config.scenario(kappa)?;
                let sampler_seed = derive_seed(seed, &[horizon as u64, kappa.to_bits()]);
                let mut sampler = ScenarioSampler::new(scenario, sampler_seed);
                eprintln!(
                    "training T={horizon} kappa={kappa} dB seed={seed} \
                     ({} iterations, batch {})",
                    learner_config.train_iterations, learner_config.batch_size
                );
                let report =
                    learner::train_with_callback(&learner_config, &mut sampler, &noise, |vp| {
                        eprintln!(
                            "  iter {:>6}: validation mean r_sum = {:.4}",
                            vp.iteration, vp.mean_r_sum
                        );
                    })?;
                if let Some(it) = report.diverged_at {
                    eprintln!("  warning: diverged at iteration {it}; kept last good params");
                }
                let path = out_dir.join(checkpoint_filename(horizon, kappa, seed));
                learner::save_params(&report.params, &learner_config, &path)?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}
