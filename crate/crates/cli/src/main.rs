use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hertune::agent::HyperParams;
use hertune::envs::EnvKind;
use hertune::harness::{self, RunConfig, RunStatus};
use hertune::{Error, Result};

/// DDPG + HER training with genetic hyperparameter tuning.
#[derive(Parser)]
#[command(name = "hertune", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write its run directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Run directory.
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
    },
    /// Train several parameter sets on shared seeds and summarize.
    Compare {
        #[command(flatten)]
        common: Common,
        /// An arm: `original`, `optimal`, or `LABEL=CONFIG.toml`. Repeatable.
        #[arg(long = "arm", required = true)]
        arms: Vec<String>,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        #[arg(long, default_value = "runs/compare")]
        out: PathBuf,
    },
    /// Run or resume a GA campaign.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        mutation_rate: Option<f64>,
        /// Include the encoded original parameters in the first population.
        #[arg(long)]
        seed_original: bool,
        /// Stop after breeding this many generations; rerun to resume.
        #[arg(long)]
        stop_after: Option<usize>,
        #[arg(long, default_value = "runs/tune")]
        out: PathBuf,
    },
    /// Emit tidy `series,x,y` plot data from run, comparison or campaign outputs.
    Plot {
        /// Run directories or CSV files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "plot.csv")]
        out: PathBuf,
        /// Also write a minimal SVG line chart.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Evaluate a saved agent checkpoint.
    Eval {
        /// Agent checkpoint, or a run directory containing one.
        checkpoint: PathBuf,
        /// Defaults to the environment recorded in the run manifest.
        #[arg(long)]
        env: Option<EnvKind>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Options shared by every training command. Flags override the config file.
#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel workers (default: HERTUNE_WORKERS, else all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    label: Option<String>,
    /// Maximum training epochs per run.
    #[arg(long)]
    epochs: Option<usize>,
    /// Stop a run once evaluation reaches the success threshold.
    #[arg(long)]
    early_stop: bool,
    /// Relabeled goals per step; 0 disables hindsight replay.
    #[arg(long)]
    her_k: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    polyak: Option<f64>,
    #[arg(long)]
    lr_critic: Option<f64>,
    #[arg(long)]
    lr_actor: Option<f64>,
    #[arg(long)]
    random_eps: Option<f64>,
    #[arg(long)]
    noise_eps: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(env) = self.env {
            c.env.name = env;
        }
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(label) = &self.label {
            c.label = label.clone();
        }
        if let Some(epochs) = self.epochs {
            c.train.max_epochs = epochs;
        }
        if self.early_stop {
            c.train.early_stop = true;
        }
        if let Some(k) = self.her_k {
            c.train.her.k = k;
        }
        let p = &mut c.params;
        for (value, field) in [
            (self.gamma, &mut p.gamma),
            (self.polyak, &mut p.tau),
            (self.lr_critic, &mut p.alpha_critic),
            (self.lr_actor, &mut p.alpha_actor),
            (self.random_eps, &mut p.epsilon),
            (self.noise_eps, &mut p.eta),
        ] {
            if let Some(v) = value {
                *field = v;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, out } => {
            let config = common.resolve()?;
            let outcome = harness::run_training(&config, &out)?;
            for &(epoch, rate) in &outcome.curve.points {
                println!("epoch {epoch:>3}  success {rate:.3}");
            }
            if let RunStatus::Failed { reason } = &outcome.status {
                println!("training stopped early: {reason}");
            }
            match outcome.curve.epochs_to_threshold(config.train.success_threshold) {
                Some(e) => println!("reached {} at epoch {e}", config.train.success_threshold),
                None => println!("did not reach {}", config.train.success_threshold),
            }
            println!("wrote {}", out.display());
        }
        Command::Compare { common, arms, seeds, out } => {
            let base = common.resolve()?;
            let arms = arms.iter().map(|spec| arm_config(spec, &common, &base)).collect::<Result<Vec<_>>>()?;
            let workers = harness::worker_count(common.workers)?;
            let cmp = harness::with_workers(workers, || harness::run_comparison(&arms, seeds, base.seed, Some(&out)))??;
            for arm in &cmp.arms {
                let median = arm.median_epochs_to_threshold.map_or("never".to_string(), |m| format!("{m}"));
                println!(
                    "{:<12} median epochs to threshold {median:>6}  median final success {:.3}",
                    arm.label, arm.median_final_success
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Tune { common, population, generations, mutation_rate, seed_original, stop_after, out } => {
            let mut config = common.resolve()?;
            // fitness only needs the first crossing
            config.train.early_stop = true;
            if let Some(n) = population {
                config.ga.population_size = n;
            }
            if let Some(g) = generations {
                config.ga.generations = g;
            }
            if let Some(r) = mutation_rate {
                config.ga.mutation_rate = r;
            }
            config.ga.seed_original |= seed_original;
            config.validate()?;
            let workers = harness::worker_count(common.workers)?;
            let report = harness::with_workers(workers, || harness::run_tuning(&config, &out, stop_after))??;
            for g in &report.history {
                println!(
                    "generation {:>3}  best {:.4}  mean {:.4}  worst {:.4}",
                    g.generation, g.best, g.mean, g.worst
                );
            }
            let b = &report.best;
            println!(
                "best fitness {:.4} (epochs to threshold: {})",
                b.fitness,
                b.epochs_to_threshold.map_or("never".to_string(), |e| e.to_string())
            );
            for (name, value) in HyperParams::FIELD_NAMES.iter().zip(b.params.to_genes()) {
                println!("  {name} = {value:.3}");
            }
            if !report.finished {
                println!("stopped after generation {}; rerun to resume", report.generation);
            }
        }
        Command::Plot { inputs, out, svg } => {
            let points = harness::emit_plot_data(&inputs, &out, svg.as_deref())?;
            println!("wrote {} rows to {}", points.len(), out.display());
        }
        Command::Eval { checkpoint, env, episodes, seed } => {
            let (path, run_dir) = if checkpoint.is_dir() {
                (checkpoint.join(harness::AGENT_CHECKPOINT), Some(checkpoint.as_path()))
            } else {
                (checkpoint.clone(), checkpoint.parent())
            };
            let mut env_config =
                run_dir.and_then(|d| harness::read_manifest(d).ok()).map(|m| m.config.env).unwrap_or_default();
            if let Some(kind) = env {
                env_config = hertune::envs::EnvConfig { name: kind, ..env_config };
            }
            let rate = harness::evaluate_checkpoint(&path, &env_config, episodes, seed)?;
            println!("success rate {rate:.3} over {episodes} episodes on {}", env_config.name);
        }
    }
    Ok(())
}

/// Builds one comparison arm from a preset name or `LABEL=PATH`, applying
/// the shared command-line overrides on top.
fn arm_config(spec: &str, common: &Common, base: &RunConfig) -> Result<RunConfig> {
    let mut config = match spec.split_once('=') {
        Some((label, path)) => {
            let mut c = Common { config: Some(PathBuf::from(path)), ..common.clone() }.resolve()?;
            c.label = label.to_string();
            c
        }
        None => {
            let params = match spec {
                "original" => HyperParams::ORIGINAL,
                "optimal" => HyperParams::REPORTED_OPTIMAL,
                other => {
                    return Err(Error::Config(format!("unknown arm {other:?}; use original, optimal or LABEL=PATH")))
                }
            };
            RunConfig { label: spec.to_string(), params, ..base.clone() }
        }
    };
    config.seed = base.seed;
    Ok(config)
}
