use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use commrand_cli::commands::{
    cmd_cachesim, cmd_detect, cmd_gen_sbm, cmd_reorder, cmd_sweep, cmd_train, exit_code_for,
};
use commrand_cli::config::{Overrides, RunConfig, SweepConfig};

#[derive(Parser)]
#[command(
    name = "commrand",
    version,
    about = "Community-structure-aware randomized mini-batching lab: dataset generation, \
             community detection, reordering, GNN training, knob sweeps, cache simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic stochastic-block-model dataset bundle.
    GenSbm {
        /// SBM config JSON (community sizes, p_in/p_out, features, splits).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output bundle directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect communities by modularity maximization and save the assignment.
    Detect {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        resolution: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        max_levels: usize,
        /// Output assignment file ("node community" per line).
        #[arg(long)]
        out: PathBuf,
    },
    /// Relabel a bundle so each community occupies a contiguous id range.
    Reorder {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        assignment: PathBuf,
        /// Output bundle directory (includes the remapped assignment.txt).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a GNN with the configured mini-batching policy.
    Train {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        assignment: PathBuf,
        /// Run config JSON; flags below override file values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// rand-roots | norand-roots | comm-rand-mix
        #[arg(long)]
        policy: Option<String>,
        /// Fraction of train communities per super-block (comm-rand-mix).
        #[arg(long)]
        mix_fraction: Option<f64>,
        /// Intra-community sampling probability in [0.5, 1.0].
        #[arg(long)]
        intra_prob: Option<f64>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Simulate an LRU feature cache of this many node slots.
        #[arg(long)]
        cache_capacity: Option<usize>,
        /// Write zeros to the wall-time column (byte-reproducible output).
        #[arg(long)]
        no_timing: bool,
        /// Per-epoch report CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional model checkpoint path.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Optional JSON report (rows plus resolved config).
        #[arg(long)]
        report_json: Option<PathBuf>,
    },
    /// Run the (policy x intra_prob x seed) grid and emit a long-format CSV.
    Sweep {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        assignment: PathBuf,
        /// Sweep config JSON with policies, p_grid, seeds.
        #[arg(long)]
        config: PathBuf,
        /// Parallel cells (default 1).
        #[arg(long)]
        workers: Option<usize>,
        /// Train exactly this many epochs instead of train-to-convergence.
        #[arg(long)]
        fixed_epochs: Option<usize>,
        /// Write zeros to the timing columns (byte-reproducible output).
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate LRU feature-cache miss rates over a capacity grid.
    Cachesim {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        assignment: PathBuf,
        /// Sweep config JSON (policies, p_grid, seeds; capacities optional).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Capacity in node slots; repeatable. Falls back to the config's
        /// capacities list.
        #[arg(long = "capacity")]
        capacities: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        epochs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        mix_fraction: Option<f64>,
        #[arg(long)]
        intra_prob: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenSbm { config, seed, out } => cmd_gen_sbm(&config, seed, &out),
        Command::Detect {
            bundle,
            resolution,
            seed,
            max_levels,
            out,
        } => cmd_detect(&bundle, resolution, seed, max_levels, &out),
        Command::Reorder {
            bundle,
            assignment,
            out,
        } => cmd_reorder(&bundle, &assignment, &out),
        Command::Train {
            bundle,
            assignment,
            config,
            seed,
            policy,
            mix_fraction,
            intra_prob,
            max_epochs,
            batch_size,
            cache_capacity,
            no_timing,
            out,
            checkpoint,
            report_json,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            cfg.apply_overrides(&Overrides {
                seed,
                policy,
                mix_fraction,
                intra_prob,
                max_epochs,
                batch_size,
                cache_capacity,
            })?;
            cmd_train(
                &bundle,
                &assignment,
                &cfg,
                &out,
                checkpoint.as_deref(),
                report_json.as_deref(),
                no_timing,
            )
            .map(|_| ())
        }
        Command::Sweep {
            bundle,
            assignment,
            config,
            workers,
            fixed_epochs,
            no_timing,
            out,
        } => {
            let cfg = SweepConfig::load(&config)?;
            cmd_sweep(
                &bundle,
                &assignment,
                &cfg,
                &out,
                workers,
                fixed_epochs,
                no_timing,
            )
        }
        Command::Cachesim {
            bundle,
            assignment,
            config,
            capacities,
            epochs,
            seed,
            policy,
            mix_fraction,
            intra_prob,
            out,
        } => {
            let cfg = match config {
                Some(path) => SweepConfig::load(&path)?,
                None => {
                    let mut base = RunConfig::default();
                    base.apply_overrides(&Overrides {
                        seed,
                        policy,
                        mix_fraction,
                        intra_prob,
                        ..Default::default()
                    })?;
                    SweepConfig {
                        policies: vec![base.policy],
                        p_grid: vec![base.intra_prob],
                        seeds: vec![base.seed],
                        capacities: Vec::new(),
                        base,
                    }
                }
            };
            let caps = if capacities.is_empty() {
                cfg.capacities.clone()
            } else {
                capacities
            };
            cmd_cachesim(&bundle, &assignment, &cfg, &caps, epochs, &out)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err) as u8)
        }
    }
}
