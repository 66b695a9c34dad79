//! Command-line arguments. Flags override the configuration file; each flag
//! also reads a `STREAMTILE_*` environment variable.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use streamtile_core::simulate::System;

use crate::config::RunConfig;
use crate::error::Result;
use crate::matrix_io::Format;

#[derive(Debug, Parser)]
#[command(name = "streamtile", version, about = "Streaming dimension reduction and GMM-HMM tiling of dynamical data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Learn a stream and write metrics, summary, timing and a checkpoint.
    Run,
    /// Time learning across node budgets and batch periods.
    Bench,
    /// Run only the reduction stages and write the reduced stream.
    Reduce,
    /// Write simulated trajectories.
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemArg {
    VanDerPol,
    Lorenz,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML or JSON configuration file.
    #[arg(long, global = true, env = "STREAMTILE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, env = "STREAMTILE_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true, env = "STREAMTILE_OUT")]
    pub out: Option<PathBuf>,
    /// Prediction horizons, comma separated.
    #[arg(long = "T", global = true, value_delimiter = ',', env = "STREAMTILE_T")]
    pub horizons: Option<Vec<usize>>,
    /// Matrix file of one sample per row (`.csv` or MFLW binary).
    #[arg(long, global = true, env = "STREAMTILE_INPUT")]
    pub input: Option<PathBuf>,
    #[arg(long, global = true, value_enum, env = "STREAMTILE_SYSTEM")]
    pub system: Option<SystemArg>,
    /// Simulated samples.
    #[arg(long, global = true, env = "STREAMTILE_STEPS")]
    pub steps: Option<usize>,
    #[arg(long, global = true, env = "STREAMTILE_NOISE_FRAC")]
    pub noise_frac: Option<f64>,
    #[arg(long, global = true, env = "STREAMTILE_DT")]
    pub dt: Option<f64>,
    #[arg(long, global = true, env = "STREAMTILE_LIFT_DIM")]
    pub lift_dim: Option<usize>,
    #[arg(long, global = true, env = "STREAMTILE_LIFT_NOISE")]
    pub lift_noise: Option<f64>,
    #[arg(long, global = true, env = "STREAMTILE_PROJECTED_DIM")]
    pub projected_dim: Option<usize>,
    #[arg(long, global = true, env = "STREAMTILE_REDUCE_BATCH")]
    pub reduce_batch: Option<usize>,
    #[arg(long, global = true, env = "STREAMTILE_DECAY")]
    pub decay: Option<f64>,
    /// Node budget.
    #[arg(long, global = true, env = "STREAMTILE_NODES")]
    pub nodes: Option<usize>,
    /// Latent dimension.
    #[arg(long, global = true, env = "STREAMTILE_DIM")]
    pub dim: Option<usize>,
    #[arg(long, global = true, env = "STREAMTILE_BATCH_PERIOD")]
    pub batch_period: Option<usize>,
    #[arg(long, global = true, env = "STREAMTILE_STEP_SIZE")]
    pub step_size: Option<f64>,
    /// Teleport log-density threshold; `-inf` disables teleporting.
    #[arg(long, global = true, allow_hyphen_values = true, env = "STREAMTILE_TELEPORT_THRESHOLD")]
    pub teleport_threshold: Option<f64>,
    #[arg(long, global = true, env = "STREAMTILE_INIT_BUFFER")]
    pub init_buffer: Option<usize>,
    #[arg(long, global = true, env = "STREAMTILE_THREADED")]
    pub threaded: bool,
    #[arg(long, global = true, env = "STREAMTILE_CHECKPOINT_EVERY")]
    pub checkpoint_every: Option<usize>,
    #[arg(long, global = true, env = "STREAMTILE_RESUME")]
    pub resume: Option<PathBuf>,
    #[arg(long, global = true, env = "STREAMTILE_STOP_AT")]
    pub stop_at: Option<usize>,
    /// Benchmark node budgets, comma separated.
    #[arg(long, global = true, value_delimiter = ',', env = "STREAMTILE_BENCH_NODES")]
    pub bench_nodes: Option<Vec<usize>>,
    #[arg(long, global = true, env = "STREAMTILE_BENCH_SAMPLES")]
    pub bench_samples: Option<usize>,
    #[arg(long, global = true, value_enum, env = "STREAMTILE_DATA_FORMAT")]
    pub data_format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Binary,
    Csv,
}

impl Overrides {
    /// The configuration file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_path(path)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        set(&mut cfg.out, &self.out);
        set(&mut cfg.horizons, &self.horizons);
        if self.input.is_some() {
            cfg.input = self.input.clone();
        }
        if let Some(s) = self.system {
            cfg.generate.system = match s {
                SystemArg::VanDerPol => System::van_der_pol(),
                SystemArg::Lorenz => System::lorenz(),
            };
        }
        set(&mut cfg.generate.steps, &self.steps);
        set(&mut cfg.generate.noise_frac, &self.noise_frac);
        if self.dt.is_some() {
            cfg.generate.dt = self.dt;
        }
        if self.lift_dim.is_some() {
            cfg.lift_dim = self.lift_dim;
        }
        set(&mut cfg.lift_noise, &self.lift_noise);
        if self.projected_dim.is_some() {
            cfg.projected_dim = self.projected_dim;
        }
        set(&mut cfg.reduce_batch, &self.reduce_batch);
        set(&mut cfg.decay, &self.decay);
        set(&mut cfg.model.nodes, &self.nodes);
        if let Some(k) = self.dim {
            // Keep the default threshold scaled to the dimension unless given.
            if self.teleport_threshold.is_none() && cfg.model.teleport_threshold == -10.0 * cfg.model.dim as f64 {
                cfg.model.teleport_threshold = -10.0 * k as f64;
            }
            cfg.model.dim = k;
        }
        set(&mut cfg.model.batch_period, &self.batch_period);
        set(&mut cfg.model.step_size, &self.step_size);
        set(&mut cfg.model.teleport_threshold, &self.teleport_threshold);
        set(&mut cfg.model.init_buffer, &self.init_buffer);
        if self.threaded {
            cfg.threaded = true;
        }
        if self.checkpoint_every.is_some() {
            cfg.checkpoint_every = self.checkpoint_every;
        }
        if self.resume.is_some() {
            cfg.resume = self.resume.clone();
        }
        if self.stop_at.is_some() {
            cfg.stop_at = self.stop_at;
        }
        set(&mut cfg.bench.node_counts, &self.bench_nodes);
        set(&mut cfg.bench.samples, &self.bench_samples);
        if let Some(f) = self.data_format {
            cfg.data_format = match f {
                FormatArg::Binary => Format::Binary,
                FormatArg::Csv => Format::Csv,
            };
        }
    }
}
