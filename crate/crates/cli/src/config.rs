//! Run configuration, loaded from TOML or JSON and overridden by flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use streamtile_core::model::Hyperparameters;
use streamtile_core::reduce::{BasisAlignment, DensityMode, ReductionConfig};
use streamtile_core::simulate::{System, TrajectoryConfig};

use crate::error::{HarnessError, Result};
use crate::matrix_io::Format;

/// Synthetic input: a simulated trajectory. Its seed comes from
/// [`RunConfig::seed`] so that one number fixes a whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub system: System,
    /// Integration step; the system default when absent.
    pub dt: Option<f64>,
    pub steps: usize,
    pub noise_frac: f64,
    pub burn_in: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self { system: System::van_der_pol(), dt: None, steps: 20_000, noise_frac: 0.05, burn_in: 0 }
    }
}

impl GenerateConfig {
    pub fn trajectory(&self, seed: u64) -> TrajectoryConfig {
        let mut cfg = TrajectoryConfig::new(self.system, self.steps, self.noise_frac, seed);
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        cfg.burn_in = self.burn_in;
        cfg
    }
}

/// Cases swept by the `bench` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Node budgets for the scaling sweep.
    pub node_counts: Vec<usize>,
    /// Batch periods compared at the largest node budget.
    pub batch_periods: Vec<usize>,
    /// Latent dimension of the benchmark stream.
    pub dim: usize,
    /// Learning steps timed per case, after the warm-up.
    pub samples: usize,
    /// Prediction calls timed on the final snapshot.
    pub prediction_calls: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            node_counts: vec![250, 500, 1000],
            batch_periods: vec![1, 30],
            dim: 10,
            samples: 300,
            prediction_calls: 1000,
        }
    }
}

/// Every knob of a run. Field names double as flag names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Matrix file of one sample per row; takes precedence over `generate`.
    pub input: Option<PathBuf>,
    pub generate: GenerateConfig,
    /// Embed the input into this many dimensions before reducing (`d`).
    pub lift_dim: Option<usize>,
    pub lift_noise: f64,
    /// Random-projection target dimension (`n`); no projection when absent.
    pub projected_dim: Option<usize>,
    /// Columns per streaming SVD update (`b`).
    pub reduce_batch: usize,
    pub decay: f64,
    pub projection_mode: DensityMode,
    pub alignment: BasisAlignment,
    /// Model hyperparameters, including `nodes` (`N`), `dim` (`k`) and
    /// `batch_period` (`B`).
    pub model: Hyperparameters,
    /// Prediction horizons (`T`).
    pub horizons: Vec<usize>,
    pub out: PathBuf,
    /// Master seed; when set, every component seed is derived from it.
    pub seed: Option<u64>,
    /// Learn and evaluate on separate threads joined by snapshot publication.
    pub threaded: bool,
    /// Write `model.ckpt` every this many samples.
    pub checkpoint_every: Option<usize>,
    /// Continue from this checkpoint.
    pub resume: Option<PathBuf>,
    /// Stop (with a checkpoint) before learning this sample index.
    pub stop_at: Option<usize>,
    pub bench: BenchConfig,
    /// File format written by `simulate` and `reduce`.
    pub data_format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            generate: GenerateConfig::default(),
            lift_dim: None,
            lift_noise: 0.0,
            projected_dim: None,
            reduce_batch: 1,
            decay: 1.0,
            projection_mode: DensityMode::Achlioptas,
            alignment: BasisAlignment::Procrustes,
            model: Hyperparameters::default(),
            horizons: vec![1],
            out: PathBuf::from("out"),
            seed: None,
            threaded: false,
            checkpoint_every: None,
            resume: None,
            stop_at: None,
            bench: BenchConfig::default(),
            data_format: Format::Binary,
        }
    }
}

/// Seeds of the individual components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Seeds {
    pub generate: u64,
    pub lift: u64,
    pub projection: u64,
    pub model: u64,
}

/// SplitMix64 output for `seed + stream`; decorrelates derived seeds.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let is_json = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text).map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Component seeds: derived from the master seed when present, else the
    /// model seed for the model and fixed streams of it for the rest.
    pub fn seeds(&self) -> Seeds {
        let master = self.seed.unwrap_or(self.model.seed);
        Seeds {
            generate: derive_seed(master, 1),
            lift: derive_seed(master, 2),
            projection: derive_seed(master, 3),
            model: if self.seed.is_some() { derive_seed(master, 4) } else { self.model.seed },
        }
    }

    /// Hyperparameters with the effective model seed.
    pub fn hyper(&self) -> Hyperparameters {
        let mut h = self.model.clone();
        h.seed = self.seeds().model;
        h
    }

    /// The reduction stages for `input_dim`-dimensional observations.
    pub fn reduction(&self, input_dim: usize) -> ReductionConfig {
        let mut r = ReductionConfig::new(input_dim, self.projected_dim.unwrap_or(input_dim), self.model.dim);
        r.batch = self.reduce_batch;
        r.seed = self.seeds().projection;
        r.mode = self.projection_mode;
        r.decay = self.decay;
        r.alignment = self.alignment;
        r
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| HarnessError::config(format!("model: {e}")))?;
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(HarnessError::config("horizons must be a nonempty list of positive counts"));
        }
        if self.reduce_batch == 0 {
            return Err(HarnessError::config("reduce_batch must be at least 1"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(HarnessError::config("decay must lie in (0, 1]"));
        }
        if !(self.lift_noise >= 0.0 && self.lift_noise.is_finite()) {
            return Err(HarnessError::config("lift_noise must be nonnegative"));
        }
        if self.lift_dim == Some(0) || self.projected_dim == Some(0) || self.checkpoint_every == Some(0) {
            return Err(HarnessError::config("dimensions and checkpoint intervals must be positive"));
        }
        if self.input.is_none() {
            self.generate
                .trajectory(0)
                .validate()
                .map_err(|e| HarnessError::config(format!("generate: {e}")))?;
        }
        let b = &self.bench;
        if b.node_counts.is_empty() || b.node_counts.contains(&0) || b.batch_periods.contains(&0) || b.dim == 0 {
            return Err(HarnessError::config("bench cases need positive node counts, periods and dimension"));
        }
        Ok(())
    }

    /// Checks the dimension chain `k <= n <= d` once the data shape is known.
    pub fn validate_dims(&self, source_dim: usize) -> Result<ReductionConfig> {
        let d = self.lift_dim.unwrap_or(source_dim);
        if d < source_dim {
            return Err(HarnessError::config(format!("lift_dim {d} is below the data dimension {source_dim}")));
        }
        let r = self.reduction(d);
        r.validate().map_err(|e| HarnessError::config(e.to_string()))?;
        Ok(r)
    }
}
