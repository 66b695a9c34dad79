use crate::error::{Error, Result};

/// Per-step forgetting rate `ε_t` applied to the sufficient statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum Forgetting {
    Constant { rate: f64 },
    /// `ε_t = scale / (t + offset)`, clipped to `[0, 1]`.
    Harmonic { scale: f64, offset: f64 },
}

impl Forgetting {
    pub fn rate(&self, t: u64) -> f64 {
        match *self {
            Forgetting::Constant { rate } => rate,
            Forgetting::Harmonic { scale, offset } => (scale / (t as f64 + offset)).clamp(0.0, 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Forgetting::Constant { rate } if (0.0..=1.0).contains(&rate) => Ok(()),
            Forgetting::Harmonic { scale, offset } if scale >= 0.0 && offset > 0.0 => Ok(()),
            _ => Err(Error::invalid("forgetting rate must lie in [0, 1]")),
        }
    }
}

impl Default for Forgetting {
    fn default() -> Self {
        Forgetting::Constant { rate: 0.01 }
    }
}

/// Model size, prior strengths and optimizer settings.
///
/// `teleport_threshold` is a log-density: when every node assigns a new
/// point less than this, a node is moved onto the point. `-inf` turns the
/// heuristic off.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Hyperparameters {
    /// Node budget `N`.
    pub nodes: usize,
    /// Latent dimension `k`.
    pub dim: usize,
    /// NIW mean pseudo-count `λ`.
    pub mean_pseudocount: f64,
    /// NIW degrees-of-freedom offset `ν`.
    pub dof_offset: f64,
    /// Uniform Dirichlet parameter `β` on transition rows.
    pub transition_prior: f64,
    pub forgetting: Forgetting,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_float"))]
    pub teleport_threshold: f64,
    pub step_size: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Mean-reversion rate of the prior-mean random walk.
    pub prior_walk_rate: f64,
    /// Samples used to initialize the model (`M`).
    pub init_buffer: usize,
    /// Prior and gradient updates run once every this many samples (`B`).
    pub batch_period: usize,
    /// Empirical-Bayes prior updates; off reproduces the "no prior update" ablation.
    pub update_priors: bool,
    pub seed: u64,
}

impl Hyperparameters {
    pub fn new(nodes: usize, dim: usize) -> Self {
        Self {
            nodes,
            dim,
            mean_pseudocount: 1e-3,
            dof_offset: 1e-3,
            transition_prior: 1.0,
            forgetting: Forgetting::default(),
            teleport_threshold: -10.0 * dim as f64,
            step_size: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            prior_walk_rate: 0.02,
            init_buffer: 30,
            batch_period: 1,
            update_priors: true,
            seed: 0,
        }
    }

    pub fn teleport_enabled(&self) -> bool {
        self.teleport_threshold > f64::NEG_INFINITY
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.dim == 0 {
            return Err(Error::invalid("node budget and dimension must be positive"));
        }
        if !(self.mean_pseudocount > 0.0 && self.dof_offset > 0.0) {
            return Err(Error::invalid("NIW pseudo-counts must be positive"));
        }
        if !(self.transition_prior > 0.0) {
            return Err(Error::invalid("transition prior must be positive"));
        }
        self.forgetting.validate()?;
        if self.teleport_threshold.is_nan() || self.teleport_threshold == f64::INFINITY {
            return Err(Error::invalid("teleport threshold must be finite or -inf"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("step size must be positive"));
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return Err(Error::invalid("adaptive-moment decay rates must lie in [0, 1)"));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::invalid("adaptive-moment epsilon must be positive"));
        }
        if !(0.0..=1.0).contains(&self.prior_walk_rate) {
            return Err(Error::invalid("prior walk rate must lie in [0, 1]"));
        }
        if self.init_buffer < 2 {
            return Err(Error::invalid("init buffer needs at least 2 samples"));
        }
        if self.batch_period == 0 {
            return Err(Error::invalid("batch period must be at least 1"));
        }
        Ok(())
    }
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self::new(1000, 2)
    }
}
