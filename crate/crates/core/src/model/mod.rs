//! Online EM for a Gaussian-mixture hidden Markov model that tiles the
//! reduced state space, with gradient M-steps and node teleporting.

mod adam;
mod elbo;
mod hyper;
mod params;
mod priors;
mod stats;

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

pub use adam::Adam;
pub use elbo::{elbo, elbo_gradient, ElboGradient};
pub use hyper::{Forgetting, Hyperparameters};
pub use params::{gaussian_logpdf, row_softmax, NodeParams};
pub use priors::{prior_scale, prior_walk_step, walk_scale, Priors};
pub use stats::{forward_filter, update_suff_stats, FilterOutput, SuffStats, ALPHA_FLOOR};

use crate::error::{Error, Result};
use crate::math;
use crate::predict::ModelSnapshot;

/// A node stays eligible for teleporting until its occupancy exceeds this
/// multiple of its mean pseudo-count.
pub const DEAD_NODE_FACTOR: f64 = 10.0;

/// Stages of one learning step, reported to a [`PhaseProbe`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    TeleportCheck,
    EStep,
    PriorUpdate,
    MStep,
}

/// Hook for timing the stages of [`Model::observe_with`].
pub trait PhaseProbe {
    fn enter(&mut self, phase: Phase);
    fn exit(&mut self, phase: Phase);
}

impl PhaseProbe for () {
    fn enter(&mut self, _: Phase) {}
    fn exit(&mut self, _: Phase) {}
}

/// What happened during one call to [`Model::observe_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepReport {
    /// Node moved onto the observation, if any.
    pub teleported: Option<usize>,
    /// Whether priors and parameters were updated on this sample.
    pub updated: bool,
}

/// Serializable position of the model's random generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

/// Every piece of model state, for checkpointing.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParts {
    pub hyper: Hyperparameters,
    pub means: DMatrix<f64>,
    pub chol: Vec<DMatrix<f64>>,
    pub logits: DMatrix<f64>,
    pub mu0: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub nu: DVector<f64>,
    pub mu_bar: DVector<f64>,
    pub sigma_bar: DMatrix<f64>,
    pub eta: DVector<f64>,
    pub transitions: DMatrix<f64>,
    pub counts: DVector<f64>,
    pub s1: DMatrix<f64>,
    pub s2: Vec<DMatrix<f64>>,
    pub alpha: DVector<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub adam_steps: u64,
    pub t: u64,
    pub since_update: u64,
    pub dead_nodes: Vec<usize>,
    pub rng: RngState,
}

/// The streaming tiling model. Single writer: `observe*` need `&mut self`;
/// readers work from [`Model::snapshot`].
#[derive(Debug, Clone)]
pub struct Model {
    hyper: Hyperparameters,
    params: NodeParams,
    priors: Priors,
    stats: SuffStats,
    opt: Adam,
    t: u64,
    since_update: usize,
    dead: BTreeSet<usize>,
    rng: ChaCha8Rng,
    log_b: Vec<f64>,
    pred: Vec<f64>,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.hyper == other.hyper
            && self.params == other.params
            && self.priors == other.priors
            && self.stats == other.stats
            && self.opt == other.opt
            && self.t == other.t
            && self.since_update == other.since_update
            && self.dead == other.dead
            && self.rng == other.rng
    }
}

impl Model {
    /// Builds a model from an initial buffer of `M >= 2` samples stored as
    /// the columns of a `k x M` matrix.
    ///
    /// All nodes start at the buffer mean with the covariance implied by the
    /// prior scale, transitions are uniform and every node is eligible for
    /// teleporting.
    pub fn init(buffer: &DMatrix<f64>, hyper: Hyperparameters) -> Result<Self> {
        hyper.validate()?;
        let (k, m) = buffer.shape();
        if k != hyper.dim {
            return Err(Error::shape("init buffer", (hyper.dim, m), buffer.shape()));
        }
        if m < 2 {
            return Err(Error::invalid("init buffer needs at least 2 samples"));
        }
        if buffer.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("init buffer"));
        }
        let n = hyper.nodes;
        // Shift by the first sample so a buffer of identical points yields
        // exactly that point.
        let origin = buffer.column(0).into_owned();
        let mut offset = DVector::zeros(k);
        for c in buffer.column_iter() {
            offset += c - &origin;
        }
        let mu_bar = origin + offset / m as f64;
        let centered = buffer - DMatrix::from_fn(k, m, |r, _| mu_bar[r]);
        let cov = (&centered * centered.transpose()) / m as f64;
        let priors = Priors::from_moments(
            n,
            mu_bar.clone(),
            &cov,
            hyper.mean_pseudocount,
            hyper.dof_offset,
            hyper.prior_walk_rate,
        )?;
        let means = DMatrix::from_fn(k, n, |r, _| mu_bar[r]);
        let chol = alloc::vec![priors.psi_chol.clone(); n];
        let params = NodeParams::new(means, chol, DMatrix::zeros(n, n))?;
        let stats = SuffStats::zeros(n, k);
        Ok(Self {
            opt: Adam::new(n * n + k * n + k * k * n),
            rng: ChaCha8Rng::seed_from_u64(hyper.seed),
            hyper,
            params,
            priors,
            stats,
            t: 0,
            since_update: 0,
            dead: (0..n).collect(),
            log_b: alloc::vec![0.0; n],
            pred: alloc::vec![0.0; n],
        })
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn params(&self) -> &NodeParams {
        &self.params
    }

    pub fn priors(&self) -> &Priors {
        &self.priors
    }

    pub fn stats(&self) -> &SuffStats {
        &self.stats
    }

    pub fn optimizer(&self) -> &Adam {
        &self.opt
    }

    /// Samples observed so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Nodes still eligible for teleporting, lowest index first.
    pub fn dead_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.dead.iter().copied()
    }

    pub fn nodes(&self) -> usize {
        self.hyper.nodes
    }

    pub fn dim(&self) -> usize {
        self.hyper.dim
    }

    /// One full learning step: teleport check, filter, statistics, prior
    /// update and one gradient step.
    pub fn observe(&mut self, x: &[f64]) -> Result<StepReport> {
        self.observe_with(x, 1, &mut ())
    }

    /// Runs the per-sample stages on every column of `xs` (`k x b`), and the
    /// prior update and gradient step once every `period` samples. The
    /// period counter carries over between calls.
    pub fn observe_batch(&mut self, xs: &DMatrix<f64>, period: usize) -> Result<()> {
        if xs.nrows() != self.dim() {
            return Err(Error::shape("observation batch", (self.dim(), xs.ncols()), xs.shape()));
        }
        for c in xs.column_iter() {
            self.observe_with(c.as_slice(), period, &mut ())?;
        }
        Ok(())
    }

    /// One sample with an explicit update period and a timing probe.
    pub fn observe_with<P: PhaseProbe>(&mut self, x: &[f64], period: usize, probe: &mut P) -> Result<StepReport> {
        if period == 0 {
            return Err(Error::invalid("update period must be at least 1"));
        }
        stats::check_inputs(&self.params, &self.stats.alpha, x)?;
        let mut report = StepReport::default();

        probe.enter(Phase::TeleportCheck);
        self.params.log_densities_into(x, &mut self.log_b);
        let best = self.log_b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if self.hyper.teleport_enabled() && best < self.hyper.teleport_threshold {
            let j = self.teleport(x);
            self.log_b[j] = self.params.log_density(j, x);
            report.teleported = Some(j);
        }
        probe.exit(Phase::TeleportCheck);

        probe.enter(Phase::EStep);
        let epsilon = self.hyper.forgetting.rate(self.t);
        let mut log_b = core::mem::take(&mut self.log_b);
        let mut pred = core::mem::take(&mut self.pred);
        let mut outcome =
            stats::filter_and_accumulate(&self.params, &mut self.stats, &mut log_b, &mut pred, x, epsilon);
        if matches!(outcome, Err(Error::FilterDegenerate))
            && report.teleported.is_none()
            && self.hyper.teleport_enabled()
        {
            report.teleported = Some(self.teleport(x));
            self.params.log_densities_into(x, &mut log_b);
            outcome =
                stats::filter_and_accumulate(&self.params, &mut self.stats, &mut log_b, &mut pred, x, epsilon);
        }
        self.log_b = log_b;
        self.pred = pred;
        outcome?;
        let lambda = &self.priors.lambda;
        let counts = &self.stats.counts;
        self.dead.retain(|&j| counts[j] <= DEAD_NODE_FACTOR * lambda[j]);
        self.t += 1;
        self.since_update += 1;
        probe.exit(Phase::EStep);

        if self.since_update >= period {
            self.since_update = 0;
            report.updated = true;
            if self.hyper.update_priors {
                probe.enter(Phase::PriorUpdate);
                let r = self.priors.update(&self.stats, self.hyper.prior_walk_rate, &mut self.rng);
                probe.exit(Phase::PriorUpdate);
                match r {
                    Ok(()) | Err(Error::Precondition(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            probe.enter(Phase::MStep);
            self.gradient_step()?;
            probe.exit(Phase::MStep);
        }
        Ok(report)
    }

    /// Node a teleport would move: the lowest-index eligible node, otherwise
    /// the node with the smallest occupancy (lowest index on ties).
    pub fn teleport_target(&self) -> usize {
        if let Some(&j) = self.dead.iter().next() {
            return j;
        }
        let counts = &self.stats.counts;
        let mut best = 0;
        for j in 1..counts.len() {
            if counts[j] < counts[best] {
                best = j;
            }
        }
        best
    }

    /// Moves a node onto `x`: its statistics are cleared, it takes the prior
    /// shape, its outgoing transitions become uniform and the posterior
    /// collapses onto it. Returns the node index.
    fn teleport(&mut self, x: &[f64]) -> usize {
        let j = self.teleport_target();
        let (n, k) = (self.nodes(), self.dim());
        self.stats.clear_node(j);
        self.params.means.column_mut(j).copy_from_slice(x);
        self.params.chol[j].copy_from(&self.priors.psi_chol);
        self.params.refresh_log_norm(j);
        self.params.reset_row(j);
        for c in 0..n {
            self.opt.reset_range(c * n + j..c * n + j + 1);
        }
        let means_at = n * n + j * k;
        self.opt.reset_range(means_at..means_at + k);
        let chol_at = n * n + k * n + j * k * k;
        self.opt.reset_range(chol_at..chol_at + k * k);
        self.stats.alpha.fill(0.0);
        self.stats.alpha[j] = 1.0;
        self.dead.remove(&j);
        debug_assert!(
            self.params.log_density(j, x) >= self.hyper.teleport_threshold,
            "teleported node assigns a log-density below the threshold"
        );
        j
    }

    /// One adaptive-moment ascent step on every parameter.
    fn gradient_step(&mut self) -> Result<()> {
        let (n, k) = (self.nodes(), self.dim());
        let h = &self.hyper;
        let c = self.opt.begin(h.step_size, h.adam_beta1, h.adam_beta2, h.adam_epsilon);
        let beta = h.transition_prior - 1.0;

        let row_weight = elbo::transition_row_weights(&self.stats, h.transition_prior);
        let mut row_max = alloc::vec![f64::NEG_INFINITY; n];
        {
            let a = self.params.transition.as_slice();
            let nhat = self.stats.transitions.as_slice();
            let logits = self.params.logits.as_mut_slice();
            let (m, v) = (&mut self.opt.m[..n * n], &mut self.opt.v[..n * n]);
            for j in 0..n {
                let col = j * n..(j + 1) * n;
                let (a, nhat, logits) = (&a[col.clone()], &nhat[col.clone()], &mut logits[col.clone()]);
                let (m, v) = (&mut m[col.clone()], &mut v[col]);
                for i in 0..n {
                    let g = nhat[i] + beta - a[i] * row_weight[i];
                    let x = logits[i] + c.step(&mut m[i], &mut v[i], g);
                    logits[i] = x;
                    row_max[i] = row_max[i].max(x);
                }
            }
        }
        params::softmax_with_max(&self.params.logits, &row_max, &mut self.params.transition);

        let means_base = n * n;
        let chol_base = means_base + k * n;
        for j in 0..n {
            let terms = elbo::node_terms(&self.params, &self.stats, &self.priors, j, true);
            for r in 0..k {
                let d = self.opt.delta(&c, means_base + j * k + r, terms.grad_mean[r]);
                self.params.means[(r, j)] += d;
            }
            let l = &mut self.params.chol[j];
            for col in 0..k {
                for row in col..k {
                    let idx = chol_base + j * k * k + col * k + row;
                    let g = terms.grad_chol[(row, col)];
                    if row == col {
                        // The diagonal lives in log space so it stays positive.
                        let d = self.opt.delta(&c, idx, g * l[(row, col)]);
                        l[(row, col)] *= math::exp(d);
                    } else {
                        l[(row, col)] += self.opt.delta(&c, idx, g);
                    }
                }
            }
            self.params.refresh_log_norm(j);
        }
        if self.params.means.iter().any(|v| !v.is_finite())
            || self.params.log_norms.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Numerical("gradient step produced non-finite parameters".into()));
        }
        Ok(())
    }

    /// Immutable copy of what prediction needs.
    pub fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot::from_params(&self.params, self.stats.alpha.clone())
    }

    /// Checks the documented invariants of every component.
    pub fn check_invariants(&self) -> Result<()> {
        let alpha = &self.stats.alpha;
        if alpha.iter().any(|&v| !(v >= 0.0)) || (alpha.sum() - 1.0).abs() > 1e-10 {
            return Err(Error::Numerical("posterior is not a probability vector".into()));
        }
        let n = self.nodes();
        for j in 0..n {
            let col = self.stats.transitions.column(j).sum();
            let cnt = self.stats.counts[j];
            if (col - cnt).abs() > 1e-8 * col.abs().max(cnt.abs()).max(1e-300) && (col - cnt).abs() > 1e-300 {
                return Err(Error::Numerical(alloc::format!("occupancy of node {j} disagrees with N̂")));
            }
            let s2 = &self.stats.s2[j];
            if (s2 - s2.transpose()).amax() > 1e-10 {
                return Err(Error::Numerical(alloc::format!("second moment of node {j} is not symmetric")));
            }
            let l = &self.params.chol[j];
            if (0..self.dim()).any(|i| !(l[(i, i)] > 0.0)) {
                return Err(Error::Numerical(alloc::format!("precision factor of node {j} lost positivity")));
            }
        }
        let a = &self.params.transition;
        for i in 0..n {
            let row = a.row(i);
            if (row.sum() - 1.0).abs() > 1e-12 || row.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Numerical(alloc::format!("transition row {i} is not a distribution")));
            }
        }
        Ok(())
    }

    pub fn to_parts(&self) -> ModelParts {
        ModelParts {
            hyper: self.hyper.clone(),
            means: self.params.means.clone(),
            chol: self.params.chol.clone(),
            logits: self.params.logits.clone(),
            mu0: self.priors.mu0.clone(),
            psi: self.priors.psi.clone(),
            lambda: self.priors.lambda.clone(),
            nu: self.priors.nu.clone(),
            mu_bar: self.priors.mu_bar.clone(),
            sigma_bar: self.priors.sigma_bar.clone(),
            eta: self.priors.eta.clone(),
            transitions: self.stats.transitions.clone(),
            counts: self.stats.counts.clone(),
            s1: self.stats.s1.clone(),
            s2: self.stats.s2.clone(),
            alpha: self.stats.alpha.clone(),
            adam_m: self.opt.m.clone(),
            adam_v: self.opt.v.clone(),
            adam_steps: self.opt.steps,
            t: self.t,
            since_update: self.since_update as u64,
            dead_nodes: self.dead.iter().copied().collect(),
            rng: RngState {
                seed: self.rng.get_seed(),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos(),
            },
        }
    }

    /// Rebuilds a model from checkpointed parts, validating shapes and
    /// invariants.
    pub fn from_parts(parts: ModelParts) -> Result<Self> {
        let ModelParts {
            hyper,
            means,
            chol,
            logits,
            mu0,
            psi,
            lambda,
            nu,
            mu_bar,
            sigma_bar,
            eta,
            transitions,
            counts,
            s1,
            s2,
            alpha,
            adam_m,
            adam_v,
            adam_steps,
            t,
            since_update,
            dead_nodes,
            rng,
        } = parts;
        hyper.validate()?;
        let (n, k) = (hyper.nodes, hyper.dim);
        if means.shape() != (k, n) {
            return Err(Error::shape("node means", (k, n), means.shape()));
        }
        let params = NodeParams::new(means, chol, logits)?;
        let priors = Priors::from_parts(mu0, psi, lambda, nu, mu_bar, sigma_bar, eta)?;
        let stats = SuffStats::from_parts(transitions, counts, s1, s2, alpha)?;
        elbo::check_consistent(&params, &stats, &priors)?;
        let len = n * n + k * n + k * k * n;
        if adam_m.len() != len || adam_v.len() != len {
            return Err(Error::shape("optimizer moments", (len, 1), (adam_m.len(), 1)));
        }
        if dead_nodes.iter().any(|&j| j >= n) {
            return Err(Error::invalid("dead node index out of range"));
        }
        let mut generator = ChaCha8Rng::from_seed(rng.seed);
        generator.set_stream(rng.stream);
        generator.set_word_pos(rng.word_pos);
        let model = Self {
            hyper,
            params,
            priors,
            stats,
            opt: Adam { m: adam_m, v: adam_v, steps: adam_steps },
            t,
            since_update: since_update as usize,
            dead: dead_nodes.into_iter().collect(),
            rng: generator,
            log_b: alloc::vec![0.0; n],
            pred: alloc::vec![0.0; n],
        };
        model.check_invariants()?;
        Ok(model)
    }
}
