use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use super::{BasisAlignment, DensityMode, ProSvd, SparseProjection};
use crate::error::{Error, Result};

/// Shape and behaviour of the two-stage reduction `d -> n -> k`.
///
/// A stage whose input and output dimensions agree is skipped: `d == n`
/// bypasses the random projection and `n == k` bypasses the streaming SVD.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReductionConfig {
    pub input_dim: usize,
    pub projected_dim: usize,
    pub latent_dim: usize,
    /// Columns per streaming SVD update.
    pub batch: usize,
    pub seed: u64,
    pub mode: DensityMode,
    pub decay: f64,
    pub alignment: BasisAlignment,
}

impl ReductionConfig {
    pub fn new(input_dim: usize, projected_dim: usize, latent_dim: usize) -> Self {
        Self {
            input_dim,
            projected_dim,
            latent_dim,
            batch: 1,
            seed: 0,
            mode: DensityMode::Achlioptas,
            decay: 1.0,
            alignment: BasisAlignment::Procrustes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.batch == 0 {
            return Err(Error::invalid("latent dimension and batch size must be positive"));
        }
        if !(self.latent_dim <= self.projected_dim && self.projected_dim <= self.input_dim) {
            return Err(Error::invalid(alloc::format!(
                "need k <= n <= d, got k={}, n={}, d={}",
                self.latent_dim,
                self.projected_dim,
                self.input_dim
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::invalid("decay must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Sample-at-a-time driver for the reduction stages.
///
/// Samples are projected to `n` dimensions on arrival, buffered into blocks
/// of `batch` columns, folded into the streaming SVD, and then emitted in the
/// updated basis. Until the tracker is initialized, samples accumulate.
#[derive(Debug, Clone)]
pub struct StreamingReducer {
    config: ReductionConfig,
    projection: Option<SparseProjection>,
    tracker: Option<ProSvd>,
    pending: Vec<DVector<f64>>,
}

impl StreamingReducer {
    pub fn new(config: ReductionConfig) -> Result<Self> {
        config.validate()?;
        let projection = if config.projected_dim < config.input_dim {
            Some(SparseProjection::new(
                config.input_dim,
                config.projected_dim,
                config.seed,
                config.mode,
            )?)
        } else {
            None
        };
        Ok(Self {
            config,
            projection,
            tracker: None,
            pending: Vec::new(),
        })
    }

    pub fn config(&self) -> &ReductionConfig {
        &self.config
    }

    pub fn projection(&self) -> Option<&SparseProjection> {
        self.projection.as_ref()
    }

    pub fn tracker(&self) -> Option<&ProSvd> {
        self.tracker.as_ref()
    }

    fn uses_tracker(&self) -> bool {
        self.config.latent_dim < self.config.projected_dim
    }

    /// Feeds one `d`-dimensional sample; returns the `k`-dimensional samples
    /// that became available (possibly none).
    pub fn push(&mut self, x: &[f64]) -> Result<Vec<DVector<f64>>> {
        if x.len() != self.config.input_dim {
            return Err(Error::shape("reducer input", (self.config.input_dim, 1), (x.len(), 1)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reducer input"));
        }
        let projected = match &self.projection {
            Some(p) => p.project_vec(x)?,
            None => DVector::from_column_slice(x),
        };
        if !self.uses_tracker() {
            return Ok(alloc::vec![projected]);
        }
        self.pending.push(projected);
        match self.tracker {
            None => self.try_init(),
            Some(_) if self.pending.len() >= self.config.batch => self.flush(),
            Some(_) => Ok(Vec::new()),
        }
    }

    /// Folds any buffered samples into the tracker and emits them.
    pub fn flush(&mut self) -> Result<Vec<DVector<f64>>> {
        if self.pending.is_empty() {
            return Ok(Vec::new());
        }
        let Some(tracker) = self.tracker.as_mut() else {
            return Ok(Vec::new());
        };
        let block = DMatrix::from_columns(&self.pending);
        self.pending.clear();
        tracker.update(&block)?;
        let reduced = tracker.project_block(&block)?;
        Ok(reduced.column_iter().map(|c| c.into_owned()).collect())
    }

    fn try_init(&mut self) -> Result<Vec<DVector<f64>>> {
        let k = self.config.latent_dim;
        let needed = k.max(self.config.batch);
        if self.pending.len() < needed {
            return Ok(Vec::new());
        }
        // Initialize on the most recent k samples; older buffered samples
        // (kept when earlier attempts were rank deficient) follow as an update.
        let split = self.pending.len() - k;
        let init_block = DMatrix::from_columns(&self.pending[split..]);
        let tracker = match ProSvd::init(&init_block, k) {
            Ok(t) => t,
            Err(Error::RankDeficientInit { .. }) => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut tracker = tracker
            .with_decay(self.config.decay)?
            .with_alignment(self.config.alignment);
        if split > 0 {
            tracker.update(&DMatrix::from_columns(&self.pending[..split]))?;
        }
        let all = DMatrix::from_columns(&self.pending);
        self.pending.clear();
        let reduced = tracker.project_block(&all)?;
        self.tracker = Some(tracker);
        Ok(reduced.column_iter().map(|c| c.into_owned()).collect())
    }

    /// Runs a whole `d x T` matrix through the reducer, returning `k x T'`
    /// where `T'` counts the samples emitted (all of them after the final flush).
    pub fn reduce_all(&mut self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = Vec::with_capacity(data.ncols());
        for c in data.column_iter() {
            out.extend(self.push(c.as_slice())?);
        }
        out.extend(self.flush()?);
        if out.is_empty() {
            return Ok(DMatrix::zeros(self.config.latent_dim, 0));
        }
        Ok(DMatrix::from_columns(&out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;

    #[test]
    fn identity_stages_pass_samples_through() {
        let mut r = StreamingReducer::new(ReductionConfig::new(3, 3, 3)).unwrap();
        let out = r.push(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].as_slice(), &[1.0, 2.0, 3.0]);
        assert!(r.projection().is_none() && r.tracker().is_none());
    }

    #[test]
    fn emits_every_sample_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = gaussian_matrix(40, 57, &mut rng);
        let mut cfg = ReductionConfig::new(40, 12, 3);
        cfg.batch = 5;
        let mut r = StreamingReducer::new(cfg).unwrap();
        let reduced = r.reduce_all(&data).unwrap();
        assert_eq!(reduced.shape(), (3, 57));
    }

    #[test]
    fn rejects_inconsistent_dimensions() {
        assert!(StreamingReducer::new(ReductionConfig::new(10, 12, 3)).is_err());
        assert!(StreamingReducer::new(ReductionConfig::new(10, 5, 6)).is_err());
        let mut r = StreamingReducer::new(ReductionConfig::new(10, 5, 2)).unwrap();
        assert!(matches!(r.push(&[0.0; 9]), Err(Error::Shape { .. })));
    }

    #[test]
    fn waits_out_rank_deficient_prefix() {
        let mut cfg = ReductionConfig::new(4, 4, 2);
        cfg.batch = 1;
        let mut r = StreamingReducer::new(cfg).unwrap();
        assert!(r.push(&[1.0, 0.0, 0.0, 0.0]).unwrap().is_empty());
        assert!(r.push(&[2.0, 0.0, 0.0, 0.0]).unwrap().is_empty());
        let out = r.push(&[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(out.len(), 3);
        assert!(r.tracker().is_some());
    }
}
