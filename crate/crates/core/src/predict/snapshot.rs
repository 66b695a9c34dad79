use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Model, NodeParams};

/// Read access to everything multi-step prediction needs.
///
/// Implemented by immutable snapshots and by the live model, so a
/// single-threaded evaluator can score without copying.
pub trait Predictive {
    fn nodes(&self) -> usize;
    fn dim(&self) -> usize;
    /// Row-stochastic `N x N` transition matrix.
    fn transition(&self) -> &DMatrix<f64>;
    /// Current filtered posterior.
    fn alpha(&self) -> &DVector<f64>;
    /// Log-density of node `j` at `x`.
    fn log_density(&self, j: usize, x: &[f64]) -> f64;
}

/// Immutable deep copy of the model quantities used for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot {
    params: NodeParams,
    alpha: DVector<f64>,
}

impl ModelSnapshot {
    /// Validates and packs a snapshot. `means` is `k x N`; `chol` holds the
    /// precision Cholesky factors; `transition` must be row-stochastic with
    /// positive entries.
    pub fn new(
        transition: DMatrix<f64>,
        means: DMatrix<f64>,
        chol: Vec<DMatrix<f64>>,
        alpha: DVector<f64>,
    ) -> Result<Self> {
        let n = means.ncols();
        if transition.shape() != (n, n) {
            return Err(Error::shape("transition matrix", (n, n), transition.shape()));
        }
        if alpha.len() != n {
            return Err(Error::shape("posterior", (n, 1), (alpha.len(), 1)));
        }
        for i in 0..n {
            let row = transition.row(i);
            if (row.sum() - 1.0).abs() > 1e-12 || row.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::invalid("transition rows must be positive and sum to one"));
            }
        }
        if alpha.iter().any(|&v| !(v >= 0.0)) || (alpha.sum() - 1.0).abs() > 1e-10 {
            return Err(Error::invalid("posterior must be a probability vector"));
        }
        // Logits `ln A` reproduce `A` under the row softmax up to rounding;
        // the stored transition is then restored exactly.
        let logits = transition.map(f64::ln);
        let mut params = NodeParams::new(means, chol, logits)?;
        params.transition = transition;
        Ok(Self { params, alpha })
    }

    pub(crate) fn from_params(params: &NodeParams, alpha: DVector<f64>) -> Self {
        Self { params: params.clone(), alpha }
    }

    pub fn means(&self) -> &DMatrix<f64> {
        self.params.means()
    }

    pub fn mean(&self, j: usize) -> &[f64] {
        self.params.mean(j)
    }

    pub fn chol(&self, j: usize) -> &DMatrix<f64> {
        self.params.chol(j)
    }

    pub fn covariance(&self, j: usize) -> Result<DMatrix<f64>> {
        self.params.covariance(j)
    }
}

impl Predictive for ModelSnapshot {
    fn nodes(&self) -> usize {
        self.params.nodes()
    }

    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn transition(&self) -> &DMatrix<f64> {
        self.params.transition()
    }

    fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    fn log_density(&self, j: usize, x: &[f64]) -> f64 {
        self.params.log_density(j, x)
    }
}

impl Predictive for Model {
    fn nodes(&self) -> usize {
        self.params().nodes()
    }

    fn dim(&self) -> usize {
        self.params().dim()
    }

    fn transition(&self) -> &DMatrix<f64> {
        self.params().transition()
    }

    fn alpha(&self) -> &DVector<f64> {
        self.stats().alpha()
    }

    fn log_density(&self, j: usize, x: &[f64]) -> f64 {
        self.params().log_density(j, x)
    }
}
