use alloc::vec::Vec;
use nalgebra::DVector;

use super::snapshot::Predictive;
use crate::error::{Error, Result};
use crate::math;

/// Node weights `T` steps ahead: `w = (Aᵀ)^T α`, by repeated
/// vector-matrix products.
pub fn predict_weights<P: Predictive + ?Sized>(model: &P, horizon: usize) -> DVector<f64> {
    let mut w = model.alpha().clone();
    let mut next = DVector::zeros(w.len());
    for _ in 0..horizon {
        step_weights(model, w.as_slice(), next.as_mut_slice());
        core::mem::swap(&mut w, &mut next);
    }
    w
}

/// Weights for several horizons in one sweep; output order follows `horizons`.
pub fn predict_weights_many<P: Predictive + ?Sized>(model: &P, horizons: &[usize]) -> Vec<DVector<f64>> {
    let max = horizons.iter().copied().max().unwrap_or(0);
    let mut out: Vec<Option<DVector<f64>>> = alloc::vec![None; horizons.len()];
    let mut w = model.alpha().clone();
    let mut next = DVector::zeros(w.len());
    for step in 0..=max {
        for (slot, &h) in out.iter_mut().zip(horizons) {
            if h == step {
                *slot = Some(w.clone());
            }
        }
        if step < max {
            step_weights(model, w.as_slice(), next.as_mut_slice());
            core::mem::swap(&mut w, &mut next);
        }
    }
    out.into_iter().map(|w| w.expect("every horizon is visited")).collect()
}

fn step_weights<P: Predictive + ?Sized>(model: &P, w: &[f64], out: &mut [f64]) {
    let n = w.len();
    let a = model.transition().as_slice();
    for (j, o) in out.iter_mut().enumerate() {
        *o = math::dot(&a[j * n..(j + 1) * n], w);
    }
}

/// The predictive mixture `T` steps ahead: node weights over the model's
/// Gaussian components.
#[derive(Debug, Clone)]
pub struct Mixture<'a, P: Predictive + ?Sized> {
    pub weights: DVector<f64>,
    pub components: &'a P,
}

impl<'a, P: Predictive + ?Sized> Mixture<'a, P> {
    /// `log Σⱼ wⱼ N(x; μⱼ, Σⱼ)`, mixed in log space.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        mixture_log_density(self.components, self.weights.as_slice(), x)
    }
}

pub fn predict_mixture<P: Predictive + ?Sized>(model: &P, horizon: usize) -> Mixture<'_, P> {
    Mixture { weights: predict_weights(model, horizon), components: model }
}

pub(crate) fn mixture_log_density<P: Predictive + ?Sized>(model: &P, w: &[f64], x: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    // Two passes over the nodes keep the scratch at O(1).
    for (j, &wj) in w.iter().enumerate() {
        if wj > 0.0 {
            let v = math::ln(wj) + model.log_density(j, x);
            if v > max {
                max = v;
            }
        }
    }
    if !max.is_finite() {
        return max;
    }
    let mut sum = 0.0;
    for (j, &wj) in w.iter().enumerate() {
        if wj > 0.0 {
            sum += math::exp(math::ln(wj) + model.log_density(j, x) - max);
        }
    }
    max + math::ln(sum)
}

/// Log predictive density of `x_future` given the filtered state, `T >= 1`
/// steps ahead, in nats.
pub fn log_pred_prob<P: Predictive + ?Sized>(model: &P, x_future: &[f64], horizon: usize) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::invalid("prediction horizon must be at least 1"));
    }
    if x_future.len() != model.dim() {
        return Err(Error::shape("future observation", (model.dim(), 1), (x_future.len(), 1)));
    }
    let w = predict_weights(model, horizon);
    Ok(mixture_log_density(model, w.as_slice(), x_future))
}

/// Shannon entropy of a node distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entropy {
    pub nats: f64,
    pub bits: f64,
}

impl Entropy {
    pub fn of(w: &[f64]) -> Self {
        let mut h = 0.0;
        for &p in w {
            if p > 0.0 {
                h -= p * math::ln(p);
            }
        }
        let h = h.max(0.0);
        Entropy { nats: h, bits: h / core::f64::consts::LN_2 }
    }
}

/// Entropy of the predicted node distribution `T >= 1` steps ahead.
pub fn entropy<P: Predictive + ?Sized>(model: &P, horizon: usize) -> Result<Entropy> {
    if horizon == 0 {
        return Err(Error::invalid("prediction horizon must be at least 1"));
    }
    Ok(Entropy::of(predict_weights(model, horizon).as_slice()))
}
