use alloc::vec::Vec;

use crate::math;

/// First and second moment accumulators over a flat parameter vector, with
/// bias correction. Updates ascend the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) steps: u64,
}

/// Per-step constants of the update rule.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AdamStep {
    beta1: f64,
    beta2: f64,
    eps: f64,
    /// `step / (1 − beta1^t)`.
    lr: f64,
    /// `1 / sqrt(1 − beta2^t)`.
    inv_sqrt_bc2: f64,
}

impl AdamStep {
    #[inline(always)]
    pub(crate) fn step(&self, m: &mut f64, v: &mut f64, g: f64) -> f64 {
        let m1 = self.beta1 * *m + (1.0 - self.beta1) * g;
        let v1 = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        *m = m1;
        *v = v1;
        self.lr * m1 / (math::sqrt(v1) * self.inv_sqrt_bc2 + self.eps)
    }
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self { m: alloc::vec![0.0; len], v: alloc::vec![0.0; len], steps: 0 }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Advances the step counter and returns the constants for this step.
    pub(crate) fn begin(&mut self, step_size: f64, beta1: f64, beta2: f64, eps: f64) -> AdamStep {
        self.steps += 1;
        let t = self.steps.min(i32::MAX as u64) as i32;
        let bc1 = 1.0 - math::powi(beta1, t);
        let bc2 = 1.0 - math::powi(beta2, t);
        AdamStep { beta1, beta2, eps, lr: step_size / bc1, inv_sqrt_bc2: 1.0 / math::sqrt(bc2) }
    }

    /// Folds gradient `g` into slot `idx` and returns the ascent increment.
    #[inline(always)]
    pub(crate) fn delta(&mut self, c: &AdamStep, idx: usize, g: f64) -> f64 {
        c.step(&mut self.m[idx], &mut self.v[idx], g)
    }

    pub(crate) fn reset_range(&mut self, range: core::ops::Range<usize>) {
        self.m[range.clone()].fill(0.0);
        self.v[range].fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_step_size() {
        let mut a = Adam::new(2);
        let c = a.begin(0.1, 0.9, 0.999, 1e-8);
        let d0 = a.delta(&c, 0, 3.0);
        let d1 = a.delta(&c, 1, -0.02);
        assert!((d0 - 0.1).abs() < 1e-8);
        assert!((d1 + 0.1).abs() < 1e-6);
    }

    #[test]
    fn climbs_a_concave_quadratic() {
        let mut a = Adam::new(1);
        let mut x = 5.0;
        for _ in 0..2000 {
            let c = a.begin(0.05, 0.9, 0.999, 1e-8);
            x += a.delta(&c, 0, -2.0 * (x - 1.0));
        }
        assert!((x - 1.0).abs() < 1e-2);
    }

    #[test]
    fn reset_clears_moments() {
        let mut a = Adam::new(3);
        let c = a.begin(0.1, 0.9, 0.999, 1e-8);
        for i in 0..3 {
            a.delta(&c, i, 1.0);
        }
        a.reset_range(1..2);
        assert_eq!(a.m[1], 0.0);
        assert!(a.m[0] != 0.0 && a.m[2] != 0.0);
    }
}
