use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math;

/// Smoothing rate of the residual-variance estimate.
pub const BASELINE_RATE: f64 = 0.01;

/// Smallest variance the baseline will report, so the density stays finite
/// on perfectly still streams.
pub const BASELINE_VARIANCE_FLOOR: f64 = 1e-12;

/// `log N(x_future; x_now, T·σ²·I)`.
pub fn random_walk_log_prob(sigma2: f64, x_now: &[f64], x_future: &[f64], horizon: usize) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid("random-walk variance must be positive"));
    }
    if horizon == 0 {
        return Err(Error::invalid("prediction horizon must be at least 1"));
    }
    if x_now.len() != x_future.len() {
        return Err(Error::shape("future observation", (x_now.len(), 1), (x_future.len(), 1)));
    }
    Ok(log_prob_unchecked(sigma2, x_now, x_future, horizon))
}

fn log_prob_unchecked(sigma2: f64, x_now: &[f64], x_future: &[f64], horizon: usize) -> f64 {
    let k = x_now.len() as f64;
    let var = horizon as f64 * sigma2;
    let sq: f64 = x_now.iter().zip(x_future).map(|(a, b)| (b - a) * (b - a)).sum();
    -0.5 * (k * (math::LN_2PI + math::ln(var)) + sq / var)
}

/// Isotropic random-walk predictor whose step variance tracks the mean
/// squared one-step residual with an exponential smoother.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalkBaseline {
    sigma2: f64,
    rate: f64,
    last: Option<DVector<f64>>,
}

impl RandomWalkBaseline {
    pub fn new(sigma2: f64, rate: f64) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(Error::invalid("random-walk variance must be positive"));
        }
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::invalid("smoothing rate must lie in [0, 1]"));
        }
        Ok(Self { sigma2, rate, last: None })
    }

    /// Starts from the mean squared residual of a `k x M` buffer and
    /// remembers its last column.
    pub fn from_buffer(buffer: &DMatrix<f64>, rate: f64) -> Result<Self> {
        let (k, m) = buffer.shape();
        if m < 2 || k == 0 {
            return Err(Error::invalid("baseline buffer needs at least 2 samples"));
        }
        let mut total = 0.0;
        for c in 1..m {
            total += (buffer.column(c) - buffer.column(c - 1)).norm_squared() / k as f64;
        }
        let sigma2 = (total / (m - 1) as f64).max(BASELINE_VARIANCE_FLOOR);
        let mut b = Self::new(sigma2, rate)?;
        b.last = Some(buffer.column(m - 1).into_owned());
        Ok(b)
    }

    /// Restores a baseline from its saved variance, rate and last sample.
    pub fn from_state(sigma2: f64, rate: f64, last: Option<DVector<f64>>) -> Result<Self> {
        let mut b = Self::new(sigma2, rate)?;
        b.last = last;
        Ok(b)
    }

    /// Most recent sample, if any.
    pub fn last(&self) -> Option<&DVector<f64>> {
        self.last.as_ref()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Feeds the next sample, updating the variance from its residual.
    pub fn observe(&mut self, x: &[f64]) {
        if let Some(prev) = &self.last {
            let k = x.len() as f64;
            let msr: f64 = prev.iter().zip(x).map(|(a, b)| (b - a) * (b - a)).sum::<f64>() / k;
            self.sigma2 = ((1.0 - self.rate) * self.sigma2 + self.rate * msr).max(BASELINE_VARIANCE_FLOOR);
        }
        match &mut self.last {
            Some(v) if v.len() == x.len() => v.copy_from_slice(x),
            _ => self.last = Some(DVector::from_column_slice(x)),
        }
    }

    /// Log density of `x_future` predicted from the last observed sample.
    pub fn log_prob(&self, x_future: &[f64], horizon: usize) -> Result<f64> {
        let last = self
            .last
            .as_ref()
            .ok_or(Error::Precondition("baseline has not observed a sample"))?;
        random_walk_log_prob(self.sigma2, last.as_slice(), x_future, horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_displacement_value() {
        let v = random_walk_log_prob(0.5, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 1).unwrap();
        assert!((v + 1.5 * (2.0 * core::f64::consts::PI * 0.5).ln()).abs() < 1e-14);
    }

    #[test]
    fn doubling_horizon_costs_half_k_log_two() {
        let x = [0.3, -0.2];
        let a = random_walk_log_prob(0.7, &x, &x, 3).unwrap();
        let b = random_walk_log_prob(0.7, &x, &x, 6).unwrap();
        assert!((a - b - core::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn rejects_nonpositive_variance() {
        assert!(matches!(random_walk_log_prob(0.0, &[0.0], &[0.0], 1), Err(Error::InvalidArgument(_))));
        assert!(RandomWalkBaseline::new(-1.0, 0.01).is_err());
    }

    #[test]
    fn smoother_moves_toward_residual() {
        let mut b = RandomWalkBaseline::new(1.0, 0.5).unwrap();
        b.observe(&[0.0]);
        assert_eq!(b.sigma2(), 1.0);
        b.observe(&[3.0]);
        assert!((b.sigma2() - 5.0).abs() < 1e-15);
    }
}
