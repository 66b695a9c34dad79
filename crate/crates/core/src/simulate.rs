//! Noisy trajectories of low-dimensional dynamical systems, and a random
//! orthonormal lift into a high-dimensional observation space.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DMatrixView};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, thin_qr};
use crate::math;

/// Any state coordinate beyond this magnitude counts as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum System {
    /// `x' = y`, `y' = mu (1 - x²) y - x`.
    VanDerPol { mu: f64 },
    Lorenz { sigma: f64, rho: f64, beta: f64 },
}

impl System {
    pub fn van_der_pol() -> Self {
        System::VanDerPol { mu: 1.0 }
    }

    pub fn lorenz() -> Self {
        System::Lorenz { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            System::VanDerPol { .. } => 2,
            System::Lorenz { .. } => 3,
        }
    }

    pub fn default_dt(&self) -> f64 {
        match self {
            System::VanDerPol { .. } => 0.1,
            System::Lorenz { .. } => 0.01,
        }
    }

    /// A starting point on or near the attractor.
    pub fn default_initial(&self) -> Vec<f64> {
        match self {
            System::VanDerPol { .. } => alloc::vec![2.0, 0.0],
            System::Lorenz { .. } => alloc::vec![-8.0, 7.0, 27.0],
        }
    }

    pub fn derivative(&self, s: &[f64], out: &mut [f64]) {
        match *self {
            System::VanDerPol { mu } => {
                out[0] = s[1];
                out[1] = mu * (1.0 - s[0] * s[0]) * s[1] - s[0];
            }
            System::Lorenz { sigma, rho, beta } => {
                out[0] = sigma * (s[1] - s[0]);
                out[1] = s[0] * (rho - s[2]) - s[1];
                out[2] = s[0] * s[1] - beta * s[2];
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            System::VanDerPol { mu } => mu.is_finite(),
            System::Lorenz { sigma, rho, beta } => sigma.is_finite() && rho.is_finite() && beta.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("system parameters must be finite"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryConfig {
    pub system: System,
    pub dt: f64,
    pub steps: usize,
    /// Observation-noise std as a fraction of each coordinate's std.
    pub noise_frac: f64,
    pub seed: u64,
    /// Starting state; the system default when absent.
    #[cfg_attr(feature = "serde", serde(default))]
    pub initial: Option<Vec<f64>>,
    /// Integration steps discarded before recording.
    #[cfg_attr(feature = "serde", serde(default))]
    pub burn_in: usize,
}

impl TrajectoryConfig {
    pub fn new(system: System, steps: usize, noise_frac: f64, seed: u64) -> Self {
        Self { dt: system.default_dt(), system, steps, noise_frac, seed, initial: None, burn_in: 0 }
    }

    pub fn van_der_pol(steps: usize, noise_frac: f64, seed: u64) -> Self {
        Self::new(System::van_der_pol(), steps, noise_frac, seed)
    }

    pub fn lorenz(steps: usize, noise_frac: f64, seed: u64) -> Self {
        Self::new(System::lorenz(), steps, noise_frac, seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("time step must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("trajectory needs at least one step"));
        }
        if !(self.noise_frac >= 0.0 && self.noise_frac.is_finite()) {
            return Err(Error::invalid("noise fraction must be nonnegative"));
        }
        if let Some(init) = &self.initial {
            if init.len() != self.system.dim() || init.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("initial state has the wrong dimension or is not finite"));
            }
        }
        Ok(())
    }
}

/// Clean and noisy trajectories, one time step per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub clean: DMatrix<f64>,
    pub noisy: DMatrix<f64>,
}

/// Fourth-order Runge-Kutta integration followed by Gaussian observation
/// noise whose per-coordinate std is `noise_frac` times that coordinate's
/// std over the clean trajectory.
pub fn generate(config: &TrajectoryConfig) -> Result<Trajectory> {
    config.validate()?;
    let sys = config.system;
    let d = sys.dim();
    let dt = config.dt;
    let mut state = config.initial.clone().unwrap_or_else(|| sys.default_initial());
    let mut clean = DMatrix::zeros(d, config.steps);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (alloc::vec![0.0; d], alloc::vec![0.0; d], alloc::vec![0.0; d], alloc::vec![0.0; d], alloc::vec![0.0; d]);
    let total = config.burn_in + config.steps;
    for step in 0..total {
        if step >= config.burn_in {
            clean.column_mut(step - config.burn_in).copy_from_slice(&state);
        }
        sys.derivative(&state, &mut k1);
        for i in 0..d {
            tmp[i] = state[i] + 0.5 * dt * k1[i];
        }
        sys.derivative(&tmp, &mut k2);
        for i in 0..d {
            tmp[i] = state[i] + 0.5 * dt * k2[i];
        }
        sys.derivative(&tmp, &mut k3);
        for i in 0..d {
            tmp[i] = state[i] + dt * k3[i];
        }
        sys.derivative(&tmp, &mut k4);
        for i in 0..d {
            state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if state.iter().any(|v| !(math::abs(*v) <= DIVERGENCE_LIMIT)) {
            return Err(Error::IntegrationDiverged { step: step + 1 });
        }
    }
    let mut noisy = clean.clone();
    if config.noise_frac > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let scales: Vec<f64> = (0..d).map(|r| config.noise_frac * row_std(&clean, r)).collect();
        for mut col in noisy.column_iter_mut() {
            for r in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                col[r] += scales[r] * z;
            }
        }
    }
    Ok(Trajectory { clean, noisy })
}

/// Population std of row `r`.
pub fn row_std(m: &DMatrix<f64>, r: usize) -> f64 {
    let n = m.ncols() as f64;
    let mean = m.row(r).sum() / n;
    let var = m.row(r).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    math::sqrt(var)
}

/// A trajectory embedded in `d` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Lifted {
    /// `d x D` with orthonormal columns.
    pub basis: DMatrix<f64>,
    /// `d x steps`.
    pub data: DMatrix<f64>,
}

/// Maps a `D x steps` trajectory through a seeded random `d x D` matrix
/// with orthonormal columns, then adds i.i.d. noise of std `noise`.
pub fn lift(trajectory: &DMatrix<f64>, d: usize, seed: u64, noise: f64) -> Result<Lifted> {
    let dim = trajectory.nrows();
    if d < dim || dim == 0 {
        return Err(Error::invalid("lift dimension must be at least the trajectory dimension"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid("lift noise must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (basis, _) = thin_qr(gaussian_matrix(d, dim, &mut rng));
    let mut data = &basis * trajectory;
    if noise > 0.0 {
        for v in data.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += noise * z;
        }
    }
    Ok(Lifted { basis, data })
}

/// Consecutive column blocks of width `batch`; the last may be narrower.
pub fn column_blocks(m: &DMatrix<f64>, batch: usize) -> impl Iterator<Item = DMatrixView<'_, f64>> + '_ {
    let b = batch.max(1);
    (0..m.ncols()).step_by(b).map(move |start| m.columns(start, b.min(m.ncols() - start)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_observations_equal_clean() {
        let t = generate(&TrajectoryConfig::van_der_pol(200, 0.0, 1)).unwrap();
        assert_eq!(t.clean, t.noisy);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = TrajectoryConfig::lorenz(300, 0.05, 9);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = TrajectoryConfig::lorenz(300, 0.05, 10);
        assert_ne!(generate(&cfg).unwrap().noisy, generate(&other).unwrap().noisy);
    }

    #[test]
    fn van_der_pol_settles_on_limit_cycle() {
        let t = generate(&TrajectoryConfig::van_der_pol(2000, 0.0, 0)).unwrap();
        let late = t.clean.columns(1000, 1000);
        let amp = late.row(0).amax();
        assert!((amp - 2.0).abs() < 0.05, "amplitude {amp}");
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = TrajectoryConfig::lorenz(100, 0.0, 0);
        cfg.dt = 10.0;
        assert!(matches!(generate(&cfg), Err(Error::IntegrationDiverged { .. })));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = TrajectoryConfig::van_der_pol(10, 0.0, 0);
        cfg.dt = 0.0;
        assert!(generate(&cfg).is_err());
        let mut cfg = TrajectoryConfig::van_der_pol(10, -0.1, 0);
        assert!(generate(&cfg).is_err());
        cfg.noise_frac = 0.0;
        cfg.initial = Some(alloc::vec![1.0]);
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn blocks_cover_the_matrix() {
        let m = DMatrix::from_fn(2, 10, |r, c| (r * 10 + c) as f64);
        let widths: Vec<usize> = column_blocks(&m, 4).map(|b| b.ncols()).collect();
        assert_eq!(widths, [4, 4, 2]);
        assert_eq!(column_blocks(&m, 10).count(), 1);
    }

    #[test]
    fn noiseless_lift_preserves_distances() {
        let t = generate(&TrajectoryConfig::van_der_pol(50, 0.0, 0)).unwrap();
        let l = lift(&t.clean, 40, 3, 0.0).unwrap();
        for (a, b) in [(0, 1), (5, 30), (12, 49)] {
            let low = (t.clean.column(a) - t.clean.column(b)).norm();
            let high = (l.data.column(a) - l.data.column(b)).norm();
            assert!((low - high).abs() < 1e-12);
        }
    }
}
