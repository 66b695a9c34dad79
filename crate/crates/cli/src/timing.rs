//! Wall-clock measurement of learning phases and predictions.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use streamtile_core::model::{Phase, PhaseProbe};
use streamtile_core::predict::{Clock, MetricsRecord};

/// Samples excluded from timing statistics at the start of a stream.
pub const WARMUP_SAMPLES: usize = 100;

/// Seconds since construction, from the monotonic clock.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&mut self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Seconds spent in each learning phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTotals {
    pub teleport_check: f64,
    pub e_step: f64,
    pub prior_update: f64,
    pub m_step: f64,
}

impl PhaseTotals {
    pub fn sum(&self) -> f64 {
        self.teleport_check + self.e_step + self.prior_update + self.m_step
    }

    fn slot(&mut self, phase: Phase) -> &mut f64 {
        match phase {
            Phase::TeleportCheck => &mut self.teleport_check,
            Phase::EStep => &mut self.e_step,
            Phase::PriorUpdate => &mut self.prior_update,
            Phase::MStep => &mut self.m_step,
        }
    }
}

/// Accumulates phase durations while `enabled`.
#[derive(Debug, Clone, Default)]
pub struct PhaseTimer {
    pub enabled: bool,
    started: [Option<Instant>; 4],
    totals: PhaseTotals,
}

fn index(phase: Phase) -> usize {
    match phase {
        Phase::TeleportCheck => 0,
        Phase::EStep => 1,
        Phase::PriorUpdate => 2,
        Phase::MStep => 3,
    }
}

impl PhaseTimer {
    pub fn new(enabled: bool) -> Self {
        Self { enabled, ..Self::default() }
    }

    pub fn totals(&self) -> PhaseTotals {
        self.totals
    }
}

impl PhaseProbe for PhaseTimer {
    fn enter(&mut self, phase: Phase) {
        if self.enabled {
            self.started[index(phase)] = Some(Instant::now());
        }
    }

    fn exit(&mut self, phase: Phase) {
        if let Some(start) = self.started[index(phase)].take() {
            *self.totals.slot(phase) += start.elapsed().as_secs_f64();
        }
    }
}

/// Summary of a set of durations, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub count: usize,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl Percentiles {
    /// Percentiles by linear interpolation between order statistics. All
    /// fields are zero for an empty set.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { count: 0, mean: 0.0, p50: 0.0, p95: 0.0, p99: 0.0, max: 0.0 };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        Self {
            count: sorted.len(),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p50: q(0.50),
            p95: q(0.95),
            p99: q(0.99),
            max: sorted[sorted.len() - 1],
        }
    }
}

/// Timing of one streaming run, excluding the warm-up samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub warmup_samples: usize,
    /// Samples whose learn and prediction times are summarized.
    pub samples_timed: usize,
    pub phases: PhaseTotals,
    pub phase_sum: f64,
    /// Learning time per sample.
    pub learn: Percentiles,
    /// Time to score every horizon after one sample.
    pub prediction: Percentiles,
    /// Total learning time divided by samples.
    pub amortized_learn: f64,
    /// Wall time of the timed part of the stream.
    pub total: f64,
}

impl TimingReport {
    /// Builds the report from the records of samples `t >= first_timed`.
    pub fn from_records(
        records: &[MetricsRecord],
        first_timed: u64,
        warmup_samples: usize,
        phases: PhaseTotals,
        total: f64,
    ) -> Self {
        let mut learn = Vec::new();
        let mut predict = Vec::new();
        let mut last_t = None;
        for r in records.iter().filter(|r| r.t >= first_timed) {
            if last_t != Some(r.t) {
                last_t = Some(r.t);
                learn.push(r.learn_time);
                predict.push(r.predict_time);
            } else if let Some(p) = predict.last_mut() {
                *p = p.max(r.predict_time);
            }
        }
        let learn = Percentiles::of(&learn);
        Self {
            warmup_samples,
            samples_timed: learn.count,
            phases,
            phase_sum: phases.sum(),
            amortized_learn: learn.mean,
            learn,
            prediction: Percentiles::of(&predict),
            total,
        }
    }
}
