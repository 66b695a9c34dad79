//! Causal stream evaluation: learn on each sample, then score the realized
//! future samples with the state reached so far.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use super::baseline::{RandomWalkBaseline, BASELINE_RATE};
use super::mixture::{mixture_log_density, Entropy};
use super::snapshot::Predictive;
use crate::error::{Error, Result};
use crate::model::{Hyperparameters, Model, PhaseProbe};

/// Monotonic time source in seconds.
pub trait Clock {
    fn now(&mut self) -> f64;
}

/// Clock that always reads zero; timings come out as zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&mut self) -> f64 {
        0.0
    }
}

/// One scored prediction: the state after observing sample `t`, evaluated
/// on sample `t + horizon`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsRecord {
    pub t: u64,
    pub horizon: u32,
    /// Nats.
    pub log_pred_prob: f64,
    pub baseline_log_pred_prob: f64,
    pub entropy_nats: f64,
    pub entropy_bits: f64,
    /// Seconds spent learning sample `t`.
    pub learn_time: f64,
    /// Seconds spent producing this prediction.
    pub predict_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of<I: IntoIterator<Item = f64>>(values: I) -> Self
    where
        I::IntoIter: Clone,
    {
        let it = values.into_iter();
        let mut n = 0usize;
        let mut sum = 0.0;
        for v in it.clone() {
            n += 1;
            sum += v;
        }
        if n == 0 {
            return MeanStd { mean: f64::NAN, std: f64::NAN };
        }
        let mean = sum / n as f64;
        let var = it.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        MeanStd { mean, std: crate::math::sqrt(var) }
    }
}

/// Per-horizon summary over the last half of the records.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HorizonSummary {
    pub horizon: u32,
    /// Records summarized (the last `floor(m / 2)` of `m`).
    pub count: usize,
    pub first_t: u64,
    pub log_pred_prob: MeanStd,
    pub baseline_log_pred_prob: MeanStd,
    pub entropy_nats: MeanStd,
    pub entropy_bits: MeanStd,
}

/// Summaries for each horizon, in the order given.
pub fn summarize(records: &[MetricsRecord], horizons: &[usize]) -> Vec<HorizonSummary> {
    horizons
        .iter()
        .map(|&h| {
            let rows: Vec<&MetricsRecord> = records.iter().filter(|r| r.horizon as usize == h).collect();
            let tail = &rows[rows.len() - rows.len() / 2..];
            HorizonSummary {
                horizon: h as u32,
                count: tail.len(),
                first_t: tail.first().map(|r| r.t).unwrap_or(0),
                log_pred_prob: MeanStd::of(tail.iter().map(|r| r.log_pred_prob)),
                baseline_log_pred_prob: MeanStd::of(tail.iter().map(|r| r.baseline_log_pred_prob)),
                entropy_nats: MeanStd::of(tail.iter().map(|r| r.entropy_nats)),
                entropy_bits: MeanStd::of(tail.iter().map(|r| r.entropy_bits)),
            }
        })
        .collect()
}

/// Samples needed to evaluate `horizons` after an `init_buffer`-sample warm start.
pub fn required_length(horizons: &[usize], init_buffer: usize) -> usize {
    2 * horizons.iter().copied().max().unwrap_or(0) + init_buffer
}

/// Scores one prediction step for every horizon, sweeping the weights
/// forward once. Calls `emit(horizon, log_pred_prob, entropy, elapsed)`.
pub fn score_horizons<P, C, F>(
    model: &P,
    data: &DMatrix<f64>,
    t: usize,
    horizons: &[usize],
    clock: &mut C,
    mut emit: F,
) where
    P: Predictive + ?Sized,
    C: Clock,
    F: FnMut(usize, f64, Entropy, f64),
{
    let len = data.ncols();
    let max = horizons.iter().copied().filter(|&h| t + h < len).max().unwrap_or(0);
    if max == 0 {
        return;
    }
    let n = model.nodes();
    let a = model.transition().as_slice();
    let start = clock.now();
    let mut w: DVector<f64> = model.alpha().clone();
    let mut next = DVector::zeros(n);
    for step in 1..=max {
        for (j, o) in next.iter_mut().enumerate() {
            *o = crate::math::dot(&a[j * n..(j + 1) * n], w.as_slice());
        }
        core::mem::swap(&mut w, &mut next);
        for &h in horizons.iter().filter(|&&h| h == step) {
            let lp = mixture_log_density(model, w.as_slice(), data.column(t + h).as_slice());
            let ent = Entropy::of(w.as_slice());
            let elapsed = clock.now() - start;
            emit(h, lp, ent, elapsed);
        }
    }
}

/// Outcome of [`eval_stream`].
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub records: Vec<MetricsRecord>,
    pub summary: Vec<HorizonSummary>,
    pub model: Model,
}

/// Validates the protocol and builds the model and baseline from the first
/// `hyper.init_buffer` columns of `data` (`k x L`).
pub fn init_stream(
    data: &DMatrix<f64>,
    hyper: Hyperparameters,
    horizons: &[usize],
) -> Result<(Model, RandomWalkBaseline)> {
    check_horizons(horizons)?;
    let m = hyper.init_buffer;
    let needed = required_length(horizons, m);
    if data.ncols() < needed || data.ncols() <= m {
        return Err(Error::InsufficientData { needed: needed.max(m + 1), available: data.ncols() });
    }
    let buffer = data.columns(0, m).into_owned();
    let model = Model::init(&buffer, hyper)?;
    let baseline = RandomWalkBaseline::from_buffer(&buffer, BASELINE_RATE)?;
    Ok((model, baseline))
}

fn check_horizons(horizons: &[usize]) -> Result<()> {
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::invalid("horizons must be a nonempty list of positive counts"));
    }
    Ok(())
}

/// Learns samples `range` of `data` one at a time and, after each, scores
/// `x_{t+T}` for every horizon that still fits in the stream. Records are
/// appended in increasing `t`, horizons in the caller's order.
///
/// Updates run every `model.hyper().batch_period` samples.
#[allow(clippy::too_many_arguments)]
pub fn eval_range<C: Clock, P: PhaseProbe>(
    model: &mut Model,
    baseline: &mut RandomWalkBaseline,
    data: &DMatrix<f64>,
    range: core::ops::Range<usize>,
    horizons: &[usize],
    clock: &mut C,
    probe: &mut P,
    records: &mut Vec<MetricsRecord>,
) -> Result<()> {
    check_horizons(horizons)?;
    if range.end > data.ncols() {
        return Err(Error::InsufficientData { needed: range.end, available: data.ncols() });
    }
    let period = model.hyper().batch_period;
    let mut step_records: Vec<MetricsRecord> = Vec::with_capacity(horizons.len());
    for t in range {
        let x = data.column(t);
        let t0 = clock.now();
        model.observe_with(x.as_slice(), period, probe)?;
        let learn_time = clock.now() - t0;
        baseline.observe(x.as_slice());
        step_records.clear();
        let mut failure = None;
        score_horizons(&*model, data, t, horizons, clock, |h, lp, ent, elapsed| {
            match baseline.log_prob(data.column(t + h).as_slice(), h) {
                Ok(base) => step_records.push(MetricsRecord {
                    t: t as u64,
                    horizon: h as u32,
                    log_pred_prob: lp,
                    baseline_log_pred_prob: base,
                    entropy_nats: ent.nats,
                    entropy_bits: ent.bits,
                    learn_time,
                    predict_time: elapsed,
                }),
                Err(e) => failure = Some(e),
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        for &h in horizons {
            records.extend(step_records.iter().filter(|r| r.horizon as usize == h));
        }
    }
    Ok(())
}

/// Initializes a model on the first `hyper.init_buffer` columns of `data`
/// (`k x L`) and then, for every later sample `t`, learns it and scores
/// `x_{t+T}` for each horizon that still fits in the stream.
pub fn eval_stream<C: Clock, P: PhaseProbe>(
    data: &DMatrix<f64>,
    hyper: Hyperparameters,
    horizons: &[usize],
    clock: &mut C,
    probe: &mut P,
) -> Result<Evaluation> {
    let m = hyper.init_buffer;
    let (mut model, mut baseline) = init_stream(data, hyper, horizons)?;
    let mut records = Vec::with_capacity((data.ncols() - m) * horizons.len());
    eval_range(&mut model, &mut baseline, data, m..data.ncols(), horizons, clock, probe, &mut records)?;
    let summary = summarize(&records, horizons);
    Ok(Evaluation { records, summary, model })
}
