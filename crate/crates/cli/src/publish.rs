//! Snapshot publication between a learner thread and an evaluator thread.

use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use arc_swap::ArcSwapOption;
use nalgebra::DMatrix;
use streamtile_core::model::{Model, PhaseProbe};
use streamtile_core::predict::eval::score_horizons;
use streamtile_core::predict::{Clock, MetricsRecord, ModelSnapshot, RandomWalkBaseline};

use crate::error::{HarnessError, Result};
use crate::timing::MonotonicClock;

/// State after learning sample `t`.
#[derive(Debug, Clone)]
pub struct Published {
    pub t: usize,
    pub snapshot: ModelSnapshot,
    pub baseline: RandomWalkBaseline,
    pub learn_time: f64,
}

/// Single-writer cell holding the latest publication. Readers never block
/// the writer and always see a complete snapshot.
#[derive(Debug, Default)]
pub struct SnapshotCell {
    latest: ArcSwapOption<Published>,
}

impl SnapshotCell {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, item: Published) {
        self.latest.store(Some(Arc::new(item)));
    }

    pub fn latest(&self) -> Option<Arc<Published>> {
        self.latest.load_full()
    }
}

/// Scores one publication against the stream; records come out in the
/// order of `horizons`.
pub fn score_published<C: Clock>(
    item: &Published,
    data: &DMatrix<f64>,
    horizons: &[usize],
    clock: &mut C,
) -> Result<Vec<MetricsRecord>> {
    let mut rows = Vec::with_capacity(horizons.len());
    let mut failure = None;
    score_horizons(&item.snapshot, data, item.t, horizons, clock, |h, lp, ent, elapsed| {
        match item.baseline.log_prob(data.column(item.t + h).as_slice(), h) {
            Ok(base) => rows.push(MetricsRecord {
                t: item.t as u64,
                horizon: h as u32,
                log_pred_prob: lp,
                baseline_log_pred_prob: base,
                entropy_nats: ent.nats,
                entropy_bits: ent.bits,
                learn_time: item.learn_time,
                predict_time: elapsed,
            }),
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    let mut ordered = Vec::with_capacity(rows.len());
    for &h in horizons {
        ordered.extend(rows.iter().filter(|r| r.horizon as usize == h));
    }
    Ok(ordered)
}

/// Learns `range` on a worker thread, publishing a snapshot after every
/// `every` samples and after the last, while the calling thread scores the
/// newest publication it has not scored yet. Publications superseded before
/// the evaluator reaches them are skipped, so the records are those of the
/// single-threaded evaluation at a subset of times.
///
/// Returns the number of publications scored.
#[allow(clippy::too_many_arguments)]
pub fn eval_threaded<P: PhaseProbe + Send>(
    model: &mut Model,
    baseline: &mut RandomWalkBaseline,
    data: &DMatrix<f64>,
    range: Range<usize>,
    horizons: &[usize],
    every: usize,
    probe: &mut P,
    records: &mut Vec<MetricsRecord>,
) -> Result<usize> {
    let every = every.max(1);
    let cell = SnapshotCell::new();
    let done = AtomicBool::new(false);
    let last = range.end.saturating_sub(1);
    let start = range.start;
    std::thread::scope(|scope| {
        let learner = scope.spawn(|| -> Result<()> {
            let mut clock = MonotonicClock::new();
            let period = model.hyper().batch_period;
            let outcome = (|| {
                for t in range {
                    let x = data.column(t);
                    let t0 = clock.now();
                    model.observe_with(x.as_slice(), period, probe)?;
                    let learn_time = clock.now() - t0;
                    baseline.observe(x.as_slice());
                    if (t - start + 1) % every == 0 || t == last {
                        cell.publish(Published {
                            t,
                            snapshot: model.snapshot(),
                            baseline: baseline.clone(),
                            learn_time,
                        });
                    }
                }
                Ok(())
            })();
            done.store(true, Ordering::Release);
            outcome
        });

        let mut clock = MonotonicClock::new();
        let mut scored_up_to: Option<usize> = None;
        let mut scored = 0;
        loop {
            let finished = done.load(Ordering::Acquire);
            match cell.latest() {
                Some(item) if scored_up_to.is_none_or(|s| item.t > s) => {
                    records.extend(score_published(&item, data, horizons, &mut clock)?);
                    scored_up_to = Some(item.t);
                    scored += 1;
                }
                _ if finished => break,
                _ => std::thread::yield_now(),
            }
        }
        learner.join().map_err(|_| HarnessError::Worker)??;
        Ok(scored)
    })
}
