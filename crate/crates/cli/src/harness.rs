//! The `run`, `bench`, `reduce` and `simulate` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use streamtile_core::model::{Hyperparameters, Model};
use streamtile_core::predict::{
    eval_range, init_stream, log_pred_prob, summarize, HorizonSummary, MetricsRecord,
};
use streamtile_core::reduce::StreamingReducer;
use streamtile_core::simulate::{generate, lift, System, TrajectoryConfig};

use crate::checkpoint::{self, Checkpoint};
use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::matrix_io;
use crate::publish::eval_threaded;
use crate::timing::{MonotonicClock, Percentiles, PhaseTimer, PhaseTotals, TimingReport, WARMUP_SAMPLES};

pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSONL: &str = "metrics.jsonl";
pub const SUMMARY_JSON: &str = "summary.json";
pub const TIMING_JSON: &str = "timing.json";
pub const CHECKPOINT: &str = "model.ckpt";
pub const CONFIG_TOML: &str = "config.toml";
pub const BENCH_JSON: &str = "bench.json";
pub const REDUCE_JSON: &str = "reduce.json";

const CSV_HEADER: &str =
    "t,horizon,log_pred_prob,baseline_log_pred_prob,entropy_nats,entropy_bits,learn_time,predict_time";

/// Observations as read or generated, one sample per column.
pub fn load_source(cfg: &RunConfig) -> Result<DMatrix<f64>> {
    match &cfg.input {
        Some(path) => matrix_io::load_samples(path),
        None => Ok(generate(&cfg.generate.trajectory(cfg.seeds().generate))?.noisy),
    }
}

/// Lifts and reduces `source` to the model dimension.
pub fn reduce_source(cfg: &RunConfig, source: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let reduction = cfg.validate_dims(source.nrows())?;
    let lifted = match cfg.lift_dim {
        Some(d) if d > source.nrows() || cfg.lift_noise > 0.0 => {
            lift(source, d, cfg.seeds().lift, cfg.lift_noise)?.data
        }
        _ => source.clone(),
    };
    if reduction.input_dim == reduction.latent_dim {
        return Ok(lifted);
    }
    Ok(StreamingReducer::new(reduction)?.reduce_all(&lifted)?)
}

/// The model's input stream for `cfg`.
pub fn prepare(cfg: &RunConfig) -> Result<DMatrix<f64>> {
    reduce_source(cfg, &load_source(cfg)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Samples in the reduced stream.
    pub stream_length: usize,
    /// Samples learned, counting those before a resume.
    pub samples_learned: usize,
    pub nodes: usize,
    pub dim: usize,
    pub records: usize,
    pub horizons: Vec<HorizonSummary>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub summary: RunSummary,
    pub timing: TimingReport,
    pub checkpoint: Checkpoint,
}

/// Learns and scores `data` (`k x L`) as configured, without touching files
/// other than the periodic checkpoints and the resume source.
pub fn run_stream(cfg: &RunConfig, data: &DMatrix<f64>, prior_records: Vec<MetricsRecord>) -> Result<RunOutput> {
    let hyper = cfg.hyper();
    if data.nrows() != hyper.dim {
        return Err(HarnessError::config(format!(
            "stream has dimension {} but the model expects {}",
            data.nrows(),
            hyper.dim
        )));
    }
    let (mut model, mut baseline, start) = match &cfg.resume {
        Some(path) => {
            let ckpt = checkpoint::load(path)?;
            if *ckpt.model.hyper() != hyper {
                return Err(HarnessError::config("checkpoint hyperparameters differ from the configuration"));
            }
            (ckpt.model, ckpt.baseline, ckpt.position)
        }
        None => {
            let (m, b) = init_stream(data, hyper.clone(), &cfg.horizons)?;
            (m, b, hyper.init_buffer)
        }
    };
    let end = cfg.stop_at.unwrap_or(data.ncols()).clamp(start, data.ncols());
    let mut records: Vec<MetricsRecord> = prior_records.into_iter().filter(|r| (r.t as usize) < start).collect();
    let first_timed = hyper.init_buffer + WARMUP_SAMPLES;

    let mut stops = vec![end];
    if first_timed > start && first_timed < end {
        stops.push(first_timed);
    }
    if let Some(every) = cfg.checkpoint_every {
        stops.extend((start + 1..end).filter(|t| (t - hyper.init_buffer) % every == 0));
    }
    stops.sort_unstable();
    stops.dedup();

    let mut probe = PhaseTimer::new(false);
    let mut clock = MonotonicClock::new();
    let mut timed_from = None;
    let mut pos = start;
    for stop in stops {
        probe.enabled = pos >= first_timed;
        if probe.enabled && timed_from.is_none() {
            timed_from = Some(Instant::now());
        }
        if cfg.threaded {
            eval_threaded(&mut model, &mut baseline, data, pos..stop, &cfg.horizons, 1, &mut probe, &mut records)?;
        } else {
            eval_range(&mut model, &mut baseline, data, pos..stop, &cfg.horizons, &mut clock, &mut probe, &mut records)?;
        }
        pos = stop;
        if cfg.checkpoint_every.is_some() && pos < end {
            let ckpt = Checkpoint { model: model.clone(), baseline: baseline.clone(), position: pos };
            fs::create_dir_all(&cfg.out).map_err(|e| HarnessError::io(&cfg.out, e))?;
            checkpoint::save(&cfg.out.join(CHECKPOINT), &ckpt)?;
        }
    }
    let total = timed_from.map(|t| t.elapsed().as_secs_f64()).unwrap_or(0.0);
    model.check_invariants()?;

    let timing = TimingReport::from_records(&records, first_timed as u64, WARMUP_SAMPLES, probe.totals(), total);
    let summary = RunSummary {
        stream_length: data.ncols(),
        samples_learned: end,
        nodes: hyper.nodes,
        dim: hyper.dim,
        records: records.len(),
        horizons: summarize(&records, &cfg.horizons),
    };
    Ok(RunOutput { records, summary, timing, checkpoint: Checkpoint { model, baseline, position: end } })
}

pub fn metrics_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.horizon,
            r.log_pred_prob,
            r.baseline_log_pred_prob,
            r.entropy_nats,
            r.entropy_bits,
            r.learn_time,
            r.predict_time
        )
        .unwrap();
    }
    out
}

pub fn metrics_from_csv(text: &str, path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(HarnessError::format(path, "unexpected metrics header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || HarnessError::format(path, format!("line {}: malformed metrics row", i + 2));
            if f.len() != 8 {
                return Err(bad());
            }
            let num = |j: usize| f[j].parse::<f64>().map_err(|_| bad());
            Ok(MetricsRecord {
                t: f[0].parse().map_err(|_| bad())?,
                horizon: f[1].parse().map_err(|_| bad())?,
                log_pred_prob: num(2)?,
                baseline_log_pred_prob: num(3)?,
                entropy_nats: num(4)?,
                entropy_bits: num(5)?,
                learn_time: num(6)?,
                predict_time: num(7)?,
            })
        })
        .collect()
}

pub fn metrics_to_jsonl(records: &[MetricsRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("metrics serialize"));
        out.push('\n');
    }
    out
}

pub fn metrics_from_jsonl(text: &str, path: &Path) -> Result<Vec<MetricsRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| HarnessError::format(path, format!("line {}: {e}", i + 1))))
        .collect()
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// `run`: learns the configured stream and writes the metrics, summary,
/// timing report, final checkpoint and effective configuration to `out`.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    let prior = match &cfg.resume {
        Some(ckpt) => {
            let path = ckpt.parent().unwrap_or(Path::new(".")).join(METRICS_JSONL);
            match fs::read_to_string(&path) {
                Ok(text) => metrics_from_jsonl(&text, &path)?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
                Err(e) => return Err(HarnessError::io(&path, e)),
            }
        }
        None => Vec::new(),
    };
    let output = run_stream(cfg, &data, prior)?;
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    write(out.join(METRICS_CSV), metrics_to_csv(&output.records))?;
    write(out.join(METRICS_JSONL), metrics_to_jsonl(&output.records))?;
    write(out.join(SUMMARY_JSON), to_json(&output.summary))?;
    write(out.join(TIMING_JSON), to_json(&output.timing))?;
    write(out.join(CONFIG_TOML), cfg.to_toml())?;
    checkpoint::save(&out.join(CHECKPOINT), &output.checkpoint)?;
    Ok(output)
}

/// Timing of one benchmark case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub nodes: usize,
    pub dim: usize,
    pub batch_period: usize,
    /// Learning time per sample.
    pub learn: Percentiles,
    pub amortized_learn: f64,
    pub phases: PhaseTotals,
    /// One-step log predictive probability from a snapshot, per call.
    pub prediction: Percentiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub warmup_samples: usize,
    pub samples: usize,
    /// Node-budget sweep at batch period 1.
    pub scaling: Vec<BenchCase>,
    /// Batch-period sweep at the largest node budget.
    pub batching: Vec<BenchCase>,
}

/// A lifted noisy Lorenz stream of dimension `dim` (or Van der Pol when
/// `dim < 3`) used by the benchmarks.
pub fn bench_stream(dim: usize, steps: usize, seed: u64) -> Result<DMatrix<f64>> {
    let system = if dim >= 3 { System::lorenz() } else { System::van_der_pol() };
    let traj = generate(&TrajectoryConfig::new(system, steps, 0.05, seed))?.noisy;
    if dim == traj.nrows() {
        return Ok(traj);
    }
    Ok(lift(&traj, dim, seed.wrapping_add(1), 0.1)?.data)
}

/// Times `samples` learning steps after the warm-up, then
/// `prediction_calls` predictions from the final snapshot.
pub fn bench_case(
    hyper: Hyperparameters,
    data: &DMatrix<f64>,
    samples: usize,
    prediction_calls: usize,
) -> Result<BenchCase> {
    let m = hyper.init_buffer;
    let needed = m + WARMUP_SAMPLES + samples + 1;
    if data.ncols() < needed {
        return Err(streamtile_core::Error::InsufficientData { needed, available: data.ncols() }.into());
    }
    let mut model = Model::init(&data.columns(0, m).into_owned(), hyper.clone())?;
    let mut probe = PhaseTimer::new(false);
    let period = hyper.batch_period;
    let mut learn = Vec::with_capacity(samples);
    for t in m..m + WARMUP_SAMPLES + samples {
        probe.enabled = t >= m + WARMUP_SAMPLES;
        let start = Instant::now();
        model.observe_with(data.column(t).as_slice(), period, &mut probe)?;
        if probe.enabled {
            learn.push(start.elapsed().as_secs_f64());
        }
    }
    let snapshot = model.snapshot();
    let mut predict = Vec::with_capacity(prediction_calls);
    let next = m + WARMUP_SAMPLES + samples;
    for i in 0..prediction_calls {
        let x = data.column(next + i % (data.ncols() - next));
        let start = Instant::now();
        let lp = log_pred_prob(&snapshot, x.as_slice(), 1)?;
        predict.push(start.elapsed().as_secs_f64());
        std::hint::black_box(lp);
    }
    let learn = Percentiles::of(&learn);
    Ok(BenchCase {
        nodes: hyper.nodes,
        dim: hyper.dim,
        batch_period: period,
        amortized_learn: learn.mean,
        learn,
        phases: probe.totals(),
        prediction: Percentiles::of(&predict),
    })
}

/// `bench`: node-budget scaling and batch-period comparison on one stream.
pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let b = &cfg.bench;
    let mut hyper = cfg.hyper();
    hyper.dim = b.dim;
    hyper.teleport_threshold = Hyperparameters::new(1, b.dim).teleport_threshold;
    let steps = hyper.init_buffer + WARMUP_SAMPLES + b.samples + 1 + b.prediction_calls.min(1000);
    let data = bench_stream(b.dim, steps, cfg.seeds().generate)?;
    let case = |nodes: usize, period: usize| {
        let mut h = hyper.clone();
        h.nodes = nodes;
        h.batch_period = period;
        bench_case(h, &data, b.samples, b.prediction_calls)
    };
    let mut nodes = b.node_counts.clone();
    nodes.sort_unstable();
    let scaling = nodes.iter().map(|&n| case(n, 1)).collect::<Result<Vec<_>>>()?;
    let largest = *nodes.last().unwrap();
    let batching = b
        .batch_periods
        .iter()
        .map(|&p| match scaling.iter().find(|c| p == 1 && c.nodes == largest) {
            Some(c) => Ok(c.clone()),
            None => case(largest, p),
        })
        .collect::<Result<Vec<_>>>()?;
    let report = BenchReport { warmup_samples: WARMUP_SAMPLES, samples: b.samples, scaling, batching };
    fs::create_dir_all(&cfg.out).map_err(|e| HarnessError::io(&cfg.out, e))?;
    write(cfg.out.join(BENCH_JSON), to_json(&report))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReduceReport {
    pub input_dim: usize,
    pub projected_dim: usize,
    pub latent_dim: usize,
    pub samples_in: usize,
    pub samples_out: usize,
    pub output: PathBuf,
}

/// `reduce`: runs only the reduction stages and writes the reduced stream.
pub fn cmd_reduce(cfg: &RunConfig) -> Result<ReduceReport> {
    cfg.validate()?;
    let source = load_source(cfg)?;
    let reduction = cfg.validate_dims(source.nrows())?;
    let reduced = reduce_source(cfg, &source)?;
    fs::create_dir_all(&cfg.out).map_err(|e| HarnessError::io(&cfg.out, e))?;
    let output = cfg.out.join(format!("reduced.{}", cfg.data_format.extension()));
    matrix_io::save_samples(&output, &reduced)?;
    let report = ReduceReport {
        input_dim: reduction.input_dim,
        projected_dim: reduction.projected_dim,
        latent_dim: reduction.latent_dim,
        samples_in: source.ncols(),
        samples_out: reduced.ncols(),
        output,
    };
    write(cfg.out.join(REDUCE_JSON), to_json(&report))?;
    Ok(report)
}

/// `simulate`: writes the clean and noisy trajectories, plus the lifted
/// stream when `lift_dim` is set. Returns the files written.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let traj = generate(&cfg.generate.trajectory(cfg.seeds().generate))?;
    fs::create_dir_all(&cfg.out).map_err(|e| HarnessError::io(&cfg.out, e))?;
    let ext = cfg.data_format.extension();
    let mut written = vec![cfg.out.join(format!("clean.{ext}")), cfg.out.join(format!("noisy.{ext}"))];
    matrix_io::save_samples(&written[0], &traj.clean)?;
    matrix_io::save_samples(&written[1], &traj.noisy)?;
    if let Some(d) = cfg.lift_dim {
        if d < traj.noisy.nrows() {
            return Err(HarnessError::config(format!("lift_dim {d} is below the trajectory dimension")));
        }
        let path = cfg.out.join(format!("lifted.{ext}"));
        matrix_io::save_samples(&path, &lift(&traj.noisy, d, cfg.seeds().lift, cfg.lift_noise)?.data)?;
        written.push(path);
    }
    Ok(written)
}
