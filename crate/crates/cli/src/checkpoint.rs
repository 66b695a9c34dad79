//! Binary checkpoints of a streaming run: model, baseline and stream position.
//!
//! Layout: magic `STCKPT01`, `u64` header length, a JSON header, then every
//! array listed in the header as `f64` little-endian values in row-major
//! order. Stacked per-node matrices are written one after another.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use streamtile_core::model::{Hyperparameters, Model, ModelParts, RngState};
use streamtile_core::predict::RandomWalkBaseline;

use crate::error::{HarnessError, Result};

pub const MAGIC: [u8; 8] = *b"STCKPT01";

/// Everything needed to continue a run at sample `position`.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub baseline: RandomWalkBaseline,
    /// Index of the next sample to learn.
    pub position: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    position: u64,
    hyper: Hyperparameters,
    t: u64,
    adam_steps: u64,
    since_update: u64,
    dead_nodes: Vec<usize>,
    rng_seed: [u8; 32],
    rng_stream: u64,
    /// Decimal string; JSON numbers lose precision past 2^53.
    rng_word_pos: String,
    baseline_variance: f64,
    baseline_rate: f64,
    baseline_last: Option<Vec<f64>>,
    arrays: Vec<ArrayShape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayShape {
    name: String,
    /// Matrices stacked under this name.
    count: usize,
    rows: usize,
    cols: usize,
}

struct Writer {
    shapes: Vec<ArrayShape>,
    payload: Vec<u8>,
}

impl Writer {
    fn stack(&mut self, name: &str, ms: &[&DMatrix<f64>]) {
        let (rows, cols) = ms.first().map(|m| m.shape()).unwrap_or((0, 0));
        self.shapes.push(ArrayShape { name: name.into(), count: ms.len(), rows, cols });
        for m in ms {
            for r in 0..rows {
                for c in 0..cols {
                    self.payload.extend_from_slice(&m[(r, c)].to_le_bytes());
                }
            }
        }
    }

    fn matrix(&mut self, name: &str, m: &DMatrix<f64>) {
        self.stack(name, &[m]);
    }

    fn vector(&mut self, name: &str, v: &[f64]) {
        self.shapes.push(ArrayShape { name: name.into(), count: 1, rows: v.len(), cols: 1 });
        for x in v {
            self.payload.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    shapes: std::vec::IntoIter<ArrayShape>,
    payload: &'a [u8],
    path: &'a Path,
}

impl Reader<'_> {
    fn stack(&mut self, name: &str) -> Result<Vec<DMatrix<f64>>> {
        let shape = self
            .shapes
            .next()
            .ok_or_else(|| HarnessError::format(self.path, format!("checkpoint is missing array {name}")))?;
        if shape.name != name {
            return Err(HarnessError::format(
                self.path,
                format!("expected array {name}, found {}", shape.name),
            ));
        }
        let each = shape.rows.checked_mul(shape.cols);
        let bytes = each
            .and_then(|e| e.checked_mul(shape.count))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| HarnessError::format(self.path, format!("array {name} shape overflows")))?;
        if bytes > self.payload.len() {
            return Err(HarnessError::format(self.path, format!("array {name} is truncated")));
        }
        let (mine, rest) = self.payload.split_at(bytes);
        self.payload = rest;
        let per = shape.rows * shape.cols * 8;
        Ok((0..shape.count)
            .map(|i| {
                let block = &mine[i * per..(i + 1) * per];
                DMatrix::from_fn(shape.rows, shape.cols, |r, c| {
                    let at = 8 * (r * shape.cols + c);
                    f64::from_le_bytes(block[at..at + 8].try_into().unwrap())
                })
            })
            .collect())
    }

    fn matrix(&mut self, name: &str) -> Result<DMatrix<f64>> {
        let mut ms = self.stack(name)?;
        if ms.len() != 1 {
            return Err(HarnessError::format(self.path, format!("array {name} must hold one matrix")));
        }
        Ok(ms.pop().unwrap())
    }

    fn vector(&mut self, name: &str) -> Result<DVector<f64>> {
        let m = self.matrix(name)?;
        if m.ncols() != 1 {
            return Err(HarnessError::format(self.path, format!("array {name} must be a column")));
        }
        Ok(DVector::from_column_slice(m.as_slice()))
    }
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let p = ckpt.model.to_parts();
    let mut w = Writer { shapes: Vec::new(), payload: Vec::new() };
    w.matrix("means", &p.means);
    w.stack("chol", &p.chol.iter().collect::<Vec<_>>());
    w.matrix("logits", &p.logits);
    w.matrix("mu0", &p.mu0);
    w.matrix("psi", &p.psi);
    w.vector("lambda", p.lambda.as_slice());
    w.vector("nu", p.nu.as_slice());
    w.vector("mu_bar", p.mu_bar.as_slice());
    w.matrix("sigma_bar", &p.sigma_bar);
    w.vector("eta", p.eta.as_slice());
    w.matrix("transitions", &p.transitions);
    w.vector("counts", p.counts.as_slice());
    w.matrix("s1", &p.s1);
    w.stack("s2", &p.s2.iter().collect::<Vec<_>>());
    w.vector("alpha", p.alpha.as_slice());
    w.vector("adam_m", &p.adam_m);
    w.vector("adam_v", &p.adam_v);
    let header = Header {
        position: ckpt.position as u64,
        hyper: p.hyper,
        t: p.t,
        adam_steps: p.adam_steps,
        since_update: p.since_update,
        dead_nodes: p.dead_nodes,
        rng_seed: p.rng.seed,
        rng_stream: p.rng.stream,
        rng_word_pos: p.rng.word_pos.to_string(),
        baseline_variance: ckpt.baseline.sigma2(),
        baseline_rate: ckpt.baseline.rate(),
        baseline_last: ckpt.baseline.last().map(|v| v.as_slice().to_vec()),
        arrays: w.shapes,
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + w.payload.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&w.payload);
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let bad = |msg: String| HarnessError::format(path, msg);
    if bytes.len() < 16 || bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let len = usize::try_from(len)
        .ok()
        .filter(|&l| l <= bytes.len() - 16)
        .ok_or_else(|| bad("checkpoint header is truncated".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[16..16 + len]).map_err(|e| bad(format!("checkpoint header: {e}")))?;
    let mut r = Reader { shapes: header.arrays.into_iter(), payload: &bytes[16 + len..], path };
    let means = r.matrix("means")?;
    let chol = r.stack("chol")?;
    let logits = r.matrix("logits")?;
    let mu0 = r.matrix("mu0")?;
    let psi = r.matrix("psi")?;
    let lambda = r.vector("lambda")?;
    let nu = r.vector("nu")?;
    let mu_bar = r.vector("mu_bar")?;
    let sigma_bar = r.matrix("sigma_bar")?;
    let eta = r.vector("eta")?;
    let transitions = r.matrix("transitions")?;
    let counts = r.vector("counts")?;
    let s1 = r.matrix("s1")?;
    let s2 = r.stack("s2")?;
    let alpha = r.vector("alpha")?;
    let adam_m = r.vector("adam_m")?.as_slice().to_vec();
    let adam_v = r.vector("adam_v")?.as_slice().to_vec();
    if r.shapes.next().is_some() || !r.payload.is_empty() {
        return Err(bad("checkpoint has trailing data".into()));
    }
    let word_pos = header
        .rng_word_pos
        .parse::<u128>()
        .map_err(|_| bad("generator position is not an integer".into()))?;
    let parts = ModelParts {
        hyper: header.hyper,
        means,
        chol,
        logits,
        mu0,
        psi,
        lambda,
        nu,
        mu_bar,
        sigma_bar,
        eta,
        transitions,
        counts,
        s1,
        s2,
        alpha,
        adam_m,
        adam_v,
        adam_steps: header.adam_steps,
        t: header.t,
        since_update: header.since_update,
        dead_nodes: header.dead_nodes,
        rng: RngState { seed: header.rng_seed, stream: header.rng_stream, word_pos },
    };
    let model = Model::from_parts(parts)?;
    let baseline = RandomWalkBaseline::from_state(
        header.baseline_variance,
        header.baseline_rate,
        header.baseline_last.map(DVector::from_vec),
    )?;
    Ok(Checkpoint { model, baseline, position: header.position as usize })
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    // Write then rename so an interrupted save never leaves a torn file.
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, encode(ckpt)).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&fs::read(path).map_err(|e| HarnessError::io(path, e))?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use streamtile_core::predict::BASELINE_RATE;
    use streamtile_core::simulate::{generate, TrajectoryConfig};

    fn trained() -> Checkpoint {
        let data = generate(&TrajectoryConfig::van_der_pol(200, 0.05, 3)).unwrap().noisy;
        let mut hyper = Hyperparameters::new(12, 2);
        hyper.seed = 9;
        let buffer = data.columns(0, hyper.init_buffer).into_owned();
        let mut model = Model::init(&buffer, hyper).unwrap();
        let mut baseline = RandomWalkBaseline::from_buffer(&buffer, BASELINE_RATE).unwrap();
        for t in 30..120 {
            model.observe(data.column(t).as_slice()).unwrap();
            baseline.observe(data.column(t).as_slice());
        }
        Checkpoint { model, baseline, position: 120 }
    }

    #[test]
    fn round_trip_preserves_every_bit() {
        let ckpt = trained();
        let back = decode(&encode(&ckpt), Path::new("m.ckpt")).unwrap();
        assert_eq!(back.model.to_parts(), ckpt.model.to_parts());
        assert_eq!(back.baseline.sigma2().to_bits(), ckpt.baseline.sigma2().to_bits());
        assert_eq!(back.baseline.last(), ckpt.baseline.last());
        assert_eq!(back.position, 120);
        assert_eq!(encode(&back), encode(&ckpt));
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let bytes = encode(&trained());
        let p = Path::new("m.ckpt");
        assert!(decode(&bytes[..bytes.len() - 8], p).is_err());
        assert!(decode(&bytes[..20], p).is_err());
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 8]);
        assert!(decode(&extra, p).is_err());
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(decode(&magic, p).is_err());
    }
}
