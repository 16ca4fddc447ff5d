//! Versioned binary checkpoints.
//!
//! Layout: magic `DAGPOCKP`, format version (`u32` LE), header length (`u64`
//! LE), a JSON header (space, schedule, network dims, freeze flags, counters),
//! then every tensor as little-endian `f64`: all layer weights and biases,
//! followed by the AdamW first and second moments in the same order.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::denoiser::{DenoiserDims, DenoiserParams, Gradients};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::optim::AdamState;
use crate::seed::{stream_rng, Stream};
use crate::space::SpaceSpec;

const MAGIC: &[u8; 8] = b"DAGPOCKP";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to resume or sample from a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub space: SpaceSpec,
    pub schedule: NoiseSchedule,
    pub params: DenoiserParams,
    pub optimizer: AdamState,
    /// Completed training epochs in the current phase.
    pub epoch: u64,
    /// Run seed; with `epoch` it fixes every derived rng stream.
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    space: SpaceSpec,
    schedule_steps: usize,
    schedule_offset: f64,
    dims: DenoiserDims,
    frozen: Vec<bool>,
    epoch: u64,
    seed: u64,
    optimizer_step: u64,
}

impl Checkpoint {
    /// Freshly initialized model for `space`.
    pub fn fresh(
        space: SpaceSpec,
        schedule: NoiseSchedule,
        hidden: usize,
        layers: usize,
        pe_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let dims = DenoiserDims {
            graph: space.dims(),
            steps: schedule.steps(),
            pe_dim,
            hidden,
            layers,
        };
        let params = DenoiserParams::init(dims, &mut stream_rng(seed, Stream::Init, &[]))?;
        let optimizer = AdamState::new(&params);
        Ok(Self {
            space,
            schedule,
            params,
            optimizer,
            epoch: 0,
            seed,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            space: self.space.clone(),
            schedule_steps: self.schedule.steps(),
            schedule_offset: self.schedule.offset(),
            dims: *self.params.dims(),
            frozen: self.params.layers.iter().map(|l| l.frozen).collect(),
            epoch: self.epoch,
            seed: self.seed,
            optimizer_step: self.optimizer.step,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let mut push = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        for l in &self.params.layers {
            l.weight.iter().copied().for_each(&mut push);
            l.bias.iter().copied().for_each(&mut push);
        }
        for g in [&self.optimizer.m, &self.optimizer.v] {
            g.values().for_each(&mut push);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).ok_or_else(|| bad("truncated magic"))? != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(r.array().ok_or_else(|| bad("truncated version"))?);
        if version != FORMAT_VERSION {
            return Err(bad(&format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let header_len = u64::from_le_bytes(r.array().ok_or_else(|| bad("truncated header"))?);
        let header_bytes = r
            .take(header_len as usize)
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(header_bytes)
            .map_err(|e| bad(&format!("bad header: {e}")))?;

        let mut params = DenoiserParams::zeros(header.dims)?;
        if header.frozen.len() != params.layers.len() {
            return Err(bad("freeze flags do not match layer count"));
        }
        for (l, &frozen) in params.layers.iter_mut().zip(&header.frozen) {
            l.frozen = frozen;
            read_matrix(&mut r, &mut l.weight)?;
            read_vector(&mut r, &mut l.bias)?;
        }
        let mut optimizer = AdamState::new(&params);
        optimizer.step = header.optimizer_step;
        for g in [&mut optimizer.m, &mut optimizer.v] {
            read_grads(&mut r, g)?;
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes after tensors"));
        }
        Ok(Self {
            space: header.space,
            schedule: NoiseSchedule::cosine(header.schedule_steps, header.schedule_offset),
            params,
            optimizer,
            epoch: header.epoch,
            seed: header.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn array<const N: usize>(&mut self) -> Option<[u8; N]> {
        self.take(N).map(|s| s.try_into().expect("length checked"))
    }

    fn f64(&mut self) -> Result<f64> {
        self.array()
            .map(f64::from_le_bytes)
            .ok_or_else(|| Error::Checkpoint("truncated tensor data".into()))
    }
}

fn read_matrix(r: &mut Reader<'_>, m: &mut Array2<f64>) -> Result<()> {
    for v in m.iter_mut() {
        *v = r.f64()?;
    }
    Ok(())
}

fn read_vector(r: &mut Reader<'_>, m: &mut Array1<f64>) -> Result<()> {
    for v in m.iter_mut() {
        *v = r.f64()?;
    }
    Ok(())
}

fn read_grads(r: &mut Reader<'_>, g: &mut Gradients) -> Result<()> {
    for l in &mut g.layers {
        read_matrix(r, &mut l.weight)?;
        read_vector(r, &mut l.bias)?;
    }
    Ok(())
}
