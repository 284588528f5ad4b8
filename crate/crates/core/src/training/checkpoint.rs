use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use candle_core::{Device, Tensor};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::state::TrainState;
use crate::config::RunConfig;
use crate::encoders::Vocabulary;
use crate::error::{Error, Result};
use crate::model::XDecoderModel;

pub const MAGIC: &[u8; 4] = b"XDEC";
pub const VERSION: u32 = 1;

const FIRST_MOMENT: &str = "optimizer.m/";
const SECOND_MOMENT: &str = "optimizer.v/";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub step: usize,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    pub vocabulary: String,
    /// Hex seed and word position of the step RNG.
    pub rng_seed: String,
    pub rng_word_pos: String,
    pub optimizer_steps: BTreeMap<String, u64>,
}

fn entry(name: String, t: &Tensor) -> Result<CheckpointEntry> {
    Ok(CheckpointEntry {
        name,
        dims: t.dims().to_vec(),
        values: t.to_dtype(candle_core::DType::F32)?.flatten_all()?.to_vec1()?,
    })
}

pub fn write_checkpoint(path: &Path, entries: &[CheckpointEntry], meta: &CheckpointMeta) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        let name = e.name.as_bytes();
        let name_len = u16::try_from(name.len()).map_err(|_| Error::input(format!("name too long: {}", e.name)))?;
        buf.extend_from_slice(&name_len.to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(e.dims.len() as u8);
        for &d in &e.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &e.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let json = serde_json::to_vec(meta)?;
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format("truncated checkpoint"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<(Vec<CheckpointEntry>, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::format("bad checkpoint magic"))? != MAGIC {
        return Err(Error::format("bad checkpoint magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(format!("checkpoint version {version}, expected {VERSION}")));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::format("checkpoint entry name is not UTF-8"))?;
        let rank = r.take(1)?[0] as usize;
        let dims = (0..rank).map(|_| Ok(r.u32()? as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let values = r
            .take(n.checked_mul(4).ok_or_else(|| Error::format("entry too large"))?)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push(CheckpointEntry { name, dims, values });
    }
    let meta_len = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::format(format!("checkpoint metadata: {e}")))?;
    if r.pos != bytes.len() {
        return Err(Error::format("trailing bytes after checkpoint metadata"));
    }
    Ok((entries, meta))
}

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let mut entries = Vec::new();
    for (name, var) in state.model.store().vars() {
        entries.push(entry(name.clone(), var.as_tensor())?);
    }
    let mut optimizer_steps = BTreeMap::new();
    for (name, steps, m, v) in state.optimizer.state() {
        entries.push(entry(format!("{FIRST_MOMENT}{name}"), &m)?);
        entries.push(entry(format!("{SECOND_MOMENT}{name}"), &v)?);
        optimizer_steps.insert(name, steps);
    }
    let meta = CheckpointMeta {
        step: state.step,
        seed: state.config.train.seed,
        config_hash: state.config.hash(),
        config: state.config.clone(),
        vocabulary: state.model.vocab().to_json(),
        rng_seed: hex::encode(state.rng.get_seed()),
        rng_word_pos: state.rng.get_word_pos().to_string(),
        optimizer_steps,
    };
    write_checkpoint(path, &entries, &meta)
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let (entries, meta) = read_checkpoint(path)?;
    if meta.config.hash() != meta.config_hash {
        return Err(Error::format("checkpoint config hash mismatch"));
    }
    let vocab = Vocabulary::from_json(&meta.vocabulary)?;
    let model = XDecoderModel::new(
        &meta.config.model,
        meta.config.attention,
        vocab,
        candle_core::DType::F32,
        meta.config.train.seed,
    )?;
    let mut state = TrainState::with_model(&meta.config, model);
    let mut by_name: BTreeMap<&str, &CheckpointEntry> = entries.iter().map(|e| (e.name.as_str(), e)).collect();
    let tensor = |e: &CheckpointEntry| Tensor::from_vec(e.values.clone(), e.dims.clone(), &Device::Cpu);
    let names: Vec<String> = state.model.store().vars().keys().cloned().collect();
    for name in &names {
        let e = by_name
            .remove(name.as_str())
            .ok_or_else(|| Error::format(format!("checkpoint lacks parameter {name}")))?;
        state.model.store().assign(name, &tensor(e)?)?;
    }
    for (name, &steps) in &meta.optimizer_steps {
        let m = by_name.remove(format!("{FIRST_MOMENT}{name}").as_str());
        let v = by_name.remove(format!("{SECOND_MOMENT}{name}").as_str());
        let (Some(m), Some(v)) = (m, v) else {
            return Err(Error::format(format!("checkpoint lacks optimizer moments of {name}")));
        };
        state.optimizer.restore(name, steps, tensor(m)?, tensor(v)?)?;
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(Error::format(format!("unexpected checkpoint entry {extra}")));
    }
    let seed: [u8; 32] = hex::decode(&meta.rng_seed)
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Error::format("bad rng seed in checkpoint"))?;
    let word_pos: u128 = meta
        .rng_word_pos
        .parse()
        .map_err(|_| Error::format("bad rng position in checkpoint"))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_word_pos(word_pos);
    state.rng = rng;
    state.step = meta.step;
    Ok(state)
}
