//! Checkpoint directories: `meta.json` plus a little-endian tensor archive.
//!
//! Archive layout (`tensors.bin`):
//!
//! ```text
//! magic     4 bytes  "E2CK"
//! version   u32
//! count     u32
//! count × { name_len u32, name utf-8, ndim u32, dims ndim × u64,
//!           values prod(dims) × f64 }
//! ```
//!
//! The content hash is the SHA-256 of the archive bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::Adam;
use super::{TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::model::{DiscriminatorNetwork, GeneratorNetwork, Module, NetworkSpec};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const META_FILE: &str = "meta.json";
pub const TENSOR_FILE: &str = "tensors.bin";
const MAGIC: &[u8; 4] = b"E2CK";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed_hex: String,
    pub stream: u64,
    /// u128 word position, decimal.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed_hex: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Option<ChaCha8Rng> {
        let seed: [u8; 32] = hex::decode(&self.seed_hex).ok()?.try_into().ok()?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().ok()?);
        Some(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub net_spec: NetworkSpec,
    pub train_config: TrainConfig,
    pub epoch: usize,
    pub step: u64,
    pub adam_g_step: u64,
    pub adam_d_step: u64,
    pub rng: RngState,
    pub content_hash: String,
    pub tensor_file: String,
}

fn collect_named(prefix: &str, module: &dyn Module, out: &mut Vec<(String, ArrayD<f64>)>) {
    module.visit(&mut |name, p| out.push((format!("{prefix}/{name}"), p.value.clone())));
}

fn collect_adam(prefix: &str, module: &dyn Module, adam: &Adam, out: &mut Vec<(String, ArrayD<f64>)>) {
    let mut idx = 0;
    module.visit(&mut |name, p| {
        if p.trainable {
            out.push((format!("{prefix}/m/{name}"), adam.m[idx].clone()));
            out.push((format!("{prefix}/v/{name}"), adam.v[idx].clone()));
            idx += 1;
        }
    });
}

pub fn state_tensors(state: &TrainState) -> Vec<(String, ArrayD<f64>)> {
    let mut out = Vec::new();
    collect_named("generator", &state.generator, &mut out);
    collect_named("discriminator", &state.discriminator, &mut out);
    collect_adam("adam_g", &state.generator, &state.adam_g, &mut out);
    collect_adam("adam_d", &state.discriminator, &state.adam_d, &mut out);
    out
}

pub fn encode_tensors(tensors: &[(String, ArrayD<f64>)]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(buf: &[u8]) -> std::result::Result<Vec<(String, ArrayD<f64>)>, String> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(format!("archive version {version}"));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| "tensor name is not utf-8".to_string())?
            .to_string();
        let ndim = r.u32()? as usize;
        if ndim > 8 {
            return Err(format!("tensor {name} has {ndim} dims"));
        }
        let dims = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let numel = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or("dimension overflow")?;
        let bytes = r.take(numel.checked_mul(8).ok_or("size overflow")?)?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, ArrayD::from_shape_vec(IxDyn(&dims), values).unwrap()));
    }
    if r.pos != buf.len() {
        return Err(format!("{} trailing bytes", buf.len() - r.pos));
    }
    Ok(out)
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `state` into directory `dir` (created if needed) and returns the
/// content hash.
pub fn save_checkpoint(state: &TrainState, dir: &Path) -> Result<String> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bytes = encode_tensors(&state_tensors(state));
    let hash = content_hash(&bytes);
    let meta = CheckpointMeta {
        format_version: CHECKPOINT_FORMAT_VERSION,
        net_spec: state.generator.spec.clone(),
        train_config: state.config.clone(),
        epoch: state.epoch,
        step: state.step,
        adam_g_step: state.adam_g.step,
        adam_d_step: state.adam_d.step,
        rng: RngState::capture(&state.rng),
        content_hash: hash.clone(),
        tensor_file: TENSOR_FILE.into(),
    };
    let tensor_path = dir.join(TENSOR_FILE);
    fs::write(&tensor_path, &bytes).map_err(|e| Error::io(&tensor_path, e))?;
    let meta_path = dir.join(META_FILE);
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    Ok(hash)
}

pub fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    let corrupt = |reason: String| Error::CorruptCheckpoint {
        path: dir.to_path_buf(),
        reason,
    };
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| corrupt(format!("{META_FILE}: {e}")))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| corrupt(format!("{META_FILE}: {e}")))?;
    let version = raw.get("format_version").and_then(|v| v.as_u64());
    match version {
        Some(v) if v as u32 == CHECKPOINT_FORMAT_VERSION => {}
        Some(v) => {
            return Err(Error::CheckpointVersion {
                found: v as u32,
                expected: CHECKPOINT_FORMAT_VERSION,
            })
        }
        None => return Err(corrupt("missing format_version".into())),
    }
    serde_json::from_value(raw).map_err(|e| corrupt(format!("{META_FILE}: {e}")))
}

fn assign(
    prefix: &str,
    module: &mut dyn Module,
    tensors: &mut BTreeMap<String, ArrayD<f64>>,
) -> std::result::Result<(), String> {
    let mut err = None;
    module.visit_mut(&mut |name, p| {
        let key = format!("{prefix}/{name}");
        match tensors.remove(&key) {
            Some(t) if t.shape() == p.value.shape() => p.value = t,
            Some(t) => {
                err.get_or_insert(format!("{key}: shape {:?} != {:?}", t.shape(), p.value.shape()));
            }
            None => {
                err.get_or_insert(format!("{key} missing"));
            }
        }
    });
    err.map_or(Ok(()), Err)
}

fn assign_adam(
    prefix: &str,
    module: &dyn Module,
    adam: &mut Adam,
    tensors: &mut BTreeMap<String, ArrayD<f64>>,
) -> std::result::Result<(), String> {
    let mut err = None;
    let mut idx = 0;
    module.visit(&mut |name, p| {
        if !p.trainable {
            return;
        }
        for (slot, which) in [(&mut adam.m, "m"), (&mut adam.v, "v")] {
            let key = format!("{prefix}/{which}/{name}");
            match tensors.remove(&key) {
                Some(t) if t.shape() == p.value.shape() => slot[idx] = t,
                _ => {
                    err.get_or_insert(format!("{key} missing or misshapen"));
                }
            }
        }
        idx += 1;
    });
    err.map_or(Ok(()), Err)
}

/// Loads a checkpoint directory, verifying its content hash.
pub fn load_checkpoint(dir: &Path) -> Result<TrainState> {
    let corrupt = |reason: String| Error::CorruptCheckpoint {
        path: dir.to_path_buf(),
        reason,
    };
    let meta = read_meta(dir)?;
    let tensor_path = dir.join(&meta.tensor_file);
    let bytes = fs::read(&tensor_path).map_err(|e| corrupt(format!("{}: {e}", meta.tensor_file)))?;
    let hash = content_hash(&bytes);
    if hash != meta.content_hash {
        return Err(corrupt(format!(
            "content hash {hash} does not match recorded {}",
            meta.content_hash
        )));
    }
    let mut tensors: BTreeMap<String, ArrayD<f64>> =
        decode_tensors(&bytes).map_err(corrupt)?.into_iter().collect();

    let spec = meta.net_spec.clone();
    let mut generator = GeneratorNetwork::build(&spec, 0)?;
    let mut discriminator = DiscriminatorNetwork::build(&spec, 0)?;
    assign("generator", &mut generator, &mut tensors).map_err(corrupt)?;
    assign("discriminator", &mut discriminator, &mut tensors).map_err(corrupt)?;
    let adam_cfg = meta.train_config.adam();
    let mut adam_g = Adam::for_module(adam_cfg, &generator);
    let mut adam_d = Adam::for_module(adam_cfg, &discriminator);
    assign_adam("adam_g", &generator, &mut adam_g, &mut tensors).map_err(corrupt)?;
    assign_adam("adam_d", &discriminator, &mut adam_d, &mut tensors).map_err(corrupt)?;
    if let Some(extra) = tensors.keys().next() {
        return Err(corrupt(format!("unexpected tensor {extra}")));
    }
    adam_g.step = meta.adam_g_step;
    adam_d.step = meta.adam_d_step;
    let rng = meta
        .rng
        .restore()
        .ok_or_else(|| corrupt("unreadable rng state".into()))?;
    Ok(TrainState {
        generator,
        discriminator,
        adam_g,
        adam_d,
        epoch: meta.epoch,
        step: meta.step,
        rng,
        config: meta.train_config,
    })
}

/// Directory name for the checkpoint written after `epoch` completed epochs.
pub fn checkpoint_dir_name(epoch: usize) -> PathBuf {
    PathBuf::from(format!("epoch_{epoch:04}"))
}
