//! Adversarial optimization loop, Adam, checkpoints and the training log.

mod adam;
mod checkpoint;
mod log;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::s;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use self::adam::{Adam, AdamConfig};
pub use self::checkpoint::{
    checkpoint_dir_name, content_hash, decode_tensors, encode_tensors, load_checkpoint, read_meta,
    save_checkpoint, state_tensors, CheckpointMeta, RngState, CHECKPOINT_FORMAT_VERSION,
    META_FILE, TENSOR_FILE,
};
pub use self::log::{CsvLogWriter, LogRecord, TrainingLog, LOG_HEADER};

use crate::dataset::{DatasetManifest, FramePair, Split};
use crate::error::{Error, Result};
use crate::model::{
    batch_frames, discriminator_loss, generator_loss, DiscriminatorLoss, DiscriminatorNetwork,
    GeneratorNetwork, LossBreakdown, Mode, Module, NetworkSpec, Tensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda_l1: f64,
    pub seed: u64,
    /// Epoch interval between checkpoints; the final epoch is always saved.
    pub checkpoint_every: usize,
    /// Square side of the training frames.
    pub image_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0002,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            epochs: 200,
            lambda_l1: 100.0,
            seed: 0,
            checkpoint_every: 10,
            image_size: 256,
        }
    }
}

impl TrainConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha > 0.0) {
            return bad(format!("alpha {} must be > 0", self.alpha));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} {b} outside [0, 1)"));
            }
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon {} must be > 0", self.epsilon));
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.lambda_l1 >= 0.0) {
            return bad(format!("lambda_l1 {} must be >= 0", self.lambda_l1));
        }
        if self.checkpoint_every < 1 {
            return bad("checkpoint_every must be >= 1".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.epsilon,
        }
    }

    pub fn steps_per_epoch(&self, train_size: usize) -> usize {
        train_size.div_ceil(self.batch_size)
    }
}

/// Everything needed to continue training bit-identically.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub generator: GeneratorNetwork,
    pub discriminator: DiscriminatorNetwork,
    pub adam_g: Adam,
    pub adam_d: Adam,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimization steps.
    pub step: u64,
    /// Dropout stream.
    pub rng: ChaCha8Rng,
    pub config: TrainConfig,
}

impl TrainState {
    pub fn new(spec: &NetworkSpec, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let generator = GeneratorNetwork::build(spec, cfg.seed)?;
        let discriminator = DiscriminatorNetwork::build(spec, cfg.seed.wrapping_add(1))?;
        let adam_g = Adam::for_module(cfg.adam(), &generator);
        let adam_d = Adam::for_module(cfg.adam(), &discriminator);
        Ok(Self {
            generator,
            discriminator,
            adam_g,
            adam_d,
            epoch: 0,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2)),
            config: cfg.clone(),
        })
    }

    pub fn content_hash(&self) -> String {
        content_hash(&encode_tensors(&state_tensors(self)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub generator: LossBreakdown,
    pub discriminator: f64,
}

/// Accumulates discriminator gradients for `0.5·[BCE(real,1) + BCE(fake,0)]`.
///
/// Real and fake pairs run as separate forwards, each normalized with its
/// own batch statistics.
pub fn discriminator_gradients(
    disc: &mut DiscriminatorNetwork,
    face: &Tensor,
    real: &Tensor,
    fake: &Tensor,
) -> Result<DiscriminatorLoss> {
    let logits_real = disc.forward(face, real)?;
    let zero = Tensor::zeros(logits_real.raw_dim());
    // Gradients of each half only depend on its own logits.
    let real_part = discriminator_loss(&logits_real, &zero)?;
    disc.backward(&real_part.d_real);
    let logits_fake = disc.forward(face, fake)?;
    let loss = discriminator_loss(&logits_real, &logits_fake)?;
    disc.backward(&loss.d_fake);
    Ok(loss)
}

/// Generator loss through the discriminator; accumulates generator gradients
/// (discriminator gradients are also touched and must be discarded).
pub fn generator_gradients(
    gen: &mut GeneratorNetwork,
    disc: &mut DiscriminatorNetwork,
    face: &Tensor,
    fake: &Tensor,
    target: &Tensor,
    lambda_l1: f64,
) -> Result<LossBreakdown> {
    let logits = disc.forward(face, fake)?;
    let loss = generator_loss(&logits, fake, target, lambda_l1)?;
    let d_input = disc.backward(&loss.d_logits);
    let face_ch = face.dim().1;
    let d_fake = &d_input.slice(s![.., face_ch.., .., ..]) + &loss.d_generated;
    gen.backward(&d_fake);
    Ok(loss.breakdown)
}

fn check_finite(v: f64, term: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{term} loss is {v}")))
    }
}

/// One discriminator update followed by one generator update.
pub fn train_step(state: &mut TrainState, face: &Tensor, mri: &Tensor) -> Result<StepLosses> {
    if face.dim().0 == 0 {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let lambda = state.config.lambda_l1;
    let TrainState {
        generator: gen,
        discriminator: disc,
        adam_g,
        adam_d,
        rng,
        ..
    } = state;
    gen.mode = Mode::Train;
    disc.mode = Mode::Train;

    let fake = gen.forward(face, Some(rng))?;

    disc.zero_grad();
    let d = discriminator_gradients(disc, face, mri, &fake)?;
    check_finite(d.loss, "discriminator")?;
    adam_d.update(disc);

    gen.zero_grad();
    let g = generator_gradients(gen, disc, face, &fake, mri, lambda)?;
    check_finite(g.adversarial, "generator adversarial")?;
    check_finite(g.l1, "generator L1")?;
    adam_g.update(gen);
    disc.zero_grad();

    state.step += 1;
    Ok(StepLosses {
        generator: g,
        discriminator: d.loss,
    })
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub checkpoint_dir: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
    /// Continue from a loaded state instead of initializing from the seed.
    pub resume: Option<TrainState>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: TrainingLog,
    pub checkpoints: Vec<(PathBuf, String)>,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Trains on the train split of `manifest` until `cfg.epochs` epochs are
/// complete, writing checkpoints and the CSV log when paths are given.
pub fn train(
    manifest: &DatasetManifest,
    frames: &[FramePair],
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    opts: TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    let train_set: Vec<&FramePair> = frames
        .iter()
        .filter(|p| manifest.split_of(&p.key()) == Some(Split::Train))
        .collect();
    if train_set.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    for p in &train_set {
        let (c, h, w) = p.face.dim();
        if h != w || c != spec.input_channels || p.mri.dim() != (spec.output_channels, h, w) {
            return Err(Error::ShapeMismatch {
                expected: format!(
                    "face ({}, S, S) and mri ({}, S, S)",
                    spec.input_channels, spec.output_channels
                ),
                got: format!("{:?} / {:?}", p.face.shape(), p.mri.shape()),
            });
        }
        if h != cfg.image_size {
            return Err(Error::ShapeMismatch {
                expected: format!("{0}x{0} frames", cfg.image_size),
                got: format!("{h}x{w}"),
            });
        }
    }
    spec.check_input_side(cfg.image_size)?;

    let mut state = match opts.resume {
        Some(s) => {
            if s.generator.spec != *spec {
                return Err(Error::InvalidConfig("resumed checkpoint has a different network spec".into()));
            }
            s
        }
        None => TrainState::new(spec, cfg)?,
    };
    state.config.epochs = cfg.epochs;

    let mut writer = opts.log_path.as_deref().map(CsvLogWriter::open).transpose()?;
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut log = TrainingLog::default();
    let mut checkpoints = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        order.sort_unstable();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));
        for chunk in order.chunks(cfg.batch_size) {
            for &i in chunk {
                let key = train_set[i].key();
                if manifest.split_of(&key) != Some(Split::Train) {
                    return Err(Error::DataLeakage(key));
                }
            }
            let face = batch_frames(chunk.iter().map(|&i| &train_set[i].face))?;
            let mri = batch_frames(chunk.iter().map(|&i| &train_set[i].mri))?;
            let losses = train_step(&mut state, &face, &mri)?;
            let rec = LogRecord {
                epoch: epoch + 1,
                step: state.step,
                gen_adv: losses.generator.adversarial,
                gen_l1: losses.generator.l1,
                gen_total: losses.generator.total,
                disc: losses.discriminator,
                timestamp: now(),
            };
            if let Some(w) = writer.as_mut() {
                w.append(&rec)?;
            }
            log.push(rec);
        }
        state.epoch += 1;
        let due = state.epoch % cfg.checkpoint_every == 0 || state.epoch == cfg.epochs;
        if let (true, Some(dir)) = (due, &opts.checkpoint_dir) {
            let path = dir.join(checkpoint_dir_name(state.epoch));
            let hash = save_checkpoint(&state, &path)?;
            checkpoints.push((path, hash));
        }
    }
    Ok(TrainOutcome {
        state,
        log,
        checkpoints,
    })
}

/// Newest `epoch_NNNN` checkpoint under `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Option<PathBuf> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("epoch_"))
                && p.join(META_FILE).exists()
        })
        .collect();
    found.sort();
    found.pop()
}

/// Deterministic inference: running-statistics normalization, dropout only
/// when an RNG is supplied.
pub fn translate(gen: &mut GeneratorNetwork, face: &Tensor, dropout: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
    let mode = gen.mode;
    gen.mode = Mode::Inference;
    let out = gen.forward(face, dropout);
    gen.mode = mode;
    out
}
