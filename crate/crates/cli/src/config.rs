//! TOML defaults file and the flags > file > built-in precedence.

use std::path::Path;

use e2icm_core::dataset::{SplitKind, SplitPolicy};
use e2icm_core::metrics::{SsimParams, Window};
use e2icm_core::model::NetworkSpec;
use e2icm_core::train::TrainConfig;
use serde::Deserialize;

use crate::args::{ExtractorArg, ModelFlags, Preset, SplitArg, SsimFlags, TrainArgs, WindowArg};
use crate::error::{CliError, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub train: TrainSection,
    pub model: ModelSection,
    pub split: SplitSection,
    pub ssim: SsimSection,
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub alpha: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub lambda_l1: Option<f64>,
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Option<Preset>,
    pub size: Option<usize>,
    pub encoder_widths: Option<Vec<usize>>,
    pub disc_widths: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub kind: Option<SplitArg>,
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsimSection {
    pub window: Option<WindowArg>,
    pub size: Option<usize>,
    pub sigma: Option<f64>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub dynamic_range: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub extractor: Option<ExtractorArg>,
    pub feature_size: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        if !path.exists() {
            return Err(CliError::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }
}

pub fn resolve_split(kind: Option<SplitArg>, fraction: Option<f64>, seed: u64, file: &FileConfig) -> SplitPolicy {
    let d = SplitPolicy::default();
    let kind = match kind.or(file.split.kind) {
        Some(SplitArg::PerFrameRandom) => SplitKind::PerFrameRandom,
        Some(SplitArg::PerSentenceHoldout) => SplitKind::PerSentenceHoldout,
        None => d.kind,
    };
    SplitPolicy {
        kind,
        test_fraction: fraction.or(file.split.test_fraction).unwrap_or(d.test_fraction),
        seed,
    }
}

/// Network spec and frame side.
pub fn resolve_model(flags: &ModelFlags, file: &FileConfig) -> Result<(NetworkSpec, usize)> {
    let m = &file.model;
    let preset = flags.preset.or(m.preset).unwrap_or(Preset::Standard);
    let base = match preset {
        Preset::Standard => NetworkSpec::standard(),
        Preset::Tiny => NetworkSpec::tiny(),
    };
    let enc = flags.encoder_widths.clone().or_else(|| m.encoder_widths.clone());
    let disc = flags.disc_widths.clone().or_else(|| m.disc_widths.clone());
    let spec = if enc.is_some() || disc.is_some() {
        let enc = enc.unwrap_or_else(|| base.encoder.iter().map(|l| l.channels).collect());
        let disc = disc.unwrap_or_else(|| base.disc_layers.clone());
        if enc.len() < 2 || disc.is_empty() || enc.iter().chain(&disc).any(|&w| w == 0) {
            return Err(CliError::Invalid("encoder needs at least 2 layers and all widths must be positive".into()));
        }
        NetworkSpec::scaled(&enc, &disc)
    } else {
        base
    };
    spec.validate()?;
    let size = flags.size.or(m.size).unwrap_or(match preset {
        Preset::Standard => 256,
        Preset::Tiny => 16,
    });
    spec.check_input_side(size)?;
    Ok((spec, size))
}

pub fn resolve_train(a: &TrainArgs, file: &FileConfig, image_size: usize) -> TrainConfig {
    let d = TrainConfig::default();
    let t = &file.train;
    TrainConfig {
        alpha: a.alpha.or(t.alpha).unwrap_or(d.alpha),
        beta1: a.beta1.or(t.beta1).unwrap_or(d.beta1),
        beta2: a.beta2.or(t.beta2).unwrap_or(d.beta2),
        epsilon: a.epsilon.or(t.epsilon).unwrap_or(d.epsilon),
        batch_size: a.batch_size.or(t.batch_size).unwrap_or(d.batch_size),
        epochs: a.epochs.or(t.epochs).unwrap_or(d.epochs),
        lambda_l1: a.lambda_l1.or(t.lambda_l1).unwrap_or(d.lambda_l1),
        seed: file.seed(a.common.seed),
        checkpoint_every: a.checkpoint_every.or(t.checkpoint_every).unwrap_or(d.checkpoint_every),
        image_size,
    }
}

pub fn resolve_ssim(f: &SsimFlags, file: &FileConfig) -> SsimParams {
    let d = SsimParams::default();
    let s = &file.ssim;
    let size = f.ssim_size.or(s.size).unwrap_or(11);
    let window = match f.ssim_window.or(s.window).unwrap_or(WindowArg::Gaussian) {
        WindowArg::Gaussian => Window::Gaussian {
            size,
            sigma: f.ssim_sigma.or(s.sigma).unwrap_or(1.5),
        },
        WindowArg::Uniform => Window::Uniform { size },
    };
    SsimParams {
        window,
        k1: f.ssim_k1.or(s.k1).unwrap_or(d.k1),
        k2: f.ssim_k2.or(s.k2).unwrap_or(d.k2),
        dynamic_range: f.ssim_dynamic_range.or(s.dynamic_range).unwrap_or(d.dynamic_range),
    }
}

/// Scientific notation with a two-digit signed exponent, e.g. `1e-08`.
pub fn sci(v: f64) -> String {
    let s = format!("{v:e}");
    match s.split_once('e') {
        Some((m, e)) => {
            let (sign, digits) = e.strip_prefix('-').map_or(("+", e), |d| ("-", d));
            format!("{m}e{sign}{digits:0>2}")
        }
        None => s,
    }
}

/// One-line echo of the effective training configuration.
pub fn echo_train(c: &TrainConfig) -> String {
    format!(
        "alpha={} beta1={} beta2={} epsilon={} batch_size={} epochs={} lambda_l1={} seed={} checkpoint_every={} image_size={}",
        c.alpha,
        c.beta1,
        c.beta2,
        sci(c.epsilon),
        c.batch_size,
        c.epochs,
        c.lambda_l1,
        c.seed,
        c.checkpoint_every,
        c.image_size
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sci_format() {
        assert_eq!(sci(1e-8), "1e-08");
        assert_eq!(sci(2.5e-12), "2.5e-12");
        assert_eq!(sci(3e5), "3e+05");
    }

    #[test]
    fn default_echo() {
        let c = TrainConfig::default();
        assert_eq!(
            echo_train(&c),
            "alpha=0.0002 beta1=0.5 beta2=0.999 epsilon=1e-08 batch_size=16 epochs=200 lambda_l1=100 seed=0 checkpoint_every=10 image_size=256"
        );
    }

    #[test]
    fn file_sections_parse() {
        let f: FileConfig = toml::from_str(
            "seed = 4\n[train]\nepochs = 3\n[model]\npreset = \"tiny\"\n[split]\nkind = \"per_sentence_holdout\"\n[ssim]\nwindow = \"uniform\"\n",
        )
        .unwrap();
        assert_eq!(f.seed, Some(4));
        assert_eq!(f.train.epochs, Some(3));
        assert_eq!(f.model.preset, Some(Preset::Tiny));
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
        let p = resolve_split(None, None, 1, &f);
        assert_eq!(p.kind, SplitKind::PerSentenceHoldout);
        let s = resolve_ssim(&SsimFlags::default(), &f);
        assert_eq!(s.window, Window::Uniform { size: 11 });
    }
}
