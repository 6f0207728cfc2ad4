use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use serde::{Deserialize, Serialize};

use super::split::SplitPolicy;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const FACE_DIR: &str = "face";
pub const MRI_DIR: &str = "mri";

/// Frames per second as a positive rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fps {
    pub num: u32,
    pub den: u32,
}

impl Fps {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::InvalidConfig(format!("fps {num}/{den} must be positive")));
        }
        Ok(Self { num, den })
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Default for Fps {
    fn default() -> Self {
        Self { num: 15, den: 1 }
    }
}

impl fmt::Display for Fps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermittedUse {
    Training,
    Evaluation,
    SyntheticGeneration,
    Publication,
    Research,
}

impl std::str::FromStr for PermittedUse {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "training" => Ok(Self::Training),
            "evaluation" => Ok(Self::Evaluation),
            "synthetic-generation" => Ok(Self::SyntheticGeneration),
            "publication" => Ok(Self::Publication),
            "research" => Ok(Self::Research),
            other => Err(Error::InvalidConfig(format!("unknown permitted use {other:?}"))),
        }
    }
}

/// What the data subjects agreed to. Copied verbatim into every provenance
/// record; never inferred.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentScope {
    pub statement: String,
    pub permitted_uses: Vec<PermittedUse>,
}

impl ConsentScope {
    pub fn new(statement: impl Into<String>, mut permitted_uses: Vec<PermittedUse>) -> Self {
        permitted_uses.sort();
        permitted_uses.dedup();
        Self {
            statement: statement.into(),
            permitted_uses,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.statement.trim().is_empty()
    }

    pub fn permits(&self, use_: PermittedUse) -> bool {
        self.permitted_uses.contains(&use_)
    }
}

/// Per-subject attributes, e.g. `language_variety → "British English"`.
pub type Demographics = BTreeMap<String, BTreeMap<String, String>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One aligned pair as stored in the manifest: indices plus paths relative
/// to the corpus root, never pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRef {
    pub subject_id: String,
    pub sentence_id: String,
    pub frame_index: usize,
    pub face_path: String,
    pub mri_path: String,
}

impl PairRef {
    pub fn key(&self) -> String {
        frame_key(&self.subject_id, &self.sentence_id, self.frame_index)
    }
}

pub fn frame_key(subject: &str, sentence: &str, frame_index: usize) -> String {
    format!("{subject}/{sentence}/{frame_index:05}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub manifest_version: u32,
    pub root: String,
    pub fps: Fps,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub seed: u64,
    pub split_policy: Option<SplitPolicy>,
    pub consent_scope: ConsentScope,
    pub demographics: Demographics,
    pub pairs: Vec<PairRef>,
    pub splits: BTreeMap<String, Split>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.manifest_version != MANIFEST_VERSION {
            return Err(Error::InvalidConfig(format!(
                "manifest_version {} unsupported",
                m.manifest_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn split_of(&self, key: &str) -> Option<Split> {
        self.splits.get(key).copied()
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.values().filter(|&&s| s == split).count()
    }

    /// Frame counts per (subject, sentence), in manifest order.
    pub fn sentence_counts(&self) -> Vec<((String, String), usize)> {
        let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
        for p in &self.pairs {
            *counts
                .entry((p.subject_id.clone(), p.sentence_id.clone()))
                .or_default() += 1;
        }
        counts.into_iter().collect()
    }
}

/// How to pair modalities whose frame counts differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resample {
    /// Keep the shorter sequence and pick the nearest frame index in the
    /// longer one.
    NearestIndex,
}

#[derive(Debug, Clone, Default)]
pub struct ScanOptions {
    pub fps: Fps,
    pub resample: Option<Resample>,
    /// Defaults to the newest source-file modification time, so rescanning
    /// an unchanged corpus yields identical bytes.
    pub created_at: Option<u64>,
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().is_dir() {
            out.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    out.sort();
    Ok(out)
}

const IMAGE_EXTS: &[&str] = &["png"];

/// Frame files of one sentence video, ordered by their numeric stem.
fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut frames: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTS.contains(&e.to_ascii_lowercase().as_str()));
        if !ext_ok {
            continue;
        }
        let Some(index) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok())
        else {
            continue;
        };
        frames.push((index, path));
    }
    frames.sort();
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

fn nearest_index(i: usize, short: usize, long: usize) -> usize {
    (((i as f64 + 0.5) * long as f64 / short as f64) as usize).min(long - 1)
}

fn rel(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

fn mtime(path: &Path) -> u64 {
    fs::metadata(path)
        .and_then(|m| m.modified())
        .ok()
        .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .map_or(0, |d| d.as_secs())
}

/// Inventories a corpus laid out as
/// `<root>/{face,mri}/<subject>/<sentence>/<frame_index:05>.<ext>`.
///
/// The manifest is returned unsplit; see [`super::split_dataset`].
pub fn scan_corpus(
    root: &Path,
    consent_scope: ConsentScope,
    demographics: Demographics,
    opts: &ScanOptions,
) -> Result<DatasetManifest> {
    if consent_scope.is_empty() {
        return Err(Error::EmptyConsentScope);
    }
    let face_root = root.join(FACE_DIR);
    let mri_root = root.join(MRI_DIR);
    if !face_root.is_dir() && !mri_root.is_dir() {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }

    // Union of (subject, sentence) keys across both modalities so a
    // one-sided sentence is reported rather than silently skipped.
    let mut sentences: BTreeMap<(String, String), ()> = BTreeMap::new();
    for modality_root in [&face_root, &mri_root] {
        if !modality_root.is_dir() {
            continue;
        }
        for subject in sorted_subdirs(modality_root)? {
            for sentence in sorted_subdirs(&modality_root.join(&subject))? {
                sentences.insert((subject.clone(), sentence), ());
            }
        }
    }

    let mut pairs = Vec::new();
    let mut newest = 0u64;
    for (subject, sentence) in sentences.into_keys() {
        let face = frame_files(&face_root.join(&subject).join(&sentence))?;
        let mri = frame_files(&mri_root.join(&subject).join(&sentence))?;
        let missing = if face.is_empty() {
            Some("face")
        } else if mri.is_empty() {
            Some("mri")
        } else {
            None
        };
        if let Some(modality) = missing {
            return Err(Error::MissingModality {
                subject,
                sentence,
                modality,
            });
        }
        let matched: Vec<(&PathBuf, &PathBuf)> = if face.len() == mri.len() {
            face.iter().zip(mri.iter()).collect()
        } else {
            match opts.resample {
                None => {
                    return Err(Error::UnequalFrameCount {
                        subject,
                        sentence,
                        face: face.len(),
                        mri: mri.len(),
                    })
                }
                Some(Resample::NearestIndex) => {
                    let (short, long) = (face.len().min(mri.len()), face.len().max(mri.len()));
                    (0..short)
                        .map(|i| {
                            let j = nearest_index(i, short, long);
                            if face.len() < mri.len() {
                                (&face[i], &mri[j])
                            } else {
                                (&face[j], &mri[i])
                            }
                        })
                        .collect()
                }
            }
        };
        for (frame_index, (f, m)) in matched.into_iter().enumerate() {
            newest = newest.max(mtime(f)).max(mtime(m));
            pairs.push(PairRef {
                subject_id: subject.clone(),
                sentence_id: sentence.clone(),
                frame_index,
                face_path: rel(root, f),
                mri_path: rel(root, m),
            });
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }

    Ok(DatasetManifest {
        manifest_version: MANIFEST_VERSION,
        root: root.to_string_lossy().into_owned(),
        fps: opts.fps,
        created_at: opts.created_at.unwrap_or(newest),
        seed: 0,
        split_policy: None,
        consent_scope,
        demographics,
        pairs,
        splits: BTreeMap::new(),
    })
}
