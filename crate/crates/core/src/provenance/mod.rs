//! Synthetic-data tagging, the provenance gate, and dataset bias reports.

mod bias;
pub mod png;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use self::bias::{bias_report, BiasReport, GroupCount, UNDECLARED};

use crate::dataset::{ConsentScope, PermittedUse};
use crate::error::{Error, Result};

pub const PROVENANCE_VERSION: u32 = 1;
/// iTXt keyword of the embedded block.
pub const KEYWORD: &str = "e2icm-provenance";
pub const SIDECAR_SUFFIX: &str = ".provenance.json";
pub const GENERATOR_VERSION: &str = concat!("e2icm ", env!("CARGO_PKG_VERSION"));

/// Where a generated frame came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceRef {
    Frame {
        subject_id: String,
        sentence_id: String,
        frame_index: usize,
    },
    External {
        descriptor: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub synthetic: bool,
    /// Content hash of the generating checkpoint.
    pub model_hash: String,
    pub source_ref: SourceRef,
    pub consent_scope: ConsentScope,
    /// Unix seconds.
    pub created_at: u64,
    pub generator_version: String,
    pub provenance_version: u32,
}

impl ProvenanceRecord {
    pub fn new(model_hash: impl Into<String>, source_ref: SourceRef, consent_scope: ConsentScope, created_at: u64) -> Self {
        Self {
            synthetic: true,
            model_hash: model_hash.into(),
            source_ref,
            consent_scope,
            created_at,
            generator_version: GENERATOR_VERSION.into(),
            provenance_version: PROVENANCE_VERSION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.synthetic {
            return Err(Error::InvalidRecord("synthetic flag must be true".into()));
        }
        check_hash(&self.model_hash)?;
        if self.consent_scope.is_empty() {
            return Err(Error::InvalidRecord("consent scope is empty".into()));
        }
        if self.provenance_version != PROVENANCE_VERSION {
            return Err(Error::InvalidRecord(format!(
                "provenance_version {} (expected {PROVENANCE_VERSION})",
                self.provenance_version
            )));
        }
        Ok(())
    }

    /// Sorted-key compact JSON.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&serde_json::to_value(self)?)?)
    }
}

/// 64 lowercase hex characters.
pub fn check_hash(h: &str) -> Result<()> {
    if h.len() == 64 && h.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        Ok(())
    } else {
        Err(Error::HashFormat(h.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Generation needs a non-empty consent scope that lists synthetic
/// generation.
pub fn check_generation_consent(scope: &ConsentScope) -> Result<()> {
    if scope.is_empty() {
        return Err(Error::EmptyConsentScope);
    }
    if !scope.permits(PermittedUse::SyntheticGeneration) {
        return Err(Error::ConsentNotGranted("synthetic-generation".into()));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    digest: String,
    record: serde_json::Value,
}

/// The text stored in the block: record plus SHA-256 of its canonical bytes.
pub fn encode_block(record: &ProvenanceRecord) -> Result<String> {
    record.validate()?;
    let canonical = record.canonical_json()?;
    let env = Envelope {
        digest: sha256_hex(canonical.as_bytes()),
        record: serde_json::from_str(&canonical)?,
    };
    Ok(serde_json::to_string(&env)?)
}

pub fn decode_block(text: &str) -> Result<ProvenanceRecord> {
    let env: Envelope = serde_json::from_str(text)
        .map_err(|e| Error::CorruptProvenance(format!("unparseable block: {e}")))?;
    check_hash(&env.digest)?;
    let canonical = serde_json::to_string(&env.record)?;
    if sha256_hex(canonical.as_bytes()) != env.digest {
        return Err(Error::TamperedProvenance("stored digest does not match record".into()));
    }
    let record: ProvenanceRecord = serde_json::from_value(env.record)
        .map_err(|e| Error::CorruptProvenance(format!("malformed record: {e}")))?;
    record.validate()?;
    Ok(record)
}

fn is_block(c: &png::Chunk) -> bool {
    png::itxt_text(c, KEYWORD).is_some()
}

/// Embeds `record` in a PNG, replacing any previous block. Image chunks are
/// copied byte for byte.
pub fn tag_synthetic(image_bytes: &[u8], record: &ProvenanceRecord) -> Result<Vec<u8>> {
    if !png::is_png(image_bytes) {
        return Err(Error::UnsupportedContainer);
    }
    let data = png::itxt_data(KEYWORD, &encode_block(record)?);
    png::rebuild(image_bytes, is_block, Some((b"iTXt", &data)))
}

/// Removes every provenance block.
pub fn strip(image_bytes: &[u8]) -> Result<Vec<u8>> {
    png::rebuild(image_bytes, is_block, None)
}

/// Extracts and checks the embedded record.
pub fn verify(file_bytes: &[u8]) -> Result<ProvenanceRecord> {
    let chunks = png::chunks(file_bytes)?;
    let mut texts = chunks.iter().filter_map(|c| png::itxt_text(c, KEYWORD));
    let text = texts.next().ok_or(Error::MissingProvenance)??;
    if texts.next().is_some() {
        return Err(Error::CorruptProvenance("more than one provenance block".into()));
    }
    decode_block(text)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(SIDECAR_SUFFIX);
    path.with_file_name(name)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Tags a file in place; containers without text blocks get a sidecar.
pub fn tag_file(path: &Path, record: &ProvenanceRecord) -> Result<()> {
    let bytes = read(path)?;
    if png::is_png(&bytes) {
        let tagged = tag_synthetic(&bytes, record)?;
        std::fs::write(path, tagged).map_err(|e| Error::io(path, e))
    } else {
        let side = sidecar_path(path);
        std::fs::write(&side, encode_block(record)?).map_err(|e| Error::io(&side, e))
    }
}

/// Verifies a file's embedded block, or its sidecar for non-PNG files.
pub fn verify_file(path: &Path) -> Result<ProvenanceRecord> {
    let bytes = read(path)?;
    if png::is_png(&bytes) {
        return verify(&bytes);
    }
    let side = sidecar_path(path);
    if !side.exists() {
        return Err(Error::MissingProvenance);
    }
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    decode_block(&text)
}

/// The gate in front of scoring and export: every file presented as
/// generated output must carry a valid record.
pub fn require_tagged<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<ProvenanceRecord>> {
    paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            verify_file(p).map_err(|e| Error::UntaggedGenerated {
                path: p.to_path_buf(),
                reason: e.to_string(),
            })
        })
        .collect()
}
