use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use e2icm_core::dataset::{
    extract_frame_pairs, scan_corpus, split_dataset, ConsentScope, DatasetManifest, Demographics, Fps, Resample,
    ScanOptions, Split, FACE_DIR, MRI_DIR,
};
use e2icm_core::imaging::{encode_png, frame_to_image, load_gray_frame, open_image, preprocess_face, preprocess_mri, Frame};
use e2icm_core::metrics::{evaluate_frames, FeatureExtractor, IdentityExtractor, UnavailableExtractor};
use e2icm_core::model::batch_frames;
use e2icm_core::provenance::{
    bias_report, check_generation_consent, require_tagged, tag_synthetic, ProvenanceRecord, SourceRef, SIDECAR_SUFFIX,
};
use e2icm_core::train::{latest_checkpoint, load_checkpoint, read_meta, train, translate, TrainOptions, META_FILE};
use e2icm_core::Error;
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::{EvaluateArgs, ExtractorArg, GenerateArgs, IngestArgs, ReportArgs, SplitSel, TrainArgs};
use crate::config::{echo_train, resolve_model, resolve_split, resolve_ssim, resolve_train, FileConfig};
use crate::error::{CliError, Result};
use crate::triptych::render_triptych;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_SUBDIR: &str = "checkpoints";
pub const LOG_FILE: &str = "train_log.csv";
pub const TRAIN_CONFIG_FILE: &str = "train_config.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const BIAS_FILE: &str = "bias_report.json";
pub const REPORT_FILE: &str = "report.json";
pub const TRIPTYCH_SUBDIR: &str = "triptychs";

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Writes through a sibling temp file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn parse_fps(s: &str) -> Result<Fps> {
    let bad = || CliError::Invalid(format!("fps {s:?} is not N or N/D"));
    let (n, d) = s.split_once('/').unwrap_or((s, "1"));
    let n = n.trim().parse().map_err(|_| bad())?;
    let d = d.trim().parse().map_err(|_| bad())?;
    Ok(Fps::new(n, d)?)
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    require(path)?;
    Ok(DatasetManifest::load(path)?)
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let statement = a.consent.clone().unwrap_or_default();
    if statement.trim().is_empty() {
        return Err(Error::EmptyConsentScope.into());
    }
    require(&a.root)?;
    let root = a.root.canonicalize().map_err(|e| CliError::io(&a.root, e))?;
    let demographics: Demographics = match &a.demographics {
        Some(p) => {
            require(p)?;
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config {
                path: p.clone(),
                reason: e.to_string(),
            })?
        }
        None => Demographics::new(),
    };
    let opts = ScanOptions {
        fps: parse_fps(&a.fps)?,
        resample: a.resample_nearest.then_some(Resample::NearestIndex),
        created_at: None,
    };
    let scope = ConsentScope::new(statement, a.permit.clone());
    let unsplit = scan_corpus(&root, scope, demographics, &opts)?;
    let seed = file.seed(a.common.seed);
    let policy = resolve_split(a.split, a.test_fraction, seed, &file);
    let manifest = split_dataset(&unsplit, &policy)?;

    let path = a.common.out.join(MANIFEST_FILE);
    write_atomic(&path, manifest.to_json()?.as_bytes())?;
    println!(
        "pairs={} train={} test={} manifest={}",
        manifest.pairs.len(),
        manifest.count(Split::Train),
        manifest.count(Split::Test),
        path.display()
    );
    for w in bias_report(&manifest).warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let manifest = load_manifest(&a.manifest)?;
    let ckpt_dir = a.common.out.join(CHECKPOINT_SUBDIR);

    let resume_dir = match (&a.resume_from, a.resume) {
        (Some(p), _) => {
            require(p)?;
            Some(p.clone())
        }
        (None, true) => Some(
            latest_checkpoint(&ckpt_dir)
                .ok_or_else(|| CliError::Invalid(format!("--resume: no checkpoint under {}", ckpt_dir.display())))?,
        ),
        (None, false) => None,
    };
    let resume = resume_dir.as_deref().map(load_checkpoint).transpose()?;

    let (spec, cfg) = match &resume {
        Some(state) => {
            let mut cfg = state.config.clone();
            if let Some(e) = a.epochs.or(file.train.epochs) {
                cfg.epochs = e;
            }
            (state.generator.spec.clone(), cfg)
        }
        None => {
            let (spec, size) = resolve_model(&a.model, &file)?;
            (spec, resolve_train(a, &file, size))
        }
    };
    cfg.validate()?;
    println!("{}", echo_train(&cfg));
    if a.dry_run {
        return Ok(());
    }
    if !manifest.consent_scope.permits(e2icm_core::dataset::PermittedUse::Training) {
        warn!("consent scope does not list training among its permitted uses");
    }

    // Only train-split pairs are decoded.
    let mut train_only = manifest.clone();
    train_only
        .pairs
        .retain(|p| manifest.split_of(&p.key()) == Some(Split::Train));
    let frames = extract_frame_pairs_at(&train_only, cfg.image_size)?;
    info!("loaded {} training pairs", frames.len());

    create_dir(&a.common.out)?;
    write_json(
        &a.common.out.join(TRAIN_CONFIG_FILE),
        &serde_json::json!({
            "train_config": cfg,
            "net_spec": spec,
            "manifest": a.manifest,
            "resumed_from": resume_dir,
        }),
    )?;
    let outcome = train(
        &manifest,
        &frames,
        &spec,
        &cfg,
        TrainOptions {
            checkpoint_dir: Some(ckpt_dir),
            log_path: Some(a.common.out.join(LOG_FILE)),
            resume,
        },
    )?;
    if let Some(last) = outcome.log.records.last() {
        println!(
            "epoch={} step={} gen_l1={:.6} gen_total={:.6} disc={:.6}",
            last.epoch, last.step, last.gen_l1, last.gen_total, last.disc
        );
    }
    for (path, hash) in &outcome.checkpoints {
        println!("checkpoint {} {hash}", path.display());
    }
    Ok(())
}

fn extract_frame_pairs_at(manifest: &DatasetManifest, side: usize) -> Result<Vec<e2icm_core::dataset::FramePair>> {
    let root = Path::new(&manifest.root);
    require(root)?;
    Ok(extract_frame_pairs(manifest, (side, side))?)
}

/// A checkpoint directory itself, or the newest one below it or below its
/// `checkpoints/` child.
pub fn resolve_checkpoint(path: &Path) -> Result<PathBuf> {
    require(path)?;
    if path.join(META_FILE).exists() {
        return Ok(path.to_path_buf());
    }
    latest_checkpoint(path)
        .or_else(|| latest_checkpoint(&path.join(CHECKPOINT_SUBDIR)))
        .ok_or_else(|| CliError::Invalid(format!("no checkpoint found under {}", path.display())))
}

fn file_mtime(path: &Path) -> u64 {
    std::fs::metadata(path)
        .and_then(|m| m.modified())
        .ok()
        .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .map_or(0, |d| d.as_secs())
}

/// Image files below `dir`, relative and sorted; provenance sidecars and
/// temp files are skipped.
pub fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
            let path = entry.map_err(|e| CliError::io(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
                continue;
            }
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name.ends_with(SIDECAR_SUFFIX) || name.ends_with(".tmp") || name.starts_with('.') {
                continue;
            }
            let is_image = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg" | "bmp"));
            if is_image {
                out.push(path.strip_prefix(root).unwrap_or(&path).to_path_buf());
            }
        }
        Ok(())
    }
    require(dir)?;
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

struct Job {
    rel: PathBuf,
    face: Frame,
    source: SourceRef,
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let manifest = load_manifest(&a.manifest)?;
    check_generation_consent(&manifest.consent_scope)?;
    let ckpt = resolve_checkpoint(&a.checkpoint)?;
    let meta = read_meta(&ckpt)?;
    let mut state = load_checkpoint(&ckpt)?;
    let side = state.config.image_size;
    let created_at = a
        .created_at
        .or_else(|| std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()))
        .unwrap_or_else(|| file_mtime(&ckpt.join(META_FILE)));

    let mut jobs = Vec::new();
    match &a.input {
        Some(dir) => {
            for rel in image_files(dir)? {
                let face = preprocess_face(&open_image(&dir.join(&rel))?, (side, side));
                let descriptor = rel.to_string_lossy().replace('\\', "/");
                jobs.push(Job {
                    rel: rel.with_extension("png"),
                    face,
                    source: SourceRef::External { descriptor },
                });
            }
        }
        None => {
            let root = Path::new(&manifest.root);
            require(root)?;
            for p in &manifest.pairs {
                let split = manifest.split_of(&p.key());
                let keep = match a.split {
                    SplitSel::All => true,
                    SplitSel::Train => split == Some(Split::Train),
                    SplitSel::Test => split == Some(Split::Test),
                };
                if !keep {
                    continue;
                }
                let face = preprocess_face(&open_image(&root.join(&p.face_path))?, (side, side));
                let rel = p
                    .face_path
                    .strip_prefix(&format!("{FACE_DIR}/"))
                    .unwrap_or(&p.face_path);
                jobs.push(Job {
                    rel: PathBuf::from(rel).with_extension("png"),
                    face,
                    source: SourceRef::Frame {
                        subject_id: p.subject_id.clone(),
                        sentence_id: p.sentence_id.clone(),
                        frame_index: p.frame_index,
                    },
                });
            }
        }
    }
    if jobs.is_empty() {
        return Err(CliError::Invalid("no input frames to translate".into()));
    }

    let mut rng = a.dropout.then(|| ChaCha8Rng::seed_from_u64(file.seed(a.common.seed)));
    create_dir(&a.common.out)?;
    for chunk in jobs.chunks(state.config.batch_size.max(1)) {
        let batch = batch_frames(chunk.iter().map(|j| &j.face))?;
        let out = translate(&mut state.generator, &batch, rng.as_mut())?;
        for (i, job) in chunk.iter().enumerate() {
            let png = encode_png(&frame_to_image(out.index_axis(ndarray::Axis(0), i))?)?;
            let record = ProvenanceRecord::new(
                meta.content_hash.clone(),
                job.source.clone(),
                manifest.consent_scope.clone(),
                created_at,
            );
            let tagged = tag_synthetic(&png, &record)?;
            write_atomic(&a.common.out.join(&job.rel), &tagged)?;
        }
    }
    println!(
        "generated={} model_hash={} out={}",
        jobs.len(),
        meta.content_hash,
        a.common.out.display()
    );
    Ok(())
}

fn extractor(kind: ExtractorArg, feature_size: usize) -> Box<dyn FeatureExtractor> {
    match kind {
        ExtractorArg::Identity => Box::new(IdentityExtractor {
            size: Some((feature_size, feature_size)),
        }),
        ExtractorArg::Inception => Box::new(UnavailableExtractor::inception()),
    }
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    require(&a.truth)?;
    let rels = image_files(&a.generated)?;
    if rels.is_empty() {
        return Err(CliError::Invalid(format!("no generated frames under {}", a.generated.display())));
    }
    let paths: Vec<PathBuf> = rels.iter().map(|r| a.generated.join(r)).collect();
    let records = require_tagged(&paths)?;

    let mut generated = Vec::with_capacity(paths.len());
    let mut truth = Vec::with_capacity(paths.len());
    for (rel, path) in rels.iter().zip(&paths) {
        let t = a.truth.join(rel);
        require(&t)?;
        let g = load_gray_frame(path)?;
        let (_, h, w) = g.dim();
        truth.push(preprocess_mri(&open_image(&t)?, (h, w)));
        generated.push(g);
    }

    let kind = a.extractor.or(file.evaluate.extractor).unwrap_or(ExtractorArg::Inception);
    let feature_size = a.feature_size.or(file.evaluate.feature_size).unwrap_or(8);
    let ssim = resolve_ssim(&a.ssim, &file);
    let report = evaluate_frames(&generated, &truth, &ssim, extractor(kind, feature_size).as_ref())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let model_hashes: std::collections::BTreeSet<&str> = records.iter().map(|r| r.model_hash.as_str()).collect();
    info!("generated frames come from {} model(s)", model_hashes.len());

    let path = a.common.out.join(METRICS_FILE);
    write_atomic(&path, report.to_json()?.as_bytes())?;
    let fid = report.fid.map_or_else(|| "null".to_string(), |v| format!("{v:.6}"));
    println!(
        "frames={} ssim_mean={:.6} fid={fid} embedding={} metrics={}",
        report.frame_count,
        report.ssim_mean,
        report.embedding_id,
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TriptychEntry {
    path: String,
    source: String,
    ground_truth: bool,
    model_hash: String,
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let bias = bias_report(&manifest);
    create_dir(&a.common.out)?;
    write_json(&a.common.out.join(BIAS_FILE), &bias)?;
    for w in &bias.warnings {
        eprintln!("warning: {w}");
    }

    let mut triptychs = Vec::new();
    if let Some(gen_dir) = &a.generated {
        let rels = image_files(gen_dir)?;
        let paths: Vec<PathBuf> = rels.iter().map(|r| gen_dir.join(r)).collect();
        let records = require_tagged(&paths)?;
        let root = Path::new(&manifest.root);
        let by_stem: BTreeMap<PathBuf, &str> = manifest
            .pairs
            .iter()
            .filter_map(|p| {
                let rel = p.face_path.strip_prefix(&format!("{FACE_DIR}/"))?;
                Some((PathBuf::from(rel).with_extension(""), p.face_path.as_str()))
            })
            .collect();
        let mri_for = |rel: &Path| {
            manifest
                .pairs
                .iter()
                .find(|p| by_stem.get(&rel.with_extension("")) == Some(&p.face_path.as_str()))
                .map(|p| root.join(&p.mri_path))
        };
        for ((rel, path), record) in rels.iter().zip(&paths).zip(&records) {
            let Some(face_rel) = by_stem.get(&rel.with_extension("")) else {
                warn!("{}: no matching face frame in the manifest; skipped", rel.display());
                continue;
            };
            let face = open_image(&root.join(face_rel))?;
            let generated = open_image(path)?;
            let truth = match mri_for(rel) {
                Some(p) if p.exists() => Some(open_image(&p)?),
                _ => {
                    let fallback = root.join(MRI_DIR).join(rel);
                    fallback.exists().then(|| open_image(&fallback)).transpose()?
                }
            };
            let img = render_triptych(&face, truth.as_ref(), &generated);
            let out = a.common.out.join(crate::commands::TRIPTYCH_SUBDIR).join(rel.with_extension("png"));
            let png = encode_png(&image::DynamicImage::ImageRgb8(img))?;
            write_atomic(&out, &png)?;
            triptychs.push(TriptychEntry {
                path: out.strip_prefix(&a.common.out).unwrap_or(&out).to_string_lossy().replace('\\', "/"),
                source: rel.to_string_lossy().replace('\\', "/"),
                ground_truth: truth.is_some(),
                model_hash: record.model_hash.clone(),
            });
        }
    }

    let metrics = match &a.metrics {
        Some(p) => {
            require(p)?;
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Some(serde_json::from_str::<serde_json::Value>(&text).map_err(|e| CliError::Config {
                path: p.clone(),
                reason: e.to_string(),
            })?)
        }
        None => None,
    };
    let doc = serde_json::json!({
        "manifest": a.manifest,
        "consent_scope": manifest.consent_scope,
        "pairs": manifest.pairs.len(),
        "train": manifest.count(Split::Train),
        "test": manifest.count(Split::Test),
        "bias": bias,
        "metrics": metrics,
        "triptychs": triptychs,
    });
    write_json(&a.common.out.join(REPORT_FILE), &doc)?;
    println!(
        "report={} triptychs={}",
        a.common.out.join(REPORT_FILE).display(),
        triptychs.len()
    );
    Ok(())
}
