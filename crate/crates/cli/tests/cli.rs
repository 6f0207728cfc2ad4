#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use e2icm_core::dataset::{ConsentScope, DatasetManifest, PermittedUse, Split};
use e2icm_core::provenance::{tag_file, verify_file, ProvenanceRecord, SourceRef};
use e2icm_core::train::read_meta;
use serde_json::Value;
use tempfile::TempDir;

const CONSENT: &str = "Participants consented to research use and synthetic generation";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_e2icm"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .expect("spawn e2icm")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// One subject, two sentences of five 16×16 frames each.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        oracles::write_corpus(&dir.path().join("corpus"), &[5, 5], 1, 16);
        Self { dir }
    }

    fn root(&self) -> PathBuf {
        self.dir.path().join("corpus")
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn ingest(&self, out: &str, permit: &str) -> String {
        ok(&[
            "ingest",
            "--root",
            s(&self.root()),
            "--consent",
            CONSENT,
            "--permit",
            permit,
            "--seed",
            "3",
            "--out",
            s(&self.path(out)),
        ])
    }

    fn manifest(&self, out: &str) -> PathBuf {
        self.path(out).join("manifest.json")
    }

    fn train(&self, manifest: &Path, out: &str, extra: &[&str]) -> String {
        let mut args = vec![
            "train",
            "--manifest",
            s(manifest),
            "--preset",
            "tiny",
            "--batch-size",
            "4",
            "--seed",
            "5",
            "--out",
        ];
        let out = self.path(out);
        args.push(s(&out));
        args.extend_from_slice(extra);
        ok(&args)
    }
}

const ALL_USES: &str = "training,evaluation,synthetic-generation";

#[test]
fn ingest_counts_split_and_is_deterministic() {
    let f = Fixture::new();
    let stdout = f.ingest("a", ALL_USES);
    assert!(stdout.contains("pairs=10 train=9 test=1"), "{stdout}");
    f.ingest("b", ALL_USES);
    let a = std::fs::read(f.manifest("a")).unwrap();
    let b = std::fs::read(f.manifest("b")).unwrap();
    assert_eq!(a, b);
    let m = DatasetManifest::load(&f.manifest("a")).unwrap();
    assert_eq!(m.count(Split::Test), 1);
    assert_eq!(m.consent_scope.statement, CONSENT);
}

#[test]
fn ingest_without_consent_exits_2() {
    let f = Fixture::new();
    let out = run(&["ingest", "--root", s(&f.root()), "--out", s(&f.path("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("consent"));
    assert!(!f.manifest("x").exists());
}

#[test]
fn missing_input_exits_2() {
    let f = Fixture::new();
    let out = run(&["ingest", "--root", s(&f.path("nope")), "--consent", CONSENT, "--out", s(&f.path("x"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_dry_run_echoes_defaults() {
    let f = Fixture::new();
    f.ingest("d", ALL_USES);
    let out = ok(&["train", "--manifest", s(&f.manifest("d")), "--dry-run", "--out", s(&f.path("t"))]);
    assert_eq!(
        out.lines().next().unwrap(),
        "alpha=0.0002 beta1=0.5 beta2=0.999 epsilon=1e-08 batch_size=16 epochs=200 lambda_l1=100 seed=0 checkpoint_every=10 image_size=256"
    );
    assert!(!f.path("t").join("checkpoints").exists());
}

#[test]
fn flags_override_config_file() {
    let f = Fixture::new();
    f.ingest("d", ALL_USES);
    let cfg = f.path("cfg.toml");
    std::fs::write(&cfg, "seed = 9\n[train]\nepochs = 7\nbatch_size = 3\n[model]\npreset = \"tiny\"\n").unwrap();
    let out = ok(&[
        "train",
        "--manifest",
        s(&f.manifest("d")),
        "--config",
        s(&cfg),
        "--epochs",
        "5",
        "--dry-run",
        "--out",
        s(&f.path("t")),
    ]);
    let line = out.lines().next().unwrap();
    assert!(line.contains("epochs=5 "), "{line}");
    assert!(line.contains("batch_size=3 "), "{line}");
    assert!(line.contains("seed=9 "), "{line}");
    assert!(line.ends_with("image_size=16"), "{line}");

    std::fs::write(&cfg, "[train]\nepoch = 7\n").unwrap();
    let bad = run(&["train", "--manifest", s(&f.manifest("d")), "--config", s(&cfg), "--dry-run", "--out", s(&f.path("t"))]);
    assert_eq!(bad.status.code(), Some(2));
}

fn checkpoint_hash(dir: &Path) -> String {
    read_meta(dir).unwrap().content_hash
}

#[test]
fn resume_matches_uninterrupted_run() {
    let f = Fixture::new();
    f.ingest("d", ALL_USES);
    let m = f.manifest("d");
    f.train(&m, "straight", &["--epochs", "2"]);
    f.train(&m, "split", &["--epochs", "1"]);
    assert!(f.path("split/checkpoints/epoch_0001").join("meta.json").exists());
    f.train(&m, "split", &["--epochs", "2", "--resume"]);
    assert_eq!(
        checkpoint_hash(&f.path("straight/checkpoints/epoch_0002")),
        checkpoint_hash(&f.path("split/checkpoints/epoch_0002"))
    );
    let log = std::fs::read_to_string(f.path("split/train_log.csv")).unwrap();
    // 9 train frames at batch 4: 3 steps per epoch.
    assert_eq!(log.lines().count(), 1 + 6);
}

#[test]
fn generate_tags_every_output_and_evaluate_gates() {
    let f = Fixture::new();
    f.ingest("d", ALL_USES);
    let m = f.manifest("d");
    f.train(&m, "t", &["--epochs", "1"]);
    let ckpt = f.path("t/checkpoints/epoch_0001");
    let hash = checkpoint_hash(&ckpt);

    let gen = |out: &str| {
        ok(&[
            "generate",
            "--checkpoint",
            s(&f.path("t")),
            "--manifest",
            s(&m),
            "--split",
            "all",
            "--created-at",
            "1700000000",
            "--out",
            s(&f.path(out)),
        ])
    };
    let stdout = gen("g1");
    assert!(stdout.contains("generated=10"), "{stdout}");
    gen("g2");
    let files = e2icm_cli::commands::image_files(&f.path("g1")).unwrap();
    assert_eq!(files.len(), 10);
    for rel in &files {
        let rec = verify_file(&f.path("g1").join(rel)).unwrap();
        assert!(rec.synthetic);
        assert_eq!(rec.model_hash, hash);
        assert_eq!(rec.consent_scope.statement, CONSENT);
        assert!(matches!(rec.source_ref, SourceRef::Frame { .. }));
        let a = std::fs::read(f.path("g1").join(rel)).unwrap();
        let b = std::fs::read(f.path("g2").join(rel)).unwrap();
        assert_eq!(a, b, "{}", rel.display());
    }

    // Evaluate generated frames against the MRI tree.
    let out = ok(&[
        "evaluate",
        "--generated",
        s(&f.path("g1")),
        "--truth",
        s(&f.root().join("mri")),
        "--extractor",
        "identity",
        "--feature-size",
        "4",
        "--out",
        s(&f.path("e")),
    ]);
    assert!(out.contains("frames=10"), "{out}");
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(f.path("e/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["frame_count"], 10);
    assert_eq!(metrics["ssim_per_frame"].as_array().unwrap().len(), 10);

    // One untagged file poisons the batch.
    let stray = f.path("g1/s00/t00/99999.png");
    std::fs::copy(f.root().join("mri/s00/t00/00000.png"), &stray).unwrap();
    let refused = run(&[
        "evaluate",
        "--generated",
        s(&f.path("g1")),
        "--truth",
        s(&f.root().join("mri")),
        "--out",
        s(&f.path("e2")),
    ]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("99999.png"));
    assert!(!f.path("e2/metrics.json").exists());
    std::fs::remove_file(&stray).unwrap();

    // Triptychs for every generated frame, all with ground truth.
    let out = ok(&[
        "report",
        "--manifest",
        s(&m),
        "--generated",
        s(&f.path("g1")),
        "--metrics",
        s(&f.path("e/metrics.json")),
        "--out",
        s(&f.path("r")),
    ]);
    assert!(out.contains("triptychs=10"), "{out}");
    let t = image::open(f.path("r/triptychs/s00/t01/00002.png")).unwrap();
    assert_eq!((t.width(), t.height()), (48, 16 + e2icm_cli::triptych::CAPTION_HEIGHT));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(f.path("r/report.json")).unwrap()).unwrap();
    assert_eq!(report["metrics"]["frame_count"], 10);
    assert!(report["triptychs"].as_array().unwrap().iter().all(|e| e["ground_truth"] == true));
}

#[test]
fn evaluate_identical_frames_scores_perfectly() {
    let f = Fixture::new();
    let gen = f.path("copies");
    let scope = ConsentScope::new(CONSENT, vec![PermittedUse::SyntheticGeneration]);
    let mut n = 0;
    for rel in e2icm_cli::commands::image_files(&f.root().join("mri")).unwrap() {
        let dst = gen.join(&rel);
        std::fs::create_dir_all(dst.parent().unwrap()).unwrap();
        std::fs::copy(f.root().join("mri").join(&rel), &dst).unwrap();
        let rec = ProvenanceRecord::new(
            "0".repeat(64),
            SourceRef::External {
                descriptor: rel.display().to_string(),
            },
            scope.clone(),
            0,
        );
        tag_file(&dst, &rec).unwrap();
        n += 1;
    }
    ok(&[
        "evaluate",
        "--generated",
        s(&gen),
        "--truth",
        s(&f.root().join("mri")),
        "--extractor",
        "identity",
        "--out",
        s(&f.path("e")),
    ]);
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(f.path("e/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["frame_count"], n);
    assert!((metrics["ssim_mean"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(metrics["fid"].as_f64().unwrap().abs() <= 1e-6);

    // The default extractor has no weights: FID is null with a warning.
    ok(&["evaluate", "--generated", s(&gen), "--truth", s(&f.root().join("mri")), "--out", s(&f.path("e3"))]);
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(f.path("e3/metrics.json")).unwrap()).unwrap();
    assert!(metrics["fid"].is_null());
    assert!(!metrics["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn generation_requires_synthetic_generation_consent() {
    let f = Fixture::new();
    f.ingest("d", "training,evaluation");
    let m = f.manifest("d");
    f.train(&m, "t", &["--epochs", "1"]);
    let out = run(&["generate", "--checkpoint", s(&f.path("t")), "--manifest", s(&m), "--out", s(&f.path("g"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("synthetic-generation"));
    assert!(!f.path("g").exists());
}

#[test]
fn external_inputs_and_missing_truth_fall_back_to_two_panels() {
    let f = Fixture::new();
    f.ingest("d", ALL_USES);
    let m = f.manifest("d");
    f.train(&m, "t", &["--epochs", "1"]);
    let input = f.path("faces");
    std::fs::create_dir_all(&input).unwrap();
    std::fs::copy(f.root().join("face/s00/t00/00000.png"), input.join("clip.png")).unwrap();
    ok(&[
        "generate",
        "--checkpoint",
        s(&f.path("t/checkpoints")),
        "--manifest",
        s(&m),
        "--input",
        s(&input),
        "--out",
        s(&f.path("g")),
    ]);
    let rec = verify_file(&f.path("g/clip.png")).unwrap();
    assert_eq!(
        rec.source_ref,
        SourceRef::External {
            descriptor: "clip.png".into()
        }
    );

    // A manifest frame whose MRI file has gone missing.
    ok(&[
        "generate",
        "--checkpoint",
        s(&f.path("t")),
        "--manifest",
        s(&m),
        "--split",
        "all",
        "--created-at",
        "1",
        "--out",
        s(&f.path("g2")),
    ]);
    std::fs::remove_file(f.root().join("mri/s00/t00/00000.png")).unwrap();
    ok(&["report", "--manifest", s(&m), "--generated", s(&f.path("g2")), "--out", s(&f.path("r"))]);
    let t = image::open(f.path("r/triptychs/s00/t00/00000.png")).unwrap();
    assert_eq!(t.width(), 32);
    let t = image::open(f.path("r/triptychs/s00/t00/00001.png")).unwrap();
    assert_eq!(t.width(), 48);
}
