mod oracles;

use std::collections::BTreeMap;

use e2icm_core::dataset::{ConsentScope, DatasetManifest, FramePair, Fps, PairRef, PermittedUse, Split};
use e2icm_core::model::{batch_frames, Mode, NetworkSpec};
use e2icm_core::train::*;
use e2icm_core::Error;

use oracles::synthetic_pair;

pub fn fixture(n: usize, side: usize, test: &[usize]) -> (DatasetManifest, Vec<FramePair>) {
    let frames: Vec<FramePair> = (0..n)
        .map(|i| {
            let (face, mri) = synthetic_pair(i as f64 * 1.3, side);
            FramePair {
                subject_id: "s00".into(),
                sentence_id: "t00".into(),
                frame_index: i,
                face,
                mri,
                source_fps: Fps::default(),
            }
        })
        .collect();
    let pairs: Vec<PairRef> = frames
        .iter()
        .map(|f| PairRef {
            subject_id: f.subject_id.clone(),
            sentence_id: f.sentence_id.clone(),
            frame_index: f.frame_index,
            face_path: format!("face/{}.png", f.frame_index),
            mri_path: format!("mri/{}.png", f.frame_index),
        })
        .collect();
    let splits: BTreeMap<String, Split> = frames
        .iter()
        .map(|f| (f.key(), if test.contains(&f.frame_index) { Split::Test } else { Split::Train }))
        .collect();
    let manifest = DatasetManifest {
        manifest_version: 1,
        root: ".".into(),
        fps: Fps::default(),
        created_at: 0,
        seed: 0,
        split_policy: None,
        consent_scope: ConsentScope::new("fixture", vec![PermittedUse::Training]),
        demographics: Default::default(),
        pairs,
        splits,
    };
    (manifest, frames)
}

fn cfg(epochs: usize, batch: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: batch,
        seed: 5,
        checkpoint_every: 2,
        image_size: 16,
        ..Default::default()
    }
}

#[test]
fn overfits_four_pairs() {
    let (m, frames) = fixture(4, 16, &[]);
    let spec = NetworkSpec::scaled(&[16, 32, 32, 32], &[16, 32]);
    let run = || train(&m, &frames, &spec, &cfg(200, 4), TrainOptions::default()).unwrap();
    let a = run();
    assert_eq!(a.log.records.len(), 200);
    let first = a.log.records[0].gen_l1;
    let last = a.log.records[199].gen_l1;
    println!("L1 step 1 {first:.5} step 200 {last:.5}");
    assert!(last <= 0.5 * first, "L1 {first} -> {last}");
    let b = run();
    assert!(a.log.same_losses(&b.log));
    assert_eq!(a.state.content_hash(), b.state.content_hash());
}

#[test]
fn step_count_and_checkpoints() {
    let (m, frames) = fixture(5, 16, &[4]);
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("log.csv");
    let out = train(
        &m,
        &frames,
        &NetworkSpec::tiny(),
        &TrainConfig { checkpoint_every: 2, ..cfg(3, 3) },
        TrainOptions {
            checkpoint_dir: Some(dir.path().join("ckpt")),
            log_path: Some(log_path.clone()),
            resume: None,
        },
    )
    .unwrap();
    // 4 train frames, batch 3 → 2 steps per epoch.
    assert_eq!(out.state.step, 6);
    assert_eq!(out.log.records.len(), 6);
    let names: Vec<_> = out.checkpoints.iter().map(|(p, _)| p.file_name().unwrap().to_owned()).collect();
    assert_eq!(names, ["epoch_0002", "epoch_0003"]);
    let csv = TrainingLog::read_csv(&log_path).unwrap();
    assert!(csv.same_losses(&out.log));
    assert_eq!(latest_checkpoint(&dir.path().join("ckpt")).unwrap(), out.checkpoints[1].0);
}

#[test]
fn resume_continues_identically() {
    let (m, frames) = fixture(4, 16, &[]);
    let spec = NetworkSpec::tiny();
    let full = train(&m, &frames, &spec, &cfg(4, 2), TrainOptions::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("ck");
    let part = train(
        &m,
        &frames,
        &spec,
        &cfg(2, 2),
        TrainOptions {
            checkpoint_dir: Some(ck.clone()),
            ..Default::default()
        },
    )
    .unwrap();
    let state = load_checkpoint(&part.checkpoints.last().unwrap().0).unwrap();
    let rest = train(
        &m,
        &frames,
        &spec,
        &cfg(4, 2),
        TrainOptions {
            resume: Some(state),
            ..Default::default()
        },
    )
    .unwrap();
    let mut stitched = part.log.clone();
    for r in rest.log.records {
        stitched.push(r);
    }
    assert!(stitched.same_losses(&full.log));
    assert_eq!(rest.state.content_hash(), full.state.content_hash());
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let (m, frames) = fixture(4, 16, &[]);
    let out = train(&m, &frames, &NetworkSpec::tiny(), &cfg(1, 2), TrainOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let hash = save_checkpoint(&out.state, dir.path()).unwrap();
    assert_eq!(hash, out.state.content_hash());
    let mut loaded = load_checkpoint(dir.path()).unwrap();
    let mut orig = out.state.clone();
    let x = batch_frames(frames.iter().map(|f| &f.face)).unwrap();
    for g in [&mut orig.generator, &mut loaded.generator] {
        g.mode = Mode::Inference;
    }
    let a = orig.generator.forward(&x, None).unwrap();
    let b = loaded.generator.forward(&x, None).unwrap();
    assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    assert_eq!(loaded.step, orig.step);
    assert_eq!(loaded.config, orig.config);
}

#[test]
fn hash_detects_any_flipped_parameter_byte() {
    let (m, frames) = fixture(4, 16, &[]);
    let out = train(&m, &frames, &NetworkSpec::tiny(), &cfg(1, 4), TrainOptions::default()).unwrap();
    let bytes = encode_tensors(&state_tensors(&out.state));
    let h = content_hash(&bytes);
    for i in (0..bytes.len()).step_by(97).chain([bytes.len() - 1]) {
        let mut b = bytes.clone();
        b[i] ^= 0x01;
        assert_ne!(content_hash(&b), h, "byte {i}");
    }
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&out.state, dir.path()).unwrap();
    let path = dir.path().join(TENSOR_FILE);
    let mut b = std::fs::read(&path).unwrap();
    let n = b.len();
    b[n - 3] ^= 0x80;
    std::fs::write(&path, b).unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(Error::CorruptCheckpoint { .. })));
}

#[test]
fn test_frames_never_train() {
    let (m, frames) = fixture(4, 16, &[0, 1, 2, 3]);
    let err = train(&m, &frames, &NetworkSpec::tiny(), &cfg(1, 2), TrainOptions::default()).unwrap_err();
    assert!(matches!(err, Error::EmptyTrainSplit));

    // Frames absent from the manifest are not trained on either.
    let (m, mut frames) = fixture(3, 16, &[]);
    frames.push(fixture(5, 16, &[]).1.remove(4));
    let out = train(&m, &frames, &NetworkSpec::tiny(), &cfg(1, 4), TrainOptions::default()).unwrap();
    assert_eq!(out.state.step, 1);
}

#[test]
fn invalid_config_rejected() {
    let (m, frames) = fixture(4, 16, &[]);
    let err = train(&m, &frames, &NetworkSpec::tiny(), &TrainConfig { epochs: 0, ..cfg(1, 2) }, TrainOptions::default())
        .unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)));
}
