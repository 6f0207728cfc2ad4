use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    PerFrameRandom,
    /// Whole sentences go to test; avoids temporally adjacent frames
    /// straddling the split.
    PerSentenceHoldout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPolicy {
    pub kind: SplitKind,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self {
            kind: SplitKind::PerFrameRandom,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

/// `round(fraction × total)`, lifted to 1 and capped at `total − 1` so both
/// sides stay non-empty.
pub fn target_test_count(total: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidTestFraction(fraction));
    }
    if total < 2 {
        return Err(Error::DegenerateSplit {
            total,
            test: 0,
            train: total,
        });
    }
    Ok(((fraction * total as f64).round() as usize).clamp(1, total - 1))
}

pub fn split_dataset(manifest: &DatasetManifest, policy: &SplitPolicy) -> Result<DatasetManifest> {
    let total = manifest.pairs.len();
    let target = target_test_count(total, policy.test_fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);

    let mut splits: BTreeMap<String, Split> = manifest
        .pairs
        .iter()
        .map(|p| (p.key(), Split::Train))
        .collect();

    match policy.kind {
        SplitKind::PerFrameRandom => {
            let mut order: Vec<usize> = (0..total).collect();
            order.shuffle(&mut rng);
            for &i in &order[..target] {
                splits.insert(manifest.pairs[i].key(), Split::Test);
            }
        }
        SplitKind::PerSentenceHoldout => {
            let mut groups = manifest.sentence_counts();
            groups.shuffle(&mut rng);
            let mut held = Vec::new();
            let mut count = 0;
            for (key, n) in groups {
                if count >= target {
                    break;
                }
                count += n;
                held.push(key);
            }
            if count >= total {
                return Err(Error::DegenerateSplit {
                    total,
                    test: count,
                    train: 0,
                });
            }
            for p in &manifest.pairs {
                if held
                    .iter()
                    .any(|(s, t)| *s == p.subject_id && *t == p.sentence_id)
                {
                    splits.insert(p.key(), Split::Test);
                }
            }
        }
    }

    let mut out = manifest.clone();
    out.splits = splits;
    out.seed = policy.seed;
    out.split_policy = Some(*policy);
    Ok(out)
}
