use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetManifest;

/// Bucket for subjects that declare no value for an attribute.
pub const UNDECLARED: &str = "undeclared";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCount {
    pub frames: usize,
    pub subjects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub total_frames: usize,
    pub total_subjects: usize,
    /// attribute → value → counts. Within each attribute the counts sum to
    /// the totals.
    pub attributes: BTreeMap<String, BTreeMap<String, GroupCount>>,
    /// Subjects with no demographic entry at all.
    pub undeclared: GroupCount,
    pub warnings: Vec<String>,
}

pub fn bias_report(manifest: &DatasetManifest) -> BiasReport {
    let mut frames_per_subject: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &manifest.pairs {
        *frames_per_subject.entry(&p.subject_id).or_default() += 1;
    }
    let names: BTreeSet<&String> = frames_per_subject
        .keys()
        .filter_map(|s| manifest.demographics.get(*s))
        .flat_map(|attrs| attrs.keys())
        .collect();

    let mut attributes: BTreeMap<String, BTreeMap<String, GroupCount>> = BTreeMap::new();
    let mut undeclared = GroupCount::default();
    for (&subject, &frames) in &frames_per_subject {
        let attrs = manifest.demographics.get(subject);
        if attrs.is_none_or(|a| a.is_empty()) {
            undeclared.frames += frames;
            undeclared.subjects += 1;
        }
        for &name in &names {
            let value = attrs
                .and_then(|a| a.get(name))
                .map_or(UNDECLARED, String::as_str);
            let g = attributes
                .entry(name.clone())
                .or_default()
                .entry(value.to_string())
                .or_default();
            g.frames += frames;
            g.subjects += 1;
        }
    }

    let total_subjects = frames_per_subject.len();
    let mut warnings = Vec::new();
    if names.is_empty() {
        warnings.push(format!(
            "no demographic attributes declared; all {} frames are {UNDECLARED}",
            manifest.pairs.len()
        ));
    } else if undeclared.subjects > 0 {
        warnings.push(format!(
            "{} of {total_subjects} subjects declare no demographic attributes",
            undeclared.subjects
        ));
    }
    for (name, values) in &attributes {
        if let [(value, g)] = values.iter().collect::<Vec<_>>()[..] {
            if value != UNDECLARED && g.subjects == total_subjects {
                warnings.push(format!(
                    "single-group coverage for {name}: all {total_subjects} subjects are {value:?}"
                ));
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    BiasReport {
        total_frames: manifest.pairs.len(),
        total_subjects,
        attributes,
        undeclared,
        warnings,
    }
}
