use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{DataError, DatasetManifest, Result, Split};
use crate::seed;

/// How to split a dataset that ships without split files.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFallback {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitFallback {
    fn default() -> Self {
        SplitFallback {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Seeded train/val split.
///
/// Paired visible/thermal records are split as units so both captures of a
/// frame land on the same side; for unpaired manifests the number of train
/// records is `round(train_fraction * records)`.
pub fn make_split(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::Split(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if manifest.records.is_empty() {
        return Err(DataError::Split(format!("manifest `{}` is empty", manifest.name)));
    }

    let mut units: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in &manifest.records {
        let key = r.pair_key.as_deref().unwrap_or(&r.image_id);
        units.entry(key).or_default().push(&r.image_id);
    }
    let mut keys: Vec<&str> = units.keys().copied().collect();
    keys.shuffle(&mut seed::rng(seed, "split"));
    let n_train = (train_fraction * keys.len() as f64).round() as usize;

    let mut out = manifest.clone();
    out.split.clear();
    for (i, key) in keys.iter().enumerate() {
        let side = if i < n_train { Split::Train } else { Split::Val };
        for id in &units[key] {
            out.split.insert(id.to_string(), side);
        }
    }
    Ok(out)
}
