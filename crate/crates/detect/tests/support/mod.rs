#![allow(dead_code)]

use std::path::Path;

use thermoscope_core::{synth, DatasetManifest, Spectrum, Split};
use thermoscope_detect::{register_detector, Architecture, Backbone, Detector, DetectorSpec, Protocol};

pub fn classes() -> Vec<String> {
    vec!["car".into(), "bicycle".into(), "person".into()]
}

pub fn mini_spec(epochs: usize, seed: u64) -> DetectorSpec {
    let mut spec =
        DetectorSpec::defaults(Architecture::ReferenceMini, Backbone::Mini, classes(), Protocol::Baseline).unwrap();
    spec.epochs = epochs;
    spec.seed = seed;
    spec
}

pub fn mini(epochs: usize, seed: u64) -> Detector {
    register_detector(mini_spec(epochs, seed)).unwrap()
}

/// Thermal half of a synthetic paired corpus with `frames` frames.
pub fn thermal_corpus(dir: &Path, frames: usize, seed: u64) -> DatasetManifest {
    let spec = synth::SynthSpec {
        frames,
        seed,
        ..Default::default()
    };
    synth::generate(&spec, dir).unwrap().filter_spectrum(Spectrum::Thermal)
}

/// The same records, all assigned to `split`.
pub fn all_in(manifest: &DatasetManifest, split: Split) -> DatasetManifest {
    let mut m = manifest.clone();
    for v in m.split.values_mut() {
        *v = split;
    }
    m
}

/// The first `n` records, all in the train split.
pub fn first_n_train(manifest: &DatasetManifest, n: usize) -> DatasetManifest {
    let mut m = all_in(manifest, Split::Train);
    m.records.truncate(n);
    let keep: Vec<String> = m.records.iter().map(|r| r.image_id.clone()).collect();
    m.split.retain(|k, _| keep.contains(k));
    m
}
