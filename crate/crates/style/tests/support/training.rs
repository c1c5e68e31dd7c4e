//! Small deterministic training fixtures.

use thermoscope_core::{seed, synth, PlanarImage, Spectrum};
use thermoscope_style::{train_on_images, LossNetwork, LossRecord, StyleTrainConfig};

/// Visible frame and thermal frame of the same synthetic scene.
pub fn scene_pair(seed: u64, side: u32) -> (PlanarImage, PlanarImage) {
    let mut rng = seed::rng(seed, "scene");
    let objects = synth::sample_layout(&mut rng, side, side, 2);
    let visible = synth::render(&objects, Spectrum::Visible, side, side, &mut rng);
    let thermal = synth::render(&objects, Spectrum::Thermal, side, side, &mut rng);
    (visible, thermal.expand_rgb().unwrap())
}

pub fn single_pair_config(iterations: usize, side: usize) -> StyleTrainConfig {
    StyleTrainConfig {
        style_sizes: vec![side],
        content_size: side,
        epochs: iterations,
        batch_size: 1,
        deterministic: true,
        ..Default::default()
    }
}

/// Overfits one visible/thermal pair for `iterations` steps.
pub fn single_pair_run(iterations: usize, side: usize, seed: u64) -> Vec<LossRecord> {
    let (content, style) = scene_pair(seed, side as u32);
    let net = LossNetwork::random(seed);
    let config = StyleTrainConfig {
        seed,
        ..single_pair_config(iterations, side)
    };
    train_on_images(&[content], &[style], &config, &net, None).unwrap().1
}
