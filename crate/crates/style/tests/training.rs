#[path = "support/training.rs"]
mod training;

use std::path::PathBuf;

use rand::Rng;

use thermoscope_core::imageio::{load_rgb, save_png};
use thermoscope_core::{synth, Spectrum, Split};
use thermoscope_style::loss::content_loss;
use thermoscope_style::stylize::stylized_file_name;
use thermoscope_style::{
    extract_features, stylize_dataset, stylize_image, train_msgnet, train_on_images, Checkpoint, Generator,
    LossNetwork, StyleError, StyleTrainConfig, TrainLog,
};
use thermoscope_tensor::Tensor;
use training::*;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn single_pair_overfit_converges() {
    let history = single_pair_run(200, 64, 0);
    assert_eq!(history.len(), 200);
    let (first, last) = (history[0].total, history[199].total);
    assert!(last < 0.1 * first, "{last} vs {first}");
    let tenth = history.len() / 10;
    let head = median(history[..tenth].iter().map(|r| r.total).collect());
    let tail = median(history[history.len() - tenth..].iter().map(|r| r.total).collect());
    assert!(tail < head);
}

#[test]
fn reruns_are_bitwise_identical() {
    let a = single_pair_run(15, 32, 7);
    let b = single_pair_run(15, 32, 7);
    assert_eq!(a, b);
    let c = single_pair_run(15, 32, 8);
    assert_ne!(a, c);
}

fn write_images(dir: &std::path::Path, n: usize, side: u32, offset: u64) -> Vec<PathBuf> {
    (0..n)
        .map(|i| {
            let (visible, _) = scene_pair(offset + i as u64, side);
            let p = dir.join(format!("img_{offset}_{i}.png"));
            save_png(&p, &visible).unwrap();
            p
        })
        .collect()
}

#[test]
fn file_training_counts_iterations_cycles_sizes_and_logs() {
    let dir = tempfile::tempdir().unwrap();
    let mut content = write_images(dir.path(), 9, 24, 0);
    let broken = dir.path().join("broken.png");
    std::fs::write(&broken, b"not an image").unwrap();
    content.push(broken.clone());
    content.push(write_images(dir.path(), 1, 24, 50).remove(0));
    let styles = write_images(dir.path(), 2, 24, 100);
    let config = StyleTrainConfig {
        style_sizes: vec![16, 24, 32],
        content_size: 16,
        epochs: 2,
        batch_size: 4,
        deterministic: true,
        ..Default::default()
    };
    let net = LossNetwork::random(0);
    let log_path = dir.path().join("train.jsonl");
    let mut log = TrainLog::create(&log_path).unwrap();
    let out = train_msgnet(&content, &styles, &config, &net, Some(&mut log)).unwrap();
    drop(log);

    assert_eq!(out.skipped, vec![broken]);
    assert_eq!(out.history.len(), config.iterations(10));
    assert_eq!(out.history.len(), 6);
    let sizes: Vec<usize> = out.history.iter().map(|r| r.style_size).collect();
    assert_eq!(sizes, vec![16, 24, 32, 16, 24, 32]);
    assert_eq!(TrainLog::read(&log_path).unwrap(), out.history);
    let first = std::fs::read_to_string(&log_path).unwrap();
    let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    for key in ["iter", "total", "content", "style", "tv", "style_size", "t"] {
        assert!(line.get(key).is_some(), "{key}");
    }
}

#[test]
fn nan_aborts_with_the_iteration() {
    let (c, s) = scene_pair(0, 16);
    let mut config = single_pair_config(5, 16);
    config.weights.lambda_c = f64::MAX;
    let err = train_on_images(&[c], &[s], &config, &LossNetwork::random(0), None).unwrap_err();
    match &err {
        StyleError::NonFiniteLoss { iteration, .. } => assert_eq!(*iteration, 0),
        e => panic!("unexpected {e}"),
    }
    assert!(err.to_string().contains("iteration 0"));
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let (c, s) = scene_pair(1, 16);
    let config = single_pair_config(3, 16);
    let (generator, history) = train_on_images(std::slice::from_ref(&c), std::slice::from_ref(&s), &config, &LossNetwork::random(0), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gen.safetensors");
    let ckpt = Checkpoint {
        generator,
        config: config.clone(),
        epoch: 3,
        history,
    };
    ckpt.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.config, config);
    assert_eq!(back.epoch, 3);
    assert_eq!(back.history, ckpt.history);
    for ((na, a), (nb, b)) in ckpt.generator.params().iter().zip(back.generator.params().iter()) {
        assert_eq!(na, nb);
        assert_eq!(a.data(), b.data());
    }
    let a = stylize_image(&ckpt.generator, &c, &s, None).unwrap();
    let b = stylize_image(&back.generator, &c, &s, None).unwrap();
    assert_eq!(a.data, b.data);

    std::fs::write(&path, b"garbage").unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(StyleError::Checkpoint { .. })));
}

#[test]
fn stylize_keeps_shape_range_and_is_deterministic() {
    let g = Generator::new(2);
    let (_, style) = scene_pair(3, 32);
    for (w, h) in [(256, 256), (320, 256), (37, 21)] {
        let (content, _) = scene_pair(4, 256);
        let content = content.resized(w, h).unwrap();
        let out = stylize_image(&g, &content, &style, None).unwrap();
        assert_eq!((out.channels, out.height, out.width), (3, h, w));
        assert!(out.data.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(out.data, stylize_image(&g, &content, &style, None).unwrap().data);
    }
}

#[test]
fn trained_output_preserves_content_better_than_noise() {
    let (c, s) = scene_pair(5, 32);
    let net = LossNetwork::random(5);
    let (generator, _) = train_on_images(std::slice::from_ref(&c), std::slice::from_ref(&s), &single_pair_config(40, 32), &net, None).unwrap();
    let styled = stylize_image(&generator, &c, &s, None).unwrap();
    let tensor = |img: &thermoscope_core::PlanarImage| Tensor::new(img.expand_rgb().unwrap().data, &[1, 3, 32, 32]).unwrap();
    let fc = extract_features(&tensor(&c), &net).unwrap().content().detach();
    let loss_of = |img| content_loss(extract_features(&tensor(img), &net).unwrap().content(), &fc).unwrap().item().unwrap();
    let mut rng = thermoscope_core::seed::rng(0, "noise");
    let noise = thermoscope_core::PlanarImage::new(3, 32, 32, (0..3 * 32 * 32).map(|_| rng.random_range(0.0..1.0)).collect())
        .unwrap();
    assert!(loss_of(&styled) < loss_of(&noise));
}

#[test]
fn stylized_dataset_keeps_ids_annotations_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let spec = synth::SynthSpec {
        frames: 4,
        width: 32,
        height: 32,
        ..Default::default()
    };
    let manifest = synth::generate(&spec, &dir.path().join("data")).unwrap();
    let visible = manifest.filter_spectrum(Spectrum::Visible);
    let styles = vec![scene_pair(9, 32).1, scene_pair(10, 32).1];
    let g = Generator::new(0);
    let out_dir = dir.path().join("styled");
    let styled = stylize_dataset(&g, &visible, &styles, &out_dir, 3, None).unwrap();
    assert_eq!(styled.records.len(), visible.records.len());
    for (a, b) in visible.records.iter().zip(&styled.records) {
        assert_eq!(a.image_id, b.image_id);
        assert_eq!(a.annotations, b.annotations);
        assert_eq!(a.spectrum, b.spectrum);
        assert_eq!(b.path, out_dir.join(stylized_file_name(&a.image_id)));
        let img = load_rgb(&b.path).unwrap();
        assert_eq!((img.width as u32, img.height as u32), (a.width, a.height));
    }
    assert_eq!(styled.split, visible.split);
    assert!(styled.count(Split::Train) + styled.count(Split::Val) == styled.records.len());
    styled.validate().unwrap();

    let again = stylize_dataset(&g, &visible, &styles, &dir.path().join("styled2"), 3, None).unwrap();
    for (a, b) in styled.records.iter().zip(&again.records) {
        assert_eq!(std::fs::read(&a.path).unwrap(), std::fs::read(&b.path).unwrap());
    }

    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, b"").unwrap();
    let err = stylize_dataset(&g, &visible, &styles, &blocker, 3, None).unwrap_err();
    assert!(err.to_string().contains("blocker"), "{err}");
}
