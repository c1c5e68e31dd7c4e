//! Synthetic paired visible/thermal corpus with a deliberate domain shift.
//!
//! Every frame places one or more shapes: a wide filled rectangle (car), a
//! tall filled rectangle (person) and a square ring (bicycle). The visible
//! capture draws them dark on a bright, colored, striped background; the
//! thermal capture draws the same geometry bright on a dark, grainy, gray
//! background.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{
    make_split, BoundingBox, DataError, DatasetManifest, LabeledImage, ObjectAnnotation, Spectrum, FLIR_CLASSES,
};
use crate::imageio::{save_png, PlanarImage};
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub max_objects: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            frames: 20,
            width: 64,
            height: 64,
            max_objects: 2,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Nominal `(width, height)` of each class as a fraction of the image side.
fn nominal_extent(label: &str) -> (f64, f64) {
    match label {
        "car" => (0.36, 0.18),
        "person" => (0.14, 0.36),
        _ => (0.26, 0.26),
    }
}

/// Random non-overlapping layout of at least one object.
pub fn sample_layout(rng: &mut ChaCha8Rng, width: u32, height: u32, max_objects: usize) -> Vec<ObjectAnnotation> {
    let side = width.min(height) as f64;
    let n = rng.random_range(1..=max_objects.max(1));
    let mut out: Vec<ObjectAnnotation> = Vec::with_capacity(n);
    for _ in 0..n {
        for _attempt in 0..50 {
            let label = FLIR_CLASSES[rng.random_range(0..FLIR_CLASSES.len())];
            let (fw, fh) = nominal_extent(label);
            let jitter = rng.random_range(0.85..1.15);
            let w = (fw * side * jitter).round().max(4.0);
            let h = (fh * side * jitter).round().max(4.0);
            if w >= width as f64 || h >= height as f64 {
                continue;
            }
            let x = rng.random_range(0..=(width as f64 - w) as u32) as f64;
            let y = rng.random_range(0..=(height as f64 - h) as u32) as f64;
            let bbox = BoundingBox::new(x, y, x + w, y + h).expect("positive extent");
            let separated = out.iter().all(|o| {
                bbox.x_max + 1.0 < o.bbox.x_min
                    || o.bbox.x_max + 1.0 < bbox.x_min
                    || bbox.y_max + 1.0 < o.bbox.y_min
                    || o.bbox.y_max + 1.0 < bbox.y_min
            });
            if separated {
                out.push(ObjectAnnotation::new(bbox, label));
                break;
            }
        }
    }
    out
}

/// Pixels covered by the shape of `obj`.
fn covers(obj: &ObjectAnnotation, x: f64, y: f64) -> bool {
    let b = &obj.bbox;
    if x < b.x_min || x >= b.x_max || y < b.y_min || y >= b.y_max {
        return false;
    }
    if obj.label != "bicycle" {
        return true;
    }
    let t = (b.width().min(b.height()) * 0.25).max(1.0);
    x < b.x_min + t || x >= b.x_max - t || y < b.y_min + t || y >= b.y_max - t
}

pub fn render(objects: &[ObjectAnnotation], spectrum: Spectrum, width: u32, height: u32, rng: &mut ChaCha8Rng) -> PlanarImage {
    let (w, h) = (width as usize, height as usize);
    match spectrum {
        Spectrum::Thermal => {
            let bg = rng.random_range(0.08..0.22);
            let hot: Vec<f64> = objects.iter().map(|_| rng.random_range(0.72..0.95)).collect();
            let mut img = PlanarImage::filled(1, h, w, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let base = objects
                        .iter()
                        .zip(&hot)
                        .find(|(o, _)| covers(o, px, py))
                        .map_or(bg, |(_, v)| *v);
                    img.set(0, y, x, (base + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0));
                }
            }
            img
        }
        Spectrum::Visible => {
            let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.45..0.95));
            let period = rng.random_range(5.0..11.0);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let slope = rng.random_range(-0.15..0.15);
            let paint: Vec<[f64; 3]> = objects
                .iter()
                .map(|_| std::array::from_fn(|_| rng.random_range(0.03..0.3)))
                .collect();
            let mut img = PlanarImage::filled(3, h, w, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let stripe = 0.08 * ((px + py) / period * std::f64::consts::TAU + phase).sin();
                    let ramp = slope * (px / w as f64 - 0.5);
                    let obj = objects.iter().zip(&paint).find(|(o, _)| covers(o, px, py));
                    for c in 0..3 {
                        let v = match obj {
                            Some((_, p)) => p[c],
                            None => base[c] + stripe + ramp,
                        };
                        img.set(c, y, x, (v + rng.random_range(-0.03..0.03)).clamp(0.0, 1.0));
                    }
                }
            }
            img
        }
    }
}

/// Writes `visible/` and `thermal/` PNGs plus `manifest.json` under
/// `out_dir` and returns the paired manifest with a seeded split.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest, DataError> {
    if spec.frames == 0 {
        return Err(DataError::Split("synthetic corpus needs at least one frame".into()));
    }
    let mut manifest = DatasetManifest::new("synthetic", FLIR_CLASSES.iter().map(|s| s.to_string()).collect());
    let mut layout_rng = seed::rng(spec.seed, "synth-layout");
    let mut pixel_rng = seed::rng(spec.seed, "synth-pixels");
    for spectrum in [Spectrum::Visible, Spectrum::Thermal] {
        let dir = out_dir.join(spectrum.as_str());
        std::fs::create_dir_all(&dir).map_err(|e| DataError::io(&dir, e))?;
    }
    for i in 0..spec.frames {
        let key = format!("frame_{i:04}");
        let objects = sample_layout(&mut layout_rng, spec.width, spec.height, spec.max_objects);
        for spectrum in [Spectrum::Visible, Spectrum::Thermal] {
            let img = render(&objects, spectrum, spec.width, spec.height, &mut pixel_rng);
            let path = out_dir.join(spectrum.as_str()).join(format!("{key}.png"));
            save_png(&path, &img).map_err(|e| DataError::Parse {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            manifest.records.push(LabeledImage {
                image_id: format!("{key}/{spectrum}"),
                path,
                width: spec.width,
                height: spec.height,
                spectrum,
                annotations: objects.clone(),
                pair_key: Some(key.clone()),
            });
        }
    }
    let manifest = make_split(&manifest, spec.train_fraction, spec.seed)?;
    manifest.validate()?;
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
