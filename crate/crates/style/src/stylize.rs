//! Applying a trained generator to single images and whole datasets.

use std::path::{Path, PathBuf};

use rand::Rng;
use thermoscope_core::imageio::{load_rgb, save_png};
use thermoscope_core::{seed, DatasetManifest, PlanarImage};

use crate::error::{Result, StyleError};
use crate::features::{batch_tensor, tensor_image};
use crate::generator::{compatible_size, Generator};

/// Stylizes `content` with `style` and returns an RGB image of the content's
/// size. Inputs are resampled to generator-compatible sizes internally; a
/// `style_size` resizes the style to that square side first.
pub fn stylize_image(
    generator: &Generator,
    content: &PlanarImage,
    style: &PlanarImage,
    style_size: Option<usize>,
) -> Result<PlanarImage> {
    let (sh, sw) = match style_size {
        Some(s) => compatible_size(s, s),
        None => compatible_size(style.height, style.width),
    };
    let mut g = generator.clone();
    g.set_style(&batch_tensor(&[&style.resized(sw, sh)?])?)?;
    let (ch, cw) = compatible_size(content.height, content.width);
    let x = batch_tensor(&[&content.resized(cw, ch)?])?;
    let y = tensor_image(&g.forward(&x)?, 0)?;
    Ok(y.resized(content.width, content.height)?)
}

/// File name for a stylized record; `/` in ids is flattened.
pub fn stylized_file_name(image_id: &str) -> String {
    format!("{}.png", image_id.replace('/', "__"))
}

/// Stylizes every record of `manifest` with a seeded choice among `styles`,
/// writes PNGs under `out_dir` and returns the manifest of the result.
///
/// Image ids, annotations, spectra, pair keys and the split are carried over
/// unchanged; only paths differ.
pub fn stylize_dataset(
    generator: &Generator,
    manifest: &DatasetManifest,
    styles: &[PlanarImage],
    out_dir: &Path,
    seed: u64,
    style_size: Option<usize>,
) -> Result<DatasetManifest> {
    if styles.is_empty() {
        return Err(StyleError::Config("no style images given".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|source| StyleError::Write {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut rng = seed::rng(seed, "stylize");
    let mut out = manifest.clone();
    out.name = format!("{}-stylized", manifest.name);
    for record in &mut out.records {
        let s = rng.random_range(0..styles.len());
        let content = load_rgb(&record.path)?;
        let styled = stylize_image(generator, &content, &styles[s], style_size)?;
        let path: PathBuf = out_dir.join(stylized_file_name(&record.image_id));
        save_png(&path, &styled)?;
        log::debug!("{} <- style {s}", path.display());
        record.path = path;
    }
    out.validate()?;
    Ok(out)
}
