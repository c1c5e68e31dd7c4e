//! KAIST multispectral pedestrian layout.
//!
//! ```text
//! <root>/annotations/<seq>/<frame>.txt     "person x y w h ..." per line
//! <root>/<seq>/visible/<frame>.{jpg,png}
//! <root>/<seq>/lwir/<frame>.{jpg,png}
//! <root>/splits/{train,val}.txt            optional, one "<seq>/<frame>" per line
//! ```
//!
//! `<seq>` may be nested (`set00/V000`). Each annotated frame yields a visible
//! and a thermal record sharing `pair_key = "<seq>/<frame>"` and the same
//! annotation list.

use std::path::{Path, PathBuf};

use log::warn;
use walkdir::WalkDir;

use super::flir::assign_split;
use super::split::SplitFallback;
use super::{
    BoundingBox, DataError, DatasetManifest, IngestReport, LabeledImage, ObjectAnnotation, Result,
    Spectrum, KAIST_CLASSES,
};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn find_image(dir: &Path, frame: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{frame}.{ext}")))
        .find(|p| p.is_file())
}

fn parse_frame(text: &str, path: &Path, width: u32, height: u32, report: &mut IngestReport) -> Result<Vec<ObjectAnnotation>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let label = fields.next().unwrap_or_default();
        let coords: Vec<f64> = fields
            .take(4)
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| DataError::Parse {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", lineno + 1),
            })?;
        let &[x, y, w, h] = coords.as_slice() else {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                reason: format!("line {}: expected `label x y w h`", lineno + 1),
            });
        };
        if label != "person" {
            report.skipped_unknown_class += 1;
            continue;
        }
        let raw = BoundingBox {
            x_min: x,
            y_min: y,
            x_max: x + w,
            y_max: y + h,
        };
        if let Some(bbox) = report.admit_box(raw, width, height) {
            out.push(ObjectAnnotation::new(bbox, "person"));
        }
    }
    Ok(out)
}

fn dimensions(path: &Path) -> Result<(u32, u32)> {
    image::image_dimensions(path).map_err(|e| DataError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn parse_kaist_annotations(source_dir: &Path) -> Result<(DatasetManifest, IngestReport)> {
    parse_kaist_annotations_with(source_dir, &SplitFallback::default())
}

pub fn parse_kaist_annotations_with(
    source_dir: &Path,
    fallback: &SplitFallback,
) -> Result<(DatasetManifest, IngestReport)> {
    let ann_root = source_dir.join("annotations");
    if !ann_root.is_dir() {
        return Err(DataError::MissingIndex(ann_root));
    }
    let mut report = IngestReport::default();
    let mut manifest = DatasetManifest::new(
        source_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "kaist".into()),
        KAIST_CLASSES.iter().map(|s| s.to_string()).collect(),
    );

    for entry in WalkDir::new(&ann_root).sort_by_file_name() {
        let entry = entry.map_err(|e| DataError::Parse {
            path: ann_root.clone(),
            reason: e.to_string(),
        })?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let rel = path.strip_prefix(&ann_root).expect("walkdir yields children of its root");
        let frame = rel.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let seq = rel.parent().unwrap_or(Path::new(""));
        let key = seq
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .chain(std::iter::once(frame.clone()))
            .collect::<Vec<_>>()
            .join("/");

        let visible = find_image(&source_dir.join(seq).join("visible"), &frame);
        let thermal = find_image(&source_dir.join(seq).join("lwir"), &frame);
        let (Some(visible), Some(thermal)) = (visible, thermal) else {
            return Err(DataError::Unpaired(key));
        };
        let (w, h) = dimensions(&thermal)?;
        if dimensions(&visible)? != (w, h) {
            return Err(DataError::record(&key, "visible and thermal frames differ in size"));
        }

        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let annotations = parse_frame(&text, path, w, h, &mut report)?;
        for (spectrum, image_path) in [(Spectrum::Visible, visible), (Spectrum::Thermal, thermal)] {
            manifest.records.push(LabeledImage {
                image_id: format!("{key}/{spectrum}"),
                path: image_path,
                width: w,
                height: h,
                spectrum,
                annotations: annotations.clone(),
                pair_key: Some(key.clone()),
            });
        }
    }

    let manifest = assign_split(manifest, source_dir, fallback, |r| {
        r.pair_key.clone().unwrap_or_else(|| r.image_id.clone())
    })?;
    if report.warnings() > 0 {
        warn!(
            "{}: skipped {} non-person annotations, clipped {}, dropped {} degenerate",
            source_dir.display(),
            report.skipped_unknown_class,
            report.clipped_boxes,
            report.dropped_degenerate
        );
    }
    manifest.validate()?;
    Ok((manifest, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_lines_convert_to_corners() {
        let mut report = IngestReport::default();
        let text = "% bbGt version=3\nperson 10 20 30 40 0 0 0 0 0 0 0\ncyclist 1 1 5 5 0\nperson 300 10 40 20 0\n";
        let anns = parse_frame(text, Path::new("x.txt"), 320, 256, &mut report).unwrap();
        assert_eq!(anns.len(), 2);
        assert_eq!(anns[0].bbox, BoundingBox::new(10.0, 20.0, 40.0, 60.0).unwrap());
        assert_eq!(anns[1].bbox.x_max, 320.0);
        assert_eq!(report.skipped_unknown_class, 1);
        assert_eq!(report.clipped_boxes, 1);
    }

    #[test]
    fn short_line_is_a_parse_error() {
        let mut report = IngestReport::default();
        assert!(parse_frame("person 1 2 3\n", Path::new("x.txt"), 10, 10, &mut report).is_err());
    }
}
