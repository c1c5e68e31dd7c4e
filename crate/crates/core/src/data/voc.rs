//! PASCAL-VOC annotation XML.
//!
//! Coordinates are written as integers rounded half-up; the reader accepts
//! fractional values. A `source` element carries the fields VOC has no slot
//! for (image id, spectrum, pair key). Without it the image id falls back to
//! the filename stem and the spectrum to the channel depth (1 = thermal).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BoundingBox, DataError, LabeledImage, ObjectAnnotation, Result, Spectrum};

#[derive(Serialize, Deserialize)]
#[serde(rename = "annotation")]
struct VocDoc {
    filename: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<VocSource>,
    size: VocSize,
    #[serde(default, rename = "object")]
    objects: Vec<VocObject>,
}

#[derive(Serialize, Deserialize)]
struct VocSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    database: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spectrum: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pair_key: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct VocSize {
    width: u32,
    height: u32,
    #[serde(default)]
    depth: u32,
}

#[derive(Serialize, Deserialize)]
struct VocObject {
    name: String,
    #[serde(default)]
    difficult: u8,
    bndbox: VocBox,
}

#[derive(Serialize, Deserialize)]
struct VocBox {
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
}

fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

pub fn to_voc_xml(record: &LabeledImage) -> Result<String> {
    record.validate()?;
    let filename = record
        .path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| record.image_id.clone());
    let doc = VocDoc {
        filename,
        path: Some(record.path.to_string_lossy().into_owned()),
        source: Some(VocSource {
            database: Some("thermoscope".into()),
            image_id: Some(record.image_id.clone()),
            spectrum: Some(record.spectrum.to_string()),
            pair_key: record.pair_key.clone(),
        }),
        size: VocSize {
            width: record.width,
            height: record.height,
            depth: match record.spectrum {
                Spectrum::Thermal => 1,
                Spectrum::Visible => 3,
            },
        },
        objects: record
            .annotations
            .iter()
            .map(|a| VocObject {
                name: a.label.clone(),
                difficult: a.difficult as u8,
                bndbox: VocBox {
                    xmin: round_half_up(a.bbox.x_min),
                    ymin: round_half_up(a.bbox.y_min),
                    xmax: round_half_up(a.bbox.x_max),
                    ymax: round_half_up(a.bbox.y_max),
                },
            })
            .collect(),
    };
    let mut body = String::new();
    let mut ser = quick_xml::se::Serializer::new(&mut body);
    ser.indent(' ', 2);
    doc.serialize(ser).map_err(|e| DataError::Voc(e.to_string()))?;
    Ok(format!("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n{body}\n"))
}

pub fn from_voc_xml(doc: &str) -> Result<LabeledImage> {
    let parsed: VocDoc = quick_xml::de::from_str(doc).map_err(|e| DataError::Voc(e.to_string()))?;
    let source = parsed.source.unwrap_or(VocSource {
        database: None,
        image_id: None,
        spectrum: None,
        pair_key: None,
    });
    let image_id = source.image_id.unwrap_or_else(|| {
        Path::new(&parsed.filename)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| parsed.filename.clone())
    });
    let spectrum = match source.spectrum {
        Some(s) => s.parse()?,
        None if parsed.size.depth == 1 => Spectrum::Thermal,
        None => Spectrum::Visible,
    };
    let annotations = parsed
        .objects
        .into_iter()
        .map(|o| {
            let b = o.bndbox;
            Ok(ObjectAnnotation {
                bbox: BoundingBox::new(b.xmin, b.ymin, b.xmax, b.ymax)?,
                label: o.name,
                difficult: o.difficult != 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let record = LabeledImage {
        image_id,
        path: parsed.path.map(PathBuf::from).unwrap_or_else(|| PathBuf::from(&parsed.filename)),
        width: parsed.size.width,
        height: parsed.size.height,
        spectrum,
        annotations,
        pair_key: source.pair_key,
    };
    record.validate()?;
    Ok(record)
}
