//! Labeled-image datasets: the common record model, manifest persistence,
//! deterministic splitting, and the FLIR / KAIST / VOC adapters.

mod flir;
mod kaist;
mod split;
mod voc;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use flir::{parse_flir_annotations, parse_flir_annotations_with};
pub use kaist::{parse_kaist_annotations, parse_kaist_annotations_with};
pub use split::{make_split, SplitFallback};
pub use voc::{from_voc_xml, to_voc_xml};

/// Class set of the thermal FLIR-ADAS experiments (dog is never ingested).
pub const FLIR_CLASSES: [&str; 3] = ["car", "bicycle", "person"];
/// KAIST only annotates pedestrians.
pub const KAIST_CLASSES: [&str; 1] = ["person"];

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid bounding box ({x_min}, {y_min}, {x_max}, {y_max}): {reason}")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        reason: &'static str,
    },

    #[error("record `{image_id}`: {reason}")]
    InvalidRecord { image_id: String, reason: String },

    #[error("manifest `{name}`: {reason}")]
    InvalidManifest { name: String, reason: String },

    #[error("annotation index not found under {}", .0.display())]
    MissingIndex(PathBuf),

    #[error("failed to parse {}: {reason}", .path.display())]
    Parse { path: PathBuf, reason: String },

    #[error("frame `{0}` has no paired visible/thermal counterpart")]
    Unpaired(String),

    #[error("VOC document: {0}")]
    Voc(String),

    #[error("split: {0}")]
    Split(String),

    #[error("io error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn record(image_id: &str, reason: impl Into<String>) -> Self {
        DataError::InvalidRecord {
            image_id: image_id.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Axis-aligned box in continuous pixel coordinates, origin top-left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.check()?;
        Ok(b)
    }

    /// From top-left corner plus extent.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    fn check(&self) -> Result<()> {
        let err = |reason| DataError::InvalidBox {
            x_min: self.x_min,
            y_min: self.y_min,
            x_max: self.x_max,
            y_max: self.y_max,
            reason,
        };
        if ![self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(err("non-finite coordinate"));
        }
        if self.x_min < 0.0 || self.y_min < 0.0 {
            return Err(err("negative coordinate"));
        }
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(err("empty extent"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.x_max <= width as f64 && self.y_max <= height as f64
    }

    /// Intersection with the image rectangle, or `None` if nothing is left.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BoundingBox> {
        let b = BoundingBox {
            x_min: self.x_min.clamp(0.0, width as f64),
            y_min: self.y_min.clamp(0.0, height as f64),
            x_max: self.x_max.clamp(0.0, width as f64),
            y_max: self.y_max.clamp(0.0, height as f64),
        };
        b.check().ok().map(|_| b)
    }

    pub fn scaled(&self, sx: f64, sy: f64) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min * sx,
            y_min: self.y_min * sy,
            x_max: self.x_max * sx,
            y_max: self.y_max * sy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub label: String,
    #[serde(default)]
    pub difficult: bool,
}

impl ObjectAnnotation {
    pub fn new(bbox: BoundingBox, label: impl Into<String>) -> Self {
        ObjectAnnotation {
            bbox,
            label: label.into(),
            difficult: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spectrum {
    Thermal,
    Visible,
}

impl Spectrum {
    pub fn as_str(&self) -> &'static str {
        match self {
            Spectrum::Thermal => "thermal",
            Spectrum::Visible => "visible",
        }
    }

    pub fn other(&self) -> Spectrum {
        match self {
            Spectrum::Thermal => Spectrum::Visible,
            Spectrum::Visible => Spectrum::Thermal,
        }
    }
}

impl fmt::Display for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Spectrum {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thermal" | "lwir" => Ok(Spectrum::Thermal),
            "visible" | "rgb" => Ok(Spectrum::Visible),
            other => Err(DataError::Voc(format!("unknown spectrum `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledImage {
    pub image_id: String,
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub spectrum: Spectrum,
    pub annotations: Vec<ObjectAnnotation>,
    /// Shared by the visible and thermal captures of the same frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_key: Option<String>,
}

impl LabeledImage {
    pub fn validate(&self) -> Result<()> {
        if self.image_id.is_empty() {
            return Err(DataError::record("", "empty image_id"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(DataError::record(&self.image_id, "zero image dimension"));
        }
        for a in &self.annotations {
            a.bbox
                .check()
                .map_err(|e| DataError::record(&self.image_id, e.to_string()))?;
            if !a.bbox.fits_within(self.width, self.height) {
                return Err(DataError::record(
                    &self.image_id,
                    format!(
                        "box {:?} exceeds image {}x{}",
                        a.bbox, self.width, self.height
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub class_set: Vec<String>,
    pub records: Vec<LabeledImage>,
    pub split: BTreeMap<String, Split>,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    schema_version: u32,
    #[serde(flatten)]
    manifest: DatasetManifest,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, class_set: Vec<String>) -> Self {
        DatasetManifest {
            name: name.into(),
            class_set,
            records: Vec::new(),
            split: BTreeMap::new(),
        }
    }

    fn invalid(&self, reason: impl Into<String>) -> DataError {
        DataError::InvalidManifest {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }

    /// Checks record validity, id uniqueness, class closure and that the
    /// split covers exactly the records.
    pub fn validate(&self) -> Result<()> {
        let classes: BTreeSet<&str> = self.class_set.iter().map(String::as_str).collect();
        let mut ids = BTreeSet::new();
        for r in &self.records {
            r.validate()?;
            if !ids.insert(r.image_id.as_str()) {
                return Err(self.invalid(format!("duplicate image_id `{}`", r.image_id)));
            }
            if let Some(a) = r.annotations.iter().find(|a| !classes.contains(a.label.as_str())) {
                return Err(self.invalid(format!(
                    "record `{}` carries label `{}` outside the class set",
                    r.image_id, a.label
                )));
            }
        }
        if !self.split.is_empty() || !self.records.is_empty() {
            if let Some(id) = ids.iter().find(|id| !self.split.contains_key(**id)) {
                return Err(self.invalid(format!("record `{id}` has no split assignment")));
            }
            if let Some(id) = self.split.keys().find(|id| !ids.contains(id.as_str())) {
                return Err(self.invalid(format!("split names unknown record `{id}`")));
            }
        }
        Ok(())
    }

    pub fn split_of(&self, image_id: &str) -> Option<Split> {
        self.split.get(image_id).copied()
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &LabeledImage> {
        self.records
            .iter()
            .filter(move |r| self.split.get(&r.image_id) == Some(&split))
    }

    pub fn count(&self, split: Split) -> usize {
        self.split.values().filter(|s| **s == split).count()
    }

    pub fn get(&self, image_id: &str) -> Option<&LabeledImage> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    /// Records of one spectrum, keeping their split assignment.
    pub fn filter_spectrum(&self, spectrum: Spectrum) -> DatasetManifest {
        self.filter(|r| r.spectrum == spectrum, format!("{}-{}", self.name, spectrum))
    }

    /// Records of one split, keeping the assignment.
    pub fn subset(&self, split: Split) -> DatasetManifest {
        let tag = match split {
            Split::Train => "train",
            Split::Val => "val",
        };
        self.filter(
            |r| self.split.get(&r.image_id) == Some(&split),
            format!("{}-{tag}", self.name),
        )
    }

    fn filter(&self, keep: impl Fn(&LabeledImage) -> bool, name: String) -> DatasetManifest {
        let records: Vec<LabeledImage> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        let split = records
            .iter()
            .filter_map(|r| self.split.get(&r.image_id).map(|s| (r.image_id.clone(), *s)))
            .collect();
        DatasetManifest {
            name,
            class_set: self.class_set.clone(),
            records,
            split,
        }
    }

    /// True when every record has a counterpart of the other spectrum with
    /// the same pair key.
    pub fn is_paired(&self) -> bool {
        !self.records.is_empty() && self.pairs().is_ok()
    }

    /// Visible/thermal pairs keyed by pair key, as `(visible, thermal)`.
    pub fn pairs(&self) -> Result<BTreeMap<String, (&LabeledImage, &LabeledImage)>> {
        let mut visible = BTreeMap::new();
        let mut thermal = BTreeMap::new();
        for r in &self.records {
            let key = r
                .pair_key
                .clone()
                .ok_or_else(|| DataError::Unpaired(r.image_id.clone()))?;
            let slot = match r.spectrum {
                Spectrum::Visible => &mut visible,
                Spectrum::Thermal => &mut thermal,
            };
            if slot.insert(key, r).is_some() {
                return Err(DataError::Unpaired(r.image_id.clone()));
            }
        }
        let mut out = BTreeMap::new();
        for (key, v) in visible {
            let t = thermal.remove(&key).ok_or_else(|| DataError::Unpaired(key.clone()))?;
            out.insert(key, (v, t));
        }
        if let Some(key) = thermal.into_keys().next() {
            return Err(DataError::Unpaired(key));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ManifestFile {
            schema_version: MANIFEST_SCHEMA_VERSION,
            manifest: self.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| self.invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| DataError::Parse {
            path: PathBuf::from("<manifest>"),
            reason: e.to_string(),
        })?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == MANIFEST_SCHEMA_VERSION as u64 => {}
            other => {
                return Err(DataError::Parse {
                    path: PathBuf::from("<manifest>"),
                    reason: format!("unsupported schema_version {other:?}"),
                })
            }
        }
        let file: ManifestFile = serde_json::from_value(value).map_err(|e| DataError::Parse {
            path: PathBuf::from("<manifest>"),
            reason: e.to_string(),
        })?;
        Ok(file.manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| DataError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            DataError::Parse { reason, .. } => DataError::Parse {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }
}

/// Counters for annotations dropped or adjusted during ingestion.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Annotations whose label is outside the class set (dog excluded).
    pub skipped_unknown_class: usize,
    pub dropped_dog: usize,
    /// Boxes partially outside the image, clipped to it.
    pub clipped_boxes: usize,
    /// Boxes with no area left after clipping.
    pub dropped_degenerate: usize,
}

impl IngestReport {
    pub fn warnings(&self) -> usize {
        self.skipped_unknown_class + self.clipped_boxes + self.dropped_degenerate
    }

    /// Clips a raw box to the image and counts what happened to it.
    pub(crate) fn admit_box(&mut self, raw: BoundingBox, width: u32, height: u32) -> Option<BoundingBox> {
        if raw.x_min >= 0.0 && raw.y_min >= 0.0 && raw.fits_within(width, height) && raw.check().is_ok() {
            return Some(raw);
        }
        match raw.clamp_to(width, height) {
            Some(b) => {
                self.clipped_boxes += 1;
                Some(b)
            }
            None => {
                self.dropped_degenerate += 1;
                None
            }
        }
    }
}
