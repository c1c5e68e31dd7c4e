use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thermoscope_core::{DatasetManifest, LabeledImage, Split};
use thermoscope_tensor::io::Container;

use crate::error::{DetectError, Result};
use crate::external::ExternalDetector;
use crate::mini::{DetTrainRecord, InferOutput, MiniDetector};
use crate::spec::{Architecture, DetectorSpec};

const FORMAT_VERSION: &str = "1";
const KIND: &str = "detector";

/// A trainable detector behind one interface, whatever runs it.
#[derive(Clone, Debug)]
pub enum Detector {
    Mini(MiniDetector),
    External(ExternalDetector),
}

/// Builds an untrained detector. Unregistered pairs are configuration
/// errors naming every valid pair.
pub fn register_detector(spec: DetectorSpec) -> Result<Detector> {
    spec.validate()?;
    Ok(match spec.architecture {
        Architecture::ReferenceMini => Detector::Mini(MiniDetector::new(spec)?),
        _ => {
            let dir = std::env::temp_dir()
                .join("thermoscope-external")
                .join(format!("{}-{}-{}", spec.architecture, spec.backbone, spec.seed));
            Detector::External(ExternalDetector::new(spec, dir))
        }
    })
}

impl Detector {
    pub fn spec(&self) -> &DetectorSpec {
        match self {
            Detector::Mini(d) => d.spec(),
            Detector::External(d) => d.spec(),
        }
    }

    /// Trains on the train split; the log is empty for external detectors.
    pub fn train(&mut self, manifest: &DatasetManifest) -> Result<Vec<DetTrainRecord>> {
        if manifest.count(Split::Train) == 0 {
            return Err(DetectError::EmptyTrainSplit(manifest.name.clone()));
        }
        match self {
            Detector::Mini(d) => d.train(manifest),
            Detector::External(d) => d.train(manifest).map(|()| Vec::new()),
        }
    }

    /// Detections with confidence at least `score_threshold`, highest first
    /// within each image.
    pub fn infer(&self, images: &[LabeledImage], score_threshold: f64) -> Result<InferOutput> {
        match self {
            Detector::Mini(d) => d.infer(images, score_threshold),
            Detector::External(d) => d.infer(images, score_threshold),
        }
    }

    /// Inference over one split of a manifest.
    pub fn infer_split(
        &self,
        manifest: &DatasetManifest,
        split: Split,
        score_threshold: f64,
    ) -> Result<InferOutput> {
        let records: Vec<LabeledImage> = manifest.records_in(split).cloned().collect();
        self.infer(&records, score_threshold)
    }

    /// Points an external detector at the directory that will hold its
    /// weights. No effect on built-in detectors.
    pub fn set_work_dir(&mut self, dir: PathBuf) {
        if let Detector::External(d) = self {
            d.set_handle_dir(dir);
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bad = |reason: String| DetectError::Handle {
            path: path.to_path_buf(),
            reason,
        };
        let mut meta = BTreeMap::new();
        meta.insert("format_version".to_string(), FORMAT_VERSION.to_string());
        meta.insert("kind".to_string(), KIND.to_string());
        meta.insert("spec".to_string(), serde_json::to_string(self.spec()).map_err(|e| bad(e.to_string()))?);
        let container = match self {
            Detector::Mini(d) => Container::from_store(d.params(), meta),
            Detector::External(d) => {
                meta.insert("handle_dir".to_string(), d.handle_dir().display().to_string());
                Container {
                    tensors: BTreeMap::new(),
                    metadata: meta,
                }
            }
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| bad(e.to_string()))?;
        }
        container.save(path).map_err(|e| bad(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |reason: String| DetectError::Handle {
            path: path.to_path_buf(),
            reason,
        };
        let c = Container::load(path).map_err(|e| bad(e.to_string()))?;
        let field = |k: &str| c.metadata.get(k).ok_or_else(|| bad(format!("missing metadata `{k}`")));
        if field("kind")? != KIND {
            return Err(bad(format!("not a detector handle (kind `{}`)", field("kind")?)));
        }
        if field("format_version")? != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", field("format_version")?)));
        }
        let spec: DetectorSpec = serde_json::from_str(field("spec")?).map_err(|e| bad(e.to_string()))?;
        spec.validate()?;
        Ok(match spec.architecture {
            Architecture::ReferenceMini => {
                let params = c.to_store(false).map_err(|e| bad(e.to_string()))?;
                Detector::Mini(MiniDetector::from_params(spec, params)?)
            }
            _ => Detector::External(ExternalDetector::new(spec, PathBuf::from(field("handle_dir")?))),
        })
    }
}
