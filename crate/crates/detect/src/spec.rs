//! Detector configurations and the registry of supported combinations.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DetectError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    FasterRcnn,
    #[serde(rename = "ssd-300")]
    Ssd300,
    #[serde(rename = "ssd-512")]
    Ssd512,
    ReferenceMini,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    #[serde(rename = "resnet-101")]
    Resnet101,
    #[serde(rename = "vgg-16")]
    Vgg16,
    #[serde(rename = "mobilenet-v2")]
    MobilenetV2,
    Efficientnet,
    Mini,
}

macro_rules! string_enum {
    ($ty:ty { $($variant:ident => $name:literal),* $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $(Self::$variant => $name),* }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = DetectError;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)*
                    other => Err(DetectError::Config(format!(
                        concat!("unknown ", stringify!($ty), " `{}`; expected one of: {}"),
                        other,
                        [$($name),*].join(", ")
                    ))),
                }
            }
        }
    };
}

string_enum!(Architecture {
    FasterRcnn => "faster-rcnn",
    Ssd300 => "ssd-300",
    Ssd512 => "ssd-512",
    ReferenceMini => "reference-mini",
});

string_enum!(Backbone {
    Resnet101 => "resnet-101",
    Vgg16 => "vgg-16",
    MobilenetV2 => "mobilenet-v2",
    Efficientnet => "efficientnet",
    Mini => "mini",
});

/// Which training recipe the defaults follow. Cross-domain transfer uses a
/// different learning-rate table than the thermal baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    #[default]
    Baseline,
    CrossDomain,
}

struct Entry {
    architecture: Architecture,
    backbone: Backbone,
    baseline_lr: f64,
    cross_domain_lr: f64,
    epochs: usize,
    input_size: usize,
}

const REGISTRY: [Entry; 6] = [
    Entry {
        architecture: Architecture::FasterRcnn,
        backbone: Backbone::Resnet101,
        baseline_lr: 1e-4,
        cross_domain_lr: 1e-3,
        epochs: 15,
        input_size: 600,
    },
    Entry {
        architecture: Architecture::Ssd300,
        backbone: Backbone::Vgg16,
        baseline_lr: 1e-4,
        cross_domain_lr: 1e-3,
        epochs: 15,
        input_size: 300,
    },
    Entry {
        architecture: Architecture::Ssd300,
        backbone: Backbone::MobilenetV2,
        baseline_lr: 1e-3,
        cross_domain_lr: 1e-3,
        epochs: 15,
        input_size: 300,
    },
    Entry {
        architecture: Architecture::Ssd300,
        backbone: Backbone::Efficientnet,
        baseline_lr: 1e-3,
        cross_domain_lr: 1e-4,
        epochs: 15,
        input_size: 300,
    },
    Entry {
        architecture: Architecture::Ssd512,
        backbone: Backbone::Vgg16,
        baseline_lr: 1e-3,
        cross_domain_lr: 1e-3,
        epochs: 15,
        input_size: 512,
    },
    Entry {
        architecture: Architecture::ReferenceMini,
        backbone: Backbone::Mini,
        baseline_lr: 1e-3,
        cross_domain_lr: 1e-3,
        epochs: 5,
        input_size: 64,
    },
];

pub const DEFAULT_BATCH_SIZE: usize = 4;

/// Every registered `(architecture, backbone)` pair.
pub fn registered_pairs() -> Vec<(Architecture, Backbone)> {
    REGISTRY.iter().map(|e| (e.architecture, e.backbone)).collect()
}

fn entry(architecture: Architecture, backbone: Backbone) -> Result<&'static Entry> {
    REGISTRY
        .iter()
        .find(|e| e.architecture == architecture && e.backbone == backbone)
        .ok_or_else(|| {
            let valid: Vec<String> = registered_pairs().iter().map(|(a, b)| format!("{a}/{b}")).collect();
            DetectError::Config(format!(
                "unregistered detector {architecture}/{backbone}; valid pairs: {}",
                valid.join(", ")
            ))
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub architecture: Architecture,
    pub backbone: Backbone,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub class_set: Vec<String>,
    /// Square network input side in pixels.
    pub input_size: usize,
    pub seed: u64,
    /// Executable implementing the external adapter protocol; required for
    /// every architecture except reference-mini.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_command: Option<PathBuf>,
}

impl DetectorSpec {
    /// Registry defaults for a pair under the given protocol.
    pub fn defaults(
        architecture: Architecture,
        backbone: Backbone,
        class_set: Vec<String>,
        protocol: Protocol,
    ) -> Result<Self> {
        let e = entry(architecture, backbone)?;
        Ok(DetectorSpec {
            architecture,
            backbone,
            learning_rate: match protocol {
                Protocol::Baseline => e.baseline_lr,
                Protocol::CrossDomain => e.cross_domain_lr,
            },
            epochs: e.epochs,
            batch_size: DEFAULT_BATCH_SIZE,
            class_set,
            input_size: e.input_size,
            seed: 0,
            external_command: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        entry(self.architecture, self.backbone)?;
        if self.class_set.is_empty() {
            return Err(DetectError::Config("class_set is empty".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(DetectError::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(DetectError::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        // reference-mini needs an input divisible by its feature stride.
        let multiple = if self.architecture == Architecture::ReferenceMini { 8 } else { 1 };
        if self.input_size < 16 || !self.input_size.is_multiple_of(multiple) {
            return Err(DetectError::Config(format!(
                "input_size {} must be a multiple of {multiple} and at least 16",
                self.input_size
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        format!("{}/{}", self.architecture, self.backbone)
    }
}
