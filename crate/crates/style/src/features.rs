//! Perceptual loss network: the VGG-16 convolutional trunk up to `relu4_3`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermoscope_core::PlanarImage;
use thermoscope_tensor::io::Container;
use thermoscope_tensor::{init, ParamStore, Tensor};

use crate::error::{Result, StyleError};

/// `(convolutions, output channels)` per block.
const BLOCKS: [(usize, usize); 4] = [(2, 64), (2, 128), (3, 256), (3, 512)];
/// Channel count at each tap (`relu1_2`, `relu2_2`, `relu3_3`, `relu4_3`).
pub const TAP_CHANNELS: [usize; 4] = [64, 128, 256, 512];
/// 1-based index of the tap used for the content loss.
pub const CONTENT_SCALE: usize = 3;
/// Smallest accepted input side: twice the stride of the deepest tap.
pub const MIN_INPUT_SIDE: usize = 16;
/// File looked up under `THERMOSCOPE_CACHE` when no path is configured.
pub const CACHE_FILE: &str = "vgg16.safetensors";

const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Indices of the convolutions inside torchvision's `vgg16.features`.
fn conv_indices() -> Vec<usize> {
    let mut out = Vec::new();
    let mut idx = 0;
    for (b, (convs, _)) in BLOCKS.iter().enumerate() {
        for _ in 0..*convs {
            out.push(idx);
            idx += 2;
        }
        if b + 1 < BLOCKS.len() {
            idx += 1;
        }
    }
    out
}

/// One tap of the pyramid: a batch `[N, C, H, W]` of rank-3 maps.
#[derive(Clone, Debug)]
pub struct FeatureMap {
    pub values: Tensor,
    /// 1-based scale index.
    pub scale_index: usize,
}

impl FeatureMap {
    /// Accepts `[C, H, W]` (batch of one) or `[N, C, H, W]`.
    pub fn new(values: Tensor, scale_index: usize) -> Result<Self> {
        let values = match values.rank() {
            3 => {
                let s = values.shape().to_vec();
                values.reshape(&[1, s[0], s[1], s[2]])?
            }
            4 => values,
            r => return Err(StyleError::Dimension(format!("feature map must have rank 3 or 4, got {r}"))),
        };
        if values.shape().contains(&0) {
            return Err(StyleError::Dimension(format!("empty feature map {:?}", values.shape())));
        }
        if !values.all_finite() {
            return Err(StyleError::Numeric(format!("non-finite entries at scale {scale_index}")));
        }
        Ok(FeatureMap { values, scale_index })
    }

    /// `(N, C, H, W)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.values.dims4().expect("rank checked at construction")
    }

    pub fn detach(&self) -> FeatureMap {
        FeatureMap {
            values: self.values.detach(),
            scale_index: self.scale_index,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FeaturePyramid {
    pub maps: Vec<FeatureMap>,
    /// 1-based index into `maps`.
    pub content_scale: usize,
}

impl FeaturePyramid {
    pub fn content(&self) -> &FeatureMap {
        &self.maps[self.content_scale - 1]
    }
}

/// Where the loss-network weights came from.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSource {
    File(PathBuf),
    Random { seed: u64 },
}

#[derive(Clone, Debug)]
pub struct LossNetwork {
    params: ParamStore,
    /// Per-channel `(mean, std)` applied to `[0, 1]` input.
    normalization: Option<([f64; 3], [f64; 3])>,
    source: WeightSource,
}

impl LossNetwork {
    /// He-initialized weights with zero biases and no input normalization,
    /// so an all-zero image maps to all-zero features.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::frozen();
        let mut in_ch = 3;
        let mut indices = conv_indices().into_iter();
        for (convs, out_ch) in BLOCKS {
            for _ in 0..convs {
                let idx = indices.next().expect("one index per conv");
                let fan_in = in_ch * 9;
                params
                    .insert(
                        format!("features.{idx}.weight"),
                        init::kaiming_normal(&mut rng, out_ch * fan_in, fan_in),
                        &[out_ch, in_ch, 3, 3],
                    )
                    .expect("shape matches data");
                params
                    .insert(format!("features.{idx}.bias"), vec![0.0; out_ch], &[out_ch])
                    .expect("shape matches data");
                in_ch = out_ch;
            }
        }
        LossNetwork {
            params,
            normalization: None,
            source: WeightSource::Random { seed },
        }
    }

    /// Loads torchvision-named weights (`features.{i}.weight` / `.bias`).
    /// The metadata key `input_normalization` may be `imagenet` (default) or
    /// `none`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let err = |reason: String| StyleError::Checkpoint {
            path: path.to_path_buf(),
            reason,
        };
        let container = Container::load(path).map_err(|e| err(e.to_string()))?;
        let mut params = ParamStore::frozen();
        let mut in_ch = 3;
        let mut indices = conv_indices().into_iter();
        for (convs, out_ch) in BLOCKS {
            for _ in 0..convs {
                let idx = indices.next().expect("one index per conv");
                for (suffix, shape) in [("weight", vec![out_ch, in_ch, 3, 3]), ("bias", vec![out_ch])] {
                    let name = format!("features.{idx}.{suffix}");
                    let t = container
                        .tensors
                        .get(&name)
                        .ok_or_else(|| err(format!("missing tensor `{name}`")))?;
                    if t.shape != shape {
                        return Err(err(format!("`{name}` has shape {:?}, expected {shape:?}", t.shape)));
                    }
                    params.insert(name, t.data.clone(), &shape)?;
                }
                in_ch = out_ch;
            }
        }
        let normalization = match container.metadata.get("input_normalization").map(String::as_str) {
            None | Some("imagenet") => Some((IMAGENET_MEAN, IMAGENET_STD)),
            Some("none") => None,
            Some(other) => return Err(err(format!("unknown input_normalization `{other}`"))),
        };
        Ok(LossNetwork {
            params,
            normalization,
            source: WeightSource::File(path.to_path_buf()),
        })
    }

    /// Configured file, then `$THERMOSCOPE_CACHE/vgg16.safetensors`, then
    /// seeded random weights.
    pub fn locate(configured: Option<&Path>, seed: u64) -> Result<Self> {
        if let Some(p) = configured {
            return Self::from_file(p);
        }
        if let Some(dir) = std::env::var_os("THERMOSCOPE_CACHE") {
            let p = PathBuf::from(dir).join(CACHE_FILE);
            if p.is_file() {
                return Self::from_file(&p);
            }
        }
        log::info!("no loss-network weights found; using seeded random VGG-16 (seed {seed})");
        Ok(Self::random(seed))
    }

    pub fn source(&self) -> &WeightSource {
        &self.source
    }

    /// Writes the weights in the same container format `from_file` reads.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut meta = BTreeMap::new();
        meta.insert("architecture".into(), "vgg16-relu4_3".into());
        meta.insert(
            "input_normalization".into(),
            if self.normalization.is_some() { "imagenet" } else { "none" }.into(),
        );
        Container::from_store(&self.params, meta).save(path)?;
        Ok(())
    }

    /// Runs a `[N, 3, H, W]` batch in `[0, 1]` through the trunk.
    pub fn extract(&self, x: &Tensor) -> Result<FeaturePyramid> {
        let (_, c, h, w) = x
            .dims4()
            .map_err(|_| StyleError::Dimension(format!("expected [N, 3, H, W], got {:?}", x.shape())))?;
        if c != 3 {
            return Err(StyleError::Dimension(format!("expected 3 channels, got {c}")));
        }
        if h < MIN_INPUT_SIDE || w < MIN_INPUT_SIDE {
            return Err(StyleError::Dimension(format!(
                "input {h}x{w} is smaller than the minimum side {MIN_INPUT_SIDE}"
            )));
        }
        let mut act = match &self.normalization {
            Some((mean, std)) => {
                let shift = Tensor::new(mean.iter().map(|m| -m).collect(), &[3])?;
                let inv = Tensor::new(std.iter().map(|s| 1.0 / s).collect(), &[3])?;
                x.add_channel(&shift)?.mul_channel(&inv)?
            }
            None => x.clone(),
        };
        let mut maps = Vec::with_capacity(BLOCKS.len());
        let mut indices = conv_indices().into_iter();
        for (b, (convs, _)) in BLOCKS.iter().enumerate() {
            for _ in 0..*convs {
                let idx = indices.next().expect("one index per conv");
                let wt = self.params.get(&format!("features.{idx}.weight"))?;
                let bias = self.params.get(&format!("features.{idx}.bias"))?;
                act = act.conv2d(wt, Some(bias), 1, 1)?.relu();
            }
            maps.push(FeatureMap::new(act.clone(), b + 1)?);
            if b + 1 < BLOCKS.len() {
                act = act.max_pool2d(2)?;
            }
        }
        Ok(FeaturePyramid {
            maps,
            content_scale: CONTENT_SCALE,
        })
    }
}

/// `[N, 3, H, W]` constant batch from planar images of equal size.
pub fn batch_tensor(images: &[&PlanarImage]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| StyleError::Dimension("empty image batch".into()))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if (img.height, img.width) != (h, w) {
            return Err(StyleError::Dimension(format!(
                "batch mixes {h}x{w} and {}x{}",
                img.height, img.width
            )));
        }
        data.extend_from_slice(&img.expand_rgb()?.data);
    }
    Ok(Tensor::new(data, &[images.len(), 3, h, w])?)
}

/// Planar image of item `index` of a `[N, C, H, W]` tensor.
pub fn tensor_image(t: &Tensor, index: usize) -> Result<PlanarImage> {
    let (n, c, h, w) = t.dims4()?;
    if index >= n {
        return Err(StyleError::Dimension(format!("batch index {index} out of {n}")));
    }
    let plane = c * h * w;
    Ok(PlanarImage::new(c, h, w, t.data()[index * plane..(index + 1) * plane].to_vec())?)
}

/// Feature pyramid of a single `[3, H, W]` image or a `[N, 3, H, W]` batch.
pub fn extract_features(image: &Tensor, network: &LossNetwork) -> Result<FeaturePyramid> {
    match image.rank() {
        3 => {
            let s = image.shape().to_vec();
            network.extract(&image.reshape(&[1, s[0], s[1], s[2]])?)
        }
        _ => network.extract(image),
    }
}
