//! Generator training loop, loss logs and checkpoints.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thermoscope_core::imageio::load_rgb;
use thermoscope_core::{seed, PlanarImage};
use thermoscope_tensor::io::Container;
use thermoscope_tensor::optim::Adam;
use thermoscope_tensor::Tensor;

use crate::error::{Result, StyleError};
use crate::features::{batch_tensor, FeatureMap, LossNetwork, MIN_INPUT_SIDE};
use crate::generator::{Generator, ARCHITECTURE, SIDE_MULTIPLE};
use crate::loss::{objective, set_style_targets, LossWeights, StyleTargets};

/// Per-item feature caches are kept only for collections up to this size.
const CACHE_LIMIT: usize = 32;
pub const CHECKPOINT_FORMAT: &str = "1";
pub const CHECKPOINT_KIND: &str = "msgnet-generator";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StyleTrainConfig {
    /// Square style sizes, cycled one per iteration.
    pub style_sizes: Vec<usize>,
    /// Square content size.
    pub content_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    pub seed: u64,
    /// Records `t = 0` instead of wall-clock seconds so logs are byte-stable.
    pub deterministic: bool,
}

impl Default for StyleTrainConfig {
    fn default() -> Self {
        StyleTrainConfig {
            style_sizes: vec![256, 512, 768],
            content_size: 256,
            epochs: 100,
            batch_size: 4,
            learning_rate: 1e-3,
            weights: LossWeights::default(),
            seed: 0,
            deterministic: false,
        }
    }
}

fn check_size(what: &str, s: usize) -> Result<()> {
    if s < MIN_INPUT_SIDE || !s.is_multiple_of(SIDE_MULTIPLE) {
        return Err(StyleError::Config(format!(
            "{what} {s} must be a multiple of {SIDE_MULTIPLE} and at least {MIN_INPUT_SIDE}"
        )));
    }
    Ok(())
}

impl StyleTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.style_sizes.is_empty() {
            return Err(StyleError::Config("style_sizes is empty".into()));
        }
        for &s in &self.style_sizes {
            check_size("style size", s)?;
        }
        check_size("content size", self.content_size)?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(StyleError::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(StyleError::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        self.weights.validate()
    }

    /// `⌈n / batch⌉ · epochs`.
    pub fn iterations(&self, n_content: usize) -> usize {
        n_content.div_ceil(self.batch_size) * self.epochs
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iter: usize,
    pub total: f64,
    pub content: f64,
    pub style: f64,
    pub tv: f64,
    pub style_size: usize,
    /// Seconds since training started.
    pub t: f64,
}

/// Append-only JSONL writer, flushed per record so an aborted run keeps
/// everything up to the failing iteration.
pub struct TrainLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TrainLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|source| StyleError::Write {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(TrainLog {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, record: &LossRecord) -> Result<()> {
        let line = serde_json::to_string(record).expect("plain struct serializes");
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|source| StyleError::Write {
                path: self.path.clone(),
                source,
            })
    }

    pub fn read(path: &Path) -> Result<Vec<LossRecord>> {
        let bad = |reason: String| StyleError::Checkpoint {
            path: path.to_path_buf(),
            reason,
        };
        let file = File::open(path).map_err(|e| bad(e.to_string()))?;
        BufReader::new(file)
            .lines()
            .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
            .map(|l| {
                let l = l.map_err(|e| bad(e.to_string()))?;
                serde_json::from_str(&l).map_err(|e| bad(e.to_string()))
            })
            .collect()
    }
}

/// Generator weights plus the state needed to interpret them.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub generator: Generator,
    pub config: StyleTrainConfig,
    pub epoch: usize,
    pub history: Vec<LossRecord>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut meta = BTreeMap::new();
        meta.insert("format_version".into(), CHECKPOINT_FORMAT.into());
        meta.insert("kind".into(), CHECKPOINT_KIND.into());
        meta.insert("architecture".into(), ARCHITECTURE.into());
        meta.insert("config".into(), serde_json::to_string(&self.config).expect("config serializes"));
        meta.insert("epoch".into(), self.epoch.to_string());
        meta.insert("history".into(), serde_json::to_string(&self.history).expect("history serializes"));
        Container::from_store(self.generator.params(), meta)
            .save(path)
            .map_err(|e| StyleError::Checkpoint {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |reason: String| StyleError::Checkpoint {
            path: path.to_path_buf(),
            reason,
        };
        let c = Container::load(path).map_err(|e| bad(e.to_string()))?;
        let field = |k: &str| c.metadata.get(k).ok_or_else(|| bad(format!("missing metadata `{k}`")));
        if field("kind")? != CHECKPOINT_KIND {
            return Err(bad(format!("not a {CHECKPOINT_KIND} checkpoint")));
        }
        if field("format_version")? != CHECKPOINT_FORMAT {
            return Err(bad(format!("unsupported format version {}", field("format_version")?)));
        }
        if field("architecture")? != ARCHITECTURE {
            return Err(bad(format!("architecture {} is not {ARCHITECTURE}", field("architecture")?)));
        }
        let config = serde_json::from_str(field("config")?).map_err(|e| bad(e.to_string()))?;
        let epoch = field("epoch")?.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
        let history = serde_json::from_str(field("history")?).map_err(|e| bad(e.to_string()))?;
        let params = c.to_store(false).map_err(|e| bad(e.to_string()))?;
        let generator = Generator::from_params(params).map_err(|e| bad(e.to_string()))?;
        Ok(Checkpoint {
            generator,
            config,
            epoch,
            history,
        })
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub generator: Generator,
    pub history: Vec<LossRecord>,
    /// Images that could not be decoded and were left out.
    pub skipped: Vec<PathBuf>,
}

fn load_all(paths: &[PathBuf], skipped: &mut Vec<PathBuf>) -> Vec<PlanarImage> {
    paths
        .iter()
        .filter_map(|p| match load_rgb(p) {
            Ok(img) => Some(img),
            Err(e) => {
                log::warn!("skipping unreadable image: {e}");
                skipped.push(p.clone());
                None
            }
        })
        .collect()
}

fn square(img: &PlanarImage, side: usize) -> Result<PlanarImage> {
    Ok(img.resized(side, side)?.expand_rgb()?)
}

/// Lazily computed per-key values, cached only when the key space is small.
struct Memo<K, V> {
    enabled: bool,
    entries: BTreeMap<K, V>,
}

impl<K: Ord + Copy, V: Clone> Memo<K, V> {
    fn new(enabled: bool) -> Self {
        Memo {
            enabled,
            entries: BTreeMap::new(),
        }
    }

    fn get_or(&mut self, key: K, compute: impl FnOnce() -> Result<V>) -> Result<V> {
        if let Some(v) = self.entries.get(&key) {
            return Ok(v.clone());
        }
        let v = compute()?;
        if self.enabled {
            self.entries.insert(key, v.clone());
        }
        Ok(v)
    }
}

/// Trains a generator from scratch on content and style image files.
/// Unreadable files are skipped with a warning and reported in the outcome.
pub fn train_msgnet(
    content: &[PathBuf],
    styles: &[PathBuf],
    config: &StyleTrainConfig,
    network: &LossNetwork,
    log: Option<&mut TrainLog>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut skipped = Vec::new();
    let content_imgs = load_all(content, &mut skipped);
    let style_imgs = load_all(styles, &mut skipped);
    if !skipped.is_empty() {
        log::warn!("{} unreadable image(s) skipped", skipped.len());
    }
    let (generator, history) = train_on_images(&content_imgs, &style_imgs, config, network, log)?;
    Ok(TrainOutcome {
        generator,
        history,
        skipped,
    })
}

/// [`train_msgnet`] on decoded images.
pub fn train_on_images(
    content_imgs: &[PlanarImage],
    style_imgs: &[PlanarImage],
    config: &StyleTrainConfig,
    network: &LossNetwork,
    mut log: Option<&mut TrainLog>,
) -> Result<(Generator, Vec<LossRecord>)> {
    config.validate()?;
    if content_imgs.is_empty() || style_imgs.is_empty() {
        return Err(StyleError::Config(format!(
            "need at least one readable content and style image, got {} and {}",
            content_imgs.len(),
            style_imgs.len()
        )));
    }

    let mut generator = Generator::new(seed::substream(config.seed, "generator-init"));
    let mut adam = Adam::new(config.learning_rate);
    let mut order_rng = seed::rng(config.seed, "content-order");
    let mut style_rng = seed::rng(config.seed, "style-sampling");

    let cs = config.content_size;
    let content_sq = content_imgs.iter().map(|i| square(i, cs)).collect::<Result<Vec<_>>>()?;
    let mut content_memo: Memo<usize, FeatureMap> = Memo::new(content_sq.len() <= CACHE_LIMIT);
    let mut style_memo: Memo<(usize, usize), (Tensor, StyleTargets)> =
        Memo::new(style_imgs.len() * config.style_sizes.len() <= CACHE_LIMIT);

    let start = Instant::now();
    let mut history = Vec::with_capacity(config.iterations(content_sq.len()));
    let mut order: Vec<usize> = (0..content_sq.len()).collect();
    let mut iter = 0;
    for _epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(config.batch_size) {
            let size = config.style_sizes[iter % config.style_sizes.len()];
            let s_idx = style_rng.random_range(0..style_imgs.len());
            let (x_s, targets) = style_memo.get_or((s_idx, size), || {
                let x = batch_tensor(&[&square(&style_imgs[s_idx], size)?])?;
                let t = set_style_targets(&x, network)?;
                Ok((x, t))
            })?;
            generator.set_style(&x_s)?;

            let mut feats = Vec::new();
            let mut dims = (0, 0, 0);
            for &i in chunk {
                let f = content_memo.get_or(i, || {
                    let x = batch_tensor(&[&content_sq[i]])?;
                    Ok(network.extract(&x)?.content().detach())
                })?;
                let (_, c, h, w) = f.dims();
                dims = (c, h, w);
                feats.extend_from_slice(f.values.data());
            }
            let fc = FeatureMap::new(Tensor::new(feats, &[chunk.len(), dims.0, dims.1, dims.2])?, crate::features::CONTENT_SCALE)?;
            let x_c = batch_tensor(&chunk.iter().map(|&i| &content_sq[i]).collect::<Vec<_>>())?;

            let generated = generator.forward(&x_c)?;
            let (total, terms) = objective(&generated, &fc, &targets, &config.weights, network)?;
            if ![terms.total, terms.content, terms.style, terms.tv].iter().all(|v| v.is_finite()) {
                return Err(StyleError::NonFiniteLoss {
                    iteration: iter,
                    detail: format!(
                        "total={} content={} style={} tv={}",
                        terms.total, terms.content, terms.style, terms.tv
                    ),
                });
            }
            let grads = total.backward()?;
            adam.step(generator.params_mut(), &grads)?;

            let record = LossRecord {
                iter,
                total: terms.total,
                content: terms.content,
                style: terms.style,
                tv: terms.tv,
                style_size: size,
                t: if config.deterministic { 0.0 } else { start.elapsed().as_secs_f64() },
            };
            if let Some(l) = log.as_deref_mut() {
                l.append(&record)?;
            }
            history.push(record);
            iter += 1;
        }
    }
    Ok((generator, history))
}
