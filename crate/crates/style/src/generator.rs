//! Feed-forward multi-style generator.
//!
//! A shared encoder maps both the content batch and the style image to 64
//! channels at 1/8 resolution. The CoMatch layer mixes the content features
//! with the style Gram through a learned `W`; residual blocks and an upsampling
//! decoder map the result back to an RGB image in `[0, 1]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermoscope_tensor::{init, ParamStore, Tensor};

use crate::error::{Result, StyleError};
use crate::features::FeatureMap;
use crate::gram::{comatch, gram, GramMatrix};

/// Encoder channel progression; each step halves the resolution.
const ENCODER: [(usize, usize); 3] = [(3, 16), (16, 32), (32, 64)];
const DECODER: [(usize, usize); 3] = [(64, 32), (32, 16), (16, 16)];
pub const BOTTLENECK_CHANNELS: usize = 64;
pub const RESIDUAL_BLOCKS: usize = 5;
/// Input sides must be a multiple of this.
pub const SIDE_MULTIPLE: usize = 8;
pub const ARCHITECTURE: &str = "msg-encoder3-comatch64-res5-decoder3";
const IN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct Generator {
    params: ParamStore,
    style: Option<Tensor>,
}

fn conv_param(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, out_ch: usize, in_ch: usize) -> Result<()> {
    let fan_in = in_ch * 9;
    store.insert(
        format!("{name}.weight"),
        init::kaiming_normal(rng, out_ch * fan_in, fan_in),
        &[out_ch, in_ch, 3, 3],
    )?;
    store.insert(format!("{name}.bias"), vec![0.0; out_ch], &[out_ch])?;
    Ok(())
}

impl Generator {
    /// Seeded initialization; `W` starts at the identity.
    pub fn new(seed: u64) -> Self {
        Self::init(seed).expect("fixed shapes are consistent")
    }

    fn init(seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::trainable();
        for (i, (cin, cout)) in ENCODER.iter().enumerate() {
            conv_param(&mut p, &mut rng, &format!("enc.{i}"), *cout, *cin)?;
        }
        let c = BOTTLENECK_CHANNELS;
        let mut eye = vec![0.0; c * c];
        (0..c).for_each(|i| eye[i * c + i] = 1.0);
        p.insert("comatch.weight", eye, &[c, c])?;
        for i in 0..RESIDUAL_BLOCKS {
            conv_param(&mut p, &mut rng, &format!("res.{i}.a"), c, c)?;
            conv_param(&mut p, &mut rng, &format!("res.{i}.b"), c, c)?;
        }
        for (i, (cin, cout)) in DECODER.iter().enumerate() {
            conv_param(&mut p, &mut rng, &format!("dec.{i}"), *cout, *cin)?;
        }
        conv_param(&mut p, &mut rng, "out", 3, DECODER[2].1)?;
        Ok(Generator { params: p, style: None })
    }

    /// Wraps restored parameters; every expected name must be present with
    /// the expected shape.
    pub fn from_params(params: ParamStore) -> Result<Self> {
        let reference = Generator::new(0);
        for (name, t) in reference.params.iter() {
            let got = params.get(name)?;
            if got.shape() != t.shape() {
                return Err(StyleError::Dimension(format!(
                    "parameter {name}: expected {:?}, got {:?}",
                    t.shape(),
                    got.shape()
                )));
            }
        }
        if params.len() != reference.params.len() {
            return Err(StyleError::Dimension(format!(
                "expected {} parameters, got {}",
                reference.params.len(),
                params.len()
            )));
        }
        Ok(Generator { params, style: None })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Stores the style image (`[3, H, W]` or `[1, 3, H, W]`) used by
    /// subsequent forward passes.
    pub fn set_style(&mut self, x_s: &Tensor) -> Result<()> {
        let x = as_batch(x_s)?;
        let (n, c, h, w) = x.dims4()?;
        if n != 1 || c != 3 {
            return Err(StyleError::Dimension(format!("style must be one 3-channel image, got {:?}", x.shape())));
        }
        check_side(h, w)?;
        self.style = Some(x.detach());
        Ok(())
    }

    pub fn style(&self) -> Option<&Tensor> {
        self.style.as_ref()
    }

    fn conv(&self, x: &Tensor, name: &str, stride: usize) -> Result<Tensor> {
        let w = self.params.get(&format!("{name}.weight"))?;
        let b = self.params.get(&format!("{name}.bias"))?;
        Ok(x.conv2d(w, Some(b), stride, 1)?)
    }

    fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for i in 0..ENCODER.len() {
            h = self.conv(&h, &format!("enc.{i}"), 2)?.instance_norm(IN_EPS)?.relu();
        }
        Ok(h)
    }

    /// Gram of the encoded style image; differentiable w.r.t. the encoder.
    pub fn style_gram(&self) -> Result<GramMatrix> {
        let style = self.style.as_ref().ok_or(StyleError::StyleUnset)?;
        gram(&FeatureMap::new(self.encode(style)?, 1)?)
    }

    /// Stylizes a `[3, H, W]` image or `[N, 3, H, W]` batch with the current
    /// style. Sides must be multiples of [`SIDE_MULTIPLE`].
    pub fn forward(&self, x_c: &Tensor) -> Result<Tensor> {
        let target = self.style_gram()?;
        let x = as_batch(x_c)?;
        let (_, c, h, w) = x.dims4()?;
        if c != 3 {
            return Err(StyleError::Dimension(format!("content must have 3 channels, got {c}")));
        }
        check_side(h, w)?;
        let enc = FeatureMap::new(self.encode(&x)?, 1)?;
        let mut y = comatch(&enc, &target, self.params.get("comatch.weight")?)?.values;
        for i in 0..RESIDUAL_BLOCKS {
            let a = self.conv(&y, &format!("res.{i}.a"), 1)?.instance_norm(IN_EPS)?.relu();
            let b = self.conv(&a, &format!("res.{i}.b"), 1)?.instance_norm(IN_EPS)?;
            y = y.add(&b)?;
        }
        for i in 0..DECODER.len() {
            y = self
                .conv(&y.upsample_nearest(2)?, &format!("dec.{i}"), 1)?
                .instance_norm(IN_EPS)?
                .relu();
        }
        let out = self.conv(&y, "out", 1)?.sigmoid();
        if x_c.rank() == 3 {
            return Ok(out.reshape(&[3, h, w])?);
        }
        Ok(out)
    }
}

fn as_batch(x: &Tensor) -> Result<Tensor> {
    match x.rank() {
        3 => {
            let s = x.shape().to_vec();
            Ok(x.reshape(&[1, s[0], s[1], s[2]])?)
        }
        4 => Ok(x.clone()),
        r => Err(StyleError::Dimension(format!("expected an image of rank 3 or 4, got rank {r}"))),
    }
}

fn check_side(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || !h.is_multiple_of(SIDE_MULTIPLE) || !w.is_multiple_of(SIDE_MULTIPLE) {
        return Err(StyleError::Dimension(format!(
            "image sides must be positive multiples of {SIDE_MULTIPLE}, got {h}x{w}"
        )));
    }
    Ok(())
}

/// Nearest size whose sides are positive multiples of [`SIDE_MULTIPLE`].
pub fn compatible_size(height: usize, width: usize) -> (usize, usize) {
    let round = |v: usize| (((v + SIDE_MULTIPLE / 2) / SIDE_MULTIPLE) * SIDE_MULTIPLE).max(SIDE_MULTIPLE);
    (round(height), round(width))
}
