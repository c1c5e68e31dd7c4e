//! Finite-difference checks of every objective term against autodiff.
//! Each check returns the largest relative error over the probed entries.

use rand::seq::index::sample;
use rand::Rng;
use thermoscope_core::seed;
use thermoscope_style::loss::{content_loss, style_loss, tv_loss};
use thermoscope_style::{
    extract_features, set_style_targets, total_objective, FeatureMap, FeaturePyramid, Generator, LossNetwork,
    LossWeights,
};
use thermoscope_tensor::gradcheck::{central_difference, max_relative_error};
use thermoscope_tensor::Tensor;

/// Step for the loss terms, which are smooth in their arguments.
pub const STEP: f64 = 1e-3;
/// Step for compositions with the ReLU/max-pool networks; a larger step
/// crosses activation kinks and measures the secant, not the gradient.
pub const KINKED_STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-3;
pub const PROBES: usize = 10;
/// Denominator floor; gradients this small are compared absolutely.
const FLOOR: f64 = 1e-6;

pub fn random_image(seed: u64, name: &str, shape: &[usize]) -> Vec<f64> {
    let mut rng = seed::rng(seed, name);
    let n: usize = shape.iter().product();
    (0..n).map(|_| rng.random_range(0.1..0.9)).collect()
}

fn probes(seed: u64, len: usize) -> Vec<usize> {
    sample(&mut seed::rng(seed, "probes"), len, PROBES).into_vec()
}

/// Compares `grad(f)` w.r.t. every tensor in `xs` against central
/// differences at [`PROBES`] entries drawn across all of them.
fn check_inputs<F>(xs: &[Tensor], step: f64, seed: u64, f: F) -> f64
where
    F: Fn(&[Tensor]) -> Tensor,
{
    let vars: Vec<Tensor> = xs.iter().map(|t| t.detach_var()).collect();
    let grads = f(&vars).backward().unwrap();
    let total: usize = xs.iter().map(Tensor::numel).sum();
    let mut worst: f64 = 0.0;
    for flat in probes(seed, total) {
        let (mut k, mut i) = (0, flat);
        while i >= xs[k].numel() {
            i -= xs[k].numel();
            k += 1;
        }
        let analytic = grads.get(&vars[k]).unwrap()[i];
        let numeric = central_difference(xs[k].data(), &[i], step, |p| {
            let mut probe = xs.to_vec();
            probe[k] = Tensor::new(p.to_vec(), xs[k].shape()).unwrap();
            f(&probe).item().unwrap()
        })[0];
        worst = worst.max(max_relative_error(&[analytic], &[numeric], FLOOR));
    }
    worst
}

const SHAPE: [usize; 4] = [1, 3, 32, 32];

fn image(seed: u64, name: &str) -> Tensor {
    Tensor::new(random_image(seed, name, &SHAPE), &SHAPE).unwrap()
}

/// Content term w.r.t. the generated-side feature map of a 3×32×32 pair.
pub fn content_error(net: &LossNetwork, seed: u64) -> f64 {
    let gen = extract_features(&image(seed, "x"), net).unwrap().content().detach();
    let fc = extract_features(&image(seed, "content"), net).unwrap().content().detach();
    let scale = gen.scale_index;
    check_inputs(&[gen.values], STEP, seed, |t| {
        content_loss(&FeatureMap::new(t[0].clone(), scale).unwrap(), &fc).unwrap()
    })
}

/// Style term w.r.t. every map of the generated-side pyramid.
pub fn style_error(net: &LossNetwork, seed: u64) -> f64 {
    let gen = extract_features(&image(seed, "x"), net).unwrap();
    let targets = set_style_targets(&image(seed, "style"), net).unwrap();
    let maps: Vec<Tensor> = gen.maps.iter().map(|m| m.values.detach()).collect();
    check_inputs(&maps, STEP, seed, |t| {
        let pyramid = FeaturePyramid {
            maps: t
                .iter()
                .enumerate()
                .map(|(j, v)| FeatureMap::new(v.clone(), j + 1).unwrap())
                .collect(),
            content_scale: gen.content_scale,
        };
        style_loss(&pyramid, &targets).unwrap()
    })
}

pub fn tv_error(seed: u64) -> f64 {
    check_inputs(&[image(seed, "x")], STEP, seed, |t| tv_loss(&t[0]).unwrap())
}

/// Loss-network backward: content term w.r.t. the input pixels.
pub fn network_error(net: &LossNetwork, seed: u64) -> f64 {
    let fc = extract_features(&image(seed, "content"), net).unwrap().content().detach();
    check_inputs(&[image(seed, "x")], KINKED_STEP, seed, |t| {
        content_loss(net.extract(&t[0]).unwrap().content(), &fc).unwrap()
    })
}

/// Total objective w.r.t. a slice of generator parameters spread over the
/// encoder, the CoMatch weight and the output layer.
pub fn total_error(net: &LossNetwork, seed: u64) -> f64 {
    let x_c = image(seed, "content");
    let x_s = image(seed, "style");
    let weights = LossWeights::default();
    let mut generator = Generator::new(seed);
    let (total, _) = total_objective(&mut generator, &x_c, &x_s, &weights, net).unwrap();
    let grads = total.backward().unwrap();

    let mut rng = seed::rng(seed, "param-slice");
    let names = ["enc.0.weight", "comatch.weight", "res.2.a.weight", "out.weight", "out.bias"];
    let mut worst: f64 = 0.0;
    for k in 0..PROBES {
        let name = names[k % names.len()];
        let param = generator.params().get(name).unwrap().clone();
        let i = rng.random_range(0..param.numel());
        let analytic = grads.get(&param).unwrap()[i];
        let base = param.to_vec();
        let numeric = central_difference(&base, &[i], KINKED_STEP, |p| {
            let mut g = generator.clone();
            g.params_mut().assign(name, p.to_vec()).unwrap();
            total_objective(&mut g, &x_c, &x_s, &weights, net).unwrap().1.total
        })[0];
        worst = worst.max(max_relative_error(&[analytic], &[numeric], FLOOR));
    }
    worst
}
