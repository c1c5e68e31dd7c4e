//! Independent loop-level oracles for the Gram and CoMatch operators, and
//! the analytically forced zero-loss cases.

use rand::Rng;
use thermoscope_core::seed;
use thermoscope_style::loss::{content_loss, style_loss, tv_loss};
use thermoscope_style::{comatch, extract_features, gram, set_style_targets, FeatureMap, GramMatrix, LossNetwork, LossWeights};
use thermoscope_tensor::Tensor;

pub fn random_map(seed: u64, c: usize, h: usize, w: usize) -> Vec<f64> {
    let mut rng = seed::rng(seed, &format!("map-{c}x{h}x{w}"));
    (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `G[a][b] = Σ_{y,x} F[a,y,x] F[b,y,x] / (C·H·W)` by explicit loops.
pub fn gram_oracle(f: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let mut g = vec![0.0; c * c];
    for a in 0..c {
        for b in 0..c {
            let mut s = 0.0;
            for y in 0..h {
                for x in 0..w {
                    s += f[(a * h + y) * w + x] * f[(b * h + y) * w + x];
                }
            }
            g[a * c + b] = s / (c * h * w) as f64;
        }
    }
    g
}

/// `ŷ[c, p] = Σ_a (W G)[a, c] · F[a, p]` by explicit loops.
pub fn comatch_oracle(f: &[f64], g: &[f64], w: &[f64], c: usize, p: usize) -> Vec<f64> {
    let mut wg = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            wg[i * c + j] = (0..c).map(|k| w[i * c + k] * g[k * c + j]).sum();
        }
    }
    let mut y = vec![0.0; c * p];
    for out in 0..c {
        for q in 0..p {
            y[out * p + q] = (0..c).map(|a| wg[a * c + out] * f[a * p + q]).sum();
        }
    }
    y
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Largest relative entry error of `gram` against the oracle over every
/// map with `C, H, W ∈ 1..=max_side`.
pub fn gram_sweep(max_side: usize, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for c in 1..=max_side {
        for h in 1..=max_side {
            for w in 1..=max_side {
                let data = random_map(seed, c, h, w);
                let map = FeatureMap::new(Tensor::new(data.clone(), &[c, h, w]).unwrap(), 1).unwrap();
                let got = gram(&map).unwrap();
                let want = gram_oracle(&data, c, h, w);
                for (x, y) in got.item(0).iter().zip(&want) {
                    worst = worst.max(rel(*x, *y));
                }
            }
        }
    }
    worst
}

pub fn gram_of(data: Vec<f64>, c: usize) -> GramMatrix {
    GramMatrix {
        values: Tensor::new(data, &[1, c, c]).unwrap(),
        scale_index: 1,
        normalization: 1.0,
    }
}

pub fn identity(c: usize) -> Vec<f64> {
    let mut eye = vec![0.0; c * c];
    (0..c).for_each(|i| eye[i * c + i] = 1.0);
    eye
}

/// Worst deviations over `instances` random CoMatch problems:
/// `(identity, linearity in W, loop oracle)`, all relative.
pub fn comatch_sweep(instances: usize, seed: u64) -> (f64, f64, f64) {
    let mut rng = seed::rng(seed, "comatch");
    let (mut id_err, mut lin_err, mut oracle_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for k in 0..instances {
        let c = rng.random_range(1..=12);
        let h = rng.random_range(1..=9);
        let w = rng.random_range(1..=9);
        let alpha: f64 = rng.random_range(-3.0..3.0);
        let data = random_map(seed + k as u64, c, h, w);
        let map = FeatureMap::new(Tensor::new(data.clone(), &[c, h, w]).unwrap(), 1).unwrap();
        let eye = identity(c);

        let same = comatch(&map, &gram_of(eye.clone(), c), &Tensor::new(eye, &[c, c]).unwrap()).unwrap();
        for (a, b) in same.values.data().iter().zip(&data) {
            id_err = id_err.max(rel(*a, *b));
        }

        let g: Vec<f64> = (0..c * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wm: Vec<f64> = (0..c * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let base = comatch(&map, &gram_of(g.clone(), c), &Tensor::new(wm.clone(), &[c, c]).unwrap()).unwrap();
        let scaled_w: Vec<f64> = wm.iter().map(|v| alpha * v).collect();
        let scaled = comatch(&map, &gram_of(g.clone(), c), &Tensor::new(scaled_w, &[c, c]).unwrap()).unwrap();
        for (s, b) in scaled.values.data().iter().zip(base.values.data()) {
            lin_err = lin_err.max(rel(*s, alpha * b));
        }
        let want = comatch_oracle(&data, &g, &wm, c, h * w);
        for (a, b) in base.values.data().iter().zip(&want) {
            oracle_err = oracle_err.max(rel(*a, *b));
        }
    }
    (id_err, lin_err, oracle_err)
}

/// Values of each term on its forced-zero input; all must be exactly 0.
pub fn forced_zeros(net: &LossNetwork, seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = seed::rng(seed, "forced-zero");
    let shape = [1, 3, 32, 32];
    let x = Tensor::new((0..3 * 32 * 32).map(|_| rng.random_range(0.0..1.0)).collect(), &shape).unwrap();
    let pyramid = extract_features(&x, net).unwrap();
    let targets = set_style_targets(&x, net).unwrap();
    let zero_weights = LossWeights {
        lambda_c: 0.0,
        lambda_s: 0.0,
        lambda_tv: 0.0,
    };
    vec![
        ("content(F, F)", content_loss(pyramid.content(), pyramid.content()).unwrap().item().unwrap()),
        ("style(x, targets(x))", style_loss(&pyramid, &targets).unwrap().item().unwrap()),
        ("tv(constant)", tv_loss(&Tensor::full(&[3, 32, 32], rng.random_range(0.0..1.0))).unwrap().item().unwrap()),
        ("zero weights", zero_weights.combine(2.0, 0.5, 1000.0)),
        (
            "style(zero image, targets(zero image))",
            set_style_targets(&Tensor::zeros(&shape), net)
                .unwrap()
                .grams
                .iter()
                .flat_map(|g| g.values.data().to_vec())
                .map(f64::abs)
                .sum(),
        ),
    ]
}
