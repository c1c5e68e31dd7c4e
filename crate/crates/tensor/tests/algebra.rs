use proptest::prelude::*;
use thermoscope_tensor::Tensor;

fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

proptest! {
    #[test]
    fn matmul_matches_triple_loop(m in 1usize..6, k in 1usize..6, n in 1usize..6, seed in any::<u64>()) {
        let vals = |len: usize, s: u64| -> Vec<f64> {
            (0..len).map(|i| (((i as u64).wrapping_mul(2654435761) ^ s) % 1000) as f64 / 250.0 - 2.0).collect()
        };
        let a = vals(m * k, seed);
        let b = vals(k * n, seed.rotate_left(7));
        let got = Tensor::new(a.clone(), &[m, k]).unwrap()
            .matmul(&Tensor::new(b.clone(), &[k, n]).unwrap()).unwrap();
        let expect = naive_matmul(&a, &b, m, k, n);
        for (g, e) in got.data().iter().zip(&expect) {
            prop_assert!((g - e).abs() < 1e-10);
        }
    }

    #[test]
    fn double_transpose_is_identity(rows in 1usize..7, cols in 1usize..7, batch in 1usize..3) {
        let data: Vec<f64> = (0..rows * cols * batch).map(|v| v as f64).collect();
        let t = Tensor::new(data.clone(), &[batch, rows, cols]).unwrap();
        let back = t.transpose().unwrap().transpose().unwrap();
        prop_assert_eq!(back.data(), &data[..]);
        prop_assert_eq!(back.shape(), t.shape());
    }
}

#[test]
fn instance_norm_output_is_standardized() {
    let x = Tensor::new((0..32).map(|v| (v * v) as f64 * 0.1).collect(), &[1, 2, 4, 4]).unwrap();
    let y = x.instance_norm(0.0).unwrap();
    for plane in y.data().chunks(16) {
        let mean: f64 = plane.iter().sum::<f64>() / 16.0;
        let var: f64 = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-9);
    }
}
