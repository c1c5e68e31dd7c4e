use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Row/column strides of a matrix operand.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Layout {
    pub rs: usize,
    pub cs: usize,
}

impl Layout {
    /// Row-major `rows x cols`.
    pub fn row_major(cols: usize) -> Self {
        Layout { rs: cols, cs: 1 }
    }

    /// The transpose of a row-major `rows x cols` matrix, read as `cols x rows`.
    pub fn transposed(cols: usize) -> Self {
        Layout { rs: 1, cs: cols }
    }
}

/// `c = alpha * a · b + beta * c` with `a: m x k`, `b: k x n`, `c` row-major `m x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    la: Layout,
    b: &[f64],
    lb: Layout,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n, "gemm: output buffer too small");
    if k > 0 {
        assert!(a.len() > (m - 1) * la.rs + (k - 1) * la.cs, "gemm: lhs too small");
        assert!(b.len() > (k - 1) * lb.rs + (n - 1) * lb.cs, "gemm: rhs too small");
    }
    // SAFETY: the asserts above bound every index dgemm reads or writes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            la.rs as isize,
            la.cs as isize,
            b.as_ptr(),
            lb.rs as isize,
            lb.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tensor {
    /// Matrix product. Supported forms:
    /// `[m,k]·[k,n]`, batched `[b,m,k]·[b,k,n]`, and `[m,k]·[b,k,n]` where the
    /// left operand is shared across the batch.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        match (self.shape(), rhs.shape()) {
            (&[m, k], &[k2, n]) if k == k2 => Ok(self.matmul_batched(rhs, 1, m, k, n, false)),
            (&[b, m, k], &[b2, k2, n]) if b == b2 && k == k2 => {
                Ok(self.matmul_batched(rhs, b, m, k, n, false))
            }
            (&[m, k], &[b, k2, n]) if k == k2 => Ok(self.matmul_batched(rhs, b, m, k, n, true)),
            _ => Err(TensorError::mismatch("matmul", self.shape(), rhs.shape())),
        }
    }

    fn matmul_batched(
        &self,
        rhs: &Tensor,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        shared_lhs: bool,
    ) -> Tensor {
        let a_stride = if shared_lhs { 0 } else { m * k };
        let mut out = vec![0.0; batch * m * n];
        for bi in 0..batch {
            gemm(
                m,
                k,
                n,
                1.0,
                &self.data()[bi * a_stride..bi * a_stride + m * k],
                Layout::row_major(k),
                &rhs.data()[bi * k * n..(bi + 1) * k * n],
                Layout::row_major(n),
                0.0,
                &mut out[bi * m * n..(bi + 1) * m * n],
            );
        }
        let shape = if self.rank() == 2 && rhs.rank() == 2 {
            vec![m, n]
        } else {
            vec![batch, m, n]
        };
        let (a, b) = (self.clone(), rhs.clone());
        Tensor::from_op(out, shape, vec![self.clone(), rhs.clone()], move |g| {
            let ga = a.requires_grad().then(|| {
                let mut ga = vec![0.0; a.numel()];
                for bi in 0..batch {
                    let dst = if shared_lhs {
                        &mut ga[..]
                    } else {
                        &mut ga[bi * m * k..(bi + 1) * m * k]
                    };
                    // dA += dC · Bᵀ
                    gemm(
                        m,
                        n,
                        k,
                        1.0,
                        &g[bi * m * n..(bi + 1) * m * n],
                        Layout::row_major(n),
                        &b.data()[bi * k * n..(bi + 1) * k * n],
                        Layout::transposed(n),
                        1.0,
                        dst,
                    );
                }
                ga
            });
            let gb = b.requires_grad().then(|| {
                let mut gb = vec![0.0; b.numel()];
                for bi in 0..batch {
                    // dB = Aᵀ · dC
                    gemm(
                        k,
                        m,
                        n,
                        1.0,
                        &a.data()[bi * a_stride..bi * a_stride + m * k],
                        Layout::transposed(k),
                        &g[bi * m * n..(bi + 1) * m * n],
                        Layout::row_major(n),
                        0.0,
                        &mut gb[bi * k * n..(bi + 1) * k * n],
                    );
                }
                gb
            });
            vec![ga, gb]
        })
    }

    /// Swaps the last two axes of a rank-2 or rank-3 tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        let (batch, rows, cols) = match *self.shape() {
            [r, c] => (1, r, c),
            [b, r, c] => (b, r, c),
            _ => {
                return Err(TensorError::invalid(
                    "transpose",
                    format!("expected rank 2 or 3, got {:?}", self.shape()),
                ))
            }
        };
        let data = transpose_blocks(self.data(), batch, rows, cols);
        let mut shape = self.shape().to_vec();
        let r = shape.len();
        shape.swap(r - 2, r - 1);
        Ok(Tensor::from_op(data, shape, vec![self.clone()], move |g| {
            vec![Some(transpose_blocks(g, batch, cols, rows))]
        }))
    }
}

fn transpose_blocks(src: &[f64], batch: usize, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for b in 0..batch {
        let off = b * rows * cols;
        for r in 0..rows {
            for c in 0..cols {
                out[off + c * rows + r] = src[off + r * cols + c];
            }
        }
    }
    out
}
