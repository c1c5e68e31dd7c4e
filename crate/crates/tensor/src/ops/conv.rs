use super::linalg::{gemm, Layout};
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds one image `[C,H,W]` into `[C*kh*kw, out_h*out_w]` with zero padding.
fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let ncols = g.cols();
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + j) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
fn col2im(cols: &[f64], g: &ConvGeom, x: &mut [f64]) {
    let ncols = g.cols();
    for c in 0..g.channels {
        let plane = &mut x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let line = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter().enumerate() {
                        let ix = (ox * g.stride + j) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

impl Tensor {
    /// 2-D convolution of an NCHW input with `[O, C, kh, kw]` weights and
    /// symmetric zero padding.
    pub fn conv2d(
        &self,
        weight: &Tensor,
        bias: Option<&Tensor>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4()?;
        let (o, wc, kh, kw) = weight.dims4()?;
        if wc != c {
            return Err(TensorError::mismatch("conv2d", self.shape(), weight.shape()));
        }
        if stride == 0 {
            return Err(TensorError::invalid("conv2d", "stride must be positive"));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(TensorError::invalid(
                "conv2d",
                format!("input {h}x{w} (pad {pad}) smaller than kernel {kh}x{kw}"),
            ));
        }
        if let Some(b) = bias {
            if b.shape() != [o] {
                return Err(TensorError::mismatch("conv2d bias", weight.shape(), b.shape()));
            }
        }
        let geom = ConvGeom {
            channels: c,
            height: h,
            width: w,
            kh,
            kw,
            stride,
            pad,
            out_h: (h + 2 * pad - kh) / stride + 1,
            out_w: (w + 2 * pad - kw) / stride + 1,
        };
        let (rows, ncols) = (geom.rows(), geom.cols());
        let in_plane = c * h * w;
        let out_plane = o * ncols;

        let mut out = vec![0.0; n * out_plane];
        let mut cols = vec![0.0; rows * ncols];
        for b in 0..n {
            im2col(&self.data()[b * in_plane..(b + 1) * in_plane], &geom, &mut cols);
            let dst = &mut out[b * out_plane..(b + 1) * out_plane];
            gemm(
                o,
                rows,
                ncols,
                1.0,
                weight.data(),
                Layout::row_major(rows),
                &cols,
                Layout::row_major(ncols),
                0.0,
                dst,
            );
            if let Some(bias) = bias {
                for (oc, chunk) in dst.chunks_mut(ncols).enumerate() {
                    let bv = bias.data()[oc];
                    chunk.iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        drop(cols);

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        let (x, wt) = (self.clone(), weight.clone());
        let bias_rg = bias.map(Tensor::requires_grad);
        Ok(Tensor::from_op(
            out,
            vec![n, o, geom.out_h, geom.out_w],
            parents,
            move |g| {
                let want_x = x.requires_grad();
                let want_w = wt.requires_grad();
                let mut gx = want_x.then(|| vec![0.0; x.numel()]);
                let mut gw = want_w.then(|| vec![0.0; wt.numel()]);
                let mut cols = vec![0.0; rows * ncols];
                for b in 0..n {
                    let gout = &g[b * out_plane..(b + 1) * out_plane];
                    if let Some(gw) = gw.as_mut() {
                        im2col(&x.data()[b * in_plane..(b + 1) * in_plane], &geom, &mut cols);
                        // dW += dY · colsᵀ
                        gemm(
                            o,
                            ncols,
                            rows,
                            1.0,
                            gout,
                            Layout::row_major(ncols),
                            &cols,
                            Layout::transposed(ncols),
                            1.0,
                            gw,
                        );
                    }
                    if let Some(gx) = gx.as_mut() {
                        // dcols = Wᵀ · dY
                        gemm(
                            rows,
                            o,
                            ncols,
                            1.0,
                            wt.data(),
                            Layout::transposed(rows),
                            gout,
                            Layout::row_major(ncols),
                            0.0,
                            &mut cols,
                        );
                        col2im(&cols, &geom, &mut gx[b * in_plane..(b + 1) * in_plane]);
                    }
                }
                let mut grads = vec![gx, gw];
                if let Some(rg) = bias_rg {
                    grads.push(rg.then(|| {
                        let mut gb = vec![0.0; o];
                        for (i, chunk) in g.chunks(ncols).enumerate() {
                            gb[i % o] += chunk.iter().sum::<f64>();
                        }
                        gb
                    }));
                }
                grads
            },
        ))
    }

    /// Non-overlapping max pooling with window and stride `k` (floor mode).
    pub fn max_pool2d(&self, k: usize) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4()?;
        if k == 0 || h < k || w < k {
            return Err(TensorError::invalid(
                "max_pool2d",
                format!("window {k} does not fit input {h}x{w}"),
            ));
        }
        let (oh, ow) = (h / k, w / k);
        let mut out = vec![0.0; n * c * oh * ow];
        let mut argmax = vec![0usize; out.len()];
        for p in 0..n * c {
            let src = &self.data()[p * h * w..(p + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for dy in 0..k {
                        for dx in 0..k {
                            let idx = (oy * k + dy) * w + ox * k + dx;
                            if src[idx] > best {
                                best = src[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = p * oh * ow + oy * ow + ox;
                    out[o] = best;
                    argmax[o] = p * h * w + best_idx;
                }
            }
        }
        let numel = self.numel();
        Ok(Tensor::from_op(out, vec![n, c, oh, ow], vec![self.clone()], move |g| {
            let mut gx = vec![0.0; numel];
            for (gv, &idx) in g.iter().zip(&argmax) {
                gx[idx] += gv;
            }
            vec![Some(gx)]
        }))
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&self, factor: usize) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4()?;
        if factor == 0 {
            return Err(TensorError::invalid("upsample_nearest", "factor must be positive"));
        }
        let (oh, ow) = (h * factor, w * factor);
        let mut out = vec![0.0; n * c * oh * ow];
        for p in 0..n * c {
            let src = &self.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
            for y in 0..oh {
                for x in 0..ow {
                    dst[y * ow + x] = src[(y / factor) * w + x / factor];
                }
            }
        }
        let numel = self.numel();
        Ok(Tensor::from_op(out, vec![n, c, oh, ow], vec![self.clone()], move |g| {
            let mut gx = vec![0.0; numel];
            for p in 0..n * c {
                let src = &g[p * oh * ow..(p + 1) * oh * ow];
                let dst = &mut gx[p * h * w..(p + 1) * h * w];
                for y in 0..oh {
                    for x in 0..ow {
                        dst[(y / factor) * w + x / factor] += src[y * ow + x];
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Mirror padding without edge repetition (`pad < H` and `pad < W`).
    pub fn reflect_pad2d(&self, pad: usize) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4()?;
        if pad >= h || pad >= w {
            return Err(TensorError::invalid(
                "reflect_pad2d",
                format!("pad {pad} too large for {h}x{w}"),
            ));
        }
        let (oh, ow) = (h + 2 * pad, w + 2 * pad);
        let reflect = |i: usize, len: usize| -> usize {
            let i = i as isize - pad as isize;
            let len = len as isize;
            let r = if i < 0 {
                -i
            } else if i >= len {
                2 * (len - 1) - i
            } else {
                i
            };
            r as usize
        };
        let index: Vec<usize> = (0..oh)
            .flat_map(|y| (0..ow).map(move |x| (y, x)))
            .map(|(y, x)| reflect(y, h) * w + reflect(x, w))
            .collect();
        let mut out = vec![0.0; n * c * oh * ow];
        for p in 0..n * c {
            let src = &self.data()[p * h * w..(p + 1) * h * w];
            for (dst, &idx) in out[p * oh * ow..(p + 1) * oh * ow].iter_mut().zip(&index) {
                *dst = src[idx];
            }
        }
        let numel = self.numel();
        Ok(Tensor::from_op(out, vec![n, c, oh, ow], vec![self.clone()], move |g| {
            let mut gx = vec![0.0; numel];
            for p in 0..n * c {
                let src = &g[p * oh * ow..(p + 1) * oh * ow];
                let dst = &mut gx[p * h * w..(p + 1) * h * w];
                for (gv, &idx) in src.iter().zip(&index) {
                    dst[idx] += gv;
                }
            }
            vec![Some(gx)]
        }))
    }
}
