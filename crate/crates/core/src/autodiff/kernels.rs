use super::tensor::{matmul, Real, Shape, Tensor};

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn out_dim(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    fn new(xs: Shape, ws: Shape, stride: usize, pad: usize) -> Self {
        ConvGeom {
            c: xs[1],
            h: xs[2],
            w: xs[3],
            kh: ws[2],
            kw: ws[3],
            oh: out_dim(xs[2], ws[2], stride, pad),
            ow: out_dim(xs[3], ws[3], stride, pad),
            stride,
            pad,
        }
    }

    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Source pixel of column entry `(ki, kj)` at output `(oy, ox)`.
    fn src(&self, ki: usize, kj: usize, oy: usize, ox: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ki) as isize - self.pad as isize;
        let x = (ox * self.stride + kj) as isize - self.pad as isize;
        (y >= 0 && x >= 0 && (y as usize) < self.h && (x as usize) < self.w).then_some((y as usize, x as usize))
    }

    fn im2col<T: Real>(&self, img: &[T], cols: &mut [T]) {
        let ncol = self.cols();
        for ci in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * ncol..(row + 1) * ncol];
                    for oy in 0..self.oh {
                        for ox in 0..self.ow {
                            dst[oy * self.ow + ox] = match self.src(ki, kj, oy, ox) {
                                Some((y, x)) => img[(ci * self.h + y) * self.w + x],
                                None => T::zero(),
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Real>(&self, cols: &[T], img: &mut [T]) {
        let ncol = self.cols();
        for ci in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * ncol..(row + 1) * ncol];
                    for oy in 0..self.oh {
                        for ox in 0..self.ow {
                            if let Some((y, x)) = self.src(ki, kj, oy, ox) {
                                let d = &mut img[(ci * self.h + y) * self.w + x];
                                *d = *d + src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation with zero padding via im2col + GEMM.
pub(crate) fn conv2d_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, stride: usize, pad: usize) -> Tensor<T> {
    let g = ConvGeom::new(x.shape, w.shape, stride, pad);
    let (n, oc) = (x.shape[0], w.shape[0]);
    let in_per = g.c * g.h * g.w;
    let out_per = oc * g.cols();
    let mut out = Tensor::zeros([n, oc, g.oh, g.ow]);
    let mut cols = vec![T::zero(); g.rows() * g.cols()];
    for bi in 0..n {
        g.im2col(&x.data[bi * in_per..(bi + 1) * in_per], &mut cols);
        let dst = &mut out.data[bi * out_per..(bi + 1) * out_per];
        for (o, row) in dst.chunks_mut(g.cols()).enumerate() {
            row.fill(b.data[o]);
        }
        matmul(oc, g.rows(), g.cols(), &w.data, false, &cols, false, dst, true);
    }
    out
}

pub(crate) fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let g = ConvGeom::new(x.shape, w.shape, stride, pad);
    let (n, oc) = (x.shape[0], w.shape[0]);
    let in_per = g.c * g.h * g.w;
    let out_per = oc * g.cols();
    let mut gx = Tensor::zeros(x.shape);
    let mut gw = Tensor::zeros(w.shape);
    let mut gb = Tensor::zeros([1, oc, 1, 1]);
    let mut cols = vec![T::zero(); g.rows() * g.cols()];
    let mut dcols = vec![T::zero(); g.rows() * g.cols()];
    for bi in 0..n {
        let go = &gout.data[bi * out_per..(bi + 1) * out_per];
        for (o, row) in go.chunks(g.cols()).enumerate() {
            gb.data[o] = gb.data[o] + row.iter().copied().sum();
        }
        g.im2col(&x.data[bi * in_per..(bi + 1) * in_per], &mut cols);
        // dW += dOut * cols^T
        matmul(oc, g.cols(), g.rows(), go, false, &cols, true, &mut gw.data, true);
        // dcols = W^T * dOut
        matmul(g.rows(), oc, g.cols(), &w.data, true, go, false, &mut dcols, false);
        g.col2im(&dcols, &mut gx.data[bi * in_per..(bi + 1) * in_per]);
    }
    (gx, gw, gb)
}

/// 2x2 stride-2 max pooling; the first maximum in scan order wins ties.
pub(crate) fn maxpool2_forward<T: Real>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let [n, c, h, w] = x.shape;
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut argmax = vec![0usize; out.numel()];
    let mut k = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + 2 * i * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * w + 2 * j + dj;
                    if x.data[idx] > x.data[best] {
                        best = idx;
                    }
                }
                out.data[k] = x.data[best];
                argmax[k] = best;
                k += 1;
            }
        }
    }
    (out, argmax)
}

/// Source rows and weights for one axis of a 2x bilinear upsample with
/// half-pixel centers: output `o` samples input `(o + 0.5) / 2 - 0.5`.
fn upsample_taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub(crate) fn upsample2_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape;
    let (ty, tx) = (upsample_taps(h), upsample_taps(w));
    let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
    for plane in 0..n * c {
        let src = &x.data[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out.data[plane * 4 * h * w..(plane + 1) * 4 * h * w];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            let ly = T::of(ly);
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let lx = T::of(lx);
                let top = src[y0 * w + x0] * (T::one() - lx) + src[y0 * w + x1] * lx;
                let bot = src[y1 * w + x0] * (T::one() - lx) + src[y1 * w + x1] * lx;
                dst[oy * 2 * w + ox] = top * (T::one() - ly) + bot * ly;
            }
        }
    }
    out
}

/// Exact adjoint of [`upsample2_forward`].
pub(crate) fn upsample2_backward<T: Real>(xshape: Shape, g: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = xshape;
    let (ty, tx) = (upsample_taps(h), upsample_taps(w));
    let mut gx = Tensor::zeros(xshape);
    for plane in 0..n * c {
        let src = &g.data[plane * 4 * h * w..(plane + 1) * 4 * h * w];
        let dst = &mut gx.data[plane * h * w..(plane + 1) * h * w];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            let ly = T::of(ly);
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let lx = T::of(lx);
                let v = src[oy * 2 * w + ox];
                let top = v * (T::one() - ly);
                let bot = v * ly;
                dst[y0 * w + x0] = dst[y0 * w + x0] + top * (T::one() - lx);
                dst[y0 * w + x1] = dst[y0 * w + x1] + top * lx;
                dst[y1 * w + x0] = dst[y1 * w + x0] + bot * (T::one() - lx);
                dst[y1 * w + x1] = dst[y1 * w + x1] + bot * lx;
            }
        }
    }
    gx
}

pub(crate) fn channel_mean_max_forward<T: Real>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let [n, c, h, w] = x.shape;
    let hw = h * w;
    let mut out = Tensor::zeros([n, 2, h, w]);
    let mut argmax = vec![0usize; n * hw];
    let inv_c = T::of(1.0 / c as f64);
    for bi in 0..n {
        for p in 0..hw {
            let mut sum = T::zero();
            let mut best = bi * c * hw + p;
            for ci in 0..c {
                let idx = (bi * c + ci) * hw + p;
                sum = sum + x.data[idx];
                if x.data[idx] > x.data[best] {
                    best = idx;
                }
            }
            out.data[bi * 2 * hw + p] = sum * inv_c;
            out.data[bi * 2 * hw + hw + p] = x.data[best];
            argmax[bi * hw + p] = best;
        }
    }
    (out, argmax)
}

pub(crate) fn channel_mean_max_backward<T: Real>(xshape: Shape, argmax: &[usize], g: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = xshape;
    let hw = h * w;
    let inv_c = T::of(1.0 / c as f64);
    let mut gx = Tensor::zeros(xshape);
    for bi in 0..n {
        for p in 0..hw {
            let gm = g.data[bi * 2 * hw + p] * inv_c;
            for ci in 0..c {
                let idx = (bi * c + ci) * hw + p;
                gx.data[idx] = gx.data[idx] + gm;
            }
            let a = argmax[bi * hw + p];
            gx.data[a] = gx.data[a] + g.data[bi * 2 * hw + hw + p];
        }
    }
    gx
}
