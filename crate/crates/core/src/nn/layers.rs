//! Layer primitives with hand-written backward passes.
//!
//! Work is split per sample and partial sums are reduced in sample order, so
//! results are bit-identical regardless of the rayon thread count.

use rand::Rng;
use rayon::prelude::*;

use super::tensor::{gemm, Mat, Real, Tensor};
use crate::error::{Error, Result};

/// Valid destination range `[lo, hi)` for a tap offset `d` over `n` pixels,
/// i.e. positions `p` with `0 <= p + d < n`.
#[inline]
fn tap_range(d: isize, n: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).clamp(0, n as isize) as usize;
    (lo, hi.max(lo))
}

/// Unfolds one `(c, h, w)` image into a `(c*k*k, h*w)` patch matrix with
/// zero padding.
fn im2col<T: Real>(src: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let pad = (k / 2) as isize;
    let plane = h * w;
    cols.fill(T::zero());
    for i in 0..c {
        let img = &src[i * plane..][..plane];
        for ky in 0..k {
            let dy = ky as isize - pad;
            let (y0, y1) = tap_range(dy, h);
            for kx in 0..k {
                let dx = kx as isize - pad;
                let (x0, x1) = tap_range(dx, w);
                let row = &mut cols[((i * k + ky) * k + kx) * plane..][..plane];
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let sx0 = (x0 as isize + dx) as usize;
                    row[y * w + x0..y * w + x1].copy_from_slice(&img[sy * w + sx0..][..x1 - x0]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch gradients back onto the image.
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, k: usize, dst: &mut [T]) {
    let pad = (k / 2) as isize;
    let plane = h * w;
    for i in 0..c {
        let img = &mut dst[i * plane..][..plane];
        for ky in 0..k {
            let dy = ky as isize - pad;
            let (y0, y1) = tap_range(dy, h);
            for kx in 0..k {
                let dx = kx as isize - pad;
                let (x0, x1) = tap_range(dx, w);
                let row = &cols[((i * k + ky) * k + kx) * plane..][..plane];
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let sx0 = (x0 as isize + dx) as usize;
                    for (d, &v) in img[sy * w + sx0..][..x1 - x0].iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                        *d = *d + v;
                    }
                }
            }
        }
    }
}

/// Patch matrix of sample `b`; a 1x1 kernel needs none.
fn patches<'a, T: Real>(xd: &'a [T], b: usize, c: usize, h: usize, w: usize, k: usize, buf: &'a mut Vec<T>) -> &'a [T] {
    let src = &xd[b * c * h * w..][..c * h * w];
    if k == 1 {
        return src;
    }
    buf.resize(c * k * k * h * w, T::zero());
    im2col(src, c, h, w, k, buf);
    buf
}

fn conv_shapes<T: Real>(x: &Tensor<T>, kernel: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (n, c, h, w) = x.dims4()?;
    let (oc, ic, kh, kw) = kernel.dims4()?;
    if ic != c {
        return Err(Error::ShapeMismatch(format!("conv expects {ic} input channels, got {c}")));
    }
    if kh != kw || kh % 2 == 0 {
        return Err(Error::ShapeMismatch(format!("conv kernel must be odd and square, got {kh}x{kw}")));
    }
    Ok((n, c, h, w, oc, kh))
}

/// Stride-1 convolution with same padding (zeros). `kernel` is
/// `(out, in, k, k)` with odd `k`; `bias` has `out` elements.
pub fn conv2d<T: Real>(x: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w, oc, k) = conv_shapes(x, kernel)?;
    if bias.len() != oc {
        return Err(Error::ShapeMismatch(format!("bias has {} values for {oc} channels", bias.len())));
    }
    let plane = h * w;
    let ckk = c * k * k;
    let mut out = Tensor::zeros(&[n, oc, h, w]);
    let (xd, kd, bd) = (x.data(), kernel.data(), bias.data());
    out.data_mut().par_chunks_mut(oc * plane).enumerate().for_each(|(b, dst)| {
        for (o, row) in dst.chunks_mut(plane).enumerate() {
            row.fill(bd[o]);
        }
        let mut buf = Vec::new();
        let cols = patches(xd, b, c, h, w, k, &mut buf);
        gemm(Mat::new(kd, oc, ckk), Mat::new(cols, ckk, plane), T::one(), dst);
    });
    Ok(out)
}

/// Gradients of [`conv2d`] w.r.t. input, kernel and bias.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, c, h, w, oc, k) = conv_shapes(x, kernel)?;
    grad_out.expect_shape(&[n, oc, h, w])?;
    let plane = h * w;
    let ckk = c * k * k;
    let (xd, kd, gd) = (x.data(), kernel.data(), grad_out.data());

    let mut gx = Tensor::zeros(x.shape());
    let partial: Vec<Vec<T>> = gx
        .data_mut()
        .par_chunks_mut(c * plane)
        .enumerate()
        .map(|(b, dst)| {
            let g = &gd[b * oc * plane..][..oc * plane];
            let mut gcols = vec![T::zero(); ckk * plane];
            gemm(Mat::new(kd, oc, ckk).t(), Mat::new(g, oc, plane), T::zero(), &mut gcols);
            if k == 1 {
                dst.copy_from_slice(&gcols);
            } else {
                col2im(&gcols, c, h, w, k, dst);
            }
            let mut buf = Vec::new();
            let cols = patches(xd, b, c, h, w, k, &mut buf);
            let mut gk = vec![T::zero(); oc * ckk];
            gemm(Mat::new(g, oc, plane), Mat::new(cols, ckk, plane).t(), T::zero(), &mut gk);
            gk
        })
        .collect();
    let mut gk = Tensor::zeros(kernel.shape());
    for p in &partial {
        for (a, &v) in gk.data_mut().iter_mut().zip(p) {
            *a = *a + v;
        }
    }
    let gb = channel_sums(grad_out)?;
    Ok((gx, gk, gb))
}

/// Sum over batch and spatial positions for every channel.
fn channel_sums<T: Real>(t: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = t.dims4()?;
    let plane = h * w;
    let d = t.data();
    let sums = (0..c)
        .into_par_iter()
        .map(|ch| {
            (0..n)
                .map(|b| d[(b * c + ch) * plane..][..plane].iter().copied().sum::<T>())
                .fold(T::zero(), |a, v| a + v)
        })
        .collect();
    Tensor::from_vec(&[c], sums)
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Subgradient 0 at the origin.
pub fn relu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    x.zip_map(grad_out, |v, g| if v > T::zero() { g } else { T::zero() })
}

/// 2x2 max pooling, stride 2. Returns the output and, per output element,
/// the flat input index of the maximum (first in raster order on ties).
pub fn maxpool2<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddDimensions(h, w));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0usize; n * c * oh * ow];
    let xd = x.data();
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .zip(argmax.par_chunks_mut(oh * ow))
        .enumerate()
        .for_each(|(p, (dst, arg))| {
            let base = p * h * w;
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = base + 2 * y * w + 2 * xx;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * y + dy) * w + 2 * xx + dx;
                        if xd[i] > xd[best] {
                            best = i;
                        }
                    }
                    dst[y * ow + xx] = xd[best];
                    arg[y * ow + xx] = best;
                }
            }
        });
    Ok((out, argmax))
}

pub fn maxpool2_backward<T: Real>(argmax: &[usize], grad_out: &Tensor<T>, input_shape: &[usize]) -> Result<Tensor<T>> {
    if argmax.len() != grad_out.len() {
        return Err(Error::ShapeMismatch("argmax / gradient length".into()));
    }
    let mut gx = Tensor::zeros(input_shape);
    let g = gx.data_mut();
    for (&i, &v) in argmax.iter().zip(grad_out.data()) {
        g[i] = g[i] + v;
    }
    Ok(gx)
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Values retained by a training-mode batch normalization for its backward pass.
#[derive(Clone, Debug)]
pub struct BnCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

fn per_channel<T: Real, R: Send>(x: &Tensor<T>, f: impl Fn(&mut dyn Iterator<Item = T>) -> R + Sync) -> Result<Vec<R>> {
    let (n, c, h, w) = x.dims4()?;
    let plane = h * w;
    let d = x.data();
    Ok((0..c)
        .into_par_iter()
        .map(|ch| {
            let mut it = (0..n).flat_map(move |b| d[(b * c + ch) * plane..][..plane].iter().copied());
            f(&mut it)
        })
        .collect())
}

fn apply_per_channel<T: Real>(x: &Tensor<T>, f: impl Fn(usize, T) -> T + Sync) -> Result<Tensor<T>> {
    let (_, c, h, w) = x.dims4()?;
    let plane = h * w;
    let mut out = x.clone();
    out.data_mut().par_chunks_mut(plane).enumerate().for_each(|(p, dst)| {
        let ch = p % c;
        for v in dst.iter_mut() {
            *v = f(ch, *v);
        }
    });
    Ok(out)
}

/// Training-mode batch normalization over batch and spatial dimensions
/// (population variance).
pub fn batchnorm_train<T: Real>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<(Tensor<T>, BnCache<T>)> {
    let (n, c, h, w) = x.dims4()?;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::ShapeMismatch(format!("batchnorm parameters for {c} channels")));
    }
    let m = n * h * w;
    if m < 2 {
        return Err(Error::InsufficientStatistics);
    }
    let mf = T::lit(m as f64);
    let mean = per_channel(x, |it| it.fold(T::zero(), |a, v| a + v) / mf)?;
    let var = {
        let mean = &mean;
        let (_, c, h, w) = x.dims4()?;
        let plane = h * w;
        let d = x.data();
        (0..c)
            .into_par_iter()
            .map(|ch| {
                let mu = mean[ch];
                (0..n)
                    .flat_map(|b| d[(b * c + ch) * plane..][..plane].iter().copied())
                    .fold(T::zero(), |a, v| a + (v - mu) * (v - mu))
                    / mf
            })
            .collect::<Vec<T>>()
    };
    let eps = T::lit(BN_EPS);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let xhat = apply_per_channel(x, |ch, v| (v - mean[ch]) * inv_std[ch])?;
    let (g, b) = (gamma.data(), beta.data());
    let y = apply_per_channel(&xhat, |ch, v| g[ch] * v + b[ch])?;
    Ok((
        y,
        BnCache {
            xhat,
            inv_std,
            mean,
            var,
        },
    ))
}

pub fn batchnorm_eval<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (_, c, _, _) = x.dims4()?;
    for p in [gamma, beta, running_mean, running_var] {
        if p.len() != c {
            return Err(Error::ShapeMismatch(format!("batchnorm parameters for {c} channels")));
        }
    }
    let eps = T::lit(BN_EPS);
    let (g, b, mu, var) = (gamma.data(), beta.data(), running_mean.data(), running_var.data());
    apply_per_channel(x, |ch, v| g[ch] * (v - mu[ch]) / (var[ch] + eps).sqrt() + b[ch])
}

/// Gradients w.r.t. input, gamma and beta.
pub fn batchnorm_backward<T: Real>(
    cache: &BnCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    cache.xhat.expect_shape(grad_out.shape())?;
    let (n, c, h, w) = grad_out.dims4()?;
    let plane = h * w;
    let m = T::lit((n * plane) as f64);
    let (gd, xd) = (grad_out.data(), cache.xhat.data());
    let sums: Vec<(T, T)> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let mut sg = T::zero();
            let mut sgx = T::zero();
            for b in 0..n {
                let off = (b * c + ch) * plane;
                for i in off..off + plane {
                    sg = sg + gd[i];
                    sgx = sgx + gd[i] * xd[i];
                }
            }
            (sg, sgx)
        })
        .collect();
    let gdat = gamma.data();
    let mut gx = Tensor::zeros(grad_out.shape());
    gx.data_mut().par_chunks_mut(plane).enumerate().for_each(|(p, dst)| {
        let ch = p % c;
        let (sg, sgx) = sums[ch];
        let scale = gdat[ch] * cache.inv_std[ch] / m;
        let off = p * plane;
        for (i, v) in dst.iter_mut().enumerate() {
            *v = scale * (m * gd[off + i] - sg - xd[off + i] * sgx);
        }
    });
    let ggamma = Tensor::from_vec(&[c], sums.iter().map(|s| s.1).collect())?;
    let gbeta = Tensor::from_vec(&[c], sums.iter().map(|s| s.0).collect())?;
    Ok((gx, ggamma, gbeta))
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask<T: Real, R: Rng>(len: usize, rate: f64, rng: &mut R) -> Result<Vec<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate(rate));
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    Ok((0..len)
        .map(|_| if rate > 0.0 && rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect())
}

/// Applies a mask from [`dropout_mask`]; the backward pass is the same product.
pub fn apply_mask<T: Real>(x: &Tensor<T>, mask: &[T]) -> Result<Tensor<T>> {
    if mask.len() != x.len() {
        return Err(Error::ShapeMismatch("dropout mask length".into()));
    }
    let data = x.data().iter().zip(mask).map(|(&v, &m)| v * m).collect();
    Tensor::from_vec(x.shape(), data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dropout in either mode; returns the mask used (`None` in eval mode).
pub fn dropout<T: Real, R: Rng>(x: &Tensor<T>, rate: f64, mode: Mode, rng: &mut R) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate(rate));
    }
    match mode {
        Mode::Eval => Ok((x.clone(), None)),
        Mode::Train => {
            let mask = dropout_mask(x.len(), rate, rng)?;
            Ok((apply_mask(x, &mask)?, Some(mask)))
        }
    }
}

fn tconv_shapes<T: Real>(x: &Tensor<T>, kernel: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize)> {
    let (n, c, h, w) = x.dims4()?;
    let (ic, oc, kh, kw) = kernel.dims4()?;
    if ic != c || kh != 2 || kw != 2 {
        return Err(Error::ShapeMismatch(format!(
            "transposed conv expects kernel ({c}, out, 2, 2), got {:?}",
            kernel.shape()
        )));
    }
    Ok((n, c, h, w, oc))
}

/// Transposed convolution with a 2x2 kernel and stride 2; `kernel` is
/// `(in, out, 2, 2)`. Output pixel `(2i+di, 2j+dj)` receives
/// `sum_c x[c, i, j] * kernel[c, o, di, dj]`.
pub fn transposed_conv2<T: Real>(x: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w, oc) = tconv_shapes(x, kernel)?;
    if bias.len() != oc {
        return Err(Error::ShapeMismatch(format!("bias has {} values for {oc} channels", bias.len())));
    }
    let plane = h * w;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Tensor::zeros(&[n, oc, oh, ow]);
    let (xd, kd, bd) = (x.data(), kernel.data(), bias.data());
    out.data_mut().par_chunks_mut(oc * oh * ow).enumerate().for_each(|(b, dst)| {
        let src = &xd[b * c * plane..][..c * plane];
        let mut taps = vec![T::zero(); oc * 4 * plane];
        gemm(Mat::new(kd, c, oc * 4).t(), Mat::new(src, c, plane), T::zero(), &mut taps);
        for o in 0..oc {
            let img = &mut dst[o * oh * ow..][..oh * ow];
            for q in 0..4 {
                let (di, dj) = (q / 2, q % 2);
                let t = &taps[(o * 4 + q) * plane..][..plane];
                for y in 0..h {
                    let row = &mut img[(2 * y + di) * ow..][..ow];
                    for xx in 0..w {
                        row[2 * xx + dj] = t[y * w + xx] + bd[o];
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Rearranges an `(oc, 2h, 2w)` gradient into `(oc*4, h*w)` tap rows.
fn gather_taps<T: Real>(g: &[T], oc: usize, h: usize, w: usize) -> Vec<T> {
    let (plane, ow) = (h * w, 2 * w);
    let mut taps = vec![T::zero(); oc * 4 * plane];
    for o in 0..oc {
        let img = &g[o * 4 * plane..][..4 * plane];
        for q in 0..4 {
            let (di, dj) = (q / 2, q % 2);
            let t = &mut taps[(o * 4 + q) * plane..][..plane];
            for y in 0..h {
                for xx in 0..w {
                    t[y * w + xx] = img[(2 * y + di) * ow + 2 * xx + dj];
                }
            }
        }
    }
    taps
}

pub fn transposed_conv2_backward<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, c, h, w, oc) = tconv_shapes(x, kernel)?;
    grad_out.expect_shape(&[n, oc, 2 * h, 2 * w])?;
    let plane = h * w;
    let (xd, kd, gd) = (x.data(), kernel.data(), grad_out.data());
    let mut gx = Tensor::zeros(x.shape());
    let partial: Vec<Vec<T>> = gx
        .data_mut()
        .par_chunks_mut(c * plane)
        .enumerate()
        .map(|(b, dst)| {
            let taps = gather_taps(&gd[b * oc * 4 * plane..][..oc * 4 * plane], oc, h, w);
            gemm(Mat::new(kd, c, oc * 4), Mat::new(&taps, oc * 4, plane), T::zero(), dst);
            let src = &xd[b * c * plane..][..c * plane];
            let mut gk = vec![T::zero(); c * oc * 4];
            gemm(Mat::new(src, c, plane), Mat::new(&taps, oc * 4, plane).t(), T::zero(), &mut gk);
            gk
        })
        .collect();
    let mut gk = Tensor::zeros(kernel.shape());
    for p in &partial {
        for (a, &v) in gk.data_mut().iter_mut().zip(p) {
            *a = *a + v;
        }
    }
    let gb = channel_sums(grad_out)?;
    Ok((gx, gk, gb))
}

/// Concatenates along the channel dimension.
pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, ca, h, w) = a.dims4()?;
    let (nb, cb, hb, wb) = b.dims4()?;
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::ShapeMismatch(format!(
            "concat of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(a.len() + b.len());
    for s in 0..n {
        data.extend_from_slice(&a.data()[s * ca * plane..(s + 1) * ca * plane]);
        data.extend_from_slice(&b.data()[s * cb * plane..(s + 1) * cb * plane]);
    }
    Tensor::from_vec(&[n, ca + cb, h, w], data)
}

/// Inverse of [`concat_channels`]: splits off the first `ca` channels.
pub fn split_channels<T: Real>(t: &Tensor<T>, ca: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = t.dims4()?;
    if ca > c {
        return Err(Error::ShapeMismatch(format!("cannot split {ca} of {c} channels")));
    }
    let cb = c - ca;
    let plane = h * w;
    let mut a = Vec::with_capacity(n * ca * plane);
    let mut b = Vec::with_capacity(n * cb * plane);
    for s in 0..n {
        let base = s * c * plane;
        a.extend_from_slice(&t.data()[base..base + ca * plane]);
        b.extend_from_slice(&t.data()[base + ca * plane..base + c * plane]);
    }
    Ok((Tensor::from_vec(&[n, ca, h, w], a)?, Tensor::from_vec(&[n, cb, h, w], b)?))
}

/// Per-pixel softmax over channels, stabilized by subtracting the maximum.
pub fn softmax_channels<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let plane = h * w;
    let mut out = Tensor::zeros(x.shape());
    let xd = x.data();
    out.data_mut().par_chunks_mut(c * plane).enumerate().for_each(|(b, dst)| {
        let src = &xd[b * c * plane..][..c * plane];
        for p in 0..plane {
            let mut mx = T::neg_infinity();
            for ch in 0..c {
                mx = mx.max(src[ch * plane + p]);
            }
            let mut z = T::zero();
            for ch in 0..c {
                let e = (src[ch * plane + p] - mx).exp();
                dst[ch * plane + p] = e;
                z = z + e;
            }
            for ch in 0..c {
                dst[ch * plane + p] = dst[ch * plane + p] / z;
            }
        }
    });
    let _ = n;
    Ok(out)
}

/// Channel index of the per-pixel maximum (first on ties), as `(n, h, w)`.
pub fn argmax_channels<T: Real>(x: &Tensor<T>) -> Result<Vec<u8>> {
    let (n, c, h, w) = x.dims4()?;
    let plane = h * w;
    let xd = x.data();
    let mut out = Vec::with_capacity(n * plane);
    for b in 0..n {
        for p in 0..plane {
            let mut best = 0;
            for ch in 1..c {
                if xd[(b * c + ch) * plane + p] > xd[(b * c + best) * plane + p] {
                    best = ch;
                }
            }
            out.push(best as u8);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn identity_1x1_conv() {
        let x = t(&[1, 2, 2, 2], (0..8).map(|v| v as f64).collect());
        let k = t(&[2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]);
        let y = conv2d(&x, &k, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_on_constant() {
        let x = Tensor::full(&[1, 1, 5, 5], 2.0f64);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k, &Tensor::zeros(&[1])).unwrap();
        for yy in 1..4 {
            for xx in 1..4 {
                assert_eq!(y.data()[yy * 5 + xx], 18.0);
            }
        }
        assert_eq!(y.data()[0], 8.0);
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        assert!(conv2d(&x, &Tensor::zeros(&[1, 3, 3, 3]), &Tensor::zeros(&[1])).is_err());
        assert!(conv2d(&x, &Tensor::zeros(&[1, 2, 2, 2]), &Tensor::zeros(&[1])).is_err());
        assert!(conv2d(&x, &Tensor::zeros(&[1, 2, 3, 3]), &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn relu_cases() {
        let neg = t(&[1, 1, 1, 3], vec![-1.0, -2.0, -0.5]);
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
        let pos = t(&[1, 1, 1, 3], vec![1.0, 2.0, 0.5]);
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn maxpool_cases() {
        let x = t(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let (y, arg) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(arg, vec![3]);

        let c = Tensor::full(&[1, 1, 4, 4], 5.0f64);
        let (y, arg) = maxpool2(&c).unwrap();
        assert!(y.data().iter().all(|&v| v == 5.0));
        assert_eq!(arg, vec![0, 2, 8, 10]);
        let g = maxpool2_backward(&arg, &Tensor::full(&[1, 1, 2, 2], 1.0), c.shape()).unwrap();
        assert_eq!(g.sum(), 4.0);
        assert_eq!(g.data()[0], 1.0);

        assert!(matches!(maxpool2(&Tensor::<f64>::zeros(&[1, 1, 3, 4])), Err(Error::OddDimensions(3, 4))));
    }

    #[test]
    fn batchnorm_standardizes_and_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::from_vec(&[2, 3, 4, 4], (0..96).map(|_| rng.random::<f64>() * 10.0 - 2.0).collect()).unwrap();
        let (y, _) = batchnorm_train(&x, &Tensor::full(&[3], 1.0), &Tensor::zeros(&[3])).unwrap();
        let stats = per_channel(&y, |it| {
            let v: Vec<f64> = it.collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (m, v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64)
        })
        .unwrap();
        for (m, v) in stats {
            assert!(m.abs() < 1e-5);
            assert!((v - 1.0).abs() < 1e-5);
        }
        let (z, _) = batchnorm_train(&y, &Tensor::full(&[3], 2.0), &Tensor::full(&[3], 3.0)).unwrap();
        let stats = per_channel(&z, |it| {
            let v: Vec<f64> = it.collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (m, (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt())
        })
        .unwrap();
        for (m, s) in stats {
            assert!((m - 3.0).abs() < 1e-5);
            assert!((s - 2.0).abs() < 1e-4);
        }
        let single = Tensor::<f64>::zeros(&[1, 1, 1, 1]);
        assert!(matches!(
            batchnorm_train(&single, &Tensor::full(&[1], 1.0), &Tensor::zeros(&[1])),
            Err(Error::InsufficientStatistics)
        ));
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::full(&[1, 1, 100, 100], 1.0f64);
        assert_eq!(dropout(&x, 0.25, Mode::Eval, &mut rng).unwrap().0, x);
        assert_eq!(dropout(&x, 0.0, Mode::Train, &mut rng).unwrap().0, x);
        let (y, _) = dropout(&x, 0.25, Mode::Train, &mut rng).unwrap();
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / y.len() as f64;
        assert!((zeros - 0.25).abs() <= 0.02);
        let mean = y.sum() / y.len() as f64;
        assert!((mean - 1.0).abs() <= 0.02);
        assert!(matches!(dropout(&x, 1.0, Mode::Train, &mut rng), Err(Error::InvalidRate(_))));
    }

    #[test]
    fn transposed_conv_shape() {
        let x = Tensor::<f64>::zeros(&[2, 3, 4, 5]);
        let y = transposed_conv2(&x, &Tensor::zeros(&[3, 6, 2, 2]), &Tensor::zeros(&[6])).unwrap();
        assert_eq!(y.shape(), &[2, 6, 8, 10]);
    }

    #[test]
    fn concat_and_split() {
        let a = t(&[2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 2, 1, 2], (10..18).map(|v| v as f64).collect());
        let ab = concat_channels(&a, &b).unwrap();
        assert_eq!(ab.shape(), &[2, 3, 1, 2]);
        let (a2, b2) = split_channels(&ab, 1).unwrap();
        assert_eq!((a2, b2), (a.clone(), b));
        let empty = Tensor::<f64>::zeros(&[2, 0, 1, 2]);
        assert_eq!(concat_channels(&a, &empty).unwrap(), a);
        assert!(concat_channels(&a, &Tensor::zeros(&[2, 1, 2, 2])).is_err());
    }

    #[test]
    fn softmax_cases() {
        let x = Tensor::<f64>::zeros(&[1, 4, 1, 1]);
        assert!(softmax_channels(&x).unwrap().data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let logits = t(&[1, 4, 1, 2], vec![1.0, -3.0, 0.5, 2.0, 9.0, 0.0, -1.0, 4.0]);
        let shifted = logits.map(|v| v + 100.0);
        let (p, q) = (softmax_channels(&logits).unwrap(), softmax_channels(&shifted).unwrap());
        for (a, b) in p.data().iter().zip(q.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let am = argmax_channels(&logits).unwrap();
        assert_eq!(am, argmax_channels(&p).unwrap());
        assert_eq!(am, vec![2, 3]);
    }
}
