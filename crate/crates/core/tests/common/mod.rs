//! Independent reference implementations shared by the integration tests
//! and the acceptance run.
#![allow(dead_code)]

use std::collections::HashMap;

use porestack::nn::Tensor;
use porestack::BinaryMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive Otsu in exact integer arithmetic. For a split at `t` the
/// between-class variance times `N^2` equals `(S0 W1 - S1 W0)^2 / (W0 W1)`;
/// fractions are compared by cross-multiplication.
pub fn otsu_exact(counts: &[u64; 256]) -> Option<u8> {
    let mut best: Option<(u8, u128, u128)> = None;
    for t in 0..255usize {
        let (mut w0, mut s0, mut w1, mut s1) = (0u128, 0u128, 0u128, 0u128);
        for (i, &c) in counts.iter().enumerate() {
            if i <= t {
                w0 += c as u128;
                s0 += i as u128 * c as u128;
            } else {
                w1 += c as u128;
                s1 += i as u128 * c as u128;
            }
        }
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let (a, b) = (s0 * w1, s1 * w0);
        let diff = a.abs_diff(b);
        let num = diff * diff;
        let den = w0 * w1;
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((t as u8, num, den));
        }
    }
    best.map(|b| b.0)
}

/// Random histogram mixing a few Gaussian-ish bumps with sparse noise.
pub fn random_histogram(rng: &mut ChaCha8Rng) -> [u64; 256] {
    let mut counts = [0u64; 256];
    let bumps = rng.random_range(1..=4);
    for _ in 0..bumps {
        let centre: f64 = rng.random_range(0.0..255.0);
        let width: f64 = rng.random_range(2.0..40.0);
        let height: f64 = rng.random_range(10.0..800.0);
        for (i, c) in counts.iter_mut().enumerate() {
            let z = (i as f64 - centre) / width;
            *c += (height * (-0.5 * z * z).exp()).round() as u64;
        }
    }
    for _ in 0..rng.random_range(0..30) {
        counts[rng.random_range(0..256)] += rng.random_range(0..200);
    }
    counts
}

/// Component labels by recursive flood fill, numbered in raster order of
/// first pixel.
pub fn flood_fill_labels(mask: &BinaryMask, eight: bool) -> Vec<u32> {
    fn fill(mask: &BinaryMask, labels: &mut [u32], x: usize, y: usize, label: u32, eight: bool) {
        let (w, h) = mask.dims();
        labels[y * w + x] = label;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                    continue;
                }
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if mask.get(nx, ny) && labels[ny * w + nx] == 0 {
                    fill(mask, labels, nx, ny, label, eight);
                }
            }
        }
    }
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut next = 0;
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) && labels[y * w + x] == 0 {
                next += 1;
                fill(mask, &mut labels, x, y, next, eight);
            }
        }
    }
    labels
}

/// True when two labelings induce the same partition (0 = background in both).
pub fn same_partition(a: &[u32], b: &[u32]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut ab = HashMap::new();
    let mut ba = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x == 0) != (y == 0) {
            return false;
        }
        if *ab.entry(x).or_insert(y) != y || *ba.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    let bits = (0..w * h).map(|_| rng.random_bool(density)).collect();
    BinaryMask::from_vec(w, h, bits).unwrap()
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-4;

/// Relative error with an absolute floor so that near-zero gradients compare sanely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Worst relative error between `analytic` and central differences of the
/// scalar `f` around `x`.
pub fn fd_worst(x: &Tensor<f64>, analytic: &Tensor<f64>, f: impl Fn(&Tensor<f64>) -> f64) -> f64 {
    assert_eq!(x.shape(), analytic.shape(), "gradient shape");
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += FD_STEP;
        let mut xm = x.clone();
        xm.data_mut()[i] -= FD_STEP;
        let num = (f(&xp) - f(&xm)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(num, analytic.data()[i]));
    }
    worst
}

pub fn weighted(y: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// Direct nested-loop same-padded convolution.
pub fn conv_oracle(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (n, c, h, w) = x.dims4().unwrap();
    let (oc, _, kk, _) = k.dims4().unwrap();
    let pad = (kk / 2) as isize;
    let mut out = Tensor::zeros(&[n, oc, h, w]);
    for s in 0..n {
        for o in 0..oc {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = b.data()[o];
                    for i in 0..c {
                        for ky in 0..kk {
                            for kx in 0..kk {
                                let sy = y as isize + ky as isize - pad;
                                let sx = xx as isize + kx as isize - pad;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += x.data()[((s * c + i) * h + sy as usize) * w + sx as usize]
                                    * k.data()[((o * c + i) * kk + ky) * kk + kx];
                            }
                        }
                    }
                    out.data_mut()[((s * oc + o) * h + y) * w + xx] = acc;
                }
            }
        }
    }
    out
}

/// Zero-insertion upsampling followed by a 2x2 convolution whose taps reach
/// back up and to the left, cropped to `2h x 2w`.
pub fn tconv_oracle(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (n, c, h, w) = x.dims4().unwrap();
    let oc = k.shape()[1];
    let (uh, uw) = (2 * h, 2 * w);
    let mut up = Tensor::zeros(&[n, c, uh, uw]);
    for s in 0..n {
        for i in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    up.data_mut()[((s * c + i) * uh + 2 * y) * uw + 2 * xx] = x.data()[((s * c + i) * h + y) * w + xx];
                }
            }
        }
    }
    let mut out = Tensor::zeros(&[n, oc, uh, uw]);
    for s in 0..n {
        for o in 0..oc {
            for y in 0..uh {
                for xx in 0..uw {
                    let mut acc = b.data()[o];
                    for i in 0..c {
                        for di in 0..2 {
                            for dj in 0..2 {
                                if y < di || xx < dj {
                                    continue;
                                }
                                acc += up.data()[((s * c + i) * uh + y - di) * uw + xx - dj]
                                    * k.data()[((i * oc + o) * 2 + di) * 2 + dj];
                            }
                        }
                    }
                    out.data_mut()[((s * oc + o) * uh + y) * uw + xx] = acc;
                }
            }
        }
    }
    out
}
