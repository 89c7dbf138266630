//! Joint geometric augmentation of image/label pairs and additive Gaussian
//! noise on images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Class, GrayImage, LabelMap};

/// Parameters of one augmentation draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentSpec {
    pub flip_h: bool,
    pub flip_v: bool,
    /// Degrees, counter-clockwise in image coordinates, about the centre.
    pub rotation: f64,
    /// Translation in pixels.
    pub shift: (f64, f64),
    pub zoom: f64,
    /// `(mean, variance)` of additive noise, image only.
    pub noise: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            flip_h: false,
            flip_v: false,
            rotation: 0.0,
            shift: (0.0, 0.0),
            zoom: 1.0,
            noise: None,
            seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.zoom > 0.0 && self.zoom.is_finite()) {
            return Err(Error::Config(format!("zoom must be positive, got {}", self.zoom)));
        }
        if let Some((_, var)) = self.noise {
            if var < 0.0 {
                return Err(Error::Config(format!("noise variance must be non-negative, got {var}")));
            }
        }
        Ok(())
    }

    fn is_identity(&self) -> bool {
        !self.flip_h && !self.flip_v && self.rotation == 0.0 && self.shift == (0.0, 0.0) && self.zoom == 1.0
    }
}

/// `(cos, sin)` with exact values at multiples of 90°.
fn rotation_terms(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter.fract() == 0.0 {
        match (quarter as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let r = deg.to_radians();
        (r.cos(), r.sin())
    }
}

/// Inverse map from an output pixel centre to a source position. The forward
/// transform is flip, then rotate and zoom about the centre, then shift.
struct InverseMap {
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
    inv_zoom: f64,
    spec: AugmentSpec,
}

impl InverseMap {
    fn new(w: usize, h: usize, spec: &AugmentSpec) -> Self {
        let (cos, sin) = rotation_terms(spec.rotation);
        Self {
            cx: (w as f64 - 1.0) / 2.0,
            cy: (h as f64 - 1.0) / 2.0,
            cos,
            sin,
            inv_zoom: 1.0 / spec.zoom,
            spec: *spec,
        }
    }

    fn source(&self, x: usize, y: usize) -> (f64, f64) {
        let dx = (x as f64 - self.cx - self.spec.shift.0) * self.inv_zoom;
        let dy = (y as f64 - self.cy - self.spec.shift.1) * self.inv_zoom;
        let mut sx = self.cos * dx + self.sin * dy;
        let mut sy = -self.sin * dx + self.cos * dy;
        if self.spec.flip_h {
            sx = -sx;
        }
        if self.spec.flip_v {
            sy = -sy;
        }
        (sx + self.cx, sy + self.cy)
    }
}

fn sample_bilinear(img: &GrayImage, sx: f64, sy: f64) -> f32 {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let (x0, y0) = (sx.floor(), sy.floor());
    let (fx, fy) = (sx - x0, sy - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            img.get(x as usize, y as usize) as f64
        }
    };
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
    let bot = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
    (top * (1.0 - fy) + bot * fy) as f32
}

/// Applies the same geometric transform to both rasters: bilinear for the
/// image, nearest for the labels, background outside the source.
pub fn apply_geometric(img: &GrayImage, labels: &LabelMap, spec: &AugmentSpec) -> Result<(GrayImage, LabelMap)> {
    if img.dims() != labels.dims() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            actual: labels.dims(),
        });
    }
    spec.validate()?;
    if spec.is_identity() {
        return Ok((img.clone(), labels.clone()));
    }
    let (w, h) = img.dims();
    let map = InverseMap::new(w, h, spec);
    let mut out_img = GrayImage::new(w, h);
    let mut out_lab = LabelMap::filled(w, h, Class::Background);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map.source(x, y);
            out_img.set(x, y, sample_bilinear(img, sx, sy).clamp(0.0, 255.0));
            let (nx, ny) = (sx.round(), sy.round());
            if nx >= 0.0 && ny >= 0.0 && (nx as usize) < w && (ny as usize) < h {
                out_lab.set(x, y, labels.get(nx as usize, ny as usize));
            }
        }
    }
    Ok((out_img, out_lab))
}

/// Adds i.i.d. `N(mean, variance)` noise per pixel and clamps to `[0, 255]`.
pub fn add_gaussian_noise(img: &GrayImage, mean: f64, variance: f64, seed: u64) -> Result<GrayImage> {
    if variance < 0.0 {
        return Err(Error::Config(format!("noise variance must be non-negative, got {variance}")));
    }
    if variance == 0.0 {
        return Ok(img.map(|v| (v as f64 + mean).clamp(0.0, 255.0) as f32));
    }
    let normal = Normal::new(mean, variance.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(img.map(|v| (v as f64 + normal.sample(&mut rng)).clamp(0.0, 255.0) as f32))
}

/// Ranges the per-variant parameters are drawn from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentPolicy {
    /// Augmented variants emitted per input pair, in addition to the original.
    pub copies: usize,
    pub flip: bool,
    pub max_rotation_deg: f64,
    /// Maximum shift as a fraction of the image side.
    pub max_shift_frac: f64,
    pub zoom_range: (f64, f64),
    pub noise_mean_range: (f64, f64),
    pub noise_var_range: (f64, f64),
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            copies: 3,
            flip: true,
            max_rotation_deg: 30.0,
            max_shift_frac: 0.10,
            zoom_range: (0.9, 1.1),
            noise_mean_range: (-5.0, 5.0),
            noise_var_range: (0.0, 50.0),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

impl AugmentPolicy {
    /// Draws the parameters of one variant.
    pub fn draw(&self, rng: &mut ChaCha8Rng, width: usize, height: usize) -> AugmentSpec {
        let flip_h = self.flip && rng.random_bool(0.5);
        let flip_v = self.flip && rng.random_bool(0.5);
        let rotation = uniform(rng, (-self.max_rotation_deg, self.max_rotation_deg));
        let sx = uniform(rng, (-self.max_shift_frac, self.max_shift_frac)) * width as f64;
        let sy = uniform(rng, (-self.max_shift_frac, self.max_shift_frac)) * height as f64;
        let zoom = uniform(rng, self.zoom_range);
        let mean = uniform(rng, self.noise_mean_range);
        let var = uniform(rng, self.noise_var_range);
        AugmentSpec {
            flip_h,
            flip_v,
            rotation,
            shift: (sx, sy),
            zoom,
            noise: Some((mean, var)),
            seed: rng.random(),
        }
    }
}

/// Geometric transform on both rasters, then noise on the image only.
pub fn augment_pair(img: &GrayImage, labels: &LabelMap, spec: &AugmentSpec) -> Result<(GrayImage, LabelMap)> {
    let (mut out, lab) = apply_geometric(img, labels, spec)?;
    if let Some((mean, var)) = spec.noise {
        out = add_gaussian_noise(&out, mean, var, spec.seed)?;
    }
    Ok((out, lab))
}

/// Originals followed by `policy.copies` variants per pair, all grouped by
/// source pair. Each pair draws from its own stream seeded by
/// `(seed, pair index)`, so the result does not depend on scheduling.
pub fn augment_dataset(
    pairs: &[(GrayImage, LabelMap)],
    policy: &AugmentPolicy,
    seed: u64,
) -> Result<Vec<(GrayImage, LabelMap)>> {
    let groups: Vec<Vec<(GrayImage, LabelMap)>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (img, lab))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut out = Vec::with_capacity(policy.copies + 1);
            out.push((img.clone(), lab.clone()));
            for _ in 0..policy.copies {
                let spec = policy.draw(&mut rng, img.width(), img.height());
                out.push(augment_pair(img, lab, &spec)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(groups.into_iter().flatten().collect())
}
