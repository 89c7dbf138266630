//! Raster types and the pixel-level operations shared by every pipeline stage.
//!
//! All rasters are row-major. Intensities are kept as `f32` in `[0, 255]`
//! and only quantized back to 8 bits at file boundaries.

use crate::error::{Error, Result};

/// Rounds half away from zero and clamps into the 8-bit range.
#[inline]
pub fn quantize(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// A single grayscale tomography slice.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds an image from working-precision values. Values are clamped to
    /// `[0, 255]`; non-finite input is rejected.
    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data"));
        }
        let data = data.into_iter().map(|v| v.clamp(0.0, 255.0)).collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} bytes for a {width}x{height} image",
                bytes.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data: bytes.iter().map(|&b| b as f32).collect(),
        })
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            out.data[y * self.width..(y + 1) * self.width].reverse();
        }
        out
    }
}

/// Per-pixel boolean mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, false)
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        check_dims(self.dims(), other.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    /// Pixels set here but not in `other`.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Intersection over union; two empty masks have IoU 1.
    pub fn iou(&self, other: &Self) -> Result<f64> {
        check_dims(self.dims(), other.dims())?;
        let (mut inter, mut uni) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            uni += (a || b) as usize;
        }
        Ok(if uni == 0 { 1.0 } else { inter as f64 / uni as f64 })
    }

    /// Binary dilation with the full 3x3 structuring element.
    pub fn dilate3x3(&self) -> Self {
        let (w, h) = self.dims();
        Self::from_fn(w, h, |x, y| {
            let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
            (y0..=y1).any(|yy| (x0..=x1).any(|xx| self.get(xx, yy)))
        })
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            out.bits[y * self.width..(y + 1) * self.width].reverse();
        }
        out
    }

    pub fn flip_vertical(&self) -> Self {
        let (w, h) = self.dims();
        Self::from_fn(w, h, |x, y| self.get(x, h - 1 - y))
    }
}

/// The four segmentation classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Class {
    Background = 0,
    PoreI = 1,
    PoreII = 2,
    Crust = 3,
}

impl Class {
    pub const ALL: [Class; 4] = [Class::Background, Class::PoreI, Class::PoreII, Class::Crust];
    pub const COUNT: usize = 4;

    pub fn from_index(i: u8) -> Option<Class> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Background => "background",
            Class::PoreI => "pore_i",
            Class::PoreII => "pore_ii",
            Class::Crust => "crust",
        }
    }

    /// Debug render colour: background black, pore I red, pore II green, crust blue.
    pub fn rgb(self) -> [u8; 3] {
        match self {
            Class::Background => [0, 0, 0],
            Class::PoreI => [255, 0, 0],
            Class::PoreII => [0, 255, 0],
            Class::Crust => [0, 0, 255],
        }
    }
}

/// Per-pixel class map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    classes: Vec<u8>,
}

impl LabelMap {
    pub fn filled(width: usize, height: usize, class: Class) -> Self {
        Self {
            width,
            height,
            classes: vec![class as u8; width * height],
        }
    }

    /// Validates that every value is a known class index.
    pub fn from_vec(width: usize, height: usize, classes: Vec<u8>) -> Result<Self> {
        if classes.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a {width}x{height} map",
                classes.len()
            )));
        }
        if let Some(bad) = classes.iter().find(|&&c| c as usize >= Class::COUNT) {
            return Err(Error::Format(format!("label value {bad} is not a class index")));
        }
        Ok(Self {
            width,
            height,
            classes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.classes
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Class {
        Class::ALL[self.classes[y * self.width + x] as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Class) {
        self.classes[y * self.width + x] = c as u8;
    }

    pub fn mask_of(&self, class: Class) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.classes.iter().map(|&c| c == class as u8).collect(),
        }
    }

    pub fn class_counts(&self) -> [usize; Class::COUNT] {
        let mut counts = [0usize; Class::COUNT];
        for &c in &self.classes {
            counts[c as usize] += 1;
        }
        counts
    }

    /// Interleaved RGB bytes using [`Class::rgb`].
    pub fn to_rgb(&self) -> Vec<u8> {
        self.classes
            .iter()
            .flat_map(|&c| Class::ALL[c as usize].rgb())
            .collect()
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            out.classes[y * self.width..(y + 1) * self.width].reverse();
        }
        out
    }
}

/// Ordered slices of one acquisition, all sharing dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageStack {
    pub stack_id: String,
    slices: Vec<GrayImage>,
}

impl ImageStack {
    pub fn new(stack_id: impl Into<String>, slices: Vec<GrayImage>) -> Result<Self> {
        if let Some(first) = slices.first() {
            for s in &slices[1..] {
                check_dims(first.dims(), s.dims())?;
            }
        }
        Ok(Self {
            stack_id: stack_id.into(),
            slices,
        })
    }

    pub fn slices(&self) -> &[GrayImage] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }
}

const GAUSS3: [[f32; 3]; 3] = [[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]];

/// 3x3 binomial smoothing, `(1,2,1;2,4,2;1,2,1)/16`, with edge replication.
pub fn gaussian3x3(img: &GrayImage) -> Result<GrayImage> {
    let (w, h) = img.dims();
    if w == 0 || h == 0 {
        return Err(Error::ZeroSize);
    }
    let mut out = GrayImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (ky, row) in GAUSS3.iter().enumerate() {
                let sy = (y + ky).saturating_sub(1).min(h - 1);
                for (kx, &k) in row.iter().enumerate() {
                    let sx = (x + kx).saturating_sub(1).min(w - 1);
                    acc += k * img.get(sx, sy);
                }
            }
            out.set(x, y, acc / 16.0);
        }
    }
    Ok(out)
}

pub fn invert(mask: &BinaryMask) -> BinaryMask {
    BinaryMask {
        width: mask.width,
        height: mask.height,
        bits: mask.bits.iter().map(|&b| !b).collect(),
    }
}

/// Zeroes every pixel where `mask` is set.
pub fn subtract_masked(img: &GrayImage, mask: &BinaryMask) -> Result<GrayImage> {
    check_dims(img.dims(), mask.dims())?;
    let data = img
        .data
        .iter()
        .zip(&mask.bits)
        .map(|(&v, &m)| if m { 0.0 } else { v })
        .collect();
    Ok(GrayImage {
        width: img.width,
        height: img.height,
        data,
    })
}

/// Maps a destination pixel index to a source coordinate using half-pixel
/// centre alignment.
#[inline]
fn source_coord(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    (dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5
}

/// Bilinear resampling with half-pixel centres (the OpenCV convention).
pub fn resize_bilinear(img: &GrayImage, w: usize, h: usize) -> Result<GrayImage> {
    let (sw, sh) = img.dims();
    if w == 0 || h == 0 || sw == 0 || sh == 0 {
        return Err(Error::ZeroSize);
    }
    if (w, h) == (sw, sh) {
        return Ok(img.clone());
    }
    let taps = |dst: usize, src_len: usize, dst_len: usize| {
        let s = source_coord(dst, src_len, dst_len).clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f64)
    };
    let xs: Vec<_> = (0..w).map(|x| taps(x, sw, w)).collect();
    let mut out = GrayImage::new(w, h);
    for y in 0..h {
        let (y0, y1, fy) = taps(y, sh, h);
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
            let bot = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
            out.set(x, y, (top * (1.0 - fy) + bot * fy) as f32);
        }
    }
    Ok(out)
}

/// Nearest-neighbour resampling of class labels; never mixes classes.
pub fn resize_nearest_labels(labels: &LabelMap, w: usize, h: usize) -> Result<LabelMap> {
    let (sw, sh) = labels.dims();
    if w == 0 || h == 0 || sw == 0 || sh == 0 {
        return Err(Error::ZeroSize);
    }
    let pick = |dst: usize, src_len: usize, dst_len: usize| {
        (((dst as f64 + 0.5) * src_len as f64 / dst_len as f64).floor() as usize).min(src_len - 1)
    };
    let xs: Vec<usize> = (0..w).map(|x| pick(x, sw, w)).collect();
    let mut classes = Vec::with_capacity(w * h);
    for y in 0..h {
        let sy = pick(y, sh, h);
        classes.extend(xs.iter().map(|&sx| labels.classes[sy * sw + sx]));
    }
    Ok(LabelMap {
        width: w,
        height: h,
        classes,
    })
}

/// Standardizes to zero mean and unit population standard deviation.
/// A (numerically) constant image maps to all zeros.
pub fn normalize_zscore(img: &GrayImage) -> Vec<f32> {
    let n = img.data.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = img.data.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let var = img
        .data
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let std = var.sqrt();
    if std < 1e-12 {
        return vec![0.0; n];
    }
    img.data
        .iter()
        .map(|&v| ((v as f64 - mean) / std) as f32)
        .collect()
}
