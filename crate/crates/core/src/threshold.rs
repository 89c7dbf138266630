//! Global Otsu thresholding and the partial-pixel variant used to isolate
//! the bright core.

use crate::error::{Error, Result};
use crate::image::{quantize, BinaryMask, GrayImage};

/// Intensity histogram over the 8-bit range.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram256 {
    counts: [u64; 256],
    total: u64,
}

impl Default for Histogram256 {
    fn default() -> Self {
        Self {
            counts: [0; 256],
            total: 0,
        }
    }
}

impl Histogram256 {
    pub fn from_counts(counts: [u64; 256]) -> Self {
        Self {
            counts,
            total: counts.iter().sum(),
        }
    }

    pub fn from_values(values: impl IntoIterator<Item = u8>) -> Self {
        let mut h = Self::default();
        for v in values {
            h.add(v);
        }
        h
    }

    /// Histogram of the quantized pixel values of `img`.
    pub fn from_image(img: &GrayImage) -> Self {
        Self::from_values(img.data().iter().map(|&v| quantize(v)))
    }

    pub fn add(&mut self, v: u8) {
        self.counts[v as usize] += 1;
        self.total += 1;
    }

    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Otsu's threshold: the `t` maximizing between-class variance for classes
/// `[0..=t]` and `[t+1..=255]`. Ties resolve to the smallest `t`.
pub fn otsu_threshold(hist: &Histogram256) -> Result<u8> {
    let total = hist.total;
    if total == 0 {
        return Err(Error::EmptySelection);
    }
    let grand: f64 = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();

    let mut best: Option<(u8, f64)> = None;
    let (mut w0, mut sum0) = (0u64, 0f64);
    for t in 0..255usize {
        w0 += hist.counts[t];
        sum0 += t as f64 * hist.counts[t] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let (w0f, w1f) = (w0 as f64, w1 as f64);
        let diff = sum0 / w0f - (grand - sum0) / w1f;
        // Scaled by total^2, which does not change the argmax.
        let between = w0f * w1f * diff * diff;
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((t as u8, between));
        }
    }
    best.map(|(t, _)| t).ok_or(Error::DegenerateHistogram)
}

/// Foreground where the quantized pixel value is strictly above `t`, so
/// pixels equal to the threshold fall in the lower class like the histogram.
pub fn binarize(img: &GrayImage, t: u8) -> BinaryMask {
    let bits = img.data().iter().map(|&v| quantize(v) > t).collect();
    BinaryMask::from_vec(img.width(), img.height(), bits).expect("dimensions carried over")
}

/// Otsu threshold over the brightest `fraction` of the non-zero pixels.
///
/// The subset holds `max(2, ceil(fraction * nonzero))` pixels, capped at the
/// number of non-zero pixels.
pub fn partial_otsu(img: &GrayImage, fraction: f64) -> Result<u8> {
    let mut values: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| quantize(v))
        .filter(|&v| v > 0)
        .collect();
    if values.is_empty() {
        return Err(Error::EmptySelection);
    }
    let n = values.len();
    let k = ((fraction * n as f64).ceil() as usize).max(2).min(n);
    values.sort_unstable();
    otsu_threshold(&Histogram256::from_values(values[n - k..].iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_delta(a: u8, b: u8, na: u64, nb: u64) -> Histogram256 {
        let mut counts = [0u64; 256];
        counts[a as usize] = na;
        counts[b as usize] = nb;
        Histogram256::from_counts(counts)
    }

    #[test]
    fn two_delta_picks_lower_mode() {
        assert_eq!(otsu_threshold(&two_delta(10, 200, 50, 50)).unwrap(), 10);
    }

    #[test]
    fn single_bin_is_degenerate() {
        let h = Histogram256::from_values([42u8; 9]);
        assert!(matches!(otsu_threshold(&h), Err(Error::DegenerateHistogram)));
    }

    #[test]
    fn scale_invariance() {
        let mut counts = [0u64; 256];
        for (i, c) in counts.iter_mut().enumerate() {
            *c = ((i * 37) % 11) as u64;
        }
        let h = Histogram256::from_counts(counts);
        let scaled = Histogram256::from_counts(counts.map(|c| c * 7));
        assert_eq!(otsu_threshold(&h).unwrap(), otsu_threshold(&scaled).unwrap());
    }

    #[test]
    fn binarize_extremes() {
        let img = GrayImage::from_vec(2, 2, vec![1.0, 50.0, 255.0, 3.0]).unwrap();
        assert!(binarize(&img, 255).is_empty());
        assert_eq!(binarize(&img, 0).count(), 4);
        assert_eq!(binarize(&img, 50).count(), 1);
    }

    #[test]
    fn partial_full_fraction_matches_full_otsu() {
        let data: Vec<f32> = (0..400).map(|i| ((i * 31 + i / 7) % 256) as f32).collect();
        let img = GrayImage::from_vec(20, 20, data.clone()).unwrap();
        let nonzero = Histogram256::from_values(data.iter().map(|&v| v as u8).filter(|&v| v > 0));
        assert_eq!(partial_otsu(&img, 1.0).unwrap(), otsu_threshold(&nonzero).unwrap());
    }

    #[test]
    fn partial_bimodal_top() {
        // 70 dim pixels, then 15 at 150 and 15 at 250: the top 30% is the bimodal pair.
        let mut data = vec![60.0f32; 70];
        data.extend([150.0; 15]);
        data.extend([250.0; 15]);
        let img = GrayImage::from_vec(10, 10, data).unwrap();
        assert_eq!(partial_otsu(&img, 0.30).unwrap(), 150);
    }

    #[test]
    fn partial_errors() {
        assert!(matches!(partial_otsu(&GrayImage::new(4, 4), 0.3), Err(Error::EmptySelection)));
        let flat = GrayImage::filled(4, 4, 90.0);
        assert!(matches!(partial_otsu(&flat, 0.3), Err(Error::DegenerateHistogram)));
    }
}
