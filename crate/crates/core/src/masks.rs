//! Classical label generation: background removal, core extraction,
//! pore I / pore II separation and four-class composition.

use rayon::prelude::*;

use crate::connectivity::{largest_component, remove_component, Connectivity};
use crate::error::{Error, Result};
use crate::image::{gaussian3x3, invert, subtract_masked, BinaryMask, Class, GrayImage, ImageStack, LabelMap};
use crate::threshold::{binarize, otsu_threshold, partial_otsu, Histogram256};

/// Fraction of brightest non-zero pixels fed to the core threshold.
pub const DEFAULT_CORE_FRACTION: f64 = 0.30;

/// Pore II larger than this share of (pore I + core) breaks the
/// largest-component ordering the separation relies on.
pub const ORDERING_WARNING_RATIO: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineSettings {
    pub core_fraction: f64,
    pub connectivity: Connectivity,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            core_fraction: DEFAULT_CORE_FRACTION,
            connectivity: Connectivity::Eight,
        }
    }
}

/// Named intermediate products of one slice.
#[derive(Clone, Debug)]
pub struct PipelineIntermediates {
    pub background_mask: BinaryMask,
    pub sample_image: GrayImage,
    pub core_mask: BinaryMask,
    pub pores_mask: BinaryMask,
    pub pore1_mask: BinaryMask,
    pub pore2_mask: BinaryMask,
}

/// Result of pore separation.
#[derive(Clone, Debug)]
pub struct PoreMasks {
    pub pores: BinaryMask,
    pub pore1: BinaryMask,
    pub pore2: BinaryMask,
    /// Area of the component picked as pore I plus the voided core.
    pub pore1_with_core_area: usize,
}

impl PoreMasks {
    /// True when pore II is large enough to threaten the ordering assumption.
    pub fn ordering_suspect(&self) -> bool {
        self.pore2.count() as f64 > ORDERING_WARNING_RATIO * self.pore1_with_core_area as f64
    }
}

/// Smooth, Otsu-binarize and zero the background. Returns the sample image
/// and the background mask.
pub fn remove_background(img: &GrayImage) -> Result<(GrayImage, BinaryMask)> {
    let smooth = gaussian3x3(img)?;
    let t = otsu_threshold(&Histogram256::from_image(&smooth))?;
    let foreground = binarize(&smooth, t);
    let background = invert(&foreground);
    let sample = subtract_masked(img, &background)?;
    Ok((sample, background))
}

/// Isolates the bright core: partial Otsu over the brightest pixels, then
/// the largest connected component.
pub fn extract_core(sample: &GrayImage, settings: &PipelineSettings) -> Result<BinaryMask> {
    let smooth = gaussian3x3(sample)?;
    let t = partial_otsu(&smooth, settings.core_fraction).map_err(|e| match e {
        Error::EmptySelection => Error::CoreNotFound("EmptySelection"),
        Error::DegenerateHistogram => Error::CoreNotFound("DegenerateHistogram"),
        other => other,
    })?;
    largest_component(&binarize(&smooth, t), settings.connectivity)
        .map_err(|_| Error::CoreNotFound("EmptyMask"))
}

/// Separates the two pore populations.
///
/// The core is voided so that it merges with the pore it touches; that merged
/// region is the largest interior hole and becomes pore I once the core is
/// taken away again. Every other interior hole is pore II.
pub fn extract_pores(sample: &GrayImage, core: &BinaryMask, settings: &PipelineSettings) -> Result<PoreMasks> {
    let conn = settings.connectivity;
    let voided = subtract_masked(sample, core)?;

    let t = otsu_threshold(&Histogram256::from_image(&voided))?;
    let holes = invert(&binarize(&voided, t));
    let (w, h) = sample.dims();
    let empty = || PoreMasks {
        pores: BinaryMask::new(w, h),
        pore1: BinaryMask::new(w, h),
        pore2: BinaryMask::new(w, h),
        pore1_with_core_area: 0,
    };
    let exterior = match largest_component(&holes, conn) {
        Ok(m) => m,
        Err(Error::EmptyMask) => return Ok(empty()),
        Err(e) => return Err(e),
    };
    let pores = remove_component(&holes, &exterior)?;
    if pores.is_empty() {
        return Ok(empty());
    }
    let pore1_with_core = largest_component(&pores, conn)?;
    let pore2 = pores.difference(&pore1_with_core)?;
    let pore1 = pore1_with_core.difference(core)?;
    Ok(PoreMasks {
        pore1_with_core_area: pore1_with_core.count(),
        pores,
        pore1,
        pore2,
    })
}

/// Per-pixel priority pore I > pore II > background > crust.
pub fn compose_labelmap(pore1: &BinaryMask, pore2: &BinaryMask, background: &BinaryMask) -> Result<LabelMap> {
    let dims = pore1.dims();
    for m in [pore2, background] {
        if m.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: m.dims(),
            });
        }
    }
    let classes = pore1
        .bits()
        .iter()
        .zip(pore2.bits())
        .zip(background.bits())
        .map(|((&p1, &p2), &bg)| {
            let class = if p1 {
                Class::PoreI
            } else if p2 {
                Class::PoreII
            } else if bg {
                Class::Background
            } else {
                Class::Crust
            };
            class as u8
        })
        .collect();
    LabelMap::from_vec(dims.0, dims.1, classes)
}

/// Runs the complete pipeline on one slice.
pub fn run_pipeline(img: &GrayImage, settings: &PipelineSettings) -> Result<(LabelMap, PipelineIntermediates, Vec<Warning>)> {
    let (sample, background) = remove_background(img)?;
    let core = extract_core(&sample, settings)?;
    let pores = extract_pores(&sample, &core, settings)?;
    let labels = compose_labelmap(&pores.pore1, &pores.pore2, &background)?;
    let mut warnings = Vec::new();
    if pores.ordering_suspect() {
        warnings.push(Warning::OrderingAssumption);
    }
    let inter = PipelineIntermediates {
        background_mask: background,
        sample_image: sample,
        core_mask: core,
        pores_mask: pores.pores,
        pore1_mask: pores.pore1,
        pore2_mask: pores.pore2,
    };
    Ok((labels, inter, warnings))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Warning {
    OrderingAssumption,
}

impl Warning {
    pub fn code(self) -> &'static str {
        match self {
            Warning::OrderingAssumption => "warning:ordering-assumption",
        }
    }
}

#[derive(Clone, Debug)]
pub enum SliceStatus {
    Accepted { labels: LabelMap, warnings: Vec<Warning> },
    Rejected { reason: &'static str },
}

#[derive(Clone, Debug)]
pub struct SliceOutcome {
    pub index: usize,
    pub status: SliceStatus,
}

impl SliceOutcome {
    pub fn labels(&self) -> Option<&LabelMap> {
        match &self.status {
            SliceStatus::Accepted { labels, .. } => Some(labels),
            SliceStatus::Rejected { .. } => None,
        }
    }

    /// `accepted` or `rejected` plus a reason/warning column.
    pub fn status_fields(&self) -> (&'static str, String) {
        match &self.status {
            SliceStatus::Accepted { warnings, .. } => (
                "accepted",
                warnings.iter().map(|w| w.code()).collect::<Vec<_>>().join(";"),
            ),
            SliceStatus::Rejected { reason } => ("rejected", (*reason).to_string()),
        }
    }
}

/// Runs the pipeline on every slice. Failing slices are flagged with the
/// error code instead of being dropped; results keep slice order.
pub fn generate_training_masks(stack: &ImageStack, settings: &PipelineSettings) -> Vec<SliceOutcome> {
    stack
        .slices()
        .par_iter()
        .enumerate()
        .map(|(index, img)| {
            let status = match run_pipeline(img, settings) {
                Ok((labels, _, warnings)) => SliceStatus::Accepted { labels, warnings },
                Err(e) => SliceStatus::Rejected { reason: e.code() },
            };
            SliceOutcome { index, status }
        })
        .collect()
}

/// Structured status report: one `index,status,detail` record per slice.
pub fn status_report(outcomes: &[SliceOutcome]) -> String {
    let mut out = String::from("slice,status,detail\n");
    for o in outcomes {
        let (status, detail) = o.status_fields();
        out.push_str(&format!("{},{},{}\n", o.index, status, detail));
    }
    out
}
