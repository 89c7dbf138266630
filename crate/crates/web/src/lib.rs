//! Browser bindings for the phantom generator and the classical mask pipeline.

use porestack::masks::{run_pipeline, PipelineSettings};
use porestack::metrics::percent_porosity;
use porestack::phantom::{render, PhantomSpec};
use porestack::{Class, GrayImage, LabelMap};
use wasm_bindgen::prelude::*;

fn spec(canvas: usize, time: f64, noise: f64, seed: u64) -> Result<PhantomSpec, JsError> {
    let s = PhantomSpec::for_canvas(canvas).with_time(time).with_noise(noise).with_seed(seed);
    s.validate().map_err(|e| JsError::new(&e.to_string()))?;
    Ok(s)
}

fn gray_rgba(img: &GrayImage) -> Vec<u8> {
    img.to_u8().iter().flat_map(|&v| [v, v, v, 255]).collect()
}

fn labels_rgba(labels: &LabelMap) -> Vec<u8> {
    labels.to_rgb().chunks_exact(3).flat_map(|c| [c[0], c[1], c[2], 255]).collect()
}

/// Segmentation of one phantom slice, with its ground truth for comparison.
#[wasm_bindgen]
pub struct Segmentation {
    image: Vec<u8>,
    predicted: Vec<u8>,
    truth: Vec<u8>,
    porosity: [f64; 2],
    truth_porosity: [f64; 2],
    iou: [f64; 2],
}

#[wasm_bindgen]
impl Segmentation {
    /// Grey-level input as RGBA.
    pub fn image(&self) -> Vec<u8> {
        self.image.clone()
    }

    /// Pipeline labels as RGBA (background black, pore I red, pore II green, crust blue).
    pub fn predicted(&self) -> Vec<u8> {
        self.predicted.clone()
    }

    pub fn truth(&self) -> Vec<u8> {
        self.truth.clone()
    }

    /// Percent porosity `[pore I, pore II]` of the pipeline labels.
    pub fn porosity(&self) -> Vec<f64> {
        self.porosity.to_vec()
    }

    pub fn truth_porosity(&self) -> Vec<f64> {
        self.truth_porosity.to_vec()
    }

    /// IoU of pore I and pore II against ground truth.
    pub fn iou(&self) -> Vec<f64> {
        self.iou.to_vec()
    }
}

fn pore_percent(labels: &LabelMap) -> [f64; 2] {
    percent_porosity(std::slice::from_ref(labels))
        .map(|r| [r.percent(Class::PoreI), r.percent(Class::PoreII)])
        .unwrap_or([0.0, 0.0])
}

/// Renders a phantom slice as RGBA.
#[wasm_bindgen]
pub fn render_phantom(canvas: usize, time: f64, noise: f64, seed: u64) -> Result<Vec<u8>, JsError> {
    let s = render(&spec(canvas, time, noise, seed)?).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(gray_rgba(&s.image))
}

/// Runs the classical pipeline on a phantom slice.
#[wasm_bindgen]
pub fn segment(canvas: usize, time: f64, noise: f64, seed: u64, core_fraction: f64, eight: bool) -> Result<Segmentation, JsError> {
    let s = render(&spec(canvas, time, noise, seed)?).map_err(|e| JsError::new(&e.to_string()))?;
    let settings = PipelineSettings {
        core_fraction,
        connectivity: if eight {
            porestack::connectivity::Connectivity::Eight
        } else {
            porestack::connectivity::Connectivity::Four
        },
    };
    let (labels, _, _) = run_pipeline(&s.image, &settings).map_err(|e| JsError::new(&e.to_string()))?;
    let iou = |c| labels.mask_of(c).iou(&s.labels.mask_of(c)).unwrap_or(0.0);
    Ok(Segmentation {
        image: gray_rgba(&s.image),
        predicted: labels_rgba(&labels),
        truth: labels_rgba(&s.labels),
        porosity: pore_percent(&labels),
        truth_porosity: pore_percent(&s.labels),
        iou: [iou(Class::PoreI), iou(Class::PoreII)],
    })
}

/// Pipeline porosity over `steps` evenly spaced times in [0, 1], flattened as
/// `[t, pore I %, pore II %]` triples. Slices the pipeline rejects are skipped.
#[wasm_bindgen]
pub fn porosity_trend(canvas: usize, noise: f64, seed: u64, steps: usize) -> Result<Vec<f64>, JsError> {
    let mut out = Vec::with_capacity(3 * steps);
    for i in 0..steps {
        let t = if steps > 1 { i as f64 / (steps - 1) as f64 } else { 0.0 };
        let s = render(&spec(canvas, t, noise, seed)?).map_err(|e| JsError::new(&e.to_string()))?;
        if let Ok((labels, _, _)) = run_pipeline(&s.image, &PipelineSettings::default()) {
            let [a, b] = pore_percent(&labels);
            out.extend_from_slice(&[t, a, b]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_trend() {
        assert_eq!(render_phantom(64, 0.5, 10.0, 1).ok().unwrap().len(), 64 * 64 * 4);
        let s = segment(64, 0.5, 10.0, 1, 0.3, true).ok().unwrap();
        assert_eq!(s.predicted().len(), 64 * 64 * 4);
        assert!(s.iou().iter().all(|&v| v > 0.9));
        let trend = porosity_trend(64, 10.0, 1, 3).ok().unwrap();
        assert_eq!(trend.len(), 9);
        assert!(trend[1] < trend[7] && trend[2] > trend[8]);
    }
}
