//! Synthetic dual-pore specimens with exact ground truth.
//!
//! A phantom slice is a disc-shaped sample with a bright core, a pore
//! touching the core (pore I), a crescent pore embedded in the shell
//! (pore II) and optionally a bright arc near the core that is disconnected
//! from it. A time parameter `t ∈ [0, 1]` grows pore I and shrinks pore II.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{BinaryMask, Class, GrayImage, ImageStack, LabelMap};

/// Value linearly interpolated over `t ∈ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ramp {
    pub start: f64,
    pub end: f64,
}

impl Ramp {
    pub const fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { start: v, end: v }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.start + (self.end - self.start) * t
    }

    fn scaled(self, k: f64) -> Self {
        Self::new(self.start * k, self.end * k)
    }
}

/// Pore I: a disc whose centre sits `center_offset` px outside the core edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoreDisc {
    pub radius: Ramp,
    pub center_offset: f64,
    pub contact_angle_deg: f64,
}

/// Pore II: an annular sector centred opposite the pore I contact angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crescent {
    pub mean_radius: f64,
    pub thickness: Ramp,
    pub extent_deg: Ramp,
}

/// Bright arc around the core, separated from it by `gap` px.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ring {
    pub gap: f64,
    pub width: f64,
    pub extent_deg: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intensities {
    pub background: f64,
    pub pore: f64,
    pub crust: f64,
    pub core: f64,
}

impl Default for Intensities {
    fn default() -> Self {
        Self {
            background: 0.0,
            pore: 10.0,
            crust: 170.0,
            core: 230.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub canvas: usize,
    pub sample_radius: f64,
    pub core_radius: f64,
    pub pore1: PoreDisc,
    pub pore2: Crescent,
    pub ring: Option<Ring>,
    pub intensities: Intensities,
    pub noise_sigma: f64,
    pub time: f64,
    pub seed: u64,
}

const REFERENCE_CANVAS: f64 = 128.0;

impl Default for PhantomSpec {
    fn default() -> Self {
        Self::for_canvas(128)
    }
}

impl PhantomSpec {
    /// Default geometry scaled to a square canvas of `canvas` px.
    pub fn for_canvas(canvas: usize) -> Self {
        let k = canvas as f64 / REFERENCE_CANVAS;
        Self {
            canvas,
            sample_radius: 52.0 * k,
            core_radius: 16.0 * k,
            pore1: PoreDisc {
                radius: Ramp::new(9.0, 18.0).scaled(k),
                center_offset: 4.0 * k,
                contact_angle_deg: 30.0,
            },
            pore2: Crescent {
                mean_radius: 36.0 * k,
                thickness: Ramp::new(11.0, 8.0).scaled(k),
                extent_deg: Ramp::new(100.0, 50.0),
            },
            ring: Some(Ring {
                gap: 3.0 * k,
                width: 3.0 * k,
                extent_deg: 90.0,
            }),
            intensities: Intensities::default(),
            noise_sigma: 10.0,
            time: 0.0,
            seed: 0,
        }
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    fn geometry(&self) -> Geometry {
        let t = self.time;
        let centre = self.canvas as f64 / 2.0;
        let contact = self.pore1.contact_angle_deg.to_radians();
        Geometry {
            centre,
            sample_r: self.sample_radius,
            core_r: self.core_radius,
            pore1_r: self.pore1.radius.at(t).max(0.0),
            pore1_d: self.core_radius + self.pore1.center_offset,
            contact,
            opposite: contact + PI,
            crescent_r: self.pore2.mean_radius,
            crescent_half_th: self.pore2.thickness.at(t).max(0.0) / 2.0,
            crescent_half_ext: self.pore2.extent_deg.at(t).max(0.0).to_radians() / 2.0,
            ring: self.ring,
        }
    }

    /// Checks that regions stay nested and disjoint as constructed.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidGeometry(msg.to_string()));
        if self.canvas == 0 {
            return bad("canvas must be non-zero");
        }
        if !(0.0..=1.0).contains(&self.time) {
            return bad("time must lie in [0, 1]");
        }
        if self.core_radius <= 0.0 || self.core_radius >= self.sample_radius {
            return bad("core radius must be in (0, sample radius)");
        }
        if self.sample_radius * 2.0 >= self.canvas as f64 {
            return bad("sample does not fit on the canvas");
        }
        if self.noise_sigma < 0.0 {
            return bad("noise sigma must be non-negative");
        }
        let i = &self.intensities;
        if !(i.background < i.pore && i.pore < i.crust && i.crust < i.core) {
            return bad("intensities must order background < pore < crust < core");
        }
        let g = self.geometry();
        if g.pore1_r > 0.0 {
            if g.pore1_r <= self.pore1.center_offset {
                return bad("pore I must reach the core");
            }
            if g.pore1_d + g.pore1_r >= g.sample_r - 1.0 {
                return bad("pore I must stay inside the sample");
            }
        }
        if g.crescent_half_th > 0.0 && g.crescent_half_ext > 0.0 {
            if g.crescent_r + g.crescent_half_th >= g.sample_r - 1.0 {
                return bad("pore II must stay inside the sample");
            }
            if g.crescent_r - g.crescent_half_th <= g.core_r + 1.0 {
                return bad("pore II must not reach the core");
            }
            if g.crescent_half_ext > PI / 2.0 {
                return bad("pore II must stay on the half facing away from pore I");
            }
        }
        if let Some(r) = self.ring {
            if r.gap < 1.0 || r.width <= 0.0 {
                return bad("ring needs a gap of at least one pixel");
            }
            if g.core_r + r.gap + r.width >= g.crescent_r - g.crescent_half_th - 1.0 {
                return bad("ring overlaps pore II");
            }
        }
        Ok(())
    }
}

struct Geometry {
    centre: f64,
    sample_r: f64,
    core_r: f64,
    pore1_r: f64,
    pore1_d: f64,
    contact: f64,
    opposite: f64,
    crescent_r: f64,
    crescent_half_th: f64,
    crescent_half_ext: f64,
    ring: Option<Ring>,
}

fn angle_between(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Region {
    Background,
    Crust,
    Core,
    Ring,
    Pore1,
    Pore2,
}

impl Geometry {
    fn region(&self, x: usize, y: usize) -> Region {
        let px = x as f64 + 0.5 - self.centre;
        let py = y as f64 + 0.5 - self.centre;
        let rho = px.hypot(py);
        if rho > self.sample_r {
            return Region::Background;
        }
        if rho <= self.core_r {
            return Region::Core;
        }
        let (cx, cy) = (self.pore1_d * self.contact.cos(), self.pore1_d * self.contact.sin());
        if self.pore1_r > 0.0 && (px - cx).hypot(py - cy) <= self.pore1_r {
            return Region::Pore1;
        }
        let theta = py.atan2(px);
        let off = angle_between(theta, self.opposite);
        if (rho - self.crescent_r).abs() <= self.crescent_half_th && off <= self.crescent_half_ext {
            return Region::Pore2;
        }
        if let Some(r) = self.ring {
            let inner = self.core_r + r.gap;
            if rho >= inner && rho <= inner + r.width && off <= r.extent_deg.to_radians() / 2.0 {
                return Region::Ring;
            }
        }
        Region::Crust
    }
}

/// Area shared by two discs with radii `r1`, `r2` and centre distance `d`.
pub fn lens_area(r1: f64, r2: f64, d: f64) -> f64 {
    if r1 <= 0.0 || r2 <= 0.0 || d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        return PI * r1.min(r2).powi(2);
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).acos();
    let k = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).sqrt();
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k
}

/// Areas in px²: rasterized pixel counts and closed-form values.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Areas {
    pub sample: f64,
    pub core: f64,
    pub pore1: f64,
    pub pore2: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RegionAreas {
    pub pixels: Areas,
    pub analytic: Areas,
}

#[derive(Clone, Debug)]
pub struct PhantomSlice {
    pub image: GrayImage,
    pub labels: LabelMap,
    /// Ground-truth core footprint (labelled crust in `labels`).
    pub core: BinaryMask,
    pub areas: RegionAreas,
}

fn analytic_areas(g: &Geometry) -> Areas {
    let core = PI * g.core_r * g.core_r;
    let pore1 = PI * g.pore1_r * g.pore1_r - lens_area(g.pore1_r, g.core_r, g.pore1_d);
    let pore2 = (2.0 * g.crescent_half_ext) * g.crescent_r * (2.0 * g.crescent_half_th);
    Areas {
        sample: PI * g.sample_r * g.sample_r,
        core,
        pore1,
        pore2,
    }
}

/// Rasterizes a phantom slice with seeded additive Gaussian noise.
pub fn render(spec: &PhantomSpec) -> Result<PhantomSlice> {
    spec.validate()?;
    let g = spec.geometry();
    let n = spec.canvas;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidGeometry(e.to_string()))?;
    let it = &spec.intensities;

    let mut image = GrayImage::new(n, n);
    let mut labels = LabelMap::filled(n, n, Class::Background);
    let mut core = BinaryMask::new(n, n);
    let mut px = Areas::default();
    for y in 0..n {
        for x in 0..n {
            let region = g.region(x, y);
            let (class, level) = match region {
                Region::Background => (Class::Background, it.background),
                Region::Crust => (Class::Crust, it.crust),
                Region::Core | Region::Ring => (Class::Crust, it.core),
                Region::Pore1 => (Class::PoreI, it.pore),
                Region::Pore2 => (Class::PoreII, it.pore),
            };
            match region {
                Region::Background => {}
                Region::Core => {
                    core.set(x, y, true);
                    px.core += 1.0;
                }
                Region::Pore1 => px.pore1 += 1.0,
                Region::Pore2 => px.pore2 += 1.0,
                _ => {}
            }
            if region != Region::Background {
                px.sample += 1.0;
            }
            let v = if spec.noise_sigma > 0.0 {
                level + noise.sample(&mut rng)
            } else {
                level
            };
            image.set(x, y, v.round().clamp(0.0, 255.0) as f32);
            labels.set(x, y, class);
        }
    }
    Ok(PhantomSlice {
        image,
        labels,
        core,
        areas: RegionAreas {
            pixels: px,
            analytic: analytic_areas(&g),
        },
    })
}

/// One rendered stack at a single time step.
#[derive(Clone, Debug)]
pub struct PhantomStack {
    pub time: f64,
    pub images: ImageStack,
    pub labels: Vec<LabelMap>,
    pub areas: Vec<RegionAreas>,
}

impl PhantomStack {
    /// Summed per-slice areas.
    pub fn total_areas(&self) -> RegionAreas {
        let add = |a: Areas, b: Areas| Areas {
            sample: a.sample + b.sample,
            core: a.core + b.core,
            pore1: a.pore1 + b.pore1,
            pore2: a.pore2 + b.pore2,
        };
        self.areas.iter().fold(RegionAreas::default(), |acc, r| RegionAreas {
            pixels: add(acc.pixels, r.pixels),
            analytic: add(acc.analytic, r.analytic),
        })
    }

    /// Closed-form percent porosity of (pore I, pore II).
    pub fn analytic_porosity(&self) -> (f64, f64) {
        let a = self.total_areas().analytic;
        (a.pore1 / a.sample * 100.0, a.pore2 / a.sample * 100.0)
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words.
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-slice variant of `spec`: radii jittered by up to ±2% (depending only
/// on the seed and slice index, so different time steps stay comparable),
/// noise seeded by slice and time.
pub fn slice_spec(spec: &PhantomSpec, slice: usize, time: f64) -> PhantomSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, slice as u64, 0));
    let mut jitter = || 1.0 + rng.random_range(-0.02..=0.02);
    let mut s = spec.clone();
    s.sample_radius *= jitter();
    s.core_radius *= jitter();
    s.pore1.radius = s.pore1.radius.scaled(jitter());
    s.pore2.mean_radius *= jitter();
    s.pore2.thickness = s.pore2.thickness.scaled(jitter());
    s.time = time;
    s.seed = mix(spec.seed, slice as u64, time.to_bits().wrapping_add(1));
    s
}

/// Renders `slices` jittered slices at each time step.
pub fn render_stack(spec: &PhantomSpec, slices: usize, times: &[f64]) -> Result<Vec<PhantomStack>> {
    if slices == 0 {
        return Err(Error::InvalidGeometry("at least one slice required".into()));
    }
    times
        .iter()
        .map(|&t| {
            let rendered: Vec<PhantomSlice> = (0..slices)
                .into_par_iter()
                .map(|i| render(&slice_spec(spec, i, t)))
                .collect::<Result<_>>()?;
            let mut images = Vec::with_capacity(slices);
            let mut labels = Vec::with_capacity(slices);
            let mut areas = Vec::with_capacity(slices);
            for s in rendered {
                images.push(s.image);
                labels.push(s.labels);
                areas.push(s.areas);
            }
            Ok(PhantomStack {
                time: t,
                images: ImageStack::new(format!("t={t}"), images)?,
                labels,
                areas,
            })
        })
        .collect()
}
