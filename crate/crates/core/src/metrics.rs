//! Segmentation quality (precision, recall, F1) and percent porosity.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::{Class, LabelMap};

/// One-vs-rest pixel counts for a single class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

pub fn confusion(pred: &LabelMap, truth: &LabelMap, class: Class) -> Result<ConfusionCounts> {
    if pred.dims() != truth.dims() {
        return Err(Error::DimensionMismatch {
            expected: truth.dims(),
            actual: pred.dims(),
        });
    }
    let c = class as u8;
    let mut out = ConfusionCounts::default();
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        match (p == c, t == c) {
            (true, true) => out.tp += 1,
            (true, false) => out.fp += 1,
            (false, true) => out.fn_ += 1,
            (false, false) => out.tn += 1,
        }
    }
    Ok(out)
}

/// A ratio metric; zero denominators yield 0 with `degenerate` set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ratio {
    pub value: f64,
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64) -> Ratio {
    if den == 0 {
        Ratio {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Ratio {
            value: num as f64 / den as f64,
            degenerate: false,
        }
    }
}

pub fn precision(c: &ConfusionCounts) -> Ratio {
    ratio(c.tp, c.tp + c.fp)
}

pub fn recall(c: &ConfusionCounts) -> Ratio {
    ratio(c.tp, c.tp + c.fn_)
}

/// `2 Tp / (2 Tp + Fn + Fp)`.
pub fn f1(c: &ConfusionCounts) -> Ratio {
    ratio(2 * c.tp, 2 * c.tp + c.fn_ + c.fp)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_from_precision_recall(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMetrics {
    pub class: Class,
    pub counts: ConfusionCounts,
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
}

impl ClassMetrics {
    pub fn from_counts(class: Class, counts: ConfusionCounts) -> Self {
        Self {
            class,
            counts,
            precision: precision(&counts),
            recall: recall(&counts),
            f1: f1(&counts),
        }
    }
}

/// Per-slice and whole-set metrics over all four classes.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// `(slice index, per-class metrics)`.
    pub slices: Vec<(usize, Vec<ClassMetrics>)>,
    pub total: Vec<ClassMetrics>,
}

impl MetricsReport {
    pub fn evaluate(pairs: &[(LabelMap, LabelMap)]) -> Result<Self> {
        let mut totals = [ConfusionCounts::default(); Class::COUNT];
        let mut slices = Vec::with_capacity(pairs.len());
        for (i, (pred, truth)) in pairs.iter().enumerate() {
            let mut row = Vec::with_capacity(Class::COUNT);
            for class in Class::ALL {
                let c = confusion(pred, truth, class)?;
                totals[class.index()] = totals[class.index()] + c;
                row.push(ClassMetrics::from_counts(class, c));
            }
            slices.push((i, row));
        }
        let total = Class::ALL
            .iter()
            .map(|&c| ClassMetrics::from_counts(c, totals[c.index()]))
            .collect();
        Ok(Self { slices, total })
    }

    pub fn total_for(&self, class: Class) -> &ClassMetrics {
        &self.total[class.index()]
    }

    /// Macro averages of (precision, recall, f1) over the classes given.
    pub fn macro_average(&self, classes: &[Class]) -> (f64, f64, f64) {
        let n = classes.len().max(1) as f64;
        let mut acc = (0.0, 0.0, 0.0);
        for &c in classes {
            let m = self.total_for(c);
            acc.0 += m.precision.value;
            acc.1 += m.recall.value;
            acc.2 += m.f1.value;
        }
        (acc.0 / n, acc.1 / n, acc.2 / n)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("slice,class,tp,fp,fn,precision,recall,f1\n");
        let mut row = |slice: &str, m: &ClassMetrics| {
            let _ = writeln!(
                out,
                "{slice},{},{},{},{},{:.6},{:.6},{:.6}",
                m.class.name(),
                m.counts.tp,
                m.counts.fp,
                m.counts.fn_,
                m.precision.value,
                m.recall.value,
                m.f1.value
            );
        };
        for (i, metrics) in &self.slices {
            for m in metrics {
                row(&i.to_string(), m);
            }
        }
        for m in &self.total {
            row("TOTAL", m);
        }
        out
    }
}

/// Pore and sample pixel tallies for one slice (or an aggregate).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PoreCounts {
    pub pore1: u64,
    pub pore2: u64,
    /// Every non-background pixel, pores included.
    pub sample: u64,
}

impl PoreCounts {
    pub fn of(labels: &LabelMap) -> Self {
        let c = labels.class_counts();
        Self {
            pore1: c[Class::PoreI.index()] as u64,
            pore2: c[Class::PoreII.index()] as u64,
            sample: (labels.width() * labels.height() - c[Class::Background.index()]) as u64,
        }
    }

    pub fn pores(&self, class: Class) -> u64 {
        match class {
            Class::PoreI => self.pore1,
            Class::PoreII => self.pore2,
            _ => 0,
        }
    }
}

/// `Np / Ns * 100`, or `None` without sample pixels.
pub fn percent(np: u64, ns: u64) -> Option<f64> {
    (ns > 0).then(|| np as f64 / ns as f64 * 100.0)
}

/// Percent porosity per slice and over the whole stack.
#[derive(Clone, Debug, PartialEq)]
pub struct PorosityReport {
    pub slices: Vec<PoreCounts>,
    pub total: PoreCounts,
}

impl PorosityReport {
    pub fn percent(&self, class: Class) -> f64 {
        percent(self.total.pores(class), self.total.sample).unwrap_or(0.0)
    }

    pub fn percent_total(&self) -> f64 {
        percent(self.total.pore1 + self.total.pore2, self.total.sample).unwrap_or(0.0)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("slice,class,np,ns,percent\n");
        let mut row = |slice: &str, c: &PoreCounts| {
            for (name, np) in [("pore_i", c.pore1), ("pore_ii", c.pore2), ("total", c.pore1 + c.pore2)] {
                let pct = percent(np, c.sample).unwrap_or(0.0);
                let _ = writeln!(out, "{slice},{name},{np},{},{pct:.6}", c.sample);
            }
        };
        for (i, c) in self.slices.iter().enumerate() {
            row(&i.to_string(), c);
        }
        row("TOTAL", &self.total);
        out
    }
}

/// Percent porosity of a label stack, aggregating pixel counts over slices.
pub fn percent_porosity(stack: &[LabelMap]) -> Result<PorosityReport> {
    let slices: Vec<PoreCounts> = stack.iter().map(PoreCounts::of).collect();
    let total = slices.iter().fold(PoreCounts::default(), |a, c| PoreCounts {
        pore1: a.pore1 + c.pore1,
        pore2: a.pore2 + c.pore2,
        sample: a.sample + c.sample,
    });
    if total.sample == 0 {
        return Err(Error::NoSample);
    }
    Ok(PorosityReport { slices, total })
}
