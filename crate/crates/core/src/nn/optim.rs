//! Parameter update rules.

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

fn check_pairs<T: Real>(params: &[&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters, {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        p.expect_shape(g.shape())?;
    }
    Ok(())
}

/// `theta <- theta - lr * g`.
pub fn sgd_step<T: Real>(params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>], lr: f64) -> Result<()> {
    check_pairs(params, grads)?;
    let lr = T::lit(lr);
    for (p, g) in params.iter_mut().zip(grads) {
        for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
            *w = *w - lr * d;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        let open = |b: f64| b > 0.0 && b < 1.0;
        if !open(self.beta1) || !open(self.beta2) {
            return Err(Error::InvalidConfig(format!(
                "adam betas must lie in (0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig(format!("adam epsilon must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(shapes: &[&[usize]]) -> Self {
        let zeros = |s: &&[usize]| vec![T::zero(); s.iter().product()];
        Self {
            m: shapes.iter().map(zeros).collect(),
            v: shapes.iter().map(zeros).collect(),
            t: 0,
        }
    }
}

/// Bias-corrected Adam update at step `t` (1-based).
pub fn adam_step<T: Real>(
    state: &mut AdamState<T>,
    params: &mut [&mut Tensor<T>],
    grads: &[&Tensor<T>],
    lr: f64,
    hp: &AdamParams,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidStep);
    }
    check_pairs(params, grads)?;
    if state.m.len() != params.len() || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
        return Err(Error::ShapeMismatch("adam state does not match parameters".into()));
    }
    let (b1, b2) = (T::lit(hp.beta1), T::lit(hp.beta2));
    let c1 = T::lit(1.0 - hp.beta1.powf(t as f64));
    let c2 = T::lit(1.0 - hp.beta2.powf(t as f64));
    let (lr, eps) = (T::lit(lr), T::lit(hp.eps));
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (i, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[i] = b1 * m[i] + (T::one() - b1) * d;
            v[i] = b2 * v[i] + (T::one() - b2) * d * d;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            *w = *w - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    state.t = t;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(Self::Adam),
            "sgd" => Ok(Self::Sgd),
            _ => Err(Error::InvalidConfig(format!("unknown optimizer '{s}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Adam => "adam",
            Self::Sgd => "sgd",
        }
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            Self::Adam => 1e-3,
            Self::Sgd => 1e-2,
        }
    }
}

/// Optimizer with its running state.
#[derive(Clone, Debug)]
pub enum Optimizer<T> {
    Sgd { lr: f64 },
    Adam { lr: f64, hp: AdamParams, state: AdamState<T> },
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: f64, hp: AdamParams, shapes: &[&[usize]]) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::Sgd { lr },
            OptimizerKind::Adam => Self::Adam {
                lr,
                hp,
                state: AdamState::new(shapes),
            },
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        match self {
            Self::Sgd { lr } => sgd_step(params, grads, *lr),
            Self::Adam { lr, hp, state } => {
                let t = state.t + 1;
                adam_step(state, params, grads, *lr, hp, t)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_cases() {
        let mut w = Tensor::from_vec(&[3], vec![1.0, -2.0, 3.0f64]).unwrap();
        let orig = w.clone();
        sgd_step(&mut [&mut w], &[&Tensor::zeros(&[3])], 0.5).unwrap();
        assert_eq!(w, orig);
        let g = w.clone();
        sgd_step(&mut [&mut w], &[&g], 1.0).unwrap();
        assert!(w.data().iter().all(|&v| v == 0.0));

        let g = Tensor::from_vec(&[3], vec![0.5, 1.0, -2.0f64]).unwrap();
        let (mut a, mut b) = (orig.clone(), orig.clone());
        sgd_step(&mut [&mut a], &[&g], 0.25).unwrap();
        sgd_step(&mut [&mut a], &[&g], 0.25).unwrap();
        sgd_step(&mut [&mut b], &[&g], 0.5).unwrap();
        assert_eq!(a, b);
        assert!(sgd_step(&mut [&mut a], &[&Tensor::zeros(&[2])], 0.1).is_err());
    }

    #[test]
    fn adam_first_step() {
        let hp = AdamParams::default();
        let mut w = Tensor::full(&[4], 0.5f64);
        let mut st = AdamState::new(&[&[4]]);
        adam_step(&mut st, &mut [&mut w], &[&Tensor::zeros(&[4])], 1e-3, &hp, 1).unwrap();
        assert!(w.data().iter().all(|&v| v == 0.5));

        let mut st = AdamState::new(&[&[4]]);
        adam_step(&mut st, &mut [&mut w], &[&Tensor::full(&[4], 1.0)], 1e-3, &hp, 1).unwrap();
        for &v in w.data() {
            assert!((0.5 - v - 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
        }
        assert!(matches!(
            adam_step(&mut st, &mut [&mut w], &[&Tensor::full(&[4], 1.0)], 1e-3, &hp, 0),
            Err(Error::InvalidStep)
        ));
    }

    #[test]
    fn adam_param_validation() {
        assert!(AdamParams::default().validate().is_ok());
        assert!(AdamParams { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(AdamParams { beta2: 0.0, ..Default::default() }.validate().is_err());
    }
}
