//! Encoder-decoder segmentation network with skip connections.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{self, BnCache, BN_MOMENTUM};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub input_size: usize,
    pub levels: usize,
    pub base_channels: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub batchnorm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: 128,
            levels: 4,
            base_channels: 32,
            num_classes: 4,
            dropout_rate: 0.25,
            batchnorm: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels > 12 {
            return Err(Error::InvalidConfig(format!("levels must be in 1..=12, got {}", self.levels)));
        }
        let step = 1usize << self.levels;
        if self.input_size == 0 || !self.input_size.is_multiple_of(step) {
            return Err(Error::InvalidConfig(format!(
                "input_size {} is not divisible by 2^{}",
                self.input_size, self.levels
            )));
        }
        if self.num_classes < 2 || self.num_classes > 255 {
            return Err(Error::InvalidConfig(format!("num_classes must be in 2..=255, got {}", self.num_classes)));
        }
        if self.base_channels == 0 {
            return Err(Error::InvalidConfig("base_channels must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidRate(self.dropout_rate));
        }
        Ok(())
    }

    /// Feature width at encoder level `l` (the bottleneck is `l = levels`).
    pub fn channels(&self, l: usize) -> usize {
        self.base_channels << l
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

/// conv3x3 -> ReLU -> conv3x3 -> ReLU, followed in the encoder by dropout
/// and batchnorm.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub conv1: Conv<T>,
    pub conv2: Conv<T>,
    pub dropout: bool,
    pub bn: Option<BatchNorm<T>>,
}

/// Network parameters. Gradients are stored in the same structure.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T = f32> {
    pub config: ModelConfig,
    pub encoders: Vec<Block<T>>,
    pub bottleneck: Block<T>,
    /// Transposed convolutions, deepest first; kernels are `(in, out, 2, 2)`.
    pub ups: Vec<Conv<T>>,
    /// Decoder blocks, deepest first.
    pub decoders: Vec<Block<T>>,
    pub head: Conv<T>,
}

fn uniform<T: Real>(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
    Tensor::from_vec(shape, data).expect("shape product")
}

fn conv_init<T: Real>(ci: usize, co: usize, k: usize, rng: &mut impl Rng) -> Conv<T> {
    let bound = (6.0 / (ci * k * k) as f64).sqrt();
    Conv {
        weight: uniform(&[co, ci, k, k], bound, rng),
        bias: Tensor::zeros(&[co]),
    }
}

fn tconv_init<T: Real>(ci: usize, co: usize, rng: &mut impl Rng) -> Conv<T> {
    let bound = (6.0 / ci as f64).sqrt();
    Conv {
        weight: uniform(&[ci, co, 2, 2], bound, rng),
        bias: Tensor::zeros(&[co]),
    }
}

fn block_init<T: Real>(ci: usize, co: usize, regularized: bool, batchnorm: bool, rng: &mut impl Rng) -> Block<T> {
    let conv1 = conv_init(ci, co, 3, rng);
    let conv2 = conv_init(co, co, 3, rng);
    let bn = (regularized && batchnorm).then(|| BatchNorm {
        gamma: Tensor::full(&[co], T::one()),
        beta: Tensor::zeros(&[co]),
        running_mean: Tensor::zeros(&[co]),
        running_var: Tensor::full(&[co], T::one()),
    });
    Block {
        conv1,
        conv2,
        dropout: regularized,
        bn,
    }
}

/// Builds a freshly initialized model: Kaiming-uniform kernels, zero biases,
/// unit gamma and zero beta.
pub fn build_model<T: Real>(cfg: &ModelConfig, seed: u64) -> Result<Model<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = |l| cfg.channels(l);
    let encoders = (0..cfg.levels)
        .map(|l| block_init(if l == 0 { 1 } else { c(l - 1) }, c(l), true, cfg.batchnorm, &mut rng))
        .collect();
    let bottleneck = block_init(c(cfg.levels - 1), c(cfg.levels), true, cfg.batchnorm, &mut rng);
    let mut ups = Vec::with_capacity(cfg.levels);
    let mut decoders = Vec::with_capacity(cfg.levels);
    for l in (0..cfg.levels).rev() {
        ups.push(tconv_init(c(l + 1), c(l), &mut rng));
        decoders.push(block_init(2 * c(l), c(l), false, false, &mut rng));
    }
    let head = conv_init(c(0), cfg.num_classes, 1, &mut rng);
    Ok(Model {
        config: *cfg,
        encoders,
        bottleneck,
        ups,
        decoders,
        head,
    })
}

#[derive(Clone, Debug)]
struct BlockCache<T> {
    input: Tensor<T>,
    a1: Tensor<T>,
    r1: Tensor<T>,
    a2: Tensor<T>,
    mask: Option<Vec<T>>,
    bn: Option<BnCache<T>>,
}

/// Activations retained by [`Model::forward_train`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    encoders: Vec<BlockCache<T>>,
    skips: Vec<Tensor<T>>,
    pools: Vec<Vec<usize>>,
    bottleneck: BlockCache<T>,
    up_inputs: Vec<Tensor<T>>,
    decoders: Vec<BlockCache<T>>,
    head_input: Tensor<T>,
}

fn conv_fwd<T: Real>(c: &Conv<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    layers::conv2d(x, &c.weight, &c.bias)
}

impl<T: Real> Block<T> {
    fn forward_train(&mut self, x: &Tensor<T>, rate: f64, rng: &mut impl Rng) -> Result<(Tensor<T>, BlockCache<T>)> {
        let a1 = conv_fwd(&self.conv1, x)?;
        let r1 = layers::relu(&a1);
        let a2 = conv_fwd(&self.conv2, &r1)?;
        let r2 = layers::relu(&a2);
        let (d, mask) = if self.dropout {
            layers::dropout(&r2, rate, layers::Mode::Train, rng)?
        } else {
            (r2, None)
        };
        let (out, bn_cache) = match &mut self.bn {
            Some(bn) => {
                let (y, cache) = layers::batchnorm_train(&d, &bn.gamma, &bn.beta)?;
                let mom = T::lit(BN_MOMENTUM);
                let keep = T::one() - mom;
                for (r, &m) in bn.running_mean.data_mut().iter_mut().zip(&cache.mean) {
                    *r = mom * *r + keep * m;
                }
                for (r, &v) in bn.running_var.data_mut().iter_mut().zip(&cache.var) {
                    *r = mom * *r + keep * v;
                }
                (y, Some(cache))
            }
            None => (d, None),
        };
        Ok((
            out,
            BlockCache {
                input: x.clone(),
                a1,
                r1,
                a2,
                mask,
                bn: bn_cache,
            },
        ))
    }

    fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let r1 = layers::relu(&conv_fwd(&self.conv1, x)?);
        let r2 = layers::relu(&conv_fwd(&self.conv2, &r1)?);
        match &self.bn {
            Some(bn) => layers::batchnorm_eval(&r2, &bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var),
            None => Ok(r2),
        }
    }

    /// Writes parameter gradients into `grad` and returns the input gradient.
    fn backward(&self, cache: &BlockCache<T>, g: &Tensor<T>, grad: &mut Block<T>) -> Result<Tensor<T>> {
        let mut g = match (&self.bn, &cache.bn, &mut grad.bn) {
            (Some(bn), Some(bc), Some(gbn)) => {
                let (gx, gg, gb) = layers::batchnorm_backward(bc, &bn.gamma, g)?;
                gbn.gamma = gg;
                gbn.beta = gb;
                gx
            }
            _ => g.clone(),
        };
        if let Some(mask) = &cache.mask {
            g = layers::apply_mask(&g, mask)?;
        }
        let g = layers::relu_backward(&cache.a2, &g)?;
        let (g, gw, gb) = layers::conv2d_backward(&cache.r1, &self.conv2.weight, &g)?;
        grad.conv2 = Conv { weight: gw, bias: gb };
        let g = layers::relu_backward(&cache.a1, &g)?;
        let (g, gw, gb) = layers::conv2d_backward(&cache.input, &self.conv1.weight, &g)?;
        grad.conv1 = Conv { weight: gw, bias: gb };
        Ok(g)
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.conv1.weight, &self.conv1.bias, &self.conv2.weight, &self.conv2.bias];
        if let Some(bn) = &self.bn {
            v.extend([&bn.gamma, &bn.beta]);
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
        ];
        if let Some(bn) = &mut self.bn {
            v.extend([&mut bn.gamma, &mut bn.beta]);
        }
        v
    }

    fn buffers(&self) -> Vec<&Tensor<T>> {
        match &self.bn {
            Some(bn) => vec![&bn.running_mean, &bn.running_var],
            None => Vec::new(),
        }
    }

    fn split_mut<'a>(&'a mut self, params: &mut Vec<&'a mut Tensor<T>>, bufs: &mut Vec<&'a mut Tensor<T>>) {
        let Block { conv1, conv2, bn, .. } = self;
        params.extend([&mut conv1.weight, &mut conv1.bias, &mut conv2.weight, &mut conv2.bias]);
        if let Some(bn) = bn {
            params.extend([&mut bn.gamma, &mut bn.beta]);
            bufs.extend([&mut bn.running_mean, &mut bn.running_var]);
        }
    }
}

impl<T: Real> Model<T> {
    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        let step = 1 << self.config.levels;
        if c != 1 || h % step != 0 || w % step != 0 {
            return Err(Error::ShapeMismatch(format!(
                "model input must be (n, 1, h, w) with h, w divisible by {step}, got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    /// Training-mode forward pass: dropout active, batch statistics used and
    /// running statistics updated. Returns logits.
    pub fn forward_train(&mut self, x: &Tensor<T>, rng: &mut impl Rng) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let rate = self.config.dropout_rate;
        let mut h = x.clone();
        let mut enc = Vec::with_capacity(self.encoders.len());
        let mut skips = Vec::with_capacity(self.encoders.len());
        let mut pools = Vec::with_capacity(self.encoders.len());
        for block in &mut self.encoders {
            let (y, cache) = block.forward_train(&h, rate, rng)?;
            let (p, arg) = layers::maxpool2(&y)?;
            enc.push(cache);
            skips.push(y);
            pools.push(arg);
            h = p;
        }
        let (mut h, bottleneck) = self.bottleneck.forward_train(&h, rate, rng)?;
        let mut up_inputs = Vec::with_capacity(self.ups.len());
        let mut dec = Vec::with_capacity(self.decoders.len());
        for (j, (up, block)) in self.ups.iter().zip(&mut self.decoders).enumerate() {
            let u = layers::transposed_conv2(&h, &up.weight, &up.bias)?;
            up_inputs.push(h);
            let cat = layers::concat_channels(&u, &skips[skips.len() - 1 - j])?;
            let (y, cache) = block.forward_train(&cat, rate, rng)?;
            dec.push(cache);
            h = y;
        }
        let logits = conv_fwd(&self.head, &h)?;
        if !logits.is_finite() {
            return Err(Error::NonFinite("logits"));
        }
        Ok((
            logits,
            ForwardCache {
                encoders: enc,
                skips,
                pools,
                bottleneck,
                up_inputs,
                decoders: dec,
                head_input: h,
            },
        ))
    }

    /// Replaces every batchnorm running estimate by the average of the batch
    /// statistics over `batches`, seen with dropout disabled.
    pub fn recalibrate_batchnorm(&mut self, batches: &[Tensor<T>]) -> Result<()> {
        if batches.is_empty() || !self.config.batchnorm {
            return Ok(());
        }
        let rate = self.config.dropout_rate;
        self.config.dropout_rate = 0.0;
        let stats = self.collect_bn_stats(batches);
        self.config.dropout_rate = rate;
        let (means, vars) = stats?;
        let count = T::lit(batches.len() as f64);
        let bns = self.encoders.iter_mut().chain(std::iter::once(&mut self.bottleneck)).filter_map(|b| b.bn.as_mut());
        for ((bn, m), v) in bns.zip(means).zip(vars) {
            for (r, s) in bn.running_mean.data_mut().iter_mut().zip(m) {
                *r = s / count;
            }
            for (r, s) in bn.running_var.data_mut().iter_mut().zip(v) {
                *r = s / count;
            }
        }
        Ok(())
    }

    #[allow(clippy::type_complexity)]
    fn collect_bn_stats(&mut self, batches: &[Tensor<T>]) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut means: Vec<Vec<T>> = Vec::new();
        let mut vars: Vec<Vec<T>> = Vec::new();
        for x in batches {
            let (_, cache) = self.forward_train(x, &mut rng)?;
            let caches = cache.encoders.iter().chain(std::iter::once(&cache.bottleneck)).filter_map(|c| c.bn.as_ref());
            for (i, bc) in caches.enumerate() {
                if means.len() <= i {
                    means.push(vec![T::zero(); bc.mean.len()]);
                    vars.push(vec![T::zero(); bc.var.len()]);
                }
                for (a, &m) in means[i].iter_mut().zip(&bc.mean) {
                    *a = *a + m;
                }
                for (a, &v) in vars[i].iter_mut().zip(&bc.var) {
                    *a = *a + v;
                }
            }
        }
        Ok((means, vars))
    }

    /// Inference forward pass using running statistics. Returns logits.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        let mut skips = Vec::with_capacity(self.encoders.len());
        for block in &self.encoders {
            let y = block.forward_eval(&h)?;
            h = layers::maxpool2(&y)?.0;
            skips.push(y);
        }
        let mut h = self.bottleneck.forward_eval(&h)?;
        for (up, block) in self.ups.iter().zip(&self.decoders) {
            let u = layers::transposed_conv2(&h, &up.weight, &up.bias)?;
            let skip = skips.pop().expect("one skip per level");
            h = block.forward_eval(&layers::concat_channels(&u, &skip)?)?;
        }
        let logits = conv_fwd(&self.head, &h)?;
        if !logits.is_finite() {
            return Err(Error::NonFinite("logits"));
        }
        Ok(logits)
    }

    /// Gradients of the loss w.r.t. every trainable parameter, given the
    /// gradient w.r.t. the logits. Running statistics in the result are zero.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_logits: &Tensor<T>) -> Result<Model<T>> {
        let mut grad = self.zeros_like();
        let (g, gw, gb) = layers::conv2d_backward(&cache.head_input, &self.head.weight, grad_logits)?;
        grad.head = Conv { weight: gw, bias: gb };
        let levels = self.config.levels;
        let mut g = g;
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; levels];
        for j in (0..levels).rev() {
            let gcat = self.decoders[j].backward(&cache.decoders[j], &g, &mut grad.decoders[j])?;
            let up_channels = self.ups[j].weight.shape()[1];
            let (gu, gskip) = layers::split_channels(&gcat, up_channels)?;
            skip_grads[levels - 1 - j] = Some(gskip);
            let (gx, gw, gb) = layers::transposed_conv2_backward(&cache.up_inputs[j], &self.ups[j].weight, &gu)?;
            grad.ups[j] = Conv { weight: gw, bias: gb };
            g = gx;
        }
        g = self.bottleneck.backward(&cache.bottleneck, &g, &mut grad.bottleneck)?;
        for l in (0..levels).rev() {
            let mut gy = layers::maxpool2_backward(&cache.pools[l], &g, cache.skips[l].shape())?;
            gy.add_assign(skip_grads[l].as_ref().expect("filled by decoder pass"))?;
            g = self.encoders[l].backward(&cache.encoders[l], &gy, &mut grad.encoders[l])?;
        }
        Ok(grad)
    }

    /// A model of identical structure with every tensor zeroed.
    pub fn zeros_like(&self) -> Model<T> {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data_mut().fill(T::zero());
        }
        z
    }

    fn blocks(&self) -> Vec<&Block<T>> {
        let mut v: Vec<&Block<T>> = self.encoders.iter().collect();
        v.push(&self.bottleneck);
        v.extend(self.decoders.iter());
        v
    }

    /// Trainable tensors in a fixed order shared by [`Model::params_mut`].
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut v = Vec::new();
        for b in &self.encoders {
            v.extend(b.params());
        }
        v.extend(self.bottleneck.params());
        for (u, b) in self.ups.iter().zip(&self.decoders) {
            v.extend([&u.weight, &u.bias]);
            v.extend(b.params());
        }
        v.extend([&self.head.weight, &self.head.bias]);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        for b in &mut self.encoders {
            v.extend(b.params_mut());
        }
        v.extend(self.bottleneck.params_mut());
        for (u, b) in self.ups.iter_mut().zip(&mut self.decoders) {
            v.extend([&mut u.weight, &mut u.bias]);
            v.extend(b.params_mut());
        }
        v.extend([&mut self.head.weight, &mut self.head.bias]);
        v
    }

    /// Batchnorm running statistics, in block order.
    pub fn buffers(&self) -> Vec<&Tensor<T>> {
        self.blocks().into_iter().flat_map(|b| b.buffers()).collect()
    }

    /// Every stored tensor: parameters followed by running statistics.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = self.params();
        v.extend(self.buffers());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut params = Vec::new();
        let mut bufs = Vec::new();
        for b in &mut self.encoders {
            b.split_mut(&mut params, &mut bufs);
        }
        self.bottleneck.split_mut(&mut params, &mut bufs);
        for (u, b) in self.ups.iter_mut().zip(&mut self.decoders) {
            params.extend([&mut u.weight, &mut u.bias]);
            b.split_mut(&mut params, &mut bufs);
        }
        params.extend([&mut self.head.weight, &mut self.head.bias]);
        params.extend(bufs);
        params
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        let conv = |c: &Conv<T>| Conv {
            weight: c.weight.cast(),
            bias: c.bias.cast(),
        };
        let block = |b: &Block<T>| Block {
            conv1: conv(&b.conv1),
            conv2: conv(&b.conv2),
            dropout: b.dropout,
            bn: b.bn.as_ref().map(|bn| BatchNorm {
                gamma: bn.gamma.cast(),
                beta: bn.beta.cast(),
                running_mean: bn.running_mean.cast(),
                running_var: bn.running_var.cast(),
            }),
        };
        Model {
            config: self.config,
            encoders: self.encoders.iter().map(block).collect(),
            bottleneck: block(&self.bottleneck),
            ups: self.ups.iter().map(conv).collect(),
            decoders: self.decoders.iter().map(block).collect(),
            head: conv(&self.head),
        }
    }

    pub fn describe(&self) -> Description {
        let mut d = Description {
            conv3x3: 0,
            conv1x1: 0,
            transposed: self.ups.len(),
            batchnorm: 0,
            dropout: 0,
            parameters: self.parameter_count(),
        };
        for b in self.blocks() {
            for c in [&b.conv1, &b.conv2] {
                match c.weight.shape()[2] {
                    1 => d.conv1x1 += 1,
                    _ => d.conv3x3 += 1,
                }
            }
            d.batchnorm += b.bn.is_some() as usize;
            d.dropout += (b.dropout && self.config.dropout_rate > 0.0) as usize;
        }
        d.conv1x1 += 1;
        d
    }
}

/// Layer counts of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Description {
    pub conv3x3: usize,
    pub conv1x1: usize,
    pub transposed: usize,
    pub batchnorm: usize,
    pub dropout: usize,
    pub parameters: usize,
}

impl Description {
    pub fn conv_layers(&self) -> usize {
        self.conv3x3 + self.conv1x1 + self.transposed
    }
}

impl fmt::Display for Description {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "conv3x3 = {}", self.conv3x3)?;
        writeln!(f, "conv1x1 = {}", self.conv1x1)?;
        writeln!(f, "transposed_conv2x2 = {}", self.transposed)?;
        writeln!(f, "conv_layers_total = {}", self.conv_layers())?;
        writeln!(f, "batchnorm = {}", self.batchnorm)?;
        writeln!(f, "dropout = {}", self.dropout)?;
        write!(f, "parameters = {}", self.parameters)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            input_size: 16,
            levels: 2,
            base_channels: 4,
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig { input_size: 100, ..Default::default() }.validate().is_err());
        assert!(ModelConfig { num_classes: 1, ..Default::default() }.validate().is_err());
        assert!(ModelConfig { dropout_rate: 1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn default_counts_follow_formula() {
        let cfg = ModelConfig::default();
        let m = build_model::<f32>(&cfg, 0).unwrap();
        let d = m.describe();
        assert_eq!(d.conv_layers(), 2 * (cfg.levels + 1) + 3 * cfg.levels + 1);
        assert_eq!(d.transposed, 4);
        assert_eq!(d.conv1x1, 1);
        assert_eq!(m.head.weight.shape(), &[4, 32, 1, 1]);
        assert_eq!(m.bottleneck.conv2.weight.shape()[0], 512);
        assert_eq!((d.batchnorm, d.dropout), (5, 5));
        assert!(m.decoders.iter().all(|b| b.bn.is_none() && !b.dropout));
    }

    #[test]
    fn output_shape_and_init_determinism() {
        let cfg = small();
        let mut m = build_model::<f32>(&cfg, 9).unwrap();
        assert_eq!(m, build_model::<f32>(&cfg, 9).unwrap());
        assert_ne!(m, build_model::<f32>(&cfg, 10).unwrap());
        let x = Tensor::full(&[2, 1, 16, 16], 0.5f32);
        assert_eq!(m.forward_eval(&x).unwrap().shape(), &[2, 4, 16, 16]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(m.forward_train(&x, &mut rng).unwrap().0.shape(), &[2, 4, 16, 16]);
        assert!(m.forward_eval(&Tensor::zeros(&[1, 1, 10, 16])).is_err());
    }

    #[test]
    fn params_and_grads_align() {
        let cfg = small();
        let mut m = build_model::<f64>(&cfg, 1).unwrap();
        let x = Tensor::full(&[2, 1, 16, 16], 0.1f64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (logits, cache) = m.forward_train(&x, &mut rng).unwrap();
        let g = m.backward(&cache, &logits).unwrap();
        let shapes: Vec<_> = m.params().iter().map(|t| t.shape().to_vec()).collect();
        let gshapes: Vec<_> = g.params().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, gshapes);
        let all: Vec<_> = m.tensors().iter().map(|t| t.shape().to_vec()).collect();
        let all_mut: Vec<_> = m.tensors_mut().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(all, all_mut);
    }
}
