mod common;

use common::{conv_oracle, fd_worst, random_tensor as random, rel_err, tconv_oracle, weighted, FD_STEP as H, FD_TOL as TOL};
use porestack::nn::layers::*;
use porestack::nn::loss::softmax_cross_entropy;
use porestack::nn::{build_model, ModelConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(name: &str, x: &Tensor<f64>, analytic: &Tensor<f64>, f: impl Fn(&Tensor<f64>) -> f64) {
    let worst = fd_worst(x, analytic, f);
    assert!(worst <= TOL, "{name}: worst relative error {worst:e}");
}

#[test]
fn conv_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for (k, c, oc, h, w) in [(3, 3, 4, 8, 8), (1, 4, 2, 5, 7), (3, 1, 5, 6, 3)] {
        let x = random(&[2, c, h, w], &mut rng);
        let kern = random(&[oc, c, k, k], &mut rng);
        let b = random(&[oc], &mut rng);
        let got = conv2d(&x, &kern, &b).unwrap();
        let want = conv_oracle(&x, &kern, &b);
        for (a, e) in got.data().iter().zip(want.data()) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

#[test]
fn conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in [3, 1] {
        let x = random(&[2, 3, 6, 5], &mut rng);
        let kern = random(&[4, 3, k, k], &mut rng);
        let b = random(&[4], &mut rng);
        let wy = random(&[2, 4, 6, 5], &mut rng);
        let (gx, gk, gb) = conv2d_backward(&x, &kern, &wy).unwrap();
        check("conv input", &x, &gx, |v| weighted(&conv2d(v, &kern, &b).unwrap(), &wy));
        check("conv kernel", &kern, &gk, |v| weighted(&conv2d(&x, v, &b).unwrap(), &wy));
        check("conv bias", &b, &gb, |v| weighted(&conv2d(&x, &kern, v).unwrap(), &wy));
    }
}

#[test]
fn transposed_conv_matches_zero_insert_oracle_and_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random(&[2, 4, 3, 4], &mut rng);
    let k = random(&[4, 3, 2, 2], &mut rng);
    let b = random(&[3], &mut rng);
    let got = transposed_conv2(&x, &k, &b).unwrap();
    assert_eq!(got.shape(), &[2, 3, 6, 8]);
    for (a, e) in got.data().iter().zip(tconv_oracle(&x, &k, &b).data()) {
        assert!((a - e).abs() < 1e-12);
    }
    let wy = random(got.shape(), &mut rng);
    let (gx, gk, gb) = transposed_conv2_backward(&x, &k, &wy).unwrap();
    check("tconv input", &x, &gx, |v| weighted(&transposed_conv2(v, &k, &b).unwrap(), &wy));
    check("tconv kernel", &k, &gk, |v| weighted(&transposed_conv2(&x, v, &b).unwrap(), &wy));
    check("tconv bias", &b, &gb, |v| weighted(&transposed_conv2(&x, &k, v).unwrap(), &wy));
}

#[test]
fn relu_gradient_off_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random(&[2, 4, 8, 8], &mut rng).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let wy = random(x.shape(), &mut rng);
    let g = relu_backward(&x, &wy).unwrap();
    check("relu", &x, &g, |v| weighted(&relu(v), &wy));
}

#[test]
fn maxpool_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    // Distinct values keep the argmax stable under the perturbation.
    let mut vals: Vec<f64> = (0..2 * 4 * 8 * 8).map(|i| i as f64 * 0.01).collect();
    for i in (1..vals.len()).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    let x = Tensor::from_vec(&[2, 4, 8, 8], vals).unwrap();
    let (y, arg) = maxpool2(&x).unwrap();
    let wy = random(y.shape(), &mut rng);
    let g = maxpool2_backward(&arg, &wy, x.shape()).unwrap();
    check("maxpool", &x, &g, |v| weighted(&maxpool2(v).unwrap().0, &wy));
}

#[test]
fn batchnorm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = random(&[2, 4, 8, 8], &mut rng).map(|v| 3.0 * v + 1.0);
    let gamma = random(&[4], &mut rng);
    let beta = random(&[4], &mut rng);
    let wy = random(x.shape(), &mut rng);
    let (_, cache) = batchnorm_train(&x, &gamma, &beta).unwrap();
    let (gx, gg, gb) = batchnorm_backward(&cache, &gamma, &wy).unwrap();
    let f = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| weighted(&batchnorm_train(x, g, b).unwrap().0, &wy);
    check("batchnorm input", &x, &gx, |v| f(v, &gamma, &beta));
    check("batchnorm gamma", &gamma, &gg, |v| f(&x, v, &beta));
    check("batchnorm beta", &beta, &gb, |v| f(&x, &gamma, v));
}

#[test]
fn dropout_gradient_with_fixed_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let x = random(&[2, 4, 8, 8], &mut rng);
    let mask = dropout_mask::<f64, _>(x.len(), 0.25, &mut rng).unwrap();
    let wy = random(x.shape(), &mut rng);
    let g = apply_mask(&wy, &mask).unwrap();
    check("dropout", &x, &g, |v| weighted(&apply_mask(v, &mask).unwrap(), &wy));
}

#[test]
fn softmax_cross_entropy_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let logits = random(&[2, 4, 8, 8], &mut rng).map(|v| 3.0 * v);
    let targets: Vec<u8> = (0..2 * 64).map(|_| rng.random_range(0..4)).collect();
    let (_, g, p) = softmax_cross_entropy(&logits, &targets).unwrap();
    check("softmax+ce", &logits, &g, |v| softmax_cross_entropy(v, &targets).unwrap().0);
    for b in 0..2 {
        for i in 0..64 {
            let s: f64 = (0..4).map(|c| p.data()[(b * 4 + c) * 64 + i]).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn whole_model_gradient_without_dropout() {
    let cfg = ModelConfig {
        input_size: 8,
        levels: 2,
        base_channels: 2,
        dropout_rate: 0.0,
        ..Default::default()
    };
    let mut model = build_model::<f64>(&cfg, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    // Zero biases put many pre-activations exactly on the ReLU kink.
    for p in model.params_mut() {
        for v in p.data_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let x = random(&[2, 1, 8, 8], &mut rng);
    let targets: Vec<u8> = (0..128).map(|_| rng.random_range(0..4)).collect();
    let loss_of = |m: &porestack::nn::Model<f64>| {
        let mut m = m.clone();
        let (logits, _) = m.forward_train(&x, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        softmax_cross_entropy(&logits, &targets).unwrap().0
    };
    let mut m = model.clone();
    let (logits, cache) = m.forward_train(&x, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let (_, g, _) = softmax_cross_entropy(&logits, &targets).unwrap();
    let grads = model.backward(&cache, &g).unwrap();
    let analytic: Vec<Tensor<f64>> = grads.params().into_iter().cloned().collect();
    let n_params = model.params().len();
    let mut worst = 0.0f64;
    for p in 0..n_params {
        let len = model.params()[p].len();
        for i in (0..len).step_by((len / 7).max(1)) {
            let bump = |d: f64| {
                let mut m = model.clone();
                m.params_mut()[p].data_mut()[i] += d;
                loss_of(&m)
            };
            let num = (bump(H) - bump(-H)) / (2.0 * H);
            worst = worst.max(rel_err(num, analytic[p].data()[i]));
        }
    }
    assert!(worst <= TOL, "model: worst relative error {worst:e}");
}
