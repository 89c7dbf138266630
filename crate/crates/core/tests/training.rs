use porestack::augment::add_gaussian_noise;
use porestack::masks::{run_pipeline, PipelineSettings};
use porestack::nn::{build_model, predict, train, ModelConfig, OptimizerKind, Sample, TrainConfig};
use porestack::phantom::{render, PhantomSpec};
use porestack::{Class, GrayImage, LabelMap};

fn small_model() -> ModelConfig {
    ModelConfig {
        input_size: 32,
        levels: 2,
        base_channels: 8,
        ..Default::default()
    }
}

fn phantom_sample(seed: u64) -> (GrayImage, Sample) {
    let s = render(&PhantomSpec::for_canvas(64).with_seed(seed)).unwrap();
    let (labels, _, _) = run_pipeline(&s.image, &PipelineSettings::default()).unwrap();
    let sample = Sample::prepare(&s.image, &labels, 32).unwrap();
    (s.image, sample)
}

#[test]
fn small_sgd_steps_do_not_increase_loss() {
    let (_, sample) = phantom_sample(1);
    let cfg = ModelConfig { dropout_rate: 0.0, ..small_model() };
    let tc = TrainConfig {
        optimizer: OptimizerKind::Sgd,
        learning_rate: 1e-4,
        epochs: 3,
        ..Default::default()
    };
    let out = train(build_model(&cfg, 2).unwrap(), &[sample], &tc).unwrap();
    assert!(out.history.windows(2).all(|w| w[1] <= w[0]), "{:?}", out.history);
}

#[test]
fn adam_overfits_single_pair() {
    let (_, sample) = phantom_sample(3);
    let tc = TrainConfig { epochs: 50, ..Default::default() };
    let out = train(build_model(&small_model(), 4).unwrap(), &[sample], &tc).unwrap();
    assert!(out.history[49] < out.history[0]);
    assert_eq!(out.best_epoch.map(|e| out.history[e]), out.history.iter().cloned().reduce(f64::min));
}

#[test]
fn empty_scene_predicts_background() {
    // Per-image z-scoring maps a flat slice to zeros and stretches pure noise
    // to unit variance, so empty slices have to be part of the training set.
    let air = |sigma: f64, seed: u64| add_gaussian_noise(&GrayImage::filled(64, 64, 0.0), 0.0, sigma * sigma, seed).unwrap();
    let empty = LabelMap::filled(64, 64, Class::Background);
    let mut data: Vec<Sample> = (0..6).map(|i| phantom_sample(10 + i).1).collect();
    for (i, sigma) in [0.0, 10.0].into_iter().enumerate() {
        data.push(Sample::prepare(&air(sigma, i as u64), &empty, 32).unwrap());
    }
    let tc = TrainConfig { epochs: 80, batch_size: 4, ..Default::default() };
    let out = train(build_model(&small_model(), 5).unwrap(), &data, &tc).unwrap();
    for (name, blank) in [("flat", air(0.0, 20)), ("noisy", air(10.0, 21))] {
        let pred = predict(&out.best, &blank).unwrap();
        let bg = pred.class_counts()[Class::Background.index()] as f64 / (64.0 * 64.0);
        assert!(bg >= 0.95, "{name}: background fraction {bg}");
    }
    let s = render(&PhantomSpec::for_canvas(64).with_seed(30)).unwrap();
    let pred = predict(&out.best, &s.image).unwrap();
    let hit = pred.as_slice().iter().zip(s.labels.as_slice()).filter(|(a, b)| a == b).count();
    assert!(hit as f64 / 4096.0 > 0.9, "phantom accuracy {}", hit as f64 / 4096.0);
}
