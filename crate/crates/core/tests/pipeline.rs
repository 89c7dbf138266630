use porestack::augment::{apply_geometric, AugmentSpec};
use porestack::connectivity::{label_components, Connectivity};
use porestack::image::resize_nearest_labels;
use porestack::masks::{extract_core, extract_pores, generate_training_masks, remove_background, run_pipeline, PipelineSettings};
use porestack::metrics::percent_porosity;
use porestack::phantom::{render, render_stack, PhantomSpec, Ramp};
use porestack::threshold::{binarize, otsu_threshold, Histogram256};
use porestack::{BinaryMask, Class, GrayImage, ImageStack};

/// Solid material: everything the dark background and pores are not.
fn solid(s: &porestack::phantom::PhantomSlice) -> BinaryMask {
    s.labels.mask_of(Class::Crust)
}

#[test]
fn background_removal_recovers_footprint() {
    for t in [0.0, 0.5, 1.0] {
        let s = render(&PhantomSpec::default().with_seed(3).with_time(t)).unwrap();
        let (sample, bg) = remove_background(&s.image).unwrap();
        assert!(bg.iou(&porestack::image::invert(&solid(&s))).unwrap() >= 0.98);
        for (i, &v) in sample.data().iter().enumerate() {
            if bg.bits()[i] {
                assert_eq!(v, 0.0);
            }
        }
    }
}

#[test]
fn full_otsu_separates_sample_up_to_sigma_15() {
    for sigma in [0.0, 5.0, 10.0, 15.0] {
        let s = render(&PhantomSpec::default().with_seed(4).with_noise(sigma)).unwrap();
        let t = otsu_threshold(&Histogram256::from_image(&s.image)).unwrap();
        let iou = binarize(&s.image, t).iou(&solid(&s)).unwrap();
        assert!(iou >= 0.98, "sigma {sigma}: {iou}");
    }
}

#[test]
fn core_found_including_tiny_residual() {
    let settings = PipelineSettings::default();
    let s = render(&PhantomSpec::default().with_seed(5)).unwrap();
    let (sample, _) = remove_background(&s.image).unwrap();
    let core = extract_core(&sample, &settings).unwrap();
    assert!(core.iou(&s.core).unwrap() >= 0.95);

    let mut spec = PhantomSpec::default().with_seed(6).with_time(1.0);
    spec.core_radius = 3.0;
    let s = render(&spec).unwrap();
    let (sample, _) = remove_background(&s.image).unwrap();
    let core = extract_core(&sample, &settings).unwrap();
    assert_eq!(label_components(&core, Connectivity::Eight).num_components(), 1);
    assert!(core.intersection(&s.core).unwrap().count() > 0);
}

#[test]
fn pores_recovered_and_absent_pore_ii_handled() {
    let settings = PipelineSettings::default();
    let s = render(&PhantomSpec::default().with_seed(7).with_time(0.3)).unwrap();
    let (labels, inter, _) = run_pipeline(&s.image, &settings).unwrap();
    assert!(inter.pore1_mask.iou(&s.labels.mask_of(Class::PoreI)).unwrap() >= 0.90);
    assert!(inter.pore2_mask.iou(&s.labels.mask_of(Class::PoreII)).unwrap() >= 0.90);
    for c in Class::ALL {
        assert!(labels.mask_of(c).iou(&s.labels.mask_of(c)).unwrap() >= 0.90, "{c:?}");
    }

    let mut spec = PhantomSpec::default().with_seed(8);
    spec.pore2.extent_deg = Ramp::fixed(0.0);
    let s = render(&spec).unwrap();
    let (sample, _) = remove_background(&s.image).unwrap();
    let core = extract_core(&sample, &settings).unwrap();
    let pores = extract_pores(&sample, &core, &settings).unwrap();
    assert!(pores.pore2.is_empty());
    assert!(pores.pore1.iou(&s.labels.mask_of(Class::PoreI)).unwrap() >= 0.90);
}

#[test]
fn stack_masks_and_porosity_match_ground_truth() {
    let stacks = render_stack(&PhantomSpec::default().with_seed(9), 16, &[0.0, 0.5, 1.0]).unwrap();
    let mut truth_pore2 = Vec::new();
    for stack in &stacks {
        let outcomes = generate_training_masks(&stack.images, &PipelineSettings::default());
        assert_eq!(outcomes.len(), 16);
        let labels: Vec<_> = outcomes.iter().map(|o| o.labels().expect("accepted").clone()).collect();
        let por = percent_porosity(&labels).unwrap();
        let (a1, a2) = stack.analytic_porosity();
        assert!((por.percent(Class::PoreI) - a1).abs() <= 0.5);
        assert!((por.percent(Class::PoreII) - a2).abs() <= 0.5);
        truth_pore2.push(percent_porosity(&stack.labels).unwrap().percent(Class::PoreII));
    }
    assert!(truth_pore2.windows(2).all(|w| w[1] < w[0]), "{truth_pore2:?}");
}

#[test]
fn blank_slice_is_rejected_not_dropped() {
    let good = render(&PhantomSpec::default().with_seed(10)).unwrap().image;
    let stack = ImageStack::new("mixed", vec![good.clone(), GrayImage::filled(128, 128, 40.0), good]).unwrap();
    let out = generate_training_masks(&stack, &PipelineSettings::default());
    let accepted = out.iter().filter(|o| o.labels().is_some()).count();
    assert_eq!((accepted, out.len() - accepted), (2, 1));
    assert!(out[1].labels().is_none());
}

#[test]
fn labels_resize_and_rotate_without_losing_classes() {
    let s = render(&PhantomSpec::for_canvas(256).with_seed(11)).unwrap();
    let small = resize_nearest_labels(&s.labels, 128, 128).unwrap();
    assert!(small.class_counts().iter().all(|&c| c > 0));

    let s = render(&PhantomSpec::default().with_seed(12)).unwrap();
    let spec = AugmentSpec { rotation: 90.0, ..Default::default() };
    let (_, turned) = apply_geometric(&s.image, &s.labels, &spec).unwrap();
    assert_eq!(turned.class_counts(), s.labels.class_counts());
}
