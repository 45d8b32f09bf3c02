use proptest::prelude::*;

use semcont::continuity::{check_explainer_continuity, concordant_fraction, Direction, Mode, SeriesEvaluation, EVALUATION_FORMAT_VERSION};
use semcont::explain::{class_activation, rise_with_masks, MaskSet};
use semcont::image::Image;
use semcont::metrics::{kendall, kendall_exact_p, kendall_normal_p, msd_values, pearson, spearman, wasserstein1_values, CorrelationMethod, DistanceKind};
use semcont::nn::{Architecture, ModelSnapshot};
use semcont::shapegen::{render, ShapeSpec};

fn map(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len)
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..80).prop_flat_map(|n| (map(n), map(n)))
}

fn non_constant(v: &[f64]) -> bool {
    v.iter().any(|&x| x != v[0])
}

fn evaluation(x: Vec<f64>, d: Vec<f64>) -> SeriesEvaluation {
    let n = x.len();
    SeriesEvaluation {
        format_version: EVALUATION_FORMAT_VERSION,
        series_id: "synthetic".into(),
        explainer_id: "rise".into(),
        thetas: x.clone(),
        confidences: x.iter().map(|v| 0.5 + v / 4.0).collect(),
        distances: [(DistanceKind::Msd, d.clone()), (DistanceKind::Wasserstein1, d)].into_iter().collect(),
        confidence_changes: x,
        image_msd: vec![0.0; n],
        empty: vec![false; n],
        window: None,
        seed: None,
        config: serde_json::Value::Null,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distances_are_symmetric_and_vanish_on_the_diagonal((a, b) in pair()) {
        for kind in DistanceKind::ALL {
            let ab = kind.between_values(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - kind.between_values(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert_eq!(kind.between_values(&a, &a).unwrap(), 0.0);
        }
        // W1 between value distributions never exceeds the pointwise mean gap
        let l1 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
        prop_assert!(wasserstein1_values(&a, &b).unwrap() <= l1 + 1e-12);
        prop_assert!(msd_values(&a, &b).unwrap() <= 1.0);
    }

    #[test]
    fn wasserstein_ignores_pixel_order((a, b) in pair(), rot in 0usize..80) {
        let mut shifted = a.clone();
        shifted.rotate_left(rot % a.len());
        prop_assert!((wasserstein1_values(&shifted, &b).unwrap() - wasserstein1_values(&a, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn coefficients_are_bounded((x, y) in pair()) {
        prop_assume!(x.len() >= 3 && non_constant(&x) && non_constant(&y));
        for method in CorrelationMethod::ALL {
            let r = method.compute(&x, &y).unwrap();
            prop_assert!(r.coefficient.abs() <= 1.0 + 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            prop_assert_eq!(r.significant, r.p_value < 0.05);
        }
    }

    #[test]
    fn rank_methods_ignore_monotone_transforms((x, y) in pair()) {
        prop_assume!(x.len() >= 3 && non_constant(&x) && non_constant(&y));
        let warped: Vec<f64> = y.iter().map(|v| (3.0 * v).exp() - 2.0).collect();
        prop_assert!((spearman(&x, &y).unwrap().coefficient - spearman(&x, &warped).unwrap().coefficient).abs() < 1e-12);
        prop_assert!((kendall(&x, &y).unwrap().coefficient - kendall(&x, &warped).unwrap().coefficient).abs() < 1e-12);
        let affine: Vec<f64> = y.iter().map(|v| 2.5 * v - 7.0).collect();
        prop_assert!((pearson(&x, &y).unwrap().coefficient - pearson(&x, &affine).unwrap().coefficient).abs() < 1e-9);
    }

    #[test]
    fn strictly_increasing_pairs_give_unit_tau(steps in prop::collection::vec(0.01f64..1.0, 3..60), gaps in prop::collection::vec(0.001f64..1.0, 60)) {
        let x: Vec<f64> = steps.iter().scan(0.0, |acc, s| { *acc += s; Some(*acc) }).collect();
        let d: Vec<f64> = gaps[..x.len()].iter().scan(0.0, |acc, g| { *acc += g; Some(*acc) }).collect();
        prop_assert_eq!(concordant_fraction(&x, &d), 1.0);
        let v = check_explainer_continuity(&evaluation(x, d), Mode::VariationIndexed, Direction::Increasing).unwrap();
        for kind in DistanceKind::ALL {
            let tau = v.cell(CorrelationMethod::Kendall, kind).unwrap().result.unwrap();
            prop_assert!((tau.coefficient - 1.0).abs() < 1e-12);
            prop_assert_eq!(v.concordant_pairs[&kind], 1.0);
        }
    }

    #[test]
    fn modes_agree_when_axes_coincide(x in map(12), d in map(12)) {
        prop_assume!(non_constant(&x) && non_constant(&d));
        let e = evaluation(x, d);
        let a = check_explainer_continuity(&e, Mode::VariationIndexed, Direction::Increasing).unwrap();
        let b = check_explainer_continuity(&e, Mode::ConfidenceIndexed, Direction::Increasing).unwrap();
        prop_assert_eq!(a.correlations, b.correlations);
        prop_assert_eq!(a.concordant_pairs, b.concordant_pairs);
    }
}

#[test]
fn shuffled_distances_are_mostly_not_significant() {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..40).map(f64::from).collect();
    let trials = 400;
    let mut quiet = 0;
    for _ in 0..trials {
        let mut d = x.clone();
        d.shuffle(&mut rng);
        if !kendall(&x, &d).unwrap().significant {
            quiet += 1;
        }
    }
    assert!(quiet as f64 >= 0.9 * trials as f64, "{quiet}/{trials}");
}

#[test]
fn kendall_normal_tracks_exact_at_eight() {
    // tie-free samples of size 8; S runs over every achievable value
    let x: Vec<f64> = (0..8).map(f64::from).collect();
    for s in (-28i64..=28).step_by(2) {
        let gap = (kendall_exact_p(8, s) - kendall_normal_p(&x, &x, s)).abs();
        let bound = if s.abs() >= 18 { 0.01 } else { 0.11 };
        assert!(gap < bound, "S={s}: {gap}");
    }
}

#[test]
fn rise_is_linear_in_the_model() {
    let image: Image<f64> = render(&ShapeSpec { width: 24, height: 24, circumradius_px: 8.0, center: (12.0, 12.0), ..ShapeSpec::triangle() }).unwrap();
    let masks = MaskSet::<f64>::generate(64, 4, 0.5, 24, 24, 9).unwrap();
    let g = |x: &Image<f64>| x.pixels().iter().take(200).sum::<f64>() / 200.0;
    let h = |x: &Image<f64>| x.pixels().iter().skip(300).map(|p| p * p).sum::<f64>() / 276.0;
    let f = |x: &Image<f64>| 0.3 * g(x) + 0.5 * h(x);
    let rf = rise_with_masks(&f, &image, &masks, 0.5, Some(0.2)).unwrap();
    let rg = rise_with_masks(&g, &image, &masks, 0.5, Some(0.2)).unwrap();
    let rh = rise_with_masks(&h, &image, &masks, 0.5, Some(0.2)).unwrap();
    for i in 0..rf.values().len() {
        assert!((rf.values()[i] - (0.3 * rg.values()[i] + 0.5 * rh.values()[i])).abs() < 1e-12);
    }
}

#[test]
fn gradcam_weights_match_channel_shift_differences() {
    // α_k is the mean of ∂y/∂A^k, i.e. the slope of y under a uniform shift of channel k
    let model = ModelSnapshot::<f64>::init(Architecture::new(64, 64).unwrap(), 21);
    let image: Image<f64> = render(&ShapeSpec { rotation_deg: 11.0, ..ShapeSpec::triangle() }).unwrap();
    let (alphas, _) = class_activation(&model, &image, "conv2").unwrap();
    let act = &model.forward(&image).unwrap().activations["conv2"];
    let plane = act.shape()[1] * act.shape()[2];
    let h = 1e-3;
    for (k, alpha) in alphas.iter().enumerate() {
        let shifted = |t: f64| {
            let mut a = act.clone();
            a.data_mut()[k * plane..(k + 1) * plane].iter_mut().for_each(|v| *v += t);
            model.logit_from_activation("conv2", &a).unwrap()
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h) / plane as f64;
        assert!((alpha - fd).abs() <= 1e-6 * fd.abs().max(1e-6), "channel {k}: {alpha} vs {fd}");
    }
}

