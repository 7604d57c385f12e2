use fgl_autodiff::rng;
use fgl_models::gmm::{fit_gmm_1d, gmm_features, set_features, K_MAX, VARIANCE_FLOOR};
use fgl_models::mlp::{train_mlp, train_mlp_with, MlpClassifier, MlpConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn recovers_two_separated_point_masses() {
    for n in [1usize, 5, 50] {
        let mut xs: Vec<f64> = std::iter::repeat_n(-5.0, n).chain(std::iter::repeat_n(5.0, n)).collect();
        xs.shuffle(&mut rng::stream(n as u64, 0));
        for seed in 0..5 {
            let p = fit_gmm_1d(&xs, 2, seed, 1e-6, 200).unwrap();
            assert!((p.means[0] + 5.0).abs() < 0.01 && (p.means[1] - 5.0).abs() < 0.01, "{p:?}");
            assert!(p.weights.iter().all(|w| (w - 0.5).abs() < 0.01));
            assert!(p.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0)));
        }
    }
}

#[test]
fn recovers_noisy_mixture_and_likelihood_never_drops() {
    let mut r = rng::stream(3, 0);
    let normal = rand_distr::Normal::new(0.0, 0.5).unwrap();
    let xs: Vec<f64> = (0..2000).map(|i| if i % 2 == 0 { -5.0 } else { 5.0 } + r.sample(normal)).collect();
    for k in 2..=K_MAX {
        let p = fit_gmm_1d(&xs, k, 7, 1e-8, 500).unwrap();
        assert!(p.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()), "k {k}");
        assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.variances.iter().all(|v| *v >= VARIANCE_FLOOR));
        assert!(p.means.windows(2).all(|w| w[0] <= w[1]));
        if k == 2 {
            assert!((p.means[0] + 5.0).abs() < 0.05 && (p.means[1] - 5.0).abs() < 0.05, "{:?}", p.means);
        }
    }
}

#[test]
fn feature_layout_pads_to_five_components() {
    let p = fit_gmm_1d(&[0.1, 0.12, 0.8, 0.82, 0.81], 2, 0, 1e-6, 200).unwrap();
    let f = gmm_features(&p, K_MAX);
    assert_eq!(f.len(), 15);
    assert!(f[6..].iter().all(|v| *v == 0.0));
    assert_eq!(f[..6], [p.weights[0], p.means[0], p.variances[0], p.weights[1], p.means[1], p.variances[1]]);
    let c = set_features(&[0.4; 10], 3, 1).unwrap();
    assert!([c[1], c[4], c[7]].iter().all(|m| (m - 0.4).abs() < 1e-12));
}

fn blobs(per_class: usize, seed: u64) -> Vec<(Vec<f64>, usize)> {
    let mut r = rng::stream(seed, 0);
    (0..2 * per_class)
        .map(|i| {
            let y = i % 2;
            let side = if y == 0 { -1.0 } else { 1.0 };
            ((0..4).map(|_| side * r.random_range(0.2..1.0)).collect(), y)
        })
        .collect()
}

fn small_mlp() -> MlpConfig {
    MlpConfig { n_classes: 2, width: 16, n_hidden_layers: 1, epochs: 10, dropout: 0.1, ..MlpConfig::default() }
}

#[test]
fn separable_features_reach_full_accuracy() {
    let (model, h) = train_mlp(&small_mlp(), &blobs(20, 1), &blobs(10, 2), 4).unwrap();
    assert_eq!(h.epochs[h.best_epoch.unwrap()].val_accuracy, Some(100.0));
    assert!(blobs(10, 2).iter().all(|(x, y)| model.predict(x).unwrap().region == *y));
}

#[test]
fn mlp_training_is_deterministic_and_replays() {
    let (a, ha) = train_mlp(&small_mlp(), &blobs(5, 1), &blobs(3, 2), 4).unwrap();
    let (b, hb) = train_mlp(&small_mlp(), &blobs(5, 1), &blobs(3, 2), 4).unwrap();
    assert_eq!(ha, hb);
    let back = MlpClassifier::from_checkpoint(&a.checkpoint().unwrap()).unwrap();
    let x = [0.3, -0.2, 0.5, 0.1];
    assert_eq!(back.logits(&x).unwrap(), a.logits(&x).unwrap());
    assert_eq!(b.logits(&x).unwrap(), a.logits(&x).unwrap());
}

#[test]
fn mlp_rejects_bad_inputs() {
    let cfg = small_mlp();
    assert!(train_mlp(&cfg, &[(vec![0.1], 2)], &[], 0).is_err());
    assert!(train_mlp(&cfg, &[(vec![0.1], 0), (vec![0.1, 0.2], 1)], &[], 0).is_err());
    assert!(train_mlp(&MlpConfig { dropout: 1.0, ..cfg }, &blobs(1, 0), &[], 0).is_err());
}

#[test]
fn recomputed_features_are_requested_every_visit() {
    use std::cell::Cell;
    let seen = Cell::new(0);
    let labels = [0usize, 1, 0];
    let f = |i: usize, _: u64| {
        seen.set(seen.get() + 1);
        Ok(vec![labels[i] as f64; 3])
    };
    train_mlp_with(&MlpConfig { epochs: 4, ..small_mlp() }, 3, &labels, &f, &[], 0).unwrap();
    assert_eq!(seen.get(), 12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn features_ignore_value_order(xs in prop::collection::vec(0.0f64..1.0, 1..40), k in 2usize..=5, seed in any::<u64>()) {
        let mut ys = xs.clone();
        ys.shuffle(&mut rng::stream(seed, 1));
        prop_assert_eq!(set_features(&xs, k, 3).unwrap(), set_features(&ys, k, 3).unwrap());
    }

    #[test]
    fn fitted_mixtures_are_valid(xs in prop::collection::vec(-3.0f64..3.0, 5..60), k in 2usize..=5, seed in 0u64..100) {
        let p = fit_gmm_1d(&xs, k, seed, 1e-6, 200).unwrap();
        prop_assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.variances.iter().all(|v| *v >= VARIANCE_FLOOR));
        prop_assert!(p.means.windows(2).all(|w| w[0] <= w[1]));
    }
}
