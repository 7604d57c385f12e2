mod common;

use common::{normalized, rel_gap};
use fgl_autodiff::nn::ParamStore;
use fgl_autodiff::{rng, Checkpoint, Tape, Tensor};
use fgl_models::set_transformer::{sab, train, Mab, Pma, SetTransformer, StConfig};
use fgl_models::training::Dropout;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn small(n_classes: usize) -> StConfig {
    StConfig { d_hidden: 16, n_heads: 2, m_inducing: 4, n_classes, dropout_p: 0.0, lr: 1e-3, ..StConfig::default() }
}

fn random_set(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, 9);
    (0..n).map(|_| r.random::<f64>()).collect()
}

#[test]
fn logits_ignore_set_order() {
    let model = SetTransformer::new(small(5), 3).unwrap();
    for case in 0..20u64 {
        let n = 1 + rng::stream(case, 1).random_range(0..200);
        let mut xs = random_set(n, case);
        let base = model.logits(&xs).unwrap();
        for k in 0..4 {
            xs.shuffle(&mut rng::stream(case, 100 + k));
            assert!(rel_gap(&base, &model.logits(&xs).unwrap()) < 1e-9, "case {case}");
        }
    }
}

#[test]
fn self_attention_is_permutation_equivariant() {
    let mut store = ParamStore::new();
    let mab = Mab::new(&mut store, "sab", 8, 2, 0, &mut rng::stream(4, 0));
    let x = Tensor::uniform(&[6, 8], 1.0, &mut rng::stream(5, 0));
    let perm = [3usize, 0, 5, 1, 4, 2];
    let permuted = Tensor::from_rows(&perm.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
    let run = |t: Tensor| {
        let tape = Tape::new();
        let p = store.bind(&tape);
        sab(&mab, &p, tape.constant(t), &Dropout::EVAL).unwrap().value()
    };
    let (a, b) = (run(x), run(permuted));
    for (row, &src) in perm.iter().enumerate() {
        assert!(rel_gap(a.row(src), b.row(row)) < 1e-12);
    }
}

#[test]
fn pooling_ignores_duplicated_sets() {
    let mut store = ParamStore::new();
    let pma = Pma::new(&mut store, "pool", 8, 4, 2, 0, &mut rng::stream(6, 0));
    let z = Tensor::uniform(&[5, 8], 1.0, &mut rng::stream(7, 0));
    let twice = Tensor::from_rows(&(0..10).map(|i| z.row(i % 5).to_vec()).collect::<Vec<_>>()).unwrap();
    let run = |t: Tensor| {
        let tape = Tape::new();
        let p = store.bind(&tape);
        pma.forward(&p, tape.constant(t), &Dropout::EVAL).unwrap().value().into_data()
    };
    assert!(rel_gap(&run(z), &run(twice)) < 1e-12);
}

#[test]
fn large_sets_and_singletons_classify() {
    let model = SetTransformer::new(small(3), 1).unwrap();
    for n in [1, 1000] {
        let p = model.predict_normalized(&random_set(n, n as u64)).unwrap();
        assert_eq!(p.probs.len(), 3);
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

fn two_class_data(per_class: usize, seed: u64) -> fgl_core::dataset::Dataset {
    let mut r = rng::stream(seed, 2);
    let sets = (0..2 * per_class)
        .map(|i| {
            let label = i % 2;
            let centre = if label == 0 { 0.25 } else { 0.75 };
            let n = r.random_range(2..9);
            (label, (0..n).map(|_| centre + 0.1 * (r.random::<f64>() - 0.5)).collect())
        })
        .collect();
    normalized(sets)
}

#[test]
fn separable_toy_problem_is_learned() {
    let cfg = StConfig { epochs: 8, ..small(2) };
    let trained = train(&cfg, &two_class_data(12, 1), &two_class_data(6, 2), 5, None).unwrap();
    let h = &trained.history;
    assert_eq!(h.epochs.len(), 8);
    assert_eq!(h.epochs.iter().filter_map(|e| e.val_accuracy).fold(0.0, f64::max), 100.0);
    let best = h.best_epoch.unwrap();
    assert_eq!(h.epochs[best].val_accuracy, Some(100.0));
    assert!(h.epochs.iter().take(best).all(|e| e.val_accuracy < Some(100.0)));
}

#[test]
fn four_distinct_sets_are_memorized() {
    let d = normalized(vec![(0, vec![0.1, 0.2]), (1, vec![0.4]), (2, vec![0.6, 0.65, 0.7]), (3, vec![0.95])]);
    let cfg = StConfig { epochs: 300, ..small(4) };
    let trained = train(&cfg, &d, &normalized(vec![]), 2, None).unwrap();
    let last = trained.history.epochs.last().unwrap();
    assert!(last.train_loss < 0.01, "final loss {}", last.train_loss);
    assert_eq!(trained.history.best_epoch, Some(299));
}

#[test]
fn zero_epochs_returns_the_initialisation() {
    let cfg = StConfig { epochs: 0, ..small(2) };
    let trained = train(&cfg, &two_class_data(3, 1), &normalized(vec![]), 9, None).unwrap();
    assert!(trained.history.epochs.is_empty());
    let fresh = SetTransformer::new(cfg, 9).unwrap();
    assert_eq!(trained.model.store.tensors(), fresh.store.tensors());
}

#[test]
fn training_is_deterministic_and_checkpoints_replay() {
    let cfg = StConfig { epochs: 2, dropout_p: 0.2, ..small(2) };
    let (tr, va) = (two_class_data(4, 3), two_class_data(2, 4));
    let a = train(&cfg, &tr, &va, 11, None).unwrap();
    let b = train(&cfg, &tr, &va, 11, None).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model.store.tensors(), b.model.store.tensors());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("st.json");
    a.model.checkpoint().unwrap().save(&path).unwrap();
    let back = SetTransformer::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    let xs = [0.3, 0.9, 0.1];
    assert_eq!(back.logits(&xs).unwrap(), a.model.logits(&xs).unwrap());
    assert_eq!(back.predict(&xs).unwrap(), a.model.predict(&xs).unwrap());
}

#[test]
fn augmentation_hook_sees_every_visit() {
    use std::sync::atomic::{AtomicUsize, Ordering};
    let calls = AtomicUsize::new(0);
    let hook = |v: &[f64], _: usize, _: u64| {
        calls.fetch_add(1, Ordering::Relaxed);
        Ok(v.iter().chain(v).copied().collect())
    };
    let cfg = StConfig { epochs: 3, ..small(2) };
    train(&cfg, &two_class_data(5, 1), &normalized(vec![]), 1, Some(&hook)).unwrap();
    assert_eq!(calls.load(Ordering::Relaxed), 30);
}

#[test]
fn unnormalized_or_empty_training_data_is_rejected() {
    let mut raw = two_class_data(2, 1);
    raw.norm = None;
    assert!(train(&small(2), &raw, &normalized(vec![]), 0, None).is_err());
    assert!(train(&small(2), &normalized(vec![(0, vec![])]), &normalized(vec![]), 0, None).is_err());
    assert!(train(&small(2), &normalized(vec![(5, vec![0.1])]), &normalized(vec![]), 0, None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn permuted_sets_share_logits(xs in prop::collection::vec(0.0f64..1.0, 1..40), seed in any::<u64>()) {
        let model = SetTransformer::new(StConfig { d_hidden: 8, m_inducing: 2, ..small(3) }, 0).unwrap();
        let mut ys = xs.clone();
        ys.shuffle(&mut rng::stream(seed, 0));
        prop_assert!(rel_gap(&model.logits(&xs).unwrap(), &model.logits(&ys).unwrap()) < 1e-9);
    }
}
