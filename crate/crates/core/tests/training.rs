use dwic_core::data::{PatientVolume, SliceSet};
use dwic_core::eval::auc;
use dwic_core::nn::ops::{bce_loss, softmax_bce_logit_grad};
use dwic_core::nn::{Checkpoint, Mode, Model, ModelSpec};
use dwic_core::rng::{rng_for, SeededRng, Stream};
use dwic_core::train::{plateau_lr, predict, sgd_step, train, PlateauConfig, SgdConfig, TrainConfig};
use dwic_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

/// Toy network on 18x18 inputs: 18 -> 6 (stem) -> 2 (pool) -> 1 (stage 2).
fn small_spec() -> ModelSpec {
    let mut s = ModelSpec::toy();
    s.in_size = 18;
    s.avg_pool = 1;
    s.dropout = 0.0;
    s
}

/// Patients whose positive slices carry a bright 6x6 square in every channel.
fn separable_set(n_patients: usize, seed: u64) -> SliceSet {
    let mut r = SeededRng::seed_from_u64(seed);
    let vols: Vec<PatientVolume> = (0..n_patients)
        .map(|p| {
            let label = (p % 2) as u8;
            let slices = 6;
            let slice_labels: Vec<u8> = (0..slices).map(|s| u8::from(label == 1 && s % 2 == 0)).collect();
            let mut data = Vec::with_capacity(slices * 6 * 18 * 18);
            for &l in &slice_labels {
                for _c in 0..6 {
                    for y in 0..18 {
                        for x in 0..18 {
                            let mut v: f32 = 0.5 * r.sample::<f32, _>(StandardNormal);
                            if l == 1 && (6..12).contains(&y) && (6..12).contains(&x) {
                                v += 1.5;
                            }
                            data.push(v);
                        }
                    }
                }
            }
            let t = Tensor::new(vec![slices, 6, 18, 18], data).unwrap();
            PatientVolume::new(format!("s{seed}_{p}"), t, slice_labels, label).unwrap()
        })
        .collect();
    SliceSet::from_volumes(vols.iter()).unwrap()
}

fn quick_cfg(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        lr0: 0.01,
        max_epochs: epochs,
        seed,
        ..Default::default()
    }
}

#[test]
fn separable_toy_set_is_learned() {
    let tr = separable_set(16, 1);
    let va = separable_set(6, 2);
    let out = train(&small_spec(), &tr, &va, &quick_cfg(50, 3)).unwrap();
    let mut model = out.checkpoint.to_model().unwrap();
    let p = predict(&mut model, &tr).unwrap();
    let correct = p
        .iter()
        .zip(&tr.labels)
        .filter(|(&p, &l)| (p >= 0.5) == (l == 1))
        .count();
    let acc = correct as f64 / tr.len() as f64;
    assert!(acc >= 0.95, "train accuracy {acc}");
}

#[test]
fn stored_predictions_reproduce_logged_auc() {
    let tr = separable_set(10, 4);
    let va = separable_set(6, 5);
    let out = train(&small_spec(), &tr, &va, &quick_cfg(6, 0)).unwrap();
    let logged = out.metrics[out.best_epoch - 1].val_auc.unwrap();
    let p = predict(&mut out.checkpoint.to_model().unwrap(), &va).unwrap();
    assert_eq!(auc(&p, &va.labels).unwrap(), logged);
    assert_eq!(out.metrics.len(), 6);
}

#[test]
fn zero_epochs_returns_initial_weights() {
    let spec = small_spec();
    let tr = separable_set(4, 6);
    let va = separable_set(4, 7);
    let out = train(&spec, &tr, &va, &quick_cfg(0, 9)).unwrap();
    let mut init = Model::<f32>::new(&spec, &mut rng_for(9, Stream::Init, 0)).unwrap();
    assert_eq!(out.checkpoint.digest(), Checkpoint::from_model(&mut init).digest());
    assert!(out.metrics.is_empty());
}

#[test]
fn same_seed_same_checkpoint_different_seed_different() {
    let tr = separable_set(6, 8);
    let va = separable_set(4, 9);
    let spec = small_spec();
    let a = train(&spec, &tr, &va, &quick_cfg(3, 1)).unwrap();
    let b = train(&spec, &tr, &va, &quick_cfg(3, 1)).unwrap();
    let c = train(&spec, &tr, &va, &quick_cfg(3, 2)).unwrap();
    assert_eq!(a.checkpoint.digest(), b.checkpoint.digest());
    assert_eq!(a.metrics, b.metrics);
    assert_ne!(a.checkpoint.digest(), c.checkpoint.digest());
}

#[test]
fn overlapping_patients_are_rejected() {
    let tr = separable_set(4, 10);
    assert!(train(&small_spec(), &tr, &tr, &quick_cfg(1, 0)).is_err());
}

#[test]
fn fixed_batch_loss_decreases_for_small_lr() {
    let spec = small_spec();
    let set = separable_set(4, 11);
    let idx: Vec<usize> = (0..8).collect();
    let x = set.batch(&idx).cast::<f64>();
    let y = set.batch_labels(&idx);
    let mut model = Model::<f64>::new(&spec, &mut rng_for(0, Stream::Init, 0)).unwrap();
    let mut velocity: Vec<Vec<f64>> = Vec::new();
    model.for_each_param(|_, p| velocity.push(vec![0.0; p.value.len()]));
    let mut rng = rng_for(0, Stream::Dropout, 0);
    let mut losses = Vec::new();
    for _ in 0..8 {
        let probs = model.forward(&x, Mode::Train, &mut rng).unwrap();
        losses.push(bce_loss(&probs, &y, None).unwrap().0);
        model.zero_grad();
        model
            .backward_from_logits(&softmax_bce_logit_grad(&probs, &y, None).unwrap())
            .unwrap();
        let mut k = 0;
        model.for_each_param(|_, p| {
            let g = p.grad.data().to_vec();
            sgd_step(p.value.data_mut(), &g, &mut velocity[k], 1e-3, SgdConfig { momentum: 0.0, weight_decay: 0.0 })
                .unwrap();
            k += 1;
        });
    }
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "losses {losses:?}");
    }
}

#[test]
fn weight_decay_alone_follows_closed_form() {
    let w0 = [1.5f64, -0.25, 3.0];
    let (lr, wd) = (0.1, 0.01);
    let mut w = w0;
    let mut v = [0.0; 3];
    for _ in 0..50 {
        sgd_step(&mut w, &[0.0; 3], &mut v, lr, SgdConfig { momentum: 0.0, weight_decay: wd }).unwrap();
    }
    for (a, b) in w.iter().zip(w0) {
        assert!((a - b * (1.0 - lr * wd).powi(50)).abs() < 1e-6);
    }
    // With momentum the scalar recurrence is v' = m v - lr wd w, w' = w + v'.
    let (m, n) = (0.9, 40);
    let mut w = w0;
    let mut v = [0.0; 3];
    for _ in 0..n {
        sgd_step(&mut w, &[0.0; 3], &mut v, lr, SgdConfig { momentum: m, weight_decay: wd }).unwrap();
    }
    let (mut ws, mut vs) = (w0[0], 0.0);
    for _ in 0..n {
        vs = m * vs - lr * wd * ws;
        ws += vs;
    }
    assert!((w[0] - ws).abs() < 1e-12);
    assert!(w[0].abs() < w0[0].abs());
}

#[test]
fn plateau_examples() {
    let cfg = PlateauConfig::default();
    let decreasing: Vec<f64> = (0..30).map(|i| 1.0 - i as f64 * 0.01).collect();
    assert_eq!(plateau_lr(&decreasing, 0.001, cfg), 0.001);
    let flat = vec![1.0; 12];
    assert!((plateau_lr(&flat, 0.001, cfg) - 1e-4).abs() < 1e-18);
    let two = vec![1.0; 23];
    assert!((plateau_lr(&two, 0.001, cfg) - 1e-5).abs() < 1e-18);
}
