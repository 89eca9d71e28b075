//! Student/teacher training invariants checked against direct recomputation.

use mtwifi::ap_select::{apply_mask, build_mask};
use mtwifi::mean_teacher::{
    clone_params, consistency_gradient, pretrain, ssl_step, ssl_train, supervised_step, train_supervised, LossBreakdown,
    MetricLog,
};
use mtwifi::models::build_simo;
use mtwifi::nn::{Adam, AdamConfig};
use mtwifi::preprocess::encode;
use mtwifi::synthetic::{generate, SyntheticConfig};
use mtwifi::{EncodedBatch, Error, ModelSpec, Parameters, Rng, SslConfig};

fn fixture(rows: usize, seed: u64) -> (ModelSpec, EncodedBatch) {
    let data = generate(&SyntheticConfig::new(rows, seed)).unwrap();
    let mask = build_mask(&data, None).unwrap();
    let spec = build_simo(mask.len()).unwrap();
    let batch = encode(&apply_mask(&data, &mask).unwrap(), None, spec.coord_convention()).unwrap();
    (spec, batch)
}

fn small_cfg() -> SslConfig {
    SslConfig {
        batch_size: 16,
        max_epochs: 3,
        pretrain_max_epochs: 3,
        ..SslConfig::hybrid()
    }
}

fn adam(spec: &ModelSpec, params: &Parameters) -> Adam {
    Adam::new(params, spec.learning_rates(), AdamConfig::default()).unwrap()
}

#[test]
fn teacher_follows_exact_ema_of_student() {
    let (spec, batch) = fixture(40, 1);
    let theta = spec.init_params(3).unwrap();
    let (mut student, mut teacher) = clone_params(&theta);
    // Perturb the teacher so the EMA has something to mix.
    for (_, t) in teacher.iter_mut() {
        for v in t.values_mut() {
            *v += 0.01;
        }
    }
    let before = teacher.clone();
    let mut opt = adam(&spec, &student);
    let alpha = 0.9;
    ssl_step(&spec, &mut student, &mut teacher, &batch, batch.features.view(), alpha, 6.0, &mut opt, &mut Rng::new(5))
        .unwrap();
    for (name, t) in teacher.iter() {
        let s = student.get(name).unwrap().values();
        let b = before.get(name).unwrap().values();
        for ((&tv, &sv), &bv) in t.values().iter().zip(s).zip(b) {
            assert!((tv - (alpha * bv + (1.0 - alpha) * sv)).abs() <= 1e-15 * (1.0 + tv.abs()), "{name}");
        }
    }
}

#[test]
fn alpha_one_freezes_the_teacher() {
    let (spec, batch) = fixture(40, 2);
    let theta = spec.init_params(4).unwrap();
    let (mut student, mut teacher) = clone_params(&theta);
    let mut opt = adam(&spec, &student);
    let mut rng = Rng::new(1);
    for _ in 0..3 {
        ssl_step(&spec, &mut student, &mut teacher, &batch, batch.features.view(), 1.0, 6.0, &mut opt, &mut rng).unwrap();
    }
    assert!(teacher.bit_eq(&theta));
    assert!(!student.bit_eq(&theta));
}

#[test]
fn total_loss_is_prediction_plus_weighted_consistency() {
    let (spec, batch) = fixture(40, 3);
    let theta = spec.init_params(5).unwrap();
    let (mut student, mut teacher) = clone_params(&theta);
    let mut opt = adam(&spec, &student);
    let wc = 6.0;
    let l = ssl_step(&spec, &mut student, &mut teacher, &batch, batch.features.view(), 0.999, wc, &mut opt, &mut Rng::new(2))
        .unwrap();
    assert_eq!(l.lt, l.ld + wc * l.lc);
    assert_eq!(l, LossBreakdown::new(l.ld, l.lc, wc));
    assert!(l.ld > 0.0 && l.lc >= 0.0);
}

#[test]
fn zero_consistency_weight_reduces_to_a_supervised_step() {
    let (spec, batch) = fixture(40, 4);
    let theta = spec.init_params(6).unwrap();

    let (mut student, mut teacher) = clone_params(&theta);
    let mut opt = adam(&spec, &student);
    ssl_step(&spec, &mut student, &mut teacher, &batch, batch.features.view(), 0.99, 0.0, &mut opt, &mut Rng::new(9)).unwrap();

    let mut plain = theta.clone();
    let mut opt2 = adam(&spec, &plain);
    supervised_step(&spec, &mut plain, batch.features.clone(), batch.targets().unwrap(), &mut opt2, &mut Rng::new(9)).unwrap();

    for (name, t) in student.iter() {
        assert_eq!(t.values(), plain.get(name).unwrap().values(), "{name}");
    }
}

#[test]
fn zero_weight_consistency_gradient_is_zero() {
    let (spec, batch) = fixture(30, 5);
    let theta = spec.init_params(7).unwrap();
    let (lc, grads) = consistency_gradient(&spec, &theta, &theta, batch.features.view(), 0.0, &mut Rng::new(3)).unwrap();
    assert!(lc >= 0.0);
    assert!(grads.iter().all(|(_, t)| t.values().iter().all(|&v| v == 0.0)));
}

#[test]
fn cloned_weights_are_independent() {
    let (spec, _) = fixture(20, 6);
    let theta = spec.init_params(8).unwrap();
    let (mut a, b) = clone_params(&theta);
    a.iter_mut().next().unwrap().1.values_mut()[0] += 1.0;
    assert!(b.bit_eq(&theta));
    assert!(!a.bit_eq(&theta));
}

#[test]
fn pretrain_without_epochs_returns_initial_weights() {
    let (spec, batch) = fixture(40, 7);
    let theta = spec.init_params(9).unwrap();
    let cfg = SslConfig { pretrain_max_epochs: 0, ..small_cfg() };
    assert!(pretrain(&spec, theta.clone(), &batch, &cfg).unwrap().bit_eq(&theta));
}

#[test]
fn supervised_training_reduces_loss_on_a_single_batch() {
    let (spec, batch) = fixture(32, 8);
    let theta = spec.init_params(10).unwrap();
    let cfg = SslConfig { batch_size: 32, ..small_cfg() };
    let mut log = MetricLog::default();
    let out = train_supervised(&spec, theta, &batch, None, &cfg, 30, &mut log).unwrap();
    assert_eq!(out.epochs_run, log.rows.len());
    let first = log.rows.first().unwrap().ld;
    let last = log.rows.last().unwrap().ld;
    assert!(last < first, "loss went from {first} to {last}");
    assert!(log.rows.iter().all(|r| r.gamma_dev.is_nan()));
}

#[test]
fn non_finite_weights_report_divergence() {
    let (spec, batch) = fixture(32, 9);
    let mut theta = spec.init_params(11).unwrap();
    for (_, t) in theta.iter_mut() {
        t.values_mut()[0] = f64::NAN;
    }
    let mut log = MetricLog::default();
    let err = train_supervised(&spec, theta, &batch, None, &small_cfg(), 2, &mut log).unwrap_err();
    assert!(matches!(err, Error::Divergence { epoch: 1 }), "{err:?}");
}

#[test]
fn frozen_teacher_without_consistency_stays_at_pretrained_weights() {
    let (spec, batch) = fixture(40, 10);
    let theta = spec.init_params(12).unwrap();
    let cfg = SslConfig { alpha: 1.0, wc: 0.0, ..small_cfg() };
    let mut log = MetricLog::default();
    let out = ssl_train(&spec, &theta, &batch, batch.features.view(), Some(&batch), &cfg, &mut log).unwrap();
    assert!(out.teacher.bit_eq(&theta));
    assert!(out.final_teacher.bit_eq(&theta));
    assert!(!out.final_student.bit_eq(&theta));
    assert_eq!(log.rows.len(), out.epochs_run);
    assert!(log.rows.iter().all(|r| r.lc == 0.0 || r.lt == r.ld));
}

#[test]
fn ssl_training_is_deterministic_per_seed() {
    let (spec, batch) = fixture(40, 11);
    let theta = spec.init_params(13).unwrap();
    let cfg = SslConfig { max_epochs: 2, ..small_cfg() };
    let run = || {
        let mut log = MetricLog::default();
        let out = ssl_train(&spec, &theta, &batch, batch.features.view(), None, &cfg, &mut log).unwrap();
        (out, log.to_csv())
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert!(a.teacher.bit_eq(&b.teacher));
    assert_eq!(la, lb);
}

#[test]
fn ssl_rejects_mismatched_unlabeled_width() {
    let (spec, batch) = fixture(20, 12);
    let theta = spec.init_params(1).unwrap();
    let narrow = batch.features.slice(ndarray::s![.., ..3]).to_owned();
    let mut log = MetricLog::default();
    assert!(ssl_train(&spec, &theta, &batch, narrow.view(), None, &small_cfg(), &mut log).is_err());
}
