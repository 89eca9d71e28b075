//! Central-difference gradient checks for every layer kind, activation, loss
//! and for both full models.

use mtwifi::models::{build_cnnloc, build_simo, ModelSpec};
use mtwifi::nn::{loss, Activation, LayerSpec, LossKind, Parameters, Sequential};
use mtwifi::preprocess::encode_labels;
use mtwifi::{LocationLabel, Rng};
use ndarray::Array2;

const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;
/// Denominator floor so gradients that are zero up to roundoff compare absolutely.
const FLOOR: f64 = 1e-6;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn random(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Array2<f64> {
    let mut rng = Rng::new(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.uniform_range(lo, hi))
}

/// Projection objective `sum(net(x) ⊙ r)` with a fixed dropout stream.
fn objective(net: &Sequential, params: &Parameters, x: &Array2<f64>, r: &Array2<f64>, seed: u64) -> f64 {
    let (y, _) = net.forward_train(params, x.clone(), &mut Rng::new(seed)).unwrap();
    (&y * r).sum()
}

fn check_sequential(net: &Sequential, input_width: usize, batch: usize, seed: u64) {
    let mut params = Parameters::new();
    net.init(&mut params, &mut Rng::new(seed)).unwrap();
    // Non-zero biases exercise the bias path.
    for (name, t) in params.iter_mut() {
        if name.ends_with(".bias") {
            let mut rng = Rng::new(seed + 9);
            for v in t.values_mut() {
                *v = rng.uniform_range(-0.3, 0.3);
            }
        }
    }
    let x = random(batch, input_width, -1.0, 1.0, seed + 1);
    let out_width = net.output_width(input_width).unwrap();
    let r = random(batch, out_width, -1.0, 1.0, seed + 2);
    let dropout_seed = seed + 3;

    let (_, cache) = net.forward_train(&params, x.clone(), &mut Rng::new(dropout_seed)).unwrap();
    let mut grads = params.zeros_like();
    let dx = net.backward(&params, &cache, r.clone(), &mut grads).unwrap();

    let mut worst: f64 = 0.0;
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    for name in &names {
        for k in 0..params.get(name).unwrap().len() {
            let mut p = params.clone();
            p.get_mut(name).unwrap().values_mut()[k] += STEP;
            let up = objective(net, &p, &x, &r, dropout_seed);
            p.get_mut(name).unwrap().values_mut()[k] -= 2.0 * STEP;
            let down = objective(net, &p, &x, &r, dropout_seed);
            let numeric = (up - down) / (2.0 * STEP);
            let analytic = grads.get(name).unwrap().values()[k];
            let e = rel_err(analytic, numeric);
            assert!(e < TOLERANCE, "{name}[{k}]: analytic {analytic}, numeric {numeric}, rel {e}");
            worst = worst.max(e);
        }
    }
    for idx in 0..x.len() {
        let (i, j) = (idx / input_width, idx % input_width);
        let mut xp = x.clone();
        xp[[i, j]] += STEP;
        let up = objective(net, &params, &xp, &r, dropout_seed);
        xp[[i, j]] -= 2.0 * STEP;
        let down = objective(net, &params, &xp, &r, dropout_seed);
        let numeric = (up - down) / (2.0 * STEP);
        let e = rel_err(dx[[i, j]], numeric);
        assert!(e < TOLERANCE, "input[{i},{j}]: analytic {}, numeric {numeric}, rel {e}", dx[[i, j]]);
        worst = worst.max(e);
    }
    assert!(worst < TOLERANCE);
}

#[test]
fn dense_layer() {
    check_sequential(&Sequential::new("d", vec![LayerSpec::dense(5, 4)]), 5, 3, 1);
}

#[test]
fn conv1d_single_channel_input() {
    check_sequential(&Sequential::new("c", vec![LayerSpec::conv1d(1, 3, 4)]), 9, 2, 2);
}

#[test]
fn conv1d_multi_channel_stack() {
    let net = Sequential::new(
        "c",
        vec![
            LayerSpec::conv1d(1, 4, 3),
            LayerSpec::act(Activation::Elu),
            LayerSpec::conv1d(4, 3, 2),
            LayerSpec::Flatten,
            LayerSpec::dense(3 * 5, 2),
        ],
    );
    check_sequential(&net, 8, 2, 3);
}

#[test]
fn every_activation() {
    for (i, f) in [
        Activation::Elu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Softmax,
        Activation::Linear,
    ]
    .into_iter()
    .enumerate()
    {
        let net = Sequential::new("a", vec![LayerSpec::dense(4, 5), LayerSpec::act(f)]);
        check_sequential(&net, 4, 3, 10 + i as u64);
    }
}

#[test]
fn dropout_with_fixed_mask() {
    let net = Sequential::new(
        "p",
        vec![LayerSpec::Dropout { rate: 0.5 }, LayerSpec::dense(6, 3), LayerSpec::act(Activation::Tanh)],
    );
    check_sequential(&net, 6, 4, 20);
}

fn check_loss(kind: LossKind, pred: Array2<f64>, target: Array2<f64>) {
    let (_, grad) = loss(kind, pred.view(), target.view()).unwrap();
    for idx in 0..pred.len() {
        let (i, j) = (idx / pred.ncols(), idx % pred.ncols());
        let mut p = pred.clone();
        p[[i, j]] += STEP;
        let up = loss(kind, p.view(), target.view()).unwrap().0;
        p[[i, j]] -= 2.0 * STEP;
        let down = loss(kind, p.view(), target.view()).unwrap().0;
        let numeric = (up - down) / (2.0 * STEP);
        let e = rel_err(grad[[i, j]], numeric);
        assert!(e < TOLERANCE, "{kind:?}[{i},{j}]: analytic {}, numeric {numeric}, rel {e}", grad[[i, j]]);
    }
}

#[test]
fn mse_loss() {
    check_loss(LossKind::Mse, random(4, 3, -1.0, 1.0, 30), random(4, 3, -1.0, 1.0, 31));
}

#[test]
fn bce_loss() {
    check_loss(LossKind::Bce, random(4, 3, 0.05, 0.95, 32), random(4, 3, 0.0, 1.0, 33));
}

#[test]
fn cross_entropy_loss() {
    let mut target = random(4, 3, 0.0, 1.0, 35);
    for mut row in target.outer_iter_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    check_loss(LossKind::CrossEntropy, random(4, 3, 0.05, 0.95, 34), target);
}

/// Full-model objective: prediction loss plus weighted consistency loss
/// against fixed teacher outputs.
fn model_objective(spec: &ModelSpec, params: &Parameters, x: &Array2<f64>, targets: &mtwifi::preprocess::LabelTargets, teacher: &mtwifi::models::HeadOutputs, seed: u64) -> f64 {
    let (out, _) = spec.forward_train(params, x.clone(), &mut Rng::new(seed)).unwrap();
    let (ld, _) = spec.prediction_loss(&out, targets).unwrap();
    let (lc, _) = spec.consistency_loss(&out, teacher, 3.0).unwrap();
    ld + 3.0 * lc
}

fn check_model(spec: &ModelSpec, samples: usize, seed: u64) {
    let params = spec.init_params(seed).unwrap();
    let x = random(3, spec.input_width, 0.0, 1.0, seed + 1);
    let labels = [
        LocationLabel { longitude: -7600.0, latitude: 4864900.0, floor: 1, building: 0 },
        LocationLabel { longitude: -7400.0, latitude: 4864800.0, floor: 4, building: 2 },
        LocationLabel { longitude: -7500.0, latitude: 4864950.0, floor: 0, building: 1 },
    ];
    let (targets, _) = encode_labels(&labels, None, spec.coord_convention()).unwrap();
    let teacher_params = spec.init_params(seed + 50).unwrap();
    let teacher = spec.predict(&teacher_params, x.clone()).unwrap();
    let dropout_seed = seed + 2;

    let (out, cache) = spec.forward_train(&params, x.clone(), &mut Rng::new(dropout_seed)).unwrap();
    let (_, mut head_grads) = spec.prediction_loss(&out, &targets).unwrap();
    let (_, cons) = spec.consistency_loss(&out, &teacher, 3.0).unwrap();
    for (g, c) in head_grads.iter_mut().zip(cons) {
        if let (Some(g), Some(c)) = (g.as_mut(), c) {
            *g += &c;
        }
    }
    let grads = spec.backward(&params, &cache, head_grads).unwrap();

    let names: Vec<String> = params.names().map(str::to_owned).collect();
    let mut rng = Rng::new(seed + 3);
    for s in 0..samples {
        // Cycle through tensors so every one is probed.
        let name = &names[s % names.len()];
        let k = (rng.next_u64() % params.get(name).unwrap().len() as u64) as usize;
        let mut p = params.clone();
        p.get_mut(name).unwrap().values_mut()[k] += STEP;
        let up = model_objective(spec, &p, &x, &targets, &teacher, dropout_seed);
        p.get_mut(name).unwrap().values_mut()[k] -= 2.0 * STEP;
        let down = model_objective(spec, &p, &x, &targets, &teacher, dropout_seed);
        let numeric = (up - down) / (2.0 * STEP);
        let analytic = grads.get(name).unwrap().values()[k];
        let e = rel_err(analytic, numeric);
        assert!(e < TOLERANCE, "{:?} {name}[{k}]: analytic {analytic}, numeric {numeric}, rel {e}", spec.name);
    }
}

#[test]
fn simo_dnn_end_to_end() {
    let spec = build_simo(12).unwrap();
    check_model(&spec, 120, 40);
}

#[test]
fn cnnloc_end_to_end() {
    // Smallest input whose encoder output clears the conv stack.
    let spec = build_cnnloc(268).unwrap();
    check_model(&spec, 60, 41);
}
