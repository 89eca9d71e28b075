//! Supervised pre-training and Mean Teacher semi-supervised training.
//!
//! Pre-training fits the model on labeled data alone. The result is cloned into
//! a student and a teacher; each SSL step then updates the student with Adam on
//! `L_t = L_d + w_c · L_c`, where `L_d` is the supervised loss on a labeled
//! batch and `L_c` compares student and teacher outputs on an unlabeled batch,
//! and finally moves the teacher to `α · teacher + (1 − α) · student`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::argmax;
use crate::models::{HeadTarget, ModelSpec};
use crate::nn::{Adam, AdamConfig, EarlyStopping, Parameters, PlateauScheduler};
use crate::preprocess::{EncodedBatch, LabelTargets};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SslConfig {
    /// EMA smoothing factor, in (0, 1].
    pub alpha: f64,
    /// Consistency weight `w_c`.
    pub wc: f64,
    pub batch_size: usize,
    pub scheduler_patience: usize,
    pub scheduler_factor: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub pretrain_max_epochs: usize,
    /// Share of labeled data held out for early stopping and `gamma_dev`.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl SslConfig {
    /// Hybrid-database settings: α = 0.999, w_c = 6, scheduler patience 6.
    pub fn hybrid() -> Self {
        Self {
            alpha: 0.999,
            wc: 6.0,
            batch_size: 32,
            scheduler_patience: 6,
            scheduler_factor: 0.75,
            early_stop_patience: 12,
            max_epochs: 50,
            pretrain_max_epochs: 100,
            holdout_fraction: 0.1,
            seed: 42,
        }
    }

    /// Online-learning settings: α = 0.9, w_c = 10, scheduler patience 10.
    pub fn online() -> Self {
        Self {
            alpha: 0.9,
            wc: 10.0,
            scheduler_patience: 10,
            ..Self::hybrid()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if self.wc < 0.0 || !self.wc.is_finite() {
            return Err(Error::Config(format!("wc must be >= 0, got {}", self.wc)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for SslConfig {
    fn default() -> Self {
        Self::hybrid()
    }
}

/// Number of EMA steps after which the teacher's memory of a weight halves.
pub fn ema_half_life(alpha: f64) -> f64 {
    std::f64::consts::LN_2 / (1.0 / alpha).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ld: f64,
    pub lc: f64,
    pub lt: f64,
}

impl LossBreakdown {
    pub fn new(ld: f64, lc: f64, wc: f64) -> Self {
        Self { ld, lc, lt: ld + wc * lc }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub ld: f64,
    pub lc: f64,
    pub lt: f64,
    pub lr: f64,
    pub gamma_dev: f64,
}

/// Per-epoch metrics, written as `epoch,ld,lc,lt,lr,gamma_dev`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricLog {
    pub rows: Vec<MetricRow>,
}

impl MetricLog {
    pub const HEADER: &'static str = "epoch,ld,lc,lt,lr,gamma_dev";

    pub fn push(&mut self, row: MetricRow) {
        log::info!(
            "epoch {:>3}  ld {:.5}  lc {:.5}  lt {:.5}  lr {:.3e}  gamma_dev {:.4}",
            row.epoch,
            row.ld,
            row.lc,
            row.lt,
            row.lr,
            row.gamma_dev
        );
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{},{}", r.epoch, r.ld, r.lc, r.lt, r.lr, r.gamma_dev).expect("string write");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Seeded split of `n` rows into (training, held-out) index lists.
///
/// The held-out part takes `ceil(n · fraction)` rows but never all of them.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::derived(seed, 1).shuffle(&mut order);
    let held = ((n as f64 * fraction).ceil() as usize).min(n.saturating_sub(1));
    let dev = order[..held].to_vec();
    let mut train = order[held..].to_vec();
    train.sort_unstable();
    let mut dev = dev;
    dev.sort_unstable();
    (train, dev)
}

/// Fraction of rows whose building and floor are both predicted correctly.
pub fn success_rate(spec: &ModelSpec, params: &Parameters, batch: &EncodedBatch) -> Result<f64> {
    let targets = batch.targets()?;
    if batch.is_empty() {
        return Ok(f64::NAN);
    }
    let outputs = spec.predict(params, batch.features.clone())?;
    let classes = |target: HeadTarget| spec.head_for(target).map(|(i, _)| &outputs[i]);
    let correct = if let Some(bf) = classes(HeadTarget::BuildingFloor) {
        bf.outer_iter()
            .enumerate()
            .filter(|(r, row)| {
                let (b, f) = row.view().split_at(Axis(0), 3);
                argmax(b) == usize::from(targets.building[*r]) && argmax(f) == usize::from(targets.floor[*r])
            })
            .count()
    } else {
        let b = classes(HeadTarget::Building).ok_or_else(|| Error::Config("no building head".into()))?;
        let f = classes(HeadTarget::Floor).ok_or_else(|| Error::Config("no floor head".into()))?;
        (0..batch.len())
            .filter(|&r| {
                argmax(b.row(r)) == usize::from(targets.building[r]) && argmax(f.row(r)) == usize::from(targets.floor[r])
            })
            .count()
    };
    Ok(correct as f64 / batch.len() as f64)
}

/// Summed prediction loss of a model over a labeled batch, eval mode.
pub fn evaluation_loss(spec: &ModelSpec, params: &Parameters, batch: &EncodedBatch) -> Result<f64> {
    let outputs = spec.predict(params, batch.features.clone())?;
    Ok(spec.prediction_loss(&outputs, batch.targets()?)?.0)
}

/// Cycles over row indices in reshuffled passes.
struct BatchStream {
    order: Vec<usize>,
    pos: usize,
}

impl BatchStream {
    fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn passes_in(&self, batch: usize) -> usize {
        self.order.len().div_ceil(batch)
    }

    fn next(&mut self, batch: usize, rng: &mut Rng) -> &[usize] {
        if self.pos >= self.order.len() {
            rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        let end = (self.pos + batch).min(self.order.len());
        let slice = &self.order[self.pos..end];
        self.pos = end;
        slice
    }
}

/// One supervised Adam step; returns the summed prediction loss.
pub fn supervised_step(
    spec: &ModelSpec,
    params: &mut Parameters,
    features: Array2<f64>,
    targets: &LabelTargets,
    adam: &mut Adam,
    rng: &mut Rng,
) -> Result<f64> {
    let (outputs, cache) = spec.forward_train(params, features, rng)?;
    let (ld, head_grads) = spec.prediction_loss(&outputs, targets)?;
    let grads = spec.backward(params, &cache, head_grads)?;
    adam.step(params, &grads)?;
    Ok(ld)
}

/// Student gradient of `w_c · L_c` with the teacher's outputs held constant.
pub fn consistency_gradient(
    spec: &ModelSpec,
    student: &Parameters,
    teacher: &Parameters,
    unlabeled: ArrayView2<f64>,
    wc: f64,
    rng: &mut Rng,
) -> Result<(f64, Parameters)> {
    let targets = spec.predict(teacher, unlabeled.to_owned())?;
    let (outputs, cache) = spec.forward_train(student, unlabeled.to_owned(), rng)?;
    let (lc, head_grads) = spec.consistency_loss(&outputs, &targets, wc)?;
    let grads = spec.backward(student, &cache, head_grads)?;
    Ok((lc, grads))
}

/// One Mean Teacher step: Adam on the student for `L_t`, then the EMA update.
#[allow(clippy::too_many_arguments)]
pub fn ssl_step(
    spec: &ModelSpec,
    student: &mut Parameters,
    teacher: &mut Parameters,
    labeled: &EncodedBatch,
    unlabeled: ArrayView2<f64>,
    alpha: f64,
    wc: f64,
    adam: &mut Adam,
    rng: &mut Rng,
) -> Result<LossBreakdown> {
    student.check_schema(teacher)?;
    let (outputs, cache) = spec.forward_train(student, labeled.features.clone(), rng)?;
    let (ld, head_grads) = spec.prediction_loss(&outputs, labeled.targets()?)?;
    let mut grads = spec.backward(student, &cache, head_grads)?;
    let (lc, consistency) = consistency_gradient(spec, student, teacher, unlabeled, wc, rng)?;
    grads.add_assign(&consistency)?;
    adam.step(student, &grads)?;
    teacher.ema_update(student, alpha)?;
    Ok(LossBreakdown::new(ld, lc, wc))
}

/// Two independent deep copies of the pre-trained weights.
pub fn clone_params(theta: &Parameters) -> (Parameters, Parameters) {
    (theta.clone(), theta.clone())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedOutcome {
    pub final_params: Parameters,
    /// Weights at the lowest monitored loss.
    pub best_params: Parameters,
    pub epochs_run: usize,
}

/// Supervised training with plateau scheduling (on the training loss) and
/// early stopping (on `dev` loss when given, else the training loss).
pub fn train_supervised(
    spec: &ModelSpec,
    init: Parameters,
    train: &EncodedBatch,
    dev: Option<&EncodedBatch>,
    cfg: &SslConfig,
    max_epochs: usize,
    log: &mut MetricLog,
) -> Result<SupervisedOutcome> {
    cfg.validate()?;
    let targets = train.targets()?;
    if train.is_empty() {
        return Err(Error::Validation("supervised training needs labeled data".into()));
    }
    let dev = dev.filter(|d| !d.is_empty());
    let mut params = init;
    let mut best_params = params.clone();
    let mut adam = Adam::new(&params, spec.learning_rates(), AdamConfig::default())?;
    let mut scheduler = PlateauScheduler::new(cfg.scheduler_factor, cfg.scheduler_patience);
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut rng = Rng::derived(cfg.seed, 2);
    let mut stream = BatchStream::new(train.len());
    let mut epochs_run = 0;
    for epoch in 1..=max_epochs {
        let steps = stream.passes_in(cfg.batch_size);
        let mut total = 0.0;
        for _ in 0..steps {
            let rows = stream.next(cfg.batch_size, &mut rng).to_vec();
            let x = train.features.select(Axis(0), &rows);
            let t = targets.select(&rows);
            let ld = supervised_step(spec, &mut params, x, &t, &mut adam, &mut rng)
                .map_err(|e| divergence_or(e, &params, epoch))?;
            if !ld.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            total += ld;
        }
        let mean = total / steps as f64;
        epochs_run = epoch;
        let lr = adam.learning_rates()[0];
        if let Some(f) = scheduler.step(mean) {
            adam.scale_learning_rates(f);
        }
        let monitored = match dev {
            Some(d) => evaluation_loss(spec, &params, d)?,
            None => mean,
        };
        if !monitored.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let gamma_dev = match dev {
            Some(d) => success_rate(spec, &params, d)?,
            None => f64::NAN,
        };
        log.push(MetricRow { epoch, ld: mean, lc: 0.0, lt: mean, lr, gamma_dev });
        let stop = stopper.step(monitored);
        if stopper.improved() {
            best_params = params.clone();
        }
        if stop {
            break;
        }
    }
    Ok(SupervisedOutcome {
        final_params: params,
        best_params,
        epochs_run,
    })
}

fn divergence_or(e: Error, params: &Parameters, epoch: usize) -> Error {
    if params.all_finite() {
        e
    } else {
        Error::Divergence { epoch }
    }
}

/// Supervised pre-training on labeled data with a held-out early-stopping
/// slice; returns the final weights.
pub fn pretrain(spec: &ModelSpec, init: Parameters, labeled: &EncodedBatch, cfg: &SslConfig) -> Result<Parameters> {
    if labeled.is_empty() {
        return Err(Error::Validation("pre-training needs labeled data".into()));
    }
    let (train_rows, dev_rows) = holdout_split(labeled.len(), cfg.holdout_fraction, cfg.seed);
    let train = labeled.select(&train_rows);
    let dev = labeled.select(&dev_rows);
    let mut log = MetricLog::default();
    Ok(train_supervised(spec, init, &train, Some(&dev), cfg, cfg.pretrain_max_epochs, &mut log)?.final_params)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SslOutcome {
    /// Teacher at the epoch with the lowest mean `L_t`.
    pub teacher: Parameters,
    pub final_teacher: Parameters,
    pub final_student: Parameters,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Mean Teacher training from pre-trained weights.
///
/// Each epoch is one pass over the longer of the labeled and unlabeled
/// streams; the shorter one restarts with a fresh shuffle when exhausted.
pub fn ssl_train(
    spec: &ModelSpec,
    theta_p: &Parameters,
    labeled: &EncodedBatch,
    unlabeled: ArrayView2<f64>,
    dev: Option<&EncodedBatch>,
    cfg: &SslConfig,
    log: &mut MetricLog,
) -> Result<SslOutcome> {
    cfg.validate()?;
    if unlabeled.nrows() == 0 {
        return Err(Error::Validation("SSL training needs unlabeled data".into()));
    }
    if labeled.is_empty() {
        return Err(Error::Validation("SSL training needs labeled data".into()));
    }
    if unlabeled.ncols() != spec.input_width {
        return Err(Error::shape("unlabeled batch", "width differs from model input"));
    }
    let targets = labeled.targets()?;
    let dev = dev.filter(|d| !d.is_empty());
    let (mut student, mut teacher) = clone_params(theta_p);
    let mut best = teacher.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut adam = Adam::new(&student, spec.learning_rates(), AdamConfig::default())?;
    let mut scheduler = PlateauScheduler::new(cfg.scheduler_factor, cfg.scheduler_patience);
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut rng = Rng::derived(cfg.seed, 3);
    let mut labeled_stream = BatchStream::new(labeled.len());
    let mut unlabeled_stream = BatchStream::new(unlabeled.nrows());
    let steps = labeled_stream
        .passes_in(cfg.batch_size)
        .max(unlabeled_stream.passes_in(cfg.batch_size));
    let mut epochs_run = 0;
    for epoch in 1..=cfg.max_epochs {
        let (mut ld, mut lc) = (0.0, 0.0);
        for _ in 0..steps {
            let l_rows = labeled_stream.next(cfg.batch_size, &mut rng).to_vec();
            let u_rows = unlabeled_stream.next(cfg.batch_size, &mut rng).to_vec();
            let batch = EncodedBatch {
                features: labeled.features.select(Axis(0), &l_rows),
                targets: Some(targets.select(&l_rows)),
                scaler: labeled.scaler,
            };
            let u = unlabeled.select(Axis(0), &u_rows);
            let losses = ssl_step(spec, &mut student, &mut teacher, &batch, u.view(), cfg.alpha, cfg.wc, &mut adam, &mut rng)
                .map_err(|e| divergence_or(e, &student, epoch))?;
            if !losses.lt.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            ld += losses.ld;
            lc += losses.lc;
        }
        let mean = LossBreakdown::new(ld / steps as f64, lc / steps as f64, cfg.wc);
        epochs_run = epoch;
        let lr = adam.learning_rates()[0];
        if let Some(f) = scheduler.step(mean.lt) {
            adam.scale_learning_rates(f);
        }
        let gamma_dev = match dev {
            Some(d) => success_rate(spec, &teacher, d)?,
            None => f64::NAN,
        };
        log.push(MetricRow { epoch, ld: mean.ld, lc: mean.lc, lt: mean.lt, lr, gamma_dev });
        if mean.lt < best_loss {
            best_loss = mean.lt;
            best = teacher.clone();
            best_epoch = epoch;
        }
        if stopper.step(mean.lt) {
            break;
        }
    }
    Ok(SslOutcome {
        teacher: best,
        final_teacher: teacher,
        final_student: student,
        best_epoch,
        epochs_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_loss_identity() {
        let l = LossBreakdown::new(1.0, 0.5, 6.0);
        assert_eq!(l.lt, 4.0);
    }

    #[test]
    fn half_lives() {
        assert!((ema_half_life(0.999) - 692.8).abs() < 0.1);
        assert!((ema_half_life(0.9) - 6.58).abs() < 0.01);
    }

    #[test]
    fn holdout_is_disjoint_and_covers() {
        let (train, dev) = holdout_split(101, 0.1, 7);
        assert_eq!(dev.len(), 11);
        let mut all: Vec<usize> = train.iter().chain(&dev).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        let (train, dev) = holdout_split(1, 0.1, 7);
        assert_eq!((train.len(), dev.len()), (1, 0));
    }

    #[test]
    fn config_validation() {
        let mut c = SslConfig::hybrid();
        c.alpha = 0.0;
        assert!(c.validate().is_err());
        c.alpha = 1.0;
        assert!(c.validate().is_ok());
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn batch_stream_cycles_with_reshuffle() {
        let mut s = BatchStream::new(5);
        let mut rng = Rng::new(1);
        let mut seen = Vec::new();
        for _ in 0..3 {
            seen.extend_from_slice(s.next(2, &mut rng));
        }
        // Batches stop at the pass boundary: 2 + 2 + 1.
        assert_eq!(seen.len(), 5);
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        assert_eq!(s.next(2, &mut rng).len(), 2);
    }

    #[test]
    fn metric_log_header() {
        let mut log = MetricLog::default();
        log.push(MetricRow { epoch: 1, ld: 0.5, lc: 0.25, lt: 2.0, lr: 1e-4, gamma_dev: 0.9 });
        assert_eq!(log.to_csv(), "epoch,ld,lc,lt,lr,gamma_dev\n1,0.5,0.25,2,0.0001,0.9\n");
    }
}
