//! EvAAL error, success rate and relative improvement.
//!
//! Per sample the error is `50 m · [building wrong] + 4 m · [floor wrong] +`
//! the planar distance between predicted and true coordinates; the reported
//! error is the mean over samples, which equals the penalty-weighted miss
//! fractions plus the mean Euclidean distance.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LocationLabel, BUILDING_COUNT};
use crate::error::{Error, Result};
use crate::models::{HeadOutputs, HeadTarget, ModelSpec};
use crate::preprocess::CoordScaler;

/// Building misclassification penalty in meters.
pub const BUILDING_PENALTY: f64 = 50.0;
/// Floor misclassification penalty in meters.
pub const FLOOR_PENALTY: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub building: u8,
    pub floor: u8,
    pub longitude: f64,
    pub latitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean EvAAL error in meters.
    pub evaal_error: f64,
    /// Fraction of samples with building and floor both correct.
    pub gamma: f64,
    pub b_miss: f64,
    pub f_miss: f64,
    /// Mean planar Euclidean error in meters.
    pub mean_euc: f64,
    pub per_sample_errors: Vec<f64>,
    pub n: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-sample EvAAL error.
pub fn sample_error(prediction: &Prediction, truth: &LocationLabel) -> f64 {
    let building = if prediction.building != truth.building { BUILDING_PENALTY } else { 0.0 };
    let floor = if prediction.floor != truth.floor { FLOOR_PENALTY } else { 0.0 };
    building + floor + planar_distance(prediction, truth)
}

fn planar_distance(prediction: &Prediction, truth: &LocationLabel) -> f64 {
    (prediction.longitude - truth.longitude).hypot(prediction.latitude - truth.latitude)
}

pub fn evaal_labels(predictions: &[Prediction], truth: &[LocationLabel]) -> Result<EvalReport> {
    if predictions.len() != truth.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} records",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Validation("cannot evaluate zero samples".into()));
    }
    let n = truth.len() as f64;
    let (mut b_wrong, mut f_wrong, mut both_right, mut euc) = (0usize, 0usize, 0usize, 0.0);
    let mut per_sample = Vec::with_capacity(truth.len());
    for (p, t) in predictions.iter().zip(truth) {
        let b_ok = p.building == t.building;
        let f_ok = p.floor == t.floor;
        b_wrong += usize::from(!b_ok);
        f_wrong += usize::from(!f_ok);
        both_right += usize::from(b_ok && f_ok);
        euc += planar_distance(p, t);
        per_sample.push(sample_error(p, t));
    }
    let b_miss = b_wrong as f64 / n;
    let f_miss = f_wrong as f64 / n;
    let mean_euc = euc / n;
    Ok(EvalReport {
        evaal_error: BUILDING_PENALTY * b_miss + FLOOR_PENALTY * f_miss + mean_euc,
        gamma: both_right as f64 / n,
        b_miss,
        f_miss,
        mean_euc,
        per_sample_errors: per_sample,
        n: truth.len(),
    })
}

/// EvAAL report of predictions against a dataset's ground truth.
pub fn evaal(predictions: &[Prediction], truth: &Dataset) -> Result<EvalReport> {
    evaal_labels(predictions, &truth.ground_truth()?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    /// Relative improvement in percent; negative when the proposal is worse.
    pub eta: f64,
    pub error_ref: f64,
    pub error_prop: f64,
}

pub fn improvement(error_ref: f64, error_prop: f64) -> Result<ImprovementReport> {
    if error_ref <= 0.0 || !error_ref.is_finite() {
        return Err(Error::Domain(format!("reference error must be positive, got {error_ref}")));
    }
    Ok(ImprovementReport {
        eta: (error_ref - error_prop) / error_ref * 100.0,
        error_ref,
        error_prop,
    })
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// Decodes head outputs into class labels and coordinates in meters.
pub fn decode_predictions(spec: &ModelSpec, outputs: &HeadOutputs, scaler: &CoordScaler) -> Result<Vec<Prediction>> {
    let missing = |what: &str| Error::Config(format!("{:?} has no {what} head", spec.name));
    let (buildings, floors): (Vec<usize>, Vec<usize>) =
        if let Some((i, _)) = spec.head_for(HeadTarget::BuildingFloor) {
            outputs[i]
                .outer_iter()
                .map(|row| {
                    let (b, f) = row.view().split_at(ndarray::Axis(0), BUILDING_COUNT);
                    (argmax(b), argmax(f))
                })
                .unzip()
        } else {
            let (bi, _) = spec.head_for(HeadTarget::Building).ok_or_else(|| missing("building"))?;
            let (fi, _) = spec.head_for(HeadTarget::Floor).ok_or_else(|| missing("floor"))?;
            (
                outputs[bi].outer_iter().map(argmax).collect(),
                outputs[fi].outer_iter().map(argmax).collect(),
            )
        };
    let (ci, _) = spec.head_for(HeadTarget::Coords).ok_or_else(|| missing("coordinate"))?;
    let coords = &outputs[ci];
    Ok((0..coords.nrows())
        .map(|r| {
            let [lon, lat] = scaler.decode([coords[[r, 0]], coords[[r, 1]]]);
            Prediction {
                building: buildings[r] as u8,
                floor: floors[r] as u8,
                longitude: lon,
                latitude: lat,
            }
        })
        .collect())
}

/// Plain-text table with one row per `(strategy, model, report)`.
pub fn format_table(rows: &[(String, String, EvalReport)]) -> String {
    let mut out = format!("{:<10} {:<10} {:>7} {:>14}\n", "Strategy", "Model", "gamma", "EvAAL Error");
    for (strategy, model, report) in rows {
        out.push_str(&format!(
            "{:<10} {:<10} {:>7.3} {:>10.2} [m]\n",
            strategy, model, report.gamma, report.evaal_error
        ));
    }
    out
}
