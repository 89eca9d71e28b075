use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean squared error over all elements.
    Mse,
    /// Binary cross-entropy over all elements; targets may be soft.
    Bce,
    /// Categorical cross-entropy on probability rows, averaged over rows.
    CrossEntropy,
}

/// Batch-mean loss and its gradient with respect to `pred`.
///
/// For the log-based losses the gradient is evaluated at the clamped
/// probability, so it stays finite for saturated predictions.
pub fn loss(kind: LossKind, pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::shape(
            format!("{kind:?} loss"),
            format!("prediction {:?} vs target {:?}", pred.dim(), target.dim()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::Domain(format!("{kind:?} loss on an empty batch")));
    }
    let clamp = |p: f64| p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    match kind {
        LossKind::Mse => {
            let n = pred.len() as f64;
            let diff = &pred - &target;
            let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
            Ok((value, diff * (2.0 / n)))
        }
        LossKind::Bce => {
            let in_unit = |v: &f64| (0.0..=1.0).contains(v);
            if !pred.iter().all(in_unit) || !target.iter().all(in_unit) {
                return Err(Error::Domain("BCE needs predictions and targets in [0, 1]".into()));
            }
            let n = pred.len() as f64;
            let mut value = 0.0;
            let mut grad = Array2::zeros(pred.raw_dim());
            Zip::from(&mut grad).and(&pred).and(&target).for_each(|g, &p, &y| {
                let p = clamp(p);
                value -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
                *g = (p - y) / (p * (1.0 - p)) / n;
            });
            Ok((value / n, grad))
        }
        LossKind::CrossEntropy => {
            for (i, row) in target.outer_iter().enumerate() {
                let sum: f64 = row.sum();
                if row.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::Domain(format!("CE target row {i} is not a probability vector")));
                }
            }
            if !pred.iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(Error::Domain("CE needs probabilities in [0, 1]".into()));
            }
            let rows = pred.nrows() as f64;
            let mut value = 0.0;
            let mut grad = Array2::zeros(pred.raw_dim());
            Zip::from(&mut grad).and(&pred).and(&target).for_each(|g, &p, &y| {
                let p = clamp(p);
                value -= y * p.ln();
                *g = -y / p / rows;
            });
            Ok((value / rows, grad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mse_of_identical_is_zero() {
        let x = array![[0.3, -2.0], [5.0, 1.0]];
        let (v, g) = loss(LossKind::Mse, x.view(), x.view()).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn bce_half_vs_one_is_ln2() {
        let (v, _) = loss(LossKind::Bce, array![[0.5, 0.5]].view(), array![[1.0, 1.0]].view()).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn ce_uniform_over_three_is_ln3() {
        let p = array![[1.0 / 3.0; 3], [1.0 / 3.0; 3]];
        for hot in 0..3 {
            let mut y = Array2::zeros((2, 3));
            y[[0, hot]] = 1.0;
            y[[1, (hot + 1) % 3]] = 1.0;
            let (v, _) = loss(LossKind::CrossEntropy, p.view(), y.view()).unwrap();
            assert!((v - 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_predictions_stay_finite() {
        let (v, g) = loss(LossKind::Bce, array![[0.0, 1.0]].view(), array![[1.0, 0.0]].view()).unwrap();
        assert!(v.is_finite() && g.iter().all(|d| d.is_finite()));
        let (v, g) = loss(LossKind::CrossEntropy, array![[0.0, 1.0]].view(), array![[1.0, 0.0]].view()).unwrap();
        assert!(v.is_finite() && g.iter().all(|d| d.is_finite()));
    }

    #[test]
    fn domain_violations() {
        assert!(loss(LossKind::Bce, array![[1.5]].view(), array![[1.0]].view()).is_err());
        assert!(loss(LossKind::CrossEntropy, array![[0.5, 0.5]].view(), array![[0.7, 0.7]].view()).is_err());
        assert!(loss(LossKind::Mse, array![[1.0]].view(), array![[1.0, 2.0]].view()).is_err());
    }
}
