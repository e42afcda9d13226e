//! Open-set metrics, multi-seed aggregation and result tables.
//!
//! This module is also the only place that can open a target dataset's
//! hidden ground truth.

mod tables;

use serde::{Deserialize, Serialize};

pub use tables::{
    reference_fixtures, render_tables, FixtureRow, RenderedTables, ResultGrid, TableCell, REFERENCE_FIXTURES_CSV,
};

use crate::data::DomainDataset;
use crate::error::{OsdaError, Result};
use crate::model::{ModelState, PredictedLabel};

/// Ground-truth class of a target example in the compact label space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrueLabel {
    Known(usize),
    Unknown,
}

/// Sealed target labels. Training code can carry it around but not look
/// inside; [`reveal_ground_truth`] is the only accessor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth(Vec<TrueLabel>);

impl GroundTruth {
    pub(crate) fn seal(labels: Vec<TrueLabel>) -> Self {
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Hidden target labels, for evaluation and diagnostics only.
pub fn reveal_ground_truth(ds: &DomainDataset) -> Result<&[TrueLabel]> {
    ds.ground_truth()
        .map(|g| g.0.as_slice())
        .ok_or_else(|| OsdaError::MissingGroundTruth(ds.name().to_string()))
}

/// How accuracies are averaged inside the known and unknown subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetAveraging {
    /// Mean of per-class accuracies; the unknown side is a single class.
    #[default]
    Macro,
    /// Pooled sample accuracy inside each subset.
    Micro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Overall accuracy over every target sample, unknown counted as class |L_s|.
    pub acc: f64,
    pub acc_known: f64,
    pub acc_unknown: f64,
    pub h_score: f64,
    /// Length |L_s| + 1, the last entry is the unknown class. Classes with
    /// no samples report 0 and are left out of the subset averages.
    pub per_class_acc: Vec<f64>,
    pub counts: Vec<usize>,
    pub correct: Vec<usize>,
}

/// Harmonic mean of the known and unknown accuracies; 0 when both are 0.
pub fn h_score(acc_known: f64, acc_unknown: f64) -> Result<f64> {
    for (name, v) in [("acc_known", acc_known), ("acc_unknown", acc_unknown)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(OsdaError::invalid(format!("{name} must lie in [0,1], got {v}")));
        }
    }
    let sum = acc_known + acc_unknown;
    if sum == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * acc_known * acc_unknown / sum)
}

/// Score predicted labels against the hidden truth.
pub fn score_predictions(
    predicted: &[PredictedLabel],
    truth: &[TrueLabel],
    num_known: usize,
    averaging: SubsetAveraging,
) -> Result<MetricsReport> {
    if predicted.len() != truth.len() {
        return Err(OsdaError::Shape {
            context: "predictions vs ground truth",
            expected: format!("{}", truth.len()),
            got: format!("{}", predicted.len()),
        });
    }
    let unknown_slot = num_known;
    let mut counts = vec![0usize; num_known + 1];
    let mut correct = vec![0usize; num_known + 1];
    for (p, t) in predicted.iter().zip(truth) {
        let (slot, hit) = match *t {
            TrueLabel::Known(k) => {
                if k >= num_known {
                    return Err(OsdaError::invalid(format!("true label {k} outside {num_known} known classes")));
                }
                (k, *p == PredictedLabel::Known(k))
            }
            TrueLabel::Unknown => (unknown_slot, *p == PredictedLabel::Unknown),
        };
        counts[slot] += 1;
        correct[slot] += usize::from(hit);
    }
    let ratio = |c: usize, n: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    let per_class_acc: Vec<f64> = counts.iter().zip(&correct).map(|(&n, &c)| ratio(c, n)).collect();

    let total: usize = counts.iter().sum();
    let acc = ratio(correct.iter().sum(), total);
    let acc_known = match averaging {
        SubsetAveraging::Macro => {
            let present: Vec<f64> = (0..num_known).filter(|&k| counts[k] > 0).map(|k| per_class_acc[k]).collect();
            if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            }
        }
        SubsetAveraging::Micro => ratio(correct[..num_known].iter().sum(), counts[..num_known].iter().sum()),
    };
    let acc_unknown = per_class_acc[unknown_slot];
    Ok(MetricsReport {
        acc,
        acc_known,
        acc_unknown,
        h_score: h_score(acc_known, acc_unknown)?,
        per_class_acc,
        counts,
        correct,
    })
}

/// Evaluate a frozen model on every target sample.
pub fn evaluate(state: &ModelState, target: &DomainDataset, averaging: SubsetAveraging) -> Result<MetricsReport> {
    let truth = reveal_ground_truth(target)?;
    let predicted: Vec<PredictedLabel> = state.predict_dataset(target)?.into_iter().map(|p| p.label).collect();
    score_predictions(&predicted, truth, state.num_known(), averaging)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (n − 1); std is 0 for one value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        // offset by the first value so identical inputs give that value back
        let base = values.first().copied().unwrap_or(f64::NAN);
        let mean = base + values.iter().map(|v| v - base).sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub n: usize,
    pub acc: MeanStd,
    pub acc_known: MeanStd,
    pub acc_unknown: MeanStd,
    pub h_score: MeanStd,
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<AggregateRow> {
    if reports.is_empty() {
        return Err(OsdaError::invalid("cannot aggregate an empty list of reports"));
    }
    let col = |f: fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateRow {
        n: reports.len(),
        acc: col(|r| r.acc),
        acc_known: col(|r| r.acc_known),
        acc_unknown: col(|r| r.acc_unknown),
        h_score: col(|r| r.h_score),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn report_with_h(h: f64) -> MetricsReport {
        MetricsReport {
            acc: 0.5,
            acc_known: 0.5,
            acc_unknown: 0.5,
            h_score: h,
            per_class_acc: vec![],
            counts: vec![],
            correct: vec![],
        }
    }

    #[test]
    fn h_score_examples() {
        assert_eq!(h_score(1.0, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(h_score(0.8, 0.6).unwrap(), 0.96 / 1.4, epsilon = 1e-15);
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(h_score(x, 0.0).unwrap(), 0.0);
        }
        assert!(h_score(1.2, 0.5).is_err());
        assert!(h_score(0.5, -0.1).is_err());
    }

    #[test]
    fn perfect_and_all_unknown_predictions() {
        use PredictedLabel as P;
        use TrueLabel as T;
        let truth = vec![T::Known(0), T::Known(1), T::Unknown, T::Unknown];
        let perfect = vec![P::Known(0), P::Known(1), P::Unknown, P::Unknown];
        let r = score_predictions(&perfect, &truth, 2, SubsetAveraging::Macro).unwrap();
        assert_eq!((r.acc, r.acc_known, r.acc_unknown, r.h_score), (1.0, 1.0, 1.0, 1.0));

        let reject_all = vec![P::Unknown; 4];
        let r = score_predictions(&reject_all, &truth, 2, SubsetAveraging::Macro).unwrap();
        assert_eq!(r.acc_known, 0.0);
        assert_eq!(r.acc_unknown, 1.0);
        assert_eq!(r.h_score, 0.0);
        assert_eq!(r.acc, 0.5);
    }

    #[test]
    fn macro_and_micro_differ_on_imbalance() {
        use PredictedLabel as P;
        use TrueLabel as T;
        // class 0: 3 of 3 right, class 1: 0 of 1 right
        let truth = vec![T::Known(0), T::Known(0), T::Known(0), T::Known(1), T::Unknown];
        let pred = vec![P::Known(0), P::Known(0), P::Known(0), P::Known(0), P::Unknown];
        let mac = score_predictions(&pred, &truth, 2, SubsetAveraging::Macro).unwrap();
        let mic = score_predictions(&pred, &truth, 2, SubsetAveraging::Micro).unwrap();
        assert_eq!(mac.acc_known, 0.5);
        assert_eq!(mic.acc_known, 0.75);
        // count-weighted per-class accuracy gives back the overall accuracy
        let weighted: f64 = mac.per_class_acc.iter().zip(&mac.counts).map(|(a, &n)| a * n as f64).sum::<f64>()
            / mac.counts.iter().sum::<usize>() as f64;
        assert_abs_diff_eq!(weighted, mac.acc, epsilon = 1e-15);
    }

    #[test]
    fn aggregate_examples() {
        let rows: Vec<MetricsReport> = [1.0, 2.0, 3.0].iter().map(|&h| report_with_h(h)).collect();
        let agg = aggregate(&rows).unwrap();
        assert_eq!(agg.h_score, MeanStd { mean: 2.0, std: 1.0 });
        assert_eq!(aggregate(&rows[..1]).unwrap().h_score.std, 0.0);
        let same = vec![report_with_h(0.7); 4];
        let agg = aggregate(&same).unwrap();
        assert_eq!(agg.h_score.std, 0.0);
        assert_eq!(agg.h_score.mean, 0.7);
        assert!(aggregate(&[]).is_err());
    }
}
