//! Training objectives. Every loss takes probability tensors shaped
//! `(B, |L_s|)`, clamps them to `[PROB_EPS, 1 - PROB_EPS]` inside each log,
//! and reduces with the arithmetic mean over the batch.

use candle_core::{DType, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::error::{OsdaError, Result};
use crate::ops::{self, safe_log};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Weight of the negative constraint on extracted unknowns.
    pub lambda_neg: f64,
    /// Weight of the open-set entropy term on target batches.
    pub w_entropy_min: f64,
    /// Generator penalty weights (entropy and agreement factors).
    pub w_gen_ent: f64,
    pub w_gen_agree: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_neg: 0.1,
            w_entropy_min: 0.1,
            w_gen_ent: 1.0,
            w_gen_agree: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_neg", self.lambda_neg),
            ("w_entropy_min", self.w_entropy_min),
            ("w_gen_ent", self.w_gen_ent),
            ("w_gen_agree", self.w_gen_agree),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(OsdaError::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// How the source one-vs-all loss picks its negative classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSampling {
    /// Only the most confusing wrong class (largest `p_o` among k ≠ y).
    #[default]
    Hardest,
    /// Sum over every wrong class. Ablation only.
    All,
}

fn dims2(t: &Tensor, what: &'static str) -> Result<(usize, usize)> {
    match t.dims() {
        [b, k] if *b > 0 => Ok((*b, *k)),
        other => Err(OsdaError::Shape {
            context: what,
            expected: "(B > 0, |L_s|)".into(),
            got: format!("{other:?}"),
        }),
    }
}

fn one_hot(labels: &[u32], classes: usize, like: &Tensor) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l as usize >= classes {
            return Err(OsdaError::invalid(format!("label {l} outside [0, {classes})")));
        }
        data[i * classes + l as usize] = 1.0;
    }
    Ok(Tensor::from_vec(data, (labels.len(), classes), like.device())?.to_dtype(like.dtype())?)
}

fn check_labels(b: usize, labels: &[u32]) -> Result<()> {
    if labels.len() != b {
        return Err(OsdaError::Shape {
            context: "labels",
            expected: format!("{b} labels"),
            got: format!("{}", labels.len()),
        });
    }
    Ok(())
}

/// Mean over the batch of `-log p_c(y_i|x_i)`.
pub fn closed_ce(closed_probs: &Tensor, labels: &[u32]) -> Result<Tensor> {
    let (b, k) = dims2(closed_probs, "closed_ce input")?;
    check_labels(b, labels)?;
    let onehot = one_hot(labels, k, closed_probs)?;
    Ok((onehot * safe_log(closed_probs)?)?.sum(1)?.mean(0)?.neg()?)
}

/// Source one-vs-all loss: `-log p_o(y|x)` for the own class plus
/// `-log(1 - p_o(k|x))` for the hardest negative class k ≠ y.
pub fn ova_hard_negative(open_known: &Tensor, labels: &[u32], sampling: NegativeSampling) -> Result<Tensor> {
    let (b, k) = dims2(open_known, "ova input")?;
    if k < 2 {
        return Err(OsdaError::invalid("one-vs-all loss needs at least 2 known classes"));
    }
    check_labels(b, labels)?;
    let onehot = one_hot(labels, k, open_known)?;
    let others = onehot.affine(-1.0, 1.0)?;
    let pos = (&onehot * safe_log(open_known)?)?.sum(1)?.neg()?;
    let neg = match sampling {
        // p_o >= 0, so zeroing the own class leaves the max over the others
        NegativeSampling::Hardest => {
            let hardest = (open_known * &others)?.max(D::Minus1)?;
            safe_log(&hardest.affine(-1.0, 1.0)?)?.neg()?
        }
        NegativeSampling::All => (others * safe_log(&open_known.affine(-1.0, 1.0)?)?)?.sum(1)?.neg()?,
    };
    Ok((pos + neg)?.mean(0)?)
}

/// Mean binary entropy of every one-vs-all classifier, averaged over
/// classes and batch. Applied to unlabeled target batches.
pub fn open_entropy_min(open_known: &Tensor) -> Result<Tensor> {
    dims2(open_known, "entropy input")?;
    let q = open_known.affine(-1.0, 1.0)?;
    let h = ((open_known * safe_log(open_known)?)? + (&q * safe_log(&q)?)?)?;
    Ok(h.mean(1)?.mean(0)?.neg()?)
}

/// Negative constraint on extracted unknowns:
/// `-(1/|L_s|) Σ_k log(1 - p_o(k|x̄))`, averaged over the batch.
pub fn negative_constraint(open_known: &Tensor) -> Result<Tensor> {
    dims2(open_known, "negative constraint input")?;
    Ok(safe_log(&open_known.affine(-1.0, 1.0)?)?.mean(1)?.mean(0)?.neg()?)
}

/// Generator entropy factor on the closed head:
/// `-(1/|L_s|) Σ_k p_c log p_c`, averaged over the batch.
pub fn gen_entropy(closed_probs: &Tensor) -> Result<Tensor> {
    dims2(closed_probs, "generator entropy input")?;
    Ok((closed_probs * safe_log(closed_probs)?)?.mean(1)?.mean(0)?.neg()?)
}

/// Generator agreement factor: `-(1/|L_s|) Σ_k log p_o(k|x̄)`, i.e. the
/// negative constraint evaluated on `1 - p_o`.
pub fn gen_agreement(open_known: &Tensor) -> Result<Tensor> {
    negative_constraint(&open_known.affine(-1.0, 1.0)?)
}

fn finite_scalar(t: &Tensor, name: &str) -> Result<f64> {
    let v = ops::scalar(t)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(OsdaError::NonFinite(format!("loss component `{name}` = {v}")))
    }
}

/// `closed_ce + ova` on a labeled source batch.
pub fn total_source_loss(closed_ce: &Tensor, ova: &Tensor) -> Result<Tensor> {
    finite_scalar(closed_ce, "closed_ce")?;
    finite_scalar(ova, "ova_hncs")?;
    Ok((closed_ce + ova)?)
}

/// `w_entropy_min · open_entropy_min` on an unlabeled target batch.
pub fn total_target_loss(ent_min: &Tensor, weights: &LossWeights) -> Result<Tensor> {
    finite_scalar(ent_min, "ent_min")?;
    Ok(ent_min.affine(weights.w_entropy_min, 0.0)?)
}

/// `lambda_neg · negative_constraint`, added during fine-tuning.
pub fn total_negative_loss(neg_constraint: &Tensor, weights: &LossWeights) -> Result<Tensor> {
    finite_scalar(neg_constraint, "neg_constraint")?;
    Ok(neg_constraint.affine(weights.lambda_neg, 0.0)?)
}

/// Per-iteration loss values for logging. Components that do not apply to
/// the current phase stay `None` and are written as empty CSV fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub iter: usize,
    pub phase: String,
    pub closed_ce: Option<f64>,
    pub ova_hncs: Option<f64>,
    pub ent_min: Option<f64>,
    pub neg_constraint: Option<f64>,
    pub gen_ent: Option<f64>,
    pub gen_agree: Option<f64>,
    pub total: f64,
}

impl LossRow {
    pub const HEADER: [&'static str; 9] = [
        "iter",
        "phase",
        "closed_ce",
        "ova_hncs",
        "ent_min",
        "neg_constraint",
        "gen_ent",
        "gen_agree",
        "total",
    ];

    pub fn record(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        vec![
            self.iter.to_string(),
            self.phase.clone(),
            f(self.closed_ce),
            f(self.ova_hncs),
            f(self.ent_min),
            f(self.neg_constraint),
            f(self.gen_ent),
            f(self.gen_agree),
            format!("{:?}", self.total),
        ]
    }
}

pub fn write_loss_csv(rows: &[LossRow], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LossRow::HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush().map_err(|e| OsdaError::io(path, e))
}

/// Read a file written by [`write_loss_csv`].
pub fn read_loss_csv(path: &std::path::Path) -> Result<Vec<LossRow>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(LossRow::HEADER) {
        return Err(OsdaError::invalid(format!("{}: not a loss CSV", path.display())));
    }
    let bad = |what: &str| OsdaError::invalid(format!("{}: bad {what}", path.display()));
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad("value"))
        }
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(LossRow {
            iter: rec[0].parse().map_err(|_| bad("iter"))?,
            phase: rec[1].to_string(),
            closed_ce: opt(&rec[2])?,
            ova_hncs: opt(&rec[3])?,
            ent_min: opt(&rec[4])?,
            neg_constraint: opt(&rec[5])?,
            gen_ent: opt(&rec[6])?,
            gen_agree: opt(&rec[7])?,
            total: rec[8].parse().map_err(|_| bad("total"))?,
        });
    }
    Ok(rows)
}

/// Scalar value of a loss tensor.
pub fn value(t: &Tensor) -> Result<f64> {
    ops::scalar(&t.to_dtype(DType::F64)?)
}
