//! Extraction of high-confidence unknowns from the target domain and the
//! rejection-score statistics used to pick the threshold.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::data::DomainDataset;
use crate::error::{OsdaError, Result};
use crate::eval::{reveal_ground_truth, TrueLabel};
use crate::model::{ModelState, Prediction};
use crate::ops::device;

pub const DEFAULT_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeItem {
    /// Position in the target dataset.
    pub example_index: usize,
    /// `1 - p_o(ŷ|x)` at the pseudo-label.
    pub rejection_score: f64,
    pub pseudo_label: usize,
}

/// Extracted negatives plus a copy of their inputs, so strategies can draw
/// from the set repeatedly without going back to the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSet {
    pub items: Vec<NegativeItem>,
    pub threshold: f64,
    pub source_iteration: usize,
    pub dataset_name: String,
    sample_shape: Vec<usize>,
    data: Vec<Vec<f64>>,
}

impl NegativeSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i]
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.data
    }

    /// `(B, *sample_shape)` tensor of the items at positions `picks`.
    pub fn batch(&self, picks: &[usize]) -> Result<Tensor> {
        let flat: Vec<f64> = picks.iter().flat_map(|&i| self.data[i].iter().copied()).collect();
        let mut shape = vec![picks.len()];
        shape.extend_from_slice(&self.sample_shape);
        Ok(Tensor::from_vec(flat, shape, &device())?)
    }

    /// Manifest with a `# key=value` metadata header followed by
    /// `example_index,rejection_score,pseudo_label` rows.
    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| OsdaError::io(path, e))?;
        writeln!(
            f,
            "# threshold={:?}\n# source_iteration={}\n# dataset={}",
            self.threshold, self.source_iteration, self.dataset_name
        )
        .map_err(|e| OsdaError::io(path, e))?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["example_index", "rejection_score", "pseudo_label"])?;
        for it in &self.items {
            w.write_record([
                it.example_index.to_string(),
                format!("{:?}", it.rejection_score),
                it.pseudo_label.to_string(),
            ])?;
        }
        w.flush().map_err(|e| OsdaError::io(path, e))
    }

    /// Read a manifest back and re-attach the inputs from `target`.
    pub fn read_manifest(path: impl AsRef<Path>, target: &DomainDataset) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| OsdaError::io(path, e))?;
        let mut meta = std::collections::BTreeMap::new();
        let mut body = String::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| OsdaError::io(path, e))?;
            match line.strip_prefix("# ") {
                Some(kv) => {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| OsdaError::invalid(format!("bad manifest metadata line `{line}`")))?;
                    meta.insert(k.to_string(), v.to_string());
                }
                None => {
                    body.push_str(&line);
                    body.push('\n');
                }
            }
        }
        let get = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| OsdaError::invalid(format!("{}: manifest lacks `{k}`", path.display())))
        };
        let parse_err = |k: &str| OsdaError::invalid(format!("{}: bad `{k}` value", path.display()));
        let threshold: f64 = get("threshold")?.parse().map_err(|_| parse_err("threshold"))?;
        let source_iteration: usize = get("source_iteration")?.parse().map_err(|_| parse_err("source_iteration"))?;
        let dataset_name = get("dataset")?;
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let items: Vec<NegativeItem> = r.deserialize().collect::<std::result::Result<_, _>>()?;
        let mut data = Vec::with_capacity(items.len());
        for it in &items {
            let ex = target.examples().get(it.example_index).ok_or_else(|| {
                OsdaError::invalid(format!("manifest index {} outside target of {}", it.example_index, target.len()))
            })?;
            data.push(ex.data.clone());
        }
        Ok(Self {
            items,
            threshold,
            source_iteration,
            dataset_name,
            sample_shape: target.sample_shape().to_vec(),
            data,
        })
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(OsdaError::invalid(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    Ok(())
}

/// Keep the target examples whose rejection score is strictly above
/// `threshold`, in dataset order. `predictions[i]` belongs to example `i`.
pub fn extract_from_predictions(
    predictions: &[Prediction],
    target: &DomainDataset,
    threshold: f64,
    source_iteration: usize,
) -> Result<NegativeSet> {
    check_threshold(threshold)?;
    if predictions.len() != target.len() {
        return Err(OsdaError::Shape {
            context: "predictions vs target",
            expected: target.len().to_string(),
            got: predictions.len().to_string(),
        });
    }
    let mut items = Vec::new();
    let mut data = Vec::new();
    for (i, p) in predictions.iter().enumerate() {
        let score = p.rejection_score();
        if score > threshold {
            items.push(NegativeItem {
                example_index: i,
                rejection_score: score,
                pseudo_label: p.pseudo_label(),
            });
            data.push(target.examples()[i].data.clone());
        }
    }
    Ok(NegativeSet {
        items,
        threshold,
        source_iteration,
        dataset_name: target.name().to_string(),
        sample_shape: target.sample_shape().to_vec(),
        data,
    })
}

/// Score every target example with a frozen snapshot and keep the confident
/// unknowns. Never looks at hidden labels.
pub fn extract_negatives(
    snapshot: &ModelState,
    target: &DomainDataset,
    threshold: f64,
    source_iteration: usize,
) -> Result<NegativeSet> {
    check_threshold(threshold)?;
    if !snapshot.is_frozen() {
        return Err(OsdaError::invalid("extraction needs a frozen snapshot"));
    }
    let preds = snapshot.predict_dataset(target)?;
    extract_from_predictions(&preds, target, threshold, source_iteration)
}

/// Five-number summary plus mean of the rejection scores in one subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub subset: String,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Quantile with linear interpolation between order statistics
/// (position `q·(n-1)` in the sorted values).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl ScoreStats {
    pub fn of(subset: &str, values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mean = if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        };
        Self {
            subset: subset.to_string(),
            count: v.len(),
            min: quantile(&v, 0.0),
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: quantile(&v, 1.0),
            mean,
        }
    }
}

/// Rejection-score distribution of the true-known and true-unknown target
/// subsets. Needs the hidden ground truth, so it is a diagnostic only.
pub fn rejection_score_stats(snapshot: &ModelState, target: &DomainDataset) -> Result<Vec<ScoreStats>> {
    let truth = reveal_ground_truth(target)?;
    let preds = snapshot.predict_dataset(target)?;
    let (mut known, mut unknown) = (Vec::new(), Vec::new());
    for (p, t) in preds.iter().zip(truth) {
        match t {
            TrueLabel::Known(_) => known.push(p.rejection_score()),
            TrueLabel::Unknown => unknown.push(p.rejection_score()),
        }
    }
    Ok(vec![ScoreStats::of("known", &known), ScoreStats::of("unknown", &unknown)])
}

/// `subset,count,min,q1,median,q3,max,mean`; empty subsets write `NaN`.
pub fn write_stats_csv(stats: &[ScoreStats], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["subset", "count", "min", "q1", "median", "q3", "max", "mean"])?;
    for s in stats {
        let f = |v: f64| format!("{v:?}");
        w.write_record([
            s.subset.clone(),
            s.count.to_string(),
            f(s.min),
            f(s.q1),
            f(s.median),
            f(s.q3),
            f(s.max),
            f(s.mean),
        ])?;
    }
    w.flush().map_err(|e| OsdaError::io(path, e))
}
