//! Datasets, the known/unknown split protocol and dataset sources.
//!
//! A [`DomainDataset`] is immutable once built. Target datasets prepared for
//! training never expose their labels through [`Example::label`]; the ground
//! truth travels in a sealed [`GroundTruth`] that only the evaluation code
//! can open.

mod csv_io;
mod images;
mod split;
mod synth;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

pub use crate::eval::{GroundTruth, TrueLabel};
pub use csv_io::{read_csv, write_csv};
pub use images::{load_image_folder, LoadReport};
pub use split::{make_osda_split, OsdaSplit};
pub use synth::{synth_osda_benchmark, SynthConfig, SynthManifest};

use crate::error::{OsdaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Source,
    Target,
}

impl DomainTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::Source => "source",
            DomainTag::Target => "target",
        }
    }
}

impl std::str::FromStr for DomainTag {
    type Err = OsdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(DomainTag::Source),
            "target" => Ok(DomainTag::Target),
            other => Err(OsdaError::invalid(format!("unknown domain tag `{other}`"))),
        }
    }
}

/// One input instance. `data` is laid out row-major according to the owning
/// dataset's sample shape (C×H×W for images).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub data: Vec<f64>,
    pub label: Option<usize>,
    pub domain: DomainTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    name: String,
    tag: DomainTag,
    sample_shape: Vec<usize>,
    class_names: Vec<String>,
    examples: Vec<Example>,
    truth: Option<GroundTruth>,
}

impl DomainDataset {
    pub fn new(
        name: impl Into<String>,
        tag: DomainTag,
        sample_shape: Vec<usize>,
        class_names: Vec<String>,
        examples: Vec<Example>,
    ) -> Result<Self> {
        let name = name.into();
        let width: usize = sample_shape.iter().product();
        if sample_shape.is_empty() || width == 0 {
            return Err(OsdaError::invalid(format!(
                "dataset `{name}`: sample shape {sample_shape:?} is empty"
            )));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.domain != tag {
                return Err(OsdaError::invalid(format!(
                    "dataset `{name}`: example {i} is tagged {} but dataset is {}",
                    ex.domain.as_str(),
                    tag.as_str()
                )));
            }
            if ex.data.len() != width {
                return Err(OsdaError::Shape {
                    context: "dataset example",
                    expected: format!("{width} values"),
                    got: format!("{} values", ex.data.len()),
                });
            }
            if ex.data.iter().any(|v| !v.is_finite()) {
                return Err(OsdaError::NonFinite(format!("dataset `{name}` example {i}")));
            }
            match ex.label {
                None if tag == DomainTag::Source => {
                    return Err(OsdaError::invalid(format!(
                        "dataset `{name}`: source example {i} has no label"
                    )))
                }
                Some(l) if l >= class_names.len() => {
                    return Err(OsdaError::invalid(format!(
                        "dataset `{name}`: example {i} label {l} outside {} classes",
                        class_names.len()
                    )))
                }
                _ => {}
            }
        }
        Ok(Self {
            name,
            tag,
            sample_shape,
            class_names,
            examples,
            truth: None,
        })
    }

    pub(crate) fn with_truth(mut self, truth: GroundTruth) -> Self {
        debug_assert_eq!(truth.len(), self.examples.len());
        self.truth = Some(truth);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tag(&self) -> DomainTag {
        self.tag
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Whether hidden ground truth is attached. The labels themselves are
    /// reachable only through the evaluation module.
    pub fn has_ground_truth(&self) -> bool {
        self.truth.is_some()
    }

    pub(crate) fn ground_truth(&self) -> Option<&GroundTruth> {
        self.truth.as_ref()
    }

    /// Copy of the dataset with the hidden ground truth removed.
    pub fn strip_truth(&self) -> Self {
        Self {
            truth: None,
            ..self.clone()
        }
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// Stack the selected examples into a `(B, *sample_shape)` tensor.
    pub fn batch(&self, indices: &[usize], device: &Device) -> Result<Tensor> {
        let mut flat = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            let ex = self.examples.get(i).ok_or_else(|| {
                OsdaError::invalid(format!("index {i} out of range for `{}`", self.name))
            })?;
            flat.extend_from_slice(&ex.data);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.sample_shape);
        Ok(Tensor::from_vec(flat, shape, device)?)
    }

    pub fn to_tensor(&self, device: &Device) -> Result<Tensor> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch(&all, device)
    }

    /// Labels of the selected examples; every one must be labelled.
    pub fn batch_labels(&self, indices: &[usize]) -> Result<Vec<u32>> {
        indices
            .iter()
            .map(|&i| {
                self.examples[i]
                    .label
                    .map(|l| l as u32)
                    .ok_or_else(|| OsdaError::invalid(format!("example {i} is unlabelled")))
            })
            .collect()
    }
}

/// Map a raw dataset onto the compact known label space of `split`.
///
/// Source: unknown-class examples are dropped, labels become `0..|L_s|`.
/// Target: every example is kept, labels are removed from the examples and
/// sealed into the hidden ground truth (`Known(k)` or `Unknown`).
pub fn relabel_for_training(ds: &DomainDataset, split: &OsdaSplit) -> Result<DomainDataset> {
    split.validate_for(ds.class_names())?;
    let known_names = split.known_names(ds.class_names());
    match ds.tag() {
        DomainTag::Source => {
            let examples = ds
                .examples
                .iter()
                .filter_map(|ex| {
                    let label = ex.label.expect("source examples are labelled");
                    split.compact_index(label).map(|k| Example {
                        data: ex.data.clone(),
                        label: Some(k),
                        domain: ex.domain,
                    })
                })
                .collect();
            DomainDataset::new(
                ds.name(),
                DomainTag::Source,
                ds.sample_shape.clone(),
                known_names,
                examples,
            )
        }
        DomainTag::Target => {
            let mut truth = Vec::with_capacity(ds.len());
            let mut examples = Vec::with_capacity(ds.len());
            for (i, ex) in ds.examples.iter().enumerate() {
                let label = ex.label.ok_or_else(|| {
                    OsdaError::invalid(format!(
                        "target example {i} of `{}` carries no label to hide",
                        ds.name()
                    ))
                })?;
                truth.push(match split.compact_index(label) {
                    Some(k) => TrueLabel::Known(k),
                    None => TrueLabel::Unknown,
                });
                examples.push(Example {
                    data: ex.data.clone(),
                    label: None,
                    domain: DomainTag::Target,
                });
            }
            Ok(DomainDataset::new(
                ds.name(),
                DomainTag::Target,
                ds.sample_shape.clone(),
                known_names,
                examples,
            )?
            .with_truth(GroundTruth::seal(truth)))
        }
    }
}

/// Like [`relabel_for_training`], but a source example from an unknown class
/// is an error instead of being dropped. Use when the source is expected to
/// already be restricted to `L_s`.
pub fn relabel_strict(ds: &DomainDataset, split: &OsdaSplit) -> Result<DomainDataset> {
    if ds.tag() == DomainTag::Source {
        if let Some((i, ex)) = ds
            .examples
            .iter()
            .enumerate()
            .find(|(_, ex)| split.compact_index(ex.label.unwrap_or(usize::MAX)).is_none())
        {
            return Err(OsdaError::invalid(format!(
                "source example {i} of `{}` has unknown-class label {:?}; the source must share L_s",
                ds.name(),
                ex.label
            )));
        }
    }
    relabel_for_training(ds, split)
}
