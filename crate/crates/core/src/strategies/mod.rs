//! The three ways of feeding extracted negatives back into training, behind
//! one batch-provider interface.

mod augment;
mod gan;

use candle_core::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use augment::{augment_image, augment_provider, gaussian_blur, AugmentConfig, AugmentProvider};
pub use gan::{
    gan_train, generation_provider, load_gan, save_gan, DataScale, Discriminator, GanConfig, GanOutcome, GanState, GanStep,
    GenerationProvider, Generator,
};

use crate::error::{OsdaError, Result};
use crate::miner::NegativeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Iteration-matched continuation without the negative constraint.
    Baseline,
    /// Pristine extracted negatives.
    Original,
    /// Randomly transformed negatives.
    Augmentation,
    /// Samples of a GAN trained on the negatives.
    Generation,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Baseline,
        Strategy::Original,
        Strategy::Augmentation,
        Strategy::Generation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Original => "original",
            Strategy::Augmentation => "augmentation",
            Strategy::Generation => "generation",
        }
    }

    /// Column title in result tables.
    pub fn table_name(self) -> &'static str {
        match self {
            Strategy::Baseline => "Reproducibility",
            Strategy::Original => "Original",
            Strategy::Augmentation => "Augmentation",
            Strategy::Generation => "Generation",
        }
    }

    pub fn uses_negatives(self) -> bool {
        self != Strategy::Baseline
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = OsdaError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                OsdaError::invalid(format!(
                    "unknown strategy `{s}` (expected baseline, original, augmentation or generation)"
                ))
            })
    }
}

/// Source of negative batches for the fine-tune phase. Replays exactly for
/// a fixed seed and sequence of calls.
pub trait NegativeBatchProvider {
    /// `(batch_size, *sample_shape)` tensor of finite values.
    fn next_batch(&mut self, batch_size: usize) -> Result<Tensor>;

    fn sample_shape(&self) -> &[usize];
}

/// Uniform draws with replacement from the pristine negatives.
pub struct OriginalProvider {
    negs: NegativeSet,
    rng: ChaCha8Rng,
}

pub fn original_provider(negs: NegativeSet, rng: ChaCha8Rng) -> Result<OriginalProvider> {
    if negs.is_empty() {
        return Err(OsdaError::invalid("cannot sample from an empty negative set"));
    }
    Ok(OriginalProvider { negs, rng })
}

impl OriginalProvider {
    pub(crate) fn draw(&mut self, batch_size: usize) -> Vec<usize> {
        (0..batch_size).map(|_| self.rng.random_range(0..self.negs.len())).collect()
    }

    pub(crate) fn negatives(&self) -> &NegativeSet {
        &self.negs
    }
}

impl NegativeBatchProvider for OriginalProvider {
    fn next_batch(&mut self, batch_size: usize) -> Result<Tensor> {
        let picks = self.draw(batch_size);
        self.negs.batch(&picks)
    }

    fn sample_shape(&self) -> &[usize] {
        self.negs.sample_shape()
    }
}

/// Concatenates a share of pristine negatives with generated ones.
pub struct MixedProvider<A, B> {
    pristine: A,
    generated: B,
    pristine_fraction: f64,
}

impl<A: NegativeBatchProvider, B: NegativeBatchProvider> MixedProvider<A, B> {
    pub fn new(pristine: A, generated: B, pristine_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pristine_fraction) {
            return Err(OsdaError::invalid(format!(
                "pristine fraction must lie in [0, 1], got {pristine_fraction}"
            )));
        }
        Ok(Self {
            pristine,
            generated,
            pristine_fraction,
        })
    }
}

impl<A: NegativeBatchProvider, B: NegativeBatchProvider> NegativeBatchProvider for MixedProvider<A, B> {
    fn next_batch(&mut self, batch_size: usize) -> Result<Tensor> {
        let n_p = (self.pristine_fraction * batch_size as f64).round() as usize;
        let parts = [
            self.pristine.next_batch(n_p)?,
            self.generated.next_batch(batch_size - n_p)?,
        ];
        Ok(Tensor::cat(&parts, 0)?)
    }

    fn sample_shape(&self) -> &[usize] {
        self.generated.sample_shape()
    }
}
