use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{OsdaError, Result};
use crate::losses::{LossRow, LossWeights, NegativeSampling};
use crate::strategies::{AugmentConfig, GanConfig, GanStep, Strategy};

/// The phased schedule and every optimization hyperparameter of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainPlan {
    pub strategy: Strategy,
    pub pretrain_iters: usize,
    pub finetune_iters: usize,
    pub batch_size: usize,
    /// Base learning rate of newly instantiated parameters.
    pub lr_new: f64,
    /// Base learning rate of a pretrained extractor.
    pub lr_pretrained: f64,
    /// Per-group base learning rate overrides (`extractor`, `closed_head`,
    /// `open_head`).
    pub group_lr: BTreeMap<String, f64>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
    /// Inverse decay over the pretrain + fine-tune iterations.
    pub lr_gamma: f64,
    pub lr_power: f64,
    pub threshold: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub negative_sampling: NegativeSampling,
    /// Keep the closed head fixed while fine-tuning.
    pub freeze_closed_head_in_finetune: bool,
    /// Re-extract negatives every this many fine-tune iterations (original
    /// and augmentation only). Off by default.
    pub reextract_every: Option<usize>,
    /// Share of each negative batch taken from the pristine negatives when
    /// the strategy is generation.
    pub gen_pristine_fraction: f64,
    pub gan: GanConfig,
    pub augment: AugmentConfig,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            strategy: Strategy::Baseline,
            pretrain_iters: 5000,
            finetune_iters: 5000,
            batch_size: 36,
            lr_new: 0.01,
            lr_pretrained: 0.001,
            group_lr: BTreeMap::new(),
            momentum: 0.9,
            weight_decay: 5e-4,
            nesterov: true,
            lr_gamma: 10.0,
            lr_power: 0.75,
            threshold: 0.9,
            seed: 0,
            weights: LossWeights::default(),
            negative_sampling: NegativeSampling::Hardest,
            freeze_closed_head_in_finetune: false,
            reextract_every: None,
            gen_pristine_fraction: 0.0,
            gan: GanConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainPlan {
    pub fn for_strategy(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Default::default()
        }
    }

    /// GAN iterations actually run: only the generation strategy trains one.
    pub fn gan_iters(&self) -> usize {
        if self.strategy == Strategy::Generation {
            self.gan.iterations
        } else {
            0
        }
    }

    /// `(pretrain, gan, finetune)` iteration counts.
    pub fn phase_counts(&self) -> (usize, usize, usize) {
        (self.pretrain_iters, self.gan_iters(), self.finetune_iters)
    }

    /// Settings handed to the GAN: seed and penalty weights come from the plan.
    pub fn gan_config(&self) -> GanConfig {
        GanConfig {
            seed: self.seed,
            w_gen_ent: self.weights.w_gen_ent,
            w_gen_agree: self.weights.w_gen_agree,
            ..self.gan.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(OsdaError::invalid("batch_size must be positive"));
        }
        for (name, v) in [("lr_new", self.lr_new), ("lr_pretrained", self.lr_pretrained)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OsdaError::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        for (g, v) in &self.group_lr {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(OsdaError::invalid(format!("group_lr.{g} must be > 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(OsdaError::invalid("momentum must lie in [0, 1) and weight_decay be >= 0"));
        }
        if !(self.lr_gamma >= 0.0 && self.lr_power >= 0.0) {
            return Err(OsdaError::invalid("lr_gamma and lr_power must be >= 0"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(OsdaError::invalid(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        if !(0.0..=1.0).contains(&self.gen_pristine_fraction) {
            return Err(OsdaError::invalid("gen_pristine_fraction must lie in [0, 1]"));
        }
        match self.reextract_every {
            Some(0) => return Err(OsdaError::invalid("reextract_every must be positive")),
            Some(_) if self.strategy == Strategy::Generation => {
                return Err(OsdaError::invalid(
                    "periodic re-extraction is supported for original and augmentation only",
                ))
            }
            _ => {}
        }
        self.weights.validate()?;
        self.augment.validate()?;
        self.gan_config().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    /// `pretrain`, `extract`, `gan` or `finetune`.
    pub name: String,
    pub iterations: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionSummary {
    pub count: usize,
    pub threshold: f64,
    pub source_iteration: usize,
}

/// Everything a run produced apart from the model itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub plan: TrainPlan,
    /// In execution order.
    pub phases: Vec<PhaseRecord>,
    /// One row per optimizer step, pretrain rows first.
    pub losses: Vec<LossRow>,
    pub gan_losses: Vec<GanStep>,
    pub extraction: Option<ExtractionSummary>,
    /// The strategy needed negatives but none were extracted; fine-tuning
    /// ran as a plain continuation.
    pub fallback_to_baseline: bool,
    /// Set when the run continued from a phase-boundary checkpoint; the
    /// pretrain losses are then not part of `losses`.
    pub resumed_at: Option<usize>,
    pub optimizer_steps: usize,
    pub final_checksum: String,
    pub final_checkpoint: Option<String>,
}

impl RunRecord {
    /// Loss rows of one phase.
    pub fn curve(&self, phase: &str) -> Vec<&LossRow> {
        self.losses.iter().filter(|r| r.phase == phase).collect()
    }

    /// The record with wall-clock timings zeroed, for equality checks.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.phases.iter_mut().for_each(|p| p.seconds = 0.0);
        r
    }
}
