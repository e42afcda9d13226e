//! The phased schedule: pretrain, extract negatives, optionally train a GAN
//! on them, then fine-tune with the negative constraint added.

mod optim;
mod plan;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

pub use optim::{make_optimizer, InvSchedule, Sgd, GROUPS};
pub use plan::{ExtractionSummary, PhaseRecord, RunRecord, TrainPlan};

use crate::data::{DomainDataset, DomainTag};
use crate::error::{OsdaError, Result};
use crate::losses::{
    closed_ce, negative_constraint, open_entropy_min, ova_hard_negative, total_negative_loss, total_source_loss,
    total_target_loss, value, LossRow,
};
use crate::miner::{extract_negatives, NegativeSet};
use crate::model::{load_model, save_model, ModelConfig, ModelState};
use crate::ops::device;
use crate::seeds::{phase, RngBundle, Stream};
use crate::strategies::{
    augment_provider, gan_train, generation_provider, original_provider, save_gan, GanState, MixedProvider,
    NegativeBatchProvider, Strategy,
};

pub use crate::seeds::seed_everything;

/// Epoch-style sampler: a fresh permutation each time the data runs out.
struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(n: usize, mut rng: ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { order, pos: 0, rng }
    }

    fn next(&mut self, batch: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(batch);
        while out.len() < batch {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// A trained model with the optimizer state needed to continue it.
pub struct Boundary {
    pub model: ModelState,
    pub optimizer: Sgd,
    pub losses: Vec<LossRow>,
    pub phases: Vec<PhaseRecord>,
    /// Optimizer steps taken so far (the global iteration).
    pub iteration: usize,
    /// Reloaded from a checkpoint rather than trained in this process.
    pub resumed: bool,
}

pub struct RunOutput {
    pub record: RunRecord,
    pub model: ModelState,
    pub negatives: Option<NegativeSet>,
    pub gan: Option<GanState>,
}

fn check_inputs(plan: &TrainPlan, source: &DomainDataset, target: &DomainDataset) -> Result<()> {
    plan.validate()?;
    if source.tag() != DomainTag::Source || target.tag() != DomainTag::Target {
        return Err(OsdaError::invalid("run needs a source and a target dataset, in that order"));
    }
    if source.sample_shape() != target.sample_shape() {
        return Err(OsdaError::Shape {
            context: "source vs target samples",
            expected: format!("{:?}", source.sample_shape()),
            got: format!("{:?}", target.sample_shape()),
        });
    }
    if source.class_names() != target.class_names() {
        return Err(OsdaError::invalid(
            "source and target must be relabeled with the same split before training",
        ));
    }
    if target.examples().iter().any(|e| e.label.is_some()) {
        return Err(OsdaError::invalid("target examples carry labels; relabel the target before training"));
    }
    if plan.pretrain_iters + plan.finetune_iters > 0 && (source.is_empty() || target.is_empty()) {
        return Err(OsdaError::invalid("training needs non-empty source and target datasets"));
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

/// One line of the progress log.
pub fn progress_line(r: &LossRow) -> String {
    format!(
        "phase={} iter={} closed_ce={} ova_hncs={} ent_min={} neg_constraint={} total={:.4}",
        r.phase,
        r.iter,
        fmt_opt(r.closed_ce),
        fmt_opt(r.ova_hncs),
        fmt_opt(r.ent_min),
        fmt_opt(r.neg_constraint),
        r.total
    )
}

struct Ctx<'a> {
    plan: &'a TrainPlan,
    source: &'a DomainDataset,
    target: &'a DomainDataset,
    checkpoint_dir: Option<&'a Path>,
}

impl Ctx<'_> {
    fn save(&self, model: &ModelState, opt: &Sgd, iteration: usize, name: &str, phase: &str) -> Result<Option<PathBuf>> {
        let Some(dir) = self.checkpoint_dir else { return Ok(None) };
        let path = dir.join(name);
        save_model(
            &path,
            model,
            self.plan.seed,
            iteration,
            &opt.state()?,
            serde_json::json!({ "phase": phase, "strategy": self.plan.strategy }),
        )?;
        Ok(Some(path))
    }

    /// One optimizer step on a source batch, a target batch and, when
    /// given, a batch of negatives.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        model: &ModelState,
        opt: &mut Sgd,
        src_idx: &[usize],
        tgt_idx: &[usize],
        negatives: Option<&candle_core::Tensor>,
        t: usize,
        phase_name: &str,
    ) -> Result<LossRow> {
        let dev = device();
        let w = &self.plan.weights;
        let hs = model.heads(&self.source.batch(src_idx, &dev)?)?;
        let labels = self.source.batch_labels(src_idx)?;
        let ce = closed_ce(&hs.closed_probs, &labels)?;
        let ova = ova_hard_negative(&hs.open_known, &labels, self.plan.negative_sampling)?;
        let ht = model.heads(&self.target.batch(tgt_idx, &dev)?)?;
        let ent = open_entropy_min(&ht.open_known)?;

        let check = |r: Result<candle_core::Tensor>| {
            r.map_err(|e| match e {
                OsdaError::NonFinite(detail) => OsdaError::Diverged {
                    phase: phase_name.to_string(),
                    iteration: t,
                    detail,
                },
                other => other,
            })
        };
        let mut total = (check(total_source_loss(&ce, &ova))? + check(total_target_loss(&ent, w))?)?;
        let mut neg_value = None;
        if let Some(x) = negatives {
            let hn = model.heads(x)?;
            let nc = negative_constraint(&hn.open_known)?;
            let weighted = check(total_negative_loss(&nc, w))?;
            neg_value = Some(value(&nc)?);
            // a zero weight leaves the graph, and so the update, untouched
            if w.lambda_neg != 0.0 {
                total = (total + weighted)?;
            }
        }
        let row = LossRow {
            iter: t,
            phase: phase_name.to_string(),
            closed_ce: Some(value(&ce)?),
            ova_hncs: Some(value(&ova)?),
            ent_min: Some(value(&ent)?),
            neg_constraint: neg_value,
            gen_ent: None,
            gen_agree: None,
            total: value(&total)?,
        };
        if !row.total.is_finite() {
            return Err(OsdaError::Diverged {
                phase: phase_name.to_string(),
                iteration: t,
                detail: format!("total loss {}", row.total),
            });
        }
        opt.step(model, &total.backward()?, t)?;
        if (t + 1) % 100 == 0 {
            log::info!("{}", progress_line(&row));
        }
        Ok(row)
    }

    fn diverged(&self, model: &ModelState, opt: &Sgd, t: usize, err: OsdaError) -> OsdaError {
        // the failing step never updated the model, so this is the last finite state
        match self.save(model, opt, t, "diverged.ckpt", "diverged") {
            Ok(Some(p)) => log::error!("{err}; last finite state saved to {}", p.display()),
            Ok(None) => log::error!("{err}"),
            Err(e) => log::error!("{err}; saving the last state failed: {e}"),
        }
        err
    }
}

/// Phase 1: initialise the model and run the pretrain iterations. With a
/// checkpoint directory, the boundary state is written to `pretrain.ckpt`.
pub fn pretrain(
    plan: &TrainPlan,
    model_cfg: &ModelConfig,
    source: &DomainDataset,
    target: &DomainDataset,
    checkpoint_dir: Option<&Path>,
) -> Result<Boundary> {
    check_inputs(plan, source, target)?;
    let ctx = Ctx {
        plan,
        source,
        target,
        checkpoint_dir,
    };
    let bundle = RngBundle::new(plan.seed);
    let num_known = source.class_names().len();
    let model = ModelState::new(
        model_cfg,
        source.sample_shape(),
        num_known,
        &mut bundle.stream(Stream::Init, phase::PRETRAIN, 0),
    )?;
    let mut opt = make_optimizer(&model, plan)?;
    let start = Instant::now();
    let mut src = BatchSampler::new(source.len(), bundle.stream(Stream::DataShuffle, phase::PRETRAIN, 0));
    let mut tgt = BatchSampler::new(target.len(), bundle.stream(Stream::DataShuffle, phase::PRETRAIN, 1));
    let mut losses = Vec::with_capacity(plan.pretrain_iters);
    for t in 0..plan.pretrain_iters {
        let (si, ti) = (src.next(plan.batch_size), tgt.next(plan.batch_size));
        match ctx.step(&model, &mut opt, &si, &ti, None, t, "pretrain") {
            Ok(row) => losses.push(row),
            Err(e @ OsdaError::Diverged { .. }) => return Err(ctx.diverged(&model, &opt, t, e)),
            Err(e) => return Err(e),
        }
    }
    let phases = vec![PhaseRecord {
        name: "pretrain".into(),
        iterations: plan.pretrain_iters,
        seconds: start.elapsed().as_secs_f64(),
    }];
    ctx.save(&model, &opt, plan.pretrain_iters, "pretrain.ckpt", "pretrain")?;
    Ok(Boundary {
        model,
        optimizer: opt,
        losses,
        phases,
        iteration: plan.pretrain_iters,
        resumed: false,
    })
}

/// Reload the state written by [`pretrain`] to continue a run.
pub fn load_boundary(path: impl AsRef<Path>, plan: &TrainPlan, num_known: usize) -> Result<Boundary> {
    let (model, header, aux) = load_model(path, Some(num_known), true)?;
    let mut optimizer = make_optimizer(&model, plan)?;
    optimizer.load_state(&aux)?;
    if header.iteration != plan.pretrain_iters || optimizer.steps() != header.iteration {
        return Err(OsdaError::Checkpoint(format!(
            "checkpoint is at iteration {} ({} optimizer steps), the plan's boundary is {}",
            header.iteration,
            optimizer.steps(),
            plan.pretrain_iters
        )));
    }
    if header.seed != plan.seed {
        return Err(OsdaError::Checkpoint(format!(
            "checkpoint seed {} differs from plan seed {}",
            header.seed, plan.seed
        )));
    }
    Ok(Boundary {
        model,
        optimizer,
        losses: Vec::new(),
        phases: Vec::new(),
        iteration: header.iteration,
        resumed: true,
    })
}

fn build_provider(
    plan: &TrainPlan,
    negs: &NegativeSet,
    gan: Option<&GanState>,
    bundle: &RngBundle,
    sub: u8,
) -> Result<Box<dyn NegativeBatchProvider>> {
    let picks = || bundle.stream(Stream::NegativeSampling, phase::FINETUNE, sub);
    Ok(match plan.strategy {
        Strategy::Baseline => unreachable!("baseline draws no negatives"),
        Strategy::Original => Box::new(original_provider(negs.clone(), picks())?),
        Strategy::Augmentation => Box::new(augment_provider(
            negs.clone(),
            &plan.augment,
            picks(),
            bundle.stream(Stream::Augmentation, phase::FINETUNE, sub),
        )?),
        Strategy::Generation => {
            let gan = gan.expect("generation trains a GAN first");
            let generated = generation_provider(gan, bundle.stream(Stream::GanLatent, phase::FINETUNE, sub))?;
            if plan.gen_pristine_fraction > 0.0 {
                Box::new(MixedProvider::new(
                    original_provider(negs.clone(), picks())?,
                    generated,
                    plan.gen_pristine_fraction,
                )?)
            } else {
                Box::new(generated)
            }
        }
    })
}

/// Phases 2-4 from a pretrain boundary: extraction, the optional GAN and
/// fine-tuning.
pub fn finish(
    plan: &TrainPlan,
    source: &DomainDataset,
    target: &DomainDataset,
    boundary: Boundary,
    checkpoint_dir: Option<&Path>,
) -> Result<RunOutput> {
    check_inputs(plan, source, target)?;
    let ctx = Ctx {
        plan,
        source,
        target,
        checkpoint_dir,
    };
    let bundle = RngBundle::new(plan.seed);
    let Boundary {
        model,
        optimizer: mut opt,
        mut losses,
        mut phases,
        iteration,
        resumed,
    } = boundary;
    let resumed_at = resumed.then_some(iteration);

    // phase 2
    let start = Instant::now();
    let mut negatives = None;
    let mut extraction = None;
    if plan.strategy.uses_negatives() {
        let set = extract_negatives(&model.snapshot()?, target, plan.threshold, iteration)?;
        log::info!(
            "extracted {} negatives from {} target samples at threshold {}",
            set.len(),
            target.len(),
            plan.threshold
        );
        extraction = Some(ExtractionSummary {
            count: set.len(),
            threshold: plan.threshold,
            source_iteration: iteration,
        });
        negatives = Some(set);
        phases.push(PhaseRecord {
            name: "extract".into(),
            iterations: 0,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    let fallback = negatives.as_ref().is_some_and(NegativeSet::is_empty);
    if fallback {
        log::warn!(
            "FALLBACK: no target sample exceeds threshold {}; strategy `{}` continues as baseline",
            plan.threshold,
            plan.strategy
        );
    }

    // phase 3
    let mut gan = None;
    let mut gan_losses = Vec::new();
    if plan.strategy == Strategy::Generation && !fallback {
        let start = Instant::now();
        let negs = negatives.as_ref().expect("extracted above");
        let snapshot = model.snapshot()?;
        let before = snapshot.checksum()?;
        let out = gan_train(negs, &snapshot, &plan.gan_config())?;
        debug_assert_eq!(snapshot.checksum()?, before);
        if let Some(dir) = checkpoint_dir {
            save_gan(dir, &out.state, out.history.len())?;
        }
        if let Some(detail) = out.diverged {
            return Err(OsdaError::Diverged {
                phase: "gan".into(),
                iteration: out.history.len(),
                detail,
            });
        }
        phases.push(PhaseRecord {
            name: "gan".into(),
            iterations: out.history.len(),
            seconds: start.elapsed().as_secs_f64(),
        });
        gan_losses = out.history;
        gan = Some(out.state);
    }

    // phase 4
    let start = Instant::now();
    if plan.freeze_closed_head_in_finetune {
        opt.freeze_group("closed_head", true)?;
    }
    let mut provider = match &negatives {
        Some(n) if !fallback => Some(build_provider(plan, n, gan.as_ref(), &bundle, 0)?),
        _ => None,
    };
    let mut src = BatchSampler::new(source.len(), bundle.stream(Stream::DataShuffle, phase::FINETUNE, 0));
    let mut tgt = BatchSampler::new(target.len(), bundle.stream(Stream::DataShuffle, phase::FINETUNE, 1));
    for j in 0..plan.finetune_iters {
        let t = iteration + j;
        if let (Some(every), true) = (plan.reextract_every, provider.is_some()) {
            if j > 0 && j % every == 0 {
                let set = extract_negatives(&model.snapshot()?, target, plan.threshold, t)?;
                log::info!("re-extracted {} negatives at iteration {t}", set.len());
                if !set.is_empty() {
                    let sub = u8::try_from(j / every).unwrap_or(u8::MAX);
                    provider = Some(build_provider(plan, &set, None, &bundle, sub)?);
                    negatives = Some(set);
                }
            }
        }
        let (si, ti) = (src.next(plan.batch_size), tgt.next(plan.batch_size));
        let neg_batch = match provider.as_mut() {
            Some(p) => Some(p.next_batch(plan.batch_size)?),
            None => None,
        };
        match ctx.step(&model, &mut opt, &si, &ti, neg_batch.as_ref(), t, "finetune") {
            Ok(row) => losses.push(row),
            Err(e @ OsdaError::Diverged { .. }) => return Err(ctx.diverged(&model, &opt, t, e)),
            Err(e) => return Err(e),
        }
    }
    phases.push(PhaseRecord {
        name: "finetune".into(),
        iterations: plan.finetune_iters,
        seconds: start.elapsed().as_secs_f64(),
    });
    let total = iteration + plan.finetune_iters;
    let final_checkpoint = ctx
        .save(&model, &opt, total, "final.ckpt", "finetune")?
        .map(|p| p.display().to_string());
    let record = RunRecord {
        plan: plan.clone(),
        phases,
        losses,
        gan_losses,
        extraction,
        fallback_to_baseline: fallback,
        resumed_at,
        optimizer_steps: opt.steps(),
        final_checksum: model.checksum()?,
        final_checkpoint,
    };
    Ok(RunOutput {
        record,
        model,
        negatives,
        gan,
    })
}

/// The full schedule on relabeled datasets. Checkpoints (`pretrain.ckpt`,
/// GAN components, `final.ckpt`) go to `checkpoint_dir` when given.
pub fn run(
    plan: &TrainPlan,
    model_cfg: &ModelConfig,
    source: &DomainDataset,
    target: &DomainDataset,
    checkpoint_dir: Option<&Path>,
) -> Result<RunOutput> {
    let boundary = pretrain(plan, model_cfg, source, target, checkpoint_dir)?;
    finish(plan, source, target, boundary, checkpoint_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{relabel_for_training, synth_osda_benchmark, SynthConfig};
    use crate::eval::{evaluate, SubsetAveraging};

    fn data() -> (DomainDataset, DomainDataset) {
        let (s, t, split) = synth_osda_benchmark(&SynthConfig::default()).unwrap();
        (relabel_for_training(&s, &split).unwrap(), relabel_for_training(&t, &split).unwrap())
    }

    fn short(strategy: Strategy) -> TrainPlan {
        TrainPlan {
            strategy,
            pretrain_iters: 60,
            finetune_iters: 40,
            gan: crate::strategies::GanConfig {
                iterations: 20,
                ..Default::default()
            },
            augment: crate::strategies::AugmentConfig {
                vector_affine: true,
                ..Default::default()
            },
            threshold: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn sampler_covers_each_epoch() {
        let mut s = BatchSampler::new(10, RngBundle::new(0).stream(Stream::DataShuffle, 0, 0));
        let mut seen = s.next(10);
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(s.next(25).len(), 25);
        let a = BatchSampler::new(10, RngBundle::new(7).stream(Stream::DataShuffle, 0, 0)).next(10);
        let b = BatchSampler::new(10, RngBundle::new(8).stream(Stream::DataShuffle, 0, 0)).next(10);
        assert_ne!(a, b);
    }

    #[test]
    fn degenerate_schedule_leaves_model_untrained() {
        let (s, t) = data();
        let plan = TrainPlan {
            pretrain_iters: 0,
            finetune_iters: 0,
            ..Default::default()
        };
        let out = run(&plan, &ModelConfig::default(), &s, &t, None).unwrap();
        assert!(out.record.losses.is_empty());
        assert_eq!(out.record.optimizer_steps, 0);
        let fresh = ModelState::new(
            &ModelConfig::default(),
            &[2],
            4,
            &mut RngBundle::new(0).stream(Stream::Init, phase::PRETRAIN, 0),
        )
        .unwrap();
        assert_eq!(out.record.final_checksum, fresh.checksum().unwrap());
    }

    #[test]
    fn every_strategy_completes_and_counts_steps() {
        let (s, t) = data();
        for strategy in Strategy::ALL {
            let plan = short(strategy);
            let out = run(&plan, &ModelConfig::default(), &s, &t, None).unwrap();
            let r = &out.record;
            assert_eq!(r.optimizer_steps, 100, "{strategy}");
            assert_eq!(r.curve("pretrain").len(), 60);
            assert_eq!(r.curve("finetune").len(), 40);
            let names: Vec<&str> = r.phases.iter().map(|p| p.name.as_str()).collect();
            let expected: &[&str] = match strategy {
                Strategy::Baseline => &["pretrain", "finetune"],
                Strategy::Generation if !r.fallback_to_baseline => &["pretrain", "extract", "gan", "finetune"],
                _ => &["pretrain", "extract", "finetune"],
            };
            assert_eq!(names, expected, "{strategy}");
            let m = evaluate(&out.model.snapshot().unwrap(), &t, SubsetAveraging::Macro).unwrap();
            assert!((0.0..=1.0).contains(&m.h_score));
        }
    }

    #[test]
    fn zero_lambda_original_matches_baseline() {
        let (s, t) = data();
        let base = run(&short(Strategy::Baseline), &ModelConfig::default(), &s, &t, None).unwrap();
        let mut plan = short(Strategy::Original);
        plan.weights.lambda_neg = 0.0;
        let orig = run(&plan, &ModelConfig::default(), &s, &t, None).unwrap();
        assert!(!orig.record.fallback_to_baseline);
        assert_eq!(base.record.final_checksum, orig.record.final_checksum);
        for (a, b) in base.record.losses.iter().zip(&orig.record.losses) {
            assert_eq!((a.closed_ce, a.ova_hncs, a.ent_min, a.total), (b.closed_ce, b.ova_hncs, b.ent_min, b.total));
        }
    }

    #[test]
    fn tiny_threshold_miss_falls_back() {
        let (s, t) = data();
        let plan = TrainPlan {
            threshold: 0.999_999,
            ..short(Strategy::Original)
        };
        let out = run(&plan, &ModelConfig::default(), &s, &t, None).unwrap();
        assert!(out.record.fallback_to_baseline);
        assert_eq!(out.record.extraction.as_ref().unwrap().count, 0);
        assert!(out.record.curve("finetune").iter().all(|r| r.neg_constraint.is_none()));
    }

    #[test]
    fn resume_from_boundary_is_exact() {
        let (s, t) = data();
        let dir = tempfile::tempdir().unwrap();
        let plan = short(Strategy::Augmentation);
        let full = run(&plan, &ModelConfig::default(), &s, &t, Some(dir.path())).unwrap();
        let boundary = load_boundary(dir.path().join("pretrain.ckpt"), &plan, 4).unwrap();
        let resumed = finish(&plan, &s, &t, boundary, None).unwrap();
        assert_eq!(resumed.record.final_checksum, full.record.final_checksum);
        assert_eq!(resumed.record.resumed_at, Some(60));
        assert_eq!(resumed.record.curve("finetune"), full.record.curve("finetune"));
    }

    #[test]
    fn labelled_target_is_rejected() {
        let (s, t, split) = synth_osda_benchmark(&SynthConfig::default()).unwrap();
        let s = relabel_for_training(&s, &split).unwrap();
        assert!(run(&short(Strategy::Baseline), &ModelConfig::default(), &s, &t, None).is_err());
    }
}
