//! The `osda` command line: dataset export, single runs, sweeps, standalone
//! extraction / GAN training / evaluation, and report rendering.
//!
//! A run writes `<out>/<task>/<strategy>/<seed>/`:
//!
//! | file | content |
//! | --- | --- |
//! | `config.toml` | the experiment config restricted to this cell |
//! | `pretrain_losses.csv` | pretrain rows, written at the phase boundary |
//! | `losses.csv` | every phase, one row per iteration |
//! | `gan_losses.csv` | discriminator and generator terms (generation only) |
//! | `negatives.csv` | the extracted negative manifest |
//! | `score_stats.csv` | rejection-score quartiles at the boundary |
//! | `samples.csv` | pristine / augmented / generated negatives (plus `samples.png` for images) |
//! | `checkpoints/` | `pretrain.ckpt`, `final.ckpt`, GAN components |
//! | `progress.log` | one line per 100 iterations |
//! | `record.json` | the full run record, timings included |
//! | `metrics.json` | metrics and plan echo; written last and marks the run complete |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Task, TaskData};
use crate::data::{write_csv, SynthManifest};
use crate::error::{OsdaError, Result};
use crate::eval::{aggregate, evaluate, reference_fixtures, render_tables, MetricsReport, ResultGrid, TableCell};
use crate::losses::{read_loss_csv, write_loss_csv, LossRow};
use crate::miner::{extract_negatives, rejection_score_stats, write_stats_csv, NegativeSet};
use crate::model::load_model;
use crate::ops;
use crate::plots;
use crate::seeds::{phase, RngBundle, Stream};
use crate::strategies::{augment_provider, gan_train, save_gan, GanState, GanStep, NegativeBatchProvider, Strategy};
use crate::trainer::{self, load_boundary, progress_line, RunOutput};

/// Samples per kind in sample grids.
const GRID_VECTORS: usize = 64;
const GRID_IMAGES: usize = 16;

#[derive(Debug, Parser)]
#[command(name = "osda", version, about = "Open-set domain adaptation with mined target negatives")]
pub struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root. Falls back to the config's `out_dir`, then $OSDA_OUT, then `run`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Redo work whose outputs already exist.
    #[arg(long, global = true)]
    pub force: bool,
    /// Also render PNG figures (scatter of vector samples, score box plots).
    #[arg(long, global = true)]
    pub render_plots: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CellArgs {
    /// SOURCE:TARGET; defaults to the config's first task.
    #[arg(long)]
    pub task: Option<String>,
    /// Defaults to the config's first seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Export the synthetic benchmark as CSV plus a manifest.
    Synth,
    /// Train and evaluate one task / strategy / seed.
    Run {
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        /// Stop at the pretrain / fine-tune boundary; a later `run` resumes.
        #[arg(long)]
        stop_after_pretrain: bool,
    },
    /// Every task × strategy × seed of the config, then the report.
    Sweep,
    /// Extract negatives with a trained checkpoint.
    Extract {
        #[command(flatten)]
        cell: CellArgs,
        /// Model checkpoint; defaults to the run's pretrain checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Run whose checkpoint is the default.
        #[arg(long, value_parser = parse_strategy, default_value = "original")]
        strategy: Strategy,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Train the negative GAN against a frozen checkpoint.
    GanTrain {
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Negative manifest to train on instead of a fresh extraction.
        #[arg(long)]
        negatives: Option<PathBuf>,
    },
    /// Score a checkpoint on a task's target domain; prints metrics JSON.
    Evaluate {
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Aggregate finished runs into tables, stats and sample grids.
    Report,
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse().map_err(|e: OsdaError| e.to_string())
}

/// Options shared by every command.
#[derive(Debug, Clone)]
pub struct Options {
    pub root: PathBuf,
    pub force: bool,
    pub render_plots: bool,
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    main_from(std::env::args_os())
}

pub fn main_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let opts = Options {
        root: cfg.out_root(cli.out.as_deref()),
        force: cli.force,
        render_plots: cli.render_plots,
    };
    match &cli.command {
        Command::Synth => {
            let dir = opts.root.join("synth");
            let m = cmd_synth(&cfg, &dir)?;
            println!("wrote {} and {} to {}", m.source_file, m.target_file, dir.display());
        }
        Command::Run {
            cell,
            strategy,
            stop_after_pretrain,
        } => {
            let (task, seed) = resolve_cell(&cfg, cell)?;
            let data = cfg.load_task(&task)?;
            let outcome = run_cell(&cfg, &task, &data, *strategy, seed, &opts, *stop_after_pretrain)?;
            println!("{}", outcome.describe());
        }
        Command::Sweep => {
            let summary = cmd_sweep(&cfg, &opts)?;
            println!(
                "sweep: {} trained, {} skipped, {} failed",
                summary.completed.len(),
                summary.skipped.len(),
                summary.failed.len()
            );
            if !summary.failed.is_empty() {
                for f in &summary.failed {
                    eprintln!("failed {}: {}", f.cell, f.error);
                }
                return Err(OsdaError::Diverged {
                    phase: "sweep".into(),
                    iteration: 0,
                    detail: format!("{} cells failed", summary.failed.len()),
                });
            }
        }
        Command::Extract {
            cell,
            checkpoint,
            strategy,
            threshold,
        } => {
            let (task, seed) = resolve_cell(&cfg, cell)?;
            let ckpt = checkpoint
                .clone()
                .unwrap_or_else(|| cell_dir(&opts.root, &task, *strategy, seed).join("checkpoints/pretrain.ckpt"));
            let dir = opts.root.join(task.dir_name()).join("extract").join(seed.to_string());
            let negs = cmd_extract(&cfg, &task, &ckpt, threshold.unwrap_or(cfg.train.threshold), &dir, &opts)?;
            println!("{} negatives written to {}", negs.len(), dir.join("negatives.csv").display());
        }
        Command::GanTrain {
            cell,
            checkpoint,
            negatives,
        } => {
            let (task, seed) = resolve_cell(&cfg, cell)?;
            let ckpt = checkpoint.clone().unwrap_or_else(|| {
                cell_dir(&opts.root, &task, Strategy::Generation, seed).join("checkpoints/pretrain.ckpt")
            });
            let dir = opts.root.join(task.dir_name()).join("gan").join(seed.to_string());
            let last = cmd_gan_train(&cfg, &task, seed, &ckpt, negatives.as_deref(), &dir, &opts)?;
            println!(
                "GAN trained for {} iterations; final D(fake) {:.3}, agreement {:.4}; saved to {}",
                last.iter + 1,
                last.d_fake,
                last.gen_agree,
                dir.display()
            );
        }
        Command::Evaluate { cell, checkpoint } => {
            let (task, _) = resolve_cell(&cfg, cell)?;
            let data = cfg.load_task(&task)?;
            let (model, _, _) = load_model(checkpoint, Some(data.split.num_known()), false)?;
            let m = evaluate(&model, &data.target, cfg.averaging)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
        }
        Command::Report => {
            let r = cmd_report(&cfg, &opts)?;
            println!("{}", r.markdown);
        }
    }
    Ok(())
}

fn resolve_cell(cfg: &ExperimentConfig, cell: &CellArgs) -> Result<(Task, u64)> {
    let task: Task = match &cell.task {
        Some(t) => t.parse()?,
        None => cfg.parsed_tasks()?.remove(0),
    };
    let mut check = cfg.clone();
    check.tasks = vec![task.to_string()];
    check.validate()?;
    Ok((task, cell.seed.unwrap_or(cfg.seeds[0])))
}

pub fn cell_dir(root: &Path, task: &Task, strategy: Strategy, seed: u64) -> PathBuf {
    root.join(task.dir_name()).join(strategy.as_str()).join(seed.to_string())
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| OsdaError::io(p, e))
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|e| OsdaError::io(p, e))
}

/// Write the synthetic benchmark to `dir`.
pub fn cmd_synth(cfg: &ExperimentConfig, dir: &Path) -> Result<SynthManifest> {
    let crate::config::DatasetSpec::Synthetic { synth } = &cfg.dataset else {
        return Err(OsdaError::Config("synth needs dataset.kind = \"synthetic\"".into()));
    };
    let (s, t, split) = crate::data::synth_osda_benchmark(synth)?;
    create_dir(dir)?;
    write_csv(&s, dir.join("source.csv"))?;
    write_csv(&t, dir.join("target.csv"))?;
    let m = SynthManifest {
        config: synth.clone(),
        class_names: s.class_names().to_vec(),
        split,
        source_file: "source.csv".into(),
        target_file: "target.csv".into(),
        source_count: s.len(),
        target_count: t.len(),
    };
    write_text(&dir.join("manifest.json"), &serde_json::to_string_pretty(&m)?)?;
    Ok(m)
}

/// The deterministic per-run result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub task: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub metrics: MetricsReport,
    pub extracted: Option<usize>,
    pub fallback_to_baseline: bool,
    pub final_checksum: String,
    pub plan: trainer::TrainPlan,
}

#[derive(Debug)]
pub enum CellOutcome {
    Completed(Box<RunMetrics>),
    /// `metrics.json` already existed.
    Skipped(PathBuf),
    StoppedAtBoundary(PathBuf),
}

impl CellOutcome {
    pub fn describe(&self) -> String {
        match self {
            CellOutcome::Completed(m) => format!(
                "{} {} seed {}: Acc {:.4}  H-score {:.4}  (known {:.4}, unknown {:.4})",
                m.task, m.strategy, m.seed, m.metrics.acc, m.metrics.h_score, m.metrics.acc_known, m.metrics.acc_unknown
            ),
            CellOutcome::Skipped(d) => format!("already complete: {} (use --force to redo)", d.display()),
            CellOutcome::StoppedAtBoundary(d) => format!("stopped at the phase boundary: {}", d.display()),
        }
    }
}

fn cell_config(cfg: &ExperimentConfig, task: &Task, strategy: Strategy, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        tasks: vec![task.to_string()],
        strategies: vec![strategy],
        seeds: vec![seed],
        out_dir: None,
        ..cfg.clone()
    }
}

fn gan_rows(steps: &[GanStep]) -> Vec<LossRow> {
    steps
        .iter()
        .map(|s| LossRow {
            iter: s.iter,
            phase: "gan".into(),
            gen_ent: Some(s.gen_ent),
            gen_agree: Some(s.gen_agree),
            total: s.g_total,
            ..Default::default()
        })
        .collect()
}

fn gan_progress(s: &GanStep) -> String {
    format!(
        "phase=gan iter={} d_loss={:.4} g_adv={:.4} gen_ent={:.4} gen_agree={:.4} d_fake={:.4}",
        s.iter, s.d_loss, s.g_adv, s.gen_ent, s.gen_agree, s.d_fake
    )
}

fn write_gan_csv(steps: &[GanStep], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in steps {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| OsdaError::io(path, e))
}

fn flat_rows(t: &candle_core::Tensor) -> Result<Vec<Vec<f64>>> {
    ops::rows(&t.flatten_from(1)?)
}

/// Pristine, augmented and generated negatives for the sample grid.
fn sample_groups(
    strategy: Strategy,
    plan: &trainer::TrainPlan,
    negs: Option<&NegativeSet>,
    gan: Option<&GanState>,
) -> Result<Vec<(String, Vec<Vec<f64>>)>> {
    let Some(negs) = negs.filter(|n| !n.is_empty()) else { return Ok(Vec::new()) };
    let n = if negs.sample_shape().len() == 3 { GRID_IMAGES } else { GRID_VECTORS };
    let bundle = RngBundle::new(plan.seed);
    let mut groups = vec![("pristine".to_string(), negs.samples().iter().take(n).cloned().collect())];
    match strategy {
        Strategy::Augmentation => {
            let mut p = augment_provider(
                negs.clone(),
                &plan.augment,
                bundle.stream(Stream::NegativeSampling, phase::EXTRACT, 9),
                bundle.stream(Stream::Augmentation, phase::EXTRACT, 9),
            )?;
            groups.push(("augmented".into(), flat_rows(&p.next_batch(n)?)?));
        }
        Strategy::Generation => {
            if let Some(g) = gan {
                let x = g.sample(n, &mut bundle.stream(Stream::GanLatent, phase::EXTRACT, 9))?;
                groups.push(("generated".into(), flat_rows(&x)?));
            }
        }
        _ => {}
    }
    Ok(groups)
}

fn write_sample_grid(
    dir: &Path,
    groups: &[(String, Vec<Vec<f64>>)],
    shape: &[usize],
    target: Option<&crate::data::DomainDataset>,
    opts: &Options,
) -> Result<()> {
    if groups.is_empty() {
        return Ok(());
    }
    let refs: Vec<plots::SampleGroup> = groups.iter().map(|(k, r)| (k.as_str(), r.as_slice())).collect();
    plots::write_samples_csv(&refs, dir.join("samples.csv"))?;
    if let [c, h, w] = shape {
        let per_row = groups.iter().map(|g| g.1.len()).max().unwrap_or(1);
        plots::write_image_grid(&refs, (*c, *h, *w), per_row, dir.join("samples.png"))?;
    } else if opts.render_plots {
        let tgt: Vec<Vec<f64>> = target.map_or_else(Vec::new, |t| t.examples().iter().map(|e| e.data.clone()).collect());
        let mut all = vec![("target", tgt.as_slice())];
        all.extend(refs);
        plots::write_scatter(&all, dir.join("samples_scatter.png"))?;
    }
    Ok(())
}

/// Train and evaluate one cell, resuming from its pretrain checkpoint when
/// one exists.
pub fn run_cell(
    cfg: &ExperimentConfig,
    task: &Task,
    data: &TaskData,
    strategy: Strategy,
    seed: u64,
    opts: &Options,
    stop_after_pretrain: bool,
) -> Result<CellOutcome> {
    let dir = cell_dir(&opts.root, task, strategy, seed);
    if opts.force && dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| OsdaError::io(&dir, e))?;
    }
    if dir.join("metrics.json").exists() {
        return Ok(CellOutcome::Skipped(dir));
    }
    let ckpt = dir.join("checkpoints");
    create_dir(&ckpt)?;

    let snapshot = cell_config(cfg, task, strategy, seed);
    let config_path = dir.join("config.toml");
    if config_path.exists() {
        let existing = ExperimentConfig::load(&config_path)?;
        if existing != snapshot {
            return Err(OsdaError::Config(format!(
                "{} holds a run with a different config; pass --force to replace it",
                dir.display()
            )));
        }
    } else {
        write_text(&config_path, &snapshot.to_toml()?)?;
    }

    let plan = cfg.plan_for(strategy, seed);
    let boundary_ckpt = ckpt.join("pretrain.ckpt");
    let pre_losses = dir.join("pretrain_losses.csv");
    let mut boundary = if boundary_ckpt.exists() && pre_losses.exists() {
        log::info!("resuming {} from {}", dir.display(), boundary_ckpt.display());
        let mut b = load_boundary(&boundary_ckpt, &plan, data.split.num_known())?;
        b.losses = read_loss_csv(&pre_losses)?;
        b
    } else {
        let b = trainer::pretrain(&plan, &cfg.model, &data.source, &data.target, Some(&ckpt))?;
        write_loss_csv(&b.losses, &pre_losses)?;
        b
    };
    if stop_after_pretrain {
        return Ok(CellOutcome::StoppedAtBoundary(dir));
    }
    boundary.model = boundary.model.deep_clone()?;
    let stats = rejection_score_stats(&boundary.model.snapshot()?, &data.target)?;
    write_stats_csv(&stats, dir.join("score_stats.csv"))?;
    if opts.render_plots {
        plots::write_score_boxes(&stats, dir.join("score_stats.png"))?;
    }

    let RunOutput {
        record,
        model,
        negatives,
        gan,
    } = trainer::finish(&plan, &data.source, &data.target, boundary, Some(&ckpt))?;

    let mut rows: Vec<LossRow> = record.curve("pretrain").into_iter().cloned().collect();
    rows.extend(gan_rows(&record.gan_losses));
    rows.extend(record.curve("finetune").into_iter().cloned());
    write_loss_csv(&rows, &dir.join("losses.csv"))?;
    let mut progress: Vec<String> = Vec::new();
    for r in &rows {
        if (r.iter + 1) % 100 == 0 {
            progress.push(if r.phase == "gan" {
                gan_progress(&record.gan_losses[r.iter])
            } else {
                progress_line(r)
            });
        }
    }
    write_text(&dir.join("progress.log"), &(progress.join("\n") + "\n"))?;
    if !record.gan_losses.is_empty() {
        write_gan_csv(&record.gan_losses, &dir.join("gan_losses.csv"))?;
    }
    if let Some(n) = &negatives {
        n.write_manifest(dir.join("negatives.csv"))?;
    }
    let groups = sample_groups(strategy, &plan, negatives.as_ref(), gan.as_ref())?;
    write_sample_grid(&dir, &groups, data.target.sample_shape(), Some(&data.target), opts)?;
    write_text(&dir.join("record.json"), &serde_json::to_string_pretty(&record)?)?;

    let metrics = RunMetrics {
        task: task.to_string(),
        strategy,
        seed,
        metrics: evaluate(&model.snapshot()?, &data.target, cfg.averaging)?,
        extracted: record.extraction.as_ref().map(|e| e.count),
        fallback_to_baseline: record.fallback_to_baseline,
        final_checksum: record.final_checksum.clone(),
        plan,
    };
    write_text(&dir.join("metrics.json"), &(serde_json::to_string_pretty(&metrics)? + "\n"))?;
    Ok(CellOutcome::Completed(Box::new(metrics)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub completed: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<FailedCell>,
}

/// Every cell of the config, then [`cmd_report`]. Failed cells are recorded
/// and the sweep moves on.
pub fn cmd_sweep(cfg: &ExperimentConfig, opts: &Options) -> Result<SweepSummary> {
    let mut summary = SweepSummary::default();
    for task in cfg.parsed_tasks()? {
        let data = cfg.load_task(&task);
        for &strategy in &cfg.strategies {
            for &seed in &cfg.seeds {
                let name = format!("{task}/{strategy}/{seed}");
                let outcome = match &data {
                    Ok(d) => run_cell(cfg, &task, d, strategy, seed, opts, false),
                    Err(e) => Err(OsdaError::invalid(format!("loading task {task}: {e}"))),
                };
                match outcome {
                    Ok(CellOutcome::Completed(m)) => {
                        log::info!("{name}: H-score {:.4}", m.metrics.h_score);
                        summary.completed.push(name);
                    }
                    Ok(CellOutcome::Skipped(_)) => summary.skipped.push(name),
                    Ok(CellOutcome::StoppedAtBoundary(_)) => unreachable!("sweeps run to completion"),
                    Err(e) => {
                        log::error!("{name} failed: {e}");
                        summary.failed.push(FailedCell {
                            cell: name,
                            error: e.to_string(),
                        });
                    }
                }
            }
        }
    }
    create_dir(&opts.root)?;
    write_text(&opts.root.join("sweep_summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    cmd_report(cfg, opts)?;
    Ok(summary)
}

/// Rendered result tables plus the tasks left out for missing runs.
#[derive(Debug, Clone)]
pub struct Report {
    pub markdown: String,
    pub incomplete: Vec<String>,
}

fn read_metrics(path: &Path) -> Result<RunMetrics> {
    let text = fs::read_to_string(path).map_err(|e| OsdaError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn read_samples(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().map_err(|_| OsdaError::invalid(format!("{}: bad value", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        out.push((rec[0].to_string(), vals));
    }
    Ok(out)
}

/// Tables over finished runs (`tables.md`, `tables.csv`), the reference
/// fixture tables (`reference_tables.md`), and per task the boundary score
/// statistics and a merged sample grid.
pub fn cmd_report(cfg: &ExperimentConfig, opts: &Options) -> Result<Report> {
    let mut grid = ResultGrid::new("");
    let mut incomplete = Vec::new();
    let mut strategies = cfg.strategies.clone();
    strategies.sort();
    for task in cfg.parsed_tasks()? {
        let mut cells = Vec::new();
        for &s in &strategies {
            let reports = cfg
                .seeds
                .iter()
                .map(|&seed| cell_dir(&opts.root, &task, s, seed).join("metrics.json"))
                .filter(|p| p.exists())
                .map(|p| read_metrics(&p).map(|m| m.metrics))
                .collect::<Result<Vec<_>>>()?;
            if reports.len() == cfg.seeds.len() {
                cells.push((s, TableCell::from_aggregate(&aggregate(&reports)?)));
            }
        }
        if cells.len() == strategies.len() {
            for (s, c) in cells {
                grid.insert(&task.label(), s, c);
            }
        } else {
            log::warn!("task {task}: some runs are missing; left out of the tables");
            incomplete.push(task.to_string());
        }
        task_artifacts(cfg, &task, opts)?;
    }
    create_dir(&opts.root)?;
    let markdown = if grid.tasks.is_empty() {
        String::new()
    } else {
        let t = render_tables(&grid)?;
        write_text(&opts.root.join("tables.md"), &t.markdown)?;
        write_text(&opts.root.join("tables.csv"), &t.csv)?;
        t.markdown
    };

    let fixtures = reference_fixtures()?;
    let mut reference = String::from("Reference values (source=paper, full-scale protocol)\n\n");
    for (dataset, title) in [("office31", "Office-31"), ("officehome", "Office-Home")] {
        let mut g = ResultGrid::from_fixtures(&fixtures, dataset);
        g.title = title.into();
        reference.push_str(&render_tables(&g)?.markdown);
        reference.push('\n');
    }
    write_text(&opts.root.join("reference_tables.md"), &reference)?;
    Ok(Report { markdown, incomplete })
}

fn task_artifacts(cfg: &ExperimentConfig, task: &Task, opts: &Options) -> Result<()> {
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    let mut strategies = cfg.strategies.clone();
    strategies.sort();
    let task_dir = opts.root.join(task.dir_name());
    // every strategy shares the pretrain phase of a seed, so any run's
    // boundary statistics stand for the task
    if let Some(stats) = seeds
        .iter()
        .flat_map(|&seed| strategies.iter().map(move |&s| (s, seed)))
        .map(|(s, seed)| cell_dir(&opts.root, task, s, seed).join("score_stats.csv"))
        .find(|p| p.exists())
    {
        fs::copy(&stats, task_dir.join("score_stats.csv")).map_err(|e| OsdaError::io(&stats, e))?;
    }

    let mut merged: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    let mut order = Vec::new();
    for &s in &strategies {
        let Some(path) = seeds
            .iter()
            .map(|&seed| cell_dir(&opts.root, task, s, seed).join("samples.csv"))
            .find(|p| p.exists())
        else {
            continue;
        };
        for (kind, row) in read_samples(&path)? {
            if !merged.contains_key(&kind) {
                order.push(kind.clone());
            }
            let entry = merged.entry(kind).or_default();
            entry.push(row);
        }
    }
    if order.is_empty() {
        return Ok(());
    }
    // a kind seen in several runs (pristine) keeps the first run's rows
    let groups: Vec<(String, Vec<Vec<f64>>)> = order
        .into_iter()
        .map(|k| {
            let mut rows = merged.remove(&k).unwrap_or_default();
            let cap = rows.len().min(GRID_VECTORS);
            rows.truncate(cap);
            (k, rows)
        })
        .collect();
    let data = cfg.load_task(task).ok();
    let shape = match &data {
        Some(d) => d.target.sample_shape().to_vec(),
        None => vec![groups[0].1.first().map_or(0, Vec::len)],
    };
    let groups: Vec<(String, Vec<Vec<f64>>)> = if shape.len() == 3 {
        groups.into_iter().map(|(k, mut r)| {
            r.truncate(GRID_IMAGES);
            (k, r)
        }).collect()
    } else {
        groups
    };
    write_sample_grid(&task_dir, &groups, &shape, data.as_ref().map(|d| &d.target), opts)
}

/// Negatives and boundary statistics for one checkpoint, written to `dir`.
pub fn cmd_extract(
    cfg: &ExperimentConfig,
    task: &Task,
    checkpoint: &Path,
    threshold: f64,
    dir: &Path,
    opts: &Options,
) -> Result<NegativeSet> {
    let data = cfg.load_task(task)?;
    let (model, header, _) = load_model(checkpoint, Some(data.split.num_known()), false)?;
    let negs = extract_negatives(&model, &data.target, threshold, header.iteration)?;
    create_dir(dir)?;
    negs.write_manifest(dir.join("negatives.csv"))?;
    let stats = rejection_score_stats(&model, &data.target)?;
    write_stats_csv(&stats, dir.join("score_stats.csv"))?;
    if opts.render_plots {
        plots::write_score_boxes(&stats, dir.join("score_stats.png"))?;
    }
    let plan = cfg.plan_for(Strategy::Original, header.seed);
    let groups = sample_groups(Strategy::Original, &plan, Some(&negs), None)?;
    write_sample_grid(dir, &groups, data.target.sample_shape(), Some(&data.target), opts)?;
    Ok(negs)
}

/// Train the GAN on a checkpoint's negatives; returns the last step.
pub fn cmd_gan_train(
    cfg: &ExperimentConfig,
    task: &Task,
    seed: u64,
    checkpoint: &Path,
    negatives: Option<&Path>,
    dir: &Path,
    opts: &Options,
) -> Result<GanStep> {
    let data = cfg.load_task(task)?;
    let (model, header, _) = load_model(checkpoint, Some(data.split.num_known()), false)?;
    let plan = cfg.plan_for(Strategy::Generation, seed);
    let negs = match negatives {
        Some(p) => NegativeSet::read_manifest(p, &data.target)?,
        None => extract_negatives(&model, &data.target, plan.threshold, header.iteration)?,
    };
    if negs.is_empty() {
        return Err(OsdaError::invalid(format!(
            "no target sample exceeds threshold {}; nothing to train the GAN on",
            plan.threshold
        )));
    }
    create_dir(dir)?;
    if opts.force {
        for f in ["generator.ckpt", "discriminator.ckpt"] {
            let _ = fs::remove_file(dir.join(f));
        }
    } else if dir.join("generator.ckpt").exists() {
        return Err(OsdaError::invalid(format!(
            "{} already holds a GAN; pass --force to replace it",
            dir.display()
        )));
    }
    let out = gan_train(&negs, &model, &plan.gan_config())?;
    save_gan(dir, &out.state, out.history.len())?;
    write_gan_csv(&out.history, &dir.join("gan_losses.csv"))?;
    write_loss_csv(&gan_rows(&out.history), &dir.join("losses.csv"))?;
    let progress: Vec<String> = out.history.iter().filter(|s| (s.iter + 1) % 100 == 0).map(gan_progress).collect();
    write_text(&dir.join("progress.log"), &(progress.join("\n") + "\n"))?;
    if let Some(detail) = out.diverged {
        return Err(OsdaError::Diverged {
            phase: "gan".into(),
            iteration: out.history.len(),
            detail,
        });
    }
    let groups = sample_groups(Strategy::Generation, &plan, Some(&negs), Some(&out.state))?;
    write_sample_grid(dir, &groups, data.target.sample_shape(), Some(&data.target), opts)?;
    out.history
        .last()
        .cloned()
        .ok_or_else(|| OsdaError::invalid("gan.iterations must be positive"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::GanConfig;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk_scale();
        cfg.train.pretrain_iters = 200;
        cfg.train.finetune_iters = 100;
        cfg.train.threshold = 0.5;
        cfg.train.gan = GanConfig {
            iterations: 50,
            ..Default::default()
        };
        cfg.seeds = vec![0, 1];
        cfg
    }

    fn opts(root: &Path) -> Options {
        Options {
            root: root.to_path_buf(),
            force: false,
            render_plots: true,
        }
    }

    #[test]
    fn run_cell_writes_layout_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let task: Task = "S:T".parse().unwrap();
        let data = cfg.load_task(&task).unwrap();
        let o = opts(dir.path());
        let out = run_cell(&cfg, &task, &data, Strategy::Generation, 0, &o, false).unwrap();
        assert!(matches!(out, CellOutcome::Completed(_)));
        let cell = cell_dir(dir.path(), &task, Strategy::Generation, 0);
        for f in [
            "config.toml",
            "losses.csv",
            "pretrain_losses.csv",
            "gan_losses.csv",
            "negatives.csv",
            "score_stats.csv",
            "samples.csv",
            "samples_scatter.png",
            "progress.log",
            "record.json",
            "metrics.json",
            "checkpoints/pretrain.ckpt",
            "checkpoints/final.ckpt",
            "checkpoints/generator.ckpt",
        ] {
            assert!(cell.join(f).exists(), "missing {f}");
        }
        let snapshot = ExperimentConfig::load(cell.join("config.toml")).unwrap();
        assert_eq!(snapshot, cell_config(&cfg, &task, Strategy::Generation, 0));
        let losses = read_loss_csv(&cell.join("losses.csv")).unwrap();
        assert_eq!(losses.len(), 200 + 50 + 100);
        let progress = fs::read_to_string(cell.join("progress.log")).unwrap();
        assert_eq!(progress.lines().count(), 2 + 0 + 1);
        assert!(matches!(
            run_cell(&cfg, &task, &data, Strategy::Generation, 0, &o, false).unwrap(),
            CellOutcome::Skipped(_)
        ));

        // interrupted twin: boundary only, then resumed
        let twin = tempfile::tempdir().unwrap();
        let t = opts(twin.path());
        let stop = run_cell(&cfg, &task, &data, Strategy::Generation, 0, &t, true).unwrap();
        assert!(matches!(stop, CellOutcome::StoppedAtBoundary(_)));
        run_cell(&cfg, &task, &data, Strategy::Generation, 0, &t, false).unwrap();
        let a = fs::read(cell.join("metrics.json")).unwrap();
        let b = fs::read(cell_dir(twin.path(), &task, Strategy::Generation, 0).join("metrics.json")).unwrap();
        assert_eq!(a, b);

        let mut changed = cfg.clone();
        changed.train.weights.lambda_neg = 0.5;
        fs::remove_file(cell.join("metrics.json")).unwrap();
        let err = run_cell(&changed, &task, &data, Strategy::Generation, 0, &o, false).unwrap_err();
        assert!(err.is_usage(), "{err}");
    }

    #[test]
    fn sweep_is_idempotent_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.strategies = vec![Strategy::Baseline, Strategy::Augmentation];
        let o = opts(dir.path());
        let first = cmd_sweep(&cfg, &o).unwrap();
        assert_eq!((first.completed.len(), first.skipped.len(), first.failed.len()), (4, 0, 0));
        let second = cmd_sweep(&cfg, &o).unwrap();
        assert_eq!((second.completed.len(), second.skipped.len()), (0, 4));
        let tables = fs::read_to_string(dir.path().join("tables.md")).unwrap();
        assert!(tables.contains("| S→T"), "{tables}");
        assert!(tables.contains("Reproducibility (Acc / Hsc)"));
        let reference = fs::read_to_string(dir.path().join("reference_tables.md")).unwrap();
        assert!(reference.contains("86.8 ± 0.2 / 88.4 ± 0.2"));
        assert!(dir.path().join("S-T/score_stats.csv").exists());
        let merged = fs::read_to_string(dir.path().join("S-T/samples.csv")).unwrap();
        assert!(merged.contains("\npristine,0,") && merged.contains("\naugmented,0,"));
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let code = |args: &[&str]| main_from(args.iter().copied());
        assert_eq!(code(&["osda", "run", "--strategy", "mixup", "--out", out]), ExitCode::from(2));
        assert_eq!(code(&["osda", "frobnicate"]), ExitCode::from(2));
        let bad = dir.path().join("bad.toml");
        fs::write(&bad, "seeds = [1, 1]\n").unwrap();
        assert_eq!(code(&["osda", "report", "--config", bad.to_str().unwrap(), "--out", out]), ExitCode::from(2));
        let missing = dir.path().join("nothing.ckpt");
        assert_eq!(
            code(&["osda", "evaluate", "--checkpoint", missing.to_str().unwrap(), "--out", out]),
            ExitCode::from(1)
        );
        assert_eq!(code(&["osda", "synth", "--out", out]), ExitCode::SUCCESS);
        assert!(dir.path().join("synth/manifest.json").exists());
    }
}
