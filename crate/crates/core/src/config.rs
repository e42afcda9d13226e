//! Experiment configuration, read from TOML.
//!
//! ```toml
//! tasks = ["S:T"]
//! strategies = ["baseline", "original"]
//! seeds = [0, 1, 2]
//!
//! [dataset]
//! kind = "synthetic"          # or "csv", "image_folder"
//!
//! [model]
//! hidden = [64]
//!
//! [train]
//! pretrain_iters = 1000
//! finetune_iters = 1000
//!
//! [train.weights]
//! lambda_neg = 0.1
//! ```
//!
//! `[train]` is a full [`TrainPlan`]; its `strategy` and `seed` are set per
//! run from `strategies` and `seeds`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    load_image_folder, make_osda_split, read_csv, relabel_for_training, synth_osda_benchmark, DomainDataset,
    DomainTag, OsdaSplit, SynthConfig, SynthManifest,
};
use crate::error::{OsdaError, Result};
use crate::eval::SubsetAveraging;
use crate::model::ModelConfig;
use crate::strategies::Strategy;
use crate::trainer::TrainPlan;

/// Default output root when neither `--out` nor `out_dir` is given.
pub const OUT_ENV: &str = "OSDA_OUT";
/// Domain names of the synthetic benchmark: the base geometry and its
/// shifted copy.
pub const SYNTH_DOMAINS: [&str; 2] = ["S", "T"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Generated in memory. The only task is `S:T`.
    Synthetic {
        #[serde(default)]
        synth: SynthConfig,
    },
    /// Benchmark CSVs exported by `synth`, located through their manifest.
    Csv { manifest: PathBuf },
    /// One `<class>/<image>` folder per domain.
    ImageFolder {
        domains: BTreeMap<String, PathBuf>,
        #[serde(default = "default_image_size")]
        image_size: usize,
        /// Unset means the benchmark default for the class count: 10 of
        /// Office-31's 31 classes, 25 of Office-Home's 65.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        known_count: Option<usize>,
    },
}

fn default_image_size() -> usize {
    32
}

/// Known-class count for a benchmark with `n` classes when none is configured.
pub fn default_known_count(n: usize) -> Result<usize> {
    match n {
        31 => Ok(10),
        65 => Ok(25),
        _ => Err(OsdaError::Config(format!(
            "no default known_count for {n} classes; set dataset.known_count"
        ))),
    }
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic {
            synth: SynthConfig::default(),
        }
    }
}

/// A `source:target` pair of domain names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Task {
    pub source: String,
    pub target: String,
}

impl Task {
    /// Directory name under the output root.
    pub fn dir_name(&self) -> String {
        format!("{}-{}", self.source, self.target)
    }

    /// Row label in result tables.
    pub fn label(&self) -> String {
        format!("{}→{}", self.source, self.target)
    }
}

impl std::str::FromStr for Task {
    type Err = OsdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((a, b)) if !a.is_empty() && !b.is_empty() && !b.contains(':') && a != b => Ok(Task {
                source: a.into(),
                target: b.into(),
            }),
            _ => Err(OsdaError::invalid(format!(
                "task `{s}` must be SOURCE:TARGET with two different domain names"
            ))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.source, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// `SOURCE:TARGET` domain pairs.
    pub tasks: Vec<String>,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    /// Output root. `--out` overrides it; `OSDA_OUT` applies when neither is set.
    pub out_dir: Option<PathBuf>,
    pub averaging: SubsetAveraging,
    /// Drop (rather than reject) unknown-class source examples when
    /// relabeling. Set to false to fail on them.
    pub drop_unknown_source: bool,
    pub model: ModelConfig,
    pub train: TrainPlan,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            tasks: vec!["S:T".into()],
            strategies: Strategy::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            out_dir: None,
            averaging: SubsetAveraging::default(),
            drop_unknown_source: true,
            model: ModelConfig::default(),
            train: TrainPlan::default(),
        }
    }
}

/// Relabeled source and target of one task, with the split behind them.
pub struct TaskData {
    pub source: DomainDataset,
    pub target: DomainDataset,
    pub split: OsdaSplit,
    pub class_names: Vec<String>,
}

impl ExperimentConfig {
    /// The synthetic benchmark at desk scale: 1000 + 1000 iterations and a
    /// radial-unit extractor, whose responses fade away from the training
    /// data so that far-off target clusters start out rejected.
    pub fn desk_scale() -> Self {
        let mut cfg = Self::default();
        cfg.model = ModelConfig {
            extractor: crate::model::ExtractorKind::Rbf,
            hidden: vec![128],
            feature_dim: 32,
            activation: crate::model::Activation::Tanh,
            rbf_width: 1.5,
            rbf_center_std: 4.0,
            ..ModelConfig::default()
        };
        cfg.train.pretrain_iters = 1000;
        cfg.train.finetune_iters = 1000;
        cfg.train.lr_new = 0.05;
        cfg.train.augment.vector_affine = true;
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| OsdaError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| OsdaError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            OsdaError::Config(m) => OsdaError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| OsdaError::Config(e.to_string()))
    }

    pub fn parsed_tasks(&self) -> Result<Vec<Task>> {
        self.tasks.iter().map(|t| t.parse()).collect()
    }

    /// The plan of one run.
    pub fn plan_for(&self, strategy: Strategy, seed: u64) -> TrainPlan {
        TrainPlan {
            strategy,
            seed,
            ..self.train.clone()
        }
    }

    /// Output root: explicit flag, then config, then `OSDA_OUT`, then `run`.
    pub fn out_root(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("run"))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(OsdaError::Config(m));
        if self.tasks.is_empty() || self.strategies.is_empty() || self.seeds.is_empty() {
            return cfg_err("tasks, strategies and seeds must all be non-empty".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return cfg_err(format!("seeds contain duplicates: {:?}", self.seeds));
        }
        let mut strategies = self.strategies.clone();
        strategies.sort();
        strategies.dedup();
        if strategies.len() != self.strategies.len() {
            return cfg_err("strategies contain duplicates".into());
        }
        let tasks = self.parsed_tasks().map_err(|e| OsdaError::Config(e.to_string()))?;
        let domains: Vec<String> = match &self.dataset {
            DatasetSpec::Synthetic { .. } | DatasetSpec::Csv { .. } => {
                SYNTH_DOMAINS.iter().map(|s| s.to_string()).collect()
            }
            DatasetSpec::ImageFolder { domains, image_size, .. } => {
                if *image_size == 0 {
                    return cfg_err("dataset.image_size must be positive".into());
                }
                domains.keys().cloned().collect()
            }
        };
        for t in &tasks {
            if !domains.contains(&t.source) || !domains.contains(&t.target) {
                return cfg_err(format!("task {t} names a domain outside {domains:?}"));
            }
            if matches!(self.dataset, DatasetSpec::Synthetic { .. } | DatasetSpec::Csv { .. })
                && (t.source.as_str(), t.target.as_str()) != ("S", "T")
            {
                return cfg_err(format!("the synthetic benchmark only defines the task S:T, got {t}"));
            }
        }
        for s in &self.strategies {
            self.plan_for(*s, 0)
                .validate()
                .map_err(|e| OsdaError::Config(format!("train ({s}): {e}")))?;
        }
        Ok(())
    }

    /// Load and relabel the two domains of `task`.
    pub fn load_task(&self, task: &Task) -> Result<TaskData> {
        let (source, target, split, class_names) = match &self.dataset {
            DatasetSpec::Synthetic { synth } => {
                let (s, t, split) = synth_osda_benchmark(synth)?;
                let names = s.class_names().to_vec();
                (s, t, split, names)
            }
            DatasetSpec::Csv { manifest } => {
                let text = std::fs::read_to_string(manifest).map_err(|e| OsdaError::io(manifest, e))?;
                let m: SynthManifest = serde_json::from_str(&text)?;
                let dir = manifest.parent().unwrap_or(Path::new("."));
                let s = read_csv(dir.join(&m.source_file), "source", m.class_names.clone())?;
                let t = read_csv(dir.join(&m.target_file), "target", m.class_names.clone())?;
                (s, t, m.split, m.class_names)
            }
            DatasetSpec::ImageFolder {
                domains,
                image_size,
                known_count,
            } => {
                let load = |name: &str, tag| -> Result<DomainDataset> {
                    let root = &domains[name];
                    let (ds, report) = load_image_folder(root, *image_size, tag)?;
                    if report.warning_count() > 0 {
                        log::warn!("{}", report.to_log());
                    }
                    Ok(ds)
                };
                let s = load(&task.source, DomainTag::Source)?;
                let t = load(&task.target, DomainTag::Target)?;
                if s.class_names() != t.class_names() {
                    return Err(OsdaError::invalid(format!(
                        "domains {} and {} have different class folders",
                        task.source, task.target
                    )));
                }
                let names = s.class_names().to_vec();
                let k = match known_count {
                    Some(k) => *k,
                    None => default_known_count(names.len())?,
                };
                let split = make_osda_split(&names, k)?;
                (s, t, split, names)
            }
        };
        if source.tag() != DomainTag::Source || target.tag() != DomainTag::Target {
            return Err(OsdaError::invalid("dataset files carry the wrong domain tags"));
        }
        let relabel = if self.drop_unknown_source {
            relabel_for_training
        } else {
            crate::data::relabel_strict
        };
        Ok(TaskData {
            source: relabel(&source, &split)?,
            target: relabel_for_training(&target, &split)?,
            split,
            class_names,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn known_count_defaults_by_class_count() {
        assert_eq!(default_known_count(31).unwrap(), 10);
        assert_eq!(default_known_count(65).unwrap(), 25);
        assert!(matches!(default_known_count(12), Err(OsdaError::Config(_))));
        let cfg = ExperimentConfig::from_toml(
            "tasks = [\"Ar:Cl\"]\n[dataset]\nkind = \"image_folder\"\nknown_count = 20\n[dataset.domains]\nAr = \"a\"\nCl = \"c\"\n",
        )
        .unwrap();
        assert!(matches!(cfg.dataset, DatasetSpec::ImageFolder { known_count: Some(20), .. }));
    }

    #[test]
    fn shipped_desk_scale_file_matches_preset() {
        let text = include_str!("../configs/desk_scale.toml");
        assert_eq!(ExperimentConfig::from_toml(text).unwrap(), ExperimentConfig::desk_scale());
        let back = ExperimentConfig::desk_scale().to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&back).unwrap(), ExperimentConfig::desk_scale());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "seeds = [4]\nstrategies = [\"original\"]\n[train]\npretrain_iters = 10\n[train.weights]\nlambda_neg = 0.2\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![4]);
        assert_eq!(cfg.train.pretrain_iters, 10);
        assert_eq!(cfg.train.finetune_iters, 5000);
        assert_eq!(cfg.train.weights.lambda_neg, 0.2);
        let plan = cfg.plan_for(Strategy::Original, 4);
        assert_eq!((plan.strategy, plan.seed), (Strategy::Original, 4));
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for text in [
            "seeds = [0, 0]",
            "tasks = [\"S\"]",
            "tasks = [\"T:S\"]",
            "strategies = [\"mixup\"]",
            "unknown_key = 1",
            "[train]\nthreshold = 1.5",
            "[dataset]\nkind = \"image_folder\"\ndomains = { A = \"a\" }\n",
        ] {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert!(matches!(err, OsdaError::Config(_)), "{text}: {err}");
        }
    }

    #[test]
    fn tasks_parse() {
        let t: Task = "A:W".parse().unwrap();
        assert_eq!((t.dir_name(), t.label(), t.to_string()), ("A-W".into(), "A→W".into(), "A:W".into()));
        assert!("A:A".parse::<Task>().is_err());
        assert!("A:W:D".parse::<Task>().is_err());
    }

    #[test]
    fn synthetic_task_loads_relabeled() {
        let d = ExperimentConfig::default().load_task(&"S:T".parse().unwrap()).unwrap();
        assert_eq!(d.source.class_names().len(), 4);
        assert!(d.target.examples().iter().all(|e| e.label.is_none()));
        assert_eq!(d.split.unknown.len(), 3);
    }
}
