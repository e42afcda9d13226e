//! A short sweep over all strategies and two seeds through the same code
//! the `osda sweep` command uses; prints the rendered table.
//!
//! cargo run --example sweep -- /tmp/osda-sweep

use osda::cli::{cmd_sweep, Options};
use osda::config::ExperimentConfig;

fn main() -> osda::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let root = std::env::args().nth(1).unwrap_or_else(|| "run-sweep".into());
    let mut cfg = ExperimentConfig::desk_scale();
    cfg.seeds = vec![0, 1];
    cfg.train.pretrain_iters = 500;
    cfg.train.finetune_iters = 500;
    cfg.train.gan.iterations = 300;
    let opts = Options {
        root: root.clone().into(),
        force: false,
        render_plots: false,
    };
    let summary = cmd_sweep(&cfg, &opts)?;
    println!("trained {} cells, skipped {}", summary.completed.len(), summary.skipped.len());
    print!("{}", std::fs::read_to_string(format!("{root}/tables.md")).map_err(|e| osda::OsdaError::io(&root, e))?);
    Ok(())
}
