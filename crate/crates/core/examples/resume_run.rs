//! Stop a run at the pretrain / fine-tune boundary, resume it from the
//! checkpoint, and confirm it ends exactly where an uninterrupted run does.
//!
//! cargo run --example resume_run

use osda::config::ExperimentConfig;
use osda::strategies::Strategy;
use osda::trainer::{finish, load_boundary, pretrain, run};

fn main() -> osda::Result<()> {
    let mut cfg = ExperimentConfig::desk_scale();
    cfg.train.pretrain_iters = 500;
    cfg.train.finetune_iters = 500;
    let data = cfg.load_task(&"S:T".parse()?)?;
    let plan = cfg.plan_for(Strategy::Original, 1);
    let dir = std::env::temp_dir().join("osda-resume-example");
    std::fs::create_dir_all(&dir).map_err(|e| osda::OsdaError::io(&dir, e))?;

    let whole = run(&plan, &cfg.model, &data.source, &data.target, None)?;
    pretrain(&plan, &cfg.model, &data.source, &data.target, Some(&dir))?;
    let boundary = load_boundary(&dir.join("pretrain.ckpt"), &plan, data.split.num_known())?;
    let resumed = finish(&plan, &data.source, &data.target, boundary, None)?;
    println!("uninterrupted {}", whole.record.final_checksum);
    println!("resumed       {}", resumed.record.final_checksum);
    assert_eq!(whole.record.final_checksum, resumed.record.final_checksum);
    Ok(())
}
