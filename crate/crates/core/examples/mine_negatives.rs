//! Pretrain on the synthetic benchmark, then mine confident target unknowns
//! and summarise the rejection scores of known and unknown target samples.
//!
//! cargo run --example mine_negatives

use osda::config::ExperimentConfig;
use osda::eval::{reveal_ground_truth, TrueLabel};
use osda::miner::{extract_negatives, rejection_score_stats};
use osda::strategies::Strategy;

fn main() -> osda::Result<()> {
    let cfg = ExperimentConfig::desk_scale();
    let data = cfg.load_task(&"S:T".parse()?)?;
    let plan = cfg.plan_for(Strategy::Original, 0);
    let boundary = osda::trainer::pretrain(&plan, &cfg.model, &data.source, &data.target, None)?;
    let snapshot = boundary.model.snapshot()?;
    for s in rejection_score_stats(&snapshot, &data.target)? {
        println!(
            "{:<8} n={:<4} min {:.3}  q1 {:.3}  median {:.3}  q3 {:.3}  max {:.3}",
            s.subset, s.count, s.min, s.q1, s.median, s.q3, s.max
        );
    }
    let truth = reveal_ground_truth(&data.target)?;
    for t in [0.5, 0.9, 0.99] {
        let negs = extract_negatives(&snapshot, &data.target, t, boundary.iteration)?;
        let correct = negs
            .items
            .iter()
            .filter(|i| truth[i.example_index] == TrueLabel::Unknown)
            .count();
        println!("threshold {t}: {} negatives, {correct} truly unknown", negs.len());
    }
    Ok(())
}
