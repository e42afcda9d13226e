//! Every strategy on the synthetic benchmark with the desk-scale preset
//! (1000 + 1000 iterations), three seeds, median H-score per strategy.
//!
//! cargo run --example desk_scale

use std::time::Instant;

use osda::config::ExperimentConfig;
use osda::eval::evaluate;
use osda::strategies::Strategy;

fn main() -> osda::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cfg = ExperimentConfig::desk_scale();
    let data = cfg.load_task(&"S:T".parse()?)?;
    let start = Instant::now();
    for strategy in Strategy::ALL {
        let mut h = Vec::new();
        for &seed in &cfg.seeds {
            let plan = cfg.plan_for(strategy, seed);
            let out = osda::trainer::run(&plan, &cfg.model, &data.source, &data.target, None)?;
            let m = evaluate(&out.model.snapshot()?, &data.target, cfg.averaging)?;
            println!(
                "{strategy:<12} seed {seed}: H {:.4}  known {:.4}  unknown {:.4}  negatives {}",
                m.h_score,
                m.acc_known,
                m.acc_unknown,
                out.record.extraction.map_or(0, |e| e.count)
            );
            h.push(m.h_score);
        }
        h.sort_by(f64::total_cmp);
        println!("{strategy:<12} median H {:.4}", h[h.len() / 2]);
    }
    println!("total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
