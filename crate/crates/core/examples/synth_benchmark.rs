//! Build the synthetic open-set benchmark, show its split and export it in
//! the benchmark CSV format.
//!
//! cargo run --example synth_benchmark -- /tmp/synth

use osda::config::ExperimentConfig;
use osda::data::{synth_osda_benchmark, write_csv, SynthConfig, TrueLabel};
use osda::eval::reveal_ground_truth;

fn main() -> osda::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth".into());
    let cfg = SynthConfig::default();
    let (source, target, split) = synth_osda_benchmark(&cfg)?;
    let names = source.class_names();
    println!("known   {:?}", split.known_names(names));
    println!("unknown {:?}", split.unknown_names(names));
    // training-ready view of the same benchmark: hidden truth attached
    let task = ExperimentConfig::default().load_task(&"S:T".parse()?)?;
    let truth = reveal_ground_truth(&task.target)?;
    let unknown = truth.iter().filter(|t| **t == TrueLabel::Unknown).count();
    println!(
        "source {} samples, target {} samples ({unknown} from unknown classes)",
        source.len(),
        target.len()
    );
    for c in 0..cfg.known_k + cfg.unknown_k {
        let m = cfg.class_mean(c);
        let mut shifted = m.clone();
        cfg.shift(&mut shifted);
        println!("{:<10} source mean {:>6.2?}  target mean {:>6.2?}", names[c], m, shifted);
    }
    std::fs::create_dir_all(&out).map_err(|e| osda::OsdaError::io(&out, e))?;
    write_csv(&source, format!("{out}/source.csv"))?;
    write_csv(&target, format!("{out}/target.csv"))?;
    println!("wrote {out}/source.csv and {out}/target.csv");
    Ok(())
}
