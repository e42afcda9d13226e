//! Train the negative GAN against a frozen pretrained classifier and compare
//! how known its samples look against plain noise.
//!
//! cargo run --example train_gan

use osda::config::ExperimentConfig;
use osda::losses::{gen_agreement, value};
use osda::miner::extract_negatives;
use osda::strategies::{gan_train, Strategy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> osda::Result<()> {
    let cfg = ExperimentConfig::desk_scale();
    let data = cfg.load_task(&"S:T".parse()?)?;
    let plan = cfg.plan_for(Strategy::Generation, 0);
    let boundary = osda::trainer::pretrain(&plan, &cfg.model, &data.source, &data.target, None)?;
    let frozen = boundary.model.snapshot()?;
    let negs = extract_negatives(&frozen, &data.target, plan.threshold, boundary.iteration)?;
    println!("{} negatives", negs.len());
    let out = gan_train(&negs, &frozen, &plan.gan_config())?;
    for s in out.history.iter().step_by(200) {
        println!(
            "iter {:>4}  d_loss {:.3}  g_adv {:.3}  gen_ent {:.3}  gen_agree {:.3}  D(fake) {:.2}",
            s.iter, s.d_loss, s.g_adv, s.gen_ent, s.gen_agree, s.d_fake
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fake = out.state.sample(256, &mut rng)?;
    let noise = fake.randn_like(0.0, 1.0)?;
    let agree = |x| -> osda::Result<f64> { value(&gen_agreement(&frozen.heads(x)?.open_known)?) };
    println!("agreement: samples {:.4}, noise {:.4}", agree(&fake)?, agree(&noise)?);
    for row in osda::ops::rows(&fake.narrow(0, 0, 5)?)? {
        println!("sample {row:>7.3?}");
    }
    Ok(())
}
