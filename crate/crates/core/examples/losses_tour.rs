//! Every loss term on one small hand-written batch: the source terms
//! against labels, the target and negative terms on one-vs-all outputs, and
//! the generator penalties.
//!
//! cargo run --example losses_tour

use osda::losses::{self, value, NegativeSampling};
use osda::ops;

fn main() -> osda::Result<()> {
    let dev = ops::device();
    let closed = ops::from_rows(&[vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]], &dev)?;
    // p_o(k|x): probability that x belongs to known class k
    let open = ops::from_rows(&[vec![0.9, 0.4, 0.05], vec![0.2, 0.1, 0.3]], &dev)?;
    let labels = [0, 2];
    let rows = [
        ("closed cross-entropy", losses::closed_ce(&closed, &labels)?),
        ("one-vs-all, hardest negative", losses::ova_hard_negative(&open, &labels, NegativeSampling::Hardest)?),
        ("one-vs-all, all negatives", losses::ova_hard_negative(&open, &labels, NegativeSampling::All)?),
        ("open entropy", losses::open_entropy_min(&open)?),
        ("negative constraint", losses::negative_constraint(&open)?),
        ("generator entropy", losses::gen_entropy(&closed)?),
        ("generator agreement", losses::gen_agreement(&open)?),
    ];
    for (name, t) in rows {
        println!("{name:<30} {:.6}", value(&t)?);
    }
    Ok(())
}
