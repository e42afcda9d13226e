//! The known / unknown protocol split on the Office-31 categories: sort the
//! names, the first ten are known.
//!
//! cargo run --example office_split

use osda::data::make_osda_split;

const OFFICE31: &str = "back_pack bike bike_helmet bookcase bottle calculator desk_chair desk_lamp \
desktop_computer file_cabinet headphones keyboard laptop_computer letter_tray mobile_phone monitor \
mouse mug paper_notebook pen phone printer projector punchers ring_binder ruler scissors speaker \
stapler tape_dispenser trash_can";

fn main() -> osda::Result<()> {
    let names: Vec<String> = OFFICE31.split_whitespace().map(String::from).collect();
    let split = make_osda_split(&names, 10)?;
    println!("{} known: {}", split.num_known(), split.known_names(&names).join(", "));
    println!("{} unknown: {}", split.unknown.len(), split.unknown_names(&names).join(", "));
    Ok(())
}
