//! Render the shipped reference fixtures in the result-table layout.
//!
//! cargo run --example render_tables

use osda::eval::{reference_fixtures, render_tables, ResultGrid};

fn main() -> osda::Result<()> {
    let rows = reference_fixtures()?;
    for dataset in ["office31", "officehome"] {
        let t = render_tables(&ResultGrid::from_fixtures(&rows, dataset))?;
        println!("{}", t.markdown);
    }
    Ok(())
}
