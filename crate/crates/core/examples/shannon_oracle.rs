//! Diagonal operators on a Shannon tree: every cylinder mass is a plain sum
//! of symbol values over the node's frequency band.
//!
//! ```text
//! cargo run --example shannon_oracle
//! ```

use wpc::content::cylinder_weights;
use wpc::tree::{build_shannon_tree, ShannonSymbol};

fn main() -> wpc::Result<()> {
    let symbol = ShannonSymbol::from_fn(3, |k| 2f64.powi(-(k.abs() as i32)))?;
    let r = symbol.to_operator()?;
    let tree = build_shannon_tree(3, 3)?;
    let weights = cylinder_weights(&r, &tree)?;

    println!("{:<6} {:>12} {:>12} {:>12}", "word", "band", "mass", "band sum");
    let mut worst = 0.0_f64;
    for (node, mass) in weights.iter() {
        let band = tree.band(node)?.expect("Shannon nodes carry bands");
        let oracle = symbol.band_sum(band.clone());
        worst = worst.max((mass - oracle).abs());
        println!("{:<6} {:>12} {mass:>12.6} {oracle:>12.6}", node.to_string(), format!("[{},{})", band.start, band.end));
    }
    println!("worst |mass - band sum| = {worst:.2e}");
    Ok(())
}
