//! Content blocks of a random Gram operator and the measure they define.
//!
//! ```text
//! cargo run --example content_measure
//! ```

use wpc::content::{cylinder_weights, depth_decomposition, discrete_density, parallelogram_check};
use wpc::filters::FilterPair;
use wpc::sampling::{gaussian_vector, random_gram, rng};
use wpc::tree::build_filter_tree_1d;

fn main() -> wpc::Result<()> {
    let tree = build_filter_tree_1d(&FilterPair::daubechies4(), 16, 3)?;
    let r = random_gram(16, 5, 7);
    println!("tr(R) = {:.6}", r.trace());

    for n in 1..=3 {
        let d = depth_decomposition(&r, &tree, n)?;
        println!("depth {n}: ||R - sum C_w||_F = {:.2e}", d.reconstruction_error(&r));
    }
    let d = depth_decomposition(&r, &tree, 2)?;
    for b in &d.blocks {
        println!("  C_{}: trace {:.6}  hs {:.6}", b.node, b.trace_weight, b.hs_weight);
    }

    let weights = cylinder_weights(&r, &tree)?;
    println!(
        "{} cylinders, additivity {:.2e}, root mass {:.2e}",
        weights.len(),
        weights.additivity_violation(&tree)?,
        weights.root_mass_violation(r.trace())
    );

    let mut g = rng(11);
    let x = gaussian_vector(16, &mut g);
    let y = gaussian_vector(16, &mut g);
    println!("parallelogram defect {:.2e}", parallelogram_check(&r, &tree, &x, &y, 3)?);
    for e in discrete_density(&r, &tree, &x, 1)? {
        println!("  d nu_x / d mu on [{}] = {:.6}", e.node, e.density);
    }
    Ok(())
}
