//! HS greedy extraction and the coherence that controls its rate.
//!
//! ```text
//! cargo run --example hs_greedy
//! ```

use nalgebra::DVector;
use wpc::greedy::{coherence, decay_report, hs_greedy, GreedyOptions};
use wpc::linalg::{PsdOperator, SymMatrix, DEFAULT_PSD_TOL};
use wpc::sampling::{block_diagonal_gram, random_gram, rng};
use wpc::filters::FilterPair;
use wpc::tree::build_filter_tree_1d;

fn main() -> wpc::Result<()> {
    let tree = build_filter_tree_1d(&FilterPair::daubechies4(), 16, 2)?;
    let n = 2;
    let nn = tree.slice_len(n)?;

    let r = random_gram(16, 4, 9);
    let report = decay_report(&hs_greedy(&r, &tree, n, &GreedyOptions { max_steps: 6, ..GreedyOptions::default() })?);
    println!("{:>2} {:<4} {:>8} {:>12} {:>12}", "k", "node", "gamma", "||R^(k)||_2", "uniform");
    for s in &report.steps {
        println!(
            "{:>2} {:<4} {:>8.4} {:>12.6} {:>12.6}",
            s.k,
            s.node,
            s.gamma.unwrap_or(f64::NAN),
            s.remainder_hs,
            s.bound_hs.unwrap_or(f64::NAN)
        );
    }
    println!("{}", report.summary.message);

    // block-diagonal operators have coherence 1
    let bd = block_diagonal_gram(&tree, n, &mut rng(4));
    println!("block-diagonal gamma = {:.12}", coherence(&bd, &tree, n)?.gamma);

    // a unit vector spread evenly over the blocks gives the worst case N_n
    let mut v = DVector::zeros(16);
    for node in tree.depth_nodes(n)? {
        v += tree.basis(&node)?.row(0).transpose() / (nn as f64).sqrt();
    }
    let spread = PsdOperator::new(SymMatrix::new(&v * v.transpose())?, DEFAULT_PSD_TOL)?;
    println!("equal-spread gamma = {:.8} (N_n = {nn})", coherence(&spread, &tree, n)?.gamma);
    Ok(())
}
