//! Filter-bank packet trees in one and two dimensions.
//!
//! ```text
//! cargo run --example filter_tree
//! ```

use wpc::filters::FilterPair;
use wpc::tree::{build_filter_tree_1d, build_filter_tree_2d, validate_tree};

fn main() -> wpc::Result<()> {
    for filter in [FilterPair::haar(), FilterPair::daubechies4()] {
        println!("{}: h = {:?}", filter.name(), filter.lowpass());
        let tree = build_filter_tree_1d(&filter, 16, 3)?;
        let report = validate_tree(&tree);
        println!("  1D length 16, depth 3: worst violation {:.2e}", report.max_violation());
        for n in 1..=3 {
            let nodes = tree.depth_nodes(n)?;
            let dims: Vec<usize> = nodes.iter().map(|w| tree.subspace_dim(w)).collect::<wpc::Result<_>>()?;
            println!("  depth {n}: N_n = {}, dims {:?}", nodes.len(), dims);
        }
    }

    // 8x8 patches: each node is a (row word, column word) pair
    let tree = build_filter_tree_2d(&FilterPair::haar(), 8, 2)?;
    let nodes = tree.depth_nodes(2)?;
    println!("2D haar 8x8 depth 2: {} nodes, first {} last {}", nodes.len(), nodes[0], nodes[nodes.len() - 1]);
    println!("  worst violation {:.2e}", validate_tree(&tree).max_violation());

    // depth must divide the signal length
    println!("{}", build_filter_tree_1d(&FilterPair::haar(), 12, 3).unwrap_err());
    Ok(())
}
