//! Seeded random instances for demos, the self-test and property checks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{PsdOperator, SymMatrix, DEFAULT_PSD_TOL};
use crate::tree::{PacketTree, ShannonSymbol};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// `BᵀB` for a `rank × dim` standard Gaussian `B`.
pub fn gram_from(dim: usize, rank: usize, rng: &mut impl Rng) -> PsdOperator {
    let b = gaussian_matrix(rank, dim, rng);
    let m = SymMatrix::new(b.tr_mul(&b)).expect("finite square matrix");
    PsdOperator::new(m, DEFAULT_PSD_TOL).expect("Gram matrices are PSD")
}

pub fn random_gram(dim: usize, rank: usize, seed: u64) -> PsdOperator {
    gram_from(dim, rank, &mut rng(seed))
}

/// `Σ_{|w|=n} P_w G P_w` for a random Gram `G`: block-diagonal at depth `n`.
pub fn block_diagonal_gram(tree: &PacketTree, n: usize, rng: &mut impl Rng) -> PsdOperator {
    let dim = tree.ambient_dim();
    let g = gram_from(dim, dim, rng);
    let mut out = DMatrix::zeros(dim, dim);
    for node in tree.depth_nodes(n).expect("depth within tree") {
        let p = tree.projection_matrix(&node).expect("node from tree");
        out += &p * g.matrix() * &p;
    }
    PsdOperator::new(SymMatrix::new(out).expect("finite"), DEFAULT_PSD_TOL).expect("pinching preserves positivity")
}

/// Uniform `[0, 1)` symbol values, with roughly a quarter of the entries zeroed.
pub fn random_symbol(levels: u32, rng: &mut impl Rng) -> ShannonSymbol {
    let values = (0..1usize << levels)
        .map(|_| {
            let v: f64 = rng.random();
            if rng.random::<f64>() < 0.25 {
                0.0
            } else {
                v
            }
        })
        .collect();
    ShannonSymbol::new(levels, values).expect("nonnegative symbol")
}
