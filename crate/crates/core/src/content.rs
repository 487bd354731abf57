//! Packet content operators `C_w(R) = R^{1/2} P_w R^{1/2}` and the
//! quantities built from them: depth decompositions, cylinder masses,
//! vector energies and fixed-depth densities.
//!
//! All of these factor through `X_w = B_w R^{1/2}`, where `B_w` holds the
//! orthonormal basis rows of `W_w`: `C_w(R) = X_wᵀ X_w`,
//! `tr C_w(R) = ‖X_w‖_F²`, `‖C_w(R)‖₂ = ‖X_w X_wᵀ‖_F` and
//! `⟨x, C_w(R) x⟩ = ‖X_w x‖²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, PsdOperator, SymMatrix, DEFAULT_PSD_TOL};
use crate::tree::{PacketNode, PacketTree};

/// Masses at or below `ZERO_MASS_REL · tr(R)` count as zero cylinders.
pub const ZERO_MASS_REL: f64 = 1e-12;

/// Relative tolerance for cylinder additivity and root mass.
pub const MEASURE_TOL: f64 = 1e-9;

/// Relative tolerance for `Σ_w C_w(R) = R`.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

/// Caches `R^{1/2}` for repeated block evaluations against one tree.
#[derive(Clone, Debug)]
pub struct ContentEngine<'a> {
    source: &'a PsdOperator,
    tree: &'a PacketTree,
    sqrt: DMatrix<f64>,
}

impl<'a> ContentEngine<'a> {
    pub fn new(source: &'a PsdOperator, tree: &'a PacketTree) -> Result<Self> {
        if source.dim() != tree.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: tree.ambient_dim(),
                found: source.dim(),
            });
        }
        Ok(Self {
            source,
            tree,
            sqrt: source.sqrt().matrix().clone(),
        })
    }

    pub fn source(&self) -> &PsdOperator {
        self.source
    }

    pub fn tree(&self) -> &PacketTree {
        self.tree
    }

    pub(crate) fn sqrt_matrix(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    /// `X_w = B_w R^{1/2}`.
    pub(crate) fn factor(&self, node: &PacketNode) -> Result<DMatrix<f64>> {
        Ok(self.tree.basis(node)? * &self.sqrt)
    }

    /// `C_w(R)` as a dense symmetric matrix, without the PSD projection.
    pub fn block_matrix(&self, node: &PacketNode) -> Result<DMatrix<f64>> {
        let x = self.factor(node)?;
        Ok(symmetrize(x.tr_mul(&x)))
    }

    pub fn block(&self, node: &PacketNode) -> Result<ContentBlock> {
        let operator = PsdOperator::new(SymMatrix::new(self.block_matrix(node)?)?, DEFAULT_PSD_TOL)?;
        Ok(ContentBlock {
            node: node.clone(),
            trace_weight: operator.trace(),
            hs_weight: operator.hs_norm(),
            operator,
        })
    }

    /// `μ_R([w]) = tr C_w(R)`.
    pub fn mass(&self, node: &PacketNode) -> Result<f64> {
        Ok(self.factor(node)?.norm_squared())
    }

    /// `‖C_w(R)‖₂`, computed on the `dim W_w`-sized Gram `X_w X_wᵀ`.
    pub fn hs(&self, node: &PacketNode) -> Result<f64> {
        let x = self.factor(node)?;
        Ok((&x * x.transpose()).norm())
    }

    /// `ν_x([w]) = ‖P_w R^{1/2} x‖²`.
    pub fn vector_weight(&self, x: &[f64], node: &PacketNode) -> Result<f64> {
        if x.len() != self.tree.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.tree.ambient_dim(),
                found: x.len(),
            });
        }
        let v = DVector::from_column_slice(x);
        Ok((self.factor(node)? * v).norm_squared())
    }
}

#[derive(Clone, Debug)]
pub struct ContentBlock {
    pub node: PacketNode,
    pub operator: PsdOperator,
    pub trace_weight: f64,
    pub hs_weight: f64,
}

pub fn content_operator(r: &PsdOperator, tree: &PacketTree, node: &PacketNode) -> Result<ContentBlock> {
    ContentEngine::new(r, tree)?.block(node)
}

#[derive(Clone, Debug)]
pub struct ContentDecomposition {
    pub depth: usize,
    pub blocks: Vec<ContentBlock>,
    pub source_trace: f64,
}

impl ContentDecomposition {
    pub fn sum(&self) -> DMatrix<f64> {
        let dim = self.blocks[0].operator.dim();
        self.blocks
            .iter()
            .fold(DMatrix::zeros(dim, dim), |acc, b| acc + b.operator.matrix())
    }

    /// `‖R − Σ_w C_w(R)‖_F`.
    pub fn reconstruction_error(&self, r: &PsdOperator) -> f64 {
        (r.matrix() - self.sum()).norm()
    }

    pub fn export(&self, include_blocks: bool) -> DecompositionExport {
        DecompositionExport {
            depth: self.depth,
            source_trace: self.source_trace,
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockExport {
                    word: b.node.to_string(),
                    trace_weight: b.trace_weight,
                    hs_weight: b.hs_weight,
                    block: include_blocks.then(|| crate::linalg::MatrixJson::from_sym(b.operator.base())),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockExport {
    pub word: String,
    pub trace_weight: f64,
    pub hs_weight: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub block: Option<crate::linalg::MatrixJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecompositionExport {
    pub depth: usize,
    pub source_trace: f64,
    pub blocks: Vec<BlockExport>,
}

/// One block per depth-`n` node, in lexicographic order. Fails if the
/// blocks do not sum back to `R` within `1e-8·(1 + ‖R‖_F)`.
pub fn depth_decomposition(r: &PsdOperator, tree: &PacketTree, n: usize) -> Result<ContentDecomposition> {
    let engine = ContentEngine::new(r, tree)?;
    let blocks = tree
        .depth_nodes(n)?
        .iter()
        .map(|node| engine.block(node))
        .collect::<Result<Vec<_>>>()?;
    let decomposition = ContentDecomposition {
        depth: n,
        blocks,
        source_trace: r.trace(),
    };
    let err = decomposition.reconstruction_error(r);
    let bound = RECONSTRUCTION_TOL * (1.0 + r.hs_norm());
    if err > bound {
        return Err(Error::InvariantViolation(format!(
            "depth-{n} blocks miss R by {err:e} (bound {bound:e})"
        )));
    }
    Ok(decomposition)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderRow {
    pub word: String,
    pub depth: usize,
    pub mass: f64,
}

/// Cylinder masses `μ_R([w])` for every node down to the tree's max depth.
#[derive(Clone, Debug)]
pub struct CylinderWeights {
    nodes: Vec<(PacketNode, f64)>,
    total: f64,
}

impl CylinderWeights {
    pub fn mass(&self, node: &PacketNode) -> Option<f64> {
        self.nodes.iter().find(|(n, _)| n == node).map(|(_, m)| *m)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PacketNode, f64)> {
        self.nodes.iter().map(|(n, m)| (n, *m))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn zero_floor(&self) -> f64 {
        (ZERO_MASS_REL * self.total).max(f64::MIN_POSITIVE)
    }

    /// Largest `|μ([w]) − Σ_{v∈ch(w)} μ([v])|`, relative to `μ([w])`
    /// (floored at the zero-mass threshold).
    pub fn additivity_violation(&self, tree: &PacketTree) -> Result<f64> {
        let mut worst = 0.0_f64;
        for (node, mass) in &self.nodes {
            let children = tree.children(node)?;
            if children.is_empty() {
                continue;
            }
            let sum: f64 = children
                .iter()
                .map(|c| self.mass(c).ok_or_else(|| Error::UnknownNode(c.to_string())))
                .sum::<Result<f64>>()?;
            worst = worst.max((mass - sum).abs() / mass.abs().max(self.zero_floor()));
        }
        Ok(worst)
    }

    /// `|μ([root]) − tr(R)| / tr(R)` (absolute when `tr(R) = 0`).
    pub fn root_mass_violation(&self, trace: f64) -> f64 {
        let root = self.nodes[0].1;
        if trace == 0.0 {
            root.abs()
        } else {
            (root - trace).abs() / trace.abs()
        }
    }

    pub fn min_mass(&self) -> f64 {
        self.nodes.iter().map(|(_, m)| *m).fold(f64::INFINITY, f64::min)
    }

    pub fn rows(&self) -> Vec<CylinderRow> {
        self.nodes
            .iter()
            .map(|(n, m)| CylinderRow {
                word: n.to_string(),
                depth: n.depth(),
                mass: *m,
            })
            .collect()
    }
}

pub fn cylinder_weights(r: &PsdOperator, tree: &PacketTree) -> Result<CylinderWeights> {
    let engine = ContentEngine::new(r, tree)?;
    let nodes = tree
        .nodes()
        .map(|n| Ok((n.clone(), engine.mass(n)?)))
        .collect::<Result<Vec<_>>>()?;
    let weights = CylinderWeights {
        nodes,
        total: r.trace(),
    };
    let additivity = weights.additivity_violation(tree)?;
    if additivity > MEASURE_TOL {
        return Err(Error::InvariantViolation(format!(
            "cylinder additivity off by {additivity:e} (relative)"
        )));
    }
    let root = weights.root_mass_violation(r.trace());
    if root > MEASURE_TOL {
        return Err(Error::InvariantViolation(format!(
            "root mass differs from tr(R) by {root:e} (relative)"
        )));
    }
    Ok(weights)
}

pub fn vector_weight(r: &PsdOperator, tree: &PacketTree, x: &[f64], node: &PacketNode) -> Result<f64> {
    ContentEngine::new(r, tree)?.vector_weight(x, node)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityEntry {
    pub node: PacketNode,
    pub mass: f64,
    pub weight: f64,
    pub density: f64,
}

/// Fixed-depth ratios `ν_x([w]) / μ_R([w])` over depth-`n` cylinders of
/// nonzero mass.
///
/// Cylinders with mass at or below `ε = 1e-12·tr(R)` are omitted, but only
/// after confirming `ν_x([w]) ≤ ε·max(1, ‖x‖²)`; anything heavier is an
/// [`Error::AbsoluteContinuityViolation`].
pub fn discrete_density(r: &PsdOperator, tree: &PacketTree, x: &[f64], n: usize) -> Result<Vec<DensityEntry>> {
    let engine = ContentEngine::new(r, tree)?;
    let eps = ZERO_MASS_REL * r.trace();
    let x_norm2: f64 = x.iter().map(|v| v * v).sum();
    let mut out = Vec::new();
    for node in tree.depth_nodes(n)? {
        let mass = engine.mass(&node)?;
        let weight = engine.vector_weight(x, &node)?;
        if mass > eps {
            out.push(DensityEntry {
                density: weight / mass,
                node,
                mass,
                weight,
            });
        } else if weight > eps * x_norm2.max(1.0) {
            return Err(Error::AbsoluteContinuityViolation {
                node: node.to_string(),
                mass,
                weight,
            });
        }
    }
    Ok(out)
}

/// `max_w |ν_{x+y} + ν_{x−y} − 2ν_x − 2ν_y|` over depth-`n` cylinders.
pub fn parallelogram_check(r: &PsdOperator, tree: &PacketTree, x: &[f64], y: &[f64], n: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let engine = ContentEngine::new(r, tree)?;
    let sum: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mut worst = 0.0_f64;
    for node in tree.depth_nodes(n)? {
        let v = engine.vector_weight(&sum, &node)? + engine.vector_weight(&diff, &node)?
            - 2.0 * engine.vector_weight(x, &node)?
            - 2.0 * engine.vector_weight(y, &node)?;
        worst = worst.max(v.abs());
    }
    Ok(worst)
}
