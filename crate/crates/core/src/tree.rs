//! Packet trees: rooted dyadic trees of words, each node carrying an
//! orthonormal basis (stored as rows) of its subspace `W_w`.
//!
//! Two realizations ship. The Shannon tree splits a `2^levels`-point
//! frequency axis into contiguous dyadic bands; the filter-bank trees iterate
//! a periodized two-channel orthogonal filter bank, in 1D on signals and as a
//! separable tensor product on square patches.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterPair;
use crate::linalg::{max_abs_diff, PsdOperator, SymMatrix, DEFAULT_PSD_TOL};

/// A finite word over the dyadic alphabet `{0, 1}`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn from_digits(digits: Vec<u8>) -> Result<Self> {
        if digits.iter().any(|&d| d > 1) {
            return Err(Error::UnknownNode(format!("{digits:?}")));
        }
        Ok(Self(digits))
    }

    /// The depth-`len` word spelling `value` in base 2, most significant first.
    pub fn from_index(value: usize, len: usize) -> Self {
        Self((0..len).rev().map(|b| ((value >> b) & 1) as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn digits(&self) -> &[u8] {
        &self.0
    }

    /// Integer represented by the word in base 2.
    pub fn value(&self) -> usize {
        self.0.iter().fold(0, |acc, &d| acc * 2 + d as usize)
    }

    pub fn child(&self, digit: u8) -> Self {
        let mut d = self.0.clone();
        d.push(digit);
        Self(d)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::UnknownNode(s.to_string())),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self(digits))
    }
}

/// A node of a packet tree. 2D nodes pair a row word with a column word of
/// the same length.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PacketNode {
    Line(Word),
    Grid(Word, Word),
}

impl PacketNode {
    pub fn depth(&self) -> usize {
        match self {
            PacketNode::Line(w) => w.len(),
            PacketNode::Grid(r, _) => r.len(),
        }
    }

    /// Parses `"0110"` as a 1D word and `"01,10"` as a 2D pair.
    pub fn parse(s: &str) -> Result<Self> {
        match s.split_once(',') {
            Some((r, c)) => {
                let (r, c) = (r.parse::<Word>()?, c.parse::<Word>()?);
                if r.len() != c.len() {
                    return Err(Error::UnknownNode(s.to_string()));
                }
                Ok(PacketNode::Grid(r, c))
            }
            None => Ok(PacketNode::Line(s.parse()?)),
        }
    }
}

impl fmt::Display for PacketNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PacketNode::Line(w) => write!(f, "{w}"),
            PacketNode::Grid(r, c) => write!(f, "{r},{c}"),
        }
    }
}

impl Serialize for PacketNode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PacketNode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        PacketNode::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Realization {
    #[serde(rename = "shannon")]
    Shannon,
    #[serde(rename = "filterbank-1d")]
    FilterBank1d,
    #[serde(rename = "filterbank-2d")]
    FilterBank2d,
}

#[derive(Clone, Debug)]
struct NodeData {
    node: PacketNode,
    basis: DMatrix<f64>,
    children: Vec<usize>,
    band: Option<Range<i64>>,
}

#[derive(Clone, Debug)]
pub struct PacketTree {
    realization: Realization,
    ambient_dim: usize,
    max_depth: usize,
    filter: Option<String>,
    nodes: Vec<NodeData>,
    index: HashMap<PacketNode, usize>,
    by_depth: Vec<Vec<usize>>,
}

/// Array position of Shannon frequency `k` at the given number of levels.
pub fn shannon_position(levels: u32, k: i64) -> usize {
    (k + (1i64 << (levels - 1))) as usize
}

/// Dyadic band `I_w` of a depth-`n` word over `2^levels` frequencies.
pub fn shannon_band(levels: u32, word: &Word) -> Range<i64> {
    let n = word.len() as u32;
    let half = 1i64 << (levels - 1);
    let width = 1i64 << (levels - n);
    let start = -half + word.value() as i64 * width;
    start..start + width
}

pub fn build_shannon_tree(levels: u32, max_depth: usize) -> Result<PacketTree> {
    if levels == 0 || levels > 24 {
        return Err(Error::InvalidDepth(format!("levels must be in 1..=24, got {levels}")));
    }
    if max_depth == 0 || max_depth > levels as usize {
        return Err(Error::InvalidDepth(format!(
            "max_depth {max_depth} must be in 1..={levels}"
        )));
    }
    let dim = 1usize << levels;
    let mut builder = Builder::default();
    for n in 0..=max_depth {
        for m in 0..(1usize << n) {
            let word = Word::from_index(m, n);
            let band = shannon_band(levels, &word);
            let mut basis = DMatrix::zeros(band.clone().count(), dim);
            for (row, k) in band.clone().enumerate() {
                basis[(row, shannon_position(levels, k))] = 1.0;
            }
            builder.push(PacketNode::Line(word), basis, Some(band));
        }
    }
    Ok(builder.finish(Realization::Shannon, dim, max_depth, None))
}

fn check_dyadic(len: usize, depth: usize, what: &str) -> Result<()> {
    if depth == 0 || depth >= usize::BITS as usize {
        return Err(Error::InvalidDepth(format!("depth must be positive, got {depth}")));
    }
    if len == 0 || !len.is_multiple_of(1usize << depth) {
        return Err(Error::InvalidDepth(format!(
            "2^{depth} does not divide {what} {len}"
        )));
    }
    Ok(())
}

/// Bases of all 1D filter-bank nodes up to `depth`, in depth-then-lex order.
fn filter_bases_1d(filters: &FilterPair, len: usize, depth: usize) -> Vec<Vec<(Word, DMatrix<f64>)>> {
    let mut levels = vec![vec![(Word::root(), DMatrix::<f64>::identity(len, len))]];
    for _ in 0..depth {
        let prev = levels.last().expect("root level");
        let mut next = Vec::with_capacity(prev.len() * 2);
        for (word, basis) in prev {
            for (digit, taps) in [(0u8, filters.lowpass()), (1u8, filters.highpass())] {
                next.push((word.child(digit), analyze_rows(taps, basis)));
            }
        }
        levels.push(next);
    }
    levels
}

/// Applies one periodized analysis channel to the coefficient map `basis`.
fn analyze_rows(taps: &[f64], basis: &DMatrix<f64>) -> DMatrix<f64> {
    let d = basis.nrows();
    let cols = basis.ncols();
    let mut out = DMatrix::zeros(d / 2, cols);
    for k in 0..d / 2 {
        for (j, f) in taps.iter().enumerate() {
            let src = (2 * k + j) % d;
            for c in 0..cols {
                out[(k, c)] += f * basis[(src, c)];
            }
        }
    }
    out
}

pub fn build_filter_tree_1d(filters: &FilterPair, signal_len: usize, depth: usize) -> Result<PacketTree> {
    check_dyadic(signal_len, depth, "signal length")?;
    let mut builder = Builder::default();
    for level in filter_bases_1d(filters, signal_len, depth) {
        for (word, basis) in level {
            builder.push(PacketNode::Line(word), basis, None);
        }
    }
    Ok(builder.finish(
        Realization::FilterBank1d,
        signal_len,
        depth,
        Some(filters.name().to_string()),
    ))
}

/// Separable tensor-product packets on `patch_side × patch_side` patches,
/// flattened row-major. Depth-`n` nodes are all pairs of depth-`n` words.
pub fn build_filter_tree_2d(filters: &FilterPair, patch_side: usize, depth: usize) -> Result<PacketTree> {
    check_dyadic(patch_side, depth, "patch side")?;
    let levels = filter_bases_1d(filters, patch_side, depth);
    let dim = patch_side * patch_side;
    let mut builder = Builder::default();
    for level in &levels {
        for (rw, rb) in level {
            for (cw, cb) in level {
                let mut basis = DMatrix::zeros(rb.nrows() * cb.nrows(), dim);
                for (i, u) in rb.row_iter().enumerate() {
                    for (j, v) in cb.row_iter().enumerate() {
                        let row = i * cb.nrows() + j;
                        for r in 0..patch_side {
                            for c in 0..patch_side {
                                basis[(row, r * patch_side + c)] = u[r] * v[c];
                            }
                        }
                    }
                }
                builder.push(PacketNode::Grid(rw.clone(), cw.clone()), basis, None);
            }
        }
    }
    Ok(builder.finish(
        Realization::FilterBank2d,
        dim,
        depth,
        Some(filters.name().to_string()),
    ))
}

#[derive(Default)]
struct Builder {
    nodes: Vec<NodeData>,
}

impl Builder {
    fn push(&mut self, node: PacketNode, basis: DMatrix<f64>, band: Option<Range<i64>>) {
        self.nodes.push(NodeData {
            node,
            basis,
            children: Vec::new(),
            band,
        });
    }

    fn finish(mut self, realization: Realization, ambient_dim: usize, max_depth: usize, filter: Option<String>) -> PacketTree {
        self.nodes.sort_by(|a, b| {
            a.node
                .depth()
                .cmp(&b.node.depth())
                .then_with(|| a.node.cmp(&b.node))
        });
        let index: HashMap<PacketNode, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, d)| (d.node.clone(), i))
            .collect();
        let mut by_depth = vec![Vec::new(); max_depth + 1];
        for (i, d) in self.nodes.iter().enumerate() {
            by_depth[d.node.depth()].push(i);
        }
        for i in 0..self.nodes.len() {
            let children: Vec<usize> = match &self.nodes[i].node {
                PacketNode::Line(w) => (0..2u8)
                    .filter_map(|d| index.get(&PacketNode::Line(w.child(d))).copied())
                    .collect(),
                PacketNode::Grid(r, c) => (0..2u8)
                    .flat_map(|a| (0..2u8).map(move |b| (a, b)))
                    .filter_map(|(a, b)| index.get(&PacketNode::Grid(r.child(a), c.child(b))).copied())
                    .collect(),
            };
            self.nodes[i].children = children;
        }
        PacketTree {
            realization,
            ambient_dim,
            max_depth,
            filter,
            nodes: self.nodes,
            index,
            by_depth,
        }
    }
}

impl PacketTree {
    pub fn realization(&self) -> Realization {
        self.realization
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn filter_name(&self) -> Option<&str> {
        self.filter.as_deref()
    }

    pub fn root(&self) -> PacketNode {
        self.nodes[0].node.clone()
    }

    pub fn contains(&self, node: &PacketNode) -> bool {
        self.index.contains_key(node)
    }

    fn data(&self, node: &PacketNode) -> Result<&NodeData> {
        self.index
            .get(node)
            .map(|&i| &self.nodes[i])
            .ok_or_else(|| Error::UnknownNode(node.to_string()))
    }

    fn check_depth(&self, n: usize) -> Result<()> {
        if n > self.max_depth {
            return Err(Error::InvalidDepth(format!(
                "depth {n} exceeds tree max_depth {}",
                self.max_depth
            )));
        }
        Ok(())
    }

    /// Depth-`n` nodes in lexicographic order.
    pub fn depth_nodes(&self, n: usize) -> Result<Vec<PacketNode>> {
        self.check_depth(n)?;
        Ok(self.by_depth[n].iter().map(|&i| self.nodes[i].node.clone()).collect())
    }

    /// `N_n`, the number of depth-`n` nodes.
    pub fn slice_len(&self, n: usize) -> Result<usize> {
        self.check_depth(n)?;
        Ok(self.by_depth[n].len())
    }

    /// Every node, ordered by depth and then lexicographically.
    pub fn nodes(&self) -> impl Iterator<Item = &PacketNode> {
        self.nodes.iter().map(|d| &d.node)
    }

    pub fn children(&self, node: &PacketNode) -> Result<Vec<PacketNode>> {
        Ok(self
            .data(node)?
            .children
            .iter()
            .map(|&i| self.nodes[i].node.clone())
            .collect())
    }

    /// Orthonormal basis of `W_w`, one vector per row.
    pub fn basis(&self, node: &PacketNode) -> Result<&DMatrix<f64>> {
        Ok(&self.data(node)?.basis)
    }

    pub fn subspace_dim(&self, node: &PacketNode) -> Result<usize> {
        Ok(self.data(node)?.basis.nrows())
    }

    /// Shannon band `I_w`; `None` for filter-bank trees.
    pub fn band(&self, node: &PacketNode) -> Result<Option<Range<i64>>> {
        Ok(self.data(node)?.band.clone())
    }

    /// `P_w = BᵀB` as a dense matrix.
    pub fn projection_matrix(&self, node: &PacketNode) -> Result<DMatrix<f64>> {
        let b = self.basis(node)?;
        Ok(b.tr_mul(b))
    }

    pub fn projection(&self, node: &PacketNode) -> Result<PsdOperator> {
        PsdOperator::new(SymMatrix::new(self.projection_matrix(node)?)?, DEFAULT_PSD_TOL)
    }

    /// Stacked bases of every depth-`|w|` node other than `w`; spans the
    /// orthogonal complement of `W_w`.
    pub(crate) fn complement_basis(&self, node: &PacketNode) -> Result<DMatrix<f64>> {
        let depth = node.depth();
        self.data(node)?;
        let rows: Vec<&DMatrix<f64>> = self.by_depth[depth]
            .iter()
            .map(|&i| &self.nodes[i])
            .filter(|d| &d.node != node)
            .map(|d| &d.basis)
            .collect();
        let total: usize = rows.iter().map(|b| b.nrows()).sum();
        let mut out = DMatrix::zeros(total, self.ambient_dim);
        let mut at = 0;
        for b in rows {
            out.rows_mut(at, b.nrows()).copy_from(b);
            at += b.nrows();
        }
        Ok(out)
    }

    /// Zeroes one basis row of `node`. Used to build corrupted fixtures for
    /// exercising [`validate_tree`].
    pub fn zero_basis_row(&mut self, node: &PacketNode, row: usize) -> Result<()> {
        let i = *self
            .index
            .get(node)
            .ok_or_else(|| Error::UnknownNode(node.to_string()))?;
        let basis = &mut self.nodes[i].basis;
        if row >= basis.nrows() {
            return Err(Error::InvalidConfig(format!("row {row} out of range")));
        }
        basis.row_mut(row).fill(0.0);
        Ok(())
    }

    pub fn describe(&self) -> TreeDescription {
        TreeDescription {
            realization: self.realization,
            ambient_dim: self.ambient_dim,
            max_depth: self.max_depth,
            filter: self.filter.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|d| NodeDescription {
                    word: d.node.to_string(),
                    depth: d.node.depth(),
                    dim: d.basis.nrows(),
                })
                .collect(),
        }
    }
}

pub fn projection(tree: &PacketTree, node: &PacketNode) -> Result<PsdOperator> {
    tree.projection(node)
}

pub fn depth_nodes(tree: &PacketTree, n: usize) -> Result<Vec<PacketNode>> {
    tree.depth_nodes(n)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeDescription {
    pub word: String,
    pub depth: usize,
    pub dim: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeDescription {
    pub realization: Realization,
    pub ambient_dim: usize,
    pub max_depth: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<String>,
    pub nodes: Vec<NodeDescription>,
}

/// Largest observed violation of each packet-tree invariant.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TreeReport {
    /// `max_n ‖Σ_{|w|=n} P_w − I‖_max`
    pub partition: f64,
    /// `max_w ‖P_w − Σ_{v∈ch(w)} P_v‖_max`
    pub child_splitting: f64,
    /// `max ‖P_v P_v'‖_max` over distinct siblings
    pub child_orthogonality: f64,
    /// `max_w ‖B_w B_wᵀ − I‖_max`
    pub basis_orthonormality: f64,
}

impl TreeReport {
    pub fn max_violation(&self) -> f64 {
        self.partition
            .max(self.child_splitting)
            .max(self.child_orthogonality)
            .max(self.basis_orthonormality)
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

pub fn validate_tree(tree: &PacketTree) -> TreeReport {
    let dim = tree.ambient_dim;
    let eye = DMatrix::<f64>::identity(dim, dim);
    let projections: Vec<DMatrix<f64>> = tree.nodes.iter().map(|d| d.basis.tr_mul(&d.basis)).collect();
    let mut report = TreeReport::default();

    for slice in &tree.by_depth {
        let mut sum = DMatrix::zeros(dim, dim);
        for &i in slice {
            sum += &projections[i];
        }
        report.partition = report.partition.max(max_abs_diff(&sum, &eye));
    }

    for (i, data) in tree.nodes.iter().enumerate() {
        let d = data.basis.nrows();
        let gram = &data.basis * data.basis.transpose();
        report.basis_orthonormality = report
            .basis_orthonormality
            .max(max_abs_diff(&gram, &DMatrix::identity(d, d)));

        if data.children.is_empty() {
            continue;
        }
        let mut sum = DMatrix::zeros(dim, dim);
        for &c in &data.children {
            sum += &projections[c];
        }
        report.child_splitting = report.child_splitting.max(max_abs_diff(&projections[i], &sum));
        for (a, &ca) in data.children.iter().enumerate() {
            for &cb in &data.children[a + 1..] {
                let prod = &projections[ca] * &projections[cb];
                let m = prod.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
                report.child_orthogonality = report.child_orthogonality.max(m);
            }
        }
    }
    report
}

/// A nonnegative Fourier multiplier on `2^levels` frequencies
/// `k ∈ [−2^{levels−1}, 2^{levels−1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShannonSymbol {
    levels: u32,
    values: Vec<f64>,
}

impl ShannonSymbol {
    /// `values[p]` is `r(k)` for `k = p − 2^{levels−1}`.
    pub fn new(levels: u32, values: Vec<f64>) -> Result<Self> {
        if levels == 0 || levels > 24 {
            return Err(Error::InvalidDepth(format!("levels must be in 1..=24, got {levels}")));
        }
        if values.len() != 1usize << levels {
            return Err(Error::DimensionMismatch {
                expected: 1 << levels,
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Malformed(format!("symbol value {v} is not a nonnegative real")));
        }
        Ok(Self { levels, values })
    }

    pub fn from_fn(levels: u32, f: impl Fn(i64) -> f64) -> Result<Self> {
        let half = 1i64 << (levels.max(1) - 1);
        Self::new(levels, (-half..half).map(f).collect())
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, k: i64) -> f64 {
        self.values[shannon_position(self.levels, k)]
    }

    pub fn band_sum(&self, band: Range<i64>) -> f64 {
        band.map(|k| self.get(k)).sum()
    }

    /// The diagonal multiplier `R e_k = r(k) e_k`.
    pub fn to_operator(&self) -> Result<PsdOperator> {
        PsdOperator::new(SymMatrix::from_diagonal(&self.values)?, DEFAULT_PSD_TOL)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(s: &str) -> PacketNode {
        PacketNode::parse(s).unwrap()
    }

    #[test]
    fn shannon_bands_level3_depth1() {
        let t = build_shannon_tree(3, 1).unwrap();
        assert_eq!(t.band(&line("0")).unwrap(), Some(-4..0));
        assert_eq!(t.band(&line("1")).unwrap(), Some(0..4));
    }

    #[test]
    fn shannon_bands_smallest() {
        let t = build_shannon_tree(1, 1).unwrap();
        assert_eq!(t.band(&line("0")).unwrap(), Some(-1..0));
        assert_eq!(t.band(&line("1")).unwrap(), Some(0..1));
    }

    #[test]
    fn shannon_children_split_parent_band() {
        let t = build_shannon_tree(3, 2).unwrap();
        let b00 = t.band(&line("00")).unwrap().unwrap();
        let b01 = t.band(&line("01")).unwrap().unwrap();
        assert_eq!(b00, -4..-2);
        assert_eq!(b01, -2..0);
        assert_eq!(b00.end, b01.start);
        assert_eq!(b00.start..b01.end, t.band(&line("0")).unwrap().unwrap());
        assert_eq!(t.band(&line("11")).unwrap(), Some(2..4));
    }

    #[test]
    fn shannon_rejects_deep_tree() {
        assert!(matches!(build_shannon_tree(2, 3), Err(Error::InvalidDepth(_))));
    }

    #[test]
    fn haar_depth_one_by_hand() {
        let t = build_filter_tree_1d(&FilterPair::haar(), 2, 1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b0 = t.basis(&line("0")).unwrap();
        let b1 = t.basis(&line("1")).unwrap();
        assert!((b0[(0, 0)] - s).abs() < 1e-15 && (b0[(0, 1)] - s).abs() < 1e-15);
        assert!((b1[(0, 0)] - s).abs() < 1e-15 && (b1[(0, 1)] + s).abs() < 1e-15);
    }

    #[test]
    fn d4_depth_two_bases_are_orthonormal() {
        let t = build_filter_tree_1d(&FilterPair::daubechies4(), 8, 2).unwrap();
        let nodes = t.depth_nodes(2).unwrap();
        assert_eq!(nodes.len(), 4);
        let mut all = DMatrix::zeros(0, 8);
        for n in &nodes {
            assert_eq!(t.subspace_dim(n).unwrap(), 2);
            let b = t.basis(n).unwrap();
            let r = all.nrows();
            all = all.insert_rows(r, b.nrows(), 0.0);
            all.rows_mut(r, b.nrows()).copy_from(b);
        }
        let g = &all * all.transpose();
        assert!(max_abs_diff(&g, &DMatrix::identity(8, 8)) < 1e-12);
    }

    #[test]
    fn haar_2d_depth_one() {
        let t = build_filter_tree_2d(&FilterPair::haar(), 2, 1).unwrap();
        let nodes = t.depth_nodes(1).unwrap();
        let words: Vec<String> = nodes.iter().map(ToString::to_string).collect();
        assert_eq!(words, ["0,0", "0,1", "1,0", "1,1"]);
        for n in &nodes {
            assert_eq!(t.subspace_dim(n).unwrap(), 1);
        }
        // the all-lowpass vector is constant 1/2
        let b = t.basis(&nodes[0]).unwrap();
        assert!(b.iter().all(|v| (v - 0.5).abs() < 1e-15));
        assert!(validate_tree(&t).is_valid(1e-12));
    }

    #[test]
    fn d4_2d_depth_two_counts() {
        let t = build_filter_tree_2d(&FilterPair::daubechies4(), 8, 2).unwrap();
        let nodes = t.depth_nodes(2).unwrap();
        assert_eq!(nodes.len(), 16);
        assert!(nodes.iter().all(|n| t.subspace_dim(n).unwrap() == 4));
        assert!(validate_tree(&t).is_valid(1e-10));
    }

    #[test]
    fn filter_tree_divisibility() {
        assert!(matches!(
            build_filter_tree_1d(&FilterPair::haar(), 12, 3),
            Err(Error::InvalidDepth(_))
        ));
        assert!(matches!(
            build_filter_tree_2d(&FilterPair::haar(), 8, 4),
            Err(Error::InvalidDepth(_))
        ));
    }

    #[test]
    fn projection_examples() {
        let t = build_shannon_tree(3, 2).unwrap();
        let root = t.projection(&t.root()).unwrap();
        assert_eq!(root.base().max_abs_diff(&SymMatrix::identity(8)), 0.0);
        let p0 = t.projection(&line("0")).unwrap();
        let expect = SymMatrix::from_diagonal(&[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p0.base().max_abs_diff(&expect), 0.0);

        let t = build_filter_tree_1d(&FilterPair::daubechies4(), 16, 3).unwrap();
        for node in t.nodes() {
            let p = t.projection_matrix(node).unwrap();
            assert!(max_abs_diff(&(&p * &p), &p) < 1e-9);
            assert!((p.trace() - t.subspace_dim(node).unwrap() as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn depth_nodes_ordering() {
        let t = build_shannon_tree(3, 3).unwrap();
        let words: Vec<String> = t.depth_nodes(1).unwrap().iter().map(ToString::to_string).collect();
        assert_eq!(words, ["0", "1"]);
        let words: Vec<String> = t.depth_nodes(2).unwrap().iter().map(ToString::to_string).collect();
        assert_eq!(words, ["00", "01", "10", "11"]);
        assert_eq!(t.slice_len(3).unwrap(), 8);
        assert!(t.depth_nodes(4).is_err());
    }

    #[test]
    fn shannon_validation_is_exact() {
        let r = validate_tree(&build_shannon_tree(4, 4).unwrap());
        assert_eq!(r.child_splitting, 0.0);
        assert_eq!(r.partition, 0.0);
    }

    #[test]
    fn corrupted_tree_is_detected() {
        let mut t = build_shannon_tree(3, 2).unwrap();
        t.zero_basis_row(&line("01"), 0).unwrap();
        let r = validate_tree(&t);
        assert!((r.partition - 1.0).abs() < 1e-12);
        assert!(!r.is_valid(1e-10));
    }

    #[test]
    fn node_parse_display() {
        assert_eq!(line("0110").to_string(), "0110");
        assert_eq!(line("01,10").to_string(), "01,10");
        assert!(PacketNode::parse("01,1").is_err());
        assert!(PacketNode::parse("2").is_err());
    }

    #[test]
    fn symbol_validation() {
        assert!(ShannonSymbol::new(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(ShannonSymbol::new(1, vec![1.0, -2.0]).is_err());
        let s = ShannonSymbol::from_fn(3, |k| 2f64.powi(-(k.abs() as i32))).unwrap();
        assert_eq!(s.get(-4), 1.0 / 16.0);
        assert_eq!(s.get(0), 1.0);
        assert_eq!(s.band_sum(-4..0), 15.0 / 16.0);
        assert_eq!(s.band_sum(0..4), 15.0 / 8.0);
    }
}
