//! Packet-content patch denoising.
//!
//! Patches of the noisy image are scored by their average energy in each
//! depth-`n` packet block, `s_w = (1/M) Σ_i ‖P_w y_i‖² = tr(P_w R̂)` with
//! `R̂ = (1/M) Σ_i y_i y_iᵀ`. The `K` heaviest blocks define the projection
//! `T_K = Σ_{w∈W_K} P_w`; every patch is replaced by `T_K y` and the image is
//! rebuilt by averaging overlapping patches.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::content::ContentEngine;
use crate::error::{Error, Result};
use crate::filters::FilterPair;
use crate::linalg::{symmetrize, PsdOperator, SymMatrix, DEFAULT_PSD_TOL};
use crate::tree::{build_filter_tree_2d, PacketNode, PacketTree};

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Grayscale raster, row-major. Values are nominally in `[0, 1]`; they are
/// only clipped on export.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Malformed("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: pixels.len(),
            });
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::Malformed("non-finite pixel".into()));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let pixels = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

/// A piecewise-smooth test scene: a shaded background, a bright disk and a
/// dark bar.
pub fn piecewise_smooth_image(width: usize, height: usize) -> ImageBuffer {
    let (w, h) = (width as f64, height as f64);
    ImageBuffer::from_fn(width, height, |r, c| {
        let (y, x) = (r as f64 / h, c as f64 / w);
        let mut v = 0.25 + 0.3 * x + 0.1 * (3.0 * y).sin();
        if (x - 0.6).powi(2) + (y - 0.4).powi(2) < 0.06 {
            v = 0.85 - 0.2 * y;
        }
        if (0.15..0.35).contains(&x) && (0.55..0.9).contains(&y) {
            v = 0.1;
        }
        v
    })
}

/// Adds i.i.d. `N(0, σ²)` noise from a ChaCha8 stream seeded with `seed`.
pub fn add_gaussian_noise(img: &ImageBuffer, sigma: f64, seed: u64) -> Result<ImageBuffer> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidConfig(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = img.pixels.iter().map(|p| p + normal.sample(&mut rng)).collect();
    Ok(ImageBuffer {
        pixels,
        ..img.clone()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Psnr {
    pub db: f64,
    /// Set when the images are identical and `db` holds [`PSNR_CAP_DB`].
    pub capped: bool,
}

/// `10·log10(1/MSE)` with peak 1.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<Psnr> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch {
            expected: a.pixels.len(),
            found: b.pixels.len(),
        });
    }
    let mse = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.pixels.len() as f64;
    if mse == 0.0 {
        return Ok(Psnr {
            db: PSNR_CAP_DB,
            capped: true,
        });
    }
    Ok(Psnr {
        db: (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB),
        capped: false,
    })
}

#[derive(Clone, Debug)]
pub struct PatchSet {
    pub patch_side: usize,
    pub stride: usize,
    /// Top-left `(row, col)` of each patch.
    pub positions: Vec<(usize, usize)>,
    /// Row-major flattened patches.
    pub patches: DMatrix<f64>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn patch(&self, i: usize) -> Vec<f64> {
        self.patches.row(i).iter().copied().collect()
    }

    /// `(1/M) Σ ‖y_i‖²`
    pub fn mean_energy(&self) -> f64 {
        self.patches.norm_squared() / self.len() as f64
    }
}

/// `0, s, 2s, …` plus a final anchor flush with the far edge.
fn anchors(len: usize, m: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=len - m).step_by(stride).collect();
    if *out.last().expect("len >= m") != len - m {
        out.push(len - m);
    }
    out
}

pub fn extract_patches(img: &ImageBuffer, m: usize, stride: usize) -> Result<PatchSet> {
    if m == 0 || m > img.width.min(img.height) {
        return Err(Error::InvalidConfig(format!(
            "patch side {m} does not fit a {}x{} image",
            img.width, img.height
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be at least 1".into()));
    }
    let rows = anchors(img.height, m, stride);
    let cols = anchors(img.width, m, stride);
    let positions: Vec<(usize, usize)> = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect();
    let mut patches = DMatrix::zeros(positions.len(), m * m);
    for (i, &(r0, c0)) in positions.iter().enumerate() {
        for r in 0..m {
            for c in 0..m {
                patches[(i, r * m + c)] = img.get(r0 + r, c0 + c);
            }
        }
    }
    Ok(PatchSet {
        patch_side: m,
        stride,
        positions,
        patches,
    })
}

/// `R̂ = (1/M) Σ_i y_i y_iᵀ`.
pub fn second_moment(patches: &PatchSet) -> Result<PsdOperator> {
    if patches.is_empty() {
        return Err(Error::InvalidConfig("empty patch set".into()));
    }
    let y = &patches.patches;
    let r = symmetrize(y.tr_mul(y)) / patches.len() as f64;
    PsdOperator::new(SymMatrix::new(r)?, DEFAULT_PSD_TOL)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockScores {
    pub depth: usize,
    pub entries: Vec<(PacketNode, f64)>,
}

impl BlockScores {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, s)| s).sum()
    }

    pub fn score(&self, node: &PacketNode) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == node).map(|(_, s)| *s)
    }

    /// Largest `|s_w − tr(P_w R̂)|`, relative to `max(s_w, 1e-300)`.
    pub fn identity_gap(&self, rhat: &PsdOperator, tree: &PacketTree) -> Result<f64> {
        let mut worst = 0.0_f64;
        for (node, s) in &self.entries {
            let p = tree.projection_matrix(node)?;
            let t = p.component_mul(rhat.matrix()).sum();
            worst = worst.max((s - t).abs() / s.abs().max(1e-300));
        }
        Ok(worst)
    }
}

fn check_patch_tree(patches: &PatchSet, tree: &PacketTree) -> Result<()> {
    if tree.ambient_dim() != patches.patches.ncols() {
        return Err(Error::DimensionMismatch {
            expected: tree.ambient_dim(),
            found: patches.patches.ncols(),
        });
    }
    Ok(())
}

/// `s_w = (1/M) Σ_i ‖B_w y_i‖²` from packet coefficients.
pub fn block_scores(patches: &PatchSet, tree: &PacketTree, n: usize) -> Result<BlockScores> {
    check_patch_tree(patches, tree)?;
    let m = patches.len().max(1) as f64;
    let entries = tree
        .depth_nodes(n)?
        .into_iter()
        .map(|node| {
            let coeffs = &patches.patches * tree.basis(&node)?.transpose();
            Ok((node, coeffs.norm_squared() / m))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockScores { depth: n, entries })
}

/// The structure-sensitive alternative `‖C_w(R̂)‖₂`.
pub fn hs_block_scores(rhat: &PsdOperator, tree: &PacketTree, n: usize) -> Result<BlockScores> {
    let engine = ContentEngine::new(rhat, tree)?;
    let entries = tree
        .depth_nodes(n)?
        .into_iter()
        .map(|node| {
            let s = engine.hs(&node)?;
            Ok((node, s))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockScores { depth: n, entries })
}

#[derive(Clone, Debug)]
pub struct Selection {
    pub k: usize,
    /// Chosen nodes, heaviest first.
    pub nodes: Vec<PacketNode>,
    pub projection: PsdOperator,
}

/// Top-`K` nodes by score; equal scores keep lexicographic order. `K`
/// beyond `N_n` selects everything.
pub fn select_top_k(scores: &BlockScores, k: usize, tree: &PacketTree) -> Result<Selection> {
    if k == 0 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..scores.entries.len()).collect();
    order.sort_by(|&a, &b| scores.entries[b].1.total_cmp(&scores.entries[a].1));
    let nodes: Vec<PacketNode> = order
        .into_iter()
        .take(k)
        .map(|i| scores.entries[i].0.clone())
        .collect();
    let dim = tree.ambient_dim();
    let mut t = DMatrix::zeros(dim, dim);
    for node in &nodes {
        t += tree.projection_matrix(node)?;
    }
    let projection = PsdOperator::new(SymMatrix::new(t)?, DEFAULT_PSD_TOL)?;
    Ok(Selection {
        k: nodes.len(),
        nodes,
        projection,
    })
}

/// `(R̂_K, R̂ − R̂_K)` with `R̂_K = Σ_{w∈W_K} C_w(R̂)`; the second term is
/// accumulated from the unselected blocks.
pub fn truncation_split(rhat: &PsdOperator, tree: &PacketTree, depth: usize, selection: &Selection) -> Result<(SymMatrix, SymMatrix)> {
    let engine = ContentEngine::new(rhat, tree)?;
    let dim = tree.ambient_dim();
    let mut kept = DMatrix::zeros(dim, dim);
    let mut rest = DMatrix::zeros(dim, dim);
    for node in tree.depth_nodes(depth)? {
        let block = engine.block_matrix(&node)?;
        if selection.nodes.contains(&node) {
            kept += block;
        } else {
            rest += block;
        }
    }
    Ok((SymMatrix::new(kept)?, SymMatrix::new(rest)?))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    #[default]
    Trace,
    Hs,
}

#[derive(Clone, Debug)]
pub struct DenoiseConfig {
    pub patch_side: usize,
    pub depth: usize,
    pub top_k: usize,
    /// Defaults to `patch_side / 2`.
    pub stride: Option<usize>,
    pub filter: FilterPair,
    pub score_mode: ScoreMode,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            patch_side: 8,
            depth: 2,
            top_k: 4,
            stride: None,
            filter: FilterPair::haar(),
            score_mode: ScoreMode::Trace,
        }
    }
}

impl DenoiseConfig {
    pub fn stride(&self) -> usize {
        self.stride.unwrap_or((self.patch_side / 2).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.patch_side;
        if m == 0 {
            return Err(Error::InvalidConfig("patch side must be positive".into()));
        }
        if self.depth == 0 || self.depth >= usize::BITS as usize || !m.is_multiple_of(1usize << self.depth) {
            return Err(Error::InvalidConfig(format!(
                "depth {} needs 2^depth to divide patch side {m}",
                self.depth
            )));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        if self.stride() == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub word: String,
    pub s_w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiseReport {
    pub m: usize,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub stride: usize,
    pub filter: String,
    pub score_mode: ScoreMode,
    #[serde(rename = "N_n")]
    pub slice_len: usize,
    pub patches: usize,
    pub scores: Vec<ScoreRow>,
    pub chosen: Vec<String>,
    pub retained_energy_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub psnr_noisy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub psnr_denoised: Option<f64>,
}

impl DenoiseReport {
    /// Fills both PSNR fields against a clean reference.
    pub fn with_reference(mut self, clean: &ImageBuffer, noisy: &ImageBuffer, denoised: &ImageBuffer) -> Result<Self> {
        self.psnr_noisy = Some(psnr(clean, noisy)?.db);
        self.psnr_denoised = Some(psnr(clean, denoised)?.db);
        Ok(self)
    }
}

/// Runs the full pipeline and returns the overlap-averaged estimate.
pub fn denoise_image(img: &ImageBuffer, cfg: &DenoiseConfig) -> Result<(ImageBuffer, DenoiseReport)> {
    cfg.validate()?;
    let m = cfg.patch_side;
    let tree = build_filter_tree_2d(&cfg.filter, m, cfg.depth).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let patches = extract_patches(img, m, cfg.stride())?;
    let energy = block_scores(&patches, &tree, cfg.depth)?;
    let ranking = match cfg.score_mode {
        ScoreMode::Trace => energy.clone(),
        ScoreMode::Hs => hs_block_scores(&second_moment(&patches)?, &tree, cfg.depth)?,
    };
    let selection = select_top_k(&ranking, cfg.top_k, &tree)?;

    let t = selection.projection.matrix();
    let mut acc = vec![0.0; img.pixels.len()];
    let mut count = vec![0u32; img.pixels.len()];
    for (i, &(r0, c0)) in patches.positions.iter().enumerate() {
        let y = DVector::from_iterator(m * m, patches.patches.row(i).iter().copied());
        let x = t * y;
        for r in 0..m {
            for c in 0..m {
                let at = (r0 + r) * img.width + c0 + c;
                acc[at] += x[r * m + c];
                count[at] += 1;
            }
        }
    }
    let pixels = acc.iter().zip(&count).map(|(a, &n)| a / n as f64).collect();
    let out = ImageBuffer {
        width: img.width,
        height: img.height,
        pixels,
    };

    let total = energy.total();
    let kept: f64 = selection.nodes.iter().filter_map(|n| energy.score(n)).sum();
    let report = DenoiseReport {
        m,
        n: cfg.depth,
        k: cfg.top_k,
        stride: cfg.stride(),
        filter: cfg.filter.name().to_string(),
        score_mode: cfg.score_mode,
        slice_len: ranking.entries.len(),
        patches: patches.len(),
        scores: ranking
            .entries
            .iter()
            .map(|(n, s)| ScoreRow {
                word: n.to_string(),
                s_w: *s,
            })
            .collect(),
        chosen: selection.nodes.iter().map(ToString::to_string).collect(),
        retained_energy_fraction: if total > 0.0 { kept / total } else { 1.0 },
        psnr_noisy: None,
        psnr_denoised: None,
    };
    Ok((out, report))
}
