//! Sequential content extraction.
//!
//! Starting from `R^(0) = R`, each step extracts `D_k = C_{w_k}(R^(k−1))` and
//! keeps `R^(k) = R^(k−1) − D_k`. The node is either supplied by the caller
//! ([`extract_sequence`]) or picked greedily at a fixed depth, by largest
//! block trace ([`trace_greedy`]) or largest block HS norm ([`hs_greedy`]).
//!
//! With `S = (R^(k−1))^{1/2}` both pieces are formed as Gram matrices,
//! `D_k = (B_w S)ᵀ(B_w S)` and `R^(k) = (B_c S)ᵀ(B_c S)` where `B_c` stacks
//! the bases of the other nodes at depth `|w_k|`. This is the same
//! difference, but rounding stays relative to the current remainder so the
//! chain stays in the positive cone as it shrinks.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::content::ContentEngine;
use crate::error::{Error, Result};
use crate::linalg::{loewner_leq, symmetrize, PsdOperator, SymMatrix, DEFAULT_PSD_TOL};
use crate::tree::{PacketNode, PacketTree};

/// Relative slack on every recorded decay bound.
pub const BOUND_SLACK: f64 = 1e-9;

/// Relative tolerance for the `Σ_w ‖C_w(A)‖₂² = tr(E_n(A)A)` cross-check.
pub const COHERENCE_IDENTITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionMode {
    Sequence,
    TraceGreedy,
    HsGreedy,
}

impl std::fmt::Display for ExtractionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExtractionMode::Sequence => "sequence",
            ExtractionMode::TraceGreedy => "trace-greedy",
            ExtractionMode::HsGreedy => "hs-greedy",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RetainPolicy {
    #[default]
    StatsOnly,
    /// Keep every `D_k` and `R^(k)` so the chain can be audited afterwards.
    FullBlocks,
}

#[derive(Clone, Debug)]
pub struct GreedyOptions {
    pub max_steps: usize,
    /// Stop once the remainder trace (HS norm in HS mode) drops to
    /// `stop_tol` times its initial value.
    pub stop_tol: f64,
    pub psd_tol: f64,
    pub retain: RetainPolicy,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self {
            max_steps: 64,
            stop_tol: 1e-12,
            psd_tol: DEFAULT_PSD_TOL,
            retain: RetainPolicy::StatsOnly,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionStep {
    pub k: usize,
    pub node: PacketNode,
    pub extracted_trace: f64,
    pub extracted_hs: f64,
    pub remainder_trace: f64,
    pub remainder_hs: f64,
    /// `Γ_n(R^(k−1))`, HS mode only.
    pub gamma: Option<f64>,
    /// `(1 − 1/N_n)^k · tr(R)`, trace mode only.
    pub bound_trace: Option<f64>,
    /// `(1 − 1/N_n²)^{k/2} · ‖R‖₂`, HS mode only.
    pub bound_hs: Option<f64>,
    /// `√(1 − 1/(Γ N_n)) · ‖R^(k−1)‖₂`, HS mode only.
    pub step_bound_hs: Option<f64>,
    pub bounds_ok: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialNorms {
    pub trace: f64,
    pub hs: f64,
}

#[derive(Clone, Debug)]
pub struct ExtractionTrace {
    pub mode: ExtractionMode,
    pub depth: Option<usize>,
    pub slice_len: Option<usize>,
    pub initial: InitialNorms,
    pub steps: Vec<ExtractionStep>,
    pub final_remainder: PsdOperator,
    /// `D_1, D_2, …` under [`RetainPolicy::FullBlocks`].
    pub blocks: Vec<PsdOperator>,
    /// `R^(1), R^(2), …` under [`RetainPolicy::FullBlocks`].
    pub remainders: Vec<PsdOperator>,
}

impl ExtractionTrace {
    pub fn first_violation(&self) -> Option<usize> {
        self.steps.iter().find(|s| !s.bounds_ok).map(|s| s.k)
    }

    /// `max_m ‖R − Σ_{k≤m} D_k − R^(m)‖_max` over retained prefixes.
    pub fn telescoping_error(&self, r: &PsdOperator) -> Option<f64> {
        if self.blocks.len() != self.steps.len() {
            return None;
        }
        let mut acc = DMatrix::zeros(r.dim(), r.dim());
        let mut worst = 0.0_f64;
        for (d, rem) in self.blocks.iter().zip(&self.remainders) {
            acc += d.matrix();
            let diff = r.matrix() - &acc - rem.matrix();
            worst = worst.max(diff.iter().fold(0.0_f64, |a, v| a.max(v.abs())));
        }
        Some(worst)
    }

    /// `R^(k) ≤ R^(k−1)` for every retained consecutive pair.
    pub fn loewner_chain_holds(&self, r: &PsdOperator, tol: f64) -> Result<Option<bool>> {
        if self.remainders.len() != self.steps.len() {
            return Ok(None);
        }
        let mut prev = r;
        for rem in &self.remainders {
            if !loewner_leq(rem, prev, tol)? {
                return Ok(Some(false));
            }
            prev = rem;
        }
        Ok(Some(true))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoherenceValue {
    pub gamma: f64,
    /// `Σ_w ‖C_w(A)‖₂²`
    pub denominator: f64,
    /// `‖A‖₂²`
    pub numerator: f64,
}

/// `E_n(A) = Σ_{|w|=n} P_w A P_w`.
pub fn conditional_expectation(a: &SymMatrix, tree: &PacketTree, n: usize) -> Result<SymMatrix> {
    if a.dim() != tree.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: tree.ambient_dim(),
            found: a.dim(),
        });
    }
    let dim = a.dim();
    let mut out = DMatrix::zeros(dim, dim);
    for node in tree.depth_nodes(n)? {
        let b = tree.basis(&node)?;
        let inner = b * a.matrix() * b.transpose();
        out += b.transpose() * inner * b;
    }
    SymMatrix::new(out)
}

fn coherence_of(engine: &ContentEngine<'_>, nodes: &[PacketNode]) -> Result<(CoherenceValue, Vec<f64>)> {
    let hs: Vec<f64> = nodes.iter().map(|n| engine.hs(n)).collect::<Result<_>>()?;
    let denominator: f64 = hs.iter().map(|h| h * h).sum();
    let numerator = engine.source().matrix().norm_squared();
    if denominator <= f64::MIN_POSITIVE {
        return Err(Error::UndefinedCoherence { denominator });
    }
    Ok((
        CoherenceValue {
            gamma: numerator / denominator,
            denominator,
            numerator,
        },
        hs,
    ))
}

/// `Γ_n(A) = ‖A‖₂² / Σ_{|w|=n} ‖C_w(A)‖₂²`, with the denominator checked
/// against `tr(E_n(A)·A)`.
pub fn coherence(a: &PsdOperator, tree: &PacketTree, n: usize) -> Result<CoherenceValue> {
    let engine = ContentEngine::new(a, tree)?;
    let nodes = tree.depth_nodes(n)?;
    let (value, _) = coherence_of(&engine, &nodes)?;
    let e = conditional_expectation(a.base(), tree, n)?;
    let identity = (e.matrix().component_mul(a.matrix())).sum();
    let gap = (identity - value.denominator).abs();
    if gap > COHERENCE_IDENTITY_TOL * value.denominator {
        return Err(Error::InvariantViolation(format!(
            "Σ‖C_w(A)‖₂² = {:e} but tr(E_n(A)A) = {identity:e}",
            value.denominator
        )));
    }
    Ok(value)
}

enum Selector<'n> {
    Given(&'n [PacketNode]),
    Trace(Vec<PacketNode>),
    Hs(Vec<PacketNode>),
}

fn run(r: &PsdOperator, tree: &PacketTree, selector: Selector<'_>, depth: Option<usize>, opts: &GreedyOptions) -> Result<ExtractionTrace> {
    if r.dim() != tree.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: tree.ambient_dim(),
            found: r.dim(),
        });
    }
    let mode = match selector {
        Selector::Given(_) => ExtractionMode::Sequence,
        Selector::Trace(_) => ExtractionMode::TraceGreedy,
        Selector::Hs(_) => ExtractionMode::HsGreedy,
    };
    let slice_len = match &selector {
        Selector::Given(_) => None,
        Selector::Trace(nodes) | Selector::Hs(nodes) => Some(nodes.len()),
    };
    let max_steps = match selector {
        Selector::Given(nodes) => nodes.len(),
        _ => opts.max_steps,
    };
    let initial = InitialNorms {
        trace: r.trace(),
        hs: r.hs_norm(),
    };
    let scale = r.lambda_max();
    let mut trace = ExtractionTrace {
        mode,
        depth,
        slice_len,
        initial,
        steps: Vec::new(),
        final_remainder: r.clone(),
        blocks: Vec::new(),
        remainders: Vec::new(),
    };

    for k in 1..=max_steps {
        let current = &trace.final_remainder;
        let prev_trace = current.trace();
        let prev_hs = current.hs_norm();
        match mode {
            ExtractionMode::TraceGreedy if prev_trace <= opts.stop_tol * initial.trace => break,
            ExtractionMode::HsGreedy if prev_hs <= opts.stop_tol * initial.hs => break,
            _ => {}
        }
        let engine = ContentEngine::new(current, tree)?;

        let (node, gamma) = match &selector {
            Selector::Given(nodes) => (nodes[k - 1].clone(), None),
            Selector::Trace(nodes) => {
                let masses: Vec<f64> = nodes.iter().map(|n| engine.mass(n)).collect::<Result<_>>()?;
                (nodes[argmax(&masses)].clone(), None)
            }
            Selector::Hs(nodes) => match coherence_of(&engine, nodes) {
                Ok((value, hs)) => (nodes[argmax(&hs)].clone(), Some(value.gamma)),
                Err(Error::UndefinedCoherence { .. }) => break,
                Err(e) => return Err(e),
            },
        };

        let x = engine.factor(&node)?;
        let extracted_trace = x.norm_squared();
        let extracted_hs = (&x * x.transpose()).norm();
        let complement = tree.complement_basis(&node)? * engine.sqrt_matrix();
        let breakdown = |source: Error| Error::NumericalBreakdown {
            step: k,
            source: Box::new(source),
        };
        let remainder = PsdOperator::with_scale(
            SymMatrix::new(symmetrize(complement.tr_mul(&complement))).map_err(breakdown)?,
            opts.psd_tol,
            scale,
        )
        .map_err(breakdown)?;
        if opts.retain == RetainPolicy::FullBlocks {
            let d = PsdOperator::with_scale(SymMatrix::new(symmetrize(x.tr_mul(&x))).map_err(breakdown)?, opts.psd_tol, scale)
                .map_err(breakdown)?;
            trace.blocks.push(d);
            trace.remainders.push(remainder.clone());
        }

        let remainder_trace = remainder.trace();
        let remainder_hs = remainder.hs_norm();
        let mut step = ExtractionStep {
            k,
            node,
            extracted_trace,
            extracted_hs,
            remainder_trace,
            remainder_hs,
            gamma,
            bound_trace: None,
            bound_hs: None,
            step_bound_hs: None,
            bounds_ok: true,
        };
        if let Some(nn) = slice_len {
            let nn = nn as f64;
            match mode {
                ExtractionMode::TraceGreedy => {
                    let bound = (1.0 - 1.0 / nn).powi(k as i32) * initial.trace;
                    step.bound_trace = Some(bound);
                    step.bounds_ok = remainder_trace <= bound + BOUND_SLACK * initial.trace
                        && remainder_trace <= (1.0 - 1.0 / nn) * prev_trace + BOUND_SLACK * initial.trace;
                }
                ExtractionMode::HsGreedy => {
                    let g = gamma.expect("HS mode records gamma");
                    let uniform = (1.0 - 1.0 / (nn * nn)).powf(k as f64 / 2.0) * initial.hs;
                    let one_step2 = (1.0 - 1.0 / (g * nn)) * prev_hs * prev_hs;
                    step.bound_hs = Some(uniform);
                    step.step_bound_hs = Some(one_step2.max(0.0).sqrt());
                    let rem2 = remainder_hs * remainder_hs;
                    let prev2 = prev_hs * prev_hs;
                    step.bounds_ok = rem2 <= one_step2 + BOUND_SLACK * prev2
                        && rem2 <= uniform * uniform + BOUND_SLACK * initial.hs * initial.hs
                        && rem2 <= prev2 - extracted_hs * extracted_hs + BOUND_SLACK * prev2
                        && (1.0 - BOUND_SLACK..=nn + BOUND_SLACK).contains(&g);
                }
                ExtractionMode::Sequence => {}
            }
        }
        trace.steps.push(step);
        trace.final_remainder = remainder;
    }
    Ok(trace)
}

/// First index of the maximum; earlier (lexicographically smaller) nodes win ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Extracts along a caller-supplied node list; nodes may sit at any depth.
pub fn extract_sequence(r: &PsdOperator, tree: &PacketTree, nodes: &[PacketNode], retain: RetainPolicy) -> Result<ExtractionTrace> {
    if let Some(bad) = nodes.iter().find(|n| !tree.contains(n)) {
        return Err(Error::UnknownNode(bad.to_string()));
    }
    let opts = GreedyOptions {
        retain,
        ..GreedyOptions::default()
    };
    run(r, tree, Selector::Given(nodes), None, &opts)
}

/// Depth-`n` greedy removal of the heaviest cylinder `argmax_w tr C_w(R^(k−1))`.
pub fn trace_greedy(r: &PsdOperator, tree: &PacketTree, n: usize, opts: &GreedyOptions) -> Result<ExtractionTrace> {
    let nodes = tree.depth_nodes(n)?;
    run(r, tree, Selector::Trace(nodes), Some(n), opts)
}

/// Depth-`n` greedy removal of the block with the largest HS norm, recording
/// `Γ_n(R^(k−1))` at every step.
pub fn hs_greedy(r: &PsdOperator, tree: &PacketTree, n: usize, opts: &GreedyOptions) -> Result<ExtractionTrace> {
    let nodes = tree.depth_nodes(n)?;
    run(r, tree, Selector::Hs(nodes), Some(n), opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub k: usize,
    pub node: String,
    pub extracted_trace: f64,
    pub extracted_hs: f64,
    pub remainder_trace: f64,
    pub remainder_hs: f64,
    pub gamma: Option<f64>,
    pub bound_trace: Option<f64>,
    pub bound_hs: Option<f64>,
    pub bounds_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySummary {
    pub steps: usize,
    pub first_violation: Option<usize>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub mode: ExtractionMode,
    pub depth: Option<usize>,
    #[serde(rename = "N_n")]
    pub slice_len: Option<usize>,
    pub initial: InitialNorms,
    pub steps: Vec<DecayRow>,
    pub summary: DecaySummary,
}

/// Re-checks every recorded step against its envelope using only the
/// recorded numbers.
pub fn decay_report(trace: &ExtractionTrace) -> DecayReport {
    let init = trace.initial;
    let mut prev_trace = init.trace;
    let mut prev_hs = init.hs;
    let mut steps = Vec::with_capacity(trace.steps.len());
    let mut first_violation = None;
    for s in &trace.steps {
        let mut ok = s.remainder_trace <= prev_trace + BOUND_SLACK * init.trace
            && s.remainder_trace >= -BOUND_SLACK * init.trace;
        if let Some(b) = s.bound_trace {
            ok &= s.remainder_trace <= b + BOUND_SLACK * init.trace;
        }
        if let (Some(b), Some(g), Some(nn)) = (s.bound_hs, s.gamma, trace.slice_len) {
            let nn = nn as f64;
            let rem2 = s.remainder_hs * s.remainder_hs;
            let prev2 = prev_hs * prev_hs;
            ok &= rem2 <= (1.0 - 1.0 / (g * nn)) * prev2 + BOUND_SLACK * prev2;
            ok &= rem2 <= b * b + BOUND_SLACK * init.hs * init.hs;
            ok &= (1.0 - BOUND_SLACK..=nn + BOUND_SLACK).contains(&g);
        }
        if !ok && first_violation.is_none() {
            first_violation = Some(s.k);
        }
        steps.push(DecayRow {
            k: s.k,
            node: s.node.to_string(),
            extracted_trace: s.extracted_trace,
            extracted_hs: s.extracted_hs,
            remainder_trace: s.remainder_trace,
            remainder_hs: s.remainder_hs,
            gamma: s.gamma,
            bound_trace: s.bound_trace,
            bound_hs: s.bound_hs,
            bounds_ok: ok,
        });
        prev_trace = s.remainder_trace;
        prev_hs = s.remainder_hs;
    }
    let message = match (steps.len(), first_violation) {
        (0, _) => "no steps".to_string(),
        (n, None) => format!("{n} steps, all within bounds"),
        (n, Some(k)) => format!("{n} steps, first bound violation at step {k}"),
    };
    DecayReport {
        mode: trace.mode,
        depth: trace.depth,
        slice_len: trace.slice_len,
        initial: init,
        summary: DecaySummary {
            steps: steps.len(),
            first_violation,
            message,
        },
        steps,
    }
}

impl DecayReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.steps {
            w.serialize(row)?;
        }
        if self.steps.is_empty() {
            w.write_record([
                "k",
                "node",
                "extracted_trace",
                "extracted_hs",
                "remainder_trace",
                "remainder_hs",
                "gamma",
                "bound_trace",
                "bound_hs",
                "bounds_ok",
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
