//! Seeded invariant suite behind `wpc selftest`.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::content::{cylinder_weights, depth_decomposition, parallelogram_check, MEASURE_TOL, RECONSTRUCTION_TOL};
use crate::denoise::{add_gaussian_noise, denoise_image, piecewise_smooth_image, DenoiseConfig};
use crate::error::Result;
use crate::filters::FilterPair;
use crate::greedy::{coherence, hs_greedy, trace_greedy, GreedyOptions};
use crate::pgm::{write_pgm, PgmFormat};
use crate::sampling::{block_diagonal_gram, gaussian_vector, gram_from, random_symbol, rng};
use crate::tree::{build_filter_tree_1d, build_shannon_tree, validate_tree, PacketNode, PacketTree};

#[derive(Clone, Copy, Debug, Default)]
pub struct SelftestOptions {
    pub seed: u64,
    /// Smaller instance counts and dimensions.
    pub quick: bool,
    /// Zero one basis row of one fixture tree before running.
    pub corrupt_tree: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub instances: usize,
    /// Worst observed violation or the first error.
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub quick: bool,
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22} {:<6} {:>5} {:>8}  detail", "invariant", "result", "n", "secs");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<22} {:<6} {:>5} {:>8.3}  {}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.instances,
                c.seconds,
                c.detail
            );
        }
        let failed = self.failures().count();
        let _ = writeln!(out, "{} checks, {} failed", self.checks.len(), failed);
        out
    }
}

struct Fixture {
    tree: PacketTree,
    depths: Vec<usize>,
}

fn fixtures(quick: bool, corrupt: bool) -> Result<Vec<Fixture>> {
    let mut out = vec![
        Fixture {
            tree: build_shannon_tree(3, 3)?,
            depths: vec![1, 2, 3],
        },
        Fixture {
            tree: build_filter_tree_1d(&FilterPair::haar(), 8, 3)?,
            depths: vec![1, 2, 3],
        },
        Fixture {
            tree: build_filter_tree_1d(&FilterPair::daubechies4(), 16, 2)?,
            depths: vec![1, 2],
        },
    ];
    if !quick {
        out.push(Fixture {
            tree: build_shannon_tree(5, 3)?,
            depths: vec![1, 2, 3],
        });
        out.push(Fixture {
            tree: build_filter_tree_1d(&FilterPair::daubechies4(), 32, 3)?,
            depths: vec![1, 2, 3],
        });
    }
    if corrupt {
        let node = PacketNode::parse("01")?;
        out[1].tree.zero_basis_row(&node, 0)?;
    }
    Ok(out)
}

/// Tracks the worst relative violation across instances.
struct Tally {
    worst: f64,
    instances: usize,
    error: Option<String>,
}

impl Tally {
    fn new() -> Self {
        Self {
            worst: 0.0,
            instances: 0,
            error: None,
        }
    }

    fn record(&mut self, r: Result<f64>) {
        self.instances += 1;
        match r {
            Ok(v) => self.worst = self.worst.max(if v.is_nan() { f64::INFINITY } else { v }),
            Err(e) => {
                if self.error.is_none() {
                    self.error = Some(e.to_string());
                }
            }
        }
    }

    fn finish(self, name: &'static str, limit: f64, start: Instant) -> CheckResult {
        let passed = self.error.is_none() && self.worst <= limit;
        let detail = match self.error {
            Some(e) => e,
            None => format!("worst {:.3e} (limit {limit:.0e})", self.worst),
        };
        CheckResult {
            name,
            passed,
            instances: self.instances,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

pub fn run_selftest(opts: &SelftestOptions) -> Result<SelftestReport> {
    let trees = fixtures(opts.quick, opts.corrupt_tree)?;
    let per_tree = if opts.quick { 2 } else { 6 };
    let mut r = rng(opts.seed);
    let mut checks = Vec::new();

    let start = Instant::now();
    let mut t = Tally::new();
    for f in &trees {
        t.record(Ok(validate_tree(&f.tree).max_violation()));
    }
    checks.push(t.finish("tree-structure", 1e-10, start));

    // Shared random Grams, one batch per fixture.
    let grams: Vec<Vec<_>> = trees
        .iter()
        .map(|f| {
            let dim = f.tree.ambient_dim();
            (0..per_tree)
                .map(|_| {
                    let rank = r.random_range(1..=dim);
                    gram_from(dim, rank, &mut r)
                })
                .collect()
        })
        .collect();

    let start = Instant::now();
    let mut t = Tally::new();
    for (f, gs) in trees.iter().zip(&grams) {
        for g in gs {
            for &n in &f.depths {
                t.record(depth_decomposition(g, &f.tree, n).map(|d| d.reconstruction_error(g) / (1.0 + g.hs_norm())));
            }
        }
    }
    checks.push(t.finish("reconstruction", RECONSTRUCTION_TOL, start));

    let start = Instant::now();
    let mut t = Tally::new();
    for (f, gs) in trees.iter().zip(&grams) {
        for g in gs {
            t.record(cylinder_weights(g, &f.tree).and_then(|w| Ok(w.additivity_violation(&f.tree)?.max(w.root_mass_violation(g.trace())))));
        }
    }
    checks.push(t.finish("cylinder-measure", MEASURE_TOL, start));

    let greedy_opts = GreedyOptions {
        max_steps: if opts.quick { 8 } else { 16 },
        ..GreedyOptions::default()
    };

    let start = Instant::now();
    let mut t = Tally::new();
    for (f, gs) in trees.iter().zip(&grams) {
        for g in gs {
            for &n in &f.depths {
                t.record(trace_greedy(g, &f.tree, n, &greedy_opts).map(|tr| {
                    let nn = tr.slice_len.unwrap_or(1) as f64;
                    let mut worst = if tr.first_violation().is_some() { f64::INFINITY } else { 0.0 };
                    for s in &tr.steps {
                        let env = (1.0 - 1.0 / nn).powi(s.k as i32) * tr.initial.trace;
                        worst = worst.max((s.remainder_trace - env) / tr.initial.trace.max(f64::MIN_POSITIVE));
                    }
                    worst
                }));
            }
        }
    }
    checks.push(t.finish("trace-envelope", 1e-9, start));

    let start = Instant::now();
    let mut t = Tally::new();
    for (f, gs) in trees.iter().zip(&grams) {
        for g in gs {
            for &n in &f.depths {
                t.record(hs_greedy(g, &f.tree, n, &greedy_opts).map(|tr| {
                    let nn = tr.slice_len.unwrap_or(1) as f64;
                    let h0 = tr.initial.hs.max(f64::MIN_POSITIVE);
                    let mut worst = if tr.first_violation().is_some() { f64::INFINITY } else { 0.0 };
                    for s in &tr.steps {
                        let env = (1.0 - 1.0 / (nn * nn)).powf(s.k as f64 / 2.0) * tr.initial.hs;
                        worst = worst.max((s.remainder_hs - env) / h0);
                    }
                    worst
                }));
            }
        }
    }
    checks.push(t.finish("hs-envelope", 1e-9, start));

    let start = Instant::now();
    let mut t = Tally::new();
    for (f, gs) in trees.iter().zip(&grams) {
        for &n in &f.depths {
            let nn = f.tree.slice_len(n)? as f64;
            for g in gs {
                t.record(coherence(g, &f.tree, n).map(|c| (1.0 - c.gamma).max(c.gamma - nn).max(0.0)));
            }
            let bd = block_diagonal_gram(&f.tree, n, &mut r);
            t.record(coherence(&bd, &f.tree, n).map(|c| (c.gamma - 1.0).abs()));
        }
    }
    checks.push(t.finish("coherence-range", 1e-9, start));

    let start = Instant::now();
    let mut t = Tally::new();
    for (f, gs) in trees.iter().zip(&grams) {
        let dim = f.tree.ambient_dim();
        let n = *f.depths.last().expect("nonempty depths");
        for g in gs {
            let x = gaussian_vector(dim, &mut r);
            let y = gaussian_vector(dim, &mut r);
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = 1.0 + g.lambda_max() * (nx + ny).powi(2);
            t.record(parallelogram_check(g, &f.tree, &x, &y, n).map(|v| v / scale));
        }
    }
    checks.push(t.finish("parallelogram", 1e-9, start));

    let start = Instant::now();
    let mut t = Tally::new();
    let levels = if opts.quick { 3 } else { 4 };
    let shannon = build_shannon_tree(levels, levels as usize)?;
    for _ in 0..per_tree {
        let symbol = random_symbol(levels, &mut r);
        t.record((|| {
            let op = symbol.to_operator()?;
            let w = cylinder_weights(&op, &shannon)?;
            let mut worst = 0.0_f64;
            for (node, mass) in w.iter() {
                let band = shannon.band(node)?.expect("Shannon nodes carry bands");
                worst = worst.max((mass - symbol.band_sum(band)).abs());
            }
            Ok(worst)
        })());
    }
    checks.push(t.finish("shannon-oracle", 1e-12, start));

    let start = Instant::now();
    let mut t = Tally::new();
    let side = if opts.quick { 16 } else { 32 };
    let noisy = add_gaussian_noise(&piecewise_smooth_image(side, side), 0.1, opts.seed)?;
    let cfg = DenoiseConfig {
        top_k: 16,
        ..DenoiseConfig::default()
    };
    t.record(denoise_image(&noisy, &cfg).map(|(out, _)| {
        let same = write_pgm(&out, PgmFormat::Binary) == write_pgm(&noisy, PgmFormat::Binary);
        if same {
            0.0
        } else {
            1.0
        }
    }));
    checks.push(t.finish("denoise-identity", 0.0, start));

    Ok(SelftestReport {
        seed: opts.seed,
        quick: opts.quick,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let report = run_selftest(&SelftestOptions {
            quick: true,
            ..SelftestOptions::default()
        })
        .unwrap();
        assert!(report.passed(), "{}", report.table());
    }

    #[test]
    fn corrupted_tree_is_named() {
        let report = run_selftest(&SelftestOptions {
            quick: true,
            corrupt_tree: true,
            ..SelftestOptions::default()
        })
        .unwrap();
        assert!(!report.passed());
        let failed: Vec<&str> = report.failures().map(|c| c.name).collect();
        assert!(failed.contains(&"tree-structure"), "{failed:?}");
        assert!(report.table().contains("FAIL"));
    }
}
