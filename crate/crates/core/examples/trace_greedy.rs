//! Trace greedy extraction against the `(1 - 1/N_n)^k` envelope.
//!
//! ```text
//! cargo run --example trace_greedy
//! ```

use wpc::filters::FilterPair;
use wpc::greedy::{decay_report, trace_greedy, GreedyOptions};
use wpc::sampling::random_gram;
use wpc::tree::{build_filter_tree_1d, build_shannon_tree, ShannonSymbol};

fn main() -> wpc::Result<()> {
    let tree = build_filter_tree_1d(&FilterPair::haar(), 16, 2)?;
    let r = random_gram(16, 16, 3);
    let opts = GreedyOptions {
        max_steps: 8,
        ..GreedyOptions::default()
    };
    let report = decay_report(&trace_greedy(&r, &tree, 2, &opts)?);
    println!("{:>2} {:<4} {:>12} {:>12}", "k", "node", "tr R^(k)", "envelope");
    for s in &report.steps {
        println!("{:>2} {:<4} {:>12.6} {:>12.6}", s.k, s.node, s.remainder_trace, s.bound_trace.unwrap_or(f64::NAN));
    }
    println!("{}", report.summary.message);

    // diagonal operators empty out after at most N_n steps
    let symbol = ShannonSymbol::from_fn(4, |k| 1.0 / (1.0 + k.abs() as f64))?;
    let r = symbol.to_operator()?;
    let tree = build_shannon_tree(4, 2)?;
    let trace = trace_greedy(&r, &tree, 2, &GreedyOptions::default())?;
    println!("diagonal: {} steps, final trace {:.2e}", trace.steps.len(), trace.final_remainder.trace());

    let mut csv = Vec::new();
    report.write_csv(&mut csv).expect("writes to memory");
    println!("csv header: {}", String::from_utf8_lossy(&csv).lines().next().unwrap_or_default());
    Ok(())
}
