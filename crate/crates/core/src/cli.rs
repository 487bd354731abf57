//! `wpc` command line: decompose, greedy, denoise, selftest.
//!
//! Exit codes: 0 success, 1 selftest failure, 2 malformed input,
//! 3 not positive semidefinite, 4 bound violation, 5 config violation.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::content::{cylinder_weights, depth_decomposition, CylinderRow};
use crate::denoise::{add_gaussian_noise, denoise_image, DenoiseConfig, ScoreMode};
use crate::error::{Error, Result};
use crate::filters::FilterPair;
use crate::greedy::{decay_report, hs_greedy, trace_greedy, GreedyOptions};
use crate::linalg::{MatrixJson, PsdOperator, DEFAULT_PSD_TOL};
use crate::pgm::{read_pgm_file, write_pgm_file};
use crate::selftest::{run_selftest, SelftestOptions};
use crate::tree::{build_filter_tree_1d, build_filter_tree_2d, build_shannon_tree, PacketTree, ShannonSymbol};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFTEST: i32 = 1;
pub const EXIT_MALFORMED: i32 = 2;
pub const EXIT_NOT_POSITIVE: i32 = 3;
pub const EXIT_BOUND: i32 = 4;
pub const EXIT_CONFIG: i32 = 5;

/// Relative asymmetry tolerated in matrix input.
const INPUT_SYM_TOL: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "wpc", version, about = "Wavelet packet content operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cylinder masses of every node down to the chosen depth.
    Decompose(DecomposeArgs),
    /// Trace or HS greedy extraction with per-step decay bounds.
    Greedy(GreedyArgs),
    /// Packet-block patch denoising of a PGM image.
    Denoise(DenoiseArgs),
    /// Seeded invariant suite.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TreeKind {
    Shannon,
    Haar,
    D4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Trace,
    Hs,
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    #[arg(long, value_enum, default_value = "shannon")]
    pub tree: TreeKind,
    /// Shannon levels; defaults to log2 of the input dimension.
    #[arg(long)]
    pub levels: Option<u32>,
    /// Builds a 2D tree on `side × side` patches instead of a 1D tree.
    #[arg(long = "patch-side")]
    pub patch_side: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long = "psd-tol", env = "WPC_TOL", default_value_t = DEFAULT_PSD_TOL)]
    pub psd_tol: f64,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Cylinder JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Validation summary JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GreedyArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "trace")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 64)]
    pub steps: usize,
    #[arg(long = "stop-tol", default_value_t = 1e-12)]
    pub stop_tol: f64,
    /// Decay report JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Decay report CSV; defaults to `--out` with a `.csv` extension.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long, value_enum, default_value = "haar")]
    pub tree: TreeKind,
    #[arg(long = "patch-side", default_value_t = 8)]
    pub patch_side: usize,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 4)]
    pub topk: usize,
    /// Defaults to half the patch side.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, value_enum, default_value = "trace")]
    pub mode: ModeArg,
    /// Noise added to the input before denoising; the input then serves as
    /// the clean reference unless `--clean` is given.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub clean: Option<PathBuf>,
    /// Report JSON; stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub quick: bool,
    /// Fault injection: zero one basis row of a fixture tree.
    #[arg(long = "corrupt-tree")]
    pub corrupt_tree: bool,
}

/// Accepted input JSON: a dense matrix or a Shannon symbol.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum OperatorInput {
    Matrix(MatrixJson),
    Symbol { symbol: Vec<f64> },
}

#[derive(Debug, Serialize)]
pub struct DecomposeSummary {
    pub realization: String,
    pub ambient_dim: usize,
    pub max_depth: usize,
    pub rows: usize,
    pub trace: f64,
    pub root_mass: f64,
    pub additivity_violation: f64,
    pub root_mass_violation: f64,
    pub reconstruction_error: f64,
    pub ok: bool,
}

/// Failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<i32, Failure>;

fn config(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

/// Maps a library error onto the exit-code partition.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotPositive { .. } => EXIT_NOT_POSITIVE,
        Error::NumericalBreakdown { source, .. } => exit_code(source),
        Error::InvalidDepth(_) | Error::InvalidFilter(_) | Error::InvalidConfig(_) | Error::UnknownNode(_) | Error::DimensionMismatch { .. } => {
            EXIT_CONFIG
        }
        Error::InvariantViolation(_) | Error::UndefinedCoherence { .. } | Error::NonConvergence { .. } | Error::AbsoluteContinuityViolation { .. } => {
            EXIT_BOUND
        }
        Error::Malformed(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => EXIT_MALFORMED,
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_MALFORMED } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Decompose(a) => cmd_decompose(&a),
        Command::Greedy(a) => cmd_greedy(&a),
        Command::Denoise(a) => cmd_denoise(&a),
        Command::Selftest(a) => cmd_selftest(&a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("wpc: {}", f.message);
            f.code
        }
    }
}

fn read_input(path: &Path) -> std::result::Result<OperatorInput, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_MALFORMED,
        message: format!("{}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| Failure {
        code: EXIT_MALFORMED,
        message: format!("{}: expected {{dim, data}} or {{symbol}}: {e}", path.display()),
    })
}

fn check_tol(name: &str, v: f64) -> std::result::Result<(), Failure> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(config(format!("{name} must be finite and >= 0, got {v}")))
    }
}

fn filter_for(kind: TreeKind) -> Option<FilterPair> {
    match kind {
        TreeKind::Shannon => None,
        TreeKind::Haar => Some(FilterPair::haar()),
        TreeKind::D4 => Some(FilterPair::daubechies4()),
    }
}

/// Loads the operator and builds the matching tree.
fn load(args: &TreeArgs, input: &Path) -> std::result::Result<(PsdOperator, PacketTree), Failure> {
    check_tol("--psd-tol", args.psd_tol)?;
    if args.depth == 0 {
        return Err(config("--depth must be at least 1"));
    }
    if args.tree == TreeKind::Shannon && args.patch_side.is_some() {
        return Err(config("--patch-side needs a filter tree (haar or d4)"));
    }
    let (op, symbol_levels) = match read_input(input)? {
        OperatorInput::Matrix(m) => (PsdOperator::new(m.to_sym_matrix(INPUT_SYM_TOL)?, args.psd_tol)?, None),
        OperatorInput::Symbol { symbol } => {
            if args.tree != TreeKind::Shannon {
                return Err(config("symbol input needs --tree shannon"));
            }
            let len = symbol.len();
            if len < 2 || !len.is_power_of_two() {
                return Err(Failure {
                    code: EXIT_MALFORMED,
                    message: format!("symbol length {len} is not a power of two >= 2"),
                });
            }
            let s = ShannonSymbol::new(len.trailing_zeros(), symbol)?;
            (s.to_operator()?, Some(s.levels()))
        }
    };
    let dim = op.dim();
    let tree = match filter_for(args.tree) {
        None => {
            if !dim.is_power_of_two() || dim < 2 {
                return Err(config(format!("Shannon trees need a power-of-two dimension, got {dim}")));
            }
            let levels = args.levels.or(symbol_levels).unwrap_or(dim.trailing_zeros());
            if 1usize << levels != dim {
                return Err(config(format!("--levels {levels} does not match dimension {dim}")));
            }
            build_shannon_tree(levels, args.depth)?
        }
        Some(filter) => match args.patch_side {
            Some(side) => {
                if side * side != dim {
                    return Err(config(format!("patch side {side} does not match dimension {dim}")));
                }
                build_filter_tree_2d(&filter, side, args.depth)?
            }
            None => build_filter_tree_1d(&filter, dim, args.depth)?,
        },
    };
    Ok((op, tree))
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn decompose(args: &DecomposeArgs) -> std::result::Result<(Vec<CylinderRow>, DecomposeSummary), Failure> {
    let (op, tree) = load(&args.tree, &args.input)?;
    let weights = cylinder_weights(&op, &tree)?;
    let decomposition = depth_decomposition(&op, &tree, tree.max_depth())?;
    let additivity = weights.additivity_violation(&tree)?;
    let root = weights.root_mass_violation(op.trace());
    let rows = weights.rows();
    let summary = DecomposeSummary {
        realization: format!("{:?}", tree.realization()),
        ambient_dim: tree.ambient_dim(),
        max_depth: tree.max_depth(),
        rows: rows.len(),
        trace: op.trace(),
        root_mass: rows[0].mass,
        additivity_violation: additivity,
        root_mass_violation: root,
        reconstruction_error: decomposition.reconstruction_error(&op),
        ok: true,
    };
    Ok((rows, summary))
}

fn cmd_decompose(args: &DecomposeArgs) -> CmdResult {
    let (rows, summary) = decompose(args)?;
    write_json(args.out.as_deref(), &rows)?;
    if let Some(p) = &args.report {
        write_json(Some(p), &summary)?;
    }
    // keep stdout machine-readable when it already carries the rows
    let text = serde_json::to_string_pretty(&summary).map_err(Error::from)?;
    if args.out.is_some() {
        println!("{text}");
    } else {
        eprintln!("{text}");
    }
    Ok(EXIT_OK)
}

fn cmd_greedy(args: &GreedyArgs) -> CmdResult {
    check_tol("--stop-tol", args.stop_tol)?;
    let (op, tree) = load(&args.tree, &args.input)?;
    let opts = GreedyOptions {
        max_steps: args.steps,
        stop_tol: args.stop_tol,
        psd_tol: args.tree.psd_tol,
        ..GreedyOptions::default()
    };
    let trace = match args.mode {
        ModeArg::Trace => trace_greedy(&op, &tree, args.tree.depth, &opts)?,
        ModeArg::Hs => hs_greedy(&op, &tree, args.tree.depth, &opts)?,
    };
    let report = decay_report(&trace);
    write_json(args.out.as_deref(), &report)?;
    let csv_path = args
        .report
        .clone()
        .or_else(|| args.out.as_ref().map(|p| p.with_extension("csv")));
    if let Some(p) = csv_path {
        report.write_csv(fs::File::create(p).map_err(Error::from)?)?;
    }
    match report.summary.first_violation {
        Some(k) => Err(Failure {
            code: EXIT_BOUND,
            message: format!("decay bound violated at step {k}"),
        }),
        None => Ok(EXIT_OK),
    }
}

fn cmd_denoise(args: &DenoiseArgs) -> CmdResult {
    let Some(filter) = filter_for(args.tree) else {
        return Err(config("denoising needs a filter tree (haar or d4)"));
    };
    if !(args.sigma.is_finite() && args.sigma >= 0.0) {
        return Err(config(format!("--sigma must be finite and >= 0, got {}", args.sigma)));
    }
    let cfg = DenoiseConfig {
        patch_side: args.patch_side,
        depth: args.depth,
        top_k: args.topk,
        stride: args.stride,
        filter,
        score_mode: match args.mode {
            ModeArg::Trace => ScoreMode::Trace,
            ModeArg::Hs => ScoreMode::Hs,
        },
    };
    cfg.validate()?;

    let input = read_pgm_file(&args.input)?;
    let clean = match &args.clean {
        Some(p) => Some(read_pgm_file(p)?),
        None if args.sigma > 0.0 => Some(input.clone()),
        None => None,
    };
    let noisy = add_gaussian_noise(&input, args.sigma, args.seed)?;
    if input.width().min(input.height()) < cfg.patch_side {
        return Err(config(format!(
            "patch side {} exceeds the {}x{} image",
            cfg.patch_side,
            input.width(),
            input.height()
        )));
    }
    let (denoised, mut report) = denoise_image(&noisy, &cfg)?;
    if let Some(c) = &clean {
        report = report.with_reference(c, &noisy, &denoised)?;
    }
    if let Some(p) = &args.out {
        write_pgm_file(&denoised, p)?;
    }
    write_json(args.report.as_deref(), &report)?;
    Ok(EXIT_OK)
}

fn cmd_selftest(args: &SelftestArgs) -> CmdResult {
    let report = run_selftest(&SelftestOptions {
        seed: args.seed,
        quick: args.quick,
        corrupt_tree: args.corrupt_tree,
    })
    .map_err(|e| Failure {
        code: EXIT_SELFTEST,
        message: e.to_string(),
    })?;
    print!("{}", report.table());
    if report.passed() {
        Ok(EXIT_OK)
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name).collect();
        Err(Failure {
            code: EXIT_SELFTEST,
            message: format!("selftest failed: {}", names.join(", ")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_partition_errors() {
        assert_eq!(exit_code(&Error::Malformed("x".into())), EXIT_MALFORMED);
        assert_eq!(
            exit_code(&Error::NotPositive {
                eigenvalue: -1.0,
                threshold: 0.0
            }),
            EXIT_NOT_POSITIVE
        );
        let nested = Error::NumericalBreakdown {
            step: 2,
            source: Box::new(Error::NotPositive {
                eigenvalue: -1.0,
                threshold: 0.0,
            }),
        };
        assert_eq!(exit_code(&nested), EXIT_NOT_POSITIVE);
        assert_eq!(exit_code(&Error::InvalidDepth("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::InvariantViolation("x".into())), EXIT_BOUND);
    }

    #[test]
    fn parses_input_forms() {
        let m: OperatorInput = serde_json::from_str(r#"{"dim":1,"data":[2.0]}"#).unwrap();
        assert!(matches!(m, OperatorInput::Matrix(_)));
        let s: OperatorInput = serde_json::from_str(r#"{"symbol":[1,0]}"#).unwrap();
        assert!(matches!(s, OperatorInput::Symbol { .. }));
        assert!(serde_json::from_str::<OperatorInput>(r#"{"rows":[]}"#).is_err());
    }

    #[test]
    fn usage_errors_are_malformed() {
        assert_eq!(run(["wpc", "greedy", "--mode", "bogus", "--in", "x"]), EXIT_MALFORMED);
        assert_eq!(run(["wpc", "--help"]), EXIT_OK);
    }
}
