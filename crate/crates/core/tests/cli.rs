use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;
use tempfile::TempDir;
use wpc::denoise::{add_gaussian_noise, piecewise_smooth_image};
use wpc::filters::FilterPair;
use wpc::linalg::MatrixJson;
use wpc::pgm::{write_pgm, PgmFormat};
use wpc::sampling::{block_diagonal_gram, rng};
use wpc::tree::build_filter_tree_1d;

fn wpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wpc"))
        .args(args)
        .env_remove("WPC_TOL")
        .output()
        .expect("wpc runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

struct Scratch(TempDir);

impl Scratch {
    fn new() -> Self {
        Scratch(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn write(&self, name: &str, body: impl AsRef<[u8]>) -> String {
        let p = self.path(name);
        std::fs::write(&p, body).unwrap();
        p.to_string_lossy().into_owned()
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn decompose_symbol_matches_band_sums() {
    let s = Scratch::new();
    let input = s.write("s.json", r#"{"symbol":[1,2,3,4,5,6,7,8]}"#);
    let out = wpc(&["decompose", "--in", &input, "--levels", "3", "--out", &s.arg("c.json"), "--report", &s.arg("r.json")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = json(&s.path("c.json"));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 7);
    // frequency k sits at position k + 4, so word 0 covers values 1..=4
    let expect = [("", 36.0), ("0", 10.0), ("1", 26.0), ("00", 3.0), ("01", 7.0), ("10", 11.0), ("11", 15.0)];
    for (row, (word, mass)) in rows.iter().zip(expect) {
        assert_eq!(row["word"], word);
        assert!((row["mass"].as_f64().unwrap() - mass).abs() < 1e-12);
    }
    let report = json(&s.path("r.json"));
    assert!(report["additivity_violation"].as_f64().unwrap() < 1e-12);
    assert_eq!(report["rows"], 7);
}

#[test]
fn decompose_zero_matrix() {
    let s = Scratch::new();
    let input = s.write("z.json", serde_json::to_string(&MatrixJson { dim: 4, data: vec![0.0; 16] }).unwrap());
    let out = wpc(&["decompose", "--in", &input, "--tree", "haar", "--out", &s.arg("c.json")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = json(&s.path("c.json"));
    assert!(rows.as_array().unwrap().iter().all(|r| r["mass"].as_f64() == Some(0.0)));
}

#[test]
fn malformed_and_non_positive_inputs() {
    let s = Scratch::new();
    let asym = s.write("a.json", r#"{"dim":2,"data":[1,2,0,1]}"#);
    assert_eq!(code(&wpc(&["decompose", "--in", &asym])), 2);
    let short = s.write("b.json", r#"{"dim":2,"data":[1,2,3]}"#);
    assert_eq!(code(&wpc(&["decompose", "--in", &short])), 2);
    let junk = s.write("c.json", "not json");
    assert_eq!(code(&wpc(&["greedy", "--in", &junk])), 2);
    assert_eq!(code(&wpc(&["greedy", "--in", &s.arg("missing.json")])), 2);
    let neg = s.write("n.json", r#"{"dim":2,"data":[1,2,2,1]}"#);
    assert_eq!(code(&wpc(&["decompose", "--in", &neg, "--depth", "1"])), 3);
    // depth beyond the tree is a configuration error
    let ok = s.write("i.json", r#"{"dim":4,"data":[1,0,0,0,0,1,0,0,0,0,1,0,0,0,0,1]}"#);
    assert_eq!(code(&wpc(&["decompose", "--in", &ok, "--depth", "3"])), 5);
}

#[test]
fn psd_tolerance_from_environment() {
    let s = Scratch::new();
    let input = s.write("m.json", r#"{"dim":2,"data":[1,0,0,-1e-6]}"#);
    let strict = wpc(&["decompose", "--in", &input, "--depth", "1"]);
    assert_eq!(code(&strict), 3);
    let relaxed = Command::new(env!("CARGO_BIN_EXE_wpc"))
        .args(["decompose", "--in", &input, "--depth", "1"])
        .env("WPC_TOL", "1e-5")
        .output()
        .unwrap();
    assert_eq!(code(&relaxed), 0);
    assert_eq!(code(&wpc(&["decompose", "--in", &input, "--depth", "1", "--psd-tol", "1e-5"])), 0);
}

#[test]
fn greedy_trace_csv_under_envelope() {
    let s = Scratch::new();
    let input = s.write("s.json", r#"{"symbol":[5,1,0,2,7,3,3,1,0,0,4,2,6,1,1,2]}"#);
    let out = wpc(&["greedy", "--in", &input, "--depth", "2", "--mode", "trace", "--out", &s.arg("g.json")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(s.path("g.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let rem = headers.iter().position(|h| h == "remainder_trace").unwrap();
    let bound = headers.iter().position(|h| h == "bound_trace").unwrap();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let r: f64 = rec[rem].parse().unwrap();
        let b: f64 = rec[bound].parse().unwrap();
        assert!(r <= b * (1.0 + 1e-9));
        rows += 1;
    }
    // a diagonal operator at depth 2 is exhausted in at most 4 steps
    assert!((1..=4).contains(&rows));
    assert_eq!(json(&s.path("g.json"))["N_n"], 4);
}

#[test]
fn greedy_hs_block_diagonal_has_unit_gamma() {
    let s = Scratch::new();
    let tree = build_filter_tree_1d(&FilterPair::haar(), 16, 2).unwrap();
    let r = block_diagonal_gram(&tree, 2, &mut rng(8));
    let input = s.write("bd.json", serde_json::to_string(&MatrixJson::from_sym(r.base())).unwrap());
    let out = wpc(&[
        "greedy", "--in", &input, "--tree", "haar", "--depth", "2", "--mode", "hs", "--steps", "6", "--out", &s.arg("g.json"), "--report", &s.arg("g.csv"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&s.path("g.json"));
    let steps = report["steps"].as_array().unwrap();
    assert!(!steps.is_empty());
    for step in steps {
        assert!((step["gamma"].as_f64().unwrap() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn greedy_zero_steps_is_empty() {
    let s = Scratch::new();
    let input = s.write("s.json", r#"{"symbol":[1,2,3,4]}"#);
    let out = wpc(&["greedy", "--in", &input, "--depth", "1", "--steps", "0"]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["steps"].as_array().unwrap().len(), 0);
    assert_eq!(report["summary"]["message"], "no steps");
}

fn fixture_image(s: &Scratch) -> (String, String) {
    let clean = piecewise_smooth_image(48, 40);
    let noisy = add_gaussian_noise(&clean, 0.1, 99).unwrap();
    (
        s.write("clean.pgm", write_pgm(&clean, PgmFormat::Binary)),
        s.write("noisy.pgm", write_pgm(&noisy, PgmFormat::Binary)),
    )
}

#[test]
fn denoise_full_selection_is_byte_identical() {
    let s = Scratch::new();
    let (_, noisy) = fixture_image(&s);
    let out = wpc(&["denoise", "--in", &noisy, "--topk", "16", "--out", &s.arg("d.pgm"), "--report", &s.arg("d.json")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(s.path("d.pgm")).unwrap(), std::fs::read(&noisy).unwrap());
    let report = json(&s.path("d.json"));
    assert!(report.get("psnr_noisy").is_none());
    assert_eq!(report["N_n"], 16);
}

#[test]
fn denoise_with_reference_improves_psnr() {
    let s = Scratch::new();
    let (clean, noisy) = fixture_image(&s);
    let out = wpc(&["denoise", "--in", &noisy, "--clean", &clean, "--topk", "2", "--stride", "4", "--report", &s.arg("d.json")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&s.path("d.json"));
    for key in ["m", "n", "K", "stride", "filter", "N_n", "scores", "chosen", "retained_energy_fraction"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert!(report["psnr_denoised"].as_f64().unwrap() > report["psnr_noisy"].as_f64().unwrap());
}

#[test]
fn denoise_config_and_input_errors() {
    let s = Scratch::new();
    let (_, noisy) = fixture_image(&s);
    assert_eq!(code(&wpc(&["denoise", "--in", &noisy, "--patch-side", "8", "--depth", "4"])), 5);
    assert_eq!(code(&wpc(&["denoise", "--in", &noisy, "--topk", "0"])), 5);
    assert_eq!(code(&wpc(&["denoise", "--in", &noisy, "--tree", "shannon"])), 5);
    let colour = s.write("c.ppm", b"P6\n1 1\n255\n\0\0\0");
    let out = wpc(&["denoise", "--in", &colour]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("grayscale only"));
    let truncated = s.write("t.pgm", b"P5\n4 4\n255\n\0\0");
    assert_eq!(code(&wpc(&["denoise", "--in", &truncated])), 2);
}

#[test]
fn selftest_default_and_quick() {
    assert_eq!(code(&wpc(&["selftest"])), 0);
    let start = Instant::now();
    let out = wpc(&["selftest", "--quick"]);
    assert!(start.elapsed() < Duration::from_secs(10));
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn selftest_names_corrupted_invariant() {
    let out = wpc(&["selftest", "--quick", "--corrupt-tree"]);
    assert_eq!(code(&out), 1);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().find(|l| l.starts_with("tree-structure")).unwrap();
    assert!(line.contains("FAIL"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tree-structure"));
}

#[test]
fn usage_errors() {
    assert_eq!(code(&wpc(&[])), 2);
    assert_eq!(code(&wpc(&["greedy", "--mode", "sideways", "--in", "x"])), 2);
}
