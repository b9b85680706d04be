use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn hmmr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmmr")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", stdout(o)))
}

struct Scratch(PathBuf);

impl Scratch {
    fn new(name: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("hmmr-cli-{name}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        Scratch(dir)
    }

    fn path(&self, file: &str) -> String {
        self.0.join(file).to_string_lossy().into_owned()
    }

    fn write(&self, file: &str, text: &str) -> String {
        let p = self.path(file);
        std::fs::write(&p, text).unwrap();
        p
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn fox_rubin(dir: &Scratch) -> String {
    let p = dir.path("fr.json");
    let o = hmmr(&["example", "fox-rubin", "--m", "5", "--lambda", "0.4", "--out", &p]);
    assert!(o.status.success());
    p
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn analyze_reports_fox_rubin_dimensions() {
    let dir = Scratch::new("analyze");
    let model = fox_rubin(&dir);
    let o = hmmr(&["analyze", "--in", &model]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("k=6 dim_VR=4 "), "{}", stdout(&o));

    let bases = dir.path("bases.json");
    let o = hmmr(&["--format", "json", "analyze", "--in", &model, "--bases", &bases]);
    let r = json(&o);
    assert_eq!(r["dim_reachable"], 4);
    assert_eq!(r["dim_effective"], 4);
    let b: Value = serde_json::from_str(&std::fs::read_to_string(&bases).unwrap()).unwrap();
    assert_eq!(b["T_R"].as_array().unwrap().len(), 6);
    assert_eq!(b["T_R"][0].as_array().unwrap().len(), 4);
}

#[test]
fn unary_alphabet_collapses() {
    let dir = Scratch::new("unary");
    let model = dir.write(
        "d1.json",
        r#"{"d": 1, "k": 3, "phi": [1, 1, 1], "Q": [[0.2, 0.5, 0.1], [0.3, 0.25, 0.6], [0.5, 0.25, 0.3]]}"#,
    );
    let o = hmmr(&["analyze", "--in", &model]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("k̂=1"), "{out}");
    assert!(out.contains("dim_VR=1") && out.contains("dim_VN=2"), "{out}");
}

#[test]
fn file_errors_exit_one() {
    let dir = Scratch::new("malformed");
    let bad = dir.write("bad.json", "{ \"d\": 2, ");
    let o = hmmr(&["analyze", "--in", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = hmmr(&["analyze", "--in", &dir.path("missing.json")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validation_errors_exit_two() {
    let dir = Scratch::new("invalid");
    let corrupt = dir.write(
        "corrupt.json",
        r#"{"d": 2, "k": 2, "phi": [1, 2], "Q": [[0.5, 0.5], [0.4, 0.5]]}"#,
    );
    for args in [
        vec!["pipeline", "--in", &corrupt, "--depth", "3"],
        vec!["analyze", "--in", &corrupt],
    ] {
        let o = hmmr(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!String::from_utf8_lossy(&o.stderr).contains("panicked"));
    }
    assert_eq!(hmmr(&["analyze", "--unknown-flag"]).status.code(), Some(2));
    assert_eq!(hmmr(&["example", "fox-rubin", "--m", "2", "--lambda", "0.4"]).status.code(), Some(2));
}

#[test]
fn pipeline_certifies_fox_rubin() {
    let dir = Scratch::new("pipeline");
    let model = fox_rubin(&dir);
    let o = hmmr(&["--format", "json", "pipeline", "--in", &model, "--depth", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    for (name, v) in r["tensor_max_abs_diff"].as_object().unwrap() {
        assert!(num(v) <= 1e-10, "{name}: {v}");
    }
    assert_eq!(r["hankel"]["rank"], r["dim_effective"]);
    assert_eq!(r["orders"]["effective"], 4);
    assert_eq!(r["k"], 6);
}

#[test]
fn identity_observation_pipeline_is_trivial() {
    let dir = Scratch::new("identity");
    let model = dir.write(
        "id.json",
        r#"{"d": 3, "k": 3, "phi": [1, 2, 3], "Q": [[0.5, 0.2, 0.3], [0.25, 0.5, 0.3], [0.25, 0.3, 0.4]]}"#,
    );
    let r = json(&hmmr(&["--format", "json", "pipeline", "--in", &model, "--depth", "2"]));
    assert_eq!(r["dim_reachable"], 3);
    assert_eq!(r["dim_null_complement"], 3);
    assert_eq!(r["dim_effective"], 3);
}

#[test]
fn reduced_model_round_trips() {
    let dir = Scratch::new("roundtrip");
    let model = fox_rubin(&dir);
    let reduced = dir.path("reduced.json");
    let o = hmmr(&["--format", "json", "reduce", "--mode", "effective", "--in", &model, "--out", &reduced, "--check-depth", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["order"], 4);
    let file: Value = serde_json::from_str(&std::fs::read_to_string(&reduced).unwrap()).unwrap();
    assert_eq!(file["quasi"], true);
    assert!(file["residuals"].as_object().unwrap().values().all(|v| num(v) <= 1e-10));

    // The reduced file reproduces the analysis of the reduction it came from.
    let again = dir.path("again.json");
    assert!(hmmr(&["reduce", "--mode", "effective", "--in", &reduced, "--out", &again]).status.success());
    let a: Value = serde_json::from_str(&std::fs::read_to_string(&reduced).unwrap()).unwrap();
    let b: Value = serde_json::from_str(&std::fs::read_to_string(&again).unwrap()).unwrap();
    assert_eq!(a["k"], b["k"]);
    let ra = json(&hmmr(&["--format", "json", "analyze", "--in", &reduced]));
    let rb = json(&hmmr(&["--format", "json", "analyze", "--in", &again]));
    assert_eq!(ra, rb);

    let o = hmmr(&["--format", "json", "tensor", "--in", &model, "--depth", "3", "--check-against", &reduced]);
    let r = json(&o);
    assert!(num(&r["check_max_abs_diff"]) <= 1e-12);
    assert_eq!(r["check_components"], 4);
}

#[test]
fn tensor_exports() {
    let dir = Scratch::new("tensor");
    let model = fox_rubin(&dir);
    let (factors, tensor) = (dir.path("f.json"), dir.path("t.json"));
    let o = hmmr(&["tensor", "--in", &model, "--depth", "2", "--factors-out", &factors, "--out", &tensor]);
    assert!(o.status.success());
    let t: Value = serde_json::from_str(&std::fs::read_to_string(&tensor).unwrap()).unwrap();
    assert_eq!(t["dims"], serde_json::json!([4, 4, 2]));
    let total: f64 = t["values"].as_array().unwrap().iter().map(num).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let f: Value = serde_json::from_str(&std::fs::read_to_string(&factors).unwrap()).unwrap();
    assert_eq!(f["r"], 6);
    assert_eq!(f["A"].as_array().unwrap().len(), 4);
}

#[test]
fn hankel_and_simulate() {
    let dir = Scratch::new("hankel");
    let model = fox_rubin(&dir);
    let r = json(&hmmr(&["--format", "json", "hankel", "--in", &model, "--depth", "4"]));
    assert_eq!(r["rank"], 4);
    assert_eq!(r["matches_effective"], true);

    let emp = dir.path("emp.json");
    let args = ["--format", "json", "simulate", "--in", &model, "--steps", "200000", "--seed", "3", "--depth", "2", "--emit-empirical", &emp];
    let a = json(&hmmr(&args));
    let b = json(&hmmr(&args));
    assert_eq!(a, b);
    assert!(a["outside_4sigma"].as_u64().unwrap() <= 1);
    assert!(Path::new(&emp).exists());
}

#[test]
fn paper_check_reports_discrepancies() {
    let o = hmmr(&["--format", "json", "example", "fox-rubin", "--m", "5", "--lambda", "0.4", "--paper-check"]);
    assert!(o.status.success());
    let r = json(&o);
    let c = &r["paper_check"];
    assert!(num(&c["algorithmic_residual"]) <= 1e-10);
    assert!(c["q_hat_discrepancies"].is_array());
    let text = stdout(&hmmr(&["example", "fox-rubin", "--m", "5", "--lambda", "0.4", "--paper-check"]));
    assert!(text.contains("defining relations: hold"), "{text}");
}

#[test]
fn thread_cap_is_validated() {
    let dir = Scratch::new("threads");
    let model = fox_rubin(&dir);
    let run = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_hmmr"))
            .args(["analyze", "--in", &model])
            .env("HMMR_THREADS", v)
            .output()
            .unwrap()
    };
    assert!(run("1").status.success());
    assert_eq!(run("0").status.code(), Some(2));
}
