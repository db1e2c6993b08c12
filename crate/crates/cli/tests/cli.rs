use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fwpomdp::{PomdpModel, SolvedPolicy};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fwpomdp"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn fwpomdp")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn model_file(dir: &Path, case: u8) -> PathBuf {
    let path = dir.join(format!("case{case}.json"));
    ok(&["model", "--case", &case.to_string(), "--out", p(&path)]);
    path
}

#[test]
fn solve_is_small_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let m = model_file(dir.path(), 1);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    ok(&["solve", p(&m), "--window", "2", "--out", p(&a)]);
    ok(&["solve", p(&m), "--window", "2", "--out", p(&b)]);
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let s: SolvedPolicy = serde_json::from_slice(&ta).unwrap();
    assert!(s.values.len() <= 32);
}

#[test]
fn malformed_row_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = model_file(dir.path(), 1);
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&m).unwrap()).unwrap();
    v["channel"][0] = serde_json::json!([0.5, 0.6]);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_vec(&v).unwrap()).unwrap();
    let out = run(&["diagnose", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn diagnose_case_one() {
    let dir = tempfile::tempdir().unwrap();
    let m = model_file(dir.path(), 1);
    let out = ok(&["diagnose", p(&m)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["alpha"].as_f64().unwrap() - 1.26).abs() < 1e-12);
    assert!(v["k"].is_null());
    assert!(v["k_unavailable_reason"].is_string());
}

#[test]
fn three_state_kernel_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let t = vec![vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], vec![0.0, 0.5, 0.5], vec![0.75, 0.0, 0.25]];
    let model = serde_json::json!({
        "n_states": 3, "n_obs": 3, "n_actions": 1,
        "transition": [t],
        "channel": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        "cost": [[0.0], [1.0], [2.0]],
        "discount": 0.5,
        "state_metric": [[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]],
        "prior": [1.0, 0.0, 0.0],
        "reference_prior": [0.0, 0.0, 1.0]
    });
    let path = dir.path().join("k.json");
    std::fs::write(&path, serde_json::to_vec(&model).unwrap()).unwrap();
    let out = ok(&["diagnose", p(&path)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["delta_t_min"].as_f64().unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn identical_priors_give_zero_curve() {
    let dir = tempfile::tempdir().unwrap();
    let m = model_file(dir.path(), 2);
    let out = ok(&["stability", p(&m), "--n-max", "4"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "N,mean_tv,se_tv,mean_bl,se_bl,envelope_2_alpha_N");
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!((f[1], f[3]), (0.0, 0.0));
    }
}

#[test]
fn monte_carlo_curve_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let m = model_file(dir.path(), 1);
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&m).unwrap()).unwrap();
    v["reference_prior"] = serde_json::json!([0.5, 0.5]);
    std::fs::write(&m, serde_json::to_vec(&v).unwrap()).unwrap();
    let args = ["stability", p(&m), "--n-max", "3", "--mode", "mc", "--samples", "500", "--seed", "7"];
    let a = ok(&args).stdout;
    assert_eq!(a, ok(&args).stdout);
    assert!(String::from_utf8(a).unwrap().lines().nth(1).unwrap().starts_with("0,"));
}

#[test]
fn gaussian_defaults() {
    let out = ok(&["gaussian-table", "--obs-levels", "2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 13);
    assert_eq!(rows[0][1], "any");
    let dt: f64 = rows[5][2].parse().unwrap();
    assert!((dt - 0.3173105078901145).abs() < 1e-12);
    assert!(rows.iter().all(|r| r[4] == "true"));
}

#[test]
fn emitted_model_revalidates() {
    for case in 1..=3u8 {
        let out = ok(&["model", "--case", &case.to_string()]);
        let m: PomdpModel = serde_json::from_slice(&out.stdout).unwrap();
        m.validated().unwrap();
    }
}

#[test]
fn experiment_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    ok(&["experiment", "--case", "1", "--n-range", "0-2", "--out", p(&out)]);
    let csv = std::fs::read_to_string(out.join("case1.csv")).unwrap();
    assert!(csv.starts_with("N,approx_value,realized_cost,value_error,robustness_error,stability_term,alpha_pow_N\n"));
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("case1.json")).unwrap()).unwrap();
    assert_eq!(json["records"].as_array().unwrap().len(), 3);
}

#[test]
fn bad_case_is_input_error() {
    assert_eq!(run(&["model", "--case", "9"]).status.code(), Some(2));
}

#[test]
fn exact_curve_matches_library_bitwise() {
    use fwpomdp::policy::FixedAction;
    use fwpomdp::quantizer::DEFAULT_CAPACITY_LIMIT;
    use fwpomdp::stability::{stability_decay_curve, StabilityMode};
    use fwpomdp::Belief;

    let dir = tempfile::tempdir().unwrap();
    let path = model_file(dir.path(), 1);
    let mut m: PomdpModel = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    m.reference_prior = vec![0.6, 0.4];
    std::fs::write(&path, serde_json::to_vec(&m).unwrap()).unwrap();
    let out = String::from_utf8(ok(&["stability", p(&path), "--N-max", "3"]).stdout).unwrap();
    let curve = stability_decay_curve(
        &m,
        &Belief::new(m.prior.clone()).unwrap(),
        &Belief::new(m.reference_prior.clone()).unwrap(),
        &FixedAction(0),
        3,
        StabilityMode::Exact { capacity_limit: DEFAULT_CAPACITY_LIMIT },
    )
    .unwrap();
    let rows: Vec<Vec<f64>> = out.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), curve.len());
    for (r, c) in rows.iter().zip(&curve) {
        assert_eq!(r[1].to_bits(), c.mean_tv.to_bits());
        assert_eq!(r[3].to_bits(), c.mean_bl.to_bits());
        assert_eq!(r[5].to_bits(), c.envelope.to_bits());
    }
    assert!(rows[0][1] > 0.0);
}

#[test]
fn three_level_table_matches_library() {
    use fwpomdp::diagnostics::gaussian::{default_pairs, gaussian_table, ObsLevels};

    let text = String::from_utf8(ok(&["gaussian-table", "--obs-levels", "3"]).stdout).unwrap();
    let lib = gaussian_table(&default_pairs(ObsLevels::Three), ObsLevels::Three).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), lib.len());
    for (r, l) in rows.iter().zip(&lib) {
        match l.delta_q_hat {
            Some(q) => assert_eq!(r[3].parse::<f64>().unwrap().to_bits(), q.to_bits()),
            None => assert_eq!(r[3], "any"),
        }
    }
}

#[test]
fn ratios_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    std::fs::write(&path, "ratio_t,ratio_q\n1.0,any\n0.5,20\n").unwrap();
    let text = String::from_utf8(ok(&["gaussian-table", "--obs-levels", "2", "--ratios", p(&path)]).stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(2).unwrap().starts_with("0.5,20.0,"));
}
