use std::path::PathBuf;
use std::process::{Command, Output};

use selfaffine::io::{parse_input, DecompositionRecord, OrbitRecord};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfaffine"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: {}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn path_str(p: &PathBuf) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dimension_of_gasket_encloses_hutchinson_root() {
    let input = fixture("sierpinski.json");
    let out = run(&["dimension", "--input", path_str(&input), "--depth", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let json = stdout_json(&out);
    let root = 3f64.ln() / 2f64.ln();
    let lo = json["s_lo"].as_f64().unwrap();
    let hi = json["s_hi"].as_f64().unwrap();
    assert!(lo <= root && root <= hi, "[{lo}, {hi}]");
    assert_eq!(json["certified"], Value::Bool(true));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let input = fixture("affine_gasket.json");
    let args = ["monotonicity", "--input", path_str(&input), "--depth", "5", "--seed", "3"];
    let a = run(&args);
    let b = run(&args);
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.contains("e0") || text.contains("e-"), "floats use 17-digit notation");
}

#[test]
fn seven_reports_both_separation_values() {
    let out = run(&["paper-seven", "--k", "2", "--depth", "6"]);
    assert_eq!(out.status.code(), Some(0));
    let json = stdout_json(&out);
    let rho: Vec<f64> = json["separation"][0]["rho"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let mut sorted = rho.clone();
    sorted.sort_by(f64::total_cmp);
    assert!((sorted[0] - 4.0).abs() < 1e-9 && (sorted[1] - 16.0).abs() < 1e-9, "{rho:?}");
    assert_eq!(json["block_dims"], serde_json::json!([2, 2]));
    assert_eq!(json["equilibrium"]["found_count"], serde_json::json!(2));
}

#[test]
fn pressure_on_expanding_input_sets_warning() {
    let input = fixture("expanding.json");
    let out = run(&["pressure", "--input", path_str(&input), "--s", "1.0", "--depth", "5"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["non_contractive"], Value::Bool(true));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("warning[non-contractive]"));
}

#[test]
fn pressure_curve_is_written_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("curve.csv");
    let input = fixture("sierpinski.json");
    let out = run(&[
        "pressure",
        "--input",
        path_str(&input),
        "--s",
        "1",
        "--s-grid",
        "0:2:0.25",
        "--curve",
        curve.to_str().unwrap(),
        "--depth",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&curve).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("s,lower,upper"));
    assert_eq!(lines.count(), 9);
}

#[test]
fn schema_error_names_the_map_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"dimension": 2, "maps": [{"A": [[0.5, 0], [0, 0.5]]}, {"B": 1}]}"#,
    )
    .unwrap();
    let out = run(&["dimension", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[schema]:"), "{err}");
    assert!(err.contains("maps[1]"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["dimension"]).status.code(), Some(1));
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    assert_eq!(run(&["paper-seven", "--k", "0"]).status.code(), Some(1));
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn stalled_bracket_exits_two() {
    let input = fixture("affine_gasket.json");
    let out = run(&["lyapunov", "--input", path_str(&input), "--depth", "3", "--tol", "1e-9"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)[0]["bracket"]["stalled"], Value::Bool(true));
}

#[test]
fn structure_output_revalidates() {
    let input = fixture("seven_k2.json");
    let out = run(&["structure", "--input", path_str(&input)]);
    assert_eq!(out.status.code(), Some(0));
    let json = stdout_json(&out);
    let record: DecompositionRecord =
        serde_json::from_value(json["decomposition"].clone()).unwrap();
    let np = parse_input(&input).unwrap().norm_product().unwrap();
    let factors: Vec<_> = np.factors().iter().map(|f| f.tuple.clone()).collect();
    let tensor = selfaffine::equilibrium::tensor_all(&factors).unwrap();
    let dec = record.validate(&tensor, 1e-9).unwrap();
    assert_eq!(dec.block_dims(), &[2, 2]);
}

#[test]
fn orbit_output_revalidates() {
    let input = fixture("seven_k2.json");
    let out = run(&["orbit", "--input", path_str(&input)]);
    assert_eq!(out.status.code(), Some(0));
    let json = stdout_json(&out);
    let np = parse_input(&input).unwrap().norm_product().unwrap();
    let tuples: Vec<_> = np.factors().iter().map(|f| &f.tuple).collect();
    let orbits = json["orbits"].as_array().unwrap();
    assert!(!orbits.is_empty());
    for o in orbits {
        let record: OrbitRecord = serde_json::from_value(o.clone()).unwrap();
        assert!(record.validate(&tuples, 1e-8).unwrap().closed());
    }
}

#[test]
fn attractor_writes_one_row_per_point() {
    let input = fixture("sierpinski.json");
    let out = run(&["attractor", "--input", path_str(&input), "--count", "250", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 251);
    assert!(text.starts_with("x0,x1"));
}

#[test]
fn attractor_rejects_expanding_system() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grow.json");
    std::fs::write(
        &path,
        r#"{"dimension": 1, "maps": [{"A": [[1.5]], "v": [0]}, {"A": [[0.5]], "v": [1]}]}"#,
    )
    .unwrap();
    let out = run(&["attractor", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[non-contractive]"));
}

#[test]
fn gibbs_and_equilibrium_run_on_factor_input() {
    let input = fixture("seven_k2.json");
    let out = run(&["gibbs", "--input", path_str(&input), "--depth", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("depth,normalization,invariance,submultiplicativity,ratio_spread"));
    assert!(text.lines().last().unwrap().starts_with("slope,"));

    let out = run(&["equilibrium", "--input", path_str(&input), "--depth", "6"]);
    assert_ne!(out.status.code(), Some(1));
    let json = stdout_json(&out);
    assert_eq!(json["theoretical_bound"], serde_json::json!(4));
    assert_eq!(json["separated"], Value::Bool(true));
}

#[test]
fn output_file_and_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("dim.json");
    let input = fixture("sierpinski.json");
    let out = run(&[
        "dimension",
        "--input",
        path_str(&input),
        "--out",
        out_path.to_str().unwrap(),
        "--threads",
        "1",
        "--depth",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(json["s_hi"].as_f64().unwrap() - json["s_lo"].as_f64().unwrap() < 1e-5);
}
