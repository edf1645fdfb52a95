//! Behavior of the `heatwell` binary: exit codes, output files, and
//! byte-identical reruns.

use std::path::Path;
use std::process::{Command, Output};

fn heatwell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatwell"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn ws_config(out_dir: &Path) -> String {
    format!(
        r#"
length = 1.0
elements = 60
p = 3.0
m = 2.0
source = "power"
damping = "power"
profile = "sine-bump"
amplitude = 0.2
t_end = 0.5
tau0 = 5e-3
output_dir = "{}"
"#,
        out_dir.display()
    )
}

#[test]
fn simulate_writes_outputs_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "run.toml", &ws_config(&out));

    let res = heatwell(&["simulate", &cfg]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for file in ["ledger.csv", "simulate_report.json", "final_state.csv", "final_state.json"] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    let ledger1 = std::fs::read(out.join("ledger.csv")).unwrap();
    let report1 = std::fs::read(out.join("simulate_report.json")).unwrap();

    // identical config and seed reproduce the outputs byte for byte
    let res = heatwell(&["simulate", &cfg]);
    assert!(res.status.success());
    assert_eq!(ledger1, std::fs::read(out.join("ledger.csv")).unwrap());
    assert_eq!(report1, std::fs::read(out.join("simulate_report.json")).unwrap());

    let head = String::from_utf8(ledger1).unwrap();
    assert!(head.starts_with("t,J,K,H,normH1,normGrad,normLp,trace,residual,tau,newton_iters\n"));
}

#[test]
fn config_errors_exit_with_code_1() {
    let tmp = tempfile::tempdir().unwrap();
    // unknown key
    let bad = write_config(
        tmp.path(),
        "bad.toml",
        &format!("{}\nmystery_knob = 3\n", ws_config(&tmp.path().join("o"))),
    );
    let res = heatwell(&["simulate", &bad]);
    assert_eq!(res.status.code(), Some(1));
    // missing file
    let res = heatwell(&["simulate", "/nonexistent/nope.toml"]);
    assert_eq!(res.status.code(), Some(1));
    // bad region ranges
    let res = heatwell(&["region", "--n", "3", "--p-min", "5.0", "--p-max", "2.0"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn validate_flags_broken_hypotheses_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let good = write_config(tmp.path(), "good.toml", &ws_config(&out));
    let res = heatwell(&["validate", &good]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("F1") && stdout.contains("PASS"));

    // positive subcritical part breaks (F2)
    let body = ws_config(&out)
        .replace("source = \"power\"", "source = \"f0\"")
        .replace("p = 3.0", "p = 4.0")
        + "source_q = 2.0\nsource_a = 1.0\nsource_b = 1.0\n";
    let bad = write_config(tmp.path(), "badf.toml", &body);
    let res = heatwell(&["validate", &bad]);
    assert_eq!(res.status.code(), Some(3));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("validate_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["body"]["f2"]["pass"], serde_json::Value::Bool(false));
}

#[test]
fn region_grid_matches_requested_resolution() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("grid.csv");
    let res = heatwell(&[
        "region",
        "--n",
        "3",
        "--resolution",
        "41",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "p,m,p_admissible,blowup_admissible");
    assert_eq!(lines.count(), 41 * 41);
    // the admissible set is nonempty and respects p <= 4 at n = 3
    let mut any = false;
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[3] == "1" {
            any = true;
            assert!(cols[0].parse::<f64>().unwrap() <= 4.0);
        }
    }
    assert!(any);
}

#[test]
fn classify_reports_unstable_label_for_scaled_maximizer() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let body = ws_config(&out)
        .replace("profile = \"sine-bump\"", "profile = \"b1-maximizer\"")
        .replace("amplitude = 0.2", "amplitude = 1.1\namplitude_relative = true");
    let cfg = write_config(tmp.path(), "wu.toml", &body);
    let res = heatwell(&["classify", &cfg]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stdout).contains("Wu"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("classify_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["body"]["label"], "Wu");
    assert_eq!(report["body"]["agreement"], serde_json::Value::Bool(true));
}

#[test]
fn well_constants_include_generalized_d1_for_f0() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let body = ws_config(&out)
        .replace("source = \"power\"", "source = \"f0\"")
        .replace("p = 3.0", "p = 4.0")
        + "source_q = 2.0\nsource_a = -1.0\nsource_b = 1.0\n";
    let cfg = write_config(tmp.path(), "f0.toml", &body);
    let res = heatwell(&["well-constants", &cfg]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("well_constants.json")).unwrap(),
    )
    .unwrap();
    let body = &report["body"];
    let b1 = body["b1"].as_f64().unwrap();
    let d1 = body["d1"].as_f64().expect("d1 computed for a general source");
    assert!(d1 > 0.0 && d1 < b1.powi(4) / 4.0);
    // identity chain in the serialized output
    let lambda1 = body["lambda1"].as_f64().unwrap();
    let lt = body["lambda1_tilde"].as_f64().unwrap();
    approx::assert_relative_eq!(lt, b1 * lambda1, max_relative = 1e-12);
    assert!(report["config_fingerprint"].as_str().unwrap().len() == 64);
}

#[test]
fn depend_reaction_ladder_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "dep.toml", &ws_config(&out));
    let res = heatwell(&["depend", &cfg]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("dependence_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["body"]["pass"], serde_json::Value::Bool(true));
    let ratios = report["body"]["ratios"].as_array().unwrap();
    for r in ratios {
        let r = r.as_f64().unwrap();
        assert!((1.6..=2.4).contains(&r), "ratio {r}");
    }
}
