mod common;

use std::process::{Command, Output};

use common::{fixture, fixtures};

fn alghelm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alghelm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run(command: &str, model: &str, extra: &[&str]) -> (i32, String, String) {
    let path = fixture(model);
    let mut args = vec![command, path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = alghelm(&args);
    (
        out.status.code().expect("exit code"),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn exit_codes_over_all_fixtures() {
    let expected = [
        ("atiyah_abelian.toml", "classify", 0),
        ("atiyah_so3.toml", "classify", 0),
        ("broken_jacobi.toml", "validate", 1),
        ("broken_jacobi.toml", "classify", 2),
        ("damped_tangent.toml", "helmholtz", 1),
        ("damped_tangent.toml", "classify", 1),
        ("nonregular_line.toml", "validate", 0),
        ("nonregular_line.toml", "classify", 1),
        ("morphism_identity.toml", "morphism-check", 0),
        ("morphism_quotient.toml", "morphism-check", 0),
        ("morphism_quotient.toml", "classify", 0),
        ("morphism_tangent_lift.toml", "morphism-check", 0),
        ("morphism_trivialization.toml", "morphism-check", 0),
        ("se2_euler_poincare.toml", "classify", 0),
        ("se2_euler_poincare.toml", "reconstruct", 0),
        ("se2_euler_poincare.toml", "el-residual", 0),
        ("se2_weak_variational.toml", "helmholtz", 0),
        ("se2_weak_variational.toml", "classify", 1),
        ("se2_weak_variational.toml", "derive-sode", 2),
        ("se2_tangent_lift.toml", "classify", 0),
        ("se2_tangent_lift.toml", "derive-sode", 0),
        ("se2_tangent_lift.toml", "el-residual", 0),
        ("se2_tangent_lift.toml", "reconstruct", 0),
        ("se2_tangent_lift.toml", "morphism-check", 2),
    ];
    for (model, command, code) in expected {
        let (got, out, err) = run(command, model, &["--points", "16"]);
        assert_eq!(got, code, "{command} {model}\n{out}{err}");
    }
    let report_codes = [
        ("atiyah_abelian.toml", 0),
        ("atiyah_so3.toml", 0),
        ("broken_jacobi.toml", 1),
        ("damped_tangent.toml", 1),
        ("nonregular_line.toml", 1),
        ("morphism_identity.toml", 0),
        ("morphism_quotient.toml", 0),
        ("morphism_tangent_lift.toml", 0),
        ("morphism_trivialization.toml", 0),
        ("se2_euler_poincare.toml", 0),
        ("se2_weak_variational.toml", 1),
        ("se2_tangent_lift.toml", 0),
    ];
    assert_eq!(report_codes.len(), fixtures().len(), "every fixture has an expected outcome");
    for (model, code) in report_codes {
        let (got, out, err) = run("report", model, &["--points", "16"]);
        assert_eq!(got, code, "report {model}\n{err}");
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(doc["schema"], "alghelm.run-report/1");
        assert_eq!(doc["passed"], code == 0);
    }
}

#[test]
fn classify_prints_the_outcome() {
    let (code, out, _) = run("classify", "se2_weak_variational.toml", &[]);
    assert_eq!(code, 1);
    assert!(out.contains("weak_variational"), "{out}");
    let (code, out, _) = run("classify", "se2_tangent_lift.toml", &[]);
    assert_eq!(code, 0);
    assert!(out.lines().any(|l| l == "variational"), "{out}");
}

#[test]
fn validate_reports_the_jacobi_residual() {
    let (code, out, _) = run("validate", "broken_jacobi.toml", &[]);
    assert_eq!(code, 1);
    assert!(out.contains("jacobi: max |residual| = 1.000e0"), "{out}");
}

#[test]
fn missing_block_is_named() {
    let (code, _, err) = run("classify", "broken_jacobi.toml", &[]);
    assert_eq!(code, 2);
    assert!(err.contains("missing [sode] block"), "{err}");
    let (code, _, err) = run("reconstruct", "se2_weak_variational.toml", &[]);
    assert_eq!(code, 2);
    assert!(err.contains("missing [reconstruct] block"), "{err}");
}

#[test]
fn structured_report_is_deterministic() {
    let a = run("report", "se2_weak_variational.toml", &["--seed", "3"]).1;
    let b = run("report", "se2_weak_variational.toml", &["--seed", "3"]).1;
    let c = run("report", "se2_weak_variational.toml", &["--seed", "4"]).1;
    assert_eq!(a, b);
    assert_ne!(a, c);
    let doc: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(doc["classification"], "weak_variational");
    assert_eq!(doc["sample_count"], 64);
}

#[test]
fn structured_format_and_output_file() {
    let (code, out, _) = run("helmholtz", "damped_tangent.toml", &["--format", "structured"]);
    assert_eq!(code, 1);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["command"], "helmholtz");
    assert_eq!(doc["sections"][0]["passed"], false);
    assert_eq!(doc["sections"][1]["name"], "lift_form");
    assert_eq!(doc["sections"][1]["passed"], false);
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("run.json");
    let (code, out, _) = run("report", "se2_tangent_lift.toml", &["-o", target.to_str().unwrap(), "--points", "8"]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(target).unwrap()).unwrap();
    assert_eq!(doc["sample_count"], 8);
}

#[test]
fn usage_and_model_errors_exit_2() {
    assert_eq!(alghelm(&[]).status.code(), Some(2));
    assert_eq!(alghelm(&["classify"]).status.code(), Some(2));
    assert_eq!(alghelm(&["frobnicate", "x.toml"]).status.code(), Some(2));
    assert_eq!(alghelm(&["classify", "/nonexistent/model.toml"]).status.code(), Some(2));
    assert_eq!(alghelm(&["--help"]).status.code(), Some(0));
    let (code, _, _) = run("classify", "se2_weak_variational.toml", &["--tol", "-1"]);
    assert_eq!(code, 2);

    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let base = std::fs::read_to_string(fixture("se2_weak_variational.toml")).unwrap();
    let bad_c = write("bad_c.toml", &base.replace("{ c = 1, a = 2, b = 3", "{ c = 1, a = 1, b = 1"));
    let out = alghelm(&["classify", bad_c.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("antisymmetry"));
    let bad_y = write("bad_y.toml", &base.replace("\"y2*y3\"", "\"y4*y3\""));
    let out = alghelm(&["classify", bad_y.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unbound variable `y4`"));
}
