use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use walg::a1_suite::{dvv_oracle, CorrelatorTable};
use walg::exact_arith::rat;
use walg::lattice_va::LatticeState;
use walg::twisted_fock::{NormalOrderedOperator, OpTermJson};

fn walg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_walg")).args(args).output().expect("spawn walg")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_state(dir: &Path, name: &str, s: &LatticeState) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(&s.to_json()).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn roots_of_a1() {
    let out = walg(&["roots", "A1"]);
    assert!(out.status.success());
    let v = json_of(&out);
    assert_eq!(v["roots"].as_array().unwrap().len(), 2);
    assert_eq!(v["coxeter_number"], 2);
    assert_eq!(v["exponents"], serde_json::json!([1]));
}

#[test]
fn omega_is_a_member() {
    let out = walg(&["walg-check", "--type", "A2", "--element", "omega"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_of(&out), serde_json::json!({ "member": true }));
    let out = walg(&["walg-check", "--type", "D4", "--element", "nu", "--d", "2"]);
    assert_eq!(json_of(&out)["member"], true);
}

#[test]
fn non_member_exits_one_with_residuals() {
    let dir = tempfile::tempdir().unwrap();
    // a single Heisenberg mode is killed by no screening
    let state = LatticeState::from_json(
        &serde_json::from_str(r#"[{"monomial":[[0,1]],"lattice":[0,0],"coeff":{"order":1,"coeffs":[["1","1"]]}}]"#)
            .unwrap(),
    );
    let path = write_state(dir.path(), "h.json", &state);
    let out = walg(&["walg-check", "--type", "A2", "--state", &path]);
    assert_eq!(out.status.code(), Some(1));
    let v = json_of(&out);
    assert_eq!(v["member"], false);
    assert!(!v["residuals"].as_array().unwrap().is_empty());
}

#[test]
fn product_output_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_state(dir.path(), "a.json", &LatticeState::exponential(&[1]));
    let b = write_state(dir.path(), "b.json", &LatticeState::exponential(&[-1]));
    let vac = write_state(dir.path(), "v.json", &LatticeState::vacuum(1));
    for n in [-2, -1, 0] {
        let n = n.to_string();
        let out = walg(&["product", "--type", "A1", "--a", &a, "--b", &b, "--n", &n]);
        assert!(out.status.success());
        let p = std::str::from_utf8(&out.stdout).unwrap().to_string();
        let p_path = dir.path().join("p.json");
        std::fs::write(&p_path, &p).unwrap();
        // x_(-1) vacuum = x, printed byte for byte the same
        let again = walg(&["product", "--type", "A1", "--a", p_path.to_str().unwrap(), "--b", &vac, "--n", "-1"]);
        assert_eq!(std::str::from_utf8(&again.stdout).unwrap(), p);
    }
}

#[test]
fn screening_of_omega_vanishes() {
    let out = walg(&["screen", "--type", "A2", "--alpha", "-1,-1", "--element", "omega"]);
    assert!(out.status.success());
    assert_eq!(json_of(&out)["zero"], true);
}

#[test]
fn virasoro_check_exit_codes() {
    let ok = walg(&["virasoro-check", "--type", "A2", "--max-weight", "3", "--mode-bound", "2"]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(json_of(&ok)["holds"], true);
    let bad =
        walg(&["virasoro-check", "--type", "A2", "--max-weight", "3", "--mode-bound", "2", "--central-charge", "3/2"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(!json_of(&bad)["residuals"].as_array().unwrap().is_empty());
}

#[test]
fn twisted_field_round_trips() {
    let out = walg(&["twisted-field", "--type", "A1", "--element", "omega", "--window", "-4..-1", "--cap", "4"]);
    assert!(out.status.success());
    let items: Vec<OpTermJson> = serde_json::from_slice(&out.stdout).unwrap();
    let op = NormalOrderedOperator::from_json(&items).unwrap();
    assert_eq!(op.to_json(), items);
    assert!(!op.is_empty());
}

#[test]
fn constraints_hold() {
    let out = walg(&["constraints", "--m-range", "-1..3", "--genus", "2", "--deg", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert!(v["residuals"].as_array().unwrap().is_empty());
    assert!(v["checked"].as_u64().unwrap() > 0);
    let out = walg(&["constraints", "--m-range", "-1..3", "--genus", "2", "--deg", "6", "--rescale", "1/3"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn wk_table_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wk.json");
    let p = path.to_str().unwrap();
    assert!(walg(&["wk", "--genus", "2", "--deg", "7", "--out", p]).status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let table = CorrelatorTable::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(table, dvv_oracle(2, 7));
    assert_eq!(walg(&["constraints", "--table", p]).status.code(), Some(0));

    let mut bad = table.clone();
    bad.set(1, &[1], rat(1, 23));
    std::fs::write(&path, serde_json::to_string(&bad.to_json()).unwrap()).unwrap();
    let out = walg(&["constraints", "--table", p]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!json_of(&out)["residuals"].as_array().unwrap().is_empty());
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["roots", "X9"][..],
        &["constraints", "--m-range", "3..1", "--genus", "1", "--deg", "3"],
        &["constraints", "--m-range", "-2..1", "--genus", "1", "--deg", "3"],
        &["constraints", "--genus", "1", "--deg", "3", "--rescale", "-2"],
        &["walg-check", "--type", "A2", "--element", "nu"],
        &["walg-check", "--type", "A2"],
        &["acceptance", "--only", "11"],
    ] {
        let out = walg(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty());
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn truncation_weight_from_env() {
    let out = Command::new(env!("CARGO_BIN_EXE_walg"))
        .args(["walg-check", "--type", "A2", "--element", "omega", "--d", "3"])
        .env("WALG_TRUNCATION_WEIGHT", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncation"));
}

#[test]
fn acceptance_subset() {
    let out = walg(&["acceptance", "--only", "5,7"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["criteria"].as_array().unwrap().len(), 2);
    assert_eq!(v["passed"], true);
}
