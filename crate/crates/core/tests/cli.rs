use std::process::Command;

fn rwlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rwlab"))
}

#[test]
fn verify_writes_report_and_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("s.toml");
    std::fs::write(&sc, "name = \"ok\"\nomega = \"std:gamma=1\"\nnu = \"std:gamma=0\"\nchecks = [\"ap-bounded\"]\n").unwrap();
    let out = dir.path().join("r.json");
    let st = rwlab().args(["verify", "--scenario"]).arg(&sc).arg("--out").arg(&out).status().unwrap();
    assert!(st.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["pass"], true);

    std::fs::write(&sc, "name = \"bad\"\nomega = \"std:gamma=0\"\nnu = \"std:gamma=3\"\nchecks = [\"ap-bounded\"]\n").unwrap();
    let st = rwlab().args(["verify", "--scenario"]).arg(&sc).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(1));

    std::fs::write(&sc, "name = \"x\"\nchecks = [\"no-such-check\"]\n").unwrap();
    let st = rwlab().args(["verify", "--scenario"]).arg(&sc).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn ap_csv_has_two_columns() {
    let out = rwlab()
        .args(["ap", "--omega", "std:gamma=1", "--nu", "std:gamma=0", "--p", "2", "--grid-min", "1-1e-4", "--format", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,A_p"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(first[0], 0.0);
    assert!((first[1] - 2.0 / 3f64.sqrt()).abs() < 1e-12);
}

#[test]
fn kernel_and_project_subcommands() {
    let out = rwlab().args(["kernel", "--weight", "std:gamma=0", "--u", "0.5"]).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["re"].as_f64().unwrap() - 4.0).abs() < 1e-10);

    let out = rwlab().args(["project", "--weight", "std:gamma=0", "--mode", "0", "--g", "poly:0,0,1"]).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["coefficient"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    let out = rwlab().args(["kernel", "--weight", "std:gamma=0", "--u", "0.9999"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn builtin_grid_scenario_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fr.json");
    let st = rwlab().args(["verify", "--scenario", "builtin:forelli-rudin-grid", "--out"]).arg(&out).status().unwrap();
    assert!(st.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let sign_checks = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["name"].as_str().unwrap().ends_with("/sign-matches-ap"))
        .count();
    assert_eq!(sign_checks, 48);
}

#[test]
fn shipped_scenarios_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            rwlab::harness::Scenario::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
