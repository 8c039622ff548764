use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario(name: &str) -> String {
    scenarios().join(name).display().to_string()
}

fn fedsust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedsust"))
        .args(args)
        .env_remove("FEDSUST_DATA_DIR")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn score_file(name: &str) -> Value {
    let out = tempfile::tempdir().unwrap();
    let o = fedsust(&["score", "--config", &scenario(name), "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    read_json(&out.path().join("trust_report.json"))
}

fn text_of(v: &Value) -> String {
    v.to_string()
}

#[test]
fn score_uc_a_displays_one() {
    let r = score_file("uc_a.json");
    assert_eq!(text_of(&r["pillars"]["sustainability"]["score"]), "1.0");
    assert_eq!(r["trust_score"].as_f64(), Some(1.0));
    assert_eq!(r["notions"]["sustainability.federation_complexity"]["score"].as_f64(), Some(0.98));
}

#[test]
fn score_uc_b_carbon_notion() {
    let r = score_file("uc_b.json");
    assert_eq!(r["notions"]["sustainability.carbon_intensity"]["score"].as_f64(), Some(0.09));
    assert_eq!(r["metrics"]["sustainability.carbon_intensity.client"]["score"].as_f64(), Some(0.08));
    assert_eq!(r["metrics"]["sustainability.carbon_intensity.server"]["score"].as_f64(), Some(0.11));
    // Pillar under the shipped anchors; see README for why this differs
    // from the published 0.09.
    let pillar = r["pillars"]["sustainability"]["score_raw"].as_f64().unwrap();
    let carbon = r["notions"]["sustainability.carbon_intensity"]["score_raw"].as_f64().unwrap();
    let hardware = r["notions"]["sustainability.hardware_efficiency"]["score_raw"].as_f64().unwrap();
    let complexity = r["notions"]["sustainability.federation_complexity"]["score_raw"].as_f64().unwrap();
    assert!((pillar - (0.5 * carbon + 0.25 * hardware + 0.25 * complexity)).abs() < 1e-12);
}

#[test]
fn score_uc_d_pillar() {
    let r = score_file("uc_d.json");
    assert_eq!(r["pillars"]["sustainability"]["score"].as_f64(), Some(0.53));
}

#[test]
fn report_text_uses_two_decimals() {
    let out = tempfile::tempdir().unwrap();
    let o = fedsust(&["score", "--config", &scenario("uc_d.json"), "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out.path().join("trust_report.json")).unwrap();
    assert!(text.contains("\"trust_score\": 0.53,"));
    assert!(text.ends_with("}\n"));
}

#[test]
fn malformed_config_exits_one_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"num_clients": 0}"#).unwrap();
    let out = dir.path().join("out");
    let o = fedsust(&["score", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[validation]:"), "{err}");
    assert!(!out.exists());
}

#[test]
fn invalid_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(scenario("uc_a.json")).unwrap()).unwrap();
    cfg["selection_rate"] = Value::from(1.5);
    let path = dir.path().join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let o = fedsust(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("selection_rate"), "{}", stderr(&o));
}

#[test]
fn unknown_reference_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(scenario("uc_a.json")).unwrap()).unwrap();
    cfg["server_location"] = Value::from("QQ");
    let path = dir.path().join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = dir.path().join("out");
    for cmd in ["score", "simulate"] {
        let o = fedsust(&[cmd, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        assert!(stderr(&o).starts_with("error[reference]: unknown grid `QQ`"), "{}", stderr(&o));
    }
    assert!(!out.exists());
    let o = fedsust(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_file_is_a_validation_error() {
    let o = fedsust(&["score", "--config", "/nonexistent/x.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[validation]:"));
}

#[test]
fn usage_errors_are_single_line() {
    let o = fedsust(&["score"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[usage]:"));
}

#[test]
fn validate_accepts_every_shipped_scenario() {
    for name in [
        "uc_a.json",
        "uc_b.json",
        "uc_c.json",
        "uc_d.json",
        "proposal_a.json",
        "proposal_b.json",
        "sim_small.json",
        "desk_scale.json",
    ] {
        let o = fedsust(&["validate", "--config", &scenario(name)]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
}

#[test]
fn data_dir_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data");
    for f in ["grid_intensity.csv", "hardware.csv", "locations.csv"] {
        std::fs::copy(data.join(f), dir.path().join(f)).unwrap();
    }
    // Drop South Africa from the grid table.
    let grid = std::fs::read_to_string(dir.path().join("grid_intensity.csv")).unwrap();
    let trimmed: String = grid.lines().filter(|l| !l.starts_with("ZA,")).map(|l| format!("{l}\n")).collect();
    std::fs::write(dir.path().join("grid_intensity.csv"), trimmed).unwrap();

    let run = |cfg: &str| {
        Command::new(env!("CARGO_BIN_EXE_fedsust"))
            .args(["validate", "--config", &scenario(cfg)])
            .env("FEDSUST_DATA_DIR", dir.path())
            .output()
            .unwrap()
    };
    assert!(run("uc_a.json").status.success());
    assert_eq!(run("uc_d.json").status.code(), Some(2));

    std::fs::write(dir.path().join("hardware.csv"), "model,kind,benchmark_mark,tdp_watts,power_performance\nX,CPU,abc,9,1\n").unwrap();
    let o = run("uc_a.json");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row"), "{}", stderr(&o));
}

#[test]
fn simulate_small_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = fedsust(&["simulate", "--config", &scenario("sim_small.json"), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("emissions.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.iter().filter(|l| l.contains(",training,")).count(), 10 * 2);
    assert_eq!(rows.iter().filter(|l| l.contains(",aggregation,")).count(), 10);
    assert_eq!(rows.len(), 30);

    let factsheet = read_json(&out.join("factsheet.json"));
    assert_eq!(factsheet["pre_training"]["num_clients"], 5);
    assert_eq!(factsheet["pre_training"]["total_rounds"], 10);
    let report = read_json(&out.join("trust_report.json"));
    assert!(report["emissions"]["total"]["co2eq_g"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_is_byte_identical_and_seed_only_moves_selection() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["simulate", "--config"];
        let cfg = scenario("sim_small.json");
        args.push(&cfg);
        let out_s = out.display().to_string();
        args.extend(["--out", &out_s]);
        args.extend(extra);
        let o = fedsust(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    for f in ["trust_report.json", "emissions.csv", "factsheet.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = run("c", &["--seed", "43"]);
    let ra = read_json(&a.join("trust_report.json"));
    let rc = read_json(&c.join("trust_report.json"));
    assert_eq!(ra["metrics"], rc["metrics"]);
    assert_eq!(ra["pillars"], rc["pillars"]);
    let fa = read_json(&a.join("factsheet.json"));
    let fc = read_json(&c.join("factsheet.json"));
    assert_ne!(
        fa["during_training"]["selection_counts"],
        fc["during_training"]["selection_counts"]
    );
}

#[test]
fn compare_proposals() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedsust(&[
        "compare",
        "--config",
        &scenario("proposal_a.json"),
        "--config",
        &scenario("proposal_b.json"),
        "--pillars",
        &scenario("pillars_proposal_a.json"),
        "--pillars",
        &scenario("pillars_proposal_b.json"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("ranking: proposal_b > proposal_a"), "{table}");
    let c = read_json(&dir.path().join("comparison.json"));
    assert_eq!(c["ranking"][0], "proposal_b");
    assert_eq!(c["proposals"][0]["trust_score"].as_f64(), Some(0.53));
    assert_eq!(c["proposals"][0]["trust_score_without_sustainability"].as_f64(), Some(0.58));
    assert_eq!(c["proposals"][1]["trust_score_without_sustainability"].as_f64(), Some(0.63));
}

#[test]
fn compare_identical_has_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let a = scenario("uc_d.json");
    let o = fedsust(&["compare", "--config", &a, "--config", &a, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c = read_json(&dir.path().join("comparison.json"));
    for (_, d) in c["deltas"].as_object().unwrap() {
        assert_eq!(d["delta_raw"].as_f64(), Some(0.0));
    }
}

#[test]
fn compare_needs_two_configs() {
    let o = fedsust(&["compare", "--config", &scenario("uc_a.json")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn partial_pillars_need_flag() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("p.json");
    std::fs::write(&fixture, r#"{"pillars": {"privacy": 0.5}}"#).unwrap();
    let out = dir.path().join("out");
    let base = ["score", "--config", &scenario("uc_d.json"), "--pillars", fixture.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let o = fedsust(&base);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing metric"), "{}", stderr(&o));
    assert!(!out.exists());

    let mut args = base.to_vec();
    args.push("--allow-partial");
    let o = fedsust(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_json(&out.join("trust_report.json"));
    assert_eq!(r["partial"], true);
    assert_eq!(r["missing"].as_array().unwrap().len(), 5);
    assert!(r["flags"].as_array().unwrap().contains(&Value::from("partial")));
}

#[test]
fn weights_file_changes_scores() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = fedsust(&[
        "score",
        "--config",
        &scenario("uc_d.json"),
        "--weights",
        &scenario("weights_carbon_heavy.json"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_json(&out.join("trust_report.json"));
    assert_eq!(r["weights"]["sustainability.carbon_intensity"].as_f64(), Some(0.7));
    assert!(r["trust_score_raw"].as_f64().unwrap() < 0.53);

    std::fs::write(dir.path().join("w.json"), r#"{"sustainability.nope": 1}"#).unwrap();
    let o = fedsust(&[
        "score",
        "--config",
        &scenario("uc_d.json"),
        "--weights",
        dir.path().join("w.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}
