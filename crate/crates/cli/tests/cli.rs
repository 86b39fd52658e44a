use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fairaudit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairaudit")).args(args).output().unwrap()
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

const SMALL: &str = "\
n_talks = 120
seed = 5
group.race = white:80,black:25,other:15
privileged.race = white
group.gender = male:70,female:50
privileged.gender = male
base_rate = 0.5
shift.race.black.funny = -0.3
n_features = 3
views = true
";

fn small_data(dir: &Path) -> String {
    let conf = dir.join("small.conf");
    std::fs::write(&conf, SMALL).unwrap();
    let data = dir.join("small.csv");
    let out = fairaudit(&["simulate", "--config", conf.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    data.to_string_lossy().into_owned()
}

fn code(out: &Output) -> Option<i32> {
    out.status.code()
}

#[test]
fn simulate_is_reproducible_and_seed_overrides() {
    let conf = scenario("ted_marginals.conf");
    let a = fairaudit(&["simulate", "--config", &conf]);
    let b = fairaudit(&["simulate", "--config", &conf]);
    assert_eq!(code(&a), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = fairaudit(&["simulate", "--config", &conf, "--seed", "1"]);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 2384);
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = fairaudit(&["simulate", "--config", "/nonexistent/scenario.conf"]);
    assert_eq!(code(&out), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&fairaudit(&["audit", "--bogus"])), Some(2));
}

#[test]
fn unknown_column_and_category_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let out = fairaudit(&["audit", "--data", &data, "--protected", "religion"]);
    assert_eq!(code(&out), Some(2));
    let out = fairaudit(&["audit", "--data", &data, "--protected", "race", "--privileged", "martian"]);
    assert_eq!(code(&out), Some(2));
    let out = fairaudit(&["audit", "--data", &data, "--protected", "race", "--labels", "nope"]);
    assert_eq!(code(&out), Some(2));
}

#[test]
fn stage_specific_flags_are_rejected_elsewhere() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let base = ["run", "--data", data.as_str(), "--protected", "race"];
    let with = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend_from_slice(extra);
        fairaudit(&a)
    };
    let out = with(&["--stage", "pre", "--eta", "5"]);
    assert_eq!(code(&out), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--eta"));
    assert_eq!(code(&with(&["--stage", "in", "--repair-level", "0.5"])), Some(2));
    assert_eq!(code(&with(&["--stage", "pre", "--repair-level", "1.5"])), Some(2));
    assert_eq!(code(&with(&["--split", "1.5"])), Some(2));
}

#[test]
fn audit_writes_report_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let out = dir.path().join("audit.json");
    let res = fairaudit(&[
        "audit", "--data", &data, "--protected", "race", "--positive", "funny,beautiful", "--negative", "ok",
        "--out", out.to_str().unwrap(), "--no-timestamp",
    ]);
    assert_eq!(code(&res), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["manifest"]["command"], "audit");
    assert!(report["manifest"].get("timestamp").is_none());
    assert!(report["rollup"]["positive"]["mean_summary_di"].is_number());
    let plot = std::fs::read_to_string(dir.path().join("audit.plot.csv")).unwrap();
    assert!(plot.starts_with("label,group_pair,disparate_impact\n"));
}

#[test]
fn timestamp_is_recorded_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let res = fairaudit(&["audit", "--data", &data, "--protected", "gender"]);
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert!(report["manifest"]["timestamp"].is_string());
}

#[test]
fn run_is_deterministic_and_records_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let models = dir.path().join("models.json");
    let args = [
        "run", "--data", &data, "--protected", "race", "--stage", "in", "--eta", "5", "--labels", "funny",
        "--no-timestamp", "--models-out", models.to_str().unwrap(),
    ];
    let a = fairaudit(&args);
    assert_eq!(code(&a), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let first_models = std::fs::read(&models).unwrap();
    let b = fairaudit(&args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(first_models, std::fs::read(&models).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(report["eta"], 5.0);
    assert_eq!(report["manifest"]["inputs"].as_object().unwrap().len(), 1);
    assert_eq!(report["labels"].as_array().unwrap().len(), 1);
}

#[test]
fn repair_writes_provenance_and_alpha_reads_ratings() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let out: PathBuf = dir.path().join("repaired.csv");
    let res = fairaudit(&["repair", "--data", &data, "--protected", "race", "--out", out.to_str().unwrap(), "--no-timestamp"]);
    assert_eq!(code(&res), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# "));

    let ratings = dir.path().join("ratings.csv");
    std::fs::write(&ratings, "item,a,b\n1,x,x\n2,y,y\n3,x,\n").unwrap();
    let res = fairaudit(&["alpha", "--data", ratings.to_str().unwrap(), "--no-timestamp"]);
    assert_eq!(code(&res), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["alpha"], 1.0);
}
