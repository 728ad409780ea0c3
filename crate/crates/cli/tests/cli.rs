use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn normsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_normsim"))
        .args(args)
        .env_remove("NORMSIM_API_KEY")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn f(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

#[test]
fn analyze_reports_pd_dilemma() {
    let o = normsim(&["analyze", &f("pd.json")]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("cooperation dilemma: players {0,1}, Δ = (2,2)"), "{out}");
    assert!(out.contains("social-welfare optimum: (C,C)"));
    assert!(out.contains("pure Nash equilibria: (D,D)"));
}

#[test]
fn analyze_feasibility() {
    let o = normsim(&[
        "analyze",
        &f("pd.json"),
        "--sanctions",
        &f("pd_sanctions_cost3.json"),
        "--target",
        "C,C",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("enforceable: yes (both players)"));

    let o = normsim(&[
        "analyze",
        &f("pd.json"),
        "--sanctions",
        &f("pd_sanctions_cost1.json"),
        "--target",
        "C,C",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("enforceable: no"));
}

#[test]
fn failing_advice_exits_nonzero() {
    let o = normsim(&[
        "analyze",
        &f("pd.json"),
        "--sanctions",
        &f("pd_sanctions_selfcost.json"),
        "--advice",
        &f("advice_selfcost_violating.json"),
        "--target",
        "D,D",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("worst_violation = 0.1"), "{}", stdout(&o));

    let o = normsim(&[
        "analyze",
        &f("pd.json"),
        "--sanctions",
        &f("pd_sanctions_selfcost.json"),
        "--advice",
        &f("advice_never.json"),
        "--target",
        "D,D",
        "--mode",
        "conditioned",
    ]);
    assert!(o.status.success());
}

#[test]
fn analyze_json() {
    let o = normsim(&[
        "analyze",
        &f("pd.json"),
        "--sanctions",
        &f("pd_sanctions_cost3.json"),
        "--json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["welfare_optimum"], "C,C");
    assert_eq!(v["feasibility"]["enforceable"], true);
    assert_eq!(v["deviation_incentives"], serde_json::json!([2.0, 2.0]));
}

#[test]
fn analyze_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"players\": 2,\n  \"actions\": [[\"C\" \"D\"]]\n}").unwrap();
    let o = normsim(&["analyze", &bad.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = normsim(&["analyze", &f("pd.json"), "--target", "C,X"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("X"));

    let o = normsim(&["analyze", &f("pd.json"), "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = normsim(&[
            "simulate",
            &f("sim_followers.json"),
            "--seed",
            "7",
            "--out",
            &out.to_string_lossy(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(out.join("transcript.txt")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert!(a.starts_with("==================================================\nTime: 8:00 AM\n"));
    let dump: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/episode.json")).unwrap()).unwrap();
    assert_eq!(dump["history"].as_array().unwrap().len(), 16);
    assert_eq!(dump["metrics"]["alignment_inst"], 1.0);
}

#[test]
fn simulate_chat_needs_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = normsim(&[
        "simulate",
        &f("sim_followers.json"),
        "--oracle",
        "chat",
        "--out",
        &dir.path().join("o").to_string_lossy(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("NORMSIM_API_KEY"), "{}", stderr(&o));
    assert!(
        !dir.path().join("o").exists(),
        "nothing written on configuration errors"
    );
}

#[test]
fn simulate_lists_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"env": {"num_crops": 3, "institutions": [{"crop": "kiwis"}], "num_background": 2, "eval_window": 40}}"#,
    )
    .unwrap();
    let o = normsim(&[
        "simulate",
        &cfg.to_string_lossy(),
        "--out",
        &dir.path().join("o").to_string_lossy(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("institutions[0].crop: unknown crop 'kiwis'"), "{err}");
    assert!(err.contains("eval_window"), "{err}");
    assert!(err.contains("background_mode"), "{err}");

    fs::write(&cfg, r#"{"env": {"num_crops": 3}, "fous": 1}"#).unwrap();
    let o = normsim(&[
        "simulate",
        &cfg.to_string_lossy(),
        "--out",
        &dir.path().join("o").to_string_lossy(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fous"));
}

fn small_experiment(dir: &Path, name: &str, body: &str) -> PathBuf {
    let cfg = dir.join(format!("{name}.json"));
    fs::write(&cfg, body).unwrap();
    let out = dir.join(name);
    let o = normsim(&[
        "experiment",
        &cfg.to_string_lossy(),
        "--out",
        &out.to_string_lossy(),
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn experiment_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_experiment(
        dir.path(),
        "e2",
        r#"{"experiment": "multi_institution", "num_institutions": [2, 3], "num_background_followers": [2], "trials": 2}"#,
    );
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    assert!(csv.starts_with("experiment,focal_kind,num_crops,num_background,num_institutions,trial_count,"));
    assert!(out.join("ep_exp2_normative_c5_b2_i3_1.txt").exists());
    assert!(out.join("metrics.json").exists());

    let single = normsim(&["report", &out.join("metrics.csv").to_string_lossy()]);
    assert!(single.status.success());
    let table = stdout(&single);
    assert!(table.lines().next().unwrap().contains("norm_inst"));
    assert_eq!(table.lines().count(), 3);

    let rep_dir = dir.path().join("rep");
    let merged = normsim(&[
        "report",
        &out.join("metrics.csv").to_string_lossy(),
        &out.join("metrics.json").to_string_lossy(),
        "--out",
        &rep_dir.to_string_lossy(),
        "--json",
    ]);
    assert!(merged.status.success(), "{}", stderr(&merged));
    let v: serde_json::Value = serde_json::from_str(&stdout(&merged)).unwrap();
    assert_eq!(v["comparison"].as_array().unwrap().len(), 2);
    assert!(rep_dir.join("comparison.csv").exists());
}

#[test]
fn report_rejects_mixed_schema() {
    let dir = tempfile::tempdir().unwrap();
    let other = dir.path().join("metrics.csv");
    fs::write(&other, "experiment,alignment\nx,1\n").unwrap();
    let o = normsim(&["report", &other.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("schema"), "{}", stderr(&o));
}

#[test]
fn help_documents_flags() {
    let o = normsim(&["experiment", "--help"]);
    let text = stdout(&o);
    for flag in ["--out", "--jobs", "--json"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
}
