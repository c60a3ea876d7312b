use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sweetspot(args: &[&str], oracle_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sweetspot"))
        .args(args)
        .env("SWEETSPOT_ORACLE_DIR", oracle_dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &str = r#"
benchmark = "toy1d"
dim = 1
iterations = 2
repetitions = 2
realisations = 8
samples = 8
init_points = 4
fit_restarts = 2
theta = { fixed = 0.125 }

[evo]
population = 8
generations = 6

[oracle]
resolution = 129
budget = 1000
refine_top = 2
seed = 0
"#;

#[test]
fn run_then_summarise() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let root = tmp.path().join("runs");
    for (strategy, extra) in [("centre", None), ("random", None), ("centre", Some("--baseline-ei"))] {
        let label = if extra.is_some() { "ei" } else { strategy };
        let out = root.join(label);
        let mut args = vec![
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--strategy",
            strategy,
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend(extra);
        let o = sweetspot(&args, tmp.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("convergence.csv").exists());
        let meta = fs::read_to_string(out.join("config.json")).unwrap();
        assert!(meta.contains("\"repetitions\": 2"));
    }
    let o = sweetspot(&["summarise", "--in", root.to_str().unwrap(), "--json"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for label in ["centre", "random", "baseline-ei"] {
        assert!(text.contains(label), "{label} missing from\n{text}");
    }
    assert!(root.join("combined_summary.json").exists());
}

#[test]
fn json_format_and_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let out = tmp.path().join("json");
    let o = sweetspot(
        &[
            "run", "--config", cfg.to_str().unwrap(), "--iters", "1", "--reps", "1", "--j", "4", "--format", "json",
            "--out", out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("records.json").exists());
    let meta = fs::read_to_string(out.join("config.json")).unwrap();
    assert!(meta.contains("\"iterations\": 1"));
    assert!(meta.contains("\"realisations\": 4"));
}

#[test]
fn oracle_builds_a_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sweetspot(
        &["oracle", "--benchmark", "toy1d", "--dim", "1", "--theta-rule", "0.125", "--resolution", "257"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("min_quality"));
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 1);
    // second call reads the cache and agrees
    let again = sweetspot(
        &["oracle", "--benchmark", "toy1d", "--dim", "1", "--theta-rule", "0.125", "--resolution", "257"],
        tmp.path(),
    );
    assert_eq!(stdout(&again), text);
}

#[test]
fn bad_arguments_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--strategy", "sideways"],
        vec!["run", "--benchmark", "f9"],
        vec!["oracle", "--benchmark", "f6", "--dim", "2", "--theta-rule", "wide"],
        vec!["summarise", "--in", "/nonexistent/dir"],
    ] {
        let o = sweetspot(&args, tmp.path());
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(!o.stderr.is_empty());
    }
}
