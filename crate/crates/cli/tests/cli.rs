use std::path::Path;
use std::process::{Command, Output};

fn agal(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agal"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write_identity(path: &Path, n: usize, scale: f64) {
    let mut s = String::from("asset_id");
    for i in 0..n {
        s += &format!(",A{i}");
    }
    s.push('\n');
    for i in 0..n {
        s += &format!("A{i}");
        for j in 0..n {
            s += if i == j { ",1" } else { ",0" };
        }
        s.push('\n');
    }
    let s = s.replace(",1", &format!(",{scale}"));
    std::fs::write(path, s).unwrap();
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn help_lists_defaults() {
    let out = Command::new(env!("CARGO_BIN_EXE_agal"))
        .args(["optimize", "--help"])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[default: 0.03]"), "{text}");
    assert!(text.contains("[default: active-set]"), "{text}");
}

#[test]
fn unknown_flag_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = agal(&["cov", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = agal(&["cov", "--input", "does-not-exist.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does-not-exist.csv"));
}

#[test]
fn aap_on_identity_is_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let cov = dir.path().join("cov.csv");
    write_identity(&cov, 5, 2.0);
    let out = agal(&["target", "--cov", cov.to_str().unwrap(), "--spec", "aap"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("target.csv")).unwrap();
    let w: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(w.len(), 5);
    for x in w {
        assert!((x - 0.2).abs() < 1e-12);
    }
    let m = manifest(dir.path());
    assert_eq!(m["command"], "target");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 1);
}

#[test]
fn infeasible_cap_is_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let cov = dir.path().join("cov.csv");
    write_identity(&cov, 100, 1.0);
    let target = dir.path().join("t.csv");
    let mut s = String::from("asset_id,weight\n");
    for i in 0..100 {
        s += &format!("A{i},0.01\n");
    }
    std::fs::write(&target, s).unwrap();
    let out = agal(
        &[
            "optimize",
            "--cov",
            cov.to_str().unwrap(),
            "--target",
            target.to_str().unwrap(),
            "--cap",
            "0.001",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_cov_target_optimize_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |args: &[&str], sub: &str| {
        let out = agal(args, &d.join(sub));
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["data", "synth", "--assets", "40", "--days", "300", "--seed", "3"], "data");
    let returns = d.join("data/returns.csv");
    run(
        &[
            "cov",
            "--input",
            returns.to_str().unwrap(),
            "--folds",
            "5",
            "--start",
            "2006-01-02",
        ],
        "cov",
    );
    let cov = d.join("cov/covariance.csv");
    run(&["target", "--cov", cov.to_str().unwrap(), "--spec", "mvp"], "target");
    let target = d.join("target/target.csv");
    run(
        &[
            "optimize",
            "--cov",
            cov.to_str().unwrap(),
            "--target",
            target.to_str().unwrap(),
            "--cap",
            "0.05",
        ],
        "opt",
    );

    let sol: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("opt/solution.json")).unwrap()).unwrap();
    let w: Vec<f64> = sol["solution"]["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert!(w.iter().all(|x| *x >= 0.0 && *x <= 0.05 + 1e-12));

    let m = manifest(&d.join("cov"));
    assert_eq!(m["seeds"][0], 7);
    assert_eq!(m["config"]["start"], "2006-01-02");
    let outputs: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    assert_eq!(outputs, ["covariance.csv", "spectrum.csv"]);
}

#[test]
fn backtest_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bt.toml");
    std::fs::write(&cfg, "[backtest]\nlookback = 10\n").unwrap();
    let out = agal(&["backtest", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn backtest_from_synthetic_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bt.toml");
    std::fs::write(
        &cfg,
        r#"
[data.synthetic]
n_assets = 30
n_days = 700
seed = 4

[backtest]
lookback_days = 150
covariance = "raw"
methods = [{ kind = "equal_weight" }, { kind = "mvp" }]

[backtest.optimizer]
position_cap = 0.1
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = agal(&["backtest", "--config", cfg.to_str().unwrap()], &out_dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let labels: Vec<&str> = metrics.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["MC", "1/N", "MVP"]);
    assert!(out_dir.join("rebalances.csv").exists());
}

#[test]
fn repro_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = agal(&["repro", "--seed", "11"], d);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert!(ma["outputs"].as_array().unwrap().len() > 20);
    for o in ma["outputs"].as_array().unwrap() {
        let p = o["path"].as_str().unwrap();
        assert_eq!(std::fs::read(a.join(p)).unwrap(), std::fs::read(b.join(p)).unwrap(), "{p}");
    }
}
