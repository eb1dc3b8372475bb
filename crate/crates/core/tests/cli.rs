mod common;

use std::fs;

use common::cli::{config, run, snapshot};

#[test]
fn every_command_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let bad = common::cli::nondeterministic_commands(dir.path());
    assert!(bad.is_empty(), "{bad:?}");
}

#[test]
fn seed_changes_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, config("simulate", &dir.path().join("none"))).unwrap();
    let mut snaps = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(seed);
        let (code, _, err) = run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
        snaps.push(snapshot(&out));
    }
    assert_ne!(snaps[0], snaps[1]);
}

#[test]
fn rate_writes_timing_only_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, config("rate", &dir.path().join("none"))).unwrap();
    let plain = dir.path().join("plain");
    let timed = dir.path().join("timed");
    assert_eq!(run(&["rate", "--config", cfg.to_str().unwrap(), "--out", plain.to_str().unwrap()]).0, 0);
    assert_eq!(run(&["rate", "--config", cfg.to_str().unwrap(), "--out", timed.to_str().unwrap(), "--timing"]).0, 0);
    let a = snapshot(&plain);
    let b = snapshot(&timed);
    assert!(!a.contains_key("rate_timing.csv"));
    assert!(b.contains_key("rate_timing.csv"));
    assert_eq!(a["rate.csv"], b["rate.csv"]);
    let header = String::from_utf8(a["rate.csv"].clone()).unwrap();
    assert!(header.starts_with("n,replicate,converged,failed,theta_hat_0"));
}

#[test]
fn missing_theta0_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "n_grid = [1000]\nreplications = 2\n").unwrap();
    let (code, _, err) = run(&["rate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("theta0"), "{err}");
}

#[test]
fn unknown_config_key_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "theta0.alpha = [0.1, 0.1]\ntheta0.beta = [0.8]\nrepetitions = 2\n").unwrap();
    let (code, _, err) = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("repetitions"), "{err}");
}

#[test]
fn explosive_parameters_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "theta0.alpha = [0.1, 0.6]\ntheta0.beta = [0.9]\nn_grid = [1000]\n").unwrap();
    let out = dir.path().join("o");
    let (code, _, err) = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("Lyapunov exponent"), "{err}");
    assert!(!out.join("path.csv").exists());
}

#[test]
fn usage_errors_exit_with_1() {
    assert_eq!(run(&["frobnicate", "--config", "x.toml"]).0, 1);
    assert_eq!(run(&["rate"]).0, 1);
    assert_eq!(run(&["rate", "--config", "/nonexistent/c.toml"]).0, 1);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn kind_mismatch_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, config("rate", &dir.path().join("none"))).unwrap();
    let (code, _, err) = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("kind"), "{err}");
}

#[test]
fn fit_reads_a_data_file() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, config("simulate", &dir.path().join("none"))).unwrap();
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", sim.to_str().unwrap()]).0, 0);
    let path = fs::read_to_string(sim.join("path.csv")).unwrap();
    let x: String = path.lines().skip(1).map(|l| format!("{}\n", l.split(',').nth(1).unwrap())).collect();
    let data = dir.path().join("x.txt");
    fs::write(&data, x).unwrap();
    let fcfg = dir.path().join("f.toml");
    fs::write(&fcfg, format!("theta0.alpha = [0.1, 0.1]\ntheta0.beta = [0.8]\ndata.input = {:?}\n", data.display().to_string())).unwrap();
    let out = dir.path().join("fit");
    let (code, stdout, err) = run(&["fit", "--config", fcfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.starts_with("fit:"));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(out.join("fit.json")).unwrap()).unwrap();
    assert!(json["loglik"].as_f64().unwrap().is_finite());
}

#[test]
fn shipped_configs_validate() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = garch_stable::experiments::ExperimentConfig::load(&path).unwrap();
        let kind = cfg.kind.clone().expect("shipped configs name their kind");
        cfg.validate_for(&kind).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 5);
}
