//! CLI contract tests: config materialization and schema policing, binary
//! exit codes, artifact preambles, byte-level reproducibility, the plot-data
//! shape, and the moment cache round trip.

use nclab_cli::config::{ConfigFile, ExperimentConfig, ExperimentKind, DEFAULT_SEED};
use nclab_cli::{cache, report, runners};
use num_complex::Complex64;
use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nclab"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn defaults_are_materialized_per_experiment() {
    let cfg = ExperimentConfig::resolve(ExperimentKind::Moments, None, None, None).unwrap();
    assert_eq!(cfg.n_list, vec![8, 16, 32, 64]);
    assert_eq!(cfg.trials, 400);
    assert_eq!(cfg.base_seed, DEFAULT_SEED);
    assert_eq!(cfg.power, 4);
    assert_eq!(cfg.cv_degree, 12);
    let cfg = ExperimentConfig::resolve(ExperimentKind::Inclusion, None, None, None).unwrap();
    assert_eq!(cfg.n_list, vec![48]);
    assert_eq!(cfg.trials, 40);
    assert_eq!(cfg.epsilon, 0.3);
    assert!(cfg.negative_control);
    let cfg = ExperimentConfig::resolve(ExperimentKind::Resolvent, None, None, None).unwrap();
    assert_eq!(cfg.n_list, vec![8, 16, 24, 32]);
    assert_eq!(cfg.trials, 6000);
    assert_eq!(cfg.z, [0.0, 4.0]);
    assert_eq!(cfg.depth, 14);
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), r#"{"trials": 5, "bogus_knob": 1}"#);
    let err = ConfigFile::load(&p).unwrap_err();
    assert!(matches!(err, nclab_cli::CliError::Schema(_)), "{err}");
}

#[test]
fn out_of_range_fields_are_rejected() {
    for (body, needle) in [
        (r#"{"cv_degree": 13}"#, "cv_degree"),
        (r#"{"target": "norm"}"#, "target"),
        (r#"{"trials": 0}"#, "trials"),
        (r#"{"degree_cap": 11}"#, "degree_cap"),
        (
            r#"{"tolerances": {"slope_min": -1.0, "slope_max": -2.0}}"#,
            "slope_min",
        ),
    ] {
        let file: ConfigFile = serde_json::from_str(body).unwrap();
        let err =
            ExperimentConfig::resolve(ExperimentKind::StrongConv, Some(file), None, None)
                .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(needle), "wanted {needle} in {msg}");
    }
}

#[test]
fn named_experiment_must_match_subcommand() {
    let file: ConfigFile = serde_json::from_str(r#"{"experiment": "moments"}"#).unwrap();
    let err = ExperimentConfig::resolve(ExperimentKind::Identities, Some(file), None, None)
        .unwrap_err();
    assert!(matches!(err, nclab_cli::CliError::Schema(_)), "{err}");
}

#[test]
fn binary_exits_2_on_schema_violation() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), r#"{"not_a_field": true}"#);
    let out = bin()
        .args(["moments", "--config"])
        .arg(&p)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn binary_exits_1_on_check_failure() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(
        dir.path(),
        r#"{"n_list": [8, 16], "trials": 1, "tolerances": {"tensor_tol": 1e-6}}"#,
    );
    let out = bin()
        .args(["strong-conv", "--config"])
        .arg(&p)
        .arg("--out")
        .arg(dir.path().join("out"))
        .args(["--seed", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn binary_exits_3_on_resource_cap() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), r#"{"n_list": [4], "trials": 2, "depth": 20}"#);
    let out = bin()
        .args(["resolvent", "--config"])
        .arg(&p)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn binary_exits_0_and_prints_check_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("identities")
        .arg("--out")
        .arg(dir.path().join("out"))
        .args(["--seed", "5", "--check"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let pass_lines = stdout.lines().filter(|l| l.contains("PASS")).count();
    assert_eq!(pass_lines, 7, "expected one PASS line per check:\n{stdout}");
}

#[test]
fn schema_subcommand_emits_json_with_every_field() {
    let out = bin().arg("schema").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let props = v["properties"].as_object().unwrap();
    for field in [
        "experiment",
        "model",
        "n_list",
        "trials",
        "base_seed",
        "out_dir",
        "power",
        "degree_cap",
        "generators",
        "z",
        "depth",
        "cv_degree",
        "epsilon",
        "negative_control",
        "target",
        "tolerances",
    ] {
        assert!(props.contains_key(field), "schema lacks {field}");
    }
}

#[test]
fn rerun_reproduces_artifacts_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let file: ConfigFile =
            serde_json::from_str(r#"{"n_list": [4, 6], "trials": 400}"#).unwrap();
        let cfg = ExperimentConfig::resolve(
            ExperimentKind::Resolvent,
            Some(file),
            Some(11),
            Some(dir.path().join(sub).to_string_lossy().into_owned()),
        )
        .unwrap();
        outputs.push(runners::run(&cfg).unwrap());
    }
    let list = |d: &Path| -> Vec<String> {
        let mut v: Vec<String> = fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        v.sort();
        v
    };
    let (a, b) = (&outputs[0].out_dir, &outputs[1].out_dir);
    assert_eq!(list(a), list(b));
    for name in list(a) {
        let ba = fs::read(a.join(&name)).unwrap();
        let bb = fs::read(b.join(&name)).unwrap();
        assert_eq!(ba, bb, "artifact {name} differs between identical runs");
    }
}

#[test]
fn artifacts_embed_hash_seed_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let file: ConfigFile = serde_json::from_str(r#"{"n_list": [8], "trials": 1}"#).unwrap();
    let cfg = ExperimentConfig::resolve(
        ExperimentKind::StrongConv,
        Some(file),
        Some(9),
        Some(dir.path().join("out").to_string_lossy().into_owned()),
    )
    .unwrap();
    let hash = cfg.config_hash();
    let out = runners::run(&cfg).unwrap();
    assert!(!out.summary.artifacts.is_empty());
    for name in &out.summary.artifacts {
        let text = fs::read_to_string(out.out_dir.join(name)).unwrap();
        assert!(text.contains(&hash), "{name} lacks the config hash");
        assert!(text.contains("seed"), "{name} lacks the seed");
        assert!(
            text.contains(&nclab_cli::version_string()),
            "{name} lacks the version banner"
        );
    }
    let summary = fs::read_to_string(out.out_dir.join("summary.json")).unwrap();
    assert!(summary.contains(&hash) && summary.contains("\"base_seed\": 9"));
}

#[test]
fn plotdata_is_header_only_for_empty_results() {
    let mut buf = Vec::new();
    report::write_plotdata(&mut buf, "moments", &[]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text, "experiment,n,seed,statistic,value\n");
}

#[test]
fn moment_cache_round_trips_and_shrugs_off_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.tsv");
    let mut store = nclab::cauchy::MomentStore::new();
    store.insert(Vec::new(), Complex64::new(1.0, 0.0));
    store.insert(vec![(1, 2)], Complex64::new(-0.25, 0.0));
    store.insert(vec![(1, 1), (2, -3)], Complex64::new(0.125, -0.5));
    cache::save(&path, &store).unwrap();
    let loaded = cache::load(&path);
    assert_eq!(loaded.len(), 3);
    for (k, v) in &store {
        let got = loaded.get(k).unwrap();
        assert!((got - v).norm() < 1e-15);
    }

    fs::write(&path, "nclab-moment-cache v999\ne\t1\t0\n").unwrap();
    assert!(cache::load(&path).is_empty(), "wrong version must be ignored");
    assert!(cache::load(&dir.path().join("absent.tsv")).is_empty());
}
