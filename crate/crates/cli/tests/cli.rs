//! Integration tests for config validation, the stage runner and its
//! manifest caching, and the binary's exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

use osrlab_cli::stages::{run_pipeline, run_stage, Stage, StageStatus};
use osrlab_cli::{validate_config, CliError};

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.toml")
}

fn synthetic_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/synthetic.toml")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn smoke_text() -> String {
    std::fs::read_to_string(smoke_config()).unwrap()
}

#[test]
fn bundled_configs_validate_and_roundtrip() {
    for path in [smoke_config(), synthetic_config()] {
        let cfg = validate_config(&path).unwrap();
        // re-serialization parses back to the same configuration
        let text = toml::to_string(&cfg).unwrap();
        let mut reparsed: osrlab_cli::PipelineConfig = toml::from_str(&text).unwrap();
        reparsed.base_dir = cfg.base_dir.clone();
        assert_eq!(cfg, reparsed);
    }
}

#[test]
fn missing_seed_reported() {
    let dir = tempfile::tempdir().unwrap();
    let body = smoke_text().replace("seeds = [1, 2]", "seeds = []");
    let err = validate_config(&write_config(dir.path(), &body)).unwrap_err();
    match err {
        CliError::Config(errors) => {
            assert!(
                errors.iter().any(|e| e.contains("seed required")),
                "{errors:?}"
            );
        }
        other => panic!("expected config error, got {other}"),
    }
}

#[test]
fn overlapping_aux_classes_cite_disjointness_rule() {
    let dir = tempfile::tempdir().unwrap();
    let body = smoke_text().replace("name = \"aux_upper\"", "name = \"uu_top\"");
    let err = validate_config(&write_config(dir.path(), &body)).unwrap_err();
    match err {
        CliError::Config(errors) => {
            assert!(
                errors.iter().any(|e| e.contains("disjointness")),
                "{errors:?}"
            );
        }
        other => panic!("expected config error, got {other}"),
    }
}

#[test]
fn all_errors_reported_at_once() {
    let dir = tempfile::tempdir().unwrap();
    let body = smoke_text()
        .replace("seeds = [1, 2]", "seeds = []")
        .replace("test_fraction = 0.25", "test_fraction = 1.5")
        .replace("folds = 2", "folds = 1");
    let err = validate_config(&write_config(dir.path(), &body)).unwrap_err();
    match err {
        CliError::Config(errors) => {
            assert!(errors.len() >= 3, "expected all errors at once: {errors:?}");
        }
        other => panic!("expected config error, got {other}"),
    }
}

#[test]
fn unknown_keys_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{}\n[backbone_typo]\nx = 1\n", smoke_text());
    assert!(validate_config(&write_config(dir.path(), &body)).is_err());
    let body2 = smoke_text().replace("arch = \"mlp\"", "arch = \"mlp\"\nepcohs = 3");
    assert!(validate_config(&write_config(dir.path(), &body2)).is_err());
}

#[test]
fn evaluate_before_train_cs_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = validate_config(&smoke_config()).unwrap();
    cfg.run.out_dir = dir.path().join("out");

    for stage in [
        Stage::Split,
        Stage::TrainBackbone,
        Stage::ScoreAux,
        Stage::FitThreshold,
        Stage::Mine,
    ] {
        run_stage(&cfg, stage).unwrap();
    }
    let err = run_stage(&cfg, Stage::Evaluate).unwrap_err();
    match err {
        CliError::Dependency { stage } => assert_eq!(stage, "train-cs"),
        other => panic!("expected dependency error, got {other}"),
    }
}

#[test]
fn unchanged_inputs_skip_reruns_and_config_changes_cascade() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = validate_config(&smoke_config()).unwrap();
    cfg.run.out_dir = dir.path().join("out");

    let first = run_stage(&cfg, Stage::Split).unwrap();
    assert_eq!(first.status, StageStatus::Ran);
    let second = run_stage(&cfg, Stage::Split).unwrap();
    assert_eq!(second.status, StageStatus::Skipped);

    run_stage(&cfg, Stage::TrainBackbone).unwrap();
    assert_eq!(
        run_stage(&cfg, Stage::TrainBackbone).unwrap().status,
        StageStatus::Skipped
    );

    // an unrelated config change must not invalidate earlier stages
    let mut cfg2 = cfg.clone();
    cfg2.eval.mmd_kernel = "linear".into();
    assert_eq!(run_stage(&cfg2, Stage::Split).unwrap().status, StageStatus::Skipped);

    // a backbone change re-runs training but not the split
    let mut cfg3 = cfg.clone();
    cfg3.backbone.epochs += 1;
    assert_eq!(run_stage(&cfg3, Stage::Split).unwrap().status, StageStatus::Skipped);
    assert_eq!(
        run_stage(&cfg3, Stage::TrainBackbone).unwrap().status,
        StageStatus::Ran
    );
}

#[test]
fn pipeline_produces_expected_artifacts_and_report_shape() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = validate_config(&smoke_config()).unwrap();
    cfg.run.out_dir = dir.path().join("out");
    run_pipeline(&cfg).unwrap();

    for rel in [
        "seed_1/backbone/backbone.ckpt",
        "seed_1/mine/kut.meta",
        "seed_1/mine/mining_report.csv",
        "seed_1/threshold/curve.txt",
        "seed_1/threshold/sweep.csv",
        "seed_1/assemble/recognizer.ckpt",
        "seed_1/eval/roc.csv",
        "seed_2/eval/roc.csv",
        "report/metrics.csv",
        "report/summary.txt",
        "manifest.json",
    ] {
        assert!(
            cfg.run.out_dir.join(rel).exists(),
            "missing pipeline artifact {rel}"
        );
    }

    let metrics = std::fs::read_to_string(cfg.run.out_dir.join("report/metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(
        lines[0],
        "seed,openness,T,|D_KUT|,cs_H,delta,auroc,kk_accuracy,mean_entropy_kut,mmd_kk_kut"
    );
    // one row per seed plus the mean row
    assert_eq!(lines.len(), 1 + cfg.run.seeds.len() + 1);
    assert!(lines.last().unwrap().starts_with("mean,"));

    // mean row is the arithmetic mean of the seed rows
    let parse = |line: &str| -> Vec<f64> {
        line.split(',')
            .skip(1)
            .map(|f| f.parse::<f64>().unwrap())
            .collect()
    };
    let rows: Vec<Vec<f64>> = lines[1..lines.len() - 1].iter().map(|l| parse(l)).collect();
    let mean = parse(lines.last().unwrap());
    for col in 0..mean.len() {
        let want: f64 = rows.iter().map(|r| r[col]).sum::<f64>() / rows.len() as f64;
        assert!(
            (mean[col] - want).abs() < 1e-12,
            "column {col}: {} vs {want}",
            mean[col]
        );
    }

    // openness of the 2 KK / 2 UU world
    let openness = rows[0][0];
    assert!((openness - (1.0 - (2.0f64 / 4.0).sqrt())).abs() < 1e-12);

    // ROC export is a staircase from (0,0) to (1,1) sorted by threshold
    let roc = std::fs::read_to_string(cfg.run.out_dir.join("seed_1/eval/roc.csv")).unwrap();
    let points: Vec<Vec<f64>> = roc
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse::<f64>().unwrap()).collect())
        .collect();
    assert_eq!((points[0][1], points[0][2]), (0.0, 0.0));
    assert_eq!(
        (points.last().unwrap()[1], points.last().unwrap()[2]),
        (1.0, 1.0)
    );
    for pair in points.windows(2) {
        assert!(pair[1][0] < pair[0][0]); // thresholds descending
        assert!(pair[1][1] >= pair[0][1] && pair[1][2] >= pair[0][2]);
    }
}

#[test]
fn manifest_lists_every_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = validate_config(&smoke_config()).unwrap();
    cfg.run.out_dir = dir.path().join("out");
    run_pipeline(&cfg).unwrap();

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cfg.run.out_dir.join("manifest.json")).unwrap())
            .unwrap();
    let mut listed: std::collections::BTreeSet<PathBuf> = std::collections::BTreeSet::new();
    for (_, record) in manifest["stages"].as_object().unwrap() {
        for out in record["outputs"].as_array().unwrap() {
            listed.insert(cfg.run.out_dir.join(out.as_str().unwrap()));
        }
    }

    let mut on_disk = Vec::new();
    let mut stack = vec![cfg.run.out_dir.clone()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                on_disk.push(path);
            }
        }
    }
    for file in on_disk {
        if file.file_name().unwrap() == "manifest.json" {
            continue;
        }
        assert!(listed.contains(&file), "stray output {}", file.display());
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_osrlab");
    let dir = tempfile::tempdir().unwrap();

    // config error -> 2
    let bad = write_config(dir.path(), &smoke_text().replace("seeds = [1, 2]", "seeds = []"));
    let out = Command::new(bin)
        .args(["validate", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    // dependency error -> 3
    let good = write_config(dir.path(), &smoke_text());
    let out = Command::new(bin)
        .args(["evaluate", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(dir.path().join("never_ran"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("split"), "names the first missing stage: {stderr}");

    // success -> 0
    let out = Command::new(bin)
        .args(["validate", "--config"])
        .arg(&good)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}
