//! End-to-end tests of the command-line binary: exit codes, artifact
//! shapes, determinism, and resumability.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use curricula::config::synth_layout_config;
use curricula::synth::{generate, SynthConfig};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_curricula")
}

/// Run the binary with an explicit output root and no ambient env var.
fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("CURRICULA_OUT")
        .output()
        .expect("binary runs")
}

fn assert_code(output: &Output, want: i32, what: &str) {
    let got = output.status.code().expect("exit code");
    assert_eq!(
        got,
        want,
        "{what}: expected exit {want}, got {got}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

/// A small world plus a fast config, written under `dir`.
fn small_world(dir: &Path) -> PathBuf {
    let world = generate(&SynthConfig {
        seed: 13,
        vocab_per_domain: 18,
        train_per_domain: 40,
        noise_fraction: 0.25,
        seed_pairs_per_domain: 10,
        validation_per_domain: 12,
        monolingual_per_domain: 30,
        ..SynthConfig::default()
    })
    .unwrap();
    world.write_to(dir).unwrap();
    let mut config = synth_layout_config(dir, &["legal".into(), "medical".into()], 77);
    config.tuning.trials = 3;
    config.tuning.explore = 2;
    config.tuning.trial_steps = 20;
    config.training.final_steps = 30;
    config.training.batch_size = 4;
    config.training.finetune_steps = 5;
    let path = dir.join("config.json");
    std::fs::write(&path, config.to_json_string()).unwrap();
    path
}

/// Every file under `root`, relative path -> bytes.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn usage_errors_exit_1_data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_world(dir.path());
    let config = config.to_str().unwrap();

    assert_code(&run(&["--help"]), 0, "--help");
    assert_code(&run(&["score"]), 1, "missing --config");
    assert_code(&run(&["frobnicate", "--config", config]), 1, "unknown verb");
    assert_code(
        &run(&["tune", "--config", config, "--method", "zz"]),
        1,
        "unknown method",
    );
    assert_code(
        &run(&["train", "--config", config, "--name", "bad name"]),
        1,
        "bad run name",
    );
    assert_code(
        &run(&["train", "--config", config, "--name", "x", "--schedule", "Q=2"]),
        1,
        "unknown schedule key",
    );
    assert_code(
        &run(&["tune", "--config", config, "--mix", "legal=0.5"]),
        1,
        "mix not summing to 1",
    );
    assert_code(
        &run(&["score", "--config", "/nonexistent/config.json"]),
        2,
        "missing config file",
    );
    assert_code(
        &run(&["eval", "--config", config, "--run", "never-trained"]),
        2,
        "eval before train",
    );
}

#[test]
fn external_feature_with_missing_id_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = small_world(dir.path());
    // Rewrite the config to add an external feature whose file skips id 3.
    let text = std::fs::read_to_string(&config_path).unwrap();
    let mut config: serde_json::Value = serde_json::from_str(&text).unwrap();
    let ext_file = dir.path().join("partial.tsv");
    let lines: Vec<String> = (0..80).filter(|&i| i != 3).map(|i| format!("{i}\t0.5")).collect();
    std::fs::write(&ext_file, lines.join("\n") + "\n").unwrap();
    config["features"]
        .as_array_mut()
        .unwrap()
        .push(serde_json::json!({
            "kind": "external",
            "name": "partial",
            "path": ext_file.to_str().unwrap(),
        }));
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();

    let out = run(&["score", "--config", config_path.to_str().unwrap()]);
    assert_code(&out, 2, "external feature missing an id");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains('3'), "message names the missing id: {stderr}");
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_world(dir.path());
    let config = config.to_str().unwrap();
    let out_root = dir.path().join("out");

    let cycle = || {
        assert_code(&run(&["score", "--config", config]), 0, "score");
        assert_code(&run(&["normalize", "--config", config]), 0, "normalize");
        assert_code(
            &run(&["tune", "--config", config, "--method", "rs"]),
            0,
            "tune rs",
        );
        assert_code(
            &run(&["train", "--config", config, "--name", "baseline", "--no-curriculum"]),
            0,
            "train baseline",
        );
        assert_code(
            &run(&[
                "train",
                "--config",
                config,
                "--name",
                "multi",
                "--weights",
                out_root.join("tune/rs/best.json").to_str().unwrap(),
                "--finetune",
                "seed=legal",
            ]),
            0,
            "train multi",
        );
        assert_code(&run(&["eval", "--config", config, "--run", "baseline"]), 0, "eval baseline");
        assert_code(&run(&["eval", "--config", config, "--run", "multi"]), 0, "eval multi");
        assert_code(&run(&["report", "--config", config]), 0, "report");
    };

    cycle();
    let first = snapshot(&out_root);
    assert!(first.contains_key(Path::new("scores.tsv")));
    assert!(first.contains_key(Path::new("report.tsv")));
    assert!(first.contains_key(Path::new("balance.tsv")));
    assert!(first.contains_key(Path::new("runs/multi/model_finetuned_legal.json")));

    cycle();
    let second = snapshot(&out_root);
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>(),
        "same file set"
    );
    for (path, bytes) in &first {
        assert_eq!(bytes, &second[path], "{} changed across reruns", path.display());
    }
}

#[test]
fn tune_methods_emit_full_histories_and_best_matches_max() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_world(dir.path());
    let config = config.to_str().unwrap();
    let out_root = dir.path().join("out");
    assert_code(&run(&["score", "--config", config]), 0, "score");

    for method in ["rs", "bo"] {
        assert_code(
            &run(&["tune", "--config", config, "--method", method]),
            0,
            method,
        );
        let trials =
            std::fs::read_to_string(out_root.join(format!("tune/{method}/trials.jsonl"))).unwrap();
        assert_eq!(trials.lines().count(), 3, "{method} history length");
        let best: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(out_root.join(format!("tune/{method}/best.json"))).unwrap(),
        )
        .unwrap();
        let best_p = best["p"].as_f64().unwrap();
        let max_p = trials
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["p"].as_f64().unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best_p, max_p, "{method} best equals history max");
    }

    // The uniform baseline produces a single-trial history.
    assert_code(
        &run(&["tune", "--config", config, "--method", "uniform"]),
        0,
        "uniform",
    );
    let trials =
        std::fs::read_to_string(out_root.join("tune/uniform/trials.jsonl")).unwrap();
    assert_eq!(trials.lines().count(), 1);
}

#[test]
fn interrupted_tuning_resumes_to_the_uninterrupted_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_world(dir.path());
    let config = config.to_str().unwrap();
    let out_root = dir.path().join("out");
    assert_code(&run(&["score", "--config", config]), 0, "score");

    // The uninterrupted reference run.
    assert_code(&run(&["tune", "--config", config, "--method", "bo"]), 0, "full run");
    let trials_path = out_root.join("tune/bo/trials.jsonl");
    let full = std::fs::read_to_string(&trials_path).unwrap();

    // Truncate the history to one trial and resume.
    let first_line: String = full.lines().next().unwrap().to_owned() + "\n";
    std::fs::write(&trials_path, first_line).unwrap();
    assert_code(
        &run(&["tune", "--config", config, "--method", "bo", "--resume"]),
        0,
        "resumed run",
    );
    assert_eq!(std::fs::read_to_string(&trials_path).unwrap(), full);
}

#[test]
fn report_marks_missing_runs_absent_and_still_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_world(dir.path());
    let config = config.to_str().unwrap();
    let out_root = dir.path().join("out");
    assert_code(&run(&["score", "--config", config]), 0, "score");
    assert_code(
        &run(&["train", "--config", config, "--name", "only", "--no-curriculum"]),
        0,
        "train",
    );
    assert_code(&run(&["eval", "--config", config, "--run", "only"]), 0, "eval");

    let out = run(&["report", "--config", config, "--run", "only", "--run", "ghost"]);
    assert_code(&out, 0, "report with a missing run");
    assert!(String::from_utf8_lossy(&out.stderr).contains("ghost"));
    let table = std::fs::read_to_string(out_root.join("report.tsv")).unwrap();
    let ghost_line = table.lines().find(|l| l.starts_with("ghost\t")).unwrap();
    assert!(ghost_line.contains("absent"));
}

#[test]
fn output_root_env_var_redirects_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_world(dir.path());
    let elsewhere = dir.path().join("elsewhere");
    let out = Command::new(bin())
        .args(["score", "--config", config.to_str().unwrap()])
        .env("CURRICULA_OUT", &elsewhere)
        .output()
        .expect("binary runs");
    assert_code(&out, 0, "score with env output root");
    assert!(elsewhere.join("features").is_dir());
    assert!(!dir.path().join("out").exists());
}
