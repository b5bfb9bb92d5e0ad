//! Black-box tests of the `sepkit` binary: exit codes, output layout,
//! idempotence, determinism, and the smoke-level quality bars.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn sepkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sepkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Write a config whose `[io] out_dir` points into the tempdir.
fn write_config(dir: &Path, body: &str) -> PathBuf {
    let out_dir = dir.join("out");
    let text = format!("{body}\n[io]\nout_dir = {:?}\n", out_dir.to_str().unwrap());
    let path = dir.join("pipeline.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn report(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("out/report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Aggregate metric value; the cap sentinels parse as infinities.
fn aggregate(report: &serde_json::Value, name: &str) -> f64 {
    match &report["aggregates"][name] {
        serde_json::Value::Number(n) => n.as_f64().unwrap(),
        serde_json::Value::String(s) if s == "inf" => f64::INFINITY,
        serde_json::Value::String(s) if s == "-inf" => f64::NEG_INFINITY,
        other => panic!("aggregate {name} missing or malformed: {other:?}"),
    }
}

const TWO_SPEAKER_REVERB: &str = r#"
seed = 11
stages = ["simulate", "enhance", "score"]
enhance_chain = ["wpe", "mask:irm", "mvdr"]
metrics = ["si_snr", "snr"]

[simulate]
utterances = 2
sources = 2
duration = 1.5
noise_snr = 10.0

[simulate.room]
size = [4.2, 3.1, 2.7]
t60 = 0.12
max_order = 8
mics = [[2.1, 1.5, 1.3], [2.18, 1.5, 1.3]]
"#;

#[test]
fn full_pipeline_writes_estimates_reports_and_resolved_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), TWO_SPEAKER_REVERB);
    let out = sepkit(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));

    let root = tmp.path().join("out");
    assert!(root.join("resolved_config.toml").exists());
    assert!(root.join("report.csv").exists());
    for utt in ["utt0000", "utt0001"] {
        assert!(root.join(format!("corpus/{utt}_mix.wav")).exists());
        assert!(root.join(format!("corpus/{utt}_noise.wav")).exists());
        assert!(root.join(format!("corpus/{utt}.json")).exists());
        // One estimate per source.
        for j in 0..2 {
            assert!(root.join(format!("enhanced/{utt}_est{j}.wav")).exists());
        }
        assert!(!root.join(format!("enhanced/{utt}_est2.wav")).exists());
    }

    let rep = report(tmp.path());
    assert!(rep["per_utt"]["utt0000"]["si_snr"].is_number());
    // Oracle-masked beamforming on a noisy reverberant mixture lands well
    // above the unprocessed mixture.
    assert!(aggregate(&rep, "si_snr") > 0.0);

    // The resolved config is itself a loadable config.
    let resolved = std::fs::read_to_string(root.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("enhance_chain"));
    assert!(toml::from_str::<toml::Value>(&resolved).is_ok());
}

#[test]
fn usage_errors_exit_with_code_1() {
    let tmp = TempDir::new().unwrap();

    let out = sepkit(&["simulate"]);
    assert_eq!(code(&out), 1);
    assert!(stderr_of(&out).contains("--config"));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "stages = [\n").unwrap();
    let out = sepkit(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);

    let empty_chain = write_config(tmp.path(), "stages = [\"enhance\"]\n");
    let out = sepkit(&["run", "--config", empty_chain.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr_of(&out).contains("enhance_chain"));
    // The same config is fine for stages that never touch the chain.
    let out = sepkit(&["enhance", "--config", empty_chain.to_str().unwrap()]);
    assert_eq!(code(&out), 1);

    let bad_grammar = write_config(tmp.path(), "enhance_chain = [\"mvdr\"]\n");
    let out = sepkit(&["score", "--config", bad_grammar.to_str().unwrap()]);
    assert_eq!(code(&out), 1);

    let ok = write_config(tmp.path(), "");
    let out = sepkit(&["simulate", "--config", ok.to_str().unwrap(), "--jobs", "0"]);
    assert_eq!(code(&out), 1);

    let out = sepkit(&["simulate", "--config", ok.to_str().unwrap(), "--frobnicate"]);
    assert_eq!(code(&out), 1);

    let out = sepkit(&["run", "--config", ok.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "run with no stages is a config error");
}

#[test]
fn help_and_version_exit_cleanly() {
    assert_eq!(code(&sepkit(&["--help"])), 0);
    assert_eq!(code(&sepkit(&["--version"])), 0);
    assert_eq!(code(&sepkit(&["simulate", "--help"])), 0);
}

#[test]
fn impossible_t60_is_a_data_error_naming_the_utterance() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
[simulate]
utterances = 2
duration = 0.5

[simulate.room]
size = [2.0, 2.0, 2.0]
t60 = 0.04
mics = [[1.0, 1.0, 1.0], [1.08, 1.0, 1.0]]
"#,
    );
    let out = sepkit(&["simulate", "--config", cfg.to_str().unwrap(), "--jobs", "1"]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr_of(&out));
    let err = stderr_of(&out);
    assert!(err.contains("utt0000"), "error does not name the utterance: {err}");
    assert!(err.contains("t60"), "error does not explain the cause: {err}");
}

#[test]
fn missing_estimate_utterance_is_a_data_error_naming_it() {
    let tmp = TempDir::new().unwrap();
    let ests_path = tmp.path().join("estimates.tsv");
    let body = format!(
        "seed = 2\nmetrics = [\"si_snr\"]\n\n[simulate]\nutterances = 2\nduration = 1.0\n\n\
         [score]\nestimates = {:?}\n",
        ests_path.to_str().unwrap()
    );
    let cfg = write_config(tmp.path(), &body);
    let out = sepkit(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));

    // Estimates cover only the first utterance.
    let src = tmp.path().join("out/corpus/utt0000_src0.wav");
    std::fs::write(
        &ests_path,
        format!("utt0000\t{}\t{}\n", src.display(), src.display()),
    )
    .unwrap();
    let out = sepkit(&["score", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("utt0001"), "stderr: {}", stderr_of(&out));
}

#[test]
fn reruns_skip_existing_outputs_until_forced() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[simulate]\nutterances = 1\nduration = 0.6\n");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&sepkit(&["simulate", "--config", cfg])), 0);

    let mix = tmp.path().join("out/corpus/utt0000_mix.wav");
    std::fs::remove_file(&mix).unwrap();
    assert_eq!(code(&sepkit(&["simulate", "--config", cfg])), 0);
    assert!(!mix.exists(), "rerun without --force must not regenerate");

    assert_eq!(code(&sepkit(&["simulate", "--config", cfg, "--force"])), 0);
    assert!(mix.exists(), "--force must regenerate");
}

#[test]
fn same_seed_forced_reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), TWO_SPEAKER_REVERB);
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&sepkit(&["run", "--config", cfg])), 0);
    let first = snapshot(&tmp.path().join("out"));
    assert_eq!(code(&sepkit(&["run", "--config", cfg, "--force"])), 0);
    let second = snapshot(&tmp.path().join("out"));
    assert_eq!(first, second);
}

#[test]
fn staged_and_combined_runs_produce_the_same_report() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg_a = write_config(a.path(), TWO_SPEAKER_REVERB);
    let cfg_b = write_config(b.path(), TWO_SPEAKER_REVERB);

    assert_eq!(code(&sepkit(&["run", "--config", cfg_a.to_str().unwrap()])), 0);
    for stage in ["simulate", "enhance", "score"] {
        let out = sepkit(&[stage, "--config", cfg_b.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{stage}: {}", stderr_of(&out));
    }

    let rep_a = std::fs::read(a.path().join("out/report.json")).unwrap();
    let rep_b = std::fs::read(b.path().join("out/report.json")).unwrap();
    assert_eq!(rep_a, rep_b);

    // Estimates are byte-identical too, not just their scores.
    let est_a = std::fs::read(a.path().join("out/enhanced/utt0000_est0.wav")).unwrap();
    let est_b = std::fs::read(b.path().join("out/enhanced/utt0000_est0.wav")).unwrap();
    assert_eq!(est_a, est_b);
}

#[test]
fn iam_chain_reconstructs_a_clean_single_source() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
seed = 3
stages = ["simulate", "enhance", "score"]
enhance_chain = ["mask:iam"]
metrics = ["si_snr"]

[simulate]
utterances = 2
duration = 1.0
"#,
    );
    let out = sepkit(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    let v = aggregate(&report(tmp.path()), "si_snr");
    assert!(v > 40.0, "IAM on a noiseless source scored {v} dB");
}

#[test]
fn mixture_baseline_recovers_the_configured_snr() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
seed = 5
stages = ["simulate", "score"]
metrics = ["snr"]

[simulate]
utterances = 3
duration = 1.5
noise_snr = 8.0

[score]
mixture_as_estimate = true
"#,
    );
    let out = sepkit(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    let v = aggregate(&report(tmp.path()), "snr");
    assert!((v - 8.0).abs() < 2.0, "mixture scored {v} dB against 8 dB mixing");
}

#[test]
fn references_scored_as_estimates_hit_the_caps() {
    let tmp = TempDir::new().unwrap();
    let corpus_manifest = tmp.path().join("out/corpus/manifest.tsv");
    let body = format!(
        "seed = 9\nstages = [\"simulate\", \"score\"]\nmetrics = [\"si_snr\", \"stoi\"]\n\n\
         [simulate]\nutterances = 2\nduration = 3.0\n\n\
         [score]\nestimates = {:?}\n",
        corpus_manifest.to_str().unwrap()
    );
    let cfg = write_config(tmp.path(), &body);
    let out = sepkit(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));

    let rep = report(tmp.path());
    assert_eq!(aggregate(&rep, "si_snr"), f64::INFINITY);
    assert!(aggregate(&rep, "stoi") >= 0.999);
}

/// Sorted (relative path, bytes) snapshot of an output tree.
fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_str().unwrap().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}
