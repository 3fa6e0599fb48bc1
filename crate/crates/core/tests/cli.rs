use std::path::Path;
use std::process::{Command, Output};

use relprobe::synthetic::{generate_lexicon, write_wordnet, LexiconSpec};

fn relprobe(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_relprobe"));
    cmd.args(args).env_remove("RELPROBE_WORDNET");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    let o = relprobe(&["--help"], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("selftest"));
    assert_eq!(relprobe(&["--version"], &[]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(relprobe(&["frobnicate"], &[]).status.code(), Some(1));
    assert_eq!(relprobe(&["run", "--stage", "nonsense"], &[]).status.code(), Some(1));
    assert_eq!(relprobe(&["--seed", "x", "dataset"], &[]).status.code(), Some(1));
}

#[test]
fn config_problems_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 1\nunknown_key = true\n").unwrap();
    let o = relprobe(&["--config", cfg.to_str().unwrap(), "dataset"], &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("config error"));

    let missing = dir.path().join("absent.toml");
    assert_eq!(relprobe(&["--config", missing.to_str().unwrap(), "dataset"], &[]).status.code(), Some(1));

    let out = dir.path().join("out");
    let o = relprobe(&["-q", "--out", out.to_str().unwrap(), "dataset"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("RELPROBE_WORDNET"));
}

#[test]
fn stage_without_inputs_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = relprobe(&["-q", "--out", dir.path().to_str().unwrap(), "probe"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dataset.jsonl"), "{}", stderr(&o));
}

#[test]
fn dataset_stage_reads_wordnet_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let wn = dir.path().join("wn");
    write_wordnet(&generate_lexicon(&LexiconSpec::default()), &wn).unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "out_dir = \"out\"\n[dataset]\npairs_per_label = 120\n").unwrap();
    let o = relprobe(
        &["-q", "--config", cfg.to_str().unwrap(), "run", "--stage", "dataset"],
        &[("RELPROBE_WORDNET", &wn)],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("out");
    for f in ["dataset.jsonl", "reversed.jsonl", "words.jsonl", "dataset.novel.jsonl", "dataset.no_context.jsonl", "summary.tsv"] {
        assert!(out.join("dataset").join(f).is_file(), "missing {f}");
    }
    let summary = std::fs::read_to_string(out.join("dataset/summary.tsv")).unwrap();
    assert!(summary.starts_with("# relprobe "));
    assert!(summary.lines().next().unwrap().contains("stage=dataset config_hash="));
    let log = std::fs::read_to_string(out.join("run.log")).unwrap();
    assert!(log.contains("[dataset] done"));
}

#[test]
fn selftest_passes_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = relprobe(&["-q", "--out", dir.path().to_str().unwrap(), "--jobs", "2", "selftest"], &[]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}\n{}", stderr(&o));
    assert!(!stdout.contains("FAIL"));
    assert!(dir.path().join("report/table4_sufficiency.tsv").is_file());
}
