use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn visor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_visor"))
        .args(args)
        .env("VISOR_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = visor(&["evaluate", "--no-such-flag"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--no-such-flag"));
}

#[test]
fn help_lists_defaults() {
    let o = visor(&["train-gspo", "--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in [
        "[default: 0.01]",
        "[default: 12]",
        "[default: 0.2]",
        "[default: objective]",
    ] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
    let o = visor(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in [
        "gen-world",
        "gen-corpus",
        "stats",
        "run-episode",
        "evaluate",
        "train-sft",
        "train-gspo",
        "replay",
        "compare",
    ] {
        assert!(text.contains(sub), "missing {sub}");
    }
}

#[test]
fn bad_log_level_and_bad_config_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_visor"))
        .args(["gen-world", "--out", p(dir.path())])
        .env("VISOR_LOG", "verbose")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"version": 1, "sed": 3}"#).unwrap();
    assert_eq!(
        code(&visor(&[
            "gen-world",
            "--config",
            p(&cfg),
            "--out",
            p(dir.path())
        ])),
        2
    );
    fs::write(&cfg, r#"{"version": 9}"#).unwrap();
    assert_eq!(
        code(&visor(&[
            "gen-world",
            "--config",
            p(&cfg),
            "--out",
            p(dir.path())
        ])),
        2
    );
    fs::write(&cfg, r#"{"version": 1, "world": {"n_objects": 0}}"#).unwrap();
    assert_eq!(
        code(&visor(&[
            "gen-world",
            "--config",
            p(&cfg),
            "--out",
            p(dir.path())
        ])),
        2
    );
    assert_eq!(
        code(&visor(&[
            "evaluate",
            "--policy",
            "nobody",
            "--out",
            p(dir.path())
        ])),
        2
    );
}

#[test]
fn config_values_apply_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"version": 1, "seed": 5}"#).unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    assert_eq!(
        code(&visor(&["gen-world", "--config", p(&cfg), "--out", p(&a)])),
        0
    );
    assert_eq!(
        code(&visor(&["gen-world", "--seed", "5", "--out", p(&b)])),
        0
    );
    assert_eq!(
        code(&visor(&[
            "gen-world",
            "--config",
            p(&cfg),
            "--seed",
            "6",
            "--out",
            p(&c)
        ])),
        0
    );
    let read = |d: &Path| fs::read(d.join("world.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn corpus_generation_is_reproducible_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = |out: &Path, jobs: &str| {
        visor(&[
            "gen-corpus",
            "--seed",
            "11",
            "--episodes",
            "5",
            "--jobs",
            jobs,
            "--out",
            p(out),
        ])
    };
    assert_eq!(code(&args(&a, "1")), 0);
    assert_eq!(code(&args(&b, "3")), 0);
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.iter().any(|(n, _)| n.ends_with(".png")));
    assert_eq!(ta, tb);

    let o = visor(&["stats", "--corpus", p(&a), "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["split"], "train");
}

#[test]
fn oracle_stop_evaluation_is_no_worse_than_normal() {
    let dir = tempfile::tempdir().unwrap();
    let run = |mode: &str| {
        let out = dir.path().join(mode);
        let o = visor(&[
            "evaluate",
            "--policy",
            "heuristic",
            "--mode",
            mode,
            "--episodes",
            "8",
            "--seed",
            "4",
            "--jobs",
            "2",
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("report.txt").is_file());
        out.join("report.json")
    };
    let (n, s) = (run("normal"), run("oracle-stop"));
    let read =
        |f: &Path| -> serde_json::Value { serde_json::from_slice(&fs::read(f).unwrap()).unwrap() };
    let (rn, rs) = (read(&n), read(&s));
    assert!(rs["sr"].as_f64().unwrap() >= rn["sr"].as_f64().unwrap());
    assert!(rs["spl"].as_f64().unwrap() >= rn["spl"].as_f64().unwrap());

    let o = visor(&["compare", p(&n), p(&s), "--json"]);
    assert_eq!(code(&o), 0);
    let d: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(d["only_a"].as_array().unwrap().is_empty());
}

#[test]
fn run_episode_writes_frames_and_a_replayable_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ep");
    let o = visor(&[
        "run-episode",
        "--policy",
        "oracle",
        "--seed",
        "2",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("step_000_pano.png").is_file());
    assert!(out.join("step_000_topdown.png").is_file());
    let o = visor(&[
        "replay",
        "--log",
        p(&out.join("episode.jsonl")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(out.join("timeline.txt")).unwrap();
    assert!(text.contains("StoppedCorrect"));
    assert!(text.lines().last().unwrap().contains("-> stop"));
}

#[test]
fn training_commands_write_checkpoints_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let sft = dir.path().join("sft");
    let o = visor(&[
        "train-sft",
        "--steps",
        "20",
        "--synthetic-n",
        "400",
        "--out",
        p(&sft),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["sft.bin", "sft.json", "sft_loss.csv", "sft_eval.json"] {
        assert!(sft.join(f).is_file(), "{f}");
    }
    let g = dir.path().join("gspo");
    let o = visor(&[
        "train-gspo",
        "--init",
        p(&sft.join("sft")),
        "--balance",
        "--steps",
        "10",
        "--synthetic-n",
        "400",
        "--out",
        p(&g),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let curve = fs::read_to_string(g.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 11);
    assert!(g.join("gspo.bin").is_file());

    let o = visor(&[
        "train-gspo",
        "--group-size",
        "1",
        "--steps",
        "2",
        "--out",
        p(&g),
    ]);
    assert_eq!(code(&o), 2);
}
