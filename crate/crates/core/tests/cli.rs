use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ni(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ni")).args(args).output().expect("ni runs")
}

/// Trains a tiny model; `extra` goes after the size overrides.
fn train_small(corpus: &str, out: &Path, metrics: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", corpus, "--out", out.to_str().unwrap(), "--metrics", metrics.to_str().unwrap()];
    args.extend(SMALL);
    args.extend(extra);
    ni(&args)
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const SMALL: [&str; 12] = [
    "--set", "hidden=8", "--set", "encoder_heads=2", "--set", "executor_heads=2", "--set", "epochs=1", "--set",
    "batch_size=8", "--set", "encoder_layers=1",
];

#[test]
fn trace_matches_golden_files() {
    let src = golden("celsius.py");
    let o = ni(&["trace", src.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), fs::read_to_string(golden("celsius.trace")).unwrap());
    let o = ni(&["trace", "--pseudocode", src.to_str().unwrap()]);
    assert_eq!(stdout(&o), fs::read_to_string(golden("celsius.pseudo")).unwrap());
}

#[test]
fn empty_file_gives_empty_trace() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.py");
    fs::write(&p, "").unwrap();
    let o = ni(&["trace", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
}

#[test]
fn decorator_is_a_codegen_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("dec.py");
    fs::write(&p, "x = 1\n@cache\ndef f(a):\n    return a\n").unwrap();
    let o = ni(&["trace", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("Unsupported") && err.contains("line 2, column 1"), "{err}");
}

#[test]
fn syntax_error_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.py");
    fs::write(&p, "def (:\n").unwrap();
    assert_eq!(ni(&["trace", p.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(ni(&["trace", "--bogus", "x.py"]).status.code(), Some(1));
    assert_eq!(ni(&[]).status.code(), Some(1));
    assert_eq!(ni(&["trace", "/no/such/file.py"]).status.code(), Some(1));
    assert_eq!(ni(&["stats", "/no/such/corpus.jsonl"]).status.code(), Some(1));
    assert_eq!(ni(&["stats", ".", "--set", "nonsense=1"]).status.code(), Some(1));
}

#[test]
fn help_lists_every_flag() {
    let cases: [(&str, &[&str]); 6] = [
        ("trace", &["--pseudocode", "--dump-memory", "--dump-vectors", "--checkpoint", "--config", "--set"]),
        ("train", &["--out", "--metrics", "--task", "--init", "--jobs", "--config", "--set"]),
        ("eval", &["--checkpoint", "--jobs"]),
        ("misuse", &["--checkpoint", "--predictions", "--jobs"]),
        ("stats", &["--out-dir", "--config", "--set"]),
        ("synth", &["--out", "--count", "--seed", "--min-statements", "--max-statements", "--misuse-frac"]),
    ];
    for (cmd, flags) in cases {
        let o = ni(&[cmd, "--help"]);
        assert!(o.status.success());
        let text = stdout(&o);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}

#[test]
fn stats_reports_the_long_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("long.py"), format!("x = 1\n{}", "#".repeat(10_001 - 6))).unwrap();
    fs::write(dir.path().join("ok.py"), "y = 2\n").unwrap();
    let out = dir.path().join("stats");
    let o = ni(&["stats", dir.path().to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["too_long"], 1);
    assert_eq!(r["retained"], 1);
    let csv = fs::read_to_string(out.join("char_counts.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
}

fn last_line(path: &Path) -> Value {
    let text = fs::read_to_string(path).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

#[test]
fn train_is_reproducible_and_eval_replays_it() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let corpus = d("train.jsonl");
    assert!(ni(&["synth", "--out", &corpus, "--count", "24", "--seed", "3"]).status.success());
    for run in ["a", "b"] {
        let mut args = vec!["train".to_string(), corpus.clone(), "--out".into(), d(&format!("{run}.ckpt"))];
        args.extend(["--metrics".into(), d(&format!("{run}.jsonl")), "--jobs".into(), "2".into()]);
        args.extend(SMALL.iter().map(|s| s.to_string()));
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = ni(&args);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(d("a.ckpt")).unwrap(), fs::read(d("b.ckpt")).unwrap());
    assert_eq!(fs::read(d("a.jsonl")).unwrap(), fs::read(d("b.jsonl")).unwrap());

    let metrics = fs::read_to_string(d("a.jsonl")).unwrap();
    let first: Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    assert_eq!(first["config"]["hidden"], 8);
    let last = last_line(Path::new(&d("a.jsonl")));
    assert_eq!(last["eval"], true);

    let o = ni(&["eval", &corpus, "--checkpoint", &d("a.ckpt"), "--jobs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let e: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for k in ["L1", "L2", "L3", "acc1", "acc2", "acc3", "lambda_calls"] {
        assert_eq!(e[k], last[k], "{k}");
    }
}

#[test]
fn misuse_writes_one_prediction_per_script() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let corpus = d("misuse.jsonl");
    assert!(ni(&["synth", "--out", &corpus, "--count", "20", "--seed", "4", "--misuse-frac", "0.5"]).status.success());
    let o = train_small(&corpus, &dir.path().join("m.ckpt"), &dir.path().join("m.jsonl"), &["--task", "misuse"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = ni(&["misuse", &corpus, "--checkpoint", &d("m.ckpt"), "--predictions", &d("p.jsonl")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let e: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(e["scripts"], 20);
    let preds = fs::read_to_string(d("p.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 20);
    for line in preds.lines() {
        let p: Value = serde_json::from_str(line).unwrap();
        let prob = p["p_misuse"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&prob));
        assert!(p["explanation_path"].is_array());
    }
}

#[test]
fn init_checkpoint_continues_with_the_same_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let corpus = d("c.jsonl");
    assert!(ni(&["synth", "--out", &corpus, "--count", "8"]).status.success());
    let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    assert!(train_small(&corpus, &a, &dir.path().join("a.jsonl"), &[]).status.success());
    let a = a.to_str().unwrap();
    let o = train_small(&corpus, &b, &dir.path().join("b.jsonl"), &["--init", a, "--task", "misuse"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = train_small(&corpus, &b, &dir.path().join("b.jsonl"), &["--init", a, "--set", "hidden=16"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn trace_dumps_memory_and_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let corpus = d("c.jsonl");
    assert!(ni(&["synth", "--out", &corpus, "--count", "8"]).status.success());
    assert!(train_small(&corpus, &dir.path().join("a.ckpt"), &dir.path().join("a.jsonl"), &[]).status.success());
    let src = golden("celsius.py");
    let o = ni(&["trace", src.to_str().unwrap(), "--dump-vectors", "--checkpoint", &d("a.ckpt")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let json = &text[text.find("\n{").unwrap() + 1..];
    let v: Value = serde_json::from_str(json).unwrap();
    assert_eq!(v["module"]["celsius_to_fahrenheit"]["vector"].as_array().unwrap().len(), 8);
    assert_eq!(ni(&["trace", src.to_str().unwrap(), "--dump-vectors"]).status.code(), Some(1));
}
