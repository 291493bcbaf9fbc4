use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"{
  "data": { "kind": "synthetic", "length": 700, "seed": 2 },
  "ae1": { "window": 16, "channels": 4, "code_dim": 4 },
  "ae2": { "window": 16, "channels": 4, "code_dim": 3 },
  "dialogue": { "epochs": 3, "pretrain_epochs": 2, "batches": 20, "lambda": 1.0,
                "translator": { "epochs": 3 } },
  "regimes": { "k": 2, "profile_len": 8 },
  "strategy": { "horizon": 2 },
  "seed": 5
}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mutual-ae"));
    c.env_remove("MUTUAL_AE_OUTPUT_DIR");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("tiny.json");
    if !cfg.exists() {
        std::fs::write(&cfg, TINY).unwrap();
    }
    bin()
        .arg("-c")
        .arg(&cfg)
        .env("MUTUAL_AE_OUTPUT_DIR", dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn train_library_backtest_chain() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&run(dir.path(), &["train", "--baseline"]));

    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    let mut rows: BTreeMap<&str, usize> = BTreeMap::new();
    for line in history.lines().skip(1) {
        *rows.entry(line.split(',').next().unwrap()).or_default() += 1;
    }
    assert_eq!(rows, BTreeMap::from([("mutual", 3 * 20), ("separate", 3 * 20)]));
    for f in ["ae1.ckpt", "ae2.ckpt", "dict_1to2.ckpt", "dict_2to1.ckpt"] {
        assert!(out.join("checkpoints").join(f).is_file(), "{f}");
    }

    ok(&run(dir.path(), &["library"]));
    let lib = std::fs::read_to_string(out.join("library/library_x1.json")).unwrap();
    assert!(lib.contains("\"build_epoch\": 5"), "{lib}");
    let bt = run(dir.path(), &["backtest"]);
    ok(&bt);
    let printed = String::from_utf8(bt.stdout).unwrap();
    assert_eq!(printed.lines().count(), 6);
    let csv = std::fs::read_to_string(out.join("backtest/backtest_x2.csv")).unwrap();
    assert!(csv.starts_with("date,index,theta,exposure,target_return,pnl,cumulative"), "{csv}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let chain = || {
        for args in [&["train"][..], &["library"], &["backtest"]] {
            ok(&run(dir.path(), args));
        }
        let files = tree(&dir.path().join("out"));
        std::fs::remove_dir_all(dir.path().join("out")).unwrap();
        files
    };
    let first = chain();
    let second = chain();
    assert!(first.len() > 10);
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (k, v) in &first {
        assert!(second[k] == *v, "{} differs", k.display());
    }
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"regimes": {"profile_len": 99}}"#).unwrap();
    let out = bin().arg("-c").arg(&bad).arg("train").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("regimes.profile_len"));

    let out = bin().args(["-c", "/nonexistent/run.json", "train"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    // backtest before any library exists
    assert_eq!(run(dir.path(), &["backtest"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["library"]).status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    std::fs::write(&file, "").unwrap();
    std::fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    let out = bin()
        .arg("-c")
        .arg(dir.path().join("tiny.json"))
        .env("MUTUAL_AE_OUTPUT_DIR", file.join("out"))
        .arg("synth")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn output_dir_flag_beats_environment() {
    let dir = tempfile::tempdir().unwrap();
    let flag = dir.path().join("flag");
    let out = run(dir.path(), &["--output-dir", flag.to_str().unwrap(), "synth"]);
    ok(&out);
    assert!(flag.join("synthetic.csv").is_file());
    assert!(flag.join("synthetic.truth.csv").is_file());
    assert!(!dir.path().join("out").exists());
    let text = std::fs::read_to_string(flag.join("synthetic.csv")).unwrap();
    assert!(text.starts_with("date,target,x1,x2"), "{}", &text[..40]);
    assert_eq!(text.lines().count(), 1 + 700 + 2);
}

#[test]
fn gradcheck_passes() {
    let out = bin().args(["gradcheck", "--seeds", "2"]).output().unwrap();
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains(" pass ")).count(), 5, "{text}");
}

#[test]
fn sweep_covers_every_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TINY.replace(r#""seed": 2 }"#, r#""seed": 2, "contexts": 3 }"#);
    std::fs::write(dir.path().join("tiny.json"), cfg).unwrap();
    ok(&run(dir.path(), &["sweep", "--workers", "2"]));
    let csv = std::fs::read_to_string(dir.path().join("out/sweep/sweep.csv")).unwrap();
    let pairs: Vec<String> = csv.lines().skip(1).map(|l| l.split(',').take(2).collect::<Vec<_>>().join("+")).collect();
    assert_eq!(pairs, ["x1+x2", "x1+x3", "x2+x3"]);
}
