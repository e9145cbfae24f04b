use std::path::Path;
use std::process::{Command, Output};

fn s2s(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_s2s"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(out: Output) -> Output {
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const TINY: &[&str] = &["--hidden", "8", "--embed-dim", "4", "--no-wall-time"];

fn tiny_dataset(dir: &Path) {
    ok(s2s(
        &[
            "gen", "--task", "sort", "--vocab", "10", "--length", "6", "--train", "40", "--val", "10", "--test", "10",
            "--seed", "3", "--output", "ds.txt",
        ],
        dir,
    ));
}

#[test]
fn gen_table_sizes_and_byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "gen", "--task", "reverse", "--vocab", "10", "--train", "9000", "--val", "1000", "--test", "10000",
            "--seed", "1", "--output", out,
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()
    };
    for out in ["a.txt", "b.txt"] {
        let a = args(out);
        let stdout = ok(s2s(&a.iter().map(String::as_str).collect::<Vec<_>>(), dir.path())).stdout;
        assert!(String::from_utf8(stdout)
            .unwrap()
            .contains("train=9000 val=1000 test=10000 seed=1"));
    }
    let a = std::fs::read(dir.path().join("a.txt")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.txt")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 20000);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&s2s(&["gen", "--vocab", "10"], dir.path())), 2);
    assert_eq!(code(&s2s(&["gen", "--task", "rotate", "--vocab", "10"], dir.path())), 2);
    assert_eq!(code(&s2s(&["frobnicate"], dir.path())), 2);
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"task": "sort", "vocab_size": 10, "hiden_size": 4}"#,
    )
    .unwrap();
    let out = s2s(&["gen", "--config", "c.json"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("hiden_size"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"task": "replace", "vocab_size": 10, "length": 4, "train_size": 5, "val_size": 2, "test_size": 3, "seed": 9}"#,
    )
    .unwrap();
    ok(s2s(
        &["gen", "--config", "c.json", "--train", "7", "--output", "d.txt"],
        dir.path(),
    ));
    let text = std::fs::read_to_string(dir.path().join("d.txt")).unwrap();
    for header in ["# kind=replace", "# modulus=2", "# seed=9", "# train=7", "# test=3"] {
        assert!(text.contains(header), "{header}");
    }
}

#[test]
fn missing_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&s2s(&["pca", "--checkpoint", "nope.ckpt"], dir.path())), 3);
    assert_eq!(
        code(&s2s(
            &["eval", "--checkpoint", "nope.ckpt", "--dataset", "nope.txt"],
            dir.path()
        )),
        3
    );
    assert_eq!(code(&s2s(&["train", "--dataset", "nope.txt"], dir.path())), 3);
}

#[test]
fn zero_epochs_reports_baseline_only() {
    let dir = tempfile::tempdir().unwrap();
    tiny_dataset(dir.path());
    let mut args = vec!["train", "--dataset", "ds.txt", "--max-epochs", "0", "--out-dir", "run"];
    args.extend_from_slice(TINY);
    ok(s2s(&args, dir.path()));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["best_epoch"], 0);
    assert_eq!(summary["stop_epoch"], 0);
    let loss = summary["test"]["loss"].as_f64().unwrap();
    assert!((loss - 10f64.ln()).abs() < 0.05 * 10f64.ln(), "{loss}");
    let csv = std::fs::read_to_string(dir.path().join("run/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn training_is_byte_reproducible() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        tiny_dataset(dir.path());
        let mut args = vec![
            "train",
            "--dataset",
            "ds.txt",
            "--max-epochs",
            "4",
            "--batch",
            "16",
            "--threads",
            "1",
            "--out-dir",
            "run",
        ];
        args.extend_from_slice(TINY);
        ok(s2s(&args, dir.path()));
    }
    for f in [
        "ds.txt",
        "run/metrics.csv",
        "run/summary.json",
        "run/model.ckpt",
        "run/pca.csv",
    ] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        assert!(a == std::fs::read(dirs[1].path().join(f)).unwrap(), "{f} differs");
    }
    let csv = std::fs::read_to_string(dirs[0].path().join("run/metrics.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "epoch,train_loss,val_loss,train_token_acc,val_token_acc,wall_time"
    );
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn dataset_and_checkpoint_guards() {
    let dir = tempfile::tempdir().unwrap();
    tiny_dataset(dir.path());
    let mut args = vec![
        "train",
        "--dataset",
        "ds.txt",
        "--vocab",
        "12",
        "--max-epochs",
        "1",
        "--out-dir",
        "x",
    ];
    args.extend_from_slice(TINY);
    let out = s2s(&args, dir.path());
    assert_ne!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("vocab_size"));

    // a V=100 checkpoint cannot seed training on the V=10 dataset
    ok(s2s(
        &[
            "gen", "--task", "sort", "--vocab", "100", "--length", "6", "--train", "4", "--val", "2", "--test", "2",
            "--output", "big.txt",
        ],
        dir.path(),
    ));
    let mut args = vec!["train", "--dataset", "big.txt", "--max-epochs", "0", "--out-dir", "big"];
    args.extend_from_slice(TINY);
    ok(s2s(&args, dir.path()));
    let mut args = vec![
        "train",
        "--dataset",
        "ds.txt",
        "--resume",
        "big/model.ckpt",
        "--max-epochs",
        "1",
        "--out-dir",
        "y",
    ];
    args.extend_from_slice(TINY);
    let out = s2s(&args, dir.path());
    assert_ne!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("V=100"));
    let out = s2s(
        &["eval", "--checkpoint", "big/model.ckpt", "--dataset", "ds.txt"],
        dir.path(),
    );
    assert_ne!(code(&out), 0);
}

#[test]
fn eval_on_memorized_model_and_pca_shape() {
    let dir = tempfile::tempdir().unwrap();
    ok(s2s(
        &[
            "gen", "--task", "reverse", "--vocab", "10", "--length", "8", "--train", "32", "--val", "32", "--test",
            "8", "--seed", "5", "--output", "m.txt",
        ],
        dir.path(),
    ));
    // validation split := the training pairs, so early stopping keeps the
    // most memorized weights
    let text = std::fs::read_to_string(dir.path().join("m.txt")).unwrap();
    let section = |name: &str| -> Vec<&str> {
        text.lines()
            .skip_while(|l| *l != format!("# split={name}"))
            .skip(1)
            .take_while(|l| !l.starts_with('#'))
            .collect()
    };
    let (train, val) = (section("train"), section("val"));
    let mut patched = text.clone();
    for (t, v) in train.iter().zip(&val) {
        patched = patched.replacen(&format!("{v}\n"), &format!("{t}\n"), 1);
    }
    assert_eq!(section("train").len(), 32);
    std::fs::write(dir.path().join("m.txt"), patched).unwrap();

    ok(s2s(
        &[
            "train",
            "--dataset",
            "m.txt",
            "--hidden",
            "64",
            "--batch",
            "8",
            "--max-epochs",
            "500",
            "--patience",
            "500",
            "--out-dir",
            "m",
            "--no-wall-time",
        ],
        dir.path(),
    ));
    let out = ok(s2s(
        &[
            "eval",
            "--checkpoint",
            "m/model.ckpt",
            "--dataset",
            "m.txt",
            "--split",
            "train",
        ],
        dir.path(),
    ));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(metrics.get("val").is_none());
    let acc = metrics["train"]["token_acc"].as_f64().unwrap();
    assert!(acc >= 0.99, "{acc}");

    let csv = String::from_utf8(ok(s2s(&["pca", "--checkpoint", "m/model.ckpt"], dir.path())).stdout).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 11);
    assert!(rows[1..].iter().all(|r| r.split(',').count() == 3));
    let one = String::from_utf8(
        ok(s2s(
            &["pca", "--checkpoint", "m/model.ckpt", "--components", "1"],
            dir.path(),
        ))
        .stdout,
    )
    .unwrap();
    assert_eq!(one.lines().find(|l| !l.starts_with('#')).unwrap(), "token_index,pc1");
}

#[test]
fn gradcheck_passes_on_this_build() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(s2s(&["gradcheck", "--seeds", "2"], dir.path()));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["failed"], 0);
    assert_eq!(report["checks"].as_array().unwrap().len(), 16);
    assert!(report["max_rel_error"].as_f64().unwrap() < 1e-4);
}
