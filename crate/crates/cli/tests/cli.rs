use std::path::Path;
use std::process::{Command, Output};

fn ssl_har(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssl-har"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A tiny corpus and a quick ladder config next to it.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = ssl_har(
        dir.path(),
        &["synth", "--subjects", "3", "--classes", "3", "--rate", "10", "--seconds", "30", "--seed", "7", "--out", "d"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(
        dir.path().join("c.json"),
        r#"{
            "data": "d/corpus.csv",
            "model_kind": "ladder",
            "n_labeled": 9,
            "spec": "convv:4:3:1:1-maxpool:2:2-fc",
            "max_epochs": 2,
            "steps_per_epoch": 4,
            "batch_labeled": 6,
            "batch_unlabeled": 12,
            "holdout_subject": "subj02"
        }"#,
    )
    .unwrap();
    dir
}

#[test]
fn synth_writes_a_readable_corpus() {
    let dir = workspace();
    let csv = std::fs::read_to_string(dir.path().join("d/corpus.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("subject,label,t,ch0,ch1,ch2"));
    // 3 subjects × 3 classes × 30 s × 10 Hz.
    assert_eq!(lines.count(), 2700);
    assert!(dir.path().join("d/synth.json").exists());
}

#[test]
fn gradcheck_passes_for_every_family() {
    let dir = tempfile::tempdir().unwrap();
    let o = ssl_har(dir.path(), &["gradcheck", "--out", "g"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    for kind in ["cnn", "encdec", "ladder"] {
        assert!(stdout.contains(&format!("PASS {kind}")), "{stdout}");
    }
    assert!(dir.path().join("g/gradcheck.csv").exists());
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = workspace();
    let o = ssl_har(dir.path(), &["loso", "--config", "c.json", "--set", "sigmaa=1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("`sigmaa`"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");

    let o = ssl_har(dir.path(), &["train", "--config", "c.json", "--set", "lambdas=[1,2]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`lambdas`"), "{}", stderr(&o));

    let o = ssl_har(dir.path(), &["train", "--config", "c.json", "--set", "learning_rate=-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`learning_rate`"), "{}", stderr(&o));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = workspace();
    let o = ssl_har(dir.path(), &["loso", "--config", "c.json", "--set", "data=missing.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));
}

#[test]
fn loso_outputs_are_byte_identical_across_runs() {
    let dir = workspace();
    for out in ["a", "b"] {
        let o = ssl_har(dir.path(), &["loso", "--config", "c.json", "--out", out, "--seed", "3"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    for f in ["crossval.csv", "pooled_metrics.csv", "folds/0_subj00.csv", "folds/2_subj02.csv"] {
        assert_eq!(read(&format!("a/{f}")), read(&format!("b/{f}")), "{f}");
    }
    let cv = String::from_utf8(read("a/crossval.csv")).unwrap();
    assert!(cv.starts_with("fold,subject,mean_f1,accuracy\n"), "{cv}");
}

#[test]
fn train_eval_and_pca_chain() {
    let dir = workspace();
    let o = ssl_har(dir.path(), &["train", "--config", "c.json", "--out", "t"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["checkpoint.bin", "history.csv", "labeled.csv", "metrics.csv", "resolved_config.json"] {
        assert!(dir.path().join("t").join(f).exists(), "{f}");
    }

    let o = ssl_har(dir.path(), &["eval", "--checkpoint", "t/checkpoint.bin", "--data", "d/corpus.csv", "--out", "e"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = std::fs::read_to_string(dir.path().join("e/metrics.csv")).unwrap();
    assert!(metrics.starts_with("class,precision,recall,f1,support\n"), "{metrics}");
    assert!(metrics.lines().any(|l| l.starts_with("mean,")), "{metrics}");

    let o = ssl_har(dir.path(), &["viz-pca", "--config", "c.json", "--checkpoint", "t/checkpoint.bin", "--out", "v"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pca = std::fs::read_to_string(dir.path().join("v/pca.csv")).unwrap();
    assert_eq!(pca.lines().next(), Some("example_id,subject,label,is_labeled,pc1,pc2"));
    let labeled = pca.lines().skip(1).filter(|l| l.split(',').nth(3) == Some("1")).count();
    assert_eq!(labeled, 9);
}

#[test]
fn sweep_writes_one_row_per_level() {
    let dir = workspace();
    let o = ssl_har(dir.path(), &["sweep-lambda", "--config", "c.json", "--out", "s", "--set", "max_folds=1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sweep = std::fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    // Depth 4 gives levels 0..=4.
    assert_eq!(sweep.lines().count(), 6, "{sweep}");
}
