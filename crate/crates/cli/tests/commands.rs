use std::path::Path;
use std::process::{Command, Output};

fn hetnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetnet-ee"))
        .args(args)
        .env("HETNET_EE_OUT_DIR", dir)
        .output()
        .expect("spawn hetnet-ee")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn failed(out: &Output) -> String {
    assert!(!out.status.success(), "expected failure, got success");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn datagen_train_eval_bench_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    ok(&hetnet(
        d,
        &[
            "datagen",
            "--count",
            "100",
            "--seed",
            "7",
            "--out",
            "d.ds",
            "--grid-levels",
            "4",
            "--quiet",
        ],
    ));
    let lines = std::fs::read_to_string(d.join("d.ds")).unwrap().lines().count();
    assert_eq!(lines, 101, "header plus one line per sample");

    ok(&hetnet(
        d,
        &[
            "datagen",
            "--count",
            "20",
            "--seed",
            "8",
            "--out",
            "test.ds",
            "--grid-levels",
            "4",
            "--quiet",
        ],
    ));

    ok(&hetnet(
        d,
        &[
            "train", "--arch", "dnn", "--data", "d.ds", "--epochs", "5", "--seed", "1", "--out", "m.model", "--quiet",
        ],
    ));
    assert!(d.join("m.model").exists());
    let history = std::fs::read_to_string(d.join("m.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 6);
    assert!(history.starts_with("epoch,train_loss,validation_loss"));

    ok(&hetnet(
        d,
        &[
            "eval",
            "--model",
            "m.model",
            "--data",
            "test.ds",
            "--out-report",
            "r.csv",
        ],
    ));
    let report = std::fs::read_to_string(d.join("r.csv")).unwrap();
    assert_eq!(report.lines().count(), 21);
    assert!(
        report.lines().skip(1).all(|l| l.ends_with(",true")),
        "oracle must dominate every row"
    );
    assert!(d.join("r.meta.json").exists());
    assert!(d.join("r.cdf_xi_dnn.csv").exists());

    let table = ok(&hetnet(
        d,
        &[
            "bench",
            "--model",
            "m.model",
            "--data",
            "test.ds",
            "--limit",
            "5",
            "--out",
            "bench.csv",
        ],
    ));
    assert!(table.contains("oracle(L=4),5,"));
    assert!(table.contains("\ndnn,5,"));
    assert!(d.join("bench.csv").exists());
}

#[test]
fn train_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&hetnet(
        d,
        &[
            "datagen",
            "--count",
            "30",
            "--seed",
            "3",
            "--out",
            "d.ds",
            "--grid-levels",
            "2",
            "--quiet",
        ],
    ));
    for name in ["a.model", "b.model"] {
        ok(&hetnet(
            d,
            &[
                "train",
                "--arch",
                "cnn",
                "--data",
                "d.ds",
                "--epochs",
                "2",
                "--seed",
                "4",
                "--batch-size",
                "8",
                "--out",
                name,
                "--quiet",
            ],
        ));
    }
    assert_eq!(
        std::fs::read(d.join("a.model")).unwrap(),
        std::fs::read(d.join("b.model")).unwrap()
    );
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&hetnet(dir.path(), &["gradcheck", "--cases", "3", "--seed", "11"]));
    assert!(out.contains("worst relative error"));
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let err = failed(&hetnet(d, &["datagen", "--count", "5", "--out", "x.ds", "--bogus"]));
    assert!(err.contains("--bogus"), "{err}");

    let err = failed(&hetnet(
        d,
        &["train", "--arch", "dnn", "--data", "missing.ds", "--out", "m.model"],
    ));
    assert!(err.contains("missing.ds"), "{err}");

    let err = failed(&hetnet(
        d,
        &["train", "--arch", "rnn", "--data", "d.ds", "--out", "m.model"],
    ));
    assert!(err.contains("rnn"), "{err}");

    // a model trained on one layout does not fit a dataset from another
    std::fs::write(d.join("small.json"), serde_json_config(1, 1, 1, 2)).unwrap();
    ok(&hetnet(
        d,
        &[
            "datagen",
            "--count",
            "10",
            "--out",
            "small.ds",
            "--grid-levels",
            "2",
            "--config",
            "small.json",
            "--quiet",
        ],
    ));
    ok(&hetnet(
        d,
        &[
            "datagen",
            "--count",
            "10",
            "--out",
            "big.ds",
            "--grid-levels",
            "2",
            "--quiet",
        ],
    ));
    ok(&hetnet(
        d,
        &[
            "train",
            "--arch",
            "dnn",
            "--data",
            "small.ds",
            "--epochs",
            "1",
            "--out",
            "small.model",
            "--quiet",
        ],
    ));
    let err = failed(&hetnet(
        d,
        &[
            "eval",
            "--model",
            "small.model",
            "--data",
            "big.ds",
            "--out-report",
            "r.csv",
        ],
    ));
    assert!(err.contains("do not fit"), "{err}");

    std::fs::write(d.join("corrupt.ds"), "{not json\n").unwrap();
    let err = failed(&hetnet(d, &["eval", "--data", "corrupt.ds", "--out-report", "r.csv"]));
    assert!(err.contains("corrupt.ds"), "{err}");
}

fn serde_json_config(m: usize, s: usize, u: usize, k: usize) -> String {
    let cfg = hetnet_ee::NetworkConfig::with_layout(m, s, u, k);
    serde_json::to_string(&cfg).unwrap()
}
