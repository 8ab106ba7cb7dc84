use std::path::Path;
use std::process::{Command, Output};

fn hemi(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hemi"))
        .args(args)
        .current_dir(dir)
        .env_remove("HEMI_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synthetic(dir: &Path) {
    ok(&hemi(&["make-synthetic", "-o", "data", "-s", "papers_per_block=12"], dir));
}

const CONF: &str = "data/hemi.conf";

#[test]
fn train_then_cluster_writes_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    synthetic(tmp.path());
    ok(&hemi(&["train", "-c", CONF, "-o", "run", "--epochs", "30", "--dim", "16", "-q"], tmp.path()));
    ok(&hemi(&["eval-cluster", "-c", CONF, "-o", "run"], tmp.path()));

    let run = tmp.path().join("run");
    for f in ["embeddings.bin", "embeddings.tsv", "train_report.tsv", "attention.tsv", "checkpoint/manifest.txt"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let metrics = std::fs::read_to_string(run.join("metrics_cluster.tsv")).unwrap();
    let nmi = metrics
        .lines()
        .find(|l| l.starts_with("cluster\tnmi\t"))
        .expect("nmi row");
    let value: f64 = nmi.split('\t').nth(3).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&value));
}

#[test]
fn embed_from_checkpoint_has_one_row_per_target() {
    let tmp = tempfile::tempdir().unwrap();
    synthetic(tmp.path());
    ok(&hemi(&["train", "-c", CONF, "-o", "run", "--epochs", "5", "--dim", "8", "-q"], tmp.path()));
    ok(&hemi(
        &["embed", "-c", CONF, "-o", "emb", "-s", "checkpoint=run/checkpoint"],
        tmp.path(),
    ));
    let tsv = std::fs::read_to_string(tmp.path().join("emb/embeddings.tsv")).unwrap();
    let rows: Vec<&str> = tsv.lines().collect();
    assert_eq!(rows.len(), 36);
    assert!(rows.iter().all(|r| r.split('\t').count() == 8));
    assert_eq!(
        std::fs::read(tmp.path().join("emb/embeddings.bin")).unwrap(),
        std::fs::read(tmp.path().join("run/embeddings.bin")).unwrap()
    );
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    synthetic(tmp.path());
    for run in ["a", "b"] {
        ok(&hemi(&["train", "-c", CONF, "-o", run, "--epochs", "10", "--dim", "8", "-q"], tmp.path()));
    }
    for f in ["embeddings.bin", "embeddings.tsv"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn seed_environment_variable_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    synthetic(tmp.path());
    let run = |out: &str, seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_hemi"));
        cmd.args(["train", "-c", CONF, "-o", out, "--epochs", "3", "--dim", "4", "-q"])
            .current_dir(tmp.path())
            .env_remove("HEMI_SEED");
        if let Some(s) = seed {
            cmd.env("HEMI_SEED", s);
        }
        ok(&cmd.output().unwrap());
        std::fs::read(tmp.path().join(out).join("embeddings.bin")).unwrap()
    };
    assert_ne!(run("x", None), run("y", Some("9")));
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    synthetic(tmp.path());
    let code = |args: &[&str]| hemi(args, tmp.path()).status.code();

    assert_eq!(code(&["no-such-command"]), Some(1));
    assert_eq!(code(&["train", "-c", CONF, "-s", "colour=red"]), Some(1));
    assert_eq!(code(&["train", "-c", "missing.conf"]), Some(1));

    let data = tmp.path().join("data");
    let nodes = std::fs::read_to_string(data.join("nodes.tsv")).unwrap();
    std::fs::write(data.join("nodes.tsv"), format!("{nodes}p0\tpaper\n")).unwrap();
    assert_eq!(code(&["ingest-check", "-c", CONF]), Some(2));
    std::fs::write(data.join("nodes.tsv"), nodes).unwrap();

    assert_eq!(
        code(&[
            "train", "-c", CONF, "-o", "nan", "-q", "--epochs", "5", "--dim", "4",
            "-s", "lr=1e250", "-s", "clip_norm=off",
        ]),
        Some(3)
    );
    assert_eq!(code(&["ingest-check", "-c", CONF]), Some(0));
}

#[test]
fn outputs_stay_in_the_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    synthetic(tmp.path());
    let before: Vec<_> = std::fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    ok(&hemi(&["train-augmented", "-c", CONF, "-o", "aug", "--epochs", "5", "--dim", "8", "-q"], tmp.path()));
    let mut after: Vec<_> = std::fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    after.retain(|f| !before.contains(f));
    assert_eq!(after, vec![std::ffi::OsString::from("aug")]);
    assert!(tmp.path().join("aug/metrics_augmented.tsv").is_file());
}
