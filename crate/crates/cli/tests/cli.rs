use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pdl1(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdl1"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn pdl1")
}

fn ok(args: &[&str]) -> String {
    let out = pdl1(args);
    assert!(
        out.status.success(),
        "pdl1 {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn small_corpus(dir: &Path) -> PathBuf {
    let listed = ok(&["synth", "--preset", "small", "--seed", "2", "--out", s(dir)]);
    assert_eq!(listed.lines().count(), 2, "{listed}");
    dir.join("internal/manifest.tsv")
}

fn first_slide(manifest: &Path) -> (String, PathBuf) {
    let text = std::fs::read_to_string(manifest).unwrap();
    let row = text.lines().find(|l| !l.starts_with('#') && !l.starts_with("slide_id")).unwrap();
    let f: Vec<&str> = row.split('\t').collect();
    (f[0].to_string(), manifest.parent().unwrap().join(f[1]))
}

#[test]
fn stage_by_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let manifest = small_corpus(&d.join("data"));
    let (id, slide) = first_slide(&manifest);

    let tiles = d.join("tiles");
    assert_eq!(ok(&["tile", "--slide", s(&slide), "--out", s(&tiles)]).trim(), "25 tiles (5 x 5)");
    assert!(tiles.join("r0_c0.png").is_file() && tiles.join("r4_c4.down.png").is_file());

    let roi_dir = d.join("roi");
    let mask = roi_dir.join(format!("{id}.roi.png"));
    let summary = ok(&["roi", "--slide", s(&slide), "--out", s(&mask)]);
    assert!(summary.starts_with("9 of 25 tiles in region"), "{summary}");
    assert!(roi_dir.join(format!("{id}.roi.float.txt")).is_file());

    let counts = d.join("hist_counts.txt");
    let ml = d.join("ml_hist.txt");
    ok(&["featurize-hist", "--manifest", s(&manifest), "--out", s(&counts), "--ml-out", s(&ml)]);
    assert_eq!(std::fs::read_to_string(&counts).unwrap().lines().filter(|l| !l.starts_with('#')).count(), 12);

    let baseline = d.join("baseline.txt");
    let fit = ok(&["train-baseline", "--manifest", s(&manifest), "--features", s(&counts), "--model", s(&baseline)]);
    assert!(fit.contains("(train accuracy 1.0000)"), "{fit}");
    let report = d.join("baseline_report.txt");
    let row = ok(&[
        "predict-baseline", "--manifest", s(&manifest), "--features", s(&counts), "--model", s(&baseline), "--report",
        s(&report),
    ]);
    assert_eq!(row.trim(), "Baseline Histogram & 100.00% (tp:6 fn:0 tn:6 fp:0)");
    assert_eq!(std::fs::read_to_string(&report).unwrap().lines().count(), 3 + 12);

    let rf = d.join("rf.bin");
    ok(&["train-clf", "--features", s(&ml), "--manifest", s(&manifest), "--family", "rf", "--seed", "3", "--out", s(&rf)]);
    assert!(d.join("rf.grid.json").is_file());
    let row = ok(&["classify", "--model", s(&rf), "--features", s(&ml), "--manifest", s(&manifest), "--name", "ML Histogram RF"]);
    assert!(row.starts_with("ML Histogram RF & ") && row.contains("(tp:"), "{row}");

    let cae = d.join("cae.bin");
    let loss = ok(&["train-cae", "--manifest", s(&manifest), "--epochs", "2", "--seed", "1", "--out", s(&cae)]);
    assert!(loss.starts_with("loss "), "{loss}");
    let emb_dir = d.join("emb");
    let emb = ok(&[
        "embed", "--cae", s(&cae), "--slide", s(&slide), "--roi", s(&mask), "--slide-id", &id, "--out",
        s(&emb_dir.join(format!("{id}.emb"))),
    ]);
    assert_eq!(emb.trim(), "9 tiles x 32");
    let mean = d.join("avg.txt");
    ok(&["aggregate", "--mode", "mean", "--embeddings", s(&emb_dir), "--out", s(&mean)]);
    let clustered = d.join("clustered.txt");
    let model = d.join("cluster.bin");
    ok(&[
        "aggregate", "--mode", "cluster", "--embeddings", s(&emb_dir), "--cluster-model", s(&model), "--fit", "--k",
        "3", "--out", s(&clustered),
    ]);
    ok(&["aggregate", "--mode", "cluster", "--embeddings", s(&emb_dir), "--cluster-model", s(&model), "--out", s(&d.join("again.txt"))]);
    assert_eq!(std::fs::read(&clustered).unwrap(), std::fs::read(d.join("again.txt")).unwrap());
}

#[test]
fn experiment_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_corpus(&d.join("data"));
    let config = d.join("data/experiment.toml");
    std::fs::write(
        &config,
        r#"models = ["baseline_hist:baseline", "ml_hist:svm", "clustered_embed:rf"]
seed = 5

[cae_train]
epochs = 2

[kmeans]
k = 4
"#,
    )
    .unwrap();
    let run = d.join("run");
    let printed = ok(&["--deterministic", "experiment", "--config", s(&config), "--run-dir", s(&run)]);
    let text = std::fs::read_to_string(run.join("report.txt")).unwrap();
    assert_eq!(printed, text);
    assert!(text.contains("\nSeparated test sets - Internal (4 slides)\nBaseline Histogram & "), "{text}");
    assert!(text.contains("\nSeparated test sets - External (6 slides)\n"), "{text}");
    assert!(text.contains("Clustered Tile Embeddings RF & "), "{text}");
    assert_eq!(ok(&["report", "--run-dir", s(&run)]), text);
    for f in ["config.toml", "splits.tsv", "provenance.json", "timing.json", "models/cae.bin", "models/cluster.bin"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn bad_input_is_reported() {
    let out = pdl1(&["roi", "--slide", "/nonexistent.png", "--out", "/tmp/x.png"]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());

    let out = Command::new(env!("CARGO_BIN_EXE_pdl1"))
        .args(["report", "--run-dir", "/nonexistent"])
        .env("PDL1_THREADS", "many")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("PDL1_THREADS"));

    assert!(!pdl1(&["aggregate", "--mode", "cluster", "--embeddings", "/tmp", "--out", "/tmp/f.txt"]).status.success());
    assert!(!pdl1(&["train-clf", "--features", "f", "--manifest", "m", "--family", "knn", "--out", "o"]).status.success());
}
