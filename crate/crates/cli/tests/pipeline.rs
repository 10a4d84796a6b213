use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use dendrite::data::{write_idx_images, write_idx_labels, DatasetName, Grid, LabeledDataset};
use dendrite::optim::Task;
use dendrite::rng;
use dendrite_cli::analyze::{run_analysis, ANALYSIS_DIR, EMBEDDING_DIR, ENTROPY_FILE, SELECTIVITY_FILE};
use dendrite_cli::plot::emit_plots;
use dendrite_cli::summary::read_summary_csv;
use dendrite_cli::sweep::{collect_reports, runs_root};
use dendrite_cli::{run_sweep, ExperimentConfig};
use ndarray::Array2;
use rand::Rng;

/// Ten classes, each a bright horizontal band at its own height.
fn bands(n: usize, seed: u64) -> LabeledDataset {
    let mut r = rng::seeded(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
    let features = Array2::from_shape_fn((n, 784), |(i, j)| {
        let row = j / 28;
        let base = if row / 2 == labels[i] + 2 { 0.9 } else { 0.05 };
        (base + r.random_range(0.0f32..0.1)).min(1.0)
    });
    LabeledDataset::new("bands", features, labels, 10, Grid::new(28, 28, 1)).unwrap()
}

fn write_fmnist(root: &Path) {
    let (train, test) = DatasetName::Fmnist.files(root);
    fs::create_dir_all(train[0].parent().unwrap()).unwrap();
    let (tr, te) = (bands(300, 1), bands(200, 2));
    write_idx_images(&train[0], &tr).unwrap();
    write_idx_labels(&train[1], &tr.labels).unwrap();
    write_idx_images(&test[0], &te).unwrap();
    write_idx_labels(&test[1], &te.labels).unwrap();
}

fn config(dir: &Path) -> String {
    format!(
        r#"
dataset = "fmnist"
out_dir = "{out}"
data_dir = "{data}"
seeds = [0, 1]
epochs = 2
batch_size = 32

[grid]
kinds = ["dANN-R", "dANN-LRF"]
somas = [8]
dendrites_per_soma = [2]
vann = [[16, 8]]

[analysis]
subset = 60
perplexity = 5.0
tsne_iters = 150
"#,
        out = dir.join("out").display(),
        data = dir.join("data").display()
    )
}

fn setup() -> (tempfile::TempDir, ExperimentConfig, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    write_fmnist(&tmp.path().join("data"));
    let path = tmp.path().join("exp.toml");
    fs::write(&path, config(tmp.path())).unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    (tmp, cfg, path)
}

fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.clone(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn sweep_analyze_plot() {
    let (_tmp, cfg, _) = setup();
    let first = run_sweep(&cfg).unwrap();
    assert_eq!(first.len(), 1);
    assert_eq!((first[0].trained, first[0].skipped), (6, 0));
    assert!(first[0].failures.is_empty());
    assert_eq!(first[0].configs.len(), 3);
    let before = snapshot(&cfg.out_dir);

    // re-running trains nothing and rewrites identical files
    let second = run_sweep(&cfg).unwrap();
    assert_eq!((second[0].trained, second[0].skipped), (0, 6));
    assert_eq!(second[0].configs, first[0].configs);
    let after = snapshot(&cfg.out_dir);
    assert_eq!(after.len(), before.len());
    for ((pa, a), (pb, b)) in after.iter().zip(&before) {
        assert_eq!(pa, pb);
        assert!(a == b, "{} changed on re-run", pa.display());
    }

    let rows = read_summary_csv(&cfg.out_dir.join("summary_standard.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    let reports = collect_reports(&runs_root(&cfg.out_dir, &Task::Standard)).unwrap();
    assert_eq!(reports.len(), 6);
    for row in &rows {
        let accs: Vec<f64> = reports
            .iter()
            .filter(|r| r.label == row.label)
            .map(|r| 100.0 * r.test_accuracy)
            .collect();
        assert_eq!(accs.len(), 2);
        assert!((row.accuracy_mean - (accs[0] + accs[1]) / 2.0).abs() < 1e-12);
        assert!(row.accuracy_std.is_some());
    }

    let summary = run_analysis(&cfg).unwrap();
    assert_eq!(summary.models.len(), 3);
    let dir = cfg.out_dir.join(ANALYSIS_DIR);
    let n_embeddings = fs::read_dir(dir.join(EMBEDDING_DIR)).unwrap().count();
    assert_eq!(n_embeddings, 3 * 2);
    for m in &summary.models {
        assert_eq!(m.embeddings.len(), 2 * 2);
        assert_eq!(m.weights.len(), 3);
        for e in &m.embeddings {
            assert!((-1.0..=1.0).contains(&e.silhouette));
            assert!((0.0..=1.0).contains(&e.neighborhood_hit));
            assert!((0.0..=1.0).contains(&e.trustworthiness));
        }
    }
    // 3 models × 2 layers × 3 pairs of models
    assert_eq!(summary.comparisons.len(), 3 * 2 * 3);

    let entropy_rows = fs::read_to_string(dir.join(ENTROPY_FILE)).unwrap().lines().count() - 1;
    let selectivity = fs::read_to_string(dir.join(SELECTIVITY_FILE)).unwrap();
    let active = selectivity.lines().skip(1).filter(|l| l.ends_with("false")).count();
    assert_eq!(entropy_rows, active);

    let figures = emit_plots(&cfg.out_dir).unwrap();
    let names: Vec<String> = figures
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for expected in [
        "loss_vs_parameters_standard.svg",
        "accuracy_vs_parameters_standard.svg",
        "efficiency_standard.svg",
    ] {
        assert!(names.contains(&expected.to_string()), "{names:?}");
    }
    assert_eq!(names.iter().filter(|n| n.starts_with("embedding_")).count(), 6);
    assert!(names.iter().any(|n| n == "histogram_entropy.svg"));
    for f in &figures {
        assert!(fs::read_to_string(f).unwrap().contains("<svg"));
    }
    let loss = fs::read_to_string(cfg.out_dir.join("figures/loss_vs_parameters_standard.svg")).unwrap();
    for kind in ["dANN-R", "dANN-LRF", "vANN"] {
        assert!(loss.contains(kind), "legend lacks {kind}");
    }
}

fn dendrite(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dendrite"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "dataset = \"fmnist\"\nseeds = []\n").unwrap();
    let out = dendrite(&["sweep", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let typo = tmp.path().join("typo.toml");
    fs::write(&typo, "dataset = \"fmnist\"\nsedes = [1]\n").unwrap();
    assert_eq!(
        dendrite(&["sweep", "--config", typo.to_str().unwrap()]).status.code(),
        Some(1)
    );

    let nodata = tmp.path().join("nodata.toml");
    fs::write(
        &nodata,
        format!(
            "dataset = \"fmnist\"\ndata_dir = \"{}\"\nout_dir = \"{}\"\n",
            tmp.path().join("none").display(),
            tmp.path().join("o").display()
        ),
    )
    .unwrap();
    let out = dendrite(&["sweep", "--config", nodata.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("t10k-images-idx3-ubyte"), "{msg}");

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = dendrite(&["plot", "--out-dir", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!empty.join("figures").exists());
}

#[test]
fn cli_flags_override_config() {
    let (tmp, cfg, path) = setup();
    let out_dir = tmp.path().join("flagged");
    let out = dendrite(&[
        "sweep",
        "--config",
        path.to_str().unwrap(),
        "--seeds",
        "3",
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let reports = collect_reports(&runs_root(&out_dir, &Task::Standard)).unwrap();
    assert_eq!(reports.len(), 3);
    assert!(!cfg.out_dir.exists());
    let resolved = ExperimentConfig::load(&out_dir.join("config.toml")).unwrap();
    assert_eq!(resolved.seeds, vec![3]);
}

#[test]
fn analyze_without_runs_fails() {
    let (_tmp, cfg, _) = setup();
    let err = run_analysis(&cfg).unwrap_err();
    assert!(err.to_string().contains("no finished"), "{err}");
}
