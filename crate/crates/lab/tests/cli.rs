//! End-to-end runs of the `rawzero-lab` binary on small synthetic data.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rawzero_lab::artifacts::{read_campaign, read_metrics, Table};
use rawzero_lab::commands::CampaignReport;

fn toy_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"{{
  "seed": 11,
  "classifier": "toy",
  "dataset": {{"kind": "synthetic", "classes": 3, "train_per_class": 60, "test_per_class": 20, "dim": 6, "spread": 0.05}},
  "architecture": {{"kind": "dense", "hidden": [8]}},
  "train": {{"epochs": 15, "batch_size": 16, "learning_rate": 0.02}},
  "attacks": [
    {{"preset": "fashion_mnist", "kind": "fgm", "epsilon": 0.1}},
    {{"preset": "fashion_mnist", "kind": "fgm", "epsilon": 0.0, "name": "fgm0"}},
    {{"preset": "fashion_mnist", "kind": "pgd", "epsilon": 0.1, "epsilon_step": 0.02, "iterations": 5}}
  ],
  "projections": ["mds", "isomap", "tsne", "spectral"],
  "projection": {{"cap": 40, "neighbors": 8, "tsne": {{"perplexity": 5, "iterations": 150, "exaggeration_iterations": 50}}}},
  "out_dir": "out"{extra}
}}"#
    );
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rawzero-lab")).args(args).arg("--quiet").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = lab(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn run_all(config: &Path, out: &Path) {
    let (c, o) = (config.to_str().unwrap(), out.to_str().unwrap());
    for cmd in ["train", "rawzero", "attack", "correlate", "project", "histogram", "report"] {
        ok(&[cmd, "--config", c, "--out", o, "--threads", "2"]);
    }
}

/// Every file under `dir`, relative path → bytes.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn pipeline_outputs_are_consistent_and_replayable() {
    let tmp = tempfile::tempdir().unwrap();
    let config = toy_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_all(&config, &a);

    // N + 1 checkpoints
    let ckpts = fs::read_dir(a.join("checkpoints")).unwrap().count();
    assert_eq!(ckpts, 4);

    // metric summary recomputable from the per-class rows
    let rows = read_metrics(&a.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.unknown_samples == 80));
    let summary = Table::read(&a.join("metrics_summary.csv")).unwrap();
    let dbm: Vec<f64> = rows.iter().map(|r| r.dbm).collect();
    let (mean, std) = rawzero_core::rawzero::mean_std(&dbm);
    assert_eq!(summary.parse::<f64>(0, summary.column("mean_dbm").unwrap()).unwrap(), mean);
    assert_eq!(summary.parse::<f64>(0, summary.column("std_dbm").unwrap()).unwrap(), std);

    // campaign summaries recomputable from the per-sample CSV
    for name in ["fgm", "fgm0", "pgd"] {
        let rows = read_campaign(&a.join(format!("attacks/{name}.csv"))).unwrap();
        let report: CampaignReport =
            serde_json::from_str(&fs::read_to_string(a.join(format!("attacks/{name}.json"))).unwrap()).unwrap();
        assert_eq!(report.summary.samples, rows.len());
        assert_eq!(rows.len(), 60);
        let mean_l2 = rows.iter().map(|r| r.l2).sum::<f64>() / rows.len() as f64;
        assert!((mean_l2 - report.summary.mean_l2).abs() < 1e-9);
        let fooled = rows.iter().filter(|r| r.adv_pred != r.true_class).count() as f64 / rows.len() as f64;
        assert!((fooled - report.summary.adversarial_accuracy).abs() < 1e-9);
    }
    let fgm0: CampaignReport = serde_json::from_str(&fs::read_to_string(a.join("attacks/fgm0.json")).unwrap()).unwrap();
    assert_eq!(fgm0.summary.clean_accuracy, 1.0, "toy blobs should be separable");
    assert_eq!(fgm0.summary.adversarial_accuracy, 0.0);
    assert_eq!(fgm0.summary.mean_l2, 0.0);

    // one scatter point per class
    let svg = fs::read_to_string(a.join("figures/correlation/fgm_am_mean_l2.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 3);
    let corr = Table::read(&a.join("correlation.csv")).unwrap();
    assert_eq!(corr.rows.len(), 3 * 2 * 3);

    // histogram bars sum to n
    let h = Table::read(&a.join("histograms/summary.csv")).unwrap();
    assert_eq!(h.rows.len(), rows.len());
    for (r, metric) in rows.iter().enumerate() {
        let n: f64 = h.parse(r, h.column("n").unwrap()).unwrap();
        for col in ["sum_h", "sum_h_truth"] {
            let s: f64 = h.parse(r, h.column(col).unwrap()).unwrap();
            assert!((s - n).abs() < 1e-9, "{col} = {s}, n = {n}");
        }
        let am: f64 = h.parse(r, h.column("am").unwrap()).unwrap();
        assert!((am - metric.am).abs() < 1e-12);
    }
    assert_eq!(fs::read_dir(a.join("projections")).unwrap().count(), 3 * 4 * 2 + 1);
    assert!(fs::read_to_string(a.join("index.html")).unwrap().contains("Per-class DBM and AM"));

    // same config and seed: byte-identical outputs
    run_all(&config, &b);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert_eq!(sa.len(), sb.len());
    for ((pa, da), (pb, db)) in sa.iter().zip(&sb) {
        assert_eq!(pa, pb);
        assert!(da == db, "{} differs between runs", pa.display());
    }

    // a different seed changes the networks
    let c = tmp.path().join("c");
    ok(&["train", "--config", config.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "12"]);
    assert_ne!(
        fs::read(a.join("checkpoints/standard.rzlb")).unwrap(),
        fs::read(c.join("checkpoints/standard.rzlb")).unwrap()
    );
}

#[test]
fn missing_dataset_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("config.json");
    fs::write(
        &p,
        r#"{"seed": 0, "architecture": {"kind": "mlp"}, "dataset": {"kind": "fashion_mnist", "dir": "absent"}}"#,
    )
    .unwrap();
    let out = lab(&["train", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    let line: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(line["error"]["kind"], "config");
    assert_eq!(line["error"]["code"], 2);
    assert!(line["error"]["message"].as_str().unwrap().contains("absent"));

    let out = lab(&["train", "--config", tmp.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_numerical_error() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("config.json");
    fs::write(
        &p,
        r#"{"seed": 0, "architecture": {"kind": "dense", "hidden": [8]},
            "dataset": {"kind": "synthetic", "classes": 3, "train_per_class": 20, "test_per_class": 5, "dim": 4, "spread": 0.3},
            "train": {"epochs": 5, "learning_rate": 1e300, "optimizer": {"kind": "sgd"}}}"#,
    )
    .unwrap();
    let out = lab(&["train", "--config", p.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stderr).unwrap().contains("\"numerical\""));
}

fn write_soft(dir: &Path, class: usize, kind: &str, rows: &[[f64; 2]]) {
    let retained: Vec<usize> = (0..3).filter(|&c| c != class).collect();
    let mut text = format!("sample_id,excluded_class,p{},p{}\n", retained[0], retained[1]);
    for (i, r) in rows.iter().enumerate() {
        text.push_str(&format!("{i},{class},{},{}\n", r[0], r[1]));
    }
    fs::write(dir.join(format!("class_{class}_{kind}.csv")), text).unwrap();
}

#[test]
fn injected_soft_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let soft = tmp.path().join("soft");
    fs::create_dir_all(&soft).unwrap();
    for c in 0..3 {
        let rows = [[0.25, 0.75]; 4];
        write_soft(&soft, c, "zero_shot", &rows);
        write_soft(&soft, c, "ground_truth", &rows);
    }
    let config = toy_config(tmp.path(), r#", "soft_labels_dir": "soft""#);
    let (c, o) = (config.to_str().unwrap(), tmp.path().join("o"));
    let o = o.to_str().unwrap();
    ok(&["rawzero", "--config", c, "--out", o]);
    let rows = read_metrics(&tmp.path().join("o/metrics.csv")).unwrap();
    assert!(rows.iter().all(|r| r.dbm == 0.0 && r.am == 0.0));
    ok(&["histogram", "--config", c, "--out", o]);
    let h = Table::read(&tmp.path().join("o/histograms/summary.csv")).unwrap();
    for r in 0..3 {
        assert_eq!(h.parse::<f64>(r, h.column("max_bar_gap").unwrap()).unwrap(), 0.0);
    }

    // a gap in the class files is a format error
    fs::remove_file(soft.join("class_1_zero_shot.csv")).unwrap();
    let out = lab(&["rawzero", "--config", c, "--out", o]);
    assert_eq!(out.status.code(), Some(2));
}

fn write_attack(out: &Path, name: &str, l2_per_class: &[f64]) {
    let dir = out.join("attacks");
    fs::create_dir_all(&dir).unwrap();
    let mut text = String::from("sample_id,true_class,clean_pred,adv_pred,l2,confidence_delta\n");
    for (c, l2) in l2_per_class.iter().enumerate() {
        for k in 0..2 {
            text.push_str(&format!(
                "{},{c},{c},{},{l2},{}\n",
                2 * c + k,
                (c + 1) % 3,
                0.1 * k as f64 + 0.05 * c as f64
            ));
        }
    }
    fs::write(dir.join(format!("{name}.csv")), text).unwrap();
    let spec = rawzero_core::attack::AttackSpec::fashion_mnist(rawzero_core::attack::AttackKind::Fgm);
    let rows = read_campaign(&dir.join(format!("{name}.csv"))).unwrap();
    let summary = rawzero_core::attack::summarize_campaign(&spec, &rows, l2_per_class.len()).unwrap();
    let report = CampaignReport { classifier: "toy".into(), name: name.into(), summary };
    fs::write(dir.join(format!("{name}.json")), serde_json::to_string(&report).unwrap()).unwrap();
}

#[test]
fn correlate_from_hand_written_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    fs::write(
        &config,
        r#"{"seed": 0, "architecture": {"kind": "linear"}, "attacks": [{"kind": "fgm", "epsilon": 0.3}]}"#,
    )
    .unwrap();
    let out = tmp.path().join("o");
    fs::create_dir_all(&out).unwrap();
    fs::write(
        out.join("metrics.csv"),
        "class,class_name,dbm,am,unknown_samples,degenerate_rows\n0,a,0.3,100,2,0\n1,b,0.1,200,2,0\n2,c,0.2,400,2,0\n",
    )
    .unwrap();
    // mean L2 = 0.5 + AM / 100, exactly linear
    write_attack(&out, "fgm", &[1.5, 2.5, 4.5]);
    let (c, o) = (config.to_str().unwrap(), out.to_str().unwrap());
    let stdout = ok(&["correlate", "--config", c, "--out", o]);
    assert!(stdout.contains("fgm am vs mean_l2: 1.00 (0.00)"), "{stdout}");
    let table = Table::read(&out.join("correlation_table.csv")).unwrap();
    let row = (0..table.rows.len()).find(|&r| &table.rows[r][1] == "am" && &table.rows[r][2] == "mean_l2").unwrap();
    assert_eq!(&table.rows[row][3], "1.00 (0.00)");

    fs::write(
        out.join("metrics.csv"),
        "class,class_name,dbm,am,unknown_samples,degenerate_rows\n0,a,0.3,100,2,0\n1,b,0.1,200,2,0\n",
    )
    .unwrap();
    let res = lab(&["correlate", "--config", c, "--out", o]);
    assert_eq!(res.status.code(), Some(2));
}
