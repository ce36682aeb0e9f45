//! The pipeline stages behind the CLI. Each command reads the config and
//! the artifacts of earlier stages from the output directory and writes its
//! own artifacts there.
//!
//! ```text
//! checkpoints/standard.rzlb, checkpoints/excluded_<c>.rzlb   train
//! training.csv                                               train
//! softlabels/class_<c>_{zero_shot,ground_truth}.csv          rawzero
//! metrics.csv, metrics.json, metrics_summary.csv             rawzero
//! attacks/<name>.csv, attacks/<name>.json, attacks/summary.csv   attack
//! correlation.csv, correlation.json, correlation_table.csv   correlate
//! figures/correlation/<attack>_<metric>_<measure>.svg        correlate
//! projections/class_<c>_<method>.{csv,svg}, projections/summary.csv   project
//! histograms/class_<c>.{csv,svg}, histograms/summary.csv     histogram
//! index.html                                                 report
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rawzero_core::attack::{run_campaign, summarize_campaign, CampaignSummary, Defended, SampleResult};
use rawzero_core::data::{exclude_class, retained_classes, Dataset, Split};
use rawzero_core::nn::{argmax, Network};
use rawzero_core::projection::{project, ProjectionMethod};
use rawzero_core::protocol::{
    accuracy, check_inputs, class_seed, predict, standard_seed, train_excluded, train_standard,
};
use rawzero_core::rawzero::{
    am, dbm, histogram, summarize, GroundTruthSet, MetricSummary, SoftLabelSet, DEGENERATE_MASS,
};
use rawzero_core::stats::{build_reports, CorrelationReport};
use rawzero_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, fmt_f64, MetricRow, SoftLabelFile, Table};
use crate::checkpoint;
use crate::config::{DatasetSource, ExperimentConfig, FASHION_MNIST_CLASSES};
use crate::error::{config_err, LabError, Result};
use crate::parallel::map_ordered;
use crate::svg;

pub const CHECKPOINTS: &str = "checkpoints";
pub const SOFTLABELS: &str = "softlabels";
pub const ATTACKS: &str = "attacks";
pub const PROJECTIONS: &str = "projections";
pub const HISTOGRAMS: &str = "histograms";
pub const CORRELATION_FIGURES: &str = "figures/correlation";

/// Shared state of one CLI invocation.
pub struct Lab {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub threads: usize,
    pub progress: bool,
}

impl Lab {
    pub fn new(cfg: ExperimentConfig, out: Option<PathBuf>, threads: usize) -> Self {
        let out = out.unwrap_or_else(|| cfg.out_dir.clone());
        Self { cfg, out, threads, progress: false }
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out.join(rel)
    }

    fn note(&self, msg: &str) {
        if self.progress {
            eprintln!("progress: {msg}");
        }
    }

    fn soft_label_dir(&self) -> PathBuf {
        self.cfg.soft_labels_dir.clone().unwrap_or_else(|| self.path(SOFTLABELS))
    }
}

/// Class names for reports, without loading the dataset.
fn class_names(cfg: &ExperimentConfig, n: usize) -> Vec<String> {
    let from_cfg = cfg.dataset.as_ref().and_then(|d| match (&d.class_names, &d.source) {
        (Some(names), _) => Some(names.clone()),
        (None, DatasetSource::FashionMnist { .. }) if d.superclasses.is_none() => {
            Some(FASHION_MNIST_CLASSES.map(String::from).to_vec())
        }
        _ => None,
    });
    match from_cfg {
        Some(names) if names.len() == n => names,
        _ => Dataset::default_class_names(n),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Job {
    Standard,
    Excluded(usize),
}

impl Job {
    fn file(self) -> String {
        match self {
            Job::Standard => "standard.rzlb".into(),
            Job::Excluded(c) => format!("excluded_{c}.rzlb"),
        }
    }
}

/// One trained network and what was recorded about it.
pub struct Trained {
    pub network: Network,
    pub meta: BTreeMap<String, String>,
}

fn reusable(lab: &Lab, job: Job) -> Option<Trained> {
    let (network, meta) = checkpoint::load(&lab.path(CHECKPOINTS).join(job.file())).ok()?;
    (meta.get("fingerprint") == Some(&lab.cfg.fingerprint())).then_some(Trained { network, meta })
}

fn train_job(lab: &Lab, job: Job, train: &Dataset, test: &Dataset) -> Result<Trained> {
    let cfg = lab.cfg.protocol();
    let n = train.num_classes();
    let (network, seed, acc) = match job {
        Job::Standard => {
            lab.note("training the standard network");
            let net = train_standard(train, &cfg)?;
            let acc = accuracy(&net, test, cfg.defence.as_ref())?;
            (net, standard_seed(cfg.train.seed, n), acc)
        }
        Job::Excluded(c) => {
            lab.note(&format!("training the network without class {c}"));
            let wrap = |e: CoreError| CoreError::ProtocolClass { class: c, source: Box::new(e) };
            let split = exclude_class(train, test, c).map_err(wrap)?;
            let net = train_excluded(&split, &cfg).map_err(wrap)?;
            let acc = accuracy(&net, &split.retained_test, cfg.defence.as_ref()).map_err(wrap)?;
            (net, class_seed(cfg.train.seed, c), acc)
        }
    };
    let mut meta = BTreeMap::new();
    meta.insert("fingerprint".into(), lab.cfg.fingerprint());
    meta.insert("classes".into(), n.to_string());
    meta.insert("seed".into(), seed.to_string());
    meta.insert("test_accuracy".into(), fmt_f64(acc));
    meta.insert(
        "excluded_class".into(),
        match job {
            Job::Standard => String::new(),
            Job::Excluded(c) => c.to_string(),
        },
    );
    let dir = lab.path(CHECKPOINTS);
    fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
    checkpoint::save(&dir.join(job.file()), &network, &meta)?;
    Ok(Trained { network, meta })
}

/// Loads valid checkpoints for `jobs` and trains the rest (all of them when
/// `force`).
fn obtain(lab: &Lab, jobs: &[Job], train: &Dataset, test: &Dataset, force: bool) -> Result<Vec<Trained>> {
    check_inputs(train, test, &lab.cfg.protocol())?;
    map_ordered(jobs.len(), lab.threads, |i| match (force, reusable(lab, jobs[i])) {
        (false, Some(t)) => Ok(t),
        _ => train_job(lab, jobs[i], train, test),
    })
}

fn all_jobs(n: usize) -> Vec<Job> {
    std::iter::once(Job::Standard).chain((0..n).map(Job::Excluded)).collect()
}

/// Trains the standard network and the `N` leave-one-out networks.
pub fn cmd_train(lab: &Lab) -> Result<Vec<Trained>> {
    train_stage(lab, true)
}

/// Obtains all networks (retraining every one when `force`) and writes
/// `training.csv`.
fn train_stage(lab: &Lab, force: bool) -> Result<Vec<Trained>> {
    let (train, test) = lab.cfg.load_data()?;
    let nets = obtain(lab, &all_jobs(train.num_classes()), &train, &test, force)?;
    let header = ["network", "excluded_class", "seed", "test_accuracy"].map(String::from);
    let rows: Vec<Vec<String>> = nets
        .iter()
        .zip(all_jobs(train.num_classes()))
        .map(|(t, job)| {
            let field = |k: &str| t.meta.get(k).cloned().unwrap_or_default();
            let file = job.file();
            vec![
                file.trim_end_matches(".rzlb").to_string(),
                field("excluded_class"),
                field("seed"),
                field("test_accuracy"),
            ]
        })
        .collect();
    write_table(&lab.path("training.csv"), &header, rows)?;
    Ok(nets)
}

fn write_table(path: &Path, header: &[String], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| LabError::format(path, e.to_string()))?;
    let err = |e: csv::Error| LabError::format(path, e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| LabError::io(path, e))
}

/// Zero-shot and ground-truth soft labels for one excluded class.
pub struct ClassSoftLabels {
    pub zero_shot: SoftLabelFile,
    pub ground_truth: SoftLabelFile,
}

fn soft_labels_from_networks(lab: &Lab) -> Result<Vec<ClassSoftLabels>> {
    let (train, test) = lab.cfg.load_data()?;
    let n = train.num_classes();
    let nets = obtain(lab, &all_jobs(n), &train, &test, false)?;
    let defence = lab.cfg.defence;
    let standard = &nets[0].network;
    map_ordered(n, lab.threads, |c| {
        lab.note(&format!("collecting soft labels for class {c}"));
        let wrap = |e: CoreError| CoreError::ProtocolClass { class: c, source: Box::new(e) };
        let split = exclude_class(&train, &test, c).map_err(wrap)?;
        let soft = predict(&nets[c + 1].network, &split.unknown_samples, defence.as_ref()).map_err(wrap)?;
        let full = predict(standard, &split.unknown_samples, defence.as_ref()).map_err(wrap)?;
        let truth = GroundTruthSet::from_standard_probs(c, &full).map_err(wrap)?;
        let retained = retained_classes(n, c);
        let ids: Vec<usize> = (0..split.unknown_samples.rows()).collect();
        let sources: Vec<String> = split
            .unknown_sources
            .iter()
            .map(|(s, i)| format!("{}:{i}", if *s == Split::Train { "train" } else { "test" }))
            .collect();
        Ok(ClassSoftLabels {
            zero_shot: SoftLabelFile {
                excluded_class: c,
                retained: retained.clone(),
                sample_ids: ids.clone(),
                sources: sources.clone(),
                probs: soft,
                degenerate: None,
            },
            ground_truth: SoftLabelFile {
                excluded_class: c,
                retained,
                sample_ids: ids,
                sources,
                probs: truth.soft_labels().clone(),
                degenerate: Some(full.iter_rows().map(|r| r[c] >= DEGENERATE_MASS).collect()),
            },
        })
    })
}

/// Reads `class_<c>_{zero_shot,ground_truth}.csv` for `c = 0..N` from `dir`.
pub fn read_soft_labels(dir: &Path) -> Result<Vec<ClassSoftLabels>> {
    let entries = fs::read_dir(dir).map_err(|e| LabError::io(dir, e))?;
    let mut classes = Vec::new();
    for e in entries {
        let e = e.map_err(|e| LabError::io(dir, e))?;
        let name = e.file_name().to_string_lossy().into_owned();
        if let Some(c) = name.strip_prefix("class_").and_then(|s| s.strip_suffix("_zero_shot.csv")) {
            if let Ok(c) = c.parse::<usize>() {
                classes.push(c);
            }
        }
    }
    classes.sort_unstable();
    if classes.is_empty() {
        return Err(LabError::format(dir, "no class_<c>_zero_shot.csv files"));
    }
    if classes.iter().enumerate().any(|(i, &c)| i != c) {
        return Err(LabError::format(
            dir,
            format!("soft-label files must cover classes 0..N without gaps, found {classes:?}"),
        ));
    }
    let n = classes.len();
    classes
        .into_iter()
        .map(|c| {
            let zp = dir.join(artifacts::zero_shot_name(c));
            let gp = dir.join(artifacts::ground_truth_name(c));
            let zero_shot = SoftLabelFile::read(&zp)?;
            let ground_truth = SoftLabelFile::read(&gp)?;
            if zero_shot.excluded_class != c || ground_truth.excluded_class != c {
                return Err(LabError::format(&zp, format!("file is named for class {c} but excludes another class")));
            }
            if zero_shot.retained != retained_classes(n, c) || ground_truth.retained != zero_shot.retained {
                return Err(LabError::format(
                    &gp,
                    format!("probability columns must be p<c> for every class except {c}"),
                ));
            }
            if zero_shot.sample_ids != ground_truth.sample_ids {
                return Err(LabError::format(&gp, "sample ids differ from the zero-shot file"));
            }
            Ok(ClassSoftLabels { zero_shot, ground_truth })
        })
        .collect()
}

fn metric_row(c: &ClassSoftLabels, name: String) -> Result<MetricRow> {
    let k = c.zero_shot.excluded_class;
    let set = SoftLabelSet::new(k, c.zero_shot.probs.clone(), c.zero_shot.retained.clone())?;
    let truth = GroundTruthSet::new(k, c.ground_truth.probs.clone(), c.ground_truth.degenerate_rows())?;
    Ok(MetricRow {
        class: k,
        class_name: name,
        dbm: dbm(&set),
        am: am(&set, &truth, set.num_classes())?,
        unknown_samples: set.len(),
        degenerate_rows: truth.degenerate_rows(),
    })
}

/// Table-2 style summary, as written to `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classifier: String,
    pub classes: Vec<MetricRow>,
    pub summary: MetricSummary,
}

/// Per-class DBM and AM from soft labels (injected, or produced by the
/// trained networks).
pub fn cmd_rawzero(lab: &Lab) -> Result<MetricsReport> {
    let sets = match &lab.cfg.soft_labels_dir {
        Some(dir) => {
            lab.cfg.check_paths()?;
            read_soft_labels(dir)?
        }
        None => {
            let sets = soft_labels_from_networks(lab)?;
            let dir = lab.path(SOFTLABELS);
            ensure_dir(&dir)?;
            for s in &sets {
                let c = s.zero_shot.excluded_class;
                s.zero_shot.write(&dir.join(artifacts::zero_shot_name(c)))?;
                s.ground_truth.write(&dir.join(artifacts::ground_truth_name(c)))?;
            }
            sets
        }
    };
    let names = class_names(&lab.cfg, sets.len());
    let rows = sets.iter().zip(names).map(|(s, name)| metric_row(s, name)).collect::<Result<Vec<_>>>()?;
    let summary = summarize(artifacts::class_metrics(&rows))?;
    ensure_dir(&lab.out)?;
    artifacts::write_metrics(&lab.path("metrics.csv"), &rows)?;
    let header = ["classifier", "classes", "mean_dbm", "std_dbm", "mean_am", "std_am"].map(String::from);
    let row = vec![
        lab.cfg.classifier.clone(),
        rows.len().to_string(),
        fmt_f64(summary.mean_dbm),
        fmt_f64(summary.std_dbm),
        fmt_f64(summary.mean_am),
        fmt_f64(summary.std_am),
    ];
    write_table(&lab.path("metrics_summary.csv"), &header, vec![row])?;
    let report = MetricsReport { classifier: lab.cfg.classifier.clone(), classes: rows, summary };
    artifacts::write_json(&lab.path("metrics.json"), &report)?;
    Ok(report)
}

/// Campaign summary as written to `attacks/<name>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub classifier: String,
    pub name: String,
    pub summary: CampaignSummary,
}

/// Samples per parallel attack job.
const ATTACK_CHUNK: usize = 250;

/// Runs every configured attack against the standard network on the test
/// split. Sample `i` is attacked with seed `seed + i`.
pub fn cmd_attack(lab: &Lab) -> Result<Vec<CampaignReport>> {
    if lab.cfg.attacks.is_empty() {
        return Err(config_err!("no attacks configured"));
    }
    let (train, test) = lab.cfg.load_data()?;
    let n = train.num_classes();
    let standard = obtain(lab, &[Job::Standard], &train, &test, false)?.remove(0).network;
    let clf = Defended::new(&standard, lab.cfg.defence);
    let count = lab.cfg.attack_samples.map_or(test.len(), |m| m.min(test.len()));
    let ids: Vec<usize> = (0..count).collect();
    let chunks: Vec<&[usize]> = ids.chunks(ATTACK_CHUNK).collect();
    let dir = lab.path(ATTACKS);
    ensure_dir(&dir)?;
    let mut reports = Vec::new();
    let mut table = Vec::new();
    for entry in &lab.cfg.attacks {
        lab.note(&format!("attack {} on {} samples", entry.name, count));
        let parts = map_ordered(chunks.len(), lab.threads, |i| {
            run_campaign(&clf, test.images(), test.labels(), chunks[i], &entry.spec, lab.cfg.seed)
        })?;
        let results: Vec<SampleResult> = parts.into_iter().flatten().collect();
        artifacts::write_campaign(&dir.join(format!("{}.csv", entry.name)), &results)?;
        let summary = summarize_campaign(&entry.spec, &results, n)?;
        table.push(vec![
            lab.cfg.classifier.clone(),
            entry.name.clone(),
            summary.samples.to_string(),
            fmt_f64(summary.clean_accuracy),
            fmt_f64(summary.adversarial_accuracy),
            fmt_f64(summary.mean_l2),
        ]);
        let report = CampaignReport { classifier: lab.cfg.classifier.clone(), name: entry.name.clone(), summary };
        artifacts::write_json(&dir.join(format!("{}.json", entry.name)), &report)?;
        reports.push(report);
    }
    let header =
        ["classifier", "attack", "samples", "clean_accuracy", "adversarial_accuracy", "mean_l2"].map(String::from);
    write_table(&dir.join("summary.csv"), &header, table)?;
    Ok(reports)
}

/// Recomputes a campaign summary from its per-sample CSV; the JSON file
/// only contributes the attack parameters.
pub fn read_campaign_summary(dir: &Path, name: &str, classes: usize) -> Result<CampaignSummary> {
    let report: CampaignReport = artifacts::read_json(&dir.join(format!("{name}.json")))?;
    let rows = artifacts::read_campaign(&dir.join(format!("{name}.csv")))?;
    Ok(summarize_campaign(&report.summary.attack, &rows, classes)?)
}

/// Pearson reports of DBM/AM against the per-class attack measures, from
/// `metrics.csv` and the campaign CSVs.
pub fn cmd_correlate(lab: &Lab) -> Result<Vec<CorrelationReport>> {
    let rows = artifacts::read_metrics(&lab.path("metrics.csv"))?;
    if rows.len() < 3 {
        return Err(config_err!("correlation needs at least 3 classes, metrics.csv has {}", rows.len()));
    }
    let summary = summarize(artifacts::class_metrics(&rows))?;
    if lab.cfg.attacks.is_empty() {
        return Err(config_err!("no attacks configured"));
    }
    let campaigns = lab
        .cfg
        .attacks
        .iter()
        .map(|a| Ok((a.name.clone(), read_campaign_summary(&lab.path(ATTACKS), &a.name, rows.len())?)))
        .collect::<Result<Vec<_>>>()?;
    let reports = build_reports(&lab.cfg.classifier, &summary, &campaigns)?;
    artifacts::write_correlations(&lab.path("correlation.csv"), &reports)?;
    artifacts::write_json(&lab.path("correlation.json"), &reports)?;

    let mut header = vec!["classifier".to_string(), "metric".into(), "measure".into()];
    header.extend(campaigns.iter().map(|c| c.0.clone()));
    let mut pivot: BTreeMap<(u8, u8, bool), Vec<String>> = BTreeMap::new();
    for r in &reports {
        pivot.entry((r.measure as u8, r.metric as u8, r.extra)).or_default().push(r.cell());
    }
    let table = pivot
        .into_iter()
        .map(|((measure, metric, _), cells)| {
            let r = reports.iter().find(|r| r.measure as u8 == measure && r.metric as u8 == metric).unwrap();
            let mut row = vec![lab.cfg.classifier.clone(), r.metric.id().to_string(), r.measure.id().to_string()];
            row.extend(cells);
            row
        })
        .collect();
    write_table(&lab.path("correlation_table.csv"), &header, table)?;

    let fig = lab.path(CORRELATION_FIGURES);
    ensure_dir(&fig)?;
    for r in &reports {
        let (_, c) = campaigns.iter().find(|c| c.0 == r.attack).unwrap();
        let ys = match r.measure {
            rawzero_core::stats::MeasureId::MeanL2 => &c.per_class_mean_l2,
            rawzero_core::stats::MeasureId::ConfidenceScore => &c.per_class_confidence,
            rawzero_core::stats::MeasureId::AdversarialAccuracy => &c.per_class_adversarial_accuracy,
        };
        let points: Vec<(f64, f64, String)> = rows
            .iter()
            .zip(ys)
            .map(|(m, &y)| {
                (if r.metric == rawzero_core::stats::MetricId::Dbm { m.dbm } else { m.am }, y, m.class_name.clone())
            })
            .collect();
        let title =
            format!("{} / {}: {} vs {}, r (p) = {}", r.classifier, r.attack, r.metric.id(), r.measure.id(), r.cell());
        let text = svg::correlation(&title, r.metric.id(), r.measure.id(), &points);
        let p = fig.join(format!("{}_{}_{}.svg", r.attack, r.metric.id(), r.measure.id()));
        fs::write(&p, text).map_err(|e| LabError::io(&p, e))?;
    }
    Ok(reports)
}

/// One projection as listed in `projections/summary.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionRecord {
    pub class: usize,
    pub method: ProjectionMethod,
    pub points: usize,
    pub degenerate: bool,
    pub seed: u64,
}

/// 2-D embeddings of each class's zero-shot soft labels, coloured by the
/// predicted (argmax) known class. Class `c` uses seed `seed + c`.
pub fn cmd_project(lab: &Lab) -> Result<Vec<ProjectionRecord>> {
    let sets = read_soft_labels(&lab.soft_label_dir())?;
    let methods =
        if lab.cfg.projections.is_empty() { ProjectionMethod::ALL.to_vec() } else { lab.cfg.projections.clone() };
    let names = class_names(&lab.cfg, sets.len());
    let dir = lab.path(PROJECTIONS);
    ensure_dir(&dir)?;
    let jobs: Vec<(usize, ProjectionMethod)> =
        (0..sets.len()).flat_map(|c| methods.iter().map(move |&m| (c, m))).collect();
    let records = map_ordered(jobs.len(), lab.threads, |j| -> Result<ProjectionRecord> {
        let (c, method) = jobs[j];
        lab.note(&format!("projecting class {c} with {}", method.id()));
        let zs = &sets[c].zero_shot;
        let seed = class_seed(lab.cfg.seed, c);
        let emb = project(&zs.probs, method, &lab.cfg.projection, seed)
            .map_err(|e| CoreError::ProtocolClass { class: c, source: Box::new(e) })?;
        let ids: Vec<usize> = emb.sample_ids.iter().map(|&i| zs.sample_ids[i]).collect();
        let predicted: Vec<usize> = emb.sample_ids.iter().map(|&i| zs.retained[argmax(zs.probs.row(i))]).collect();
        let stem = format!("class_{c}_{}", method.id());
        artifacts::write_embedding(&dir.join(format!("{stem}.csv")), &emb.coords, &ids, &predicted)?;
        let points: Vec<(f64, f64, usize)> =
            emb.coords.iter_rows().zip(&predicted).map(|(xy, &k)| (xy[0], xy[1], k)).collect();
        let title = format!("{}: unknown class {} ({})", method.id(), names[c], lab.cfg.classifier);
        let text = svg::scatter(&title, "dimension 1", "dimension 2", &points, Some(&names));
        let p = dir.join(format!("{stem}.svg"));
        fs::write(&p, text).map_err(|e| LabError::io(&p, e))?;
        Ok(ProjectionRecord { class: c, method, points: ids.len(), degenerate: emb.degenerate, seed })
    })?;
    let header = ["class", "method", "points", "degenerate", "seed"].map(String::from);
    let rows = records
        .iter()
        .map(|r| {
            vec![
                r.class.to_string(),
                r.method.id().into(),
                r.points.to_string(),
                r.degenerate.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    write_table(&dir.join("summary.csv"), &header, rows)?;
    Ok(records)
}

/// H and H' of one excluded class.
#[derive(Clone, Debug, PartialEq)]
pub struct HistogramRecord {
    pub class: usize,
    pub n: usize,
    pub h: Vec<f64>,
    pub h_truth: Vec<f64>,
    pub max_bar_gap: f64,
    pub am: f64,
}

/// Bar charts of the summed soft labels H (zero-shot) and H' (ground
/// truth) per excluded class.
pub fn cmd_histogram(lab: &Lab) -> Result<Vec<HistogramRecord>> {
    let sets = read_soft_labels(&lab.soft_label_dir())?;
    let names = class_names(&lab.cfg, sets.len());
    let dir = lab.path(HISTOGRAMS);
    ensure_dir(&dir)?;
    let mut records = Vec::new();
    for s in &sets {
        let c = s.zero_shot.excluded_class;
        let h = histogram(&s.zero_shot.probs);
        let h_truth = histogram(&s.ground_truth.probs);
        let gaps: Vec<f64> = h.iter().zip(&h_truth).map(|(a, b)| (a - b).abs()).collect();
        let record = HistogramRecord {
            class: c,
            n: s.zero_shot.probs.rows(),
            max_bar_gap: gaps.iter().copied().fold(0.0, f64::max),
            am: gaps.iter().sum::<f64>() / (h.len() as f64),
            h,
            h_truth,
        };
        artifacts::write_histogram(
            &dir.join(format!("class_{c}.csv")),
            &s.zero_shot.retained,
            &record.h,
            &record.h_truth,
        )?;
        let cats: Vec<String> = s.zero_shot.retained.iter().map(|&k| names[k].clone()).collect();
        let title = format!("Unknown class {}: H and H' ({})", names[c], lab.cfg.classifier);
        let text = svg::bars(
            &title,
            "summed probability",
            &cats,
            &[("H (zero-shot)", &record.h), ("H' (ground truth)", &record.h_truth)],
        );
        let p = dir.join(format!("class_{c}.svg"));
        fs::write(&p, text).map_err(|e| LabError::io(&p, e))?;
        records.push(record);
    }
    let header = ["class", "n", "sum_h", "sum_h_truth", "max_bar_gap", "am"].map(String::from);
    let rows = records
        .iter()
        .map(|r| {
            vec![
                r.class.to_string(),
                r.n.to_string(),
                fmt_f64(r.h.iter().sum()),
                fmt_f64(r.h_truth.iter().sum()),
                fmt_f64(r.max_bar_gap),
                fmt_f64(r.am),
            ]
        })
        .collect();
    write_table(&dir.join("summary.csv"), &header, rows)?;
    Ok(records)
}

/// Runs the stages whose outputs are missing, then writes `index.html`.
pub fn cmd_report(lab: &Lab) -> Result<PathBuf> {
    if lab.cfg.soft_labels_dir.is_none() && !lab.path("training.csv").exists() {
        train_stage(lab, false)?;
    }
    if !lab.path("metrics.csv").exists() {
        cmd_rawzero(lab)?;
    }
    let attacks_missing = lab.cfg.attacks.iter().any(|a| !lab.path(ATTACKS).join(format!("{}.json", a.name)).exists());
    if !lab.cfg.attacks.is_empty() {
        if attacks_missing {
            cmd_attack(lab)?;
        }
        if attacks_missing || !lab.path("correlation.csv").exists() {
            cmd_correlate(lab)?;
        }
    }
    if !lab.path(PROJECTIONS).join("summary.csv").exists() {
        cmd_project(lab)?;
    }
    if !lab.path(HISTOGRAMS).join("summary.csv").exists() {
        cmd_histogram(lab)?;
    }
    let index = lab.path("index.html");
    fs::write(&index, render_index(lab)?).map_err(|e| LabError::io(&index, e))?;
    Ok(index)
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn html_table(out: &mut String, title: &str, path: &Path, rel: &str) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let t = Table::read(path)?;
    out.push_str(&format!("<h2>{}</h2>\n<p><a href=\"{rel}\">{rel}</a></p>\n<table>\n<tr>", html_escape(title)));
    for h in &t.header {
        out.push_str(&format!("<th>{}</th>", html_escape(h)));
    }
    out.push_str("</tr>\n");
    for r in &t.rows {
        out.push_str("<tr>");
        for f in r.iter() {
            out.push_str(&format!("<td>{}</td>", html_escape(f)));
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</table>\n");
    Ok(())
}

fn svg_files(dir: &Path) -> Result<Vec<String>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut names = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| LabError::io(dir, e))? {
        let name = e.map_err(|e| LabError::io(dir, e))?.file_name().to_string_lossy().into_owned();
        if name.ends_with(".svg") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn render_index(lab: &Lab) -> Result<String> {
    let mut out = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>rawzero report</title>\n\
         <style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:2px 6px}img{width:420px;margin:4px}</style>\n\
         </head><body>\n",
    );
    out.push_str(&format!("<h1>{} (seed {})</h1>\n", html_escape(&lab.cfg.classifier), lab.cfg.seed));
    let tables = [
        ("Metric summary (mean and population std over classes)", "metrics_summary.csv"),
        ("Per-class DBM and AM", "metrics.csv"),
        ("Trained networks", "training.csv"),
        ("Attack campaigns", "attacks/summary.csv"),
        ("Pearson correlation, r (p)", "correlation_table.csv"),
        ("Histogram summary", "histograms/summary.csv"),
        ("Projections", "projections/summary.csv"),
    ];
    for (title, rel) in tables {
        html_table(&mut out, title, &lab.path(rel), rel)?;
    }
    for (title, rel) in [
        ("Correlation scatter plots", CORRELATION_FIGURES),
        ("Soft-label histograms", HISTOGRAMS),
        ("Soft-label projections", PROJECTIONS),
    ] {
        let files = svg_files(&lab.path(rel))?;
        if files.is_empty() {
            continue;
        }
        out.push_str(&format!("<h2>{title}</h2>\n<div>\n"));
        for f in files {
            out.push_str(&format!("<a href=\"{rel}/{f}\"><img src=\"{rel}/{f}\" alt=\"{f}\"></a>\n"));
        }
        out.push_str("</div>\n");
    }
    out.push_str("</body></html>\n");
    Ok(out)
}
