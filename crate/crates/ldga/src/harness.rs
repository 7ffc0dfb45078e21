//! Multi-trial experiments, kappa sweeps and the propagation baseline.
//!
//! Trial `t` trains with seed `derive_seed(master_seed, [t])`. Features are
//! computed once per experiment from the master seed and shared by all
//! trials and sweep cells. Trials run on up to `workers` threads; results are
//! assembled in trial order, so reports do not depend on scheduling.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use ldga_core::embed::{init_features, WalkConfig};
use ldga_core::graph::MultilayerGraph;
use ldga_core::metrics::{ari, label_propagation, multilayer_modularity, nmi_with, purity, MetricConfig};
use ldga_core::model::{global_allocate, FeatureTensor};
use ldga_core::objective::LossBreakdown;
use ldga_core::rng::{derive_seed, Fnv64};
use ldga_core::synth::{generate, mixing_fraction, GeneratorConfig};
use ldga_core::{train, TrainConfig, TrainOutcome};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ExperimentConfig, GraphSource, KappaRange};
use crate::formats::{self, FeatureSidecar, FormatError};
use crate::io::{self as graph_io, IoError, LoadSummary};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Core(#[from] ldga_core::Error),
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("features {found:?} do not match graph {expected:?} (layers, nodes)")]
    FeatureShape {
        expected: (usize, usize),
        found: (usize, usize),
    },
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

/// A loaded or generated graph with optional ground truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: MultilayerGraph,
    pub truth: Option<Vec<usize>>,
    pub summary: DatasetSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub num_nodes: usize,
    pub num_layers: usize,
    pub edge_counts: Vec<usize>,
    pub graph_hash: String,
    pub load: Option<LoadSummary>,
    pub generator: Option<GeneratorConfig>,
    /// Realized fraction of inter-community edges per layer.
    pub mixing: Option<Vec<f64>>,
    pub num_communities: Option<usize>,
}

/// Content hash over node count and every layer's sorted edge list.
pub fn graph_hash(graph: &MultilayerGraph) -> u64 {
    let mut h = Fnv64::default();
    h.write_u64(graph.num_nodes() as u64);
    h.write_u64(graph.num_layers() as u64);
    for layer in graph.layers() {
        h.write_u64(layer.edge_count() as u64);
        for &(u, v) in layer.edges() {
            h.write_u64(u as u64);
            h.write_u64(v as u64);
        }
    }
    h.finish()
}

fn walk_hash(walk: &WalkConfig) -> u64 {
    let mut h = Fnv64::default();
    for v in [
        walk.window,
        walk.walks_per_node,
        walk.walk_length,
        walk.dim,
        walk.negatives,
        walk.epochs,
    ] {
        h.write_u64(v as u64);
    }
    h.write_u64(walk.learning_rate.to_bits());
    h.write_u64(walk.seed);
    h.finish()
}

impl Dataset {
    pub fn from_graph(graph: MultilayerGraph, truth: Option<Vec<usize>>) -> Result<Self> {
        let mixing = truth.as_deref().map(|t| mixing_fraction(&graph, t)).transpose()?;
        let summary = DatasetSummary {
            num_nodes: graph.num_nodes(),
            num_layers: graph.num_layers(),
            edge_counts: graph.edge_counts(),
            graph_hash: format!("{:016x}", graph_hash(&graph)),
            load: None,
            generator: None,
            mixing,
            num_communities: truth.as_deref().map(count_labels),
        };
        Ok(Dataset { graph, truth, summary })
    }

    pub fn load(source: &GraphSource) -> Result<Self> {
        match source {
            GraphSource::Generated(config) => {
                let (graph, truth) = generate(config)?;
                let mut dataset = Dataset::from_graph(graph, Some(truth.labels))?;
                dataset.summary.generator = Some(config.clone());
                Ok(dataset)
            }
            GraphSource::File { path, format, truth } => {
                let (graph, load) = graph_io::load_graph(path, *format)?;
                let truth = truth.as_deref().map(|p| graph_io::read_labels(&graph, p)).transpose()?;
                let mut dataset = Dataset::from_graph(graph, truth)?;
                dataset.summary.load = Some(load);
                Ok(dataset)
            }
        }
    }
}

fn count_labels(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Feature tensors keyed by graph and walk-settings content, optionally
/// persisted to a directory.
#[derive(Debug, Default)]
pub struct FeatureCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<u64, Arc<FeatureTensor>>>,
}

impl FeatureCache {
    pub fn in_memory() -> Self {
        FeatureCache::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        FeatureCache {
            dir: Some(dir.into()),
            memory: Mutex::default(),
        }
    }

    pub fn key(graph: &MultilayerGraph, walk: &WalkConfig) -> u64 {
        derive_seed(graph_hash(graph), &[walk_hash(walk)])
    }

    pub fn get_or_embed(&self, graph: &MultilayerGraph, walk: &WalkConfig) -> Result<Arc<FeatureTensor>> {
        let key = Self::key(graph, walk);
        if let Some(hit) = self.memory.lock().expect("cache poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let path = self.dir.as_ref().map(|d| d.join(format!("features-{key:016x}.bin")));
        let features = match &path {
            Some(p) if p.exists() => {
                log::info!("loading cached features from {}", p.display());
                formats::read_features(p)?
            }
            _ => {
                let start = Instant::now();
                let features = init_features(graph, walk)?;
                log::info!("embedded {} layers in {:.1?}", graph.num_layers(), start.elapsed());
                if let Some(p) = &path {
                    std::fs::create_dir_all(p.parent().unwrap_or(Path::new("."))).map_err(|source| {
                        HarnessError::Write {
                            path: p.clone(),
                            source,
                        }
                    })?;
                    let sidecar = FeatureSidecar {
                        format_version: 1,
                        num_layers: features.num_layers(),
                        num_nodes: features.num_nodes(),
                        dim: features.dim(),
                        walk: Some(walk.clone()),
                        graph_hash: Some(format!("{:016x}", graph_hash(graph))),
                    };
                    formats::write_features_with_sidecar(&features, &sidecar, p)?;
                    formats::read_features(p)?
                } else {
                    features
                }
            }
        };
        let features = Arc::new(features);
        self.memory
            .lock()
            .expect("cache poisoned")
            .insert(key, Arc::clone(&features));
        Ok(features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    pub purity: Option<f64>,
    pub qm: f64,
    pub nmi_percent: Option<f64>,
    pub ari_percent: Option<f64>,
    pub purity_percent: Option<f64>,
    pub qm_percent: f64,
    pub nonempty_communities: usize,
}

/// Score `labels`; the truth-based metrics are `None` without ground truth.
pub fn evaluate(
    graph: &MultilayerGraph,
    labels: &[usize],
    truth: Option<&[usize]>,
    config: &MetricConfig,
) -> Result<MetricsRecord> {
    let qm = multilayer_modularity(graph, labels, config)?;
    let (nmi, ari, purity) = match truth {
        Some(t) => (
            Some(nmi_with(labels, t, config.nmi_normalization)?),
            Some(ari(labels, t)?),
            Some(purity(labels, t)?),
        ),
        None => (None, None, None),
    };
    let pct = |v: Option<f64>| v.map(|x| 100.0 * x);
    Ok(MetricsRecord {
        nmi,
        ari,
        purity,
        qm,
        nmi_percent: pct(nmi),
        ari_percent: pct(ari),
        purity_percent: pct(purity),
        qm_percent: 100.0 * qm,
        nonempty_communities: count_labels(labels),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub error: Option<String>,
    pub loss: Option<LossBreakdown>,
    pub epochs_completed: usize,
    pub diverged_at: Option<usize>,
    pub metrics: Option<MetricsRecord>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub best: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Aggregate {
            best: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std: var.sqrt(),
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Ldga,
    Baseline,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialReport {
    pub schema_version: u32,
    pub kind: ReportKind,
    pub master_seed: u64,
    pub kappa: Option<usize>,
    pub graph_hash: String,
    pub trials: Vec<TrialRecord>,
    pub aggregates: BTreeMap<String, Aggregate>,
    pub failed_trials: usize,
    /// Trial with the highest NMI, or highest Q_m without ground truth.
    pub best_trial: Option<usize>,
    pub wall_time_secs: f64,
    #[serde(skip)]
    pub best_labels: Option<Vec<usize>>,
    #[serde(skip)]
    pub best_outcome: Option<TrainOutcome>,
}

/// Aggregates per metric over the successful trials.
pub fn aggregate(trials: &[TrialRecord]) -> BTreeMap<String, Aggregate> {
    type Getter = fn(&MetricsRecord) -> Option<f64>;
    let getters: [(&str, Getter); 5] = [
        ("nmi", |m| m.nmi),
        ("ari", |m| m.ari),
        ("purity", |m| m.purity),
        ("qm", |m| Some(m.qm)),
        ("nonempty_communities", |m| Some(m.nonempty_communities as f64)),
    ];
    let mut out = BTreeMap::new();
    for (name, get) in getters {
        let values: Vec<f64> = trials.iter().filter_map(|t| t.metrics.as_ref().and_then(get)).collect();
        if let Some(a) = Aggregate::of(&values) {
            out.insert(name.to_owned(), a);
        }
    }
    out
}

fn selection_score(record: &TrialRecord) -> Option<f64> {
    let m = record.metrics.as_ref()?;
    Some(m.nmi.unwrap_or(m.qm))
}

struct TrialResult {
    record: TrialRecord,
    labels: Option<Vec<usize>>,
    outcome: Option<TrainOutcome>,
}

fn assemble(kind: ReportKind, dataset: &Dataset, master_seed: u64, kappa: Option<usize>, results: Vec<TrialResult>, start: Instant) -> TrialReport {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in results.iter().enumerate() {
        if let Some(score) = selection_score(&r.record) {
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
    }
    let mut best_labels = None;
    let mut best_outcome = None;
    let mut trials = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        if best.is_some_and(|(b, _)| b == i) {
            best_labels = r.labels;
            best_outcome = r.outcome;
        }
        trials.push(r.record);
    }
    TrialReport {
        schema_version: REPORT_VERSION,
        kind,
        master_seed,
        kappa,
        graph_hash: dataset.summary.graph_hash.clone(),
        aggregates: aggregate(&trials),
        failed_trials: trials.iter().filter(|t| t.error.is_some()).count(),
        best_trial: best.map(|(i, _)| trials[i].trial),
        trials,
        wall_time_secs: start.elapsed().as_secs_f64(),
        best_labels,
        best_outcome,
    }
}

/// Evaluate `job(t)` for every `t < count` on up to `workers` threads,
/// returning results in index order.
fn run_indexed<T: Send>(count: usize, workers: usize, job: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = workers.clamp(1, count.max(1));
    if workers == 1 {
        return (0..count).map(job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let t = next.fetch_add(1, Ordering::Relaxed);
                if t >= count {
                    break;
                }
                let result = job(t);
                slots.lock().expect("worker panicked")[t] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every index is claimed once"))
        .collect()
}

/// A dataset with its features, ready for repeated training runs.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    pub features: Arc<FeatureTensor>,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig, cache: &FeatureCache) -> Result<Self> {
        let dataset = Dataset::load(&config.source)?;
        Self::with_dataset(config, dataset, cache)
    }

    pub fn with_dataset(config: ExperimentConfig, dataset: Dataset, cache: &FeatureCache) -> Result<Self> {
        let features = match &config.features {
            Some(path) => Arc::new(formats::read_features(path)?),
            None => cache.get_or_embed(&dataset.graph, &config.walk)?,
        };
        let expected = (dataset.graph.num_layers(), dataset.graph.num_nodes());
        let found = (features.num_layers(), features.num_nodes());
        if expected != found {
            return Err(HarnessError::FeatureShape { expected, found });
        }
        Ok(Experiment {
            config,
            dataset,
            features,
        })
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.config.master_seed, &[trial as u64])
    }

    fn train_trial(&self, template: &TrainConfig, trial: usize) -> TrialResult {
        let start = Instant::now();
        let seed = self.trial_seed(trial);
        let config = TrainConfig {
            seed,
            ..template.clone()
        };
        let run = || -> Result<(TrainOutcome, Vec<usize>, MetricsRecord)> {
            let outcome = train(&self.dataset.graph, &self.features, &config)?;
            let partition = global_allocate(&outcome.assignments);
            let metrics = evaluate(
                &self.dataset.graph,
                &partition.labels,
                self.dataset.truth.as_deref(),
                &self.config.metrics,
            )?;
            Ok((outcome, partition.labels, metrics))
        };
        match run() {
            Ok((outcome, labels, metrics)) => {
                if let Some(epoch) = outcome.diverged_at {
                    log::warn!("trial {trial}: non-finite loss at epoch {epoch}");
                }
                TrialResult {
                    record: TrialRecord {
                        trial,
                        seed,
                        error: None,
                        loss: outcome.history.last().copied(),
                        epochs_completed: outcome.history.len(),
                        diverged_at: outcome.diverged_at,
                        metrics: Some(metrics),
                        wall_time_secs: start.elapsed().as_secs_f64(),
                    },
                    labels: Some(labels),
                    outcome: Some(outcome),
                }
            }
            Err(e) => {
                log::error!("trial {trial} failed: {e}");
                TrialResult {
                    record: TrialRecord {
                        trial,
                        seed,
                        error: Some(e.to_string()),
                        loss: None,
                        epochs_completed: 0,
                        diverged_at: None,
                        metrics: None,
                        wall_time_secs: start.elapsed().as_secs_f64(),
                    },
                    labels: None,
                    outcome: None,
                }
            }
        }
    }

    /// Train `config.trials` models with the configured settings.
    pub fn run(&self) -> TrialReport {
        self.run_with(&self.config.train)
    }

    /// Train `config.trials` models from `template`, overriding its seed.
    pub fn run_with(&self, template: &TrainConfig) -> TrialReport {
        let start = Instant::now();
        let results = run_indexed(self.config.trials, self.config.workers, |t| self.train_trial(template, t));
        assemble(
            ReportKind::Ldga,
            &self.dataset,
            self.config.master_seed,
            Some(template.kappa),
            results,
            start,
        )
    }

    pub fn sweep_kappa(&self, range: KappaRange) -> SweepReport {
        let cells = range
            .values()
            .map(|kappa| {
                log::info!("sweep cell kappa={kappa}");
                let template = TrainConfig {
                    kappa,
                    ..self.config.train.clone()
                };
                SweepCell {
                    kappa,
                    report: self.run_with(&template),
                }
            })
            .collect();
        SweepReport {
            schema_version: REPORT_VERSION,
            master_seed: self.config.master_seed,
            cells,
        }
    }

    /// Label propagation on the flattened graph, one run per trial seed.
    pub fn run_baseline(&self) -> TrialReport {
        run_baseline_on(&self.config, &self.dataset)
    }
}

pub fn run_baseline_on(config: &ExperimentConfig, dataset: &Dataset) -> TrialReport {
    let start = Instant::now();
    let results = run_indexed(config.trials, config.workers, |trial| {
        let t0 = Instant::now();
        let seed = derive_seed(config.master_seed, &[trial as u64]);
        let partition = label_propagation(&dataset.graph, seed);
        let metrics = evaluate(&dataset.graph, &partition.labels, dataset.truth.as_deref(), &config.metrics);
        let (metrics, error) = match metrics {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e.to_string())),
        };
        TrialResult {
            record: TrialRecord {
                trial,
                seed,
                error,
                loss: None,
                epochs_completed: 0,
                diverged_at: None,
                metrics,
                wall_time_secs: t0.elapsed().as_secs_f64(),
            },
            labels: Some(partition.labels),
            outcome: None,
        }
    });
    assemble(ReportKind::Baseline, dataset, config.master_seed, None, results, start)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<TrialReport> {
    Ok(Experiment::prepare(config.clone(), &FeatureCache::in_memory())?.run())
}

pub fn sweep_kappa(config: &ExperimentConfig, range: KappaRange) -> Result<SweepReport> {
    Ok(Experiment::prepare(config.clone(), &FeatureCache::in_memory())?.sweep_kappa(range))
}

pub fn run_baseline(config: &ExperimentConfig) -> Result<TrialReport> {
    let dataset = Dataset::load(&config.source)?;
    Ok(run_baseline_on(config, &dataset))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub kappa: usize,
    pub report: TrialReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub master_seed: u64,
    pub cells: Vec<SweepCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa: usize,
    pub best_qm: Option<f64>,
    pub mean_qm: Option<f64>,
    pub std_qm: Option<f64>,
    pub mean_real_kappa: Option<f64>,
}

impl SweepReport {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.cells
            .iter()
            .map(|cell| {
                let qm = cell.report.aggregates.get("qm");
                SweepRow {
                    kappa: cell.kappa,
                    best_qm: qm.map(|a| a.best),
                    mean_qm: qm.map(|a| a.mean),
                    std_qm: qm.map(|a| a.std),
                    mean_real_kappa: cell.report.aggregates.get("nonempty_communities").map(|a| a.mean),
                }
            })
            .collect()
    }
}

/// One flat CSV row per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub ok: bool,
    pub loss_total: Option<f64>,
    pub modularity_term: Option<f64>,
    pub balance_term: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    pub purity: Option<f64>,
    pub qm: Option<f64>,
    pub nonempty_communities: Option<usize>,
    pub wall_time_secs: f64,
}

impl From<&TrialRecord> for TrialRow {
    fn from(t: &TrialRecord) -> Self {
        let m = t.metrics.as_ref();
        TrialRow {
            trial: t.trial,
            seed: t.seed,
            ok: t.error.is_none(),
            loss_total: t.loss.map(|l| l.total),
            modularity_term: t.loss.map(|l| l.modularity_term),
            balance_term: t.loss.map(|l| l.balance_term),
            nmi: m.and_then(|m| m.nmi),
            ari: m.and_then(|m| m.ari),
            purity: m.and_then(|m| m.purity),
            qm: m.map(|m| m.qm),
            nonempty_communities: m.map(|m| m.nonempty_communities),
            wall_time_secs: t.wall_time_secs,
        }
    }
}

impl TrialReport {
    pub fn rows(&self) -> Vec<TrialRow> {
        self.trials.iter().map(TrialRow::from).collect()
    }

    /// JSON with every wall-time field zeroed; identical across reruns with
    /// the same master seed.
    pub fn deterministic_json(&self) -> String {
        let mut copy = self.clone();
        copy.wall_time_secs = 0.0;
        for t in &mut copy.trials {
            t.wall_time_secs = 0.0;
        }
        serde_json::to_string_pretty(&copy).expect("reports serialize")
    }
}

fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| HarnessError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_trial_rows(path: &Path) -> Result<Vec<TrialRow>> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Paths written by [`write_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub labels: Option<PathBuf>,
}

/// Write `{stem}.json`, `{stem}.csv` and, when available,
/// `{stem}_best_labels.txt` into `dir`.
pub fn write_report(report: &TrialReport, graph: &MultilayerGraph, dir: &Path, stem: &str) -> Result<ReportFiles> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let json = dir.join(format!("{stem}.json"));
    formats::save_json(report, &json)?;
    let csv = dir.join(format!("{stem}.csv"));
    write_csv(&report.rows(), &csv)?;
    let labels = match &report.best_labels {
        Some(l) => {
            let path = dir.join(format!("{stem}_best_labels.txt"));
            graph_io::write_labels(graph, l, &path)?;
            Some(path)
        }
        None => None,
    };
    Ok(ReportFiles { json, csv, labels })
}

pub fn write_sweep(report: &SweepReport, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let json = dir.join(format!("{stem}.json"));
    formats::save_json(report, &json)?;
    let csv = dir.join(format!("{stem}.csv"));
    write_csv(&report.rows(), &csv)?;
    Ok((json, csv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_of_single_value() {
        let a = Aggregate::of(&[0.7]).unwrap();
        assert_eq!((a.best, a.mean, a.std, a.count), (0.7, 0.7, 0.0, 1));
        assert!(Aggregate::of(&[]).is_none());
    }

    #[test]
    fn aggregate_population_std() {
        let a = Aggregate::of(&[1.0, 3.0]).unwrap();
        assert_eq!((a.best, a.mean, a.std), (3.0, 2.0, 1.0));
    }

    #[test]
    fn run_indexed_preserves_order() {
        for workers in [1, 3, 8] {
            let out = run_indexed(7, workers, |t| t * t);
            assert_eq!(out, vec![0, 1, 4, 9, 16, 25, 36]);
        }
    }

    #[test]
    fn graph_hash_sees_edges() {
        let a = MultilayerGraph::from_edge_lists(3, &[vec![(0, 1)]]).unwrap();
        let b = MultilayerGraph::from_edge_lists(3, &[vec![(0, 2)]]).unwrap();
        assert_ne!(graph_hash(&a), graph_hash(&b));
        assert_eq!(graph_hash(&a), graph_hash(&a.clone()));
    }
}
