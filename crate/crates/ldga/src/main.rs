use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ldga::config::{ExperimentConfig, GraphSource, Settings};
use ldga::formats::{self, FeatureSidecar};
use ldga::harness::{self, Dataset, Experiment, FeatureCache, TrialReport};
use ldga::io as graph_io;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "ldga", version, about = "Multilayer community detection by differentiable modularity")]
struct Cli {
    /// Key-value TOML file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-partition multilayer graph.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Compute per-layer random-walk features.
    Embed {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Train over all trials; keeps the checkpoint of the best trial.
    Train {
        #[command(flatten)]
        settings: Settings,
    },
    /// Score a labels file against the graph.
    Eval {
        #[arg(long)]
        labels: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Repeat training over a range of kappa values.
    SweepKappa {
        #[command(flatten)]
        settings: Settings,
    },
    /// Label propagation on the flattened graph.
    Baseline {
        #[command(flatten)]
        settings: Settings,
    },
    /// Summarize a trial report and check it against its CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report written by `train` or `baseline`.
    report: PathBuf,
    /// Per-trial CSV; defaults to the report path with a `.csv` extension.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn resolve(config_file: Option<&Path>, flags: Settings) -> Result<ExperimentConfig> {
    let base = match config_file {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    Ok(base.overlay(flags).resolve()?)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Serialize)]
struct GenerateManifest<'a> {
    dataset: &'a harness::DatasetSummary,
    community_sizes: Vec<usize>,
    mean_degree: Vec<f64>,
    max_degree: Vec<usize>,
    layer_files: Vec<PathBuf>,
    labels_file: PathBuf,
}

fn generate(config: &ExperimentConfig, out: &Path) -> Result<()> {
    if !matches!(config.source, GraphSource::Generated(_)) {
        bail!("`generate` takes generator settings, not --graph");
    }
    let dataset = Dataset::load(&config.source)?;
    let graph = &dataset.graph;
    let truth = dataset.truth.as_deref().expect("generated graphs carry ground truth");
    create_dir(out)?;
    let layer_files = graph_io::write_layer_dir(graph, &out.join("layers"))?;
    let labels_file = out.join("labels.txt");
    graph_io::write_labels(graph, truth, &labels_file)?;
    let mut community_sizes = vec![0; dataset.summary.num_communities.unwrap_or(0)];
    for &l in truth {
        community_sizes[l] += 1;
    }
    let manifest = GenerateManifest {
        dataset: &dataset.summary,
        community_sizes,
        mean_degree: graph
            .layers()
            .iter()
            .map(|l| 2.0 * l.edge_count() as f64 / graph.num_nodes() as f64)
            .collect(),
        max_degree: graph
            .layers()
            .iter()
            .map(|l| l.degrees().into_iter().max().unwrap_or(0))
            .collect(),
        layer_files,
        labels_file,
    };
    write_json(&manifest, &out.join("manifest.json"))?;
    print_json(&manifest)
}

fn embed(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let dataset = Dataset::load(&config.source)?;
    let features = FeatureCache::in_memory().get_or_embed(&dataset.graph, &config.walk)?;
    let sidecar = FeatureSidecar {
        format_version: 1,
        num_layers: features.num_layers(),
        num_nodes: features.num_nodes(),
        dim: features.dim(),
        walk: Some(config.walk.clone()),
        graph_hash: Some(dataset.summary.graph_hash.clone()),
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    formats::write_features_with_sidecar(&features, &sidecar, out)?;
    print_json(&sidecar)
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    modularity_term: f64,
    balance_term: f64,
    total: f64,
}

fn summarize(report: &TrialReport) {
    for (name, a) in &report.aggregates {
        println!("{name:>22}  best {:>9.4}  mean {:>9.4}  std {:>8.4}  n={}", a.best, a.mean, a.std, a.count);
    }
    if report.failed_trials > 0 {
        println!("{} of {} trials failed", report.failed_trials, report.trials.len());
    }
}

fn train(config: &ExperimentConfig) -> Result<()> {
    let cache = FeatureCache::on_disk(config.output_dir.join("cache"));
    let experiment = Experiment::prepare(config.clone(), &cache)?;
    let report = experiment.run();
    let files = harness::write_report(&report, &experiment.dataset.graph, &config.output_dir, "train")?;
    if let (Some(outcome), Some(best)) = (&report.best_outcome, report.best_trial) {
        let template = ldga_core::TrainConfig {
            seed: experiment.trial_seed(best),
            ..config.train.clone()
        };
        let ckpt = config.output_dir.join("best_model.ckpt");
        formats::write_checkpoint_with_manifest(&outcome.params, Some(&template), &ckpt)?;
        let history: Vec<EpochRow> = outcome
            .history
            .iter()
            .enumerate()
            .map(|(i, l)| EpochRow {
                epoch: i + 1,
                modularity_term: l.modularity_term,
                balance_term: l.balance_term,
                total: l.total,
            })
            .collect();
        write_json(&history, &config.output_dir.join("best_history.json"))?;
    }
    summarize(&report);
    println!("report: {}", files.json.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalRecord {
    nmi: Option<f64>,
    ari: Option<f64>,
    purity: Option<f64>,
    qm: f64,
    qm_percent: f64,
    nonempty_communities: usize,
    qm_normalization: String,
}

fn eval(config: &ExperimentConfig, labels: &Path) -> Result<()> {
    let dataset = Dataset::load(&config.source)?;
    let predicted = graph_io::read_labels(&dataset.graph, labels)?;
    let m = harness::evaluate(&dataset.graph, &predicted, dataset.truth.as_deref(), &config.metrics)?;
    print_json(&EvalRecord {
        nmi: m.nmi,
        ari: m.ari,
        purity: m.purity,
        qm: m.qm,
        qm_percent: m.qm_percent,
        nonempty_communities: m.nonempty_communities,
        qm_normalization: format!(
            "2*omega = sum_s sum_ij A_ijs + {} * N * L * (L - 1); resolution {}",
            config.metrics.coupling, config.metrics.resolution
        ),
    })
}

fn sweep(config: &ExperimentConfig) -> Result<()> {
    let range = match config.kappa_sweep {
        Some(r) => r,
        None => ldga::config::KappaRange::new(2, 20)?,
    };
    let cache = FeatureCache::on_disk(config.output_dir.join("cache"));
    let experiment = Experiment::prepare(config.clone(), &cache)?;
    let report = experiment.sweep_kappa(range);
    let (json, csv) = harness::write_sweep(&report, &config.output_dir, "sweep")?;
    println!("{:>5} {:>9} {:>9} {:>8} {:>11}", "kappa", "best_qm", "mean_qm", "std_qm", "real_kappa");
    for row in report.rows() {
        let f = |v: Option<f64>| v.map_or("-".to_owned(), |x| format!("{x:.4}"));
        println!(
            "{:>5} {:>9} {:>9} {:>8} {:>11}",
            row.kappa,
            f(row.best_qm),
            f(row.mean_qm),
            f(row.std_qm),
            f(row.mean_real_kappa)
        );
    }
    println!("report: {} {}", json.display(), csv.display());
    Ok(())
}

fn baseline(config: &ExperimentConfig) -> Result<()> {
    let dataset = Dataset::load(&config.source)?;
    let report = harness::run_baseline_on(config, &dataset);
    let files = harness::write_report(&report, &dataset.graph, &config.output_dir, "baseline")?;
    summarize(&report);
    println!("report: {}", files.json.display());
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&args.report).with_context(|| format!("reading {}", args.report.display()))?;
    let report: TrialReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.report.display()))?;
    if report.schema_version != harness::REPORT_VERSION {
        bail!("unsupported report schema version {}", report.schema_version);
    }
    let recomputed = harness::aggregate(&report.trials);
    if recomputed != report.aggregates {
        bail!("aggregates do not match the per-trial records");
    }
    let csv = args.csv.clone().unwrap_or_else(|| args.report.with_extension("csv"));
    if csv.exists() {
        let rows = harness::read_trial_rows(&csv)?;
        if rows != report.rows() {
            bail!("{} does not match the JSON report", csv.display());
        }
    }
    println!(
        "{:?} report, {} trials, master seed {}, best trial {:?}",
        report.kind,
        report.trials.len(),
        report.master_seed,
        report.best_trial
    );
    summarize(&report);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let file = cli.config.as_deref();
    match cli.command {
        Command::Generate { out, settings } => generate(&resolve(file, settings)?, &out),
        Command::Embed { out, settings } => embed(&resolve(file, settings)?, &out),
        Command::Train { settings } => train(&resolve(file, settings)?),
        Command::Eval { labels, settings } => eval(&resolve(file, settings)?, &labels),
        Command::SweepKappa { settings } => sweep(&resolve(file, settings)?),
        Command::Baseline { settings } => baseline(&resolve(file, settings)?),
        Command::Report(args) => report(&args),
    }
}
