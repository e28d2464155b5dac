//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use otxai_core::attribution::{explain, Method};
use otxai_core::data::Dataset;
use otxai_core::metrics::{evaluate_sample, explained_score, sample_streams, Metric, MetricReport, MetricSettings};
use otxai_core::verify::{check_boundary, check_certificate, CertificateReport, GeometryReport};
use otxai_core::{LipNet, Rng, Score};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::{DatasetSpec, ExperimentConfig};
use crate::datasets;
use crate::error::{Error, Result};
use crate::experiments::{self, DEFAULT_SEED};
use crate::model_io::{self, ModelMeta};
use crate::render::{self, PlotOptions};
use crate::train::{self, history_csv, TrainedModel};

/// Train 1-Lipschitz networks, explain them and check their geometry.
#[derive(Debug, Parser)]
#[command(name = "otxai", version)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network from a config file or a named preset.
    Train(TrainArgs),
    /// Write the attribution map of one test input as PGM plus JSON.
    Explain(ExplainArgs),
    /// Score attribution methods with XAI metrics.
    Metrics(MetricsArgs),
    /// Boundary geometry and certificate checks of a binary network.
    Verify(VerifyArgs),
    /// SVG figure of a 2-D binary network.
    Plot(PlotArgs),
    /// Run a desk-scale experiment end to end.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Experiment config (JSON).
    #[arg(
        long,
        value_name = "PATH",
        conflicts_with = "preset",
        required_unless_present = "preset"
    )]
    pub config: Option<PathBuf>,
    /// Built-in experiment config.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Output directory (default: the config's `output`, else `.`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Training subset size.
    #[arg(long, value_name = "N")]
    pub subset: Option<usize>,
}

/// Where the evaluation data comes from.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Model file written by `train`.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Dataset: `NAME[:key=value,...]`, inline JSON or a JSON file.
    #[arg(long, value_name = "SPEC")]
    pub dataset: Option<String>,
    /// Take the dataset from an experiment config.
    #[arg(long, value_name = "PATH", conflicts_with = "dataset")]
    pub config: Option<PathBuf>,
    /// Seed for data synthesis and stochastic methods (default: the model's).
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// saliency | smoothgrad | ig | gradinput
    #[arg(long, value_name = "METHOD")]
    pub method: String,
    /// Test-split input, `idx:N`.
    #[arg(long, value_name = "idx:N")]
    pub input: String,
    /// PGM output; the JSON sidecar goes next to it.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated attribution methods.
    #[arg(long, value_name = "LIST", default_value = "saliency")]
    pub methods: String,
    /// Comma-separated metrics.
    #[arg(long, value_name = "LIST", default_value = "mufid_zero")]
    pub metrics: String,
    /// Number of leading test samples.
    #[arg(long, value_name = "N", default_value_t = 200)]
    pub samples: usize,
    /// Metric settings (JSON); missing keys take defaults.
    #[arg(long, value_name = "PATH")]
    pub settings: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Boundary tolerance (default: 0.1 max|f| over the data).
    #[arg(long, value_name = "TAU")]
    pub tau: Option<f64>,
    /// Random attack directions per sample, besides the gradient one.
    #[arg(long, value_name = "N", default_value_t = 4)]
    pub directions: usize,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated layers drawn over the points and the 0-contour.
    #[arg(long, value_name = "LIST", default_value = "levelsets,segments")]
    pub what: String,
    /// Contour grid nodes per axis.
    #[arg(long, value_name = "N", default_value_t = 200)]
    pub resolution: usize,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    /// Koch snowflakes: boundary geometry and certificates.
    Koch,
    /// Multiclass hKR variants on FashionMNIST.
    Table6,
    /// Attribution metrics, OTNN vs unconstrained, FashionMNIST.
    Table1,
    /// Null-block proxy on BlockMNIST.
    Table9,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    pub experiment: Experiment,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_name = "N", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// FashionMNIST training subset size.
    #[arg(long, value_name = "N")]
    pub subset: Option<usize>,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::Usage(format!("thread pool: {e}")))?
    };
    pool.install(|| match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Reproduce(a) => cmd_reproduce(a),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write(path, s)
}

/// Writes `model.json`, `history.csv`, `config.json` and `train_report.json`
/// under `dir`, each file name prefixed with `prefix`.
pub fn write_training(dir: &Path, prefix: &str, cfg: &ExperimentConfig, model: &TrainedModel) -> Result<()> {
    write(
        &dir.join(format!("{prefix}model.json")),
        model_io::to_json(&model.net, Some(&model.meta()))?,
    )?;
    write(&dir.join(format!("{prefix}history.csv")), history_csv(&model.history))?;
    write(&dir.join(format!("{prefix}config.json")), cfg.to_json()?)?;
    write_json(&dir.join(format!("{prefix}train_report.json")), &model.report)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => experiments::preset(name, DEFAULT_SEED, a.subset)?,
        (None, None) => return Err(Error::Usage("train needs --config or --preset".into())),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let dir = a
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let model = train::run(&cfg, &datasets::data_dir(), a.subset)?;
    write_training(&dir, "", &cfg, &model)?;
    let r = &model.report;
    println!(
        "{}: train accuracy {:.4}, test accuracy {:.4} (config {}, seed {}) -> {}",
        r.dataset,
        r.train_accuracy,
        r.test_accuracy,
        &r.config_hash[..12],
        r.seed,
        dir.display()
    );
    Ok(())
}

/// Model, its provenance, and the data it is evaluated on.
struct Loaded {
    net: LipNet,
    meta: Option<ModelMeta>,
    dataset: DatasetSpec,
    seed: u64,
    test: Dataset,
}

/// Provenance block of every report.
#[derive(Debug, Serialize)]
struct Provenance<'a> {
    model: String,
    model_config_hash: Option<&'a str>,
    model_seed: Option<u64>,
    dataset: &'a DatasetSpec,
    split: &'static str,
    seed: u64,
}

impl Loaded {
    fn provenance<'a>(&'a self, model: &Path) -> Provenance<'a> {
        Provenance {
            model: model.display().to_string(),
            model_config_hash: self.meta.as_ref().map(|m| m.config_hash.as_str()),
            model_seed: self.meta.as_ref().map(|m| m.seed),
            dataset: &self.dataset,
            split: "test",
            seed: self.seed,
        }
    }
}

fn load(a: &DataArgs) -> Result<Loaded> {
    let (net, meta) = model_io::load(&a.model)?;
    let (dataset, cfg_seed) = match (&a.dataset, &a.config) {
        (Some(spec), _) => (parse_dataset(spec)?, None),
        (None, Some(path)) => {
            let cfg = ExperimentConfig::load(path)?;
            (cfg.dataset, Some(cfg.seed))
        }
        (None, None) => return Err(Error::Usage("need --dataset or --config".into())),
    };
    let seed = a
        .seed
        .or(cfg_seed)
        .or(meta.as_ref().map(|m| m.seed))
        .unwrap_or(DEFAULT_SEED);
    let (_, test) = dataset.load(&datasets::data_dir(), None, seed)?;
    if test.meta.d != net.input_dim() {
        return Err(Error::Usage(format!(
            "dataset has {} inputs, model expects {}",
            test.meta.d,
            net.input_dim()
        )));
    }
    Ok(Loaded {
        net,
        meta,
        dataset,
        seed,
        test,
    })
}

fn preset_dataset(name: &str) -> Option<DatasetSpec> {
    let preset = match name {
        "koch" => "koch",
        "fashion_mnist" => "table6-softmax",
        "block_mnist" => "table9-otnn",
        _ => return None,
    };
    experiments::preset(preset, DEFAULT_SEED, None).ok().map(|c| c.dataset)
}

/// Splits on commas outside brackets.
fn split_top_level(s: &str) -> Vec<&str> {
    let (mut depth, mut start, mut out) = (0i32, 0, Vec::new());
    for (i, c) in s.char_indices() {
        match c {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

/// Override keys that replace a preset key instead of adding a duplicate.
const DATASET_KEY_ALIASES: &[(&str, &str)] = &[("n", "samples_per_class")];

/// `--dataset` value: inline JSON, a JSON file, or `NAME[:key=value,...]`
/// where `koch`, `fashion_mnist` and `block_mnist` start from the preset
/// settings.
pub fn parse_dataset(spec: &str) -> Result<DatasetSpec> {
    let origin = PathBuf::from("--dataset");
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else if Path::new(spec).is_file() {
        let path = Path::new(spec);
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return parse_dataset_json(&text, path);
    } else {
        let (name, overrides) = spec.split_once(':').unwrap_or((spec, ""));
        let mut value = match preset_dataset(name) {
            Some(d) => serde_json::to_value(d)?,
            None => serde_json::json!({ "kind": name }),
        };
        let object = value.as_object_mut().expect("dataset specs serialize as objects");
        for kv in split_top_level(overrides).into_iter().filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("dataset override `{kv}` is not key=value")))?;
            let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            let k = k.trim();
            let k = DATASET_KEY_ALIASES
                .iter()
                .find(|(alias, _)| *alias == k)
                .map_or(k, |(_, canonical)| canonical);
            object.insert(k.to_string(), v);
        }
        value.to_string()
    };
    parse_dataset_json(&text, &origin)
}

fn parse_dataset_json(text: &str, origin: &Path) -> Result<DatasetSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        Error::Config {
            path: origin.to_path_buf(),
            field,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })
}

fn parse_list<T>(list: &str, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Vec<T>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).ok_or_else(|| Error::Usage(format!("unknown {what} `{s}`"))))
        .collect()
}

#[derive(Debug, Serialize)]
struct ExplanationRecord<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    sample: usize,
    label: usize,
    /// Explained output (the predicted class of a multiclass head).
    target: usize,
    method: &'a Method,
    height: usize,
    width: usize,
    values: &'a [f64],
}

fn cmd_explain(a: ExplainArgs) -> Result<()> {
    let loaded = load(&a.data)?;
    let method = Method::parse(&a.method).map_err(|e| Error::Usage(e.to_string()))?;
    let i: usize = a
        .input
        .strip_prefix("idx:")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::Usage(format!("--input must be idx:N, got `{}`", a.input)))?;
    let test = &loaded.test;
    if i >= test.len() {
        return Err(Error::Usage(format!(
            "input {i} outside the {}-sample test split",
            test.len()
        )));
    }
    let x = test.input(i);
    let score = explained_score(&loaded.net, x)?;
    let (_, mut rng) = sample_streams(loaded.seed, i);
    let attribution = explain(&loaded.net, x, score, &method, &mut rng)?;
    let (height, width) = test.meta.image_shape.unwrap_or((1, test.meta.d));
    write(&a.out, render::pgm(attribution.data(), height, width)?)?;
    let Score::Output(target) = score else {
        unreachable!("explained scores are single outputs")
    };
    let record = ExplanationRecord {
        provenance: loaded.provenance(&a.data.model),
        sample: i,
        label: test.labels[i],
        target,
        method: &method,
        height,
        width,
        values: attribution.data(),
    };
    write_json(&a.out.with_extension("json"), &record)?;
    println!(
        "{} of test input {i} (class {target}) -> {}",
        method.name(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct MetricsFile<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    reports: Vec<MetricReport>,
}

fn cmd_metrics(a: MetricsArgs) -> Result<()> {
    let loaded = load(&a.data)?;
    let methods = parse_list(&a.methods, |s| Method::parse(s).ok(), "method")?;
    let metrics = parse_list(&a.metrics, |s| Metric::parse(s).ok(), "metric")?;
    let mut settings = match &a.settings {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de).map_err(|e| {
                let field = e.path().to_string();
                let inner = e.into_inner();
                Error::Config {
                    path: path.clone(),
                    field,
                    line: inner.line(),
                    column: inner.column(),
                    message: inner.to_string(),
                }
            })?
        }
        None => MetricSettings::default(),
    };
    if let Some(seed) = a.data.seed {
        settings.seed = seed;
    }
    let samples: Vec<usize> = (0..a.samples.min(loaded.test.len())).collect();
    let mut reports = Vec::new();
    for &metric in &metrics {
        let used: &[Method] = if metric.uses_method() {
            &methods
        } else {
            &methods[..1.min(methods.len())]
        };
        for method in used {
            let results: Vec<_> = samples
                .par_iter()
                .map(|&i| evaluate_sample(&loaded.net, &loaded.test, i, method, metric, &settings))
                .collect();
            let report = MetricReport::collect(metric, method, samples.clone(), results, &settings)?;
            println!(
                "{:>20} {:>10}: {:.6} ± {:.6}",
                report.metric, report.method, report.mean, report.sd
            );
            reports.push(report);
        }
    }
    write_json(
        &a.out,
        &MetricsFile {
            provenance: loaded.provenance(&a.data.model),
            reports,
        },
    )
}

#[derive(Debug, Serialize)]
struct VerifyFile<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    geometry: GeometryReport,
    certificate: CertificateReport,
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    let loaded = load(&a.data)?;
    if loaded.net.out_dim() != 1 {
        return Err(Error::Usage("verify needs a single-output network".into()));
    }
    let geometry = check_boundary(&loaded.net, &loaded.test, Score::Output(0), a.tau)?;
    let mut rng = Rng::derive(loaded.seed, experiments::CERTIFICATE_STREAM);
    let certificate = check_certificate(&loaded.net, &loaded.test, &Default::default(), a.directions, &mut rng)?;
    println!(
        "mean |grad| {:.4}, within tau {:.4}, certificate pass rate {:.4}",
        geometry.grad_norm.mean, geometry.within_tau, certificate.pass_rate
    );
    write_json(
        &a.out,
        &VerifyFile {
            provenance: loaded.provenance(&a.data.model),
            geometry,
            certificate,
        },
    )
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let loaded = load(&a.data)?;
    let mut opts = PlotOptions::with_layers(&a.what)?;
    opts.resolution = a.resolution;
    if opts.resolution < 2 {
        return Err(Error::Usage("--resolution must be at least 2".into()));
    }
    write(&a.out, render::boundary_figure(&loaded.net, &loaded.test, &opts)?)?;
    println!("{}", a.out.display());
    Ok(())
}

fn train_into(dir: &Path, prefix: &str, preset: &str, seed: u64, subset: Option<usize>) -> Result<TrainedModel> {
    let cfg = experiments::preset(preset, seed, subset)?;
    let model = train::run(&cfg, &datasets::data_dir(), None)?;
    write_training(dir, prefix, &cfg, &model)?;
    Ok(model)
}

fn cmd_reproduce(a: ReproduceArgs) -> Result<()> {
    let dir = &a.out;
    let settings = MetricSettings {
        seed: a.seed,
        ..MetricSettings::default()
    };
    match a.experiment {
        Experiment::Koch => {
            let model = train_into(dir, "koch_", "koch", a.seed, None)?;
            let report = experiments::koch_report(&model)?;
            write(
                &dir.join("koch.svg"),
                render::boundary_figure(&model.net, &model.test, &PlotOptions::default())?,
            )?;
            println!(
                "koch: test accuracy {:.4}, mean |grad| {:.4}, within tau {:.4}, certificate pass rate {:.4}",
                report.run.test_accuracy,
                report.geometry.grad_norm.mean,
                report.geometry.within_tau,
                report.certificate.pass_rate
            );
            write_json(&dir.join("koch_report.json"), &report)
        }
        Experiment::Table6 => {
            let ova = train_into(dir, "table6_ova_", "table6-ova", a.seed, a.subset)?;
            let softmax = train_into(dir, "table6_softmax_", "table6-softmax", a.seed, a.subset)?;
            let report = experiments::table6_report(&ova, &softmax);
            println!(
                "table6: ova {:.4}, softmax {:.4}",
                report.ova.test_accuracy, report.softmax.test_accuracy
            );
            write_json(&dir.join("table6_report.json"), &report)
        }
        Experiment::Table1 => {
            let otnn = train_into(dir, "table1_otnn_", "table1-otnn", a.seed, a.subset)?;
            let unconstrained = train_into(dir, "table1_unconstrained_", "table1-unconstrained", a.seed, a.subset)?;
            let report = experiments::table1_report(&otnn, &unconstrained, experiments::COMPARISON_SAMPLES, &settings)?;
            for row in &report.rows {
                println!(
                    "table1: {} {}: otnn {:.4}, unconstrained {:.4}, sign test p {:.2e}",
                    row.metric, row.method, row.otnn_mean, row.unconstrained_mean, row.p_value
                );
            }
            write_json(&dir.join("table1_report.json"), &report)
        }
        Experiment::Table9 => {
            let otnn = train_into(dir, "table9_otnn_", "table9-otnn", a.seed, None)?;
            let unconstrained = train_into(dir, "table9_unconstrained_", "table9-unconstrained", a.seed, None)?;
            let report = experiments::table9_report(&otnn, &unconstrained, &settings)?;
            let c = &report.null_block;
            println!(
                "table9: null-block top-{}% fraction otnn {:.4}, unconstrained {:.4}, sign test p {:.2e}",
                settings.null_k_percent, c.otnn_mean, c.unconstrained_mean, c.p_value
            );
            write_json(&dir.join("table9_report.json"), &report)
        }
    }
}
