//! The `expertgate` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use expertgate_core::gate::{train_gate_on_split, GateVariant};
use expertgate_core::gating::{select_most_related, BASE_MODEL};
use expertgate_core::pipeline::{
    evaluation_split, run_baselines_with_store, train_discriminative_gate, BaselineConfig,
};
use expertgate_core::preprocess::compute_reference_stats;
use expertgate_core::split::train_validation;
use expertgate_core::synth::generate_synthetic_task;
use expertgate_core::{Matrix, ModelRegistry, PipelineConfig, SgdConfig};

use crate::dataset::{load_dataset, load_samples, save_dataset};
use crate::report::{bench_csv, bench_table, relatedness_tsv, routing_csv, RoutedSample, SweepPoint};
use crate::store::{load_store, save_store, store_exists, FileExpertStore};
use crate::{load_task_spec, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "expertgate", version, about = "Autoencoder-gated lifelong learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a new task and add it to the store
    Learn(LearnArgs),
    /// Route samples through the gates and classify them with the selected experts
    Infer(InferArgs),
    /// Print how related a dataset is to every stored task
    Relatedness(RelatednessArgs),
    /// Run the baseline comparison on synthetic task specs
    Bench(BenchArgs),
    /// Generate a synthetic dataset from a spec
    Gen(GenArgs),
}

#[derive(Debug, Args)]
pub struct Training {
    /// Gate code size; defaults to min(100, d/2)
    #[arg(long)]
    pub code_size: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f32,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl Training {
    fn config(&self) -> PipelineConfig {
        let sgd = SgdConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            seed: self.seed,
            ..SgdConfig::default()
        };
        PipelineConfig {
            code_size: self.code_size,
            gate_sgd: sgd,
            expert_sgd: sgd,
            ..PipelineConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub name: String,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long = "rel-th", default_value_t = 0.85)]
    pub rel_threshold: f64,
    /// Distillation temperature for LwF
    #[arg(long, default_value_t = 2.0)]
    pub temp: f32,
    /// Dataset whose features give the standardization statistics of a new store
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[command(flatten)]
    pub training: Training,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Dataset or sample file (CSV without a label column)
    pub input: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long = "activation-th", default_value_t = 0.1)]
    pub activation_threshold: f64,
    /// Evaluate every activated expert, not only the selected one
    #[arg(long)]
    pub multi: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RelatednessArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long = "rel-th", default_value_t = 0.85)]
    pub rel_threshold: f64,
    #[command(flatten)]
    pub training: Training,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated synthetic task spec files
    #[arg(long, value_delimiter = ',', required = true)]
    pub tasks: Vec<PathBuf>,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Expert hidden width
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[command(flatten)]
    pub training: Training,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("expertgate: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Learn(a) => learn(a),
        Command::Infer(a) => infer(a),
        Command::Relatedness(a) => relatedness(a),
        Command::Bench(a) => bench(a),
        Command::Gen(a) => gen(a),
    }
}

fn check_task_name(name: &str) -> Result<()> {
    if name.is_empty() || name == BASE_MODEL || name.contains(['\t', '\n', '\r']) {
        return Err(Error::Parameter(format!("`{name}` cannot be used as a task name")));
    }
    Ok(())
}

fn open_store(dir: &Path, config: PipelineConfig) -> Result<ModelRegistry<FileExpertStore>> {
    if !store_exists(dir) {
        return Err(Error::StoreCorrupt(format!("{} has no manifest", dir.display())));
    }
    load_store(dir, config)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io(Path::new("<stdout>"), e)),
    }
}

fn learn(a: LearnArgs) -> Result<()> {
    check_task_name(&a.name)?;
    let data = load_dataset(&a.dataset)?.with_task_name(&a.name);
    let mut config = a.training.config();
    config.rel_threshold = a.rel_threshold;
    config.lwf_temperature = a.temp;
    let mut registry = if store_exists(&a.store) {
        if a.reference.is_some() {
            return Err(Error::Parameter("the store already has reference statistics".into()));
        }
        load_store(&a.store, config)?
    } else {
        let store = FileExpertStore::create(&a.store)?;
        match &a.reference {
            Some(path) => {
                let reference = load_dataset(path)?;
                let stats = compute_reference_stats(reference.features(), "reference")?;
                ModelRegistry::with_reference_stats(store, config, stats)
            }
            None => ModelRegistry::new(store, config),
        }
    };
    let outcome = registry.learn_task(&data)?;
    save_store(&registry)?;
    let r = &outcome.report;
    let rel = r.chosen_rel().map(|v| v.to_string()).unwrap_or_default();
    println!("task\tprior\tmethod\trel\tval_error");
    println!(
        "{}\t{}\t{}\t{rel}\t{}",
        a.name, r.chosen_prior, r.method, outcome.gate_report.final_val_error
    );
    Ok(())
}

fn infer(a: InferArgs) -> Result<()> {
    let config = PipelineConfig {
        activation_threshold: a.activation_threshold,
        ..PipelineConfig::default()
    };
    let mut registry = open_store(&a.store, config)?;
    let samples = load_samples(&a.input)?;
    let x = &samples.features;
    let label = |r: usize| samples.labels.as_ref().map(|l| l[r]);
    let mut rows = Vec::with_capacity(x.rows());
    if a.multi {
        for r in 0..x.rows() {
            let m = registry.infer_multi(x.row(r))?;
            let selected = m
                .predictions
                .iter()
                .position(|p| p.0 == m.decision.selected)
                .expect("the selected expert is always activated");
            let mut predictions = m.predictions;
            predictions.swap(0, selected);
            rows.push(RoutedSample { decision: m.decision, predictions, label: label(r) });
        }
    } else {
        for (r, inf) in registry.infer_batch(x)?.into_iter().enumerate() {
            let conf = inf.probabilities[inf.class];
            rows.push(RoutedSample {
                decision: inf.decision,
                predictions: vec![(inf.task_index, inf.class, conf)],
                label: label(r),
            });
        }
    }
    let names: Vec<String> = registry.manifest().iter().map(|m| m.task_name.clone()).collect();
    let csv = routing_csv(&names, &rows, a.multi)?;
    emit(a.out.as_deref(), &csv)?;
    if a.out.is_some() {
        for (i, name) in names.iter().enumerate() {
            let n = rows.iter().filter(|r| r.decision.selected == i).count();
            println!("{name}\t{n}");
        }
    }
    Ok(())
}

fn relatedness(a: RelatednessArgs) -> Result<()> {
    let mut config = a.training.config();
    config.rel_threshold = a.rel_threshold;
    let registry = open_store(&a.store, config.clone())?;
    let ensemble = registry
        .ensemble()
        .ok_or(expertgate_core::Error::EmptyRegistry)?;
    let data = load_dataset(&a.dataset)?;
    let (train, val) = train_validation(data.len(), config.gate_sgd.seed);
    let x = data.features();
    let (gate, _) = train_gate_on_split(
        data.task_name(),
        &x.select_rows(&train),
        &x.select_rows(&val),
        ensemble.stats(),
        config.code_size_for(data.dim()),
        &config.gate_sgd,
        GateVariant::Standard,
    )?;
    let report = select_most_related(ensemble, &gate, &x.select_rows(&val), config.rel_threshold)?;
    print!("{}", relatedness_tsv(&report));
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    if store_exists(&a.store) {
        return Err(Error::Parameter(format!("{} already holds a store", a.store.display())));
    }
    let tasks = a
        .tasks
        .iter()
        .map(|p| Ok(generate_synthetic_task(&load_task_spec(p)?)?))
        .collect::<Result<Vec<_>>>()?;
    let mut pipeline = a.training.config();
    pipeline.hidden = a.hidden;
    let config = BaselineConfig {
        pipeline,
        split_seed: a.training.seed,
        ..BaselineConfig::default()
    };
    let (report, registry) = run_baselines_with_store(&tasks, &config, FileExpertStore::create(&a.store)?)?;
    save_store(&registry)?;

    let stats = registry.stats().expect("tasks were learned");
    let splits: Vec<_> = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| evaluation_split(t, config.split_seed, i))
        .collect();
    let train: Vec<&Matrix<f32>> = splits.iter().map(|s| s[0].features()).collect();
    let test: Vec<&Matrix<f32>> = splits.iter().map(|s| s[2].features()).collect();
    let mut sweep = Vec::new();
    for n in [10, 100] {
        let out = train_discriminative_gate(&train, &test, stats, Some(n), &config.pipeline.expert_sgd)?;
        sweep.push(SweepPoint { samples_per_task: Some(n), selection_accuracy: out.accuracy });
    }
    sweep.push(SweepPoint {
        samples_per_task: None,
        selection_accuracy: report.discriminative_selection_accuracy,
    });
    emit(Some(&a.out), &bench_csv(&report, &sweep)?)?;
    print!("{}", bench_table(&report, &sweep));
    Ok(())
}

fn gen(a: GenArgs) -> Result<()> {
    let spec = load_task_spec(&a.spec)?;
    let data = generate_synthetic_task(&spec)?;
    save_dataset(&a.out, &data)
}
