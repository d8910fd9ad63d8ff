//! Command-line entry point. Each subcommand is one process; artifacts go
//! under `<runs root>/<invocation hash>/<seed>/` together with a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha1::{Digest, Sha1};

use crate::budget::{equivalent_fractions, plan, BudgetError, Task, TimingTable};
use crate::config::{read_corpus, read_spec, ConfigError, RunConfig};
use crate::corpus::{generate_synthetic_corpus, parse_conll, parse_standoff, serialize_standoff, Corpus, CorpusError};
use crate::experiment::{experiment_seeds, run_experiment, validate_grid};
use crate::mention_detector::tag_silver;
use crate::metrics::{report, MetricsError, Scheme};
use crate::model::{CorefModel, ModelError};
use crate::training::{adapt, predict_corpus, train_source, FreezeConfig, ObjectiveConfig, RunSettings, TrainError};

/// Environment variable naming the runs root; defaults to `runs`.
pub const RUNS_ENV: &str = "COREF_ADAPT_RUNS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input files, flags or configuration; exit code 2.
    #[error("{0}")]
    Input(String),
    /// Failure while running; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<BudgetError> for CliError {
    fn from(e: BudgetError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            // A checkpoint path that does not exist is a caller mistake.
            ModelError::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => {
                CliError::Input(e.to_string())
            }
            ModelError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::Metrics(_) => CliError::Input(e.to_string()),
            TrainError::Model(m) => m.into(),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "coref-adapt", version, about = "Coreference domain adaptation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus (or generate a synthetic one) and write it as standoff JSONL.
    Prepare(PrepareArgs),
    /// Train a source model from the config's source corpus.
    Train(TrainArgs),
    /// Continue training a checkpoint on the target corpus.
    Adapt(AdaptArgs),
    /// Tag silver mentions on a corpus with a checkpoint.
    TagSilver(TagSilverArgs),
    /// Score system clusters (a file or a checkpoint's predictions) against gold.
    Evaluate(EvaluateArgs),
    /// Time-equivalent fractions and document allocations.
    Budget(BudgetArgs),
    /// Run the config's experiment grid.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Conll,
    Standoff,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    With,
    Without,
    Both,
}

impl SchemeArg {
    fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeArg::With => vec![Scheme::WithSingletons],
            SchemeArg::Without => vec![Scheme::WithoutSingletons],
            SchemeArg::Both => vec![Scheme::WithSingletons, Scheme::WithoutSingletons],
        }
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long, value_enum)]
    pub format: Format,
    /// Input corpus (conll and standoff formats).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Synthetic spec (synthetic format).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standoff output file; omit to validate only.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Source-trained checkpoint to start from.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated subset of cl_s, cl_t, md_t, mlm_t.
    #[arg(long)]
    pub objectives: String,
    /// Comma-separated subset of enc, md, al.
    #[arg(long, default_value = "")]
    pub freeze: String,
    /// High-precision threshold; defaults to the config value.
    #[arg(long)]
    pub q: Option<f64>,
    /// Annotate only the target documents that fit this many seconds.
    #[arg(long)]
    pub budget_seconds: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TagSilverArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus to tag; defaults to the config's target training split.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Gold corpus with coreference annotations.
    #[arg(long)]
    pub gold: PathBuf,
    /// System corpus whose clusters are scored.
    #[arg(long, conflicts_with = "checkpoint")]
    pub sys: Option<PathBuf>,
    /// Score this checkpoint's predictions instead of a system file.
    #[arg(long, required_unless_present = "sys")]
    pub checkpoint: Option<PathBuf>,
    /// Supplies q and the metric set; defaults apply without it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SchemeArg::Both)]
    pub scheme: SchemeArg,
    #[arg(long)]
    pub q: Option<f64>,
    /// Also write the JSON records to this file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// Supplies the timing table; defaults apply without it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus to allocate documents from.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Fraction of documents the coreference budget covers.
    #[arg(long)]
    pub coref_fraction: Option<f64>,
    #[arg(long)]
    pub budget_seconds: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `experiment.seeds`.
    #[arg(long)]
    pub seeds: Option<usize>,
}

/// Git-style blob hash of a byte string.
pub fn git_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn file_hash(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(git_hash(&bytes))
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub arguments: BTreeMap<String, String>,
    pub config_hash: String,
    pub config: Option<RunConfig>,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// The only field that differs between identical reruns.
    pub wall_clock_seconds: f64,
}

/// One invocation's run directory and what it read and wrote.
struct Run {
    dir: PathBuf,
    manifest: Manifest,
    started: Instant,
}

impl Run {
    fn start(
        command: &str,
        arguments: BTreeMap<String, String>,
        config: Option<&RunConfig>,
        seed: u64,
        inputs: &[PathBuf],
    ) -> Result<Self, CliError> {
        let started = Instant::now();
        #[derive(Serialize)]
        struct Key<'a> {
            command: &'a str,
            arguments: &'a BTreeMap<String, String>,
            config: Option<&'a RunConfig>,
        }
        let config_hash = crate::model::json_hash(&Key {
            command,
            arguments: &arguments,
            config,
        });
        let root = std::env::var_os(RUNS_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        let dir = root.join(&config_hash[..12]).join(seed.to_string());
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let mut hashes = BTreeMap::new();
        for p in inputs {
            hashes.insert(p.display().to_string(), file_hash(p)?);
        }
        Ok(Run {
            dir,
            manifest: Manifest {
                command: command.to_string(),
                arguments,
                config_hash,
                config: config.cloned(),
                seed,
                inputs: hashes,
                outputs: BTreeMap::new(),
                wall_clock_seconds: 0.0,
            },
            started,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.manifest.outputs.insert(name.to_string(), git_hash(bytes));
        Ok(path)
    }

    /// Records a file some other writer produced.
    fn record(&mut self, name: &str) -> Result<(), CliError> {
        let hash = file_hash(&self.path(name))?;
        self.manifest.outputs.insert(name.to_string(), hash);
        Ok(())
    }

    fn finish(mut self) -> Result<PathBuf, CliError> {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        let path = self.path("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        Ok(self.dir)
    }
}

fn json_pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s.into_bytes()
}

fn standoff_bytes(corpus: &Corpus) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    serialize_standoff(corpus, &mut out)?;
    Ok(out)
}

fn args_map(pairs: &[(&str, Option<String>)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v)))
        .collect()
}

fn check_q(q: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&q) {
        Ok(q)
    } else {
        Err(CliError::Input(format!("--q {q} outside [0, 1]")))
    }
}

/// Prints to stdout, turning a closed pipe into a runtime error.
fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}

/// Corpus statistics printed by `prepare`.
pub fn validation_report(corpus: &Corpus) -> String {
    let tokens: usize = corpus.documents.iter().map(|d| d.len()).sum();
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    let mut clusters = 0usize;
    for c in corpus.coref_annotations.values() {
        for k in c.clusters() {
            *histogram.entry(k.len()).or_default() += 1;
            clusters += 1;
        }
    }
    let singletons = histogram.get(&1).copied().unwrap_or(0);
    let mut out = String::new();
    out += &format!("documents           {}\n", corpus.len());
    out += &format!("tokens              {tokens}\n");
    out += &format!("mention annotations {}\n", corpus.mention_annotations.len());
    out += &format!("mentions            {}\n", corpus.mention_count());
    out += &format!("coref annotations   {}\n", corpus.coref_annotations.len());
    out += &format!("clusters            {clusters}\n");
    let rate = if clusters == 0 {
        0.0
    } else {
        singletons as f64 / clusters as f64
    };
    out += &format!("singleton rate      {rate:.4}\n");
    out += "cluster sizes\n";
    for (size, n) in &histogram {
        out += &format!("  {size:>4} {n:>8}\n");
    }
    out
}

fn cmd_prepare(a: &PrepareArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let corpus = match a.format {
        Format::Synthetic => {
            let spec = a
                .spec
                .as_ref()
                .ok_or_else(|| CliError::Input("--format synthetic needs --spec".into()))?;
            generate_synthetic_corpus(&read_spec(spec)?, a.seed)?
        }
        Format::Conll | Format::Standoff => {
            let input = a
                .input
                .as_ref()
                .ok_or_else(|| CliError::Input("--input is required".into()))?;
            let file = fs::File::open(input).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
            let reader = std::io::BufReader::new(file);
            let parsed = if a.format == Format::Conll {
                parse_conll(reader)
            } else {
                parse_standoff(reader)
            };
            parsed.map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?
        }
    };
    emit(out, &validation_report(&corpus))?;
    if let Some(path) = &a.output {
        let bytes = standoff_bytes(&corpus)?;
        fs::write(path, bytes).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs, log: &mut dyn Write) -> Result<PathBuf, CliError> {
    let cfg = RunConfig::load(&a.config)?;
    let data = cfg.load_data()?;
    let source = data
        .source_train
        .as_ref()
        .ok_or_else(|| CliError::Input("config has no source training corpus".into()))?;
    let mut run = Run::start("train", BTreeMap::new(), Some(&cfg), a.seed, &cfg.input_paths())?;
    let (model, report) = train_source(
        &cfg.model_config(),
        data.vocab(),
        source,
        data.source_dev.as_ref(),
        &cfg.training,
        cfg.metrics.metric_set,
        a.seed,
    )?;
    model.save(&run.path("model.json"), &run.manifest.config_hash)?;
    run.record("model.json")?;
    run.write("train_report.json", &json_pretty(&report))?;
    let dir = run.finish()?;
    emit(log, &format!("{}\n", dir.display()))?;
    Ok(dir)
}

fn objective_task(o: &ObjectiveConfig) -> Task {
    if o.cl_target {
        Task::Coreference
    } else {
        Task::Mention
    }
}

/// Target training data for the given objectives: annotations the
/// objectives do not use are removed.
fn annotated_target(target: &Corpus, o: &ObjectiveConfig) -> Corpus {
    if o.cl_target {
        target.clone()
    } else if o.md_target {
        target.mentions_only()
    } else {
        target.unlabeled()
    }
}

fn cmd_adapt(a: &AdaptArgs, log: &mut dyn Write) -> Result<PathBuf, CliError> {
    let cfg = RunConfig::load(&a.config)?;
    let objectives = ObjectiveConfig::parse(&a.objectives)?;
    let freeze = FreezeConfig::parse(&a.freeze)?;
    let q = check_q(a.q.unwrap_or(cfg.mention_detector.q))?;
    let data = cfg.load_data()?;
    let (mut model, _) = CorefModel::load(&a.checkpoint)?;
    let mut target = annotated_target(&data.target_train, &objectives);
    if let Some(seconds) = a.budget_seconds {
        let p = plan(&target, objective_task(&objectives), seconds, &cfg.budget)?;
        target = target.subset(p.doc_ids());
    }
    let arguments = args_map(&[
        ("objectives", Some(objectives.label())),
        ("freeze", Some(a.freeze.clone())),
        ("q", Some(q.to_string())),
        ("budget_seconds", a.budget_seconds.map(|s| s.to_string())),
        ("checkpoint", Some(file_hash(&a.checkpoint)?)),
    ]);
    let mut inputs = cfg.input_paths();
    inputs.push(a.checkpoint.clone());
    let mut run = Run::start("adapt", arguments, Some(&cfg), a.seed, &inputs)?;
    let settings = RunSettings {
        q,
        emit_singletons: cfg.antecedent_linker.emit_singletons_for(q),
        metric_set: cfg.metrics.metric_set,
    };
    let train_report = adapt(
        &mut model,
        &target,
        data.source_train.as_ref(),
        data.target_dev.as_ref(),
        objectives,
        freeze,
        &cfg.training,
        &settings,
        a.seed,
    )?;
    model.save(&run.path("model.json"), &run.manifest.config_hash)?;
    run.record("model.json")?;
    run.write("train_report.json", &json_pretty(&train_report))?;
    let sys = predict_corpus(&model, &data.target_test, q, settings.emit_singletons)?;
    let mut predictions = data.target_test.unlabeled();
    for doc in &data.target_test.documents {
        predictions.coref_annotations.insert(doc.doc_id.clone(), sys[&doc.doc_id].clone());
    }
    run.write("predictions.jsonl", &standoff_bytes(&predictions)?)?;
    let mut records = String::new();
    for scheme in [Scheme::WithSingletons, Scheme::WithoutSingletons] {
        let r = report(&data.target_test, &sys, scheme, cfg.metrics.metric_set)?;
        for rec in r.records() {
            records += &serde_json::to_string(&rec).expect("record serializes");
            records.push('\n');
        }
    }
    run.write("metrics.jsonl", records.as_bytes())?;
    let dir = run.finish()?;
    emit(log, &format!("{}\n", dir.display()))?;
    Ok(dir)
}

fn cmd_tag_silver(a: &TagSilverArgs, log: &mut dyn Write) -> Result<PathBuf, CliError> {
    let cfg = RunConfig::load(&a.config)?;
    let q = check_q(a.q.unwrap_or(cfg.mention_detector.q))?;
    let corpus = match &a.input {
        Some(p) => read_corpus(p)?,
        None => cfg.load_data()?.target_train,
    };
    let (model, _) = CorefModel::load(&a.checkpoint)?;
    let mut inputs = match &a.input {
        Some(p) => vec![p.clone()],
        None => cfg.input_paths(),
    };
    inputs.push(a.checkpoint.clone());
    let arguments = args_map(&[
        ("q", Some(q.to_string())),
        ("input", a.input.as_ref().map(|p| file_hash(p)).transpose()?),
        ("checkpoint", Some(file_hash(&a.checkpoint)?)),
    ]);
    let mut run = Run::start("tag-silver", arguments, Some(&cfg), a.seed, &inputs)?;
    let silver = tag_silver(&corpus, &model, q)?;
    let mut tagged = corpus.unlabeled();
    tagged.mention_annotations = silver;
    run.write("silver.jsonl", &standoff_bytes(&tagged)?)?;
    let dir = run.finish()?;
    emit(log, &format!("{}\n", dir.display()))?;
    Ok(dir)
}

fn cmd_evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let gold = read_corpus(&a.gold)?;
    if !gold.has_coref() {
        return Err(CliError::Input(format!("{}: no coreference annotations", a.gold.display())));
    }
    let sys = match (&a.sys, &a.checkpoint) {
        (Some(p), _) => read_corpus(p)?.coref_annotations,
        (None, Some(ckpt)) => {
            let q = check_q(a.q.unwrap_or(cfg.mention_detector.q))?;
            let (model, _) = CorefModel::load(ckpt)?;
            predict_corpus(&model, &gold, q, cfg.antecedent_linker.emit_singletons_for(q))?
        }
        (None, None) => return Err(CliError::Input("need --sys or --checkpoint".into())),
    };
    let mut table = String::new();
    let mut records = String::new();
    for scheme in a.scheme.schemes() {
        let r = report(&gold, &sys, scheme, cfg.metrics.metric_set)?;
        table += &r.table();
        table.push('\n');
        for rec in r.records() {
            records += &serde_json::to_string(&rec).expect("record serializes");
            records.push('\n');
        }
    }
    emit(out, &table)?;
    emit(out, &records)?;
    if let Some(path) = &a.output {
        fs::write(path, records.as_bytes()).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

fn cmd_budget(a: &BudgetArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let table: TimingTable = match &a.config {
        Some(p) => RunConfig::load(p)?.budget,
        None => TimingTable::default(),
    };
    let corpus = a.input.as_deref().map(read_corpus).transpose()?;
    if a.coref_fraction.is_none() && a.budget_seconds.is_none() {
        return Err(CliError::Input("need --coref-fraction or --budget-seconds".into()));
    }
    if let Some(f) = a.coref_fraction {
        let m = equivalent_fractions(f, &table)?;
        emit(out, &format!("coreference fraction {f}\nmention fraction {m}\n"))?;
        if let Some(c) = &corpus {
            let n = c.len() as f64;
            let coref_docs = (f * n).round() as usize;
            let mention_docs = (m * n).round() as usize;
            emit(out, &format!("coreference documents {coref_docs}\nmention documents {mention_docs}\n"))?;
            for (i, d) in c.documents.iter().enumerate() {
                let tag = match (i < coref_docs, i < mention_docs) {
                    (true, _) => "coref+mention",
                    (false, true) => "mention",
                    _ => "-",
                };
                emit(out, &format!("  {} {}\n", d.doc_id, tag))?;
            }
        }
    }
    if let Some(seconds) = a.budget_seconds {
        let c = corpus
            .as_ref()
            .ok_or_else(|| CliError::Input("--budget-seconds needs --input".into()))?;
        for task in [Task::Coreference, Task::Mention] {
            let p = plan(c, task, seconds, &table)?;
            emit(out, &format!("{}\n", serde_json::to_string(&p).expect("plan serializes")))?;
        }
    }
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs, log: &mut dyn Write) -> Result<PathBuf, CliError> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.experiment.seed = s;
    }
    if let Some(n) = a.seeds {
        if n == 0 {
            return Err(CliError::Input("--seeds must be positive".into()));
        }
        cfg.experiment.seeds = Some(n);
    }
    let data = cfg.load_data()?;
    let settings = cfg.experiment_settings();
    validate_grid(&cfg.experiment.grid, &data, &settings)?;
    let seeds = experiment_seeds(&data, &settings)?;
    let mut run = Run::start(
        "experiment",
        BTreeMap::new(),
        Some(&cfg),
        cfg.experiment.seed,
        &cfg.input_paths(),
    )?;
    emit(log, &format!("{} seeds, {} grid entries\n", seeds, cfg.experiment.grid.len()))?;
    let mut sink = |line: &str| {
        let _ = writeln!(log, "{line}");
    };
    let results = run_experiment(&cfg.experiment.grid, &data, &settings, &mut sink)?;
    let table = results.aligned(cfg.metrics.metric_set);
    run.write("results.jsonl", results.jsonl().as_bytes())?;
    run.write("results.txt", table.as_bytes())?;
    let dir = run.finish()?;
    emit(log, &table)?;
    emit(log, &format!("{}\n", dir.display()))?;
    Ok(dir)
}

/// Runs a parsed command, writing reports to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(a, out),
        Command::Train(a) => cmd_train(a, out).map(drop),
        Command::Adapt(a) => cmd_adapt(a, out).map(drop),
        Command::TagSilver(a) => cmd_tag_silver(a, out).map(drop),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Budget(a) => cmd_budget(a, out),
        Command::Experiment(a) => cmd_experiment(a, out).map(drop),
    }
}

/// Process entry point; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = run(&cli, &mut out);
    let _ = out.flush();
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
