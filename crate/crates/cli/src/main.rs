//! `tcr`: generate data, train, sweep and evaluate noisy-label classifiers.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use tcr_cli::config::{DataConfig, ExperimentConfig};
use tcr_cli::experiment;
use tcr_cli::output::{trace_header, CsvSink, METRICS_HEADER, SWEEP_HEADER};
use tcr_cli::sweep;
use tcr_core::data;
use tcr_core::methods::MethodRegistry;
use tcr_core::model::ModelParams;
use tcr_core::trainer::evaluate;

#[derive(Parser)]
#[command(name = "tcr", version, about = "Noisy-label training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Gaussian-blob train/test split.
    GenData(GenDataArgs),
    /// Train one model and write metrics, trace and checkpoint.
    Train(Box<TrainArgs>),
    /// Run methods × grid × seeds from a JSON config and write sweep.csv.
    Sweep(SweepArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// List the registered training methods.
    Methods,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 500)]
    per_class: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 0.3)]
    spread: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Output directory; receives train.csv and test.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON config; flags given here override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    squeeze_start: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// `none`, `uniform:<eta>`, `asymmetric:<eta>[:<a>><b>;...]` or `openset:<eta>`.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    init_seed: Option<u64>,
    #[arg(long)]
    shuffle_seed: Option<u64>,
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Clean training set; generated from the config when omitted.
    #[arg(long, requires = "test")]
    train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    test: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated sample ids to trace every epoch.
    #[arg(long, value_delimiter = ',')]
    trace: Option<Vec<u64>>,
    /// Also write the noisy training set here.
    #[arg(long)]
    save_noisy: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run cells concurrently.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

/// Failure classes that map to distinct exit codes.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(anyhow!("no such file: {}", path.display())))
    }
}

fn check(problems: Vec<String>) -> Result<(), Failure> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(usage(anyhow!(
            "invalid configuration:\n  {}",
            problems.join("\n  ")
        )))
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn gen_data(args: GenDataArgs) -> Result<ExitCode, Failure> {
    let cfg = DataConfig {
        classes: args.classes,
        per_class: args.per_class,
        dim: args.dim,
        spread: args.spread,
        test_fraction: args.test_fraction,
        seed: args.seed,
    };
    check(cfg.problems())?;
    let (train, test) = experiment::generate(&cfg)?;
    create_dir(&args.out)?;
    for (name, ds) in [("train.csv", &train), ("test.csv", &test)] {
        let path = args.out.join(name);
        data::save(&path, ds).with_context(|| format!("cannot write {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn train_config(args: &TrainArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            require_file(path)?;
            ExperimentConfig::load(path).map_err(usage)?
        }
        None => ExperimentConfig::default(),
    };
    let t = &mut cfg.train;
    macro_rules! apply {
        ($($flag:ident => $field:expr),* $(,)?) => {
            $(if let Some(v) = args.$flag.clone() { $field = v; })*
        };
    }
    apply!(
        method => t.method,
        beta => t.beta,
        gamma => t.gamma,
        delta => t.delta,
        alpha => t.alpha,
        q => t.q,
        epochs => t.epochs,
        batch_size => t.batch_size,
        lr => t.lr,
        init_seed => t.init_seed,
        shuffle_seed => t.shuffle_seed,
        noise => cfg.noise,
        noise_seed => cfg.noise_seed,
        trace => cfg.trace,
    );
    if let Some(ts) = args.squeeze_start {
        cfg.train.squeeze_start = Some(ts);
    }
    if let (Some(a), Some(b)) = (&args.train, &args.test) {
        cfg.train_path = Some(a.clone());
        cfg.test_path = Some(b.clone());
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn train(args: TrainArgs) -> Result<ExitCode, Failure> {
    let registry = MethodRegistry::builtin();
    let cfg = train_config(&args)?;
    let mut problems = cfg.problems(&registry);
    if cfg.out.is_none() {
        problems.push("an output directory is required (--out or \"out\")".into());
    }
    check(problems)?;
    for path in [&cfg.train_path, &cfg.test_path].into_iter().flatten() {
        require_file(path)?;
    }
    let out = cfg.out.clone().expect("checked above");

    let (clean, test) = experiment::load_or_generate(&cfg)?;
    let corrupted =
        experiment::corrupt(&clean, &cfg.noise_spec()?, cfg.data.spread, cfg.noise_seed)?;
    create_dir(&out)?;
    if let Some(path) = &args.save_noisy {
        data::save(path, &corrupted.train)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    let mut metrics = CsvSink::create(&out.join("metrics.csv"))?;
    metrics.record(METRICS_HEADER)?;
    let mut trace = CsvSink::create(&out.join("trace.csv"))?;
    trace.record(trace_header(clean.classes()))?;

    let outcome = experiment::run(&cfg, &registry, &corrupted, &test, |m, rows| {
        metrics.metrics(m)?;
        rows.iter().try_for_each(|r| trace.trace(r))
    })?;
    let checkpoint = out.join("model.ckpt");
    outcome
        .params
        .save(&checkpoint)
        .with_context(|| format!("cannot write {}", checkpoint.display()))?;
    if let Some(last) = outcome.metrics.last() {
        println!("test_acc={}", last.test_acc);
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep_cmd(args: SweepArgs) -> Result<ExitCode, Failure> {
    let registry = MethodRegistry::builtin();
    require_file(&args.config)?;
    let mut cfg = ExperimentConfig::load(&args.config).map_err(usage)?;
    if let Some(out) = args.out {
        cfg.out = Some(out);
    }
    cfg.parallel |= args.parallel;
    let mut problems = cfg.sweep_problems(&registry);
    if cfg.out.is_none() {
        problems.push("an output directory is required (--out or \"out\")".into());
    }
    check(problems)?;
    let out = cfg.out.clone().expect("checked above");
    create_dir(&out)?;

    let results = sweep::run(&cfg, &registry);
    let mut sink = CsvSink::create(&out.join("sweep.csv"))?;
    sink.record(SWEEP_HEADER)?;
    let mut failed = 0;
    for r in &results {
        sink.record(r.csv_fields())?;
        if let Some(e) = &r.error {
            failed += 1;
            eprintln!(
                "cell {} [{}] seed {} failed: {e}",
                r.cell.method,
                r.cell.params_label(),
                r.cell.seed
            );
        }
    }
    println!("{}", out.join("sweep.csv").display());
    if failed > 0 {
        eprintln!("{failed} of {} cells failed", results.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn eval(args: EvalArgs) -> Result<ExitCode, Failure> {
    require_file(&args.checkpoint)?;
    require_file(&args.data)?;
    let params = ModelParams::load(&args.checkpoint)
        .with_context(|| format!("cannot read checkpoint {}", args.checkpoint.display()))?;
    let ds = experiment::load(&args.data)?;
    let acc = evaluate(&params, &ds).context("evaluation failed")?;
    println!("test_acc={acc}");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(*a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Methods => {
            for (name, summary) in MethodRegistry::builtin().summaries() {
                println!("{name:16} {summary}");
            }
            Ok(ExitCode::SUCCESS)
        }
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
