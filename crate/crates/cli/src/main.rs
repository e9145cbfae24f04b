use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use s2s_core::analysis::report::{self, PCA_FILE};
use s2s_core::analysis::{order_diagnostic, pca, pca_csv};
use s2s_core::checkpoint::{load_checkpoint, read_manifest};
use s2s_core::config::RunConfig;
use s2s_core::run::{train_run, with_threads, write_run};
use s2s_core::train::{evaluate, EpochMetrics, EvalMetrics};
use s2s_core::verify::{layer_and_model_checks, TinySizes, TOLERANCE};
use s2s_core::{make_dataset, Dataset, Precision, Scalar, Seq2SeqModel, Split, TaskKind};

const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "s2s", version, about = "LSTM encoder-decoder on synthetic sequence tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file.
    Gen {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to <out-dir>/dataset.txt.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train a model and write model.ckpt, metrics.csv, summary.json and pca.csv.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Use this dataset instead of generating one from the config.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Start from these weights (the optimizer state starts fresh).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the splits of a dataset; prints JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Evaluate only this split.
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        #[arg(long)]
        threads: Option<usize>,
        /// Also write the JSON here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// PCA of a checkpoint's token embeddings as CSV.
    Pca {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
        components: u8,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Finite-difference gradient checks at tiny sizes in double precision.
    Gradcheck {
        /// Number of seeds, starting from --seed.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    modulus: Option<usize>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    val: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    precision: Option<Precision>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write 0 in the wall_time column so reruns are byte-identical.
    #[arg(long)]
    no_wall_time: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $field:ident) => {
                if let Some(v) = self.$flag.clone() {
                    c.$field = v;
                }
            };
        }
        if self.task.is_some() {
            c.task = self.task;
        }
        if self.vocab.is_some() {
            c.vocab_size = self.vocab;
        }
        if self.modulus.is_some() {
            c.modulus = self.modulus;
        }
        if self.length.is_some() {
            c.length = self.length;
        }
        set!(train => train_size);
        set!(val => val_size);
        set!(test => test_size);
        set!(hidden => hidden_size);
        set!(embed_dim => embed_dim);
        set!(batch => batch_size);
        set!(lr => learning_rate);
        set!(max_epochs => max_epochs);
        set!(patience => patience);
        set!(seed => seed);
        set!(threads => threads);
        set!(precision => precision);
        set!(out_dir => out_dir);
        if self.no_wall_time {
            c.record_wall_time = false;
        }
        Ok(c)
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<s2s_core::Error>() {
        Some(s2s_core::Error::Config(_) | s2s_core::Error::InvalidArgument(_)) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Gen { run, output } => cmd_gen(&run.resolve()?, output),
        Command::Train { run, dataset, resume } => {
            let mut config = run.resolve()?;
            if let Some(path) = dataset {
                config.dataset = Some(path);
            }
            match config.precision {
                Precision::Single => cmd_train::<f32>(&config, resume.as_deref()),
                Precision::Double => cmd_train::<f64>(&config, resume.as_deref()),
            }
        }
        Command::Eval {
            checkpoint,
            dataset,
            split,
            threads,
            output,
        } => {
            let splits = match split {
                Some(SplitArg::Train) => vec![Split::Train],
                Some(SplitArg::Val) => vec![Split::Val],
                Some(SplitArg::Test) => vec![Split::Test],
                None => Split::ALL.to_vec(),
            };
            let threads = threads.unwrap_or(1);
            let json = match read_manifest(&checkpoint)?.precision {
                Precision::Single => cmd_eval::<f32>(&checkpoint, &dataset, &splits, threads)?,
                Precision::Double => cmd_eval::<f64>(&checkpoint, &dataset, &splits, threads)?,
            };
            emit(&json, output.as_deref())
        }
        Command::Pca {
            checkpoint,
            components,
            output,
        } => {
            let csv = match read_manifest(&checkpoint)?.precision {
                Precision::Single => embedding_pca_csv(&load_checkpoint::<f32>(&checkpoint)?.0, components.into())?,
                Precision::Double => embedding_pca_csv(&load_checkpoint::<f64>(&checkpoint)?.0, components.into())?,
            };
            emit(&csv, output.as_deref())
        }
        Command::Gradcheck { seeds, seed } => cmd_gradcheck(seed, seeds),
    }
}

fn emit(text: &str, output: Option<&Path>) -> Result<ExitCode> {
    match output {
        Some(path) => report::write_file(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(config: &RunConfig, output: Option<PathBuf>) -> Result<ExitCode> {
    let task = config.task_spec()?;
    let output = output.unwrap_or_else(|| config.out_dir.join("dataset.txt"));
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        report::ensure_dir(parent)?;
    }
    let ds = with_threads(config.threads, || make_dataset(task, config.split_sizes(), config.seed))??;
    ds.save(&output)?;
    let sizes = ds.sizes();
    println!(
        "wrote {}: train={} val={} test={} seed={}",
        output.display(),
        sizes.train,
        sizes.val,
        sizes.test,
        ds.seed
    );
    Ok(ExitCode::SUCCESS)
}

/// The dataset named by the config, or one generated from it. A loaded
/// dataset defines the task; the config supplies everything else.
fn load_or_generate(config: &mut RunConfig) -> Result<Dataset> {
    match config.dataset.clone() {
        Some(path) => {
            let ds = Dataset::load(&path)?;
            config
                .adopt_dataset(&ds)
                .with_context(|| format!("dataset {}", path.display()))?;
            Ok(ds)
        }
        None => {
            let task = config.task_spec()?;
            Ok(with_threads(config.threads, || {
                make_dataset(task, config.split_sizes(), config.seed)
            })??)
        }
    }
}

fn cmd_train<T: Scalar>(config: &RunConfig, resume: Option<&Path>) -> Result<ExitCode> {
    let mut config = config.clone();
    let dataset = load_or_generate(&mut config)?;
    config.validate()?;
    let resumed = match resume {
        Some(path) => Some(
            load_checkpoint::<T>(path)
                .with_context(|| format!("resuming from {}", path.display()))?
                .0,
        ),
        None => None,
    };
    let progress = |m: &EpochMetrics| {
        eprintln!(
            "epoch {:>4}  train_loss {:.4}  val_loss {:.4}  train_acc {:.4}  val_acc {:.4}  {:.1}s",
            m.epoch, m.train_loss, m.val_loss, m.train_token_acc, m.val_token_acc, m.wall_time
        )
    };
    let result = train_run::<T>(&config, &dataset, resumed, progress)?;
    write_run(&config.out_dir, &result)?;
    report::write_file(&config.out_dir.join(PCA_FILE), &embedding_pca_csv(&result.model, 2)?)?;
    let s = &result.summary;
    let test = s
        .test
        .map_or_else(|| "n/a".to_string(), |t| format!("{:.4}", t.token_acc));
    println!(
        "best epoch {} of {} ({:?}); token accuracy train {:.4} val {:.4} test {}",
        s.best_epoch, s.stop_epoch, s.stop, s.train.token_acc, s.val.token_acc, test
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval<T: Scalar>(checkpoint: &Path, dataset: &Path, splits: &[Split], threads: usize) -> Result<String> {
    let (model, _) = load_checkpoint::<T>(checkpoint)?;
    let ds = Dataset::load(dataset)?;
    s2s_core::train::check_compatible(&model, &ds)?;
    let mut out = serde_json::Map::new();
    for &split in splits {
        let pairs = ds.split(split);
        if pairs.is_empty() {
            continue;
        }
        let m: EvalMetrics = with_threads(threads, || evaluate(&model, pairs))??;
        out.insert(split.as_str().to_string(), serde_json::to_value(m)?);
    }
    if out.is_empty() {
        bail!(s2s_core::Error::InvalidArgument("no nonempty split to evaluate".into()));
    }
    Ok(serde_json::to_string_pretty(&out)? + "\n")
}

/// PCA CSV with the order diagnostic of the first component as an extra
/// comment line.
fn embedding_pca_csv<T: Scalar>(model: &Seq2SeqModel<T>, k: usize) -> Result<String> {
    let result = pca(&model.embedding.weights, k)?;
    let first: Vec<f64> = result.projections.data().iter().step_by(k).copied().collect();
    let mut csv = String::new();
    if let Ok(order) = order_diagnostic(&first) {
        csv.push_str(&format!(
            "# spearman_rho_pc1={}{}\n",
            order.rho,
            if order.degenerate { " (degenerate)" } else { "" }
        ));
    }
    csv.push_str(&pca_csv(&result));
    Ok(csv)
}

fn cmd_gradcheck(first_seed: u64, seeds: u64) -> Result<ExitCode> {
    if seeds == 0 {
        bail!(s2s_core::Error::InvalidArgument("--seeds must be at least 1".into()));
    }
    let mut reports = Vec::new();
    for seed in first_seed..first_seed + seeds {
        reports.extend(layer_and_model_checks(seed, TinySizes::default())?);
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    let worst = reports.iter().map(|r| r.report.max_rel_error).fold(0.0f64, f64::max);
    let doc = serde_json::json!({
        "tolerance": TOLERANCE,
        "max_rel_error": worst,
        "failed": failed,
        "checks": reports,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    if failed > 0 {
        eprintln!("{failed} gradient check(s) at or above {TOLERANCE}");
        return Ok(ExitCode::from(EXIT_RUNTIME));
    }
    Ok(ExitCode::SUCCESS)
}
