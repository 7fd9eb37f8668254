use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use prodrel::config::Settings;
use prodrel::corpus::{load_corpus, Corpus};
use prodrel::embed::{train_skipgram, ParagraphVectors};
use prodrel::eval::EvalReport;
use prodrel::features::{extended_features, FeatureVector};
use prodrel::models::{evaluate, train, ExperimentConfig, ModelKind, TrainedModel, Workspace};
use prodrel::stats::corpus_stats;
use prodrel::text::PipelineConfig;
use prodrel::{Error, Result};

#[derive(Parser)]
#[command(
    name = "prodrel",
    version,
    about = "Relevance prediction for product search"
)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding train.csv, product_descriptions.csv and attributes.csv.
    #[arg(long, default_value = ".")]
    data_dir: PathBuf,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    descriptions: Option<PathBuf>,
    #[arg(long)]
    attributes: Option<PathBuf>,
    /// Binary index cache, rebuilt when stale.
    #[arg(long)]
    index_cache: Option<PathBuf>,
}

impl DataArgs {
    fn path(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.data_dir.join(default))
    }

    fn train_path(&self) -> PathBuf {
        self.path(&self.train, "train.csv")
    }

    fn load(&self, extra: &[&Path]) -> Result<Corpus> {
        let train = self.train_path();
        let mut tables: Vec<&Path> = Vec::new();
        if extra.is_empty() || train.exists() {
            tables.push(&train);
        }
        tables.extend_from_slice(extra);
        load_corpus(
            &tables,
            &self.path(&self.descriptions, "product_descriptions.csv"),
            &self.path(&self.attributes, "attributes.csv"),
        )
    }
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// key = value settings file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    /// Use a random subset of this many labeled instances.
    #[arg(long)]
    train_size: Option<usize>,
    /// Any other setting, as key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Single-threaded numerics; identical output for identical input.
    #[arg(long)]
    deterministic: bool,
}

impl RunArgs {
    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(path) => Settings::read(path)?,
            None => Settings::default(),
        };
        macro_rules! flag {
            ($($name:ident),*) => {
                $(if let Some(v) = &self.$name { s.set(stringify!($name), v); })*
            };
        }
        flag!(model, k, seed, gamma, c, epsilon, lambda, mu, k1, b, dim, train_size);
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            s.set(k.trim(), v.trim());
        }
        if self.deterministic {
            s.set("parallel", false);
            s.set("threads", 1);
        } else if !s.entries().iter().any(|(k, _)| k == "parallel") {
            s.set("parallel", true);
        }
        Ok(s)
    }

    fn build(&self) -> Result<(ExperimentConfig<f64>, PipelineConfig)> {
        self.settings()?.build()
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Boolean6,
    IrFull,
    Extended,
}

#[derive(Subcommand)]
enum Command {
    /// Load and join the tables and summarize them.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Token statistics per field.
    Stats {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the feature matrix as CSV.
    Featurize {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "boolean6")]
        layout: Layout,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train skipgram vectors (or paragraph vectors) and write them in text format.
    EmbedTrain {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Paragraph vectors for product descriptions instead of word vectors.
        #[arg(long)]
        paragraph: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on all labeled instances and save it.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a test table with a saved model.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// k-fold cross-validation report.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-instance out-of-fold predictions.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Cross-validate one SVR model per RBF gamma.
    GridGamma {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated; defaults to 1e-10, 1e-9, …, 1.
        #[arg(long, value_delimiter = ',')]
        gammas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn to_json<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn single_threaded() {
    // Ignored if the pool is already built.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build_global();
}

#[derive(Serialize)]
struct IngestSummary {
    instances: usize,
    labeled: usize,
    products: usize,
    products_without_attributes: usize,
    attribute_rows: usize,
}

#[derive(Serialize)]
struct GridEntry {
    gamma: f64,
    report: EvalReport,
}

#[derive(Serialize)]
struct GridReport {
    best_gamma: f64,
    best_rmse: f64,
    entries: Vec<GridEntry>,
}

fn write_csv(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { data, out } => {
            let corpus = data.load(&[])?;
            let summary = IngestSummary {
                instances: corpus.instances.len(),
                labeled: corpus.labeled().count(),
                products: corpus.products.len(),
                products_without_attributes: corpus
                    .products
                    .values()
                    .filter(|p| p.attributes.is_empty())
                    .count(),
                attribute_rows: corpus.products.values().map(|p| p.attributes.len()).sum(),
            };
            emit(out.as_deref(), &to_json(&summary)?)
        }
        Command::Stats { data, run, out } => {
            let (_, pipeline) = run.build()?;
            let corpus = data.load(&[])?;
            emit(out.as_deref(), &to_json(&corpus_stats(&corpus, &pipeline))?)
        }
        Command::Featurize {
            data,
            run,
            layout,
            out,
        } => {
            let (exp, pipeline) = run.build()?;
            if run.deterministic {
                single_threaded();
            }
            let corpus = data.load(&[])?;
            let ws = Workspace::new(&corpus, pipeline, data.index_cache.as_deref())?;
            let rows: Vec<usize> = (0..corpus.instances.len()).collect();
            let vectors: Vec<FeatureVector<f64>> = rows
                .iter()
                .map(|&r| match layout {
                    Layout::Boolean6 => Ok(ws.boolean_row(r)),
                    Layout::IrFull => ws.ir_full_row(r, &exp.scoring),
                    Layout::Extended => {
                        extended_features(ws.query(r), ws.uid(r), &ws.indexes, &exp.scoring)
                    }
                })
                .collect::<Result<_>>()?;
            let mut header = vec!["id".to_string(), "product_uid".to_string()];
            header.extend(
                vectors
                    .first()
                    .map(|v| v.names().to_vec())
                    .unwrap_or_default(),
            );
            header.push("relevance".into());
            let lines = rows.iter().zip(&vectors).map(|(&r, v)| {
                let inst = &corpus.instances[r];
                let mut line = vec![inst.id.to_string(), inst.product_uid.to_string()];
                line.extend(v.values().iter().map(f64::to_string));
                line.push(inst.relevance.map(|x| x.to_string()).unwrap_or_default());
                line
            });
            write_csv(&out, &header, lines)
        }
        Command::EmbedTrain {
            data,
            run,
            paragraph,
            out,
        } => {
            let (exp, pipeline) = run.build()?;
            if run.deterministic {
                single_threaded();
            }
            let corpus = data.load(&[])?;
            let ws = Workspace::new(&corpus, pipeline, data.index_cache.as_deref())?;
            let (text, log) = if paragraph {
                let (pv, log) =
                    ParagraphVectors::<f32>::train(&ws.paragraph_documents(), &exp.paragraph)?;
                (pv.doc_table().to_text(), log)
            } else {
                let rows = ws.labeled_rows(None, exp.seed);
                let (table, log) =
                    train_skipgram::<f32>(&ws.embedding_streams(&rows), &exp.skipgram)?;
                eprintln!("vocabulary size {}", table.vocab_size());
                (table.to_text(), log)
            };
            for (e, l) in log.epoch_losses.iter().enumerate() {
                eprintln!("epoch {} mean loss {l:.6}", e + 1);
            }
            emit(Some(&out), &text)
        }
        Command::Train { data, run, out } => {
            let (exp, pipeline) = run.build()?;
            if run.deterministic {
                single_threaded();
            }
            let corpus = data.load(&[])?;
            let ws = Workspace::new(&corpus, pipeline, data.index_cache.as_deref())?;
            let model = train(&ws, &exp)?;
            emit(Some(&out), &model.to_json()?)
        }
        Command::Predict {
            data,
            model_file,
            test,
            deterministic,
            out,
        } => {
            if deterministic {
                single_threaded();
            }
            let text =
                std::fs::read_to_string(&model_file).map_err(|e| Error::io(&model_file, e))?;
            let model = TrainedModel::<f64>::from_json(&text)?;
            let corpus = data.load(&[&test])?;
            let ws = Workspace::new(&corpus, model.pipeline.clone(), data.index_cache.as_deref())?;
            let first_test = corpus.instances.len() - count_rows(&test, &corpus)?;
            let rows: Vec<usize> = (first_test..corpus.instances.len()).collect();
            let scores = model.predict(&ws, &rows)?;
            let lines = rows
                .iter()
                .zip(&scores)
                .map(|(&r, s)| vec![corpus.instances[r].id.to_string(), s.to_string()]);
            write_csv(&out, &["id".into(), "relevance".into()], lines)
        }
        Command::Evaluate {
            data,
            run,
            out,
            predictions,
        } => {
            let (exp, pipeline) = run.build()?;
            if run.deterministic {
                single_threaded();
            }
            let corpus = data.load(&[])?;
            let ws = Workspace::new(&corpus, pipeline, data.index_cache.as_deref())?;
            let result = evaluate(&ws, &exp)?;
            if let Some(path) = &predictions {
                result
                    .outcome
                    .write_predictions_csv(path, &result.ids, &result.gold)?;
            }
            emit(out.as_deref(), &result.outcome.report.to_json()?)
        }
        Command::GridGamma {
            data,
            run,
            gammas,
            out,
        } => {
            let (exp, pipeline) = run.build()?;
            if matches!(exp.model, ModelKind::Word2vec | ModelKind::Doc2vec) {
                return Err(Error::Config(format!(
                    "model `{}` has no RBF kernel",
                    exp.model
                )));
            }
            if run.deterministic {
                single_threaded();
            }
            let gammas = if gammas.is_empty() {
                (-10..=0).map(|e| 10f64.powi(e)).collect()
            } else {
                gammas
            };
            let corpus = data.load(&[])?;
            let ws = Workspace::new(&corpus, pipeline, data.index_cache.as_deref())?;
            let mut entries = Vec::with_capacity(gammas.len());
            for gamma in gammas {
                let mut cfg = exp.clone();
                cfg.svr.gamma = gamma;
                cfg.svr.validate()?;
                let report = evaluate(&ws, &cfg)?.outcome.report;
                log::info!(
                    "gamma {gamma:e}: rmse {:.5} pearson {:.5}",
                    report.rmse,
                    report.pearson
                );
                entries.push(GridEntry { gamma, report });
            }
            let best = entries
                .iter()
                .min_by(|a, b| a.report.rmse.total_cmp(&b.report.rmse))
                .expect("grid is non-empty");
            let report = GridReport {
                best_gamma: best.gamma,
                best_rmse: best.report.rmse,
                entries,
            };
            emit(out.as_deref(), &to_json(&report)?)
        }
    }
}

/// Rows in an instance table, so that its instances can be located after the join.
fn count_rows(path: &Path, corpus: &Corpus) -> Result<usize> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let n = reader.records().count();
    Ok(n.min(corpus.instances.len()))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParams(_) => 1,
        e if e.is_data_error() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
