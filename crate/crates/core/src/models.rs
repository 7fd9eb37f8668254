//! The named models: feature construction per instance, cross-validated evaluation
//! and full-data training for prediction.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ProductId};
use crate::embed::{
    score_word2vec, train_skipgram, EmbeddingTable, ParagraphConfig, ParagraphVectors,
    SkipgramConfig, TrainingLog,
};
use crate::error::{Error, Result};
use crate::eval::{
    kfold_cv, train_stacked, CvOutcome, Learner, LogisticLearner, Predictor, SimilarityClassifier,
    StackedModel, SvrLearner,
};
use crate::features::{
    bm25_score, boolean_features, indri_feature, FeatureVector, ScoringParams, UnigramVocabulary,
};
use crate::index::{Field, FieldIndexes};
use crate::scalar::Real;
use crate::svr::{SvrConfig, SvrModel};
use crate::text::{PipelineConfig, TextProcessor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// SVR on counts of the top unigrams of search term, title and description.
    Unigram,
    /// SVR on OR/AND counts over title, description and attributes.
    Boolean6,
    /// `Boolean6` plus BM25 and query likelihood on the description.
    IrFull,
    /// Cosine of averaged skipgram vectors.
    Word2vec,
    /// Cosine of paragraph vectors.
    Doc2vec,
    /// SVR on `Boolean6` plus the out-of-fold `Unigram` prediction.
    Stacked,
    /// SVR on `Boolean6` plus the `Word2vec` score.
    Combined,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Unigram,
        ModelKind::Boolean6,
        ModelKind::IrFull,
        ModelKind::Word2vec,
        ModelKind::Doc2vec,
        ModelKind::Stacked,
        ModelKind::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Unigram => "unigram",
            ModelKind::Boolean6 => "boolean6",
            ModelKind::IrFull => "ir_full",
            ModelKind::Word2vec => "word2vec",
            ModelKind::Doc2vec => "doc2vec",
            ModelKind::Stacked => "stacked",
            ModelKind::Combined => "combined",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ModelKind::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!(
                    "unknown model `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// How paragraph-vector similarities become relevance scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreHead {
    /// `cos + 2`.
    #[default]
    Affine,
    /// Three-class logistic regression on the similarity, decoded by expected score.
    Logistic,
}

impl FromStr for ScoreHead {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(ScoreHead::Affine),
            "logistic" => Ok(ScoreHead::Logistic),
            _ => Err(Error::Config(format!(
                "unknown head `{s}`; expected affine or logistic"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ExperimentConfig<T> {
    pub model: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub svr: SvrConfig<T>,
    pub scoring: ScoringParams<T>,
    pub unigram_top_k: usize,
    pub skipgram: SkipgramConfig,
    pub paragraph: ParagraphConfig,
    pub head: ScoreHead,
    /// Evaluate on a seeded random subset of this many labeled instances.
    pub train_size: Option<usize>,
    /// Run folds concurrently. Results are identical either way.
    pub parallel: bool,
}

impl<T: Real> Default for ExperimentConfig<T> {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelKind::Boolean6,
            k: 10,
            seed: 42,
            svr: SvrConfig::default(),
            scoring: ScoringParams::default(),
            unigram_top_k: 200,
            skipgram: SkipgramConfig::default(),
            paragraph: ParagraphConfig::default(),
            head: ScoreHead::Affine,
            train_size: None,
            parallel: false,
        }
    }
}

/// A corpus with its text processor, field indexes and tokenized fields.
pub struct Workspace<'a> {
    pub corpus: &'a Corpus,
    pub processor: TextProcessor,
    pub indexes: FieldIndexes,
    titles: BTreeMap<ProductId, Vec<String>>,
    descriptions: BTreeMap<ProductId, Vec<String>>,
    /// Parallel to `corpus.instances`.
    queries: Vec<Vec<String>>,
}

impl<'a> Workspace<'a> {
    pub fn new(
        corpus: &'a Corpus,
        pipeline: PipelineConfig,
        index_cache: Option<&Path>,
    ) -> Result<Self> {
        let processor = TextProcessor::new(pipeline, corpus)?;
        let indexes = match index_cache {
            Some(path) => FieldIndexes::load_or_build(path, &corpus.products, processor.config())?,
            None => FieldIndexes::build(&corpus.products, processor.config())?,
        };
        let tokenize_field = |field: Field| -> BTreeMap<ProductId, Vec<String>> {
            corpus
                .products
                .par_iter()
                .map(|(&uid, p)| (uid, processor.product_tokens(&field.text(p)).into_vec()))
                .collect()
        };
        let titles = tokenize_field(Field::Title);
        let descriptions = tokenize_field(Field::Description);
        let queries = corpus
            .instances
            .par_iter()
            .map(|i| processor.query_tokens(&i.search_term).into_vec())
            .collect();
        Ok(Workspace {
            corpus,
            processor,
            indexes,
            titles,
            descriptions,
            queries,
        })
    }

    pub fn query(&self, row: usize) -> &[String] {
        &self.queries[row]
    }

    pub fn uid(&self, row: usize) -> ProductId {
        self.corpus.instances[row].product_uid
    }

    pub fn description(&self, row: usize) -> &[String] {
        &self.descriptions[&self.uid(row)]
    }

    /// Search term, title and description tokens concatenated.
    pub fn unigram_document(&self, row: usize) -> Vec<String> {
        let uid = self.uid(row);
        let mut doc = self.queries[row].clone();
        doc.extend(self.titles[&uid].iter().cloned());
        doc.extend(self.descriptions[&uid].iter().cloned());
        doc
    }

    /// Labeled rows, optionally a seeded random subset of `size`, ascending.
    pub fn labeled_rows(&self, size: Option<usize>, seed: u64) -> Vec<usize> {
        let mut rows: Vec<usize> = (0..self.corpus.instances.len())
            .filter(|&r| self.corpus.instances[r].relevance.is_some())
            .collect();
        if let Some(size) = size.filter(|&s| s < rows.len()) {
            rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
            rows.truncate(size);
            rows.sort_unstable();
        }
        rows
    }

    pub fn labels<T: Real>(&self, rows: &[usize]) -> Vec<T> {
        rows.iter()
            .map(|&r| T::of(self.corpus.instances[r].relevance.unwrap_or(f64::NAN)))
            .collect()
    }

    pub fn ids(&self, rows: &[usize]) -> Vec<u64> {
        rows.iter().map(|&r| self.corpus.instances[r].id).collect()
    }

    pub fn boolean_row<T: Real>(&self, row: usize) -> FeatureVector<T> {
        boolean_features(self.query(row), self.uid(row), &self.indexes)
    }

    pub fn ir_full_row<T: Real>(
        &self,
        row: usize,
        params: &ScoringParams<T>,
    ) -> Result<FeatureVector<T>> {
        let mut fv = self.boolean_row(row);
        let index = self.indexes.get(Field::Description);
        let stats = index.stats();
        let (q, uid) = (self.query(row), self.uid(row));
        fv.push(
            "bm25_description",
            bm25_score(q, index, &stats, uid, &params.bm25),
        );
        fv.push(
            "indri_description",
            indri_feature(q, index, &stats, uid, &params.indri)?,
        );
        Ok(fv)
    }

    /// Skipgram training streams: every title and description, and the search terms of `rows`.
    pub fn embedding_streams(&self, rows: &[usize]) -> Vec<Vec<String>> {
        let mut streams: Vec<Vec<String>> = Vec::new();
        streams.extend(self.titles.values().cloned());
        streams.extend(self.descriptions.values().cloned());
        streams.extend(rows.iter().map(|&r| self.queries[r].clone()));
        streams
    }

    pub fn paragraph_documents(&self) -> Vec<(u64, Vec<String>)> {
        self.descriptions
            .iter()
            .map(|(uid, t)| (uid.0, t.clone()))
            .collect()
    }
}

fn matrix<T: Real>(
    rows: &[usize],
    f: impl Fn(usize) -> Result<FeatureVector<T>> + Sync,
) -> Result<(Vec<Vec<T>>, Vec<String>)> {
    let vectors: Vec<FeatureVector<T>> = rows.par_iter().map(|&r| f(r)).collect::<Result<_>>()?;
    let names = vectors
        .first()
        .map(|v| v.names().to_vec())
        .unwrap_or_default();
    Ok((
        vectors
            .into_iter()
            .map(FeatureVector::into_values)
            .collect(),
        names,
    ))
}

/// Top-k unigram counts regressed with an SVR; the vocabulary comes from the
/// training documents only.
#[derive(Debug, Clone)]
pub struct UnigramLearner<T> {
    pub top_k: usize,
    pub svr: SvrConfig<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct UnigramModel<T> {
    pub vocabulary: UnigramVocabulary,
    pub svr: SvrModel<T>,
}

impl<T: Real> Learner<Vec<String>, T> for UnigramLearner<T> {
    type Model = UnigramModel<T>;

    fn fit(&self, docs: &[Vec<String>], labels: &[T]) -> Result<UnigramModel<T>> {
        let vocabulary = UnigramVocabulary::select(docs.iter().map(Vec::as_slice), self.top_k);
        let names: Vec<String> = vocabulary
            .terms()
            .iter()
            .map(|t| format!("unigram_{t}"))
            .collect();
        let rows: Vec<Vec<T>> = docs
            .iter()
            .map(|d| vocabulary.features::<T>(d).into_values())
            .collect();
        let svr = SvrLearner {
            config: self.svr,
            feature_names: names,
        }
        .fit(&rows, labels)?;
        Ok(UnigramModel { vocabulary, svr })
    }
}

impl<T: Real> Predictor<Vec<String>, T> for UnigramModel<T> {
    fn predict(&self, doc: &Vec<String>) -> Result<T> {
        self.svr
            .predict(&self.vocabulary.features::<T>(doc).into_values())
    }
}

/// Scores already computed per row, passed through unchanged.
struct Passthrough;

struct First;

impl<T: Real> Predictor<Vec<T>, T> for First {
    fn predict(&self, row: &Vec<T>) -> Result<T> {
        Ok(row[0])
    }
}

impl<T: Real> Learner<Vec<T>, T> for Passthrough {
    type Model = First;

    fn fit(&self, _: &[Vec<T>], _: &[T]) -> Result<First> {
        Ok(First)
    }
}

/// Cross-validated evaluation of one model over `rows` of the workspace.
pub struct Evaluation<T> {
    pub rows: Vec<usize>,
    pub ids: Vec<u64>,
    pub gold: Vec<T>,
    pub outcome: CvOutcome<T>,
    pub embedding_log: Option<TrainingLog>,
}

fn svr_learner<T: Real>(config: &ExperimentConfig<T>, names: Vec<String>) -> SvrLearner<T> {
    SvrLearner {
        config: config.svr,
        feature_names: names,
    }
}

pub fn evaluate<T: Real>(
    ws: &Workspace<'_>,
    config: &ExperimentConfig<T>,
) -> Result<Evaluation<T>> {
    let rows = ws.labeled_rows(config.train_size, config.seed);
    let gold: Vec<T> = ws.labels(&rows);
    let name = config.model.name();
    let (k, seed, parallel) = (config.k, config.seed, config.parallel);
    let mut embedding_log = None;
    let outcome = match config.model {
        ModelKind::Boolean6 => {
            let (x, names) = matrix(&rows, |r| Ok(ws.boolean_row::<T>(r)))?;
            kfold_cv(
                name,
                &x,
                &gold,
                k,
                seed,
                &svr_learner(config, names),
                parallel,
            )?
        }
        ModelKind::IrFull => {
            let (x, names) = matrix(&rows, |r| ws.ir_full_row(r, &config.scoring))?;
            kfold_cv(
                name,
                &x,
                &gold,
                k,
                seed,
                &svr_learner(config, names),
                parallel,
            )?
        }
        ModelKind::Unigram => {
            let docs: Vec<Vec<String>> = rows.par_iter().map(|&r| ws.unigram_document(r)).collect();
            let learner = UnigramLearner {
                top_k: config.unigram_top_k,
                svr: config.svr,
            };
            kfold_cv(name, &docs, &gold, k, seed, &learner, parallel)?
        }
        ModelKind::Stacked => {
            let docs: Vec<Vec<String>> = rows.par_iter().map(|&r| ws.unigram_document(r)).collect();
            let (meta, mut names) = matrix(&rows, |r| Ok(ws.boolean_row::<T>(r)))?;
            names.push("unigram_prediction".into());
            let base = UnigramLearner {
                top_k: config.unigram_top_k,
                svr: config.svr,
            };
            let (_, outcome, audit) = train_stacked(
                name,
                &docs,
                &meta,
                &gold,
                k,
                seed,
                &base,
                &svr_learner(config, names),
            )?;
            debug_assert!(audit.is_clean());
            outcome
        }
        ModelKind::Word2vec | ModelKind::Combined => {
            let (table, log) = train_skipgram::<T>(&ws.embedding_streams(&rows), &config.skipgram)?;
            embedding_log = Some(log);
            let scores: Vec<T> = rows
                .par_iter()
                .map(|&r| score_word2vec(ws.query(r), ws.description(r), &table))
                .collect();
            if config.model == ModelKind::Word2vec {
                let x: Vec<Vec<T>> = scores.iter().map(|&s| vec![s]).collect();
                kfold_cv(name, &x, &gold, k, seed, &Passthrough, parallel)?
            } else {
                let (mut x, mut names) = matrix(&rows, |r| Ok(ws.boolean_row::<T>(r)))?;
                for (row, s) in x.iter_mut().zip(scores) {
                    row.push(s);
                }
                names.push("word2vec_score".into());
                kfold_cv(
                    name,
                    &x,
                    &gold,
                    k,
                    seed,
                    &svr_learner(config, names),
                    parallel,
                )?
            }
        }
        ModelKind::Doc2vec => {
            let (pv, log) =
                ParagraphVectors::<T>::train(&ws.paragraph_documents(), &config.paragraph)?;
            embedding_log = Some(log);
            let x: Vec<Vec<T>> = rows
                .par_iter()
                .map(|&r| vec![pv.score(ws.query(r), ws.uid(r).0, ws.description(r))])
                .collect();
            match config.head {
                ScoreHead::Affine => kfold_cv(name, &x, &gold, k, seed, &Passthrough, parallel)?,
                ScoreHead::Logistic => kfold_cv(
                    name,
                    &x,
                    &gold,
                    k,
                    seed,
                    &LogisticLearner::default(),
                    parallel,
                )?,
            }
        }
    };
    let mut outcome = outcome;
    outcome.report.settings = serde_json::to_value(config)?;
    Ok(Evaluation {
        ids: ws.ids(&rows),
        rows,
        gold,
        outcome,
        embedding_log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub enum Payload<T> {
    Svr {
        svr: SvrModel<T>,
    },
    Unigram {
        model: UnigramModel<T>,
    },
    Word2vec {
        table: EmbeddingTable<T>,
    },
    Doc2vec {
        vectors: ParagraphVectors<T>,
        head: Option<SimilarityClassifier<T>>,
    },
    Stacked {
        model: StackedModel<UnigramModel<T>, SvrModel<T>>,
    },
    Combined {
        table: EmbeddingTable<T>,
        svr: SvrModel<T>,
    },
}

/// Everything needed to score new (query, product) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct TrainedModel<T> {
    pub format: String,
    pub version: u32,
    pub model: ModelKind,
    pub pipeline: PipelineConfig,
    pub scoring: ScoringParams<T>,
    pub payload: Payload<T>,
}

pub const TRAINED_FORMAT: &str = "prodrel-model";
pub const TRAINED_VERSION: u32 = 1;

/// Trains the configured model on every labeled row.
pub fn train<T: Real>(ws: &Workspace<'_>, config: &ExperimentConfig<T>) -> Result<TrainedModel<T>> {
    let rows = ws.labeled_rows(config.train_size, config.seed);
    let gold: Vec<T> = ws.labels(&rows);
    let payload = match config.model {
        ModelKind::Boolean6 => {
            let (x, names) = matrix(&rows, |r| Ok(ws.boolean_row::<T>(r)))?;
            Payload::Svr {
                svr: svr_learner(config, names).fit(&x, &gold)?,
            }
        }
        ModelKind::IrFull => {
            let (x, names) = matrix(&rows, |r| ws.ir_full_row(r, &config.scoring))?;
            Payload::Svr {
                svr: svr_learner(config, names).fit(&x, &gold)?,
            }
        }
        ModelKind::Unigram => {
            let docs: Vec<Vec<String>> = rows.par_iter().map(|&r| ws.unigram_document(r)).collect();
            let learner = UnigramLearner {
                top_k: config.unigram_top_k,
                svr: config.svr,
            };
            Payload::Unigram {
                model: learner.fit(&docs, &gold)?,
            }
        }
        ModelKind::Stacked => {
            let docs: Vec<Vec<String>> = rows.par_iter().map(|&r| ws.unigram_document(r)).collect();
            let (meta, mut names) = matrix(&rows, |r| Ok(ws.boolean_row::<T>(r)))?;
            names.push("unigram_prediction".into());
            let base = UnigramLearner {
                top_k: config.unigram_top_k,
                svr: config.svr,
            };
            let (model, _, _) = train_stacked(
                config.model.name(),
                &docs,
                &meta,
                &gold,
                config.k,
                config.seed,
                &base,
                &svr_learner(config, names),
            )?;
            Payload::Stacked { model }
        }
        ModelKind::Word2vec => Payload::Word2vec {
            table: train_skipgram::<T>(&ws.embedding_streams(&rows), &config.skipgram)?.0,
        },
        ModelKind::Combined => {
            let table = train_skipgram::<T>(&ws.embedding_streams(&rows), &config.skipgram)?.0;
            let (mut x, mut names) = matrix(&rows, |r| Ok(ws.boolean_row::<T>(r)))?;
            for (row, &r) in x.iter_mut().zip(&rows) {
                row.push(score_word2vec(ws.query(r), ws.description(r), &table));
            }
            names.push("word2vec_score".into());
            Payload::Combined {
                svr: svr_learner(config, names).fit(&x, &gold)?,
                table,
            }
        }
        ModelKind::Doc2vec => {
            let vectors =
                ParagraphVectors::<T>::train(&ws.paragraph_documents(), &config.paragraph)?.0;
            let head = match config.head {
                ScoreHead::Affine => None,
                ScoreHead::Logistic => {
                    let x: Vec<Vec<T>> = rows
                        .par_iter()
                        .map(|&r| vec![vectors.score(ws.query(r), ws.uid(r).0, ws.description(r))])
                        .collect();
                    Some(LogisticLearner::default().fit(&x, &gold)?)
                }
            };
            Payload::Doc2vec { vectors, head }
        }
    };
    Ok(TrainedModel {
        format: TRAINED_FORMAT.into(),
        version: TRAINED_VERSION,
        model: config.model,
        pipeline: ws.processor.config().clone(),
        scoring: config.scoring,
        payload,
    })
}

impl<T: Real> TrainedModel<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel<T> =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if model.format != TRAINED_FORMAT || model.version != TRAINED_VERSION {
            return Err(Error::ModelFormat(format!(
                "expected {TRAINED_FORMAT} v{TRAINED_VERSION}, found {} v{}",
                model.format, model.version
            )));
        }
        Ok(model)
    }

    /// Relevance in [1, 3] for the given instance rows of `ws`.
    pub fn predict(&self, ws: &Workspace<'_>, rows: &[usize]) -> Result<Vec<T>> {
        rows.par_iter().map(|&r| self.predict_row(ws, r)).collect()
    }

    fn predict_row(&self, ws: &Workspace<'_>, r: usize) -> Result<T> {
        match &self.payload {
            Payload::Svr { svr } => {
                let fv = if self.model == ModelKind::IrFull {
                    ws.ir_full_row(r, &self.scoring)?
                } else {
                    ws.boolean_row(r)
                };
                svr.predict(fv.values())
            }
            Payload::Unigram { model } => model.predict(&ws.unigram_document(r)),
            Payload::Stacked { model } => {
                model.predict(&ws.unigram_document(r), ws.boolean_row::<T>(r).values())
            }
            Payload::Word2vec { table } => {
                Ok(score_word2vec(ws.query(r), ws.description(r), table))
            }
            Payload::Combined { table, svr } => {
                let mut row = ws.boolean_row::<T>(r).into_values();
                row.push(score_word2vec(ws.query(r), ws.description(r), table));
                svr.predict(&row)
            }
            Payload::Doc2vec { vectors, head } => {
                let s = vectors.score(ws.query(r), ws.uid(r).0, ws.description(r));
                match head {
                    Some(h) => h.predict(&vec![s]),
                    None => Ok(s),
                }
            }
        }
    }
}
