//! Run settings as `key = value` text. Later assignments override earlier ones, so
//! command-line overrides are simply appended after the file.
//!
//! ```text
//! # comment
//! model = boolean6
//! gamma = 0.01
//! ```
//!
//! | key | meaning |
//! |-----|---------|
//! | `model` | unigram, boolean6, ir_full, word2vec, doc2vec, stacked, combined |
//! | `k`, `seed` | folds and the seed for every random choice |
//! | `gamma`, `c`, `epsilon`, `tolerance`, `max_iterations` | SVR |
//! | `lambda`, `mu`, `k1`, `b` | query likelihood and BM25 |
//! | `top_k` | unigram vocabulary size |
//! | `train_size` | evaluate on a random subset of labeled rows |
//! | `head` | affine or logistic scoring of paragraph-vector similarity |
//! | `parallel` | run folds concurrently |
//! | `dim`, `window`, `negatives`, `epochs`, `learning_rate`, `min_count`, `subsample`, `threads` | skipgram (`dim` also sets paragraph vectors) |
//! | `paragraph_epochs`, `infer_epochs` | paragraph vectors |
//! | `stopwords` | path of a stopword list, one word per line |
//! | `remove_stopwords`, `stem`, `spell_correct`, `max_edit_distance`, `canonicalize_numbers` | text pipeline |

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::ExperimentConfig;
use crate::scalar::Real;
use crate::text::{parse_word_list, PipelineConfig};

/// Ordered `(key, value)` assignments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings {
    entries: Vec<(String, String)>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Settings { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Applies every assignment in order to the defaults.
    pub fn build<T: Real>(&self) -> Result<(ExperimentConfig<T>, PipelineConfig)> {
        let mut exp = ExperimentConfig::<T>::default();
        let mut pipe = PipelineConfig::default();
        for (key, value) in &self.entries {
            apply(&mut exp, &mut pipe, key, value)?;
        }
        if exp.k < 2 {
            return Err(Error::Config(format!(
                "k must be at least 2, got {}",
                exp.k
            )));
        }
        exp.svr.validate()?;
        exp.scoring.indri.validate()?;
        exp.scoring.bm25.validate()?;
        exp.skipgram.validate()?;
        exp.paragraph.embedding.validate()?;
        pipe.validate()?;
        Ok((exp, pipe))
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn real<T: Real>(key: &str, value: &str) -> Result<T> {
    let v: f64 = parse(key, value)?;
    if !v.is_finite() {
        return Err(Error::Config(format!("`{key}` must be finite")));
    }
    Ok(T::of(v))
}

fn apply<T: Real>(
    exp: &mut ExperimentConfig<T>,
    pipe: &mut PipelineConfig,
    key: &str,
    value: &str,
) -> Result<()> {
    match key {
        "model" => exp.model = parse(key, value)?,
        "k" => exp.k = parse(key, value)?,
        "seed" => {
            exp.seed = parse(key, value)?;
            exp.skipgram.seed = exp.seed;
            exp.paragraph.embedding.seed = exp.seed;
        }
        "gamma" => exp.svr.gamma = real(key, value)?,
        "c" => exp.svr.c = real(key, value)?,
        "epsilon" => exp.svr.epsilon = real(key, value)?,
        "tolerance" => exp.svr.tolerance = real(key, value)?,
        "max_iterations" => exp.svr.max_iterations = parse(key, value)?,
        "lambda" => exp.scoring.indri.lambda = real(key, value)?,
        "mu" => exp.scoring.indri.mu = real(key, value)?,
        "k1" => exp.scoring.bm25.k1 = real(key, value)?,
        "b" => exp.scoring.bm25.b = real(key, value)?,
        "top_k" => exp.unigram_top_k = parse(key, value)?,
        "train_size" => exp.train_size = Some(parse(key, value)?),
        "head" => exp.head = parse(key, value)?,
        "parallel" => exp.parallel = parse(key, value)?,
        "dim" => {
            exp.skipgram.dimension = parse(key, value)?;
            exp.paragraph.embedding.dimension = exp.skipgram.dimension;
        }
        "window" => exp.skipgram.window = parse(key, value)?,
        "negatives" => {
            exp.skipgram.negatives = parse(key, value)?;
            exp.paragraph.embedding.negatives = exp.skipgram.negatives;
        }
        "epochs" => exp.skipgram.epochs = parse(key, value)?,
        "learning_rate" => {
            exp.skipgram.initial_learning_rate = parse(key, value)?;
            exp.paragraph.embedding.initial_learning_rate = exp.skipgram.initial_learning_rate;
        }
        "min_count" => {
            exp.skipgram.min_count = parse(key, value)?;
            exp.paragraph.embedding.min_count = exp.skipgram.min_count;
        }
        "subsample" => {
            exp.skipgram.subsample_threshold = parse(key, value)?;
            exp.paragraph.embedding.subsample_threshold = exp.skipgram.subsample_threshold;
        }
        "threads" => exp.skipgram.threads = parse(key, value)?,
        "paragraph_epochs" => exp.paragraph.embedding.epochs = parse(key, value)?,
        "infer_epochs" => exp.paragraph.infer_epochs = parse(key, value)?,
        "stopwords" => {
            let path = Path::new(value);
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            pipe.stopwords = parse_word_list(&text);
        }
        "remove_stopwords" => pipe.remove_stopwords = parse(key, value)?,
        "stem" => pipe.stem = parse(key, value)?,
        "spell_correct" => pipe.spell_correct = parse(key, value)?,
        "max_edit_distance" => pipe.max_edit_distance = parse(key, value)?,
        "canonicalize_numbers" => pipe.canonicalize_numbers = parse(key, value)?,
        _ => return Err(Error::Config(format!("unknown setting `{key}`"))),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelKind, ScoreHead};

    #[test]
    fn file_then_overrides() {
        let mut s =
            Settings::parse("# run\nmodel = ir_full\ngamma=0.5\n\nk = 5 # folds\n").unwrap();
        s.set("gamma", 0.01);
        s.set("stem", false);
        s.set("head", "logistic");
        let (exp, pipe) = s.build::<f64>().unwrap();
        assert_eq!(exp.model, ModelKind::IrFull);
        assert_eq!(exp.svr.gamma, 0.01);
        assert_eq!(exp.k, 5);
        assert_eq!(exp.head, ScoreHead::Logistic);
        assert!(!pipe.stem);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Settings::parse("model boolean6").is_err());
        assert!(Settings::parse("colour = red")
            .unwrap()
            .build::<f64>()
            .is_err());
        assert!(Settings::parse("model = svm")
            .unwrap()
            .build::<f64>()
            .is_err());
        assert!(Settings::parse("gamma = -1")
            .unwrap()
            .build::<f64>()
            .is_err());
        assert!(Settings::parse("k = 1").unwrap().build::<f64>().is_err());
        assert!(Settings::parse("lambda = 2")
            .unwrap()
            .build::<f32>()
            .is_err());
    }

    #[test]
    fn seed_reaches_embeddings() {
        let (exp, _) = Settings::parse("seed = 9\ndim = 8")
            .unwrap()
            .build::<f32>()
            .unwrap();
        assert_eq!(exp.skipgram.seed, 9);
        assert_eq!(exp.paragraph.embedding.seed, 9);
        assert_eq!(exp.paragraph.embedding.dimension, 8);
    }
}
