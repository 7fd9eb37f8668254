//! Skipgram word vectors with negative sampling, distributed-bag-of-words paragraph
//! vectors, and cosine scorers mapped onto the relevance range.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

/// Token → dense vector, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable<T>", into = "RawTable<T>")]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct EmbeddingTable<T> {
    dimension: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct RawTable<T> {
    dimension: usize,
    tokens: Vec<String>,
    data: Vec<T>,
}

impl<T: Real> TryFrom<RawTable<T>> for EmbeddingTable<T> {
    type Error = Error;

    fn try_from(raw: RawTable<T>) -> Result<Self> {
        EmbeddingTable::new(raw.dimension, raw.tokens, raw.data)
    }
}

impl<T: Real> From<EmbeddingTable<T>> for RawTable<T> {
    fn from(t: EmbeddingTable<T>) -> Self {
        RawTable {
            dimension: t.dimension,
            tokens: t.tokens,
            data: t.data,
        }
    }
}

impl<T: Real> EmbeddingTable<T> {
    /// `data` holds `tokens.len() * dimension` finite values, one row per token.
    pub fn new(dimension: usize, tokens: Vec<String>, data: Vec<T>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParams(
                "embedding dimension must be positive".into(),
            ));
        }
        if data.len() != tokens.len() * dimension {
            return Err(Error::DimensionMismatch {
                expected: tokens.len() * dimension,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::EmbeddingFormat("non-finite vector entry".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::EmbeddingFormat(format!("duplicate token `{t}`")));
            }
        }
        Ok(EmbeddingTable {
            dimension,
            tokens,
            index,
            data,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<&[T]> {
        self.index.get(token).map(|&i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Plain-text format: `vocab_size dimension` header, then `token v1 … vd` per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.vocab_size(), self.dimension);
        for (i, t) in self.tokens.iter().enumerate() {
            out.push_str(t);
            for v in self.row(i) {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::EmbeddingFormat("missing header".into()))?;
        let mut parts = header.split_whitespace();
        let mut header_field = |name: &str| -> Result<usize> {
            parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::EmbeddingFormat(format!("bad header: missing {name}")))
        };
        let vocab_size = header_field("vocab size")?;
        let dimension = header_field("dimension")?;
        let mut tokens = Vec::with_capacity(vocab_size);
        let mut data = Vec::with_capacity(vocab_size * dimension);
        for (n, line) in lines.enumerate() {
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-empty line has a first field");
            let before = data.len();
            for f in fields {
                let v: f64 = f.parse().map_err(|_| {
                    Error::EmbeddingFormat(format!("line {}: bad number `{f}`", n + 2))
                })?;
                data.push(T::of(v));
            }
            if data.len() - before != dimension {
                return Err(Error::EmbeddingFormat(format!(
                    "line {}: expected {dimension} values, found {}",
                    n + 2,
                    data.len() - before
                )));
            }
            tokens.push(token.to_string());
        }
        if tokens.len() != vocab_size {
            return Err(Error::EmbeddingFormat(format!(
                "header declares {vocab_size} tokens, found {}",
                tokens.len()
            )));
        }
        EmbeddingTable::new(dimension, tokens, data)
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipgramConfig {
    pub dimension: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Decayed linearly towards zero over all epochs.
    pub initial_learning_rate: f64,
    pub min_count: u64,
    pub subsample_threshold: f64,
    pub seed: u64,
    /// 1 trains sequentially and is reproducible bit for bit. More threads train
    /// shards on copies of the parameters and average them after every epoch.
    pub threads: usize,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        SkipgramConfig {
            dimension: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            initial_learning_rate: 0.025,
            min_count: 5,
            subsample_threshold: 1e-3,
            seed: 1,
            threads: 1,
        }
    }
}

impl SkipgramConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.dimension > 0
            && self.window > 0
            && self.negatives > 0
            && self.epochs > 0
            && self.min_count > 0
            && self.threads > 0
            && self.initial_learning_rate > 0.0
            && self.subsample_threshold > 0.0;
        if positive {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "embedding settings must be positive: {self:?}"
            )))
        }
    }
}

/// Mean per-pair loss of each epoch, measured before each update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epoch_losses: Vec<f64>,
    pub pairs: Vec<u64>,
}

/// Vocabulary ordered by descending count (ties lexicographic) with the
/// noise distribution `count^0.75`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
struct Vocab {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    cumulative: Vec<f64>,
    total: u64,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl From<VocabFile> for Vocab {
    fn from(f: VocabFile) -> Self {
        Vocab::from_parts(f.tokens, f.counts)
    }
}

impl From<Vocab> for VocabFile {
    fn from(v: Vocab) -> Self {
        VocabFile {
            tokens: v.tokens,
            counts: v.counts,
        }
    }
}

impl Vocab {
    fn build<'a, I>(streams: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for s in streams {
            for t in s {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        if kept.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Ok(Vocab::from_parts(
            kept.iter().map(|(t, _)| t.to_string()).collect(),
            kept.iter().map(|&(_, c)| c).collect(),
        ))
    }

    fn from_parts(tokens: Vec<String>, counts: Vec<u64>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Vocab {
            total: counts.iter().sum(),
            tokens,
            counts,
            index,
            cumulative,
        }
    }

    fn len(&self) -> usize {
        self.tokens.len()
    }

    fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .filter_map(|t| self.index.get(t).copied())
            .collect()
    }

    fn sample_noise(&self, rng: &mut ChaCha8Rng) -> usize {
        let r = rng.gen::<f64>() * self.cumulative[self.cumulative.len() - 1];
        self.cumulative
            .partition_point(|&c| c <= r)
            .min(self.len() - 1)
    }

    /// Frequent-word subsampling: keep with probability `(√(f/t) + 1)·t/f`, `t = threshold·total`.
    fn keep(&self, word: usize, threshold: f64, rng: &mut ChaCha8Rng) -> bool {
        let f = self.counts[word] as f64;
        let t = threshold * self.total as f64;
        let p = ((f / t).sqrt() + 1.0) * t / f;
        p >= 1.0 || rng.gen::<f64>() < p
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn log_sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Loss and gradients of one negative-sampling pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient<T> {
    pub loss: T,
    pub input: Vec<T>,
    pub positive: Vec<T>,
    pub negatives: Vec<Vec<T>>,
}

/// `−log σ(u⁺·v) − Σ log σ(−uₙ·v)` for input vector `v`, positive output `u⁺`
/// and negative outputs `uₙ`.
pub fn pair_loss_and_grad<T: Real>(
    input: &[T],
    positive: &[T],
    negatives: &[&[T]],
) -> PairGradient<T> {
    let dim = input.len();
    let mut d_input = vec![T::zero(); dim];
    let s = dot(positive, input);
    let g = sigmoid(s) - T::one();
    let mut loss = -log_sigmoid(s);
    for (d, &u) in d_input.iter_mut().zip(positive) {
        *d += g * u;
    }
    let d_positive = input.iter().map(|&v| g * v).collect();
    let mut d_negatives = Vec::with_capacity(negatives.len());
    for &neg in negatives {
        let s = dot(neg, input);
        let g = sigmoid(s);
        loss -= log_sigmoid(-s);
        for (d, &u) in d_input.iter_mut().zip(neg) {
            *d += g * u;
        }
        d_negatives.push(input.iter().map(|&v| g * v).collect());
    }
    PairGradient {
        loss,
        input: d_input,
        positive: d_positive,
        negatives: d_negatives,
    }
}

/// One SGD step on a pair, in place: every output row moves along its gradient
/// computed with the old input, then the input moves along the accumulated
/// gradient. Returns the loss before the step. Negatives equal to the target are skipped.
fn sgd_pair<T: Real>(
    input: &mut [T],
    outputs: &mut [T],
    target: usize,
    negatives: &[usize],
    lr: T,
    grad: &mut [T],
) -> T {
    let dim = input.len();
    grad.iter_mut().for_each(|g| *g = T::zero());
    let mut loss = T::zero();
    let targets = std::iter::once((target, true)).chain(
        negatives
            .iter()
            .filter(|&&n| n != target)
            .map(|&n| (n, false)),
    );
    for (word, positive) in targets {
        let out = &mut outputs[word * dim..(word + 1) * dim];
        let s = dot(out, input);
        let g = if positive {
            loss -= log_sigmoid(s);
            sigmoid(s) - T::one()
        } else {
            loss -= log_sigmoid(-s);
            sigmoid(s)
        };
        for ((acc, o), &v) in grad.iter_mut().zip(out.iter_mut()).zip(input.iter()) {
            *acc += g * *o;
            *o -= lr * g * v;
        }
    }
    for (v, &g) in input.iter_mut().zip(grad.iter()) {
        *v -= lr * g;
    }
    loss
}

/// Loss and input gradient of one document under the bag-of-words objective:
/// the pair loss summed over `(word, negatives)` with the document vector as input.
pub fn doc_loss_and_grad<T: Real>(doc: &[T], words: &[(&[T], Vec<&[T]>)]) -> (T, Vec<T>) {
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); doc.len()];
    for (positive, negatives) in words {
        let g = pair_loss_and_grad(doc, positive, negatives);
        loss += g.loss;
        for (a, b) in grad.iter_mut().zip(g.input) {
            *a += b;
        }
    }
    (loss, grad)
}

fn init_rows<T: Real>(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let scale = 1.0 / dim as f64;
    (0..rows * dim)
        .map(|_| T::of((rng.gen::<f64>() - 0.5) * scale))
        .collect()
}

fn learning_rate<T: Real>(config: &SkipgramConfig, processed: u64, budget: u64) -> T {
    let frac = 1.0 - processed as f64 / (budget as f64 + 1.0);
    T::of(config.initial_learning_rate * frac.max(1e-4))
}

struct Progress {
    processed: u64,
    /// Each shard's local word count is multiplied by this to estimate global progress.
    scale: u64,
    budget: u64,
}

#[derive(Clone)]
struct SkipgramParams<T> {
    inputs: Vec<T>,
    outputs: Vec<T>,
}

fn skipgram_epoch<T: Real>(
    params: &mut SkipgramParams<T>,
    sentences: &[Vec<usize>],
    vocab: &Vocab,
    config: &SkipgramConfig,
    rng: &mut ChaCha8Rng,
    progress: &mut Progress,
) -> (f64, u64) {
    let dim = config.dimension;
    let mut grad = vec![T::zero(); dim];
    let mut negatives = vec![0usize; config.negatives];
    let mut kept = Vec::new();
    let mut loss_sum = 0.0;
    let mut pairs = 0u64;
    for sentence in sentences {
        kept.clear();
        kept.extend(
            sentence
                .iter()
                .copied()
                .filter(|&w| vocab.keep(w, config.subsample_threshold, rng)),
        );
        for pos in 0..kept.len() {
            let lr =
                learning_rate::<T>(config, progress.processed * progress.scale, progress.budget);
            let span = config.window - rng.gen_range(0..config.window);
            let lo = pos.saturating_sub(span);
            let hi = (pos + span).min(kept.len() - 1);
            for ctx in lo..=hi {
                if ctx == pos {
                    continue;
                }
                for n in negatives.iter_mut() {
                    *n = vocab.sample_noise(rng);
                }
                let center = kept[pos];
                let input = &mut params.inputs[center * dim..(center + 1) * dim];
                let loss = sgd_pair(
                    input,
                    &mut params.outputs,
                    kept[ctx],
                    &negatives,
                    lr,
                    &mut grad,
                );
                loss_sum += loss.to_f64_lossy();
                pairs += 1;
            }
        }
        progress.processed += sentence.len() as u64;
    }
    (loss_sum, pairs)
}

/// Trains skipgram vectors with negative sampling over preprocessed token streams.
pub fn train_skipgram<T: Real>(
    streams: &[Vec<String>],
    config: &SkipgramConfig,
) -> Result<(EmbeddingTable<T>, TrainingLog)> {
    config.validate()?;
    let vocab = Vocab::build(streams.iter().map(Vec::as_slice), config.min_count)?;
    let sentences: Vec<Vec<usize>> = streams
        .iter()
        .map(|s| vocab.encode(s))
        .filter(|s| s.len() > 1)
        .collect();
    let words: u64 = sentences.iter().map(|s| s.len() as u64).sum();
    let budget = words * config.epochs as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = SkipgramParams {
        inputs: init_rows::<T>(vocab.len(), config.dimension, &mut rng),
        outputs: vec![T::zero(); vocab.len() * config.dimension],
    };
    let mut log = TrainingLog::default();
    let shards = config.threads.min(sentences.len().max(1));
    for epoch in 0..config.epochs {
        let (loss, pairs) = if shards <= 1 {
            let mut progress = Progress {
                processed: epoch as u64 * words,
                scale: 1,
                budget,
            };
            skipgram_epoch(
                &mut params,
                &sentences,
                &vocab,
                config,
                &mut rng,
                &mut progress,
            )
        } else {
            let chunk = sentences.len().div_ceil(shards);
            let results: Vec<(SkipgramParams<T>, f64, u64)> = sentences
                .par_chunks(chunk)
                .enumerate()
                .map(|(shard, part)| {
                    let mut local = params.clone();
                    let mut shard_rng = ChaCha8Rng::seed_from_u64(config.seed);
                    shard_rng.set_stream((epoch * shards + shard + 1) as u64);
                    let mut progress = Progress {
                        processed: epoch as u64 * words / shards as u64,
                        scale: shards as u64,
                        budget,
                    };
                    let (l, p) = skipgram_epoch(
                        &mut local,
                        part,
                        &vocab,
                        config,
                        &mut shard_rng,
                        &mut progress,
                    );
                    (local, l, p)
                })
                .collect();
            let k = T::of_count(results.len());
            params.inputs.iter_mut().for_each(|v| *v = T::zero());
            params.outputs.iter_mut().for_each(|v| *v = T::zero());
            let (mut loss, mut pairs) = (0.0, 0);
            for (local, l, p) in results {
                for (a, b) in params.inputs.iter_mut().zip(local.inputs) {
                    *a += b / k;
                }
                for (a, b) in params.outputs.iter_mut().zip(local.outputs) {
                    *a += b / k;
                }
                loss += l;
                pairs += p;
            }
            (loss, pairs)
        };
        let mean = if pairs == 0 { 0.0 } else { loss / pairs as f64 };
        log::info!(
            "skipgram epoch {} mean pair loss {mean:.6} over {pairs} pairs",
            epoch + 1
        );
        log.epoch_losses.push(mean);
        log.pairs.push(pairs);
    }
    let table = EmbeddingTable::new(config.dimension, vocab.tokens.clone(), params.inputs)?;
    Ok((table, log))
}

/// Mean of the in-vocabulary token vectors; unknown tokens are skipped.
pub fn average_vector<T: Real>(tokens: &[String], table: &EmbeddingTable<T>) -> Result<Vec<T>> {
    let mut sum = vec![T::zero(); table.dimension()];
    let mut n = 0usize;
    for v in tokens.iter().filter_map(|t| table.get(t)) {
        for (s, &x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::AllTokensUnknown);
    }
    let n = T::of_count(n);
    Ok(sum.into_iter().map(|s| s / n).collect())
}

pub fn cosine<T: Real>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).max(-T::one()).min(T::one()))
}

/// `cos + 2`, sending [−1, 1] onto [1, 3]. Inputs within 1e-9 of the interval are clamped.
pub fn similarity_to_relevance<T: Real>(cos: T) -> Result<T> {
    let slack = T::of(1e-9);
    if !(cos >= -T::one() - slack && cos <= T::one() + slack) {
        return Err(Error::SimilarityOutOfRange(cos.to_f64_lossy()));
    }
    Ok(cos.max(-T::one()).min(T::one()) + T::of(2.0))
}

/// Relevance returned when either side has no usable vector.
pub const FALLBACK_RELEVANCE: f64 = 2.0;

/// Cosine of the averaged query and description vectors, mapped to [1, 3];
/// 2.0 when either side is entirely out of vocabulary.
pub fn score_word2vec<T: Real>(
    query: &[String],
    description: &[String],
    table: &EmbeddingTable<T>,
) -> T {
    let score = || -> Result<T> {
        let q = average_vector(query, table)?;
        let d = average_vector(description, table)?;
        similarity_to_relevance(cosine(&q, &d)?)
    };
    score().unwrap_or_else(|_| T::of(FALLBACK_RELEVANCE))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphConfig {
    /// Dimension, negatives, epochs, learning rate, min count, subsampling and seed.
    /// `window` and `threads` are unused.
    pub embedding: SkipgramConfig,
    /// Gradient passes when inferring a vector for unseen text.
    pub infer_epochs: usize,
}

impl Default for ParagraphConfig {
    fn default() -> Self {
        ParagraphConfig {
            embedding: SkipgramConfig {
                epochs: 10,
                ..SkipgramConfig::default()
            },
            infer_epochs: 20,
        }
    }
}

/// Document vectors trained to predict their own words, plus the frozen word
/// output vectors used to infer vectors for new text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ParagraphVectors<T> {
    config: ParagraphConfig,
    vocab: Vocab,
    outputs: Vec<T>,
    /// Keyed by document id in decimal. Documents with no in-vocabulary word are absent.
    docs: EmbeddingTable<T>,
}

enum Outputs<'a, T> {
    Train(&'a mut [T]),
    Frozen(&'a [T]),
}

#[allow(clippy::too_many_arguments)]
fn paragraph_epoch<T: Real>(
    doc: &mut [T],
    words: &[usize],
    outputs: &mut Outputs<'_, T>,
    vocab: &Vocab,
    config: &SkipgramConfig,
    lr: T,
    rng: &mut ChaCha8Rng,
    grad: &mut [T],
    negatives: &mut [usize],
) -> (f64, u64) {
    let mut loss = 0.0;
    let mut pairs = 0;
    for &w in words {
        if !vocab.keep(w, config.subsample_threshold, rng) {
            continue;
        }
        for n in negatives.iter_mut() {
            *n = vocab.sample_noise(rng);
        }
        let l = match outputs {
            Outputs::Frozen(outputs) => {
                let dim = doc.len();
                let mut scratch: Vec<T> = Vec::with_capacity((negatives.len() + 1) * dim);
                let ids: Vec<usize> = std::iter::once(w)
                    .chain(negatives.iter().copied().filter(|&n| n != w))
                    .collect();
                for &id in &ids {
                    scratch.extend_from_slice(&outputs[id * dim..(id + 1) * dim]);
                }
                let local: Vec<usize> = (1..ids.len()).collect();
                sgd_pair(doc, &mut scratch, 0, &local, lr, grad)
            }
            Outputs::Train(outputs) => sgd_pair(doc, outputs, w, negatives, lr, grad),
        };
        loss += l.to_f64_lossy();
        pairs += 1;
    }
    (loss, pairs)
}

impl<T: Real> ParagraphVectors<T> {
    /// Trains on `(id, tokens)` documents.
    pub fn train(
        documents: &[(u64, Vec<String>)],
        config: &ParagraphConfig,
    ) -> Result<(Self, TrainingLog)> {
        let ec = &config.embedding;
        ec.validate()?;
        if config.infer_epochs == 0 {
            return Err(Error::InvalidParams("infer_epochs must be positive".into()));
        }
        let vocab = Vocab::build(documents.iter().map(|(_, t)| t.as_slice()), ec.min_count)?;
        let encoded: Vec<(u64, Vec<usize>)> = documents
            .iter()
            .map(|(id, t)| (*id, vocab.encode(t)))
            .filter(|(_, w)| !w.is_empty())
            .collect();
        let dim = ec.dimension;
        let mut rng = ChaCha8Rng::seed_from_u64(ec.seed);
        let mut doc_data = init_rows::<T>(encoded.len(), dim, &mut rng);
        let mut outputs = vec![T::zero(); vocab.len() * dim];
        let words: u64 = encoded.iter().map(|(_, w)| w.len() as u64).sum();
        let budget = words * ec.epochs as u64;
        let mut grad = vec![T::zero(); dim];
        let mut negatives = vec![0usize; ec.negatives];
        let mut log = TrainingLog::default();
        let mut processed = 0u64;
        for epoch in 0..ec.epochs {
            let (mut loss, mut pairs) = (0.0, 0u64);
            for (i, (_, w)) in encoded.iter().enumerate() {
                let lr = learning_rate::<T>(ec, processed, budget);
                let doc = &mut doc_data[i * dim..(i + 1) * dim];
                let (l, p) = paragraph_epoch(
                    doc,
                    w,
                    &mut Outputs::Train(&mut outputs),
                    &vocab,
                    ec,
                    lr,
                    &mut rng,
                    &mut grad,
                    &mut negatives,
                );
                loss += l;
                pairs += p;
                processed += w.len() as u64;
            }
            let mean = if pairs == 0 { 0.0 } else { loss / pairs as f64 };
            log::info!("paragraph epoch {} mean pair loss {mean:.6}", epoch + 1);
            log.epoch_losses.push(mean);
            log.pairs.push(pairs);
        }
        let ids = encoded.iter().map(|(id, _)| id.to_string()).collect();
        let docs = EmbeddingTable::new(dim, ids, doc_data)?;
        Ok((
            ParagraphVectors {
                config: config.clone(),
                vocab,
                outputs,
                docs,
            },
            log,
        ))
    }

    pub fn dimension(&self) -> usize {
        self.docs.dimension()
    }

    pub fn doc_vector(&self, id: u64) -> Option<&[T]> {
        self.docs.get(&id.to_string())
    }

    pub fn doc_table(&self) -> &EmbeddingTable<T> {
        &self.docs
    }

    /// Fits a fresh vector to `tokens` with the word outputs frozen. Deterministic:
    /// the generator is reseeded from the configured seed on every call.
    pub fn infer(&self, tokens: &[String]) -> Result<Vec<T>> {
        let words = self.vocab.encode(tokens);
        if words.is_empty() {
            return Err(Error::EmptyDocument);
        }
        let ec = &self.config.embedding;
        let dim = self.dimension();
        let mut rng = ChaCha8Rng::seed_from_u64(ec.seed);
        let mut doc = init_rows::<T>(1, dim, &mut rng);
        let mut grad = vec![T::zero(); dim];
        let mut negatives = vec![0usize; ec.negatives];
        let epochs = self.config.infer_epochs;
        for epoch in 0..epochs {
            let frac = 1.0 - epoch as f64 / epochs as f64;
            let lr = T::of(ec.initial_learning_rate * frac.max(1e-4));
            paragraph_epoch(
                &mut doc,
                &words,
                &mut Outputs::Frozen(&self.outputs),
                &self.vocab,
                ec,
                lr,
                &mut rng,
                &mut grad,
                &mut negatives,
            );
        }
        Ok(doc)
    }

    /// Checks that `v` can be compared against this model's vectors.
    pub fn check_dimension(&self, v: &[T]) -> Result<()> {
        if v.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Cosine between a product's vector (trained, or inferred from `description`
    /// when the product was not trained) and the inferred query vector, mapped to
    /// [1, 3]; 2.0 when either vector is unavailable.
    pub fn score(&self, query: &[String], product: u64, description: &[String]) -> T {
        let score = || -> Result<T> {
            let q = self.infer(query)?;
            let d = match self.doc_vector(product) {
                Some(v) => v.to_vec(),
                None => self.infer(description)?,
            };
            self.check_dimension(&q)?;
            similarity_to_relevance(cosine(&q, &d)?)
        };
        score().unwrap_or_else(|_| T::of(FALLBACK_RELEVANCE))
    }
}
