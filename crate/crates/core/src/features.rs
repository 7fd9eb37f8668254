//! Per-instance retrieval features: Boolean OR/AND counts, Okapi BM25 and the
//! query-likelihood score with Jelinek-Mercer over Dirichlet smoothing, plus the
//! bag-of-unigram counts used by the n-gram model.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::ProductId;
use crate::error::{Error, Result};
use crate::index::{CollectionStats, Field, FieldIndex, FieldIndexes};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndriParams<T> {
    /// Weight of the collection model in the outer linear interpolation.
    pub lambda: T,
    /// Dirichlet prior mass.
    pub mu: T,
}

impl<T: Real> Default for IndriParams<T> {
    fn default() -> Self {
        IndriParams {
            lambda: T::of(0.4),
            mu: T::of(2500.0),
        }
    }
}

impl<T: Real> IndriParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= T::zero() && self.lambda <= T::one()) {
            return Err(Error::InvalidParams(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if !(self.mu >= T::zero()) {
            return Err(Error::InvalidParams(format!("mu {} is negative", self.mu)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params<T> {
    pub k1: T,
    pub b: T,
}

impl<T: Real> Default for Bm25Params<T> {
    fn default() -> Self {
        Bm25Params {
            k1: T::of(1.2),
            b: T::of(0.75),
        }
    }
}

impl<T: Real> Bm25Params<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > T::zero()) {
            return Err(Error::InvalidParams(format!(
                "k1 {} must be positive",
                self.k1
            )));
        }
        if !(self.b >= T::zero() && self.b <= T::one()) {
            return Err(Error::InvalidParams(format!("b {} outside [0, 1]", self.b)));
        }
        Ok(())
    }
}

/// Named, finite feature values in a fixed order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector<T> {
    names: Vec<String>,
    values: Vec<T>,
}

impl<T: Real> FeatureVector<T> {
    pub fn new() -> Self {
        FeatureVector {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Panics on a duplicate name or a non-finite value; both are programming errors.
    pub fn push(&mut self, name: impl Into<String>, value: T) {
        let name = name.into();
        assert!(value.is_finite(), "feature {name} is not finite: {value}");
        assert!(!self.names.contains(&name), "duplicate feature {name}");
        self.names.push(name);
        self.values.push(value);
    }

    pub fn extend(&mut self, other: FeatureVector<T>) {
        for (n, v) in other.names.into_iter().zip(other.values) {
            self.push(n, v);
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, name: &str) -> Option<T> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Largest per-term count of any query token in the document; 0 for an empty query.
pub fn or_score(query: &[String], index: &FieldIndex, uid: ProductId) -> u32 {
    query.iter().map(|t| index.tf(t, uid)).max().unwrap_or(0)
}

/// Smallest per-term count over the query tokens; 0 for an empty query.
pub fn and_score(query: &[String], index: &FieldIndex, uid: ProductId) -> u32 {
    query.iter().map(|t| index.tf(t, uid)).min().unwrap_or(0)
}

/// The six Boolean features, ordered `or_title, and_title, or_description,
/// and_description, or_attributes, and_attributes`.
pub fn boolean_features<T: Real>(
    query: &[String],
    uid: ProductId,
    indexes: &FieldIndexes,
) -> FeatureVector<T> {
    let mut fv = FeatureVector::new();
    for field in Field::ALL {
        let index = indexes.get(field);
        fv.push(
            format!("or_{}", field.name()),
            T::of(f64::from(or_score(query, index, uid))),
        );
        fv.push(
            format!("and_{}", field.name()),
            T::of(f64::from(and_score(query, index, uid))),
        );
    }
    fv
}

/// One smoothed factor: `(1-λ)(tf + μ·p_c)/(|d| + μ) + λ·p_c`, where `p_c` is the
/// collection probability of the term. An empty document with `μ = 0` contributes
/// no document part.
pub fn indri_factor<T: Real>(
    tf: u32,
    doc_length: u32,
    collection_prob: T,
    params: &IndriParams<T>,
) -> T {
    let denom = T::of(f64::from(doc_length)) + params.mu;
    let doc_part = if denom > T::zero() {
        (T::of(f64::from(tf)) + params.mu * collection_prob) / denom
    } else {
        T::zero()
    };
    (T::one() - params.lambda) * doc_part + params.lambda * collection_prob
}

/// Log query likelihood, the sum of log smoothed factors over query tokens.
pub fn indri_score<T: Real>(
    query: &[String],
    index: &FieldIndex,
    stats: &CollectionStats,
    uid: ProductId,
    params: &IndriParams<T>,
) -> Result<T> {
    params.validate()?;
    let coll_len = stats.collection_length as f64;
    let mut score = T::zero();
    for term in query {
        let ctf = index.ctf(term);
        let p_c = if ctf == 0 {
            T::zero()
        } else {
            T::of(ctf as f64 / coll_len)
        };
        let factor = indri_factor(index.tf(term, uid), index.doc_length(uid), p_c, params);
        if factor <= T::zero() {
            return Err(Error::ZeroProbabilityTerm(term.clone()));
        }
        score += factor.ln();
    }
    Ok(score)
}

/// Variant used for feature vectors: a token absent from the whole field gets a
/// half-count collection probability `0.5 / (|c| + 1)` instead of failing, so every
/// instance has a finite score.
pub fn indri_feature<T: Real>(
    query: &[String],
    index: &FieldIndex,
    stats: &CollectionStats,
    uid: ProductId,
    params: &IndriParams<T>,
) -> Result<T> {
    params.validate()?;
    if params.lambda == T::zero() && params.mu == T::zero() {
        return Err(Error::InvalidParams("lambda and mu both zero".into()));
    }
    let coll_len = stats.collection_length as f64;
    let mut score = T::zero();
    for term in query {
        let ctf = index.ctf(term);
        let p_c = if ctf == 0 {
            T::of(0.5 / (coll_len + 1.0))
        } else {
            T::of(ctf as f64 / coll_len)
        };
        let factor = indri_factor(index.tf(term, uid), index.doc_length(uid), p_c, params);
        score += factor.ln();
    }
    Ok(score)
}

/// `ln((N - df + 0.5)/(df + 0.5) + 1)`; never negative.
pub fn bm25_idf<T: Real>(num_documents: usize, df: u32) -> T {
    let n = num_documents as f64;
    let df = f64::from(df);
    T::of(((n - df + 0.5) / (df + 0.5) + 1.0).ln())
}

/// Saturating term-frequency part: `tf(k1+1) / (tf + k1(1 - b + b·|d|/avgdl))`.
pub fn bm25_tf<T: Real>(tf: T, doc_length: T, avg_doc_length: T, params: &Bm25Params<T>) -> T {
    if tf == T::zero() {
        return T::zero();
    }
    let norm = if avg_doc_length > T::zero() {
        T::one() - params.b + params.b * doc_length / avg_doc_length
    } else {
        T::one()
    };
    tf * (params.k1 + T::one()) / (tf + params.k1 * norm)
}

pub fn bm25_score<T: Real>(
    query: &[String],
    index: &FieldIndex,
    stats: &CollectionStats,
    uid: ProductId,
    params: &Bm25Params<T>,
) -> T {
    let doc_len = T::of(f64::from(index.doc_length(uid)));
    let avg = T::of(stats.avg_doc_length);
    query
        .iter()
        .map(|t| {
            let tf = index.tf(t, uid);
            if tf == 0 {
                return T::zero();
            }
            bm25_idf::<T>(stats.num_documents, index.df(t))
                * bm25_tf(T::of(f64::from(tf)), doc_len, avg, params)
        })
        .sum()
}

/// Retrieval-model settings for feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringParams<T> {
    pub indri: IndriParams<T>,
    pub bm25: Bm25Params<T>,
}

impl<T: Real> Default for ScoringParams<T> {
    fn default() -> Self {
        ScoringParams {
            indri: IndriParams::default(),
            bm25: Bm25Params::default(),
        }
    }
}

/// Six Boolean features followed by BM25 and query likelihood for each field (width 12).
pub fn extended_features<T: Real>(
    query: &[String],
    uid: ProductId,
    indexes: &FieldIndexes,
    params: &ScoringParams<T>,
) -> Result<FeatureVector<T>> {
    let mut fv = boolean_features(query, uid, indexes);
    for field in Field::ALL {
        let index = indexes.get(field);
        let stats = index.stats();
        fv.push(
            format!("bm25_{}", field.name()),
            bm25_score(query, index, &stats, uid, &params.bm25),
        );
        fv.push(
            format!("indri_{}", field.name()),
            indri_feature(query, index, &stats, uid, &params.indri)?,
        );
    }
    Ok(fv)
}

/// Top-k unigrams of a training split, by descending document frequency with
/// lexicographic tie-breaking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnigramVocabulary {
    terms: Vec<String>,
    /// Distinct unigrams seen before truncation.
    pub extracted: usize,
}

impl UnigramVocabulary {
    /// `documents` are the concatenated token lists of the training instances.
    pub fn select<'a, I>(documents: I, top_k: usize) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut df: HashMap<&'a str, usize> = HashMap::new();
        for doc in documents {
            let mut seen: Vec<&str> = doc.iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let extracted = df.len();
        let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(top_k);
        UnigramVocabulary {
            terms: ranked.into_iter().map(|(t, _)| t.to_string()).collect(),
            extracted,
        }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sparse counts as `(vocabulary position, count)`, ascending by position.
    pub fn sparse_counts(&self, tokens: &[String]) -> Vec<(usize, u32)> {
        let position: HashMap<&str, usize> = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        let mut counts: HashMap<usize, u32> = HashMap::new();
        for t in tokens {
            if let Some(&i) = position.get(t.as_str()) {
                *counts.entry(i).or_default() += 1;
            }
        }
        let mut out: Vec<(usize, u32)> = counts.into_iter().collect();
        out.sort_unstable();
        out
    }

    pub fn features<T: Real>(&self, tokens: &[String]) -> FeatureVector<T> {
        let mut dense = vec![T::zero(); self.terms.len()];
        for (i, c) in self.sparse_counts(tokens) {
            dense[i] = T::of(f64::from(c));
        }
        let mut fv = FeatureVector::new();
        for (t, v) in self.terms.iter().zip(dense) {
            fv.push(format!("unigram_{t}"), v);
        }
        fv
    }
}
