//! Corpus statistics over preprocessed titles, descriptions and search terms.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::text::{preprocess, PipelineConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub documents: usize,
    pub total_tokens: u64,
    pub unique_unigrams: usize,
    /// Shortest and longest document in tokens; absent for an empty field.
    pub doc_length_range: Option<(u64, u64)>,
    /// Smallest and largest corpus count of any single unigram.
    pub word_count_range: Option<(u64, u64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_products: usize,
    pub num_instances: usize,
    pub fields: BTreeMap<String, FieldStats>,
}

fn field_stats<'a>(docs: impl Iterator<Item = &'a str>, config: &PipelineConfig) -> FieldStats {
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut stats = FieldStats::default();
    for text in docs {
        let tokens = preprocess(text, config);
        let len = tokens.len() as u64;
        stats.documents += 1;
        stats.total_tokens += len;
        stats.doc_length_range = Some(match stats.doc_length_range {
            None => (len, len),
            Some((lo, hi)) => (lo.min(len), hi.max(len)),
        });
        for t in tokens.into_vec() {
            *counts.entry(t).or_default() += 1;
        }
    }
    stats.unique_unigrams = counts.len();
    stats.word_count_range = counts.values().fold(None, |acc, &c| {
        Some(match acc {
            None => (c, c),
            Some((lo, hi)) => (lo.min(c), hi.max(c)),
        })
    });
    stats
}

/// Search terms are processed with the product-side pipeline so the counts do not
/// depend on a spelling dictionary.
pub fn corpus_stats(corpus: &Corpus, config: &PipelineConfig) -> CorpusStats {
    let mut fields = BTreeMap::new();
    fields.insert(
        "title".to_string(),
        field_stats(corpus.products.values().map(|p| p.title.as_str()), config),
    );
    fields.insert(
        "description".to_string(),
        field_stats(
            corpus.products.values().map(|p| p.description.as_str()),
            config,
        ),
    );
    fields.insert(
        "search_term".to_string(),
        field_stats(
            corpus.instances.iter().map(|i| i.search_term.as_str()),
            config,
        ),
    );
    CorpusStats {
        num_products: corpus.products.len(),
        num_instances: corpus.instances.len(),
        fields,
    }
}
