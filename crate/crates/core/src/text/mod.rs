//! Text normalization shared by product text and search terms.
//!
//! Stage order: number canonicalization, tokenization, stopword removal, spelling
//! correction (search terms only), Porter stemming.

mod numbers;
mod porter;
mod spell;
mod tokenize;

use std::collections::{BTreeSet, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use numbers::{canonicalize_numbers, parse_unit_table};
pub use porter::porter_stem;
pub use spell::{correct_token, levenshtein, levenshtein_within, SpellDictionary};
pub use tokenize::tokenize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// The bundled 127-word English stopword list.
pub fn default_stopwords() -> BTreeSet<String> {
    parse_word_list(BUNDLED_STOPWORDS)
}

/// One entry per line; blank lines and `#` comments are skipped.
pub fn parse_word_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Ordered, non-empty, whitespace-free lowercase tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub(crate) fn from_tokens(tokens: Vec<String>) -> Self {
        debug_assert!(tokens
            .iter()
            .all(|t| !t.is_empty() && !t.chars().any(char::is_whitespace)));
        TokenSeq(tokens)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn join(&self, sep: &str) -> String {
        self.0.join(sep)
    }
}

impl<'a> IntoIterator for &'a TokenSeq {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

pub fn remove_stopwords(tokens: TokenSeq, stopwords: &BTreeSet<String>) -> TokenSeq {
    TokenSeq(
        tokens
            .0
            .into_iter()
            .filter(|t| !stopwords.contains(t))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stopwords: BTreeSet<String>,
    pub remove_stopwords: bool,
    pub stem: bool,
    pub spell_correct: bool,
    pub max_edit_distance: usize,
    pub canonicalize_numbers: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stopwords: default_stopwords(),
            remove_stopwords: true,
            stem: true,
            spell_correct: true,
            max_edit_distance: 2,
            canonicalize_numbers: true,
        }
    }
}

impl PipelineConfig {
    /// Tokenize and lowercase only.
    pub fn minimal() -> Self {
        PipelineConfig {
            stopwords: BTreeSet::new(),
            remove_stopwords: false,
            stem: false,
            spell_correct: false,
            max_edit_distance: 0,
            canonicalize_numbers: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.remove_stopwords && self.stopwords.is_empty() {
            return Err(Error::Config(
                "stopword removal enabled with an empty stopword list".into(),
            ));
        }
        Ok(())
    }

    /// Stable hex digest identifying every setting that affects token output.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serializes"));
        h.finalize()
            .iter()
            .take(16)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Stages shared by both sides, ending before spelling correction and stemming.
fn normalize(text: &str, config: &PipelineConfig) -> TokenSeq {
    let tokens = if config.canonicalize_numbers {
        tokenize(&canonicalize_numbers(text))
    } else {
        tokenize(text)
    };
    if config.remove_stopwords {
        remove_stopwords(tokens, &config.stopwords)
    } else {
        tokens
    }
}

fn stem_all(tokens: TokenSeq, config: &PipelineConfig) -> TokenSeq {
    if config.stem {
        TokenSeq(tokens.0.iter().map(|t| porter_stem(t)).collect())
    } else {
        tokens
    }
}

/// Product-side pipeline (no spelling correction).
pub fn preprocess(text: &str, config: &PipelineConfig) -> TokenSeq {
    stem_all(normalize(text, config), config)
}

/// Search-term pipeline: out-of-vocabulary alphabetic tokens are corrected against
/// the product-text dictionary before stemming.
pub fn preprocess_query(
    text: &str,
    config: &PipelineConfig,
    dictionary: &SpellDictionary,
) -> TokenSeq {
    let mut tokens = normalize(text, config);
    if config.spell_correct {
        for t in tokens.0.iter_mut() {
            if is_correctable(t) {
                *t = correct_token(t, dictionary, config.max_edit_distance);
            }
        }
    }
    stem_all(tokens, config)
}

fn is_correctable(token: &str) -> bool {
    token.chars().all(char::is_alphabetic)
}

/// Unstemmed vocabulary of titles and descriptions, the spelling-correction dictionary.
pub fn build_dictionary(corpus: &Corpus, config: &PipelineConfig) -> SpellDictionary {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for product in corpus.products.values() {
        for text in [&product.title, &product.description] {
            for t in normalize(text, config).0 {
                *counts.entry(t).or_default() += 1;
            }
        }
    }
    SpellDictionary::from_counts(counts)
}

/// A configured pipeline bound to one corpus's spelling dictionary, memoizing
/// corrections of repeated query tokens.
#[derive(Debug)]
pub struct TextProcessor {
    config: PipelineConfig,
    dictionary: SpellDictionary,
    corrections: Mutex<HashMap<String, String>>,
}

impl TextProcessor {
    pub fn new(config: PipelineConfig, corpus: &Corpus) -> Result<Self> {
        config.validate()?;
        let dictionary = if config.spell_correct {
            build_dictionary(corpus, &config)
        } else {
            SpellDictionary::default()
        };
        Ok(TextProcessor {
            config,
            dictionary,
            corrections: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn dictionary(&self) -> &SpellDictionary {
        &self.dictionary
    }

    pub fn product_tokens(&self, text: &str) -> TokenSeq {
        preprocess(text, &self.config)
    }

    pub fn query_tokens(&self, text: &str) -> TokenSeq {
        let mut tokens = normalize(text, &self.config);
        if self.config.spell_correct {
            for t in tokens.0.iter_mut() {
                if !is_correctable(t) || self.dictionary.contains(t) {
                    continue;
                }
                let cached = self.corrections.lock().unwrap().get(t.as_str()).cloned();
                *t = match cached {
                    Some(c) => c,
                    None => {
                        let c = correct_token(t, &self.dictionary, self.config.max_edit_distance);
                        self.corrections
                            .lock()
                            .unwrap()
                            .insert(t.clone(), c.clone());
                        c
                    }
                };
            }
        }
        stem_all(tokens, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(seq: TokenSeq) -> Vec<String> {
        seq.into_vec()
    }

    #[test]
    fn bundled_stopword_list_has_127_entries() {
        let s = default_stopwords();
        assert_eq!(s.len(), 127);
        assert!(s.contains("the"));
    }

    #[test]
    fn stopword_removal() {
        let sw = default_stopwords();
        assert_eq!(
            toks(remove_stopwords(tokenize("the angle bracket"), &sw)),
            ["angle", "bracket"]
        );
        assert!(remove_stopwords(TokenSeq::default(), &sw).is_empty());
        assert!(remove_stopwords(tokenize("the and of a"), &sw).is_empty());
    }

    #[test]
    fn stopword_only_text_preprocesses_to_nothing() {
        assert!(preprocess("The and OF", &PipelineConfig::default()).is_empty());
    }

    #[test]
    fn hand_traced_sentence() {
        // canonicalize: "Galvanized 4 ft Angle Brackets for the 2 x 4 studs"
        // tokenize, drop {for, the}, stem.
        let out = preprocess(
            "Galvanized 4ft Angle Brackets for the 2x4 studs",
            &PipelineConfig::default(),
        );
        assert_eq!(
            toks(out),
            ["galvan", "4", "ft", "angl", "bracket", "2", "x", "4", "stud"]
        );
    }

    #[test]
    fn query_side_corrects_before_stemming() {
        let dict = SpellDictionary::from_tokens(["brackets", "angle"]);
        let cfg = PipelineConfig::default();
        assert_eq!(
            toks(preprocess_query("angle brackts", &cfg, &dict)),
            ["angl", "bracket"]
        );
        // numbers pass through uncorrected
        assert_eq!(
            toks(preprocess_query("12 angle", &cfg, &dict)),
            ["12", "angl"]
        );
    }

    #[test]
    fn preprocessing_is_stable_on_its_own_output() {
        let cfg = PipelineConfig::default();
        let mut checked = 0;
        for text in [
            "Simpson Strong-Tie 12-Gauge Angle",
            "steel door with brass handle",
            "1/2 in. x 260 in. PTFE Tape",
            "copper pipe fittings",
        ] {
            let once = preprocess(text, &cfg);
            if once.iter().all(|t| porter_stem(t) == *t) {
                assert_eq!(preprocess(&once.join(" "), &cfg), once, "{text}");
                checked += 1;
            }
        }
        assert!(checked >= 2);
    }

    #[test]
    fn empty_stoplist_with_removal_is_rejected() {
        let cfg = PipelineConfig {
            stopwords: BTreeSet::new(),
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fingerprint_tracks_settings() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.stem = false;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
