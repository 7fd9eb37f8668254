use std::collections::{BTreeMap, HashMap};

/// Edit distance with unit-cost insertion, deletion and substitution, over chars.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `Some(d)` when `levenshtein(a, b) = d <= bound`, abandoning the table early otherwise.
pub fn levenshtein_within(a: &[char], b: &[char], bound: usize) -> Option<usize> {
    if a.len().abs_diff(b.len()) > bound {
        return None;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        let mut row_min = cur[0];
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
            row_min = row_min.min(cur[j + 1]);
        }
        if row_min > bound {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[b.len()];
    (d <= bound).then_some(d)
}

/// Product-text vocabulary with occurrence counts, bucketed by length for lookup.
#[derive(Debug, Clone, Default)]
pub struct SpellDictionary {
    counts: HashMap<String, u64>,
    by_length: BTreeMap<usize, Vec<(Vec<char>, String)>>,
}

impl SpellDictionary {
    pub fn from_counts(counts: HashMap<String, u64>) -> Self {
        let mut by_length: BTreeMap<usize, Vec<(Vec<char>, String)>> = BTreeMap::new();
        for word in counts.keys() {
            let chars: Vec<char> = word.chars().collect();
            by_length
                .entry(chars.len())
                .or_default()
                .push((chars, word.clone()));
        }
        for bucket in by_length.values_mut() {
            bucket.sort_by(|a, b| a.1.cmp(&b.1));
        }
        SpellDictionary { counts, by_length }
    }

    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for t in tokens {
            *counts.entry(t.to_string()).or_default() += 1;
        }
        Self::from_counts(counts)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.counts.contains_key(word)
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }
}

/// Replaces an out-of-dictionary token with its nearest dictionary term within
/// `max_edit_distance`. Ties go to the more frequent term, then the lexicographically
/// smaller one. Tokens with no candidate in range come back unchanged.
pub fn correct_token(
    token: &str,
    dictionary: &SpellDictionary,
    max_edit_distance: usize,
) -> String {
    if dictionary.contains(token) {
        return token.to_string();
    }
    let chars: Vec<char> = token.chars().collect();
    let lo = chars.len().saturating_sub(max_edit_distance);
    let hi = chars.len() + max_edit_distance;
    let mut best: Option<(usize, u64, &str)> = None;
    for bucket in dictionary.by_length.range(lo..=hi).map(|(_, b)| b) {
        for (candidate, word) in bucket {
            let bound = best.map_or(max_edit_distance, |(d, _, _)| d);
            let Some(d) = levenshtein_within(&chars, candidate, bound) else {
                continue;
            };
            let count = dictionary.count(word);
            let better = match best {
                None => true,
                Some((bd, bc, bw)) => {
                    (d, std::cmp::Reverse(count), word.as_str()) < (bd, std::cmp::Reverse(bc), bw)
                }
            };
            if better {
                best = Some((d, count, word));
            }
        }
    }
    best.map_or_else(|| token.to_string(), |(_, _, w)| w.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Full-matrix recurrence kept separate from the two-row implementations.
    fn dp_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = (d[i - 1][j] + 1)
                    .min(d[i][j - 1] + 1)
                    .min(d[i - 1][j - 1] + cost);
            }
        }
        d[a.len()][b.len()]
    }

    #[test]
    fn known_distances() {
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(dp_oracle("kitten", "sitting"), 3);
    }

    fn dict(pairs: &[(&str, u64)]) -> SpellDictionary {
        SpellDictionary::from_counts(pairs.iter().map(|(w, c)| (w.to_string(), *c)).collect())
    }

    #[test]
    fn corrects_to_nearest_term() {
        let d = dict(&[("bracket", 100), ("brick", 50)]);
        assert_eq!(dp_oracle("brackt", "bracket"), 1);
        assert_eq!(dp_oracle("brackt", "brick"), 2);
        assert_eq!(correct_token("brackt", &d, 2), "bracket");
        assert_eq!(correct_token("brick", &d, 2), "brick");
        assert_eq!(correct_token("zzzzzz", &d, 2), "zzzzzz");
    }

    #[test]
    fn ties_prefer_frequency_then_lexicographic() {
        let d = dict(&[("cat", 5), ("bat", 9), ("hat", 9)]);
        assert_eq!(correct_token("xat", &d, 1), "bat");
        let d = dict(&[("cat", 5), ("bat", 1)]);
        assert_eq!(correct_token("xat", &d, 1), "cat");
    }

    #[test]
    fn zero_bound_never_corrects() {
        let d = dict(&[("bracket", 1)]);
        assert_eq!(correct_token("brackt", &d, 0), "brackt");
    }

    proptest! {
        #[test]
        fn matches_oracle_and_is_a_metric(a in "[abc]{0,7}", b in "[abc]{0,7}", c in "[abc]{0,7}") {
            let ab = levenshtein(&a, &b);
            prop_assert_eq!(ab, dp_oracle(&a, &b));
            prop_assert_eq!(ab, levenshtein(&b, &a));
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(ab <= levenshtein(&a, &c) + levenshtein(&c, &b));
            let ac: Vec<char> = a.chars().collect();
            let bc: Vec<char> = b.chars().collect();
            for bound in 0..4 {
                prop_assert_eq!(levenshtein_within(&ac, &bc, bound), (ab <= bound).then_some(ab));
            }
        }

        #[test]
        fn correction_never_moves_away_from_dictionary(
            token in "[abcd]{1,6}",
            words in proptest::collection::vec(("[abcd]{1,6}", 1u64..20), 1..12),
        ) {
            let d = SpellDictionary::from_counts(words.into_iter().collect());
            let nearest = |t: &str| d.iter().map(|(w, _)| dp_oracle(t, w)).min().unwrap();
            let out = correct_token(&token, &d, 2);
            prop_assert!(nearest(&out) <= nearest(&token));
        }
    }
}
