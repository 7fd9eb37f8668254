use std::collections::HashMap;
use std::sync::OnceLock;

use regex::{Captures, Regex};

const UNIT_TABLE: &str = include_str!("../../data/units.tsv");

/// Parses `variant<TAB>canonical` lines; `#` starts a comment line.
pub fn parse_unit_table(text: &str) -> HashMap<String, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| {
            let (variant, canonical) = l.split_once('\t')?;
            Some((variant.trim().to_lowercase(), canonical.trim().to_string()))
        })
        .collect()
}

struct Rules {
    digit_letter: Regex,
    letter_digit: Regex,
    thousands: Regex,
    units: Regex,
    unit_map: HashMap<String, String>,
}

fn rules() -> &'static Rules {
    static RULES: OnceLock<Rules> = OnceLock::new();
    RULES.get_or_init(|| {
        let unit_map = parse_unit_table(UNIT_TABLE);
        let mut variants: Vec<&String> = unit_map.keys().collect();
        variants.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        let alternation = variants
            .iter()
            .map(|v| {
                let escaped = regex::escape(v);
                if v.ends_with(|c: char| c.is_alphanumeric()) {
                    format!(r"{escaped}\b")
                } else {
                    escaped
                }
            })
            .collect::<Vec<_>>()
            .join("|");
        Rules {
            digit_letter: Regex::new(r"(\d)(\p{L})").unwrap(),
            letter_digit: Regex::new(r"(\p{L})(\d)").unwrap(),
            thousands: Regex::new(r"(\d),(\d{3})\b").unwrap(),
            units: Regex::new(&format!(r"(?i)(\d)\s*({alternation})")).unwrap(),
            unit_map,
        }
    })
}

/// Splits digit/letter junctions, strips thousands separators and maps unit
/// spellings that follow a number onto one canonical form.
pub fn canonicalize_numbers(text: &str) -> String {
    let r = rules();
    if !text.bytes().any(|b| b.is_ascii_digit()) {
        return text.to_string();
    }
    let mut out = r.digit_letter.replace_all(text, "$1 $2").into_owned();
    out = r.letter_digit.replace_all(&out, "$1 $2").into_owned();
    loop {
        let next = r.thousands.replace_all(&out, "$1$2").into_owned();
        if next == out {
            break;
        }
        out = next;
    }
    r.units
        .replace_all(&out, |caps: &Captures<'_>| {
            let canonical = &r.unit_map[&caps[2].to_lowercase()];
            format!("{} {}", &caps[1], canonical)
        })
        .into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn junctions_and_units() {
        assert_eq!(canonicalize_numbers("4ft"), "4 ft");
        assert_eq!(canonicalize_numbers("260 inches"), "260 in");
        assert_eq!(canonicalize_numbers("1/2 in. x 260 in."), "1/2 in x 260 in");
        assert_eq!(canonicalize_numbers("5 Gallons of paint"), "5 gal of paint");
        assert_eq!(
            canonicalize_numbers("4 foot christmas tree"),
            "4 ft christmas tree"
        );
        assert_eq!(canonicalize_numbers("50lbs"), "50 lb");
    }

    #[test]
    fn thousands_separators() {
        assert_eq!(canonicalize_numbers("1,000,000 btu"), "1000000 btu");
        assert_eq!(canonicalize_numbers("1,5"), "1,5");
    }

    #[test]
    fn digit_free_text_is_a_fixpoint() {
        assert_eq!(canonicalize_numbers("no digits here"), "no digits here");
        assert_eq!(
            canonicalize_numbers("put it in the inches"),
            "put it in the inches"
        );
    }

    #[test]
    fn unit_words_need_a_number() {
        assert_eq!(canonicalize_numbers("3 innings"), "3 innings");
    }

    #[test]
    fn bundled_table_covers_documented_synonyms() {
        let table = parse_unit_table(UNIT_TABLE);
        for (v, c) in [
            ("in.", "in"),
            ("inches", "in"),
            ("feet", "ft"),
            ("pounds", "lb"),
            ("gallon", "gal"),
        ] {
            assert_eq!(table[v], c);
        }
    }
}
