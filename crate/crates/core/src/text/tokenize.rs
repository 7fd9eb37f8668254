use super::TokenSeq;

/// Lowercases and splits on anything that is not alphanumeric. A `/` or `.` with a
/// digit on both sides stays inside the token, so `1/2` and `2.5` survive intact.
pub fn tokenize(text: &str) -> TokenSeq {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if (c == '/' || c == '.')
            && !current.is_empty()
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
        {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenSeq::from_tokens(tokens)
}
