use std::sync::OnceLock;

use regex::Regex;

const SENTENCE_PUNCT: [char; 6] = ['.', ',', ';', ':', '!', '?'];

fn markup() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^<>]*>").expect("valid markup pattern"))
}

/// Normalize and tokenize raw text.
///
/// Rules, applied in order:
/// 1. lowercase;
/// 2. markup tags (`<...>`) and bracket characters are replaced by spaces;
/// 3. `. , ; : ! ?` become their own tokens, except a `.` between two digits
///    which stays inside the number;
/// 4. `-` and `'` survive only between two alphanumeric characters;
/// 5. every other non-alphanumeric character separates tokens.
///
/// The function is total and deterministic, and idempotent under
/// [`join_tokens`].
pub fn preprocess(raw: &str) -> Vec<String> {
    let lowered = raw.to_lowercase();
    let stripped = markup().replace_all(&lowered, " ");
    let chars: Vec<char> = stripped.chars().collect();

    let mut tokens = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, tokens: &mut Vec<String>| {
        if !current.is_empty() {
            tokens.push(std::mem::take(current));
        }
    };

    for (i, &c) in chars.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| chars[j]);
        let next = chars.get(i + 1).copied();
        let decimal_point =
            c == '.' && prev.is_some_and(|p| p.is_ascii_digit()) && next.is_some_and(|n| n.is_ascii_digit());
        if c.is_alphanumeric() || decimal_point {
            current.push(c);
        } else if SENTENCE_PUNCT.contains(&c) {
            flush(&mut current, &mut tokens);
            tokens.push(c.to_string());
        } else if (c == '-' || c == '\'')
            && !current.is_empty()
            && prev.is_some_and(char::is_alphanumeric)
            && next.is_some_and(char::is_alphanumeric)
        {
            current.push(c);
        } else {
            flush(&mut current, &mut tokens);
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

/// Joiner used for writing token sequences back out as text.
pub fn join_tokens<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        preprocess(s)
    }

    #[test]
    fn strips_markup_and_parentheses() {
        assert_eq!(toks("The <b>Model</b> (ours)"), ["the", "model", "ours"]);
    }

    #[test]
    fn empty_input_gives_no_tokens() {
        assert!(toks("").is_empty());
        assert!(toks("  \t\n").is_empty());
    }

    #[test]
    fn lowercases() {
        assert_eq!(toks("ABC abc"), ["abc", "abc"]);
    }

    #[test]
    fn detaches_sentence_punctuation() {
        assert_eq!(toks("Results improve, clearly."), ["results", "improve", ",", "clearly", "."]);
    }

    #[test]
    fn keeps_word_internal_hyphens_and_decimals() {
        assert_eq!(
            toks("type-2 fuzzy c-means reaches 3.5% (approx.)"),
            ["type-2", "fuzzy", "c-means", "reaches", "3.5", "approx", "."]
        );
    }

    #[test]
    fn drops_special_characters() {
        assert_eq!(toks("a @ b # c -- d"), ["a", "b", "c", "d"]);
        assert_eq!(toks("-leading trailing- 'quoted'"), ["leading", "trailing", "quoted"]);
    }

    proptest! {
        #[test]
        fn idempotent_under_join(raw in "\\PC{0,80}") {
            let once = preprocess(&raw);
            let twice = preprocess(&join_tokens(&once));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn idempotent_on_markup_heavy_text(raw in "[a-zA-Z0-9 <>()\\-'.,;:!?@#]{0,60}") {
            let once = preprocess(&raw);
            prop_assert_eq!(preprocess(&join_tokens(&once)), once);
        }
    }
}
