use std::collections::HashSet;

/// Whitespace chunks kept whole even though they contain punctuation.
pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jr.", "sr.", "vs.", "e.g.", "i.e.", "etc.", "pt.", "h/o", "s/p", "c/o", "w/",
    "w/o", "b/l", "n/v", "r/o", "p.o.", "b.i.d.", "t.i.d.", "q.d.", "q.i.d.", "p.r.n.",
];

const NEGATED_CONTRACTION: &str = "n't";

/// Rule-based tokenizer: lowercases, splits on whitespace, then splits off
/// every punctuation character. Decimal numbers (`13.3`), entries of the
/// abbreviation list and the `n't` contraction suffix stay whole.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    abbreviations: HashSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::with_abbreviations(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

impl Tokenizer {
    pub fn with_abbreviations<'a>(abbrevs: impl IntoIterator<Item = &'a str>) -> Self {
        Tokenizer {
            abbreviations: abbrevs.into_iter().map(str::to_lowercase).collect(),
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        let mut tokens = Vec::new();
        for chunk in lower.split_whitespace() {
            if chunk == NEGATED_CONTRACTION || self.abbreviations.contains(chunk) {
                tokens.push(chunk.to_string());
            } else {
                split_chunk(chunk, &mut tokens);
            }
        }
        tokens
    }
}

fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut word = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_alphanumeric() {
            // "don't" -> "do" + "n't"
            if c == 'n'
                && !word.is_empty()
                && chars.get(i + 1) == Some(&'\'')
                && chars.get(i + 2) == Some(&'t')
                && !chars.get(i + 3).is_some_and(|c| c.is_alphanumeric())
            {
                out.push(std::mem::take(&mut word));
                out.push(NEGATED_CONTRACTION.to_string());
                i += 3;
                continue;
            }
            word.push(c);
        } else if c == '.'
            && word.chars().last().is_some_and(|p| p.is_ascii_digit())
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
        {
            word.push(c);
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(c.to_string());
        }
        i += 1;
    }
    if !word.is_empty() {
        out.push(word);
    }
}

/// Tokenizes with the default abbreviation list.
pub fn tokenize(text: &str) -> Vec<String> {
    thread_local! {
        static DEFAULT: Tokenizer = Tokenizer::default();
    }
    DEFAULT.with(|t| t.tokenize(text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn detaches_punctuation() {
        assert_eq!(tokenize("No CP or fevers."), ["no", "cp", "or", "fevers", "."]);
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \n\t").is_empty());
    }

    #[test]
    fn keeps_decimals() {
        assert_eq!(tokenize("last A1c : 13.3 %"), ["last", "a1c", ":", "13.3", "%"]);
        assert_eq!(tokenize("13."), ["13", "."]);
    }

    #[test]
    fn keeps_abbreviations_and_contractions() {
        assert_eq!(tokenize("Dr. Smith, h/o DKA"), ["dr.", "smith", ",", "h/o", "dka"]);
        assert_eq!(tokenize("Patient doesn't smoke"), ["patient", "does", "n't", "smoke"]);
    }

    #[test]
    fn deidentification_brackets() {
        assert_eq!(tokenize("[** 3-23 **]"), ["[", "*", "*", "3", "-", "23", "*", "*", "]"]);
    }

    proptest! {
        #[test]
        fn idempotent_on_joined_output(s in "[a-zA-Z0-9 .,:;%'/\\-\\[\\]*()]{0,60}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }
    }
}
