use std::collections::HashSet;

/// Tokens ending in '.' that never end a sentence.
pub const DEFAULT_SENTENCE_ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jr.", "sr.", "vs.", "e.g.", "i.e.", "pt.", "approx.", "no.", "fig.", "p.o.",
    "b.i.d.", "t.i.d.", "q.d.", "q.i.d.", "p.r.n.",
];

#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    abbreviations: HashSet<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        SentenceSplitter::with_abbreviations(DEFAULT_SENTENCE_ABBREVIATIONS.iter().copied())
    }
}

impl SentenceSplitter {
    pub fn with_abbreviations<'a>(abbrevs: impl IntoIterator<Item = &'a str>) -> Self {
        SentenceSplitter {
            abbreviations: abbrevs.into_iter().map(str::to_lowercase).collect(),
        }
    }

    /// Splits at `.`, `?` or `!` followed by whitespace and then an uppercase
    /// letter or digit. Abbreviations, single-letter initials and
    /// `[** ... **]` spans never split.
    pub fn split(&self, text: &str) -> Vec<String> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut out = Vec::new();
        let mut start = 0;
        let mut in_bracket = false;
        let mut i = 0;
        while i < chars.len() {
            let (pos, c) = chars[i];
            if !in_bracket && c == '[' && starts_marker(&chars, i + 1, '*') {
                in_bracket = true;
            } else if in_bracket && c == '*' && chars.get(i + 1).is_some_and(|x| x.1 == '*') {
                if let Some(end) = closing_bracket(&chars, i + 2) {
                    in_bracket = false;
                    i = end + 1;
                    continue;
                }
            } else if !in_bracket && matches!(c, '.' | '?' | '!') && self.boundary_after(&chars, i, text) {
                let end = pos + c.len_utf8();
                let sentence = text[start..end].trim();
                if !sentence.is_empty() {
                    out.push(sentence.to_string());
                }
                start = end;
            }
            i += 1;
        }
        let tail = text[start..].trim();
        if !tail.is_empty() {
            out.push(tail.to_string());
        }
        out
    }

    fn boundary_after(&self, chars: &[(usize, char)], i: usize, text: &str) -> bool {
        let mut j = i + 1;
        if !chars.get(j).is_some_and(|x| x.1.is_whitespace()) {
            return false;
        }
        while chars.get(j).is_some_and(|x| x.1.is_whitespace()) {
            j += 1;
        }
        let Some(&(_, next)) = chars.get(j) else {
            return false;
        };
        if !(next.is_uppercase() || next.is_ascii_digit()) {
            return false;
        }
        if chars[i].1 != '.' {
            return true;
        }
        // the whitespace-delimited word ending at this period
        let end = chars[i].0 + 1;
        let word_start = text[..end]
            .rfind(char::is_whitespace)
            .map(|p| p + text[p..].chars().next().map_or(1, char::len_utf8))
            .unwrap_or(0);
        let word = text[word_start..end].to_lowercase();
        let letters = word.trim_end_matches('.');
        let initial = letters.chars().count() == 1 && letters.chars().all(char::is_alphabetic);
        !(initial || self.abbreviations.contains(&word))
    }
}

fn starts_marker(chars: &[(usize, char)], mut j: usize, marker: char) -> bool {
    while chars.get(j).is_some_and(|x| x.1 == ' ') {
        j += 1;
    }
    chars.get(j).is_some_and(|x| x.1 == marker) && chars.get(j + 1).is_some_and(|x| x.1 == marker)
}

fn closing_bracket(chars: &[(usize, char)], mut j: usize) -> Option<usize> {
    while chars.get(j).is_some_and(|x| x.1 == ' ') {
        j += 1;
    }
    (chars.get(j)?.1 == ']').then_some(j)
}

pub fn split_sentences(text: &str) -> Vec<String> {
    SentenceSplitter::default().split(text)
}
