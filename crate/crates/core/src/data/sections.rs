use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, Result};

pub const UNNAMED: &str = "UNNAMED";

const DEFAULT_ALIASES: &str = include_str!("../../data/section_aliases.json");
const MAX_HEADER_WORDS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteSection {
    pub note_id: String,
    /// Canonical section name, or [`UNNAMED`] for text before the first header.
    pub header: String,
    /// Header as written, without the colon.
    pub raw_header: Option<String>,
    pub body: String,
}

/// Maps normalized header text (lowercase, single spaces) to canonical
/// section names.
#[derive(Debug, Clone)]
pub struct SectionAliases(HashMap<String, String>);

impl Default for SectionAliases {
    fn default() -> Self {
        SectionAliases::from_json(DEFAULT_ALIASES).expect("bundled alias table is valid")
    }
}

impl SectionAliases {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: HashMap<String, String> = serde_json::from_str(text)?;
        Ok(SectionAliases(raw.into_iter().map(|(k, v)| (normalize(&k), v)).collect()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }

    /// Alias lookup, falling back to the snake_case form of the header.
    pub fn canonical(&self, header: &str) -> String {
        let key = normalize(header);
        if let Some(c) = self.0.get(&key) {
            return c.clone();
        }
        key.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect::<Vec<_>>().join("_")
    }
}

fn normalize(header: &str) -> String {
    header.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn is_header_word(w: &str) -> bool {
    let mut chars = w.chars();
    chars.next().is_some_and(|c| c.is_ascii_uppercase()) && chars.all(|c| c.is_alphanumeric() || "/&-'()".contains(c))
}

/// Splits a line-initial header `Words:` off `line`, returning the header
/// text and the remainder after the colon.
pub fn parse_header(line: &str) -> Option<(&str, &str)> {
    let colon = line.find(':')?;
    let head = &line[..colon];
    let words: Vec<&str> = head.split(' ').collect();
    if words.is_empty() || words.len() > MAX_HEADER_WORDS || !words.iter().all(|w| is_header_word(w)) {
        return None;
    }
    Some((head, &line[colon + 1..]))
}

/// Segments a note into sections at header lines.
pub fn segment_note_sections(note_id: &str, text: &str, aliases: &SectionAliases) -> Vec<NoteSection> {
    let mut sections = Vec::new();
    let mut current: Option<(String, Option<String>)> = None;
    let mut body: Vec<&str> = Vec::new();

    let flush = |sections: &mut Vec<NoteSection>, current: &Option<(String, Option<String>)>, body: &[&str]| {
        let text = body.join("\n").trim().to_string();
        match current {
            None if text.is_empty() => {}
            None => sections.push(NoteSection {
                note_id: note_id.to_string(),
                header: UNNAMED.to_string(),
                raw_header: None,
                body: text,
            }),
            Some((canon, raw)) => sections.push(NoteSection {
                note_id: note_id.to_string(),
                header: canon.clone(),
                raw_header: raw.clone(),
                body: text,
            }),
        }
    };

    for line in text.lines() {
        if let Some((head, rest)) = parse_header(line) {
            flush(&mut sections, &current, &body);
            body.clear();
            current = Some((aliases.canonical(head), Some(head.to_string())));
            body.push(rest);
        } else {
            body.push(line);
        }
    }
    flush(&mut sections, &current, &body);
    sections
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(text: &str) -> Vec<NoteSection> {
        segment_note_sections("n1", text, &SectionAliases::default())
    }

    #[test]
    fn uppercase_header() {
        let s = seg("PAST MEDICAL HISTORY:\nDiabetes.");
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].header, "past_medical_history");
        assert_eq!(s[0].body, "Diabetes.");
    }

    #[test]
    fn no_headers_is_unnamed() {
        let s = seg("patient doing well.\nno complaints");
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].header, UNNAMED);
    }

    #[test]
    fn alias_maps_to_canonical() {
        let s = seg("PMH:\nHTN, HLD\nSocial History: lives alone");
        assert_eq!(s[0].header, "past_medical_history");
        assert_eq!(s[1].header, "social_history");
        assert_eq!(s[1].body, "lives alone");
    }

    #[test]
    fn unknown_header_is_snake_cased() {
        let s = seg("Admission Labs:\nWBC 12");
        assert_eq!(s[0].header, "admission_labs");
    }

    #[test]
    fn rejects_non_headers() {
        assert!(parse_header("the patient: fine").is_none());
        assert!(parse_header("One Two Three Four Five Six Seven: x").is_none());
        assert!(parse_header("Time 10:30").is_none());
    }

    fn non_ws(s: &str) -> String {
        s.chars().filter(|c| !c.is_whitespace()).collect()
    }

    proptest! {
        #[test]
        fn bodies_keep_all_non_header_text(lines in proptest::collection::vec(
            prop_oneof![
                "[A-Z][a-z]{0,6}( [A-Z][a-z]{0,6}){0,2}:[a-z ]{0,10}",
                "[a-z0-9 .,]{0,20}",
            ],
            0..10,
        )) {
            let note = lines.join("\n");
            let sections = seg(&note);
            let mut expected = String::new();
            for line in note.lines() {
                match parse_header(line) {
                    Some((_, rest)) => expected.push_str(&non_ws(rest)),
                    None => expected.push_str(&non_ws(line)),
                }
            }
            let got: String = sections.iter().map(|s| non_ws(&s.body)).collect();
            prop_assert_eq!(got, expected);
        }
    }
}
