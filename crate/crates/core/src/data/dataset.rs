use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_file, Error, Result};

/// Gold label with the canonical index order used by every module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Entailment = 0,
    Contradiction = 1,
    Neutral = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Entailment, Label::Contradiction, Label::Neutral];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Contradiction => "contradiction",
            Label::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Label> {
        match s {
            "entailment" => Ok(Label::Entailment),
            "contradiction" => Ok(Label::Contradiction),
            "neutral" => Ok(Label::Neutral),
            other => Err(Error::invalid(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliPair {
    pub pair_id: String,
    pub premise: Vec<String>,
    pub hypothesis: Vec<String>,
    pub label: Label,
}

impl NliPair {
    pub fn new(pair_id: impl Into<String>, premise: Vec<String>, hypothesis: Vec<String>, label: Label) -> Result<Self> {
        let pair_id = pair_id.into();
        if premise.is_empty() || hypothesis.is_empty() {
            return Err(Error::invalid(format!("pair `{pair_id}` has an empty sentence")));
        }
        Ok(NliPair {
            pair_id,
            premise,
            hypothesis,
            label,
        })
    }

    pub fn premise_text(&self) -> String {
        self.premise.join(" ")
    }

    pub fn hypothesis_text(&self) -> String {
        self.hypothesis.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Dev, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<SplitName> {
        match s {
            "train" => Ok(SplitName::Train),
            "dev" => Ok(SplitName::Dev),
            "test" => Ok(SplitName::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub pairs: Vec<NliPair>,
}

impl DatasetSplit {
    pub fn new(name: SplitName, pairs: Vec<NliPair>) -> Self {
        DatasetSplit { name, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Train, dev and test splits of one corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub train: DatasetSplit,
    pub dev: DatasetSplit,
    pub test: DatasetSplit,
}

impl Dataset {
    pub fn splits(&self) -> [&DatasetSplit; 3] {
        [&self.train, &self.dev, &self.test]
    }

    pub fn split(&self, name: SplitName) -> &DatasetSplit {
        match name {
            SplitName::Train => &self.train,
            SplitName::Dev => &self.dev,
            SplitName::Test => &self.test,
        }
    }

    /// Reads `{dir}/{train,dev,test}.jsonl`.
    pub fn load_dir(dir: &Path) -> Result<Dataset> {
        let load = |name: SplitName| -> Result<DatasetSplit> {
            let path = dir.join(format!("{name}.jsonl"));
            Ok(read_split(&path, name)?.split)
        };
        Ok(Dataset {
            train: load(SplitName::Train)?,
            dev: load(SplitName::Dev)?,
            test: load(SplitName::Test)?,
        })
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        for split in self.splits() {
            write_split(&dir.join(format!("{}.jsonl", split.name)), split)?;
        }
        Ok(())
    }
}

/// One JSON line. Fields beyond these are ignored so SNLI and MultiNLI
/// files load unchanged.
#[derive(Debug, Serialize, Deserialize)]
struct Record {
    gold_label: String,
    sentence1: String,
    sentence2: String,
    #[serde(rename = "pairID", default, skip_serializing_if = "Option::is_none")]
    pair_id: Option<String>,
}

#[derive(Debug)]
pub struct ReadOutcome {
    pub split: DatasetSplit,
    /// Records with gold label `-` (no annotator consensus).
    pub skipped_unlabeled: usize,
}

pub fn parse_split(text: &str, source: &str, name: SplitName) -> Result<ReadOutcome> {
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::parse(source, line_no, e.to_string()))?;
        if rec.gold_label == "-" {
            skipped += 1;
            continue;
        }
        let label: Label = rec
            .gold_label
            .parse()
            .map_err(|_| Error::parse(source, line_no, format!("unknown label `{}`", rec.gold_label)))?;
        let id = rec.pair_id.unwrap_or_else(|| format!("{name}-{line_no}"));
        let pair = NliPair::new(id, super::tokenize(&rec.sentence1), super::tokenize(&rec.sentence2), label)
            .map_err(|e| Error::parse(source, line_no, e.to_string()))?;
        pairs.push(pair);
    }
    Ok(ReadOutcome {
        split: DatasetSplit::new(name, pairs),
        skipped_unlabeled: skipped,
    })
}

pub fn read_split(path: &Path, name: SplitName) -> Result<ReadOutcome> {
    parse_split(&read_to_string(path)?, &path.display().to_string(), name)
}

/// Serializes pairs as JSON lines with space-joined tokens, so reading the
/// output back reproduces the token lists.
pub fn render_split(split: &DatasetSplit) -> String {
    let mut out = String::new();
    for p in &split.pairs {
        let rec = Record {
            gold_label: p.label.as_str().to_string(),
            sentence1: p.premise_text(),
            sentence2: p.hypothesis_text(),
            pair_id: Some(p.pair_id.clone()),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_split(path: &Path, split: &DatasetSplit) -> Result<()> {
    write_file(path, render_split(split))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(id: &str, p: &str, h: &str, label: Label) -> NliPair {
        NliPair::new(id, super::super::tokenize(p), super::super::tokenize(h), label).unwrap()
    }

    #[test]
    fn write_then_read_is_identity() {
        let split = DatasetSplit::new(
            SplitName::Dev,
            vec![
                pair("a", "Labs were notable for Cr 1.7 .", "Patient has elevated Cr", Label::Entailment),
                pair("b", "No history of DKA.", "the patient has dka", Label::Contradiction),
                pair("c", "Dr. Smith saw the pt.", "patient was seen", Label::Neutral),
            ],
        );
        let back = parse_split(&render_split(&split), "mem", SplitName::Dev).unwrap();
        assert_eq!(back.split, split);
        assert_eq!(back.skipped_unlabeled, 0);
    }

    #[test]
    fn unknown_label_reports_line() {
        let text = concat!(
            r#"{"gold_label":"neutral","sentence1":"a","sentence2":"b","pairID":"1"}"#,
            "\n",
            r#"{"gold_label":"maybe","sentence1":"a","sentence2":"b","pairID":"2"}"#,
        );
        let err = parse_split(text, "f.jsonl", SplitName::Train).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_line_reports_line() {
        let err = parse_split("{not json", "f.jsonl", SplitName::Train).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn snli_unlabeled_is_skipped() {
        let text = r#"{"annotator_labels":["neutral"],"captionID":"x","gold_label":"-","pairID":"p","sentence1":"A man.","sentence1_binary_parse":"( A man )","sentence2":"A person."}"#;
        let out = parse_split(text, "snli", SplitName::Train).unwrap();
        assert_eq!(out.skipped_unlabeled, 1);
        assert!(out.split.is_empty());
    }

    #[test]
    fn label_indices_are_canonical() {
        assert_eq!(Label::Entailment.index(), 0);
        assert_eq!(Label::Contradiction.index(), 1);
        assert_eq!(Label::Neutral.index(), 2);
    }

    proptest! {
        #[test]
        fn roundtrip_arbitrary_pairs(items in proptest::collection::vec(
            ("[a-z]{1,6}( [a-z0-9]{1,6}){0,5}", "[a-z]{1,6}( [a-z]{1,6}){0,3}", 0usize..3),
            0..8,
        )) {
            let pairs: Vec<NliPair> = items.iter().enumerate().map(|(i, (p, h, l))| {
                pair(&format!("id{i}"), p, h, Label::from_index(*l).unwrap())
            }).collect();
            let split = DatasetSplit::new(SplitName::Train, pairs);
            let back = parse_split(&render_split(&split), "mem", SplitName::Train).unwrap();
            prop_assert_eq!(back.split, split);
        }
    }
}
