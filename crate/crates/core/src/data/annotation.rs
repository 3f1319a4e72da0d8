use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agreement::cohens_kappa;
use super::dataset::{Label, NliPair};
use super::tokenize;
use crate::error::{Error, Result};

/// Instructions shown to annotators above each premise.
pub const PROMPT_INSTRUCTIONS: &str = include_str!("../../data/annotation_prompt.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PremiseCandidate {
    pub id: String,
    pub text: String,
}

/// Samples `n` candidates without replacement and renders one prompt block
/// per premise. Blocks are separated by a blank line.
pub fn prepare_annotation_batch(candidates: &[PremiseCandidate], n: usize, seed: u64) -> Result<String> {
    if n > candidates.len() {
        return Err(Error::invalid(format!(
            "requested {n} premises but only {} candidates are available",
            candidates.len()
        )));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let blocks: Vec<String> = order[..n].iter().map(|&i| render_block(&candidates[i])).collect();
    Ok(blocks.join("\n"))
}

fn render_block(c: &PremiseCandidate) -> String {
    format!("[premise {}]\n{}Premise: {}\n", c.id, PROMPT_INSTRUCTIONS, c.text.replace('\n', " "))
}

/// Recovers `(id, premise)` pairs from a prompt file.
pub fn parse_prompt_file(text: &str) -> Vec<PremiseCandidate> {
    let mut out = Vec::new();
    let mut id: Option<String> = None;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("[premise ").and_then(|r| r.strip_suffix(']')) {
            id = Some(rest.to_string());
        } else if let Some(premise) = line.strip_prefix("Premise: ") {
            if let Some(id) = id.take() {
                out.push(PremiseCandidate {
                    id,
                    text: premise.to_string(),
                });
            }
        }
    }
    out
}

/// Second-annotator judgment of a hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Judgment {
    DefinitelyTrue,
    MaybeTrue,
    DefinitelyFalse,
}

impl Judgment {
    pub fn label(self) -> Label {
        match self {
            Judgment::DefinitelyTrue => Label::Entailment,
            Judgment::MaybeTrue => Label::Neutral,
            Judgment::DefinitelyFalse => Label::Contradiction,
        }
    }
}

/// One line of an annotation return file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub premise_id: String,
    #[serde(default)]
    pub premise: Option<String>,
    #[serde(default)]
    pub hypothesis_entailment: Option<String>,
    #[serde(default)]
    pub hypothesis_neutral: Option<String>,
    #[serde(default)]
    pub hypothesis_contradiction: Option<String>,
    #[serde(default)]
    pub invalid: bool,
    pub annotator_id: String,
    /// Second annotator's reading of each hypothesis, keyed by intended label.
    #[serde(default)]
    pub judgments: Option<HashMap<Label, Judgment>>,
}

impl AnnotationRecord {
    pub fn hypothesis(&self, label: Label) -> Option<&str> {
        let h = match label {
            Label::Entailment => &self.hypothesis_entailment,
            Label::Neutral => &self.hypothesis_neutral,
            Label::Contradiction => &self.hypothesis_contradiction,
        };
        h.as_deref().filter(|s| !s.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discard {
    pub premise_id: String,
    pub annotator_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub pairs: Vec<NliPair>,
    pub discards: Vec<Discard>,
}

pub fn parse_annotation_records(text: &str, source: &str) -> Result<Vec<AnnotationRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(source, i + 1, e.to_string())))
        .collect()
}

/// Turns complete records into three pairs each. Records flagged invalid,
/// missing a hypothesis or whose premise text cannot be found go to the
/// discard log instead.
pub fn ingest_annotations(records: &[AnnotationRecord], premises: &HashMap<String, String>) -> Ingested {
    let mut out = Ingested::default();
    for rec in records {
        let discard = |reason: String| Discard {
            premise_id: rec.premise_id.clone(),
            annotator_id: rec.annotator_id.clone(),
            reason,
        };
        if rec.invalid {
            out.discards.push(discard("premise flagged invalid by annotator".into()));
            continue;
        }
        let Some(premise) = rec.premise.as_deref().or_else(|| premises.get(&rec.premise_id).map(String::as_str)) else {
            out.discards.push(discard("premise text not found".into()));
            continue;
        };
        let premise_tokens = tokenize(premise);
        if premise_tokens.is_empty() {
            out.discards.push(discard("premise is empty".into()));
            continue;
        }
        let missing: Vec<&str> = Label::ALL
            .iter()
            .filter(|&&l| rec.hypothesis(l).map_or(true, |h| tokenize(h).is_empty()))
            .map(|l| l.as_str())
            .collect();
        if !missing.is_empty() {
            out.discards.push(discard(format!("missing hypothesis for {}", missing.join(", "))));
            continue;
        }
        for label in [Label::Entailment, Label::Neutral, Label::Contradiction] {
            let hyp = tokenize(rec.hypothesis(label).expect("checked above"));
            out.pairs.push(NliPair {
                pair_id: format!("{}-{}", rec.premise_id, label),
                premise: premise_tokens.clone(),
                hypothesis: hyp,
                label,
            });
        }
    }
    out
}

/// Kappa between intended labels and second-annotator judgments over all
/// judged hypotheses of valid records. `None` when nothing was judged.
pub fn annotation_agreement(records: &[AnnotationRecord]) -> Result<Option<(f64, usize)>> {
    let mut intended = Vec::new();
    let mut judged = Vec::new();
    for rec in records.iter().filter(|r| !r.invalid) {
        if let Some(j) = &rec.judgments {
            for label in Label::ALL {
                if let Some(judgment) = j.get(&label) {
                    intended.push(label);
                    judged.push(judgment.label());
                }
            }
        }
    }
    if intended.is_empty() {
        return Ok(None);
    }
    Ok(Some((cohens_kappa(&intended, &judged)?, intended.len())))
}
