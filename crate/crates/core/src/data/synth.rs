//! Template-generated NLI data with known gold labels.
//!
//! Each premise states that a condition is present or absent and yields
//! three pairs. Two template domains share the condition vocabulary but no
//! other words, which makes them usable as source and target of transfer
//! experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, DatasetSplit, Label, NliPair, SplitName};
use crate::error::{Error, Result};

/// Single-token condition names. The bundled demo ontology contains all of
/// them.
pub const CONCEPTS: &[&str] = &[
    "pneumonia",
    "diabetes",
    "hypertension",
    "asthma",
    "anemia",
    "sepsis",
    "cellulitis",
    "pancreatitis",
    "cirrhosis",
    "gout",
    "migraine",
    "epilepsy",
    "hypothyroidism",
    "copd",
    "arrhythmia",
    "osteoporosis",
    "dementia",
    "psoriasis",
    "tuberculosis",
    "nephrolithiasis",
];

const MODIFIERS: &[&str] = &[
    "mild",
    "severe",
    "chronic",
    "acute",
    "recurrent",
    "stable",
    "worsening",
    "longstanding",
];
const YEARS: std::ops::RangeInclusive<u32> = 2001..=2012;

/// Negation marker present in every negative clinical hypothesis.
pub const NEGATION_TOKEN: &str = "not";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthDomain {
    /// "patient has ..." / "the patient does not have ..."
    Clinical,
    /// "the subject shows ..." / "someone lacks ..."
    General,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub domain: SynthDomain,
    /// Plant a hypothesis-only cue: negation iff contradiction, hedge iff neutral.
    pub planted_artifact: bool,
    /// Number of condition names drawn from [`CONCEPTS`].
    pub concepts: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            train: 96,
            dev: 24,
            test: 24,
            domain: SynthDomain::Clinical,
            planted_artifact: false,
            concepts: CONCEPTS.len(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct PremiseSpec {
    positive: bool,
    concept: usize,
    modifier: usize,
    year: Option<u32>,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn premise_text(domain: SynthDomain, p: &PremiseSpec) -> String {
    let verb = match (domain, p.positive) {
        (SynthDomain::Clinical, true) => "patient has",
        (SynthDomain::Clinical, false) => "patient denies",
        (SynthDomain::General, true) => "the subject shows",
        (SynthDomain::General, false) => "the subject lacks",
    };
    let time = p.year.map(|y| format!(" since {y}")).unwrap_or_default();
    format!("{verb} {} {}{time} .", MODIFIERS[p.modifier], CONCEPTS[p.concept])
}

fn hypothesis_text(domain: SynthDomain, positive: bool, concept: &str) -> String {
    match (domain, positive) {
        (SynthDomain::Clinical, true) => format!("the patient has {concept}"),
        (SynthDomain::Clinical, false) => format!("the patient does {NEGATION_TOKEN} have {concept}"),
        (SynthDomain::General, true) => format!("someone shows {concept}"),
        (SynthDomain::General, false) => format!("someone lacks {concept}"),
    }
}

fn hedged_text(domain: SynthDomain, concept: &str) -> String {
    match domain {
        SynthDomain::Clinical => format!("the patient may have {concept}"),
        SynthDomain::General => format!("someone might show {concept}"),
    }
}

fn group(spec: &SynthSpec, split: SplitName, index: usize, p: &PremiseSpec, rng: &mut ChaCha8Rng) -> Vec<NliPair> {
    let premise = words(&premise_text(spec.domain, p));
    let concept = CONCEPTS[p.concept];
    let mut other = rng.gen_range(0..spec.concepts - 1);
    if other >= p.concept {
        other += 1;
    }
    let other = CONCEPTS[other];
    let hyps = if spec.planted_artifact {
        [
            (Label::Entailment, hypothesis_text(spec.domain, true, concept)),
            (Label::Contradiction, hypothesis_text(spec.domain, false, concept)),
            (Label::Neutral, hedged_text(spec.domain, other)),
        ]
    } else {
        let neutral_polarity = rng.gen_bool(0.5);
        [
            (Label::Entailment, hypothesis_text(spec.domain, p.positive, concept)),
            (Label::Contradiction, hypothesis_text(spec.domain, !p.positive, concept)),
            (Label::Neutral, hypothesis_text(spec.domain, neutral_polarity, other)),
        ]
    };
    let domain = match spec.domain {
        SynthDomain::Clinical => "clin",
        SynthDomain::General => "gen",
    };
    hyps.into_iter()
        .map(|(label, h)| NliPair {
            pair_id: format!("{domain}-{split}-{index}-{label}"),
            premise: premise.clone(),
            hypothesis: words(&h),
            label,
        })
        .collect()
}

/// Generates exactly `spec.{train,dev,test}` pairs with premise-disjoint
/// splits. Output depends only on `spec` and `seed`.
pub fn generate_synthetic_dataset(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    if spec.concepts < 2 || spec.concepts > CONCEPTS.len() {
        return Err(Error::Config {
            key: "synth.concepts".into(),
            message: format!("must be between 2 and {}", CONCEPTS.len()),
        });
    }
    let polarities: &[bool] = if spec.planted_artifact { &[true] } else { &[true, false] };
    let mut premises = Vec::new();
    for &positive in polarities {
        for concept in 0..spec.concepts {
            for modifier in 0..MODIFIERS.len() {
                for year in std::iter::once(None).chain(YEARS.map(Some)) {
                    premises.push(PremiseSpec {
                        positive,
                        concept,
                        modifier,
                        year,
                    });
                }
            }
        }
    }
    let sizes = [spec.train, spec.dev, spec.test];
    let needed: usize = sizes.iter().map(|n| n.div_ceil(3)).sum();
    if needed > premises.len() {
        return Err(Error::Config {
            key: "synth".into(),
            message: format!("needs {needed} distinct premises but only {} exist", premises.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    premises.shuffle(&mut rng);

    let mut cursor = 0;
    let mut splits = Vec::new();
    for (name, n) in SplitName::ALL.into_iter().zip(sizes) {
        let mut pairs = Vec::with_capacity(n);
        let mut index = 0;
        while pairs.len() < n {
            let g = group(spec, name, index, &premises[cursor], &mut rng);
            pairs.extend(g.into_iter().take(n - pairs.len()));
            cursor += 1;
            index += 1;
        }
        splits.push(DatasetSplit::new(name, pairs));
    }
    let test = splits.pop().expect("three splits");
    let dev = splits.pop().expect("three splits");
    let train = splits.pop().expect("three splits");
    Ok(Dataset { train, dev, test })
}
