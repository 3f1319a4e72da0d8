use serde::{Deserialize, Serialize};

use super::graph::ConceptGraph;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptMatch {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub concept: String,
    pub surface: String,
}

/// Dictionary tagging: scanning left to right, take the longest surface
/// form starting at each position and continue after it.
pub fn match_concepts(tokens: &[String], graph: &ConceptGraph) -> Vec<ConceptMatch> {
    match_indices(tokens, graph)
        .into_iter()
        .map(|(start, end, idx)| ConceptMatch {
            start,
            end,
            concept: graph.concept(idx).id.clone(),
            surface: tokens[start..end].join(" "),
        })
        .collect()
}

/// `(start, end, concept index)` triples of [`match_concepts`].
pub(crate) fn match_indices(tokens: &[String], graph: &ConceptGraph) -> Vec<(usize, usize, usize)> {
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lower.len() {
        let longest = (1..=graph.max_surface_len().min(lower.len() - i))
            .rev()
            .find_map(|len| graph.surface_lookup(&lower[i..i + len]).map(|c| (len, c)));
        match longest {
            Some((len, c)) => {
                out.push((i, i + len, c));
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

/// Concept index covering each position, if any.
pub fn coverage(tokens: &[String], graph: &ConceptGraph) -> Vec<Option<usize>> {
    let mut cov = vec![None; tokens.len()];
    for (s, e, c) in match_indices(tokens, graph) {
        cov[s..e].fill(Some(c));
    }
    cov
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tokenize;
    use crate::ontology::graph::{Concept, Relation};
    use proptest::prelude::*;

    fn graph() -> ConceptGraph {
        let c = |id: &str, name: &str| Concept {
            id: id.into(),
            name: name.into(),
            synonyms: vec![],
            semantic_type: "disorder".into(),
            edges: Vec::<Relation>::new(),
        };
        ConceptGraph::new(vec![
            c("hf", "heart failure"),
            c("chf", "congestive heart failure"),
            c("h", "heart"),
        ])
        .unwrap()
    }

    #[test]
    fn longest_match_wins() {
        let m = match_concepts(&tokenize("congestive heart failure"), &graph());
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].start, m[0].end, m[0].concept.as_str()), (0, 3, "chf"));
    }

    #[test]
    fn no_match() {
        assert!(match_concepts(&tokenize("the patient is well"), &graph()).is_empty());
    }

    #[test]
    fn demo_pneumonia() {
        let m = match_concepts(&tokenize("The patient has pneumonia"), &ConceptGraph::demo());
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].start, m[0].end), (3, 4));
        assert_eq!(m[0].surface, "pneumonia");
    }

    #[test]
    fn case_insensitive() {
        let toks: Vec<String> = ["Heart", "Failure"].map(String::from).to_vec();
        assert_eq!(match_concepts(&toks, &graph())[0].concept, "hf");
    }

    proptest! {
        #[test]
        fn spans_disjoint_and_maximal(words in proptest::collection::vec(
            prop_oneof![Just("heart"), Just("failure"), Just("congestive"), Just("x")], 0..12)) {
            let toks: Vec<String> = words.iter().map(|s| s.to_string()).collect();
            let g = graph();
            let m = match_indices(&toks, &g);
            for w in m.windows(2) {
                prop_assert!(w[0].1 <= w[1].0);
            }
            for &(s, e, _) in &m {
                for longer in e + 1..=toks.len().min(s + g.max_surface_len()) {
                    prop_assert!(g.surface_lookup(&toks[s..longer]).is_none());
                }
            }
        }
    }
}
