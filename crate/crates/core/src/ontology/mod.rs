//! Concept graph, dictionary tagging, graph distances and the
//! distance-based attention between sentence pairs.

pub mod attention;
pub mod graph;
pub mod matching;
pub mod paths;

pub use attention::{kb_attend, kb_attention, kb_attention_batch, lexical_adjacency, KbAttention, DEFAULT_LAMBDA};
pub use graph::{shortest_path_len, Concept, ConceptGraph, Relation};
pub use matching::{coverage, match_concepts, ConceptMatch};
pub use paths::{
    ontology_pair_features, pair_features_from_tokens, path_histogram, PathHistogram, NO_PATH_SENTINEL, PAIR_FEATURE_NAMES,
    PATH_CAP,
};
