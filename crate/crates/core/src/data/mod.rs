//! Datasets, tokenization and the clinical-note corpus pipeline.

pub mod agreement;
pub mod annotation;
pub mod dataset;
pub mod sections;
pub mod sentences;
pub mod split;
pub mod stats;
pub mod synth;
pub mod tokenize;
pub mod vocab;

pub use agreement::{cohens_kappa, kappa_from_confusion};
pub use annotation::{
    annotation_agreement, ingest_annotations, parse_annotation_records, parse_prompt_file, prepare_annotation_batch,
    AnnotationRecord, Discard, Ingested, Judgment, PremiseCandidate,
};
pub use dataset::{parse_split, read_split, render_split, write_split, Dataset, DatasetSplit, Label, NliPair, SplitName};
pub use sections::{segment_note_sections, NoteSection, SectionAliases, UNNAMED};
pub use sentences::{split_sentences, SentenceSplitter};
pub use split::split_by_premise;
pub use stats::{dataset_stats, DatasetStats};
pub use synth::{generate_synthetic_dataset, SynthDomain, SynthSpec};
pub use tokenize::{tokenize, Tokenizer};
pub use vocab::{batchify, build_vocab, Batch, PaddedSeq, Vocabulary};
