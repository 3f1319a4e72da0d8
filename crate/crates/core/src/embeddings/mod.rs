//! Word vectors: text I/O, subword skip-gram training, fine-tune chains and
//! retrofitting to a lexical graph.

pub mod matrix;
pub mod retrofit;
pub mod sgns;
pub mod subword;

pub use matrix::{cosine, fallback_vector, EmbeddingMatrix};
pub use retrofit::{retrofit, retrofit_objective, Adjacency, BetaRule, RetrofitConfig, RetrofitOutput};
pub use sgns::{fine_tune_chain, train_subword_skipgram, SkipGramConfig, TrainedEmbeddings};
pub use subword::{SubwordIndex, SubwordTable};
