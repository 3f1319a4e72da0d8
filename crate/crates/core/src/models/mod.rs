//! Neural sentence-pair classifiers and the feature-based boosting baseline.

pub mod features;
pub mod gbm;
pub mod neural;
pub mod spec;

pub use features::{
    bleu, extract_features, feature_manifest_hash, feature_names, levenshtein, pair_features, FeatureContext, FeatureVector,
    IdfTable, DEFAULT_NEGATIONS, NUM_FEATURES,
};
pub use gbm::{gbm_predict, gbm_train, GbmConfig, GbmModel};
pub use neural::{forward, jitter, AttentionTrace, ForwardContext, ForwardOutput, ModelManifest, NliModel, DEFAULT_HEAD};
pub use spec::{Architecture, ModelSpec, Prediction};
