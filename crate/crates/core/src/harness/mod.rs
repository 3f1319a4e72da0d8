//! Training protocol, evaluation, transfer regimes, ensembling, multi-seed
//! reports and the hypothesis-only probe.

pub mod config;
pub mod experiment;
pub mod fidelity;
pub mod metrics;
pub mod train;

pub use config::{DataSource, ExperimentConfig, Learner, TransferMode};
pub use experiment::{
    gain_table, hypothesis_only, hypothesis_only_probe, render_gains_csv, run_experiment, run_experiment_with, run_seed,
    save_run, transfer_run, GainRow, GbmBundle, MultiSeedReport, Resources, RunResult, TrainedModel, TransferPlan,
};
pub use metrics::{early_stop_schedule, ensemble_predict, evaluate_predictions, EarlyStopping, Metrics, Summary};
pub use train::{dataset_loss, evaluate_model, predict_pairs, train_epoch, train_model, PhaseHistory, TrainOptions};
