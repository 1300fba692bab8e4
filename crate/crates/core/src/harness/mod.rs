//! Experiment runner: configs, update settings, sweeps, reports and the
//! command-line interface.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod report;
pub mod sweep;

pub use config::{
    DataConfig, ExperimentConfig, MitigationConfig, ModelSpec, RankerWeights, TrainSection, UpdateSetting,
    TRIAL_SEED_STRIDE,
};
pub use experiment::{load_data, read_dataset, run_experiment, run_experiment_on, trial_seed};
pub use report::{
    write_json, BcrStats, CellReport, Report, Stamp, Strategy, StrategyRow, SummaryRow, SweepAxis, SweepPoint,
    SweepReport, SweepSummaryRow,
};
pub use sweep::{run_sweep, run_sweep_on};
