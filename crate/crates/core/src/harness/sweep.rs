//! One-parameter sweeps over trained model pairs.
//!
//! * `num_candidates`: BCR and both oracles over prefixes of a single
//!   candidate pool. A value counts the deterministic prediction, so 1 is
//!   the untreated decode and larger values are supersets of smaller ones.
//! * `ensemble_size`: ensembles of the new model and its reseeded copies.
//! * `dropout_rate`: BCR and both oracles with dropout-p sampling at each
//!   rate and the configured candidate count.

use super::config::ExperimentConfig;
use super::experiment::{check_data, load_data, predict_all, CellContext, Trainer};
use super::report::{Strategy, SweepAxis, SweepPoint, SweepReport};
use crate::decoding::Method;
use crate::error::Error;
use crate::mitigation::OracleObjective;
use crate::structures::Dataset;

fn check_values(axis: SweepAxis, values: &[f64]) -> Result<(), Error> {
    if values.is_empty() {
        return Err(Error::Config("a sweep needs at least one value".into()));
    }
    for &v in values {
        let ok = match axis {
            SweepAxis::NumCandidates | SweepAxis::EnsembleSize => v >= 1.0 && v.fract() == 0.0,
            SweepAxis::DropoutRate => (0.0..1.0).contains(&v),
        };
        if !ok {
            return Err(Error::Config(format!("invalid {} value {}", axis, v)));
        }
    }
    Ok(())
}

pub fn run_sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepReport, Error> {
    config.validate()?;
    check_values(axis, values)?;
    let (train, test) = load_data(config).map_err(|e| e.in_stage("loading data"))?;
    run_sweep_on(config, axis, values, &train, &test)
}

/// [`run_sweep`] on already loaded data.
pub fn run_sweep_on(
    config: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    train: &Dataset,
    test: &Dataset,
) -> Result<SweepReport, Error> {
    config.validate()?;
    check_values(axis, values)?;
    check_data(config, train, test)?;
    let trainer = Trainer::new(config);
    let mut points = Vec::new();
    for trial in 0..config.num_trials {
        for setting in &config.settings {
            let label = |what: &str| format!("{} (setting {}, trial {})", what, setting.name, trial);
            let ctx = CellContext::prepare(&trainer, config, train, test, setting, trial)?;
            let mut push = |value: f64, row: super::report::StrategyRow| {
                points.push(SweepPoint {
                    setting: setting.name.clone(),
                    trial,
                    value,
                    strategy: row.strategy,
                    metrics: row.metrics,
                });
            };
            match axis {
                SweepAxis::NumCandidates => {
                    let largest = values.iter().copied().fold(1.0, f64::max) as usize;
                    let mut sampling = ctx.sampling(trial);
                    sampling.num_candidates = (largest - 1).max(1);
                    let sets = ctx
                        .candidates(sampling)
                        .map_err(|e| e.in_stage(label("candidate generation")))?;
                    let scores = ctx.rerank_scores(&sets).map_err(|e| e.in_stage(label("re-ranking")))?;
                    for &v in values {
                        let limit = v as usize;
                        let (preds, _) = ctx.bcr(&sets, &scores, limit);
                        push(v, ctx.row(Strategy::Bcr, &preds)?);
                        push(v, ctx.oracle_row(&sets, limit, OracleObjective::Nfr)?);
                        push(v, ctx.oracle_row(&sets, limit, OracleObjective::Acc)?);
                    }
                }
                SweepAxis::EnsembleSize => {
                    for &v in values {
                        let stage = label("ensemble");
                        let ensemble = ctx
                            .ensemble(&trainer, setting, train, v as usize)
                            .map_err(|e| e.in_stage(&stage))?;
                        let preds =
                            predict_all(&ctx.sentences, |s| ensemble.predict(s)).map_err(|e| e.in_stage(&stage))?;
                        push(v, ctx.row(Strategy::Ensemble, &preds)?);
                    }
                }
                SweepAxis::DropoutRate => {
                    for &v in values {
                        let mut sampling = ctx.sampling(trial);
                        sampling.method = Method::DropoutP { rate: v };
                        let sets = ctx
                            .candidates(sampling)
                            .map_err(|e| e.in_stage(label("candidate generation")))?;
                        let scores = ctx.rerank_scores(&sets).map_err(|e| e.in_stage(label("re-ranking")))?;
                        let (preds, _) = ctx.bcr(&sets, &scores, usize::MAX);
                        push(v, ctx.row(Strategy::Bcr, &preds)?);
                        push(v, ctx.oracle_row(&sets, usize::MAX, OracleObjective::Nfr)?);
                        push(v, ctx.oracle_row(&sets, usize::MAX, OracleObjective::Acc)?);
                    }
                }
            }
        }
    }
    Ok(SweepReport::new(config, axis, values.to_vec(), points))
}
