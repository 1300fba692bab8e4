//! Serialized experiment and sweep reports.
//!
//! Field order is fixed by declaration order. Percentages are two-decimal
//! strings next to the raw counts they were derived from.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Error;
use crate::metrics::{format_percent, FlipRecord, FlipReport, MetricKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Untreated,
    Distillation,
    Ensemble,
    Bcr,
    OracleAcc,
    OracleNfr,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Untreated => "untreated",
            Strategy::Distillation => "distillation",
            Strategy::Ensemble => "ensemble",
            Strategy::Bcr => "bcr",
            Strategy::OracleAcc => "oracle_acc",
            Strategy::OracleNfr => "oracle_nfr",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Seeds and versions needed to reproduce a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub crate_version: String,
    pub seed: u64,
    pub num_trials: usize,
    pub trial_seed_stride: u64,
}

impl Stamp {
    pub fn new(config: &ExperimentConfig) -> Self {
        Stamp {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            num_trials: config.num_trials,
            trial_seed_stride: super::config::TRIAL_SEED_STRIDE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: Strategy,
    pub metrics: Vec<FlipRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcrStats {
    pub sentences: usize,
    pub candidates: usize,
    pub tie_breaks: usize,
    pub fallbacks: usize,
}

/// One (update setting, trial) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub setting: String,
    pub trial: usize,
    pub old_seed: u64,
    pub new_seed: u64,
    pub rows: Vec<StrategyRow>,
    pub bcr: BcrStats,
}

impl CellReport {
    pub fn record(&self, strategy: Strategy, metric: MetricKind) -> Option<&FlipRecord> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy)?
            .metrics
            .iter()
            .find(|m| m.metric == metric)
    }
}

/// Mean over trials of one (setting, strategy, metric) triple. `nfi` is
/// averaged over the trials where it is defined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setting: String,
    pub strategy: Strategy,
    pub metric: MetricKind,
    pub trials: usize,
    pub acc_old: String,
    pub acc_new: String,
    pub nfr: String,
    pub nfi: Option<String>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Groups per-trial records by (setting, strategy, metric) in first-seen
/// order and averages them.
fn summarize<'a>(items: impl IntoIterator<Item = (&'a str, Strategy, &'a FlipRecord)>) -> Vec<SummaryRow> {
    let mut order: Vec<(String, Strategy, MetricKind)> = Vec::new();
    let mut groups: BTreeMap<(String, Strategy, MetricKind), Vec<FlipReport>> = BTreeMap::new();
    for (setting, strategy, record) in items {
        let key = (setting.to_string(), strategy, record.metric);
        let entry = groups.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(record.counts());
    }
    order
        .into_iter()
        .map(|key| {
            let reports = &groups[&key];
            let (setting, strategy, metric) = key;
            SummaryRow {
                setting,
                strategy,
                metric,
                trials: reports.len(),
                acc_old: format_percent(mean(reports.iter().map(FlipReport::acc_old)).unwrap_or(0.0)),
                acc_new: format_percent(mean(reports.iter().map(FlipReport::acc_new)).unwrap_or(0.0)),
                nfr: format_percent(mean(reports.iter().map(FlipReport::nfr)).unwrap_or(0.0)),
                nfi: mean(reports.iter().filter_map(FlipReport::nfi)).map(format_percent),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub stamp: Stamp,
    pub config: ExperimentConfig,
    pub cells: Vec<CellReport>,
    pub summary: Vec<SummaryRow>,
}

impl Report {
    pub fn new(config: &ExperimentConfig, cells: Vec<CellReport>) -> Self {
        let summary = summarize(cells.iter().flat_map(|c| {
            c.rows
                .iter()
                .flat_map(move |r| r.metrics.iter().map(move |m| (c.setting.as_str(), r.strategy, m)))
        }));
        Report {
            config_hash: config.hash(),
            stamp: Stamp::new(config),
            config: config.clone(),
            cells,
            summary,
        }
    }

    pub fn cells_for<'a>(&'a self, setting: &'a str) -> impl Iterator<Item = &'a CellReport> + 'a {
        self.cells.iter().filter(move |c| c.setting == setting)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NumCandidates,
    EnsembleSize,
    DropoutRate,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NumCandidates => "num_candidates",
            SweepAxis::EnsembleSize => "ensemble_size",
            SweepAxis::DropoutRate => "dropout_rate",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "num_candidates" => Ok(SweepAxis::NumCandidates),
            "ensemble_size" => Ok(SweepAxis::EnsembleSize),
            "dropout_rate" => Ok(SweepAxis::DropoutRate),
            other => Err(Error::Config(format!("unknown sweep axis {:?}", other))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub setting: String,
    pub trial: usize,
    pub value: f64,
    pub strategy: Strategy,
    pub metrics: Vec<FlipRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub value: f64,
    #[serde(flatten)]
    pub row: SummaryRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config_hash: String,
    pub stamp: Stamp,
    pub config: ExperimentConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub points: Vec<SweepPoint>,
    pub summary: Vec<SweepSummaryRow>,
}

impl SweepReport {
    pub fn new(config: &ExperimentConfig, axis: SweepAxis, values: Vec<f64>, points: Vec<SweepPoint>) -> Self {
        let mut summary = Vec::new();
        for &value in &values {
            let rows = summarize(
                points
                    .iter()
                    .filter(|p| p.value == value)
                    .flat_map(|p| p.metrics.iter().map(move |m| (p.setting.as_str(), p.strategy, m))),
            );
            summary.extend(rows.into_iter().map(|row| SweepSummaryRow { value, row }));
        }
        SweepReport {
            config_hash: config.hash(),
            stamp: Stamp::new(config),
            config: config.clone(),
            axis,
            values,
            points,
            summary,
        }
    }

    /// The record at one point of the series.
    pub fn record(
        &self,
        setting: &str,
        trial: usize,
        value: f64,
        strategy: Strategy,
        metric: MetricKind,
    ) -> Option<&FlipRecord> {
        self.points
            .iter()
            .find(|p| p.setting == setting && p.trial == trial && p.value == value && p.strategy == strategy)?
            .metrics
            .iter()
            .find(|m| m.metric == metric)
    }

    /// One CSV row per (point, metric).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), Error> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record([
            "axis",
            "value",
            "setting",
            "trial",
            "strategy",
            "metric",
            "total_units",
            "negative_flips",
            "acc_old",
            "acc_new",
            "nfr",
            "nfi",
        ])
        .map_err(csv_err)?;
        for p in &self.points {
            for m in &p.metrics {
                w.write_record([
                    self.axis.name().to_string(),
                    p.value.to_string(),
                    p.setting.clone(),
                    p.trial.to_string(),
                    p.strategy.name().to_string(),
                    m.metric.name().to_string(),
                    m.total_units.to_string(),
                    m.negative_flips.to_string(),
                    m.acc_old.clone(),
                    m.acc_new.clone(),
                    m.nfr.clone(),
                    m.nfi.clone().unwrap_or_default(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Writes pretty JSON through a temporary file so a failed run never
/// leaves a partial report behind.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), Error> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("json.tmp");
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    text.push('\n');
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(metric: MetricKind, neg: usize, pos: usize) -> FlipRecord {
        FlipReport {
            metric,
            total_units: 10,
            positive_congruent: 5,
            negative_flips: neg,
            positive_flips: pos,
            both_wrong: 5 - neg - pos,
        }
        .to_record()
    }

    #[test]
    fn summary_averages_trials_in_first_seen_order() {
        let a = record(MetricKind::Uas, 1, 2);
        let b = record(MetricKind::Uas, 3, 0);
        let c = record(MetricKind::Ucm, 0, 0);
        let rows = summarize(vec![
            ("seed", Strategy::Bcr, &a),
            ("seed", Strategy::Bcr, &c),
            ("seed", Strategy::Bcr, &b),
        ]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].metric, MetricKind::Uas);
        assert_eq!(rows[0].trials, 2);
        assert_eq!(rows[0].nfr, "20.00");
        // NFI 1/3 and 3/5 of the new errors
        assert_eq!(rows[0].nfi.as_deref(), Some("46.67"));
    }

    #[test]
    fn axis_names_round_trip() {
        for axis in [
            SweepAxis::NumCandidates,
            SweepAxis::EnsembleSize,
            SweepAxis::DropoutRate,
        ] {
            assert_eq!(axis.name().parse::<SweepAxis>().unwrap(), axis);
        }
    }
}
