//! Trains old/new model pairs and applies every mitigation strategy.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, ModelSpec, UpdateSetting, TRIAL_SEED_STRIDE};
use super::report::{BcrStats, CellReport, Report, Strategy, StrategyRow};
use crate::decoding::{CandidateGenerator, CandidateSet, SamplingConfig};
use crate::error::Error;
use crate::metrics::{flip_report, FlipRecord, MetricKind};
use crate::mitigation::{kd_pseudo_dataset, oracle_select, select_by_scores, Ensemble, OracleObjective, RerankPolicy};
use crate::scoring::{train, Model};
use crate::structures::{read_conllu, read_top, Dataset, Sentence, Split, Structure, Task};
use crate::synth;

/// Offset between the synthetic train and test generator seeds.
const SYNTH_TEST_OFFSET: u64 = 0x5eed;

pub fn read_dataset(path: &Path, task: Task, split: Split) -> Result<Dataset, Error> {
    let reader = BufReader::new(File::open(path)?);
    match task {
        Task::Dependency => read_conllu(reader, split),
        Task::Semantic => read_top(reader, split),
    }
}

/// A seeded subset of `size` examples in corpus order.
fn subsample(dataset: Dataset, size: usize, seed: u64) -> Dataset {
    if dataset.len() <= size {
        return dataset;
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(size);
    idx.sort_unstable();
    dataset.select(&idx)
}

/// Train and test sets of a config: the configured files subsampled by
/// seed, or a synthetic corpus.
pub fn load_data(config: &ExperimentConfig) -> Result<(Dataset, Dataset), Error> {
    let d = &config.data;
    match (&d.train, &d.test) {
        (Some(train), Some(test)) => {
            let tr = read_dataset(train, d.task, Split::Train)?;
            let te = read_dataset(test, d.task, Split::Test)?;
            Ok((
                subsample(tr, d.train_size, config.seed),
                subsample(te, d.test_size, config.seed.wrapping_add(SYNTH_TEST_OFFSET)),
            ))
        }
        _ => {
            let test_seed = config.seed.wrapping_add(SYNTH_TEST_OFFSET);
            Ok(match d.task {
                Task::Dependency => (
                    synth::dependency_dataset(d.train_size, config.seed, Split::Train, "train"),
                    synth::dependency_dataset(d.test_size, test_seed, Split::Test, "test"),
                ),
                Task::Semantic => (
                    synth::semantic_dataset(d.train_size, config.seed, Split::Train, "train"),
                    synth::semantic_dataset(d.test_size, test_seed, Split::Test, "test"),
                ),
            })
        }
    }
}

/// Seed of a model spec in a given trial.
pub fn trial_seed(config: &ExperimentConfig, spec_seed: u64, trial: usize) -> u64 {
    spec_seed
        .wrapping_add(config.seed)
        .wrapping_add(trial as u64 * TRIAL_SEED_STRIDE)
}

/// Write-once cache of trained models keyed by spec, seed and training
/// data.
pub(crate) struct Trainer<'a> {
    config: &'a ExperimentConfig,
    cache: Mutex<HashMap<String, Arc<Model>>>,
}

impl<'a> Trainer<'a> {
    pub(crate) fn new(config: &'a ExperimentConfig) -> Self {
        Trainer {
            config,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub(crate) fn model(
        &self,
        spec: &ModelSpec,
        seed: u64,
        data: &Dataset,
        data_tag: &str,
    ) -> Result<Arc<Model>, Error> {
        let key = format!(
            "{:?}|{:?}|{}|{}|{}",
            spec.kind, spec.capacity, spec.data_fraction, seed, data_tag
        );
        if let Some(m) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(m.clone());
        }
        log::info!(
            "training {} {:?} seed {} on {}",
            spec.kind.name(),
            spec.capacity,
            seed,
            data_tag
        );
        let config = self.config.train.train_config(seed, spec.data_fraction);
        let model = Arc::new(train(spec.kind, spec.capacity, data, &config)?);
        Ok(self
            .cache
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert(model)
            .clone())
    }
}

pub(crate) fn predict_all<F>(sentences: &[&Sentence], f: F) -> Result<Vec<Structure>, Error>
where
    F: Fn(&Sentence) -> Result<Structure, Error> + Sync,
{
    sentences.par_iter().map(|s| f(s)).collect()
}

/// Everything the strategies of one cell share.
pub(crate) struct CellContext<'a> {
    pub config: &'a ExperimentConfig,
    pub sentences: Vec<&'a Sentence>,
    pub golds: Vec<Structure>,
    pub old: Arc<Model>,
    pub new: Arc<Model>,
    pub old_preds: Vec<Structure>,
    pub old_seed: u64,
    pub new_seed: u64,
}

impl<'a> CellContext<'a> {
    pub(crate) fn prepare(
        trainer: &Trainer,
        config: &'a ExperimentConfig,
        train: &Dataset,
        test: &'a Dataset,
        setting: &UpdateSetting,
        trial: usize,
    ) -> Result<Self, Error> {
        let label = |what: &str| format!("{} (setting {}, trial {})", what, setting.name, trial);
        let old_seed = trial_seed(config, setting.old.seed, trial);
        let new_seed = trial_seed(config, setting.new.seed, trial);
        let old = trainer
            .model(&setting.old, old_seed, train, "gold")
            .map_err(|e| e.in_stage(label("training old model")))?;
        let new = trainer
            .model(&setting.new, new_seed, train, "gold")
            .map_err(|e| e.in_stage(label("training new model")))?;
        let sentences: Vec<&Sentence> = test.sentences().collect();
        let old_preds =
            predict_all(&sentences, |s| old.predict(s)).map_err(|e| e.in_stage(label("old model decoding")))?;
        Ok(CellContext {
            config,
            sentences,
            golds: test.golds().cloned().collect(),
            old,
            new,
            old_preds,
            old_seed,
            new_seed,
        })
    }

    pub(crate) fn records(&self, preds: &[Structure], metric: MetricKind) -> Result<FlipRecord, Error> {
        Ok(flip_report(
            &self.sentences,
            &self.old_preds,
            preds,
            &self.golds,
            metric,
            self.config.exclude_punct,
        )?
        .to_record())
    }

    pub(crate) fn row(&self, strategy: Strategy, preds: &[Structure]) -> Result<StrategyRow, Error> {
        let metrics = self
            .config
            .metrics
            .iter()
            .map(|&m| self.records(preds, m))
            .collect::<Result<_, _>>()?;
        Ok(StrategyRow { strategy, metrics })
    }

    pub(crate) fn candidates(&self, sampling: SamplingConfig) -> Result<Vec<CandidateSet>, Error> {
        let generator = CandidateGenerator::new(&self.new, sampling)?;
        self.sentences.par_iter().map(|s| generator.generate(s)).collect()
    }

    /// Ranker scores of every candidate.
    pub(crate) fn rerank_scores(&self, sets: &[CandidateSet]) -> Result<Vec<Vec<f64>>, Error> {
        let w = self.config.mitigation.rankers;
        let policy = RerankPolicy::new(vec![(&*self.old, w.old), (&*self.new, w.new)])?;
        self.sentences
            .par_iter()
            .zip(sets)
            .map(|(s, set)| {
                set.candidates
                    .iter()
                    .map(|c| policy.score(s, &c.structure))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect()
    }

    /// BCR over the first `limit` candidates of each set.
    pub(crate) fn bcr(&self, sets: &[CandidateSet], scores: &[Vec<f64>], limit: usize) -> (Vec<Structure>, BcrStats) {
        let mut stats = BcrStats {
            sentences: sets.len(),
            candidates: 0,
            tie_breaks: 0,
            fallbacks: 0,
        };
        let preds = sets
            .iter()
            .zip(scores)
            .map(|(set, sc)| {
                let set = set.truncated(limit);
                let sel = select_by_scores(&set, &sc[..set.len()]);
                stats.candidates += set.len();
                stats.tie_breaks += sel.tie_broken as usize;
                stats.fallbacks += sel.fallback as usize;
                set.candidates[sel.index].structure.clone()
            })
            .collect();
        (preds, stats)
    }

    /// Gold-aware selection over the first `limit` candidates, one metric.
    pub(crate) fn oracle(
        &self,
        sets: &[CandidateSet],
        limit: usize,
        objective: OracleObjective,
        metric: MetricKind,
    ) -> Result<FlipRecord, Error> {
        let preds = (0..sets.len())
            .into_par_iter()
            .map(|i| {
                let set = sets[i].truncated(limit);
                let pick = oracle_select(
                    self.sentences[i],
                    &set,
                    &self.golds[i],
                    &self.old_preds[i],
                    objective,
                    metric,
                    self.config.exclude_punct,
                )?;
                Ok(set.candidates[pick].structure.clone())
            })
            .collect::<Result<Vec<_>, Error>>()?;
        self.records(&preds, metric)
    }

    pub(crate) fn oracle_row(
        &self,
        sets: &[CandidateSet],
        limit: usize,
        objective: OracleObjective,
    ) -> Result<StrategyRow, Error> {
        let strategy = match objective {
            OracleObjective::Acc => Strategy::OracleAcc,
            OracleObjective::Nfr => Strategy::OracleNfr,
        };
        let metrics = self
            .config
            .metrics
            .iter()
            .map(|&m| self.oracle(sets, limit, objective, m))
            .collect::<Result<_, _>>()?;
        Ok(StrategyRow { strategy, metrics })
    }

    /// Ensemble of the new model and `size - 1` reseeded copies.
    pub(crate) fn ensemble(
        &self,
        trainer: &Trainer,
        setting: &UpdateSetting,
        train: &Dataset,
        size: usize,
    ) -> Result<Ensemble, Error> {
        let members = (0..size as u64)
            .into_par_iter()
            .map(|i| {
                trainer
                    .model(&setting.new, self.new_seed.wrapping_add(i), train, "gold")
                    .map(|m| (*m).clone())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ensemble::new(members)
    }

    /// Sampling config of this cell: the configured one with its seed
    /// shifted like the model seeds.
    pub(crate) fn sampling(&self, trial: usize) -> SamplingConfig {
        let mut s = self.config.mitigation.bcr;
        s.seed = trial_seed(self.config, s.seed, trial);
        s
    }
}

fn run_cell(
    trainer: &Trainer,
    config: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    setting: &UpdateSetting,
    trial: usize,
) -> Result<CellReport, Error> {
    let ctx = CellContext::prepare(trainer, config, train, test, setting, trial)?;
    let label = |what: &str| format!("{} (setting {}, trial {})", what, setting.name, trial);
    let mitigation = &config.mitigation;
    let mut rows = Vec::new();

    let untreated =
        predict_all(&ctx.sentences, |s| ctx.new.predict(s)).map_err(|e| e.in_stage(label("new model decoding")))?;
    rows.push(ctx.row(Strategy::Untreated, &untreated)?);

    if mitigation.distillation {
        let stage = label("distillation");
        let pseudo = kd_pseudo_dataset(&ctx.old, train).map_err(|e| e.in_stage(&stage))?;
        let tag = format!("kd:{:?}:{:?}:{}", setting.old.kind, setting.old.capacity, ctx.old_seed);
        let student = trainer
            .model(&setting.new, ctx.new_seed, &pseudo, &tag)
            .map_err(|e| e.in_stage(&stage))?;
        let preds = predict_all(&ctx.sentences, |s| student.predict(s)).map_err(|e| e.in_stage(&stage))?;
        rows.push(ctx.row(Strategy::Distillation, &preds)?);
    }

    if mitigation.ensemble_size > 0 {
        let stage = label("ensemble");
        let ensemble = ctx
            .ensemble(trainer, setting, train, mitigation.ensemble_size)
            .map_err(|e| e.in_stage(&stage))?;
        let preds = predict_all(&ctx.sentences, |s| ensemble.predict(s)).map_err(|e| e.in_stage(&stage))?;
        rows.push(ctx.row(Strategy::Ensemble, &preds)?);
    }

    let stage = label("candidate generation");
    let sets = ctx.candidates(ctx.sampling(trial)).map_err(|e| e.in_stage(&stage))?;
    let scores = ctx.rerank_scores(&sets).map_err(|e| e.in_stage(label("re-ranking")))?;
    let (bcr_preds, bcr) = ctx.bcr(&sets, &scores, usize::MAX);
    rows.push(ctx.row(Strategy::Bcr, &bcr_preds)?);

    if mitigation.oracles {
        rows.push(ctx.oracle_row(&sets, usize::MAX, OracleObjective::Acc)?);
        rows.push(ctx.oracle_row(&sets, usize::MAX, OracleObjective::Nfr)?);
    }

    Ok(CellReport {
        setting: setting.name.clone(),
        trial,
        old_seed: ctx.old_seed,
        new_seed: ctx.new_seed,
        rows,
        bcr,
    })
}

/// Runs every (setting, trial) cell. Deterministic given the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report, Error> {
    config.validate()?;
    let (train, test) = load_data(config).map_err(|e| e.in_stage("loading data"))?;
    run_experiment_on(config, &train, &test)
}

/// [`run_experiment`] on already loaded data.
pub fn run_experiment_on(config: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<Report, Error> {
    config.validate()?;
    check_data(config, train, test)?;
    let trainer = Trainer::new(config);
    let mut cells = Vec::new();
    for trial in 0..config.num_trials {
        for setting in &config.settings {
            log::info!("cell: setting {}, trial {}", setting.name, trial);
            cells.push(run_cell(&trainer, config, train, test, setting, trial)?);
        }
    }
    Ok(Report::new(config, cells))
}

pub(crate) fn check_data(config: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<(), Error> {
    for d in [train, test] {
        if d.is_empty() {
            return Err(Error::EmptyDataset.in_stage("loading data"));
        }
        if d.task() != config.data.task {
            return Err(Error::TaskMismatch {
                expected: config.data.task,
                found: d.task(),
            }
            .in_stage("loading data"));
        }
    }
    Ok(())
}
