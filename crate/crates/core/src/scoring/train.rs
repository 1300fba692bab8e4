//! Training: averaged structured perceptron for arc-factored scorers and
//! averaged SGD on the local log-loss for action-factored scorers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::action::{
    action_scores, canonical_actions, normalize, ActionScorer, ActionSet, ParseState, TransitionSystem,
};
use super::arc::{best_label, label_feature_ids, label_prefixes, ArcFeatureTable, ArcScorer, NodeView};
use super::weights::Accumulator;
use super::{Capacity, Model, ModelKind};
use crate::decoding::max_spanning_tree;
use crate::error::Error;
use crate::structures::{Dataset, DepTree, Split, Structure, Task};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// L2 strength for the action-factored trainer; the perceptron ignores it.
    pub regularization: f64,
    pub data_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 0.1,
            seed: 1,
            regularization: 1e-4,
            data_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.regularization.is_finite() && self.regularization >= 0.0) {
            return Err(Error::Config("regularization must be non-negative".into()));
        }
        if !(self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "data_fraction must be in (0, 1], got {}",
                self.data_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainStats {
    /// Examples selected by `data_fraction`.
    pub examples_used: usize,
    /// Selected examples with no derivation (non-projective trees or labels
    /// outside the action set); action-factored training only.
    pub examples_skipped: usize,
    /// Mistakes in the final epoch: sentences with a wrong head or label
    /// for arc-factored training, wrong argmax steps for action-factored.
    pub last_epoch_errors: usize,
}

pub fn train(kind: ModelKind, capacity: Capacity, dataset: &Dataset, config: &TrainConfig) -> Result<Model, Error> {
    train_with_stats(kind, capacity, dataset, config).map(|(model, _)| model)
}

pub fn train_with_stats(
    kind: ModelKind,
    capacity: Capacity,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(Model, TrainStats), Error> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.split() != Split::Train {
        return Err(Error::Config("models are trained on the train split".into()));
    }
    if kind == ModelKind::ArcFactored && dataset.task() != Task::Dependency {
        return Err(Error::TaskMismatch {
            expected: Task::Dependency,
            found: dataset.task(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let keep = ((dataset.len() as f64 * config.data_fraction).round() as usize).clamp(1, dataset.len());
    order.truncate(keep);
    order.sort_unstable();
    log::debug!("training {} on {} of {} examples", kind.name(), keep, dataset.len());
    match kind {
        ModelKind::ArcFactored => train_arc(capacity, dataset, &order, config, &mut rng),
        ModelKind::ActionFactored => train_action(capacity, dataset, &order, config, &mut rng),
    }
}

fn collect_labels(dataset: &Dataset) -> Vec<String> {
    let mut labels = Vec::new();
    for gold in dataset.golds() {
        match gold {
            Structure::Dep(tree) => labels.extend(tree.labels().iter().cloned()),
            Structure::Span(tree) => collect_span_labels(tree.root(), &mut labels),
        }
    }
    labels.sort();
    labels.dedup();
    labels
}

fn collect_span_labels(node: &crate::structures::SpanNode, out: &mut Vec<String>) {
    if let crate::structures::SpanNode::Node { label, children } = node {
        out.push(label.clone());
        for child in children {
            collect_span_labels(child, out);
        }
    }
}

fn train_arc(
    capacity: Capacity,
    dataset: &Dataset,
    selected: &[usize],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Model, TrainStats), Error> {
    let labels = collect_labels(dataset);
    let lr = config.learning_rate;
    struct Item<'a> {
        table: ArcFeatureTable,
        gold: &'a DepTree,
        // per token: label-feature prefixes of the gold arc
        prefixes: Vec<Vec<super::FeatureHasher>>,
        gold_labels: Vec<usize>,
    }
    let items: Vec<Item> = selected
        .iter()
        .map(|&i| {
            let example = &dataset.examples()[i];
            let gold = example.gold.as_dep().expect("dependency dataset");
            let view = NodeView::new(&example.sentence);
            let prefixes = (0..gold.len())
                .map(|d| label_prefixes(&view, gold.head(d).node(), d + 1, capacity))
                .collect();
            let gold_labels = gold
                .labels()
                .iter()
                .map(|l| labels.binary_search(l).expect("label collected"))
                .collect();
            Item {
                table: ArcFeatureTable::new(&example.sentence, capacity),
                gold,
                prefixes,
                gold_labels,
            }
        })
        .collect();

    let mut acc = Accumulator::new();
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut errors = 0;
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        errors = 0;
        for &i in &order {
            let item = &items[i];
            let scores = item.table.scores(|ids| acc.dot(ids));
            let pred = max_spanning_tree(&scores);
            let mut wrong = false;
            for (dep, head) in pred.iter().enumerate() {
                let (g, p) = (item.gold.head(dep).node(), head.node());
                if g != p {
                    wrong = true;
                    for &id in item.table.arc(g, dep) {
                        acc.add(id, lr);
                    }
                    for &id in item.table.arc(p, dep) {
                        acc.add(id, -lr);
                    }
                }
                let label_ids: Vec<Vec<u64>> = labels
                    .iter()
                    .map(|l| label_feature_ids(&item.prefixes[dep], l))
                    .collect();
                let scores: Vec<f64> = label_ids.iter().map(|ids| acc.dot(ids)).collect();
                let best = labels
                    .binary_search(&best_label(&labels, &scores))
                    .expect("known label");
                let gold_label = item.gold_labels[dep];
                if best != gold_label {
                    wrong = true;
                    for &id in &label_ids[gold_label] {
                        acc.add(id, lr);
                    }
                    for &id in &label_ids[best] {
                        acc.add(id, -lr);
                    }
                }
            }
            errors += usize::from(wrong);
            acc.tick();
        }
        log::debug!("arc epoch {}: {} sentences with mistakes", epoch + 1, errors);
    }
    let scorer = ArcScorer::new(capacity, labels, acc.finish(), config.seed);
    let stats = TrainStats {
        examples_used: selected.len(),
        examples_skipped: 0,
        last_epoch_errors: errors,
    };
    Ok((Model::Arc(scorer), stats))
}

fn train_action(
    capacity: Capacity,
    dataset: &Dataset,
    selected: &[usize],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Model, TrainStats), Error> {
    let system = match dataset.task() {
        Task::Dependency => TransitionSystem::ArcStandard,
        Task::Semantic => TransitionSystem::Bracket,
    };
    let actions = ActionSet::new(system, collect_labels(dataset));
    let lr = config.learning_rate;
    let decay = lr * config.regularization;
    let mut skipped = 0;
    let mut items = Vec::new();
    for &i in selected {
        let example = &dataset.examples()[i];
        match canonical_actions(&actions, &example.gold) {
            Ok(seq) => items.push((NodeView::new(&example.sentence), example.sentence.len(), seq)),
            Err(Error::Derivation(msg)) => {
                log::debug!("skipping {}: {}", example.sentence.id(), msg);
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut acc = Accumulator::new();
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut errors = 0;
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        errors = 0;
        for &i in &order {
            let (view, len, seq) = &items[i];
            let mut state = ParseState::initial(system, *len);
            for &action in seq {
                let gold = actions.index(action);
                let legal = state.legal(&actions);
                let features = state.features(view, capacity, &actions);
                let scores = action_scores(&actions, &features, &legal, |id| acc.get(id));
                let probs = normalize(&scores);
                let argmax = legal
                    .iter()
                    .copied()
                    .fold(None, |best: Option<usize>, a| match best {
                        Some(b) if probs[b] >= probs[a] => Some(b),
                        _ => Some(a),
                    })
                    .expect("legal action exists");
                errors += usize::from(argmax != gold);
                for &a in &legal {
                    let gradient = f64::from(u8::from(a == gold)) - probs[a];
                    let name = actions.name(a);
                    for f in &features {
                        acc.update(f.field(name).finish(), |w| lr * gradient - decay * w);
                    }
                }
                state.apply(action, &actions);
                acc.tick();
            }
        }
        log::debug!("action epoch {}: {} wrong steps", epoch + 1, errors);
    }
    let scorer = ActionScorer::new(capacity, actions, acc.finish(), config.seed);
    let stats = TrainStats {
        examples_used: selected.len(),
        examples_skipped: skipped,
        last_epoch_errors: errors,
    };
    Ok((Model::Action(scorer), stats))
}
