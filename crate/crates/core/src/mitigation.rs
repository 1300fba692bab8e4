//! Regression mitigation: prediction ensembles, sequence-level knowledge
//! distillation, backward-congruent re-ranking (BCR) and the gold-aware
//! oracle re-rankers used as upper bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoding::{beam_decode, mst_decode, CandidateSet};
use crate::error::Error;
use crate::metrics::{unit_outcomes, MetricKind};
use crate::scoring::arc::best_label;
use crate::scoring::{ActionPolicy, ActionSet, ArcScores, Model, ModelKind, NodeView, ParseState};
use crate::structures::{Dataset, DepTree, Sentence, Structure};

/// Models combined by averaging their local scores.
#[derive(Clone, Debug)]
pub struct Ensemble {
    members: Vec<Model>,
}

impl Ensemble {
    pub fn new(members: Vec<Model>) -> Result<Self, Error> {
        let Some(first) = members.first() else {
            return Err(Error::Config("an ensemble needs at least one member".into()));
        };
        for m in &members[1..] {
            let same_vocab = match (first, m) {
                (Model::Arc(a), Model::Arc(b)) => a.labels() == b.labels(),
                (Model::Action(a), Model::Action(b)) => a.actions() == b.actions(),
                _ => {
                    return Err(Error::Config(format!(
                        "ensemble mixes {} and {} models",
                        first.kind().name(),
                        m.kind().name()
                    )))
                }
            };
            if !same_vocab {
                return Err(Error::Config("ensemble members use different label sets".into()));
            }
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[Model] {
        &self.members
    }

    pub fn kind(&self) -> ModelKind {
        self.members[0].kind()
    }

    /// Arc-factored: mean arc matrix decoded by MST, labels from the mean
    /// label scores. Action-factored: greedy decoding over the mean action
    /// distribution.
    pub fn predict(&self, sentence: &Sentence) -> Result<Structure, Error> {
        if let [only] = self.members.as_slice() {
            return only.predict(sentence);
        }
        match &self.members[0] {
            Model::Arc(first) => {
                let arcs: Vec<ArcScores> = self.arc_members().map(|s| s.score_arcs(sentence, None)).collect();
                let heads = mst_decode(&ArcScores::mean(&arcs)).heads().to_vec();
                let per_member: Vec<Vec<Vec<f64>>> = self
                    .arc_members()
                    .map(|s| s.tree_label_scores(sentence, &heads))
                    .collect();
                let k = per_member.len() as f64;
                let labels = (0..heads.len())
                    .map(|t| {
                        let mean: Vec<f64> = (0..first.labels().len())
                            .map(|l| per_member.iter().map(|m| m[t][l]).sum::<f64>() / k)
                            .collect();
                        best_label(first.labels(), &mean)
                    })
                    .collect();
                Ok(Structure::Dep(DepTree::new(heads, labels)?))
            }
            Model::Action(_) => {
                let best = beam_decode(self, sentence, 1)?;
                Ok(best.into_iter().next().expect("beam returns a hypothesis").structure)
            }
        }
    }

    fn arc_members(&self) -> impl Iterator<Item = &crate::scoring::ArcScorer> {
        self.members.iter().filter_map(|m| match m {
            Model::Arc(s) => Some(s),
            Model::Action(_) => None,
        })
    }
}

impl ActionPolicy for Ensemble {
    fn action_set(&self) -> &ActionSet {
        match &self.members[0] {
            Model::Action(s) => s.actions(),
            Model::Arc(_) => panic!("arc-factored ensemble has no action set"),
        }
    }

    fn probabilities(&self, view: &NodeView, state: &ParseState) -> Result<Vec<f64>, Error> {
        let mut mean = vec![0.0; self.action_set().len()];
        for m in &self.members {
            let Model::Action(s) = m else {
                unreachable!("members share a kind")
            };
            for (acc, p) in mean.iter_mut().zip(s.probabilities(view, state)?) {
                *acc += p;
            }
        }
        let k = self.members.len() as f64;
        for p in &mut mean {
            *p /= k;
        }
        Ok(mean)
    }
}

/// Training set whose gold structures are replaced by the old model's
/// deterministic predictions.
pub fn kd_pseudo_dataset(old: &Model, train: &Dataset) -> Result<Dataset, Error> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = train
        .examples()
        .par_iter()
        .map(|e| old.predict(&e.sentence))
        .collect::<Result<Vec<_>, _>>()?;
    train.with_golds(preds)
}

/// Weighted combination of ranker scores used by BCR. A single ranker
/// with weight 1 is the plain old-model rule.
#[derive(Clone, Debug)]
pub struct RerankPolicy<'a> {
    rankers: Vec<(&'a Model, f64)>,
}

impl<'a> RerankPolicy<'a> {
    pub fn new(rankers: Vec<(&'a Model, f64)>) -> Result<Self, Error> {
        if rankers.is_empty() {
            return Err(Error::Config("re-ranking needs at least one ranker".into()));
        }
        if rankers.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("ranker weights must be finite and non-negative".into()));
        }
        if rankers.iter().all(|(_, w)| *w == 0.0) {
            return Err(Error::Config("ranker weights are all zero".into()));
        }
        Ok(RerankPolicy { rankers })
    }

    pub fn single(old: &'a Model) -> Self {
        RerankPolicy {
            rankers: vec![(old, 1.0)],
        }
    }

    pub fn rankers(&self) -> &[(&'a Model, f64)] {
        &self.rankers
    }

    /// Combined score of one structure. A structure some ranker cannot
    /// derive scores negative infinity.
    pub fn score(&self, sentence: &Sentence, structure: &Structure) -> Result<f64, Error> {
        let mut total = 0.0;
        for (model, weight) in &self.rankers {
            if *weight == 0.0 {
                continue;
            }
            match model.structure_score(sentence, structure) {
                Ok(s) => total += weight * s,
                Err(Error::Derivation(msg)) => {
                    log::debug!("sentence {}: candidate underivable by ranker: {}", sentence.id(), msg);
                    return Ok(f64::NEG_INFINITY);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(total)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Index into the candidate set.
    pub index: usize,
    pub score: f64,
    /// More than one candidate shared the best score.
    pub tie_broken: bool,
    /// Every candidate scored negative infinity; candidate 0 was kept.
    pub fallback: bool,
}

/// BCR: the candidate with the highest ranker score.
pub fn bcr_select(sentence: &Sentence, candidates: &CandidateSet, policy: &RerankPolicy) -> Result<Selection, Error> {
    let scores = candidates
        .candidates
        .iter()
        .map(|c| policy.score(sentence, &c.structure))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(select_by_scores(candidates, &scores))
}

/// Argmax over precomputed ranker scores. Ties go to the higher generator
/// score, then to the canonically smaller structure.
pub fn select_by_scores(candidates: &CandidateSet, scores: &[f64]) -> Selection {
    assert_eq!(scores.len(), candidates.len(), "one score per candidate");
    assert!(!candidates.is_empty(), "candidate sets are never empty");
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return Selection {
            index: 0,
            score: best,
            tie_broken: false,
            fallback: true,
        };
    }
    let tied: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == best).collect();
    let c = &candidates.candidates;
    let index = tied
        .iter()
        .copied()
        .reduce(|a, b| {
            let order = c[b]
                .generator_score
                .total_cmp(&c[a].generator_score)
                .then_with(|| c[a].structure.cmp(&c[b].structure));
            if order.is_le() {
                a
            } else {
                b
            }
        })
        .expect("at least one maximum");
    Selection {
        index,
        score: best,
        tie_broken: tied.len() > 1,
        fallback: false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OracleObjective {
    Acc,
    Nfr,
}

/// Gold-aware selection. `Acc` maximizes correct units, `Nfr` minimizes
/// negative flips against `old_pred`; each breaks ties with the other
/// objective, then canonical structure order.
pub fn oracle_select(
    sentence: &Sentence,
    candidates: &CandidateSet,
    gold: &Structure,
    old_pred: &Structure,
    objective: OracleObjective,
    metric: MetricKind,
    exclude_punct: bool,
) -> Result<usize, Error> {
    let old = unit_outcomes(sentence, old_pred, gold, metric, exclude_punct)?;
    let mut best: Option<(usize, usize, usize)> = None;
    for (i, c) in candidates.candidates.iter().enumerate() {
        let units = unit_outcomes(sentence, &c.structure, gold, metric, exclude_punct)?;
        let correct = units.iter().filter(|&&ok| ok).count();
        let negative = old.iter().zip(&units).filter(|(&o, &n)| o && !n).count();
        let better = match best {
            None => true,
            Some((b, b_correct, b_negative)) => {
                let key = match objective {
                    OracleObjective::Acc => (b_correct.cmp(&correct), negative.cmp(&b_negative)),
                    OracleObjective::Nfr => (negative.cmp(&b_negative), b_correct.cmp(&correct)),
                };
                key.0
                    .then(key.1)
                    .then_with(|| c.structure.cmp(&candidates.candidates[b].structure))
                    .is_lt()
            }
        };
        if better {
            best = Some((i, correct, negative));
        }
    }
    Ok(best.expect("candidate sets are never empty").0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoding::Candidate;
    use crate::scoring::{ArcScorer, Capacity, Weights};
    use crate::structures::Head;

    fn dep(heads: Vec<Head>) -> Structure {
        DepTree::unlabeled(heads).unwrap().into()
    }

    fn set(structures: Vec<Structure>, generator: Vec<f64>) -> CandidateSet {
        CandidateSet {
            sentence_id: "s".into(),
            candidates: structures
                .into_iter()
                .zip(generator)
                .enumerate()
                .map(|(rank, (structure, generator_score))| Candidate {
                    structure,
                    generator_score,
                    rank,
                })
                .collect(),
        }
    }

    #[test]
    fn highest_score_wins_regardless_of_order() {
        let a = dep(vec![Head::Root, Head::Word(0)]);
        let b = dep(vec![Head::Word(1), Head::Root]);
        let cands = set(vec![b, a.clone()], vec![0.0, -5.0]);
        let sel = select_by_scores(&cands, &[1.0, 2.0]);
        assert_eq!(cands.candidates[sel.index].structure, a);
        assert!(!sel.tie_broken);
    }

    #[test]
    fn ties_use_generator_then_canonical_order() {
        let a = dep(vec![Head::Root, Head::Word(0)]);
        let b = dep(vec![Head::Word(1), Head::Root]);
        let cands = set(vec![b.clone(), a.clone()], vec![1.0, 0.0]);
        let sel = select_by_scores(&cands, &[3.0, 3.0]);
        assert_eq!(sel.index, 0);
        assert!(sel.tie_broken);
        let cands = set(vec![b, a], vec![0.0, 0.0]);
        // Root-first head sequence is canonically smaller.
        assert_eq!(select_by_scores(&cands, &[3.0, 3.0]).index, 1);
    }

    #[test]
    fn all_underivable_falls_back_to_first() {
        let cands = set(vec![dep(vec![Head::Root])], vec![0.0]);
        let sel = select_by_scores(&cands, &[f64::NEG_INFINITY]);
        assert!(sel.fallback);
        assert_eq!(sel.index, 0);
    }

    #[test]
    fn policy_validation() {
        let m = Model::Arc(ArcScorer::new(Capacity::Small, vec![], Weights::new(), 0));
        assert!(RerankPolicy::new(vec![]).is_err());
        assert!(RerankPolicy::new(vec![(&m, 0.0)]).is_err());
        assert!(RerankPolicy::new(vec![(&m, -1.0)]).is_err());
        assert!(RerankPolicy::new(vec![(&m, 0.0), (&m, 2.0)]).is_ok());
    }

    #[test]
    fn oracle_prefers_gold_and_old() {
        let sentence = Sentence::untagged("s", vec!["a".into(), "b".into()]).unwrap();
        let gold = dep(vec![Head::Root, Head::Word(0)]);
        let other = dep(vec![Head::Word(1), Head::Root]);
        let cands = set(vec![other.clone(), gold.clone()], vec![0.0, 0.0]);
        let pick = oracle_select(
            &sentence,
            &cands,
            &gold,
            &other,
            OracleObjective::Acc,
            MetricKind::Uas,
            false,
        )
        .unwrap();
        assert_eq!(pick, 1);
        // Old model is wrong everywhere, so no candidate has negative flips;
        // the accuracy tie-break picks gold.
        let pick = oracle_select(
            &sentence,
            &cands,
            &gold,
            &other,
            OracleObjective::Nfr,
            MetricKind::Uas,
            false,
        )
        .unwrap();
        assert_eq!(pick, 1);
    }

    #[test]
    fn mixed_ensemble_is_rejected() {
        let arc = Model::Arc(ArcScorer::new(Capacity::Small, vec![], Weights::new(), 0));
        let action = Model::Action(crate::scoring::ActionScorer::new(
            Capacity::Small,
            ActionSet::new(crate::scoring::TransitionSystem::ArcStandard, vec![]),
            Weights::new(),
            0,
        ));
        assert!(Ensemble::new(vec![arc, action]).is_err());
        assert!(Ensemble::new(vec![]).is_err());
    }
}
