//! Trainable scorers for the two factorizations.

pub mod action;
pub mod arc;
pub mod features;
pub mod persist;
pub mod train;
pub mod weights;

use serde::{Deserialize, Serialize};

pub use action::{canonical_actions, Action, ActionPolicy, ActionScorer, ActionSet, ParseState, TransitionSystem};
pub use arc::{ArcScorer, ArcScores, NodeView};
pub use features::{hash_feature, FeatureHasher, FeatureVector};
pub use persist::{load_model, read_model, save_model, write_model};
pub use train::{train, train_with_stats, TrainConfig, TrainStats};
pub use weights::{DropoutConfig, Weights};

use crate::decoding::{beam_decode, mst_decode};
use crate::error::Error;
use crate::structures::{Sentence, Structure, Task};

/// Template-set size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capacity {
    Small,
    Large,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ArcFactored,
    ActionFactored,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::ArcFactored => "arc-factored",
            ModelKind::ActionFactored => "action-factored",
        }
    }
}

/// A trained scorer of either factorization.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Arc(ArcScorer),
    Action(ActionScorer),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Arc(_) => ModelKind::ArcFactored,
            Model::Action(_) => ModelKind::ActionFactored,
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Model::Arc(_) => Task::Dependency,
            Model::Action(s) => match s.system() {
                TransitionSystem::ArcStandard => Task::Dependency,
                TransitionSystem::Bracket => Task::Semantic,
            },
        }
    }

    pub fn capacity(&self) -> Capacity {
        match self {
            Model::Arc(s) => s.capacity(),
            Model::Action(s) => s.capacity(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Model::Arc(s) => s.seed(),
            Model::Action(s) => s.seed(),
        }
    }

    pub fn weights(&self) -> &Weights {
        match self {
            Model::Arc(s) => s.weights(),
            Model::Action(s) => s.weights(),
        }
    }

    pub fn with_dropout(&self, dropout: &DropoutConfig) -> Model {
        match self {
            Model::Arc(s) => Model::Arc(s.with_dropout(dropout)),
            Model::Action(s) => Model::Action(s.with_dropout(dropout)),
        }
    }

    /// Default deterministic decode: MST plus labeling for arc-factored
    /// models, greedy search for action-factored ones.
    pub fn predict(&self, sentence: &Sentence) -> Result<Structure, Error> {
        match self {
            Model::Arc(s) => {
                let tree = mst_decode(&s.score_arcs(sentence, None));
                s.label_tree(sentence, tree.heads().to_vec()).map(Structure::Dep)
            }
            Model::Action(s) => {
                let best = beam_decode(s, sentence, 1)?;
                Ok(best.into_iter().next().expect("beam returns a hypothesis").structure)
            }
        }
    }

    /// Score used for re-ranking. Action-factored models return a
    /// log-probability; arc-factored models return the unnormalized tree
    /// weight with labels as a tie-break, which is only comparable between
    /// trees of one sentence.
    pub fn structure_score(&self, sentence: &Sentence, structure: &Structure) -> Result<f64, Error> {
        if structure.len() != sentence.len() {
            return Err(Error::Misaligned(format!(
                "structure covers {} tokens, sentence has {}",
                structure.len(),
                sentence.len()
            )));
        }
        match self {
            Model::Arc(s) => match structure {
                Structure::Dep(tree) => Ok(s.structure_score(sentence, tree)),
                Structure::Span(_) => Err(Error::Derivation(
                    "arc-factored model cannot score an intent/slot tree".into(),
                )),
            },
            Model::Action(s) => s.structure_log_score(sentence, structure),
        }
    }
}
