//! Candidate generation for re-ranking.
//!
//! Every candidate set starts with the model's deterministic prediction,
//! so it is never empty and re-ranking can always fall back to the
//! untreated output. Remaining candidates come from the configured method:
//!
//! * `beam`: the beam's hypotheses, best first.
//! * `kbest_mst`: the next best spanning trees (arc-factored only).
//! * `top_k` / `top_p`: ancestral sampling with truncated, renormalized
//!   per-step distributions (action-factored only).
//! * `dropout_p`: the deterministic decoder rerun under independent weight
//!   dropout masks.
//!
//! Sample `i` (0-based) is seeded with `seed + i`. Duplicates are removed
//! by structural equality, keeping the first occurrence.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::beam::beam_decode;
use super::kbest::kbest_mst;
use crate::error::Error;
use crate::scoring::{ActionPolicy, ActionScorer, DropoutConfig, Model, ModelKind, NodeView, ParseState};
use crate::structures::{Sentence, Structure};

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub structure: Structure,
    /// Clean (no-dropout) generator-model score of the structure.
    pub generator_score: f64,
    /// Position in generation order: 0 is the deterministic prediction.
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub sentence_id: String,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// The first `n` candidates (at least one).
    pub fn truncated(&self, n: usize) -> CandidateSet {
        CandidateSet {
            sentence_id: self.sentence_id.clone(),
            candidates: self.candidates[..n.max(1).min(self.len())].to_vec(),
        }
    }

    fn push_unique(&mut self, structure: Structure, generator_score: f64, rank: usize) {
        if self.candidates.iter().all(|c| c.structure != structure) {
            self.candidates.push(Candidate {
                structure,
                generator_score,
                rank,
            });
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Beam { width: usize },
    KbestMst,
    TopK { k: usize },
    TopP { p: f64 },
    DropoutP { rate: f64 },
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Beam { width } => write!(f, "beam={}", width),
            Method::KbestMst => write!(f, "kbest_mst"),
            Method::TopK { k } => write!(f, "top_k={}", k),
            Method::TopP { p } => write!(f, "top_p={}", p),
            Method::DropoutP { rate } => write!(f, "dropout_p={}", rate),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    #[serde(flatten)]
    pub method: Method,
    pub num_candidates: usize,
    pub seed: u64,
}

impl SamplingConfig {
    pub fn new(method: Method, num_candidates: usize, seed: u64) -> Result<Self, Error> {
        let config = SamplingConfig {
            method,
            num_candidates,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.num_candidates == 0 {
            return Err(Error::Config("num_candidates must be at least 1".into()));
        }
        match self.method {
            Method::Beam { width: 0 } => Err(Error::Config("beam width must be at least 1".into())),
            Method::TopK { k: 0 } => Err(Error::Config("top_k needs k >= 1".into())),
            Method::TopP { p } if !(p > 0.0 && p <= 1.0) => {
                Err(Error::Config(format!("top_p needs p in (0, 1], got {}", p)))
            }
            Method::DropoutP { rate } => DropoutConfig::new(rate, 0).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn check_model(&self, kind: ModelKind) -> Result<(), Error> {
        let ok = match self.method {
            Method::KbestMst => kind == ModelKind::ArcFactored,
            Method::Beam { .. } | Method::TopK { .. } | Method::TopP { .. } => kind == ModelKind::ActionFactored,
            Method::DropoutP { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "sampling method {} does not apply to {} models",
                self.method,
                kind.name()
            )))
        }
    }
}

/// Parses `method[=param][,m=N][,seed=S]`, e.g. `dropout_p=0.3,m=10`.
impl FromStr for SamplingConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = |msg: String| Error::Config(format!("sampling spec {:?}: {}", s, msg));
        let mut parts = s.split(',').map(str::trim);
        let head = parts.next().unwrap_or_default();
        let (name, param) = match head.split_once('=') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => (head, None),
        };
        let need = |what: &str| param.ok_or_else(|| bad(format!("{} needs a parameter", what)));
        let method = match name {
            "beam" => Method::Beam {
                width: need("beam")?.parse().map_err(|_| bad("bad beam width".into()))?,
            },
            "kbest_mst" => Method::KbestMst,
            "top_k" => Method::TopK {
                k: need("top_k")?.parse().map_err(|_| bad("bad k".into()))?,
            },
            "top_p" => Method::TopP {
                p: need("top_p")?.parse().map_err(|_| bad("bad p".into()))?,
            },
            "dropout_p" => Method::DropoutP {
                rate: need("dropout_p")?.parse().map_err(|_| bad("bad rate".into()))?,
            },
            other => return Err(bad(format!("unknown method {:?}", other))),
        };
        let mut num_candidates = 10;
        let mut seed = 0;
        for part in parts {
            match part.split_once('=') {
                Some(("m", v)) => num_candidates = v.parse().map_err(|_| bad("bad m".into()))?,
                Some(("seed", v)) => seed = v.parse().map_err(|_| bad("bad seed".into()))?,
                _ => return Err(bad(format!("unknown field {:?}", part))),
            }
        }
        SamplingConfig::new(method, num_candidates, seed)
    }
}

/// Per-step truncation for ancestral sampling.
#[derive(Clone, Copy, Debug)]
enum Truncation {
    TopK(usize),
    TopP(f64),
}

/// Samples one derivation with a truncated distribution at every step.
fn sample_derivation(
    scorer: &ActionScorer,
    view: &NodeView,
    len: usize,
    truncation: Truncation,
    rng: &mut ChaCha8Rng,
) -> Result<Structure, Error> {
    let actions = scorer.actions();
    let mut state = ParseState::initial(actions.system(), len);
    while !state.is_terminal() {
        if state.steps() >= state.step_budget() {
            return Err(Error::StepBudget {
                limit: state.step_budget(),
            });
        }
        let probs = scorer.probabilities(view, &state)?;
        let mut legal = state.legal(actions);
        legal.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        let keep = match truncation {
            Truncation::TopK(k) => k.min(legal.len()),
            Truncation::TopP(p) => {
                let mut mass = 0.0;
                let mut keep = 0;
                for &a in &legal {
                    mass += probs[a];
                    keep += 1;
                    if mass >= p {
                        break;
                    }
                }
                keep
            }
        };
        let kept = &legal[..keep.max(1)];
        let total: f64 = kept.iter().map(|&a| probs[a]).sum();
        let draw: f64 = rng.gen::<f64>() * total;
        let mut chosen = kept[kept.len() - 1];
        let mut cumulative = 0.0;
        for &a in kept {
            cumulative += probs[a];
            if draw < cumulative {
                chosen = a;
                break;
            }
        }
        state.apply(actions.action(chosen), actions);
    }
    state.finish(actions)
}

/// Candidate generator bound to one model and config. Dropout masks are
/// built once here and reused for every sentence.
pub struct CandidateGenerator<'a> {
    model: &'a Model,
    config: SamplingConfig,
    masked: Vec<Model>,
}

impl<'a> CandidateGenerator<'a> {
    pub fn new(model: &'a Model, config: SamplingConfig) -> Result<Self, Error> {
        config.validate()?;
        config.check_model(model.kind())?;
        let masked = match config.method {
            Method::DropoutP { rate } if rate > 0.0 => (0..config.num_candidates as u64)
                .map(|i| DropoutConfig::new(rate, config.seed.wrapping_add(i)).map(|d| model.with_dropout(&d)))
                .collect::<Result<_, _>>()?,
            _ => Vec::new(),
        };
        Ok(CandidateGenerator { model, config, masked })
    }

    pub fn config(&self) -> &SamplingConfig {
        &self.config
    }

    pub fn generate(&self, sentence: &Sentence) -> Result<CandidateSet, Error> {
        let model = self.model;
        let m = self.config.num_candidates;
        let mut set = CandidateSet {
            sentence_id: sentence.id().to_string(),
            candidates: Vec::new(),
        };
        let deterministic = model.predict(sentence)?;
        let score = model.structure_score(sentence, &deterministic)?;
        set.push_unique(deterministic, score, 0);

        let mut extra: Vec<Structure> = Vec::new();
        match (self.config.method, model) {
            (Method::DropoutP { rate }, _) => {
                if rate > 0.0 {
                    for masked in &self.masked {
                        extra.push(masked.predict(sentence)?);
                    }
                }
            }
            (Method::KbestMst, Model::Arc(scorer)) => {
                let scores = scorer.score_arcs(sentence, None);
                for tree in kbest_mst(&scores, m) {
                    extra.push(Structure::Dep(scorer.label_tree(sentence, tree.heads().to_vec())?));
                }
            }
            (Method::Beam { width }, Model::Action(scorer)) => {
                for c in beam_decode(scorer, sentence, width.max(m))?.into_iter().take(m) {
                    extra.push(c.structure);
                }
            }
            (Method::TopK { k }, Model::Action(scorer)) => {
                extra = sample_many(scorer, sentence, Truncation::TopK(k), m, self.config.seed)?;
            }
            (Method::TopP { p }, Model::Action(scorer)) => {
                extra = sample_many(scorer, sentence, Truncation::TopP(p), m, self.config.seed)?;
            }
            _ => unreachable!("checked by check_model"),
        }
        for (i, structure) in extra.into_iter().enumerate() {
            if set.candidates.iter().any(|c| c.structure == structure) {
                continue;
            }
            let score = model.structure_score(sentence, &structure)?;
            set.push_unique(structure, score, i + 1);
        }
        Ok(set)
    }
}

fn sample_many(
    scorer: &ActionScorer,
    sentence: &Sentence,
    truncation: Truncation,
    m: usize,
    seed: u64,
) -> Result<Vec<Structure>, Error> {
    let view = NodeView::new(sentence);
    (0..m as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            sample_derivation(scorer, &view, sentence.len(), truncation, &mut rng)
        })
        .collect()
}

/// One-off convenience over [`CandidateGenerator`].
pub fn sample_candidates(model: &Model, sentence: &Sentence, config: &SamplingConfig) -> Result<CandidateSet, Error> {
    CandidateGenerator::new(model, *config)?.generate(sentence)
}
