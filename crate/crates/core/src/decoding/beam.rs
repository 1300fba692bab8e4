//! Beam search over legal actions. Works with any [`ActionPolicy`], so a
//! single scorer and an ensemble share the decoder.

use super::Candidate;
use crate::error::Error;
use crate::scoring::{ActionPolicy, NodeView, ParseState};
use crate::structures::{Sentence, Structure};

#[derive(Clone)]
struct Hyp {
    state: ParseState,
    log_prob: f64,
}

/// Up to `width` completed hypotheses ordered by log-probability (ties by
/// canonical structure order), without duplicate structures.
///
/// At each step the pool is the finished hypotheses plus every one-action
/// extension of the active ones; the best `width` survive. Search stops
/// once every survivor is finished, so `width = 1` is greedy decoding with
/// ties going to the lower action index.
pub fn beam_decode<P: ActionPolicy + ?Sized>(
    policy: &P,
    sentence: &Sentence,
    width: usize,
) -> Result<Vec<Candidate>, Error> {
    if width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let actions = policy.action_set();
    let view = NodeView::new(sentence);
    let mut beam = vec![Hyp {
        state: ParseState::initial(actions.system(), sentence.len()),
        log_prob: 0.0,
    }];
    loop {
        if beam.iter().all(|h| h.state.is_terminal()) {
            break;
        }
        let mut pool = Vec::new();
        for hyp in beam {
            if hyp.state.is_terminal() {
                pool.push(hyp);
                continue;
            }
            if hyp.state.steps() >= hyp.state.step_budget() {
                return Err(Error::StepBudget {
                    limit: hyp.state.step_budget(),
                });
            }
            let probs = policy.probabilities(&view, &hyp.state)?;
            for a in hyp.state.legal(actions) {
                if probs[a] <= 0.0 {
                    continue;
                }
                let mut state = hyp.state.clone();
                state.apply(actions.action(a), actions);
                pool.push(Hyp {
                    state,
                    log_prob: hyp.log_prob + probs[a].ln(),
                });
            }
        }
        if pool.is_empty() {
            return Err(Error::NoLegalAction);
        }
        // Stable sort keeps generation order among equal scores.
        pool.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
        pool.truncate(width);
        beam = pool;
    }

    let mut finished: Vec<(f64, Structure)> = beam
        .iter()
        .map(|h| Ok((h.log_prob, h.state.finish(actions)?)))
        .collect::<Result<_, Error>>()?;
    finished.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let mut out: Vec<Candidate> = Vec::new();
    for (log_prob, structure) in finished {
        if out.iter().any(|c| c.structure == structure) {
            continue;
        }
        out.push(Candidate {
            structure,
            generator_score: log_prob,
            rank: out.len(),
        });
    }
    Ok(out)
}
