//! Action-factored (transition-based) scoring.
//!
//! Dependency trees are built with the arc-standard system (ROOT starts on
//! the stack; SHIFT / LEFT-ARC(l) / RIGHT-ARC(l)). Intent/slot trees are
//! built by a bracket system (OPEN(label) / SHIFT / CLOSE) that emits the
//! linearized tree left to right. Legality constraints guarantee that every
//! complete action sequence yields a well-formed structure.
//!
//! Action scores are locally normalized: the legal actions of a state get a
//! softmax distribution, and a derivation's log-probability is the sum of
//! its per-step log-probabilities.

use super::arc::NodeView;
use super::features::FeatureHasher;
use super::weights::{DropoutConfig, Weights};
use super::Capacity;
use crate::error::Error;
use crate::structures::{is_intent, is_slot, DepTree, Head, Sentence, SpanNode, SpanTree, Structure};

/// Longest run of nested OPENs before a word or node must be attached.
pub const MAX_OPEN_CHAIN: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Shift,
    LeftArc(usize),
    RightArc(usize),
    Open(usize),
    Close,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransitionSystem {
    ArcStandard,
    Bracket,
}

/// Actions of a transition system over a fixed label vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSet {
    system: TransitionSystem,
    labels: Vec<String>,
    actions: Vec<Action>,
    names: Vec<String>,
}

impl ActionSet {
    /// `labels` are sorted and deduplicated.
    pub fn new(system: TransitionSystem, mut labels: Vec<String>) -> Self {
        labels.sort();
        labels.dedup();
        let mut actions = vec![Action::Shift];
        match system {
            TransitionSystem::ArcStandard => {
                actions.extend((0..labels.len()).map(Action::LeftArc));
                actions.extend((0..labels.len()).map(Action::RightArc));
            }
            TransitionSystem::Bracket => {
                actions.push(Action::Close);
                actions.extend((0..labels.len()).map(Action::Open));
            }
        }
        let names = actions
            .iter()
            .map(|a| match *a {
                Action::Shift => "SHIFT".to_string(),
                Action::Close => "CLOSE".to_string(),
                Action::LeftArc(l) => format!("LA:{}", labels[l]),
                Action::RightArc(l) => format!("RA:{}", labels[l]),
                Action::Open(l) => format!("OPEN:{}", labels[l]),
            })
            .collect();
        ActionSet {
            system,
            labels,
            actions,
            names,
        }
    }

    pub fn system(&self) -> TransitionSystem {
        self.system
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn action(&self, index: usize) -> Action {
        self.actions[index]
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index(&self, action: Action) -> usize {
        let l = self.labels.len();
        match (self.system, action) {
            (_, Action::Shift) => 0,
            (TransitionSystem::ArcStandard, Action::LeftArc(i)) => 1 + i,
            (TransitionSystem::ArcStandard, Action::RightArc(i)) => 1 + l + i,
            (TransitionSystem::Bracket, Action::Close) => 1,
            (TransitionSystem::Bracket, Action::Open(i)) => 2 + i,
            (system, action) => panic!("{:?} is not an action of {:?}", action, system),
        }
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }
}

/// Arc-standard configuration. Stack entries are node indices (0 = ROOT).
#[derive(Clone, Debug, PartialEq)]
pub struct ArcStandardState {
    len: usize,
    stack: Vec<usize>,
    next: usize,
    heads: Vec<Option<Head>>,
    labels: Vec<Option<usize>>,
    last_left: Vec<Option<usize>>,
    last_right: Vec<Option<usize>>,
    steps: usize,
}

impl ArcStandardState {
    fn new(len: usize) -> Self {
        ArcStandardState {
            len,
            stack: vec![0],
            next: 0,
            heads: vec![None; len],
            labels: vec![None; len],
            last_left: vec![None; len + 1],
            last_right: vec![None; len + 1],
            steps: 0,
        }
    }

    fn legal(&self, actions: &ActionSet) -> Vec<usize> {
        let mut legal = Vec::new();
        if self.next < self.len {
            legal.push(0);
        }
        let depth = self.stack.len();
        if depth >= 2 {
            let s1 = self.stack[depth - 2];
            let l = actions.labels.len();
            if s1 != 0 {
                legal.extend((0..l).map(|i| 1 + i));
            }
            if s1 != 0 || (self.next == self.len && depth == 2) {
                legal.extend((0..l).map(|i| 1 + l + i));
            }
        }
        legal
    }

    fn apply(&mut self, action: Action) {
        let depth = self.stack.len();
        match action {
            Action::Shift => {
                self.stack.push(self.next + 1);
                self.next += 1;
            }
            Action::LeftArc(l) => {
                let s0 = self.stack[depth - 1];
                let s1 = self.stack.remove(depth - 2);
                self.heads[s1 - 1] = Some(Head::from_node(s0));
                self.labels[s1 - 1] = Some(l);
                self.last_left[s0] = Some(l);
            }
            Action::RightArc(l) => {
                let s0 = self.stack.pop().expect("legal right-arc");
                let s1 = self.stack[depth - 2];
                self.heads[s0 - 1] = Some(Head::from_node(s1));
                self.labels[s0 - 1] = Some(l);
                self.last_right[s1] = Some(l);
            }
            other => panic!("{:?} is not an arc-standard action", other),
        }
        self.steps += 1;
    }

    fn is_terminal(&self) -> bool {
        self.next == self.len && self.stack.len() == 1
    }

    fn finish(&self, actions: &ActionSet) -> Result<DepTree, Error> {
        let heads = self
            .heads
            .iter()
            .map(|h| h.ok_or_else(|| Error::Derivation("incomplete derivation".into())))
            .collect::<Result<Vec<_>, _>>()?;
        let labels = self
            .labels
            .iter()
            .map(|l| actions.labels[l.expect("labeled with head")].clone())
            .collect();
        DepTree::new(heads, labels)
    }

    fn features(&self, view: &NodeView, capacity: Capacity, actions: &ActionSet) -> Vec<FeatureHasher> {
        const NONE: &str = "<NONE>";
        let depth = self.stack.len();
        let s0 = self.stack.last().copied();
        let s1 = if depth >= 2 { Some(self.stack[depth - 2]) } else { None };
        let s2 = if depth >= 3 { Some(self.stack[depth - 3]) } else { None };
        let b0 = (self.next < self.len).then_some(self.next + 1);
        let b1 = (self.next + 1 < self.len).then_some(self.next + 2);
        let w = |n: Option<usize>| n.map_or(NONE, |n| view.word(n));
        let p = |n: Option<usize>| n.map_or(NONE, |n| view.tag(n as isize));
        let lab = |l: Option<usize>| l.map_or(NONE, |l| actions.labels[l].as_str());
        let mut feats = vec![
            FeatureHasher::new("t:bias"),
            FeatureHasher::new("t:s0w").field(w(s0)),
            FeatureHasher::new("t:s0p").field(p(s0)),
            FeatureHasher::new("t:s1w").field(w(s1)),
            FeatureHasher::new("t:s1p").field(p(s1)),
            FeatureHasher::new("t:b0w").field(w(b0)),
            FeatureHasher::new("t:b0p").field(p(b0)),
            FeatureHasher::new("t:s0p,b0p").field(p(s0)).field(p(b0)),
            FeatureHasher::new("t:s1p,s0p").field(p(s1)).field(p(s0)),
            FeatureHasher::new("t:s1p,s0p,b0p")
                .field(p(s1))
                .field(p(s0))
                .field(p(b0)),
            FeatureHasher::new("t:b0p,b1p").field(p(b0)).field(p(b1)),
        ];
        if capacity == Capacity::Large {
            let dist = match (s1, s0) {
                (Some(a), Some(b)) if a > 0 => (b - a).min(6).to_string(),
                _ => NONE.to_string(),
            };
            let s0lc = s0.and_then(|n| self.last_left[n]);
            let s0rc = s0.and_then(|n| self.last_right[n]);
            let s1lc = s1.and_then(|n| self.last_left[n]);
            let s1rc = s1.and_then(|n| self.last_right[n]);
            feats.extend([
                FeatureHasher::new("t:s0w,s0p").field(w(s0)).field(p(s0)),
                FeatureHasher::new("t:s1w,s1p").field(w(s1)).field(p(s1)),
                FeatureHasher::new("t:b0w,b0p").field(w(b0)).field(p(b0)),
                FeatureHasher::new("t:s1w,s0w").field(w(s1)).field(w(s0)),
                FeatureHasher::new("t:s1w,s0p").field(w(s1)).field(p(s0)),
                FeatureHasher::new("t:s1p,s0w").field(p(s1)).field(w(s0)),
                FeatureHasher::new("t:s0w,b0w").field(w(s0)).field(w(b0)),
                FeatureHasher::new("t:s1p,s0p,dist")
                    .field(p(s1))
                    .field(p(s0))
                    .field(&dist),
                FeatureHasher::new("t:s0p,s0lc,s0rc")
                    .field(p(s0))
                    .field(lab(s0lc))
                    .field(lab(s0rc)),
                FeatureHasher::new("t:s1p,s1lc,s1rc")
                    .field(p(s1))
                    .field(lab(s1lc))
                    .field(lab(s1rc)),
                FeatureHasher::new("t:s2p,s1p,s0p")
                    .field(p(s2))
                    .field(p(s1))
                    .field(p(s0)),
            ]);
        }
        feats
    }
}

/// Bracket-system configuration for intent/slot trees.
#[derive(Clone, Debug, PartialEq)]
pub struct BracketState {
    len: usize,
    next: usize,
    stack: Vec<(usize, Vec<SpanNode>)>,
    opens: usize,
    done: Option<SpanNode>,
    last: Option<usize>,
    steps: usize,
}

impl BracketState {
    fn new(len: usize) -> Self {
        BracketState {
            len,
            next: 0,
            stack: Vec::new(),
            opens: 0,
            done: None,
            last: None,
            steps: 0,
        }
    }

    /// Upper bound on OPEN actions: keeps every derivation within 4n steps.
    fn max_opens(&self) -> usize {
        3 * self.len / 2
    }

    fn open_chain(&self) -> usize {
        self.stack
            .iter()
            .rev()
            .take_while(|(_, children)| children.is_empty())
            .count()
    }

    fn legal(&self, actions: &ActionSet) -> Vec<usize> {
        let mut legal = Vec::new();
        if self.done.is_some() {
            return legal;
        }
        let words_left = self.next < self.len;
        match self.stack.last() {
            None => {
                if words_left {
                    for (i, label) in actions.labels.iter().enumerate() {
                        if is_intent(label) {
                            legal.push(actions.index(Action::Open(i)));
                        }
                    }
                }
            }
            Some((top, children)) => {
                if words_left {
                    legal.push(0);
                }
                if !children.is_empty() && (self.stack.len() > 1 || !words_left) {
                    legal.push(1);
                }
                if words_left && self.opens < self.max_opens() && self.open_chain() < MAX_OPEN_CHAIN {
                    let want_slot = is_intent(&actions.labels[*top]);
                    for (i, label) in actions.labels.iter().enumerate() {
                        if (want_slot && is_slot(label)) || (!want_slot && is_intent(label)) {
                            legal.push(actions.index(Action::Open(i)));
                        }
                    }
                }
            }
        }
        legal
    }

    fn apply(&mut self, action: Action, actions: &ActionSet) {
        match action {
            Action::Shift => {
                let (_, children) = self.stack.last_mut().expect("legal shift");
                children.push(SpanNode::Leaf(self.next));
                self.next += 1;
            }
            Action::Open(l) => {
                self.stack.push((l, Vec::new()));
                self.opens += 1;
            }
            Action::Close => {
                let (label, children) = self.stack.pop().expect("legal close");
                let node = SpanNode::Node {
                    label: actions.labels[label].clone(),
                    children,
                };
                match self.stack.last_mut() {
                    Some((_, siblings)) => siblings.push(node),
                    None => self.done = Some(node),
                }
            }
            other => panic!("{:?} is not a bracket action", other),
        }
        self.last = Some(actions.index(action));
        self.steps += 1;
    }

    fn is_terminal(&self) -> bool {
        self.done.is_some()
    }

    fn finish(&self) -> Result<SpanTree, Error> {
        let root = self
            .done
            .clone()
            .ok_or_else(|| Error::Derivation("incomplete derivation".into()))?;
        SpanTree::new(root)
    }

    fn features(&self, view: &NodeView, capacity: Capacity, actions: &ActionSet) -> Vec<FeatureHasher> {
        const NONE: &str = "<NONE>";
        let word = |i: isize| {
            if i < 0 || i as usize >= self.len {
                NONE
            } else {
                view.word(i as usize + 1)
            }
        };
        let next = self.next as isize;
        let depth = self.stack.len();
        let top = self.stack.last().map_or(NONE, |(l, _)| actions.labels[*l].as_str());
        let second = if depth >= 2 {
            actions.labels[self.stack[depth - 2].0].as_str()
        } else {
            NONE
        };
        let kids = match self.stack.last().map(|(_, c)| c.len()) {
            None => "none",
            Some(0) => "0",
            Some(1) => "1",
            Some(_) => "2+",
        };
        let last = self.last.map_or("<START>", |a| actions.name(a));
        let mut feats = vec![
            FeatureHasher::new("b:bias"),
            FeatureHasher::new("b:b0w").field(word(next)),
            FeatureHasher::new("b:b1w").field(word(next + 1)),
            FeatureHasher::new("b:pw").field(word(next - 1)),
            FeatureHasher::new("b:top").field(top),
            FeatureHasher::new("b:second").field(second),
            FeatureHasher::new("b:top,kids").field(top).field(kids),
            FeatureHasher::new("b:last").field(last),
            FeatureHasher::new("b:b0w,top").field(word(next)).field(top),
            FeatureHasher::new("b:pw,b0w").field(word(next - 1)).field(word(next)),
            FeatureHasher::new("b:top,last").field(top).field(last),
        ];
        if capacity == Capacity::Large {
            feats.extend([
                FeatureHasher::new("b:b0w,b1w").field(word(next)).field(word(next + 1)),
                FeatureHasher::new("b:b0w,second").field(word(next)).field(second),
                FeatureHasher::new("b:top,second").field(top).field(second),
                FeatureHasher::new("b:b2w").field(word(next + 2)),
                FeatureHasher::new("b:b0w,last").field(word(next)).field(last),
                FeatureHasher::new("b:depth,top")
                    .field(&depth.min(4).to_string())
                    .field(top),
            ]);
        }
        feats
    }
}

/// Decoder state of either transition system.
#[derive(Clone, Debug, PartialEq)]
pub enum ParseState {
    Dep(ArcStandardState),
    Span(BracketState),
}

impl ParseState {
    pub fn initial(system: TransitionSystem, len: usize) -> Self {
        match system {
            TransitionSystem::ArcStandard => ParseState::Dep(ArcStandardState::new(len)),
            TransitionSystem::Bracket => ParseState::Span(BracketState::new(len)),
        }
    }

    /// Indices of the legal actions, ascending.
    pub fn legal(&self, actions: &ActionSet) -> Vec<usize> {
        match self {
            ParseState::Dep(s) => s.legal(actions),
            ParseState::Span(s) => s.legal(actions),
        }
    }

    pub fn apply(&mut self, action: Action, actions: &ActionSet) {
        match self {
            ParseState::Dep(s) => s.apply(action),
            ParseState::Span(s) => s.apply(action, actions),
        }
    }

    pub fn is_terminal(&self) -> bool {
        match self {
            ParseState::Dep(s) => s.is_terminal(),
            ParseState::Span(s) => s.is_terminal(),
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            ParseState::Dep(s) => s.steps,
            ParseState::Span(s) => s.steps,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ParseState::Dep(s) => s.len,
            ParseState::Span(s) => s.len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Steps after which a derivation is abandoned.
    pub fn step_budget(&self) -> usize {
        4 * self.len()
    }

    pub fn finish(&self, actions: &ActionSet) -> Result<Structure, Error> {
        match self {
            ParseState::Dep(s) => s.finish(actions).map(Structure::Dep),
            ParseState::Span(s) => s.finish().map(Structure::Span),
        }
    }

    pub(crate) fn features(&self, view: &NodeView, capacity: Capacity, actions: &ActionSet) -> Vec<FeatureHasher> {
        match self {
            ParseState::Dep(s) => s.features(view, capacity, actions),
            ParseState::Span(s) => s.features(view, capacity, actions),
        }
    }
}

/// The canonical action sequence deriving `structure`.
///
/// Dependency trees use the static arc-standard oracle (LEFT-ARC first, then
/// RIGHT-ARC once the dependent has collected all its children, else SHIFT),
/// so only projective trees are derivable. Intent/slot trees use their
/// pre-order linearization.
pub fn canonical_actions(actions: &ActionSet, structure: &Structure) -> Result<Vec<Action>, Error> {
    let sequence = match (actions.system, structure) {
        (TransitionSystem::ArcStandard, Structure::Dep(tree)) => arc_standard_oracle(actions, tree)?,
        (TransitionSystem::Bracket, Structure::Span(tree)) => {
            let mut seq = Vec::new();
            linearize(actions, tree.root(), &mut seq)?;
            seq
        }
        _ => {
            return Err(Error::Derivation(
                "structure does not match the transition system".into(),
            ))
        }
    };
    let mut state = ParseState::initial(actions.system, structure.len());
    for &action in &sequence {
        let index = actions.index(action);
        if !state.legal(actions).contains(&index) {
            return Err(Error::Derivation(format!(
                "action {} is not legal at step {}",
                actions.name(index),
                state.steps()
            )));
        }
        state.apply(action, actions);
    }
    if !state.is_terminal() {
        return Err(Error::Derivation("derivation does not terminate".into()));
    }
    Ok(sequence)
}

fn label_of(actions: &ActionSet, label: &str) -> Result<usize, Error> {
    actions
        .label_index(label)
        .ok_or_else(|| Error::Derivation(format!("unknown label {:?}", label)))
}

fn arc_standard_oracle(actions: &ActionSet, tree: &DepTree) -> Result<Vec<Action>, Error> {
    let n = tree.len();
    let head_node = |t: usize| tree.head(t).node();
    let mut pending = vec![0usize; n + 1];
    for t in 0..n {
        pending[head_node(t)] += 1;
    }
    let mut stack = vec![0usize];
    let mut next = 0;
    let mut seq = Vec::with_capacity(2 * n);
    loop {
        let depth = stack.len();
        if depth >= 2 {
            let s0 = stack[depth - 1];
            let s1 = stack[depth - 2];
            if s1 != 0 && head_node(s1 - 1) == s0 {
                seq.push(Action::LeftArc(label_of(actions, tree.label(s1 - 1))?));
                stack.remove(depth - 2);
                pending[s0] -= 1;
                continue;
            }
            if head_node(s0 - 1) == s1 && pending[s0] == 0 {
                seq.push(Action::RightArc(label_of(actions, tree.label(s0 - 1))?));
                stack.pop();
                pending[s1] -= 1;
                continue;
            }
        }
        if next < n {
            seq.push(Action::Shift);
            stack.push(next + 1);
            next += 1;
        } else if stack.len() == 1 {
            return Ok(seq);
        } else {
            return Err(Error::Derivation("tree is not projective".into()));
        }
    }
}

fn linearize(actions: &ActionSet, node: &SpanNode, out: &mut Vec<Action>) -> Result<(), Error> {
    match node {
        SpanNode::Leaf(_) => out.push(Action::Shift),
        SpanNode::Node { label, children } => {
            out.push(Action::Open(label_of(actions, label)?));
            for child in children {
                linearize(actions, child, out)?;
            }
            out.push(Action::Close);
        }
    }
    Ok(())
}

/// Softmax over `scores`; entries that are `None` (illegal) get exactly 0.
pub(crate) fn normalize(scores: &[Option<f64>]) -> Vec<f64> {
    let max = scores.iter().flatten().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let exps: Vec<f64> = scores.iter().map(|s| s.map_or(0.0, |s| (s - max).exp())).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Unnormalized scores of the legal actions; `None` for illegal ones.
pub(crate) fn action_scores(
    actions: &ActionSet,
    features: &[FeatureHasher],
    legal: &[usize],
    weight: impl Fn(u64) -> f64,
) -> Vec<Option<f64>> {
    let mut scores = vec![None; actions.len()];
    for &a in legal {
        let name = actions.name(a);
        scores[a] = Some(features.iter().map(|f| weight(f.field(name).finish())).sum());
    }
    scores
}

/// Anything that yields a distribution over the actions of a state: a
/// single scorer, a dropout-masked scorer, or an ensemble.
pub trait ActionPolicy: Sync {
    fn action_set(&self) -> &ActionSet;

    /// Probability of every action (indexed like the action set); illegal
    /// actions have probability exactly 0.
    fn probabilities(&self, view: &NodeView, state: &ParseState) -> Result<Vec<f64>, Error>;
}

/// Locally normalized action scorer.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionScorer {
    capacity: Capacity,
    actions: ActionSet,
    weights: Weights,
    seed: u64,
}

impl ActionScorer {
    pub fn new(capacity: Capacity, actions: ActionSet, weights: Weights, seed: u64) -> Self {
        ActionScorer {
            capacity,
            actions,
            weights,
            seed,
        }
    }

    pub fn capacity(&self) -> Capacity {
        self.capacity
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    pub fn system(&self) -> TransitionSystem {
        self.actions.system
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_dropout(&self, dropout: &DropoutConfig) -> ActionScorer {
        ActionScorer {
            weights: self.weights.with_dropout(dropout),
            ..self.clone()
        }
    }

    pub fn initial_state(&self, sentence: &Sentence) -> ParseState {
        ParseState::initial(self.actions.system, sentence.len())
    }

    /// Distribution over the actions of `state` for `sentence`.
    pub fn action_distribution(&self, sentence: &Sentence, state: &ParseState) -> Result<Vec<f64>, Error> {
        self.probabilities(&NodeView::new(sentence), state)
    }

    /// Log-probability of the canonical derivation of `structure`.
    pub fn structure_log_score(&self, sentence: &Sentence, structure: &Structure) -> Result<f64, Error> {
        if structure.len() != sentence.len() {
            return Err(Error::Misaligned(format!(
                "structure covers {} tokens, sentence has {}",
                structure.len(),
                sentence.len()
            )));
        }
        let sequence = canonical_actions(&self.actions, structure)?;
        let view = NodeView::new(sentence);
        let mut state = self.initial_state(sentence);
        let mut total = 0.0;
        for action in sequence {
            let index = self.actions.index(action);
            let probs = self.probabilities(&view, &state)?;
            total += probs[index].ln();
            state.apply(action, &self.actions);
        }
        Ok(total)
    }
}

impl ActionPolicy for ActionScorer {
    fn action_set(&self) -> &ActionSet {
        &self.actions
    }

    fn probabilities(&self, view: &NodeView, state: &ParseState) -> Result<Vec<f64>, Error> {
        let legal = state.legal(&self.actions);
        if legal.is_empty() {
            return Err(Error::NoLegalAction);
        }
        let features = state.features(view, self.capacity, &self.actions);
        let scores = action_scores(&self.actions, &features, &legal, |id| self.weights.get(id));
        Ok(normalize(&scores))
    }
}
