//! Arc-factored (graph-based) scorer: every head/dependent pair gets an
//! independent score, and a tree's score is the sum of its arc scores.

use std::collections::BTreeSet;

use super::features::FeatureHasher;
use super::weights::{DropoutConfig, Weights};
use super::Capacity;
use crate::error::Error;
use crate::structures::{DepTree, Head, Sentence};

/// Dense arc-score matrix indexed by (head node, dependent token), where
/// head node 0 is ROOT and node `i + 1` is token `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcScores {
    len: usize,
    values: Vec<f64>,
}

impl ArcScores {
    pub fn zeros(len: usize) -> Self {
        ArcScores {
            len,
            values: vec![0.0; (len + 1) * len],
        }
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut scores = ArcScores::zeros(len);
        for head in 0..=len {
            for dep in 0..len {
                scores.values[head * len + dep] = f(head, dep);
            }
        }
        scores
    }

    /// Number of tokens.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Score of the arc from head node `head` (0 = ROOT) to token `dep`.
    pub fn node(&self, head: usize, dep: usize) -> f64 {
        self.values[head * self.len + dep]
    }

    pub fn get(&self, head: Head, dep: usize) -> f64 {
        self.node(head.node(), dep)
    }

    pub fn set(&mut self, head: usize, dep: usize, value: f64) {
        self.values[head * self.len + dep] = value;
    }

    /// Sum of the selected arc scores, accumulated in token order.
    pub fn tree_weight(&self, heads: &[Head]) -> f64 {
        heads.iter().enumerate().map(|(dep, head)| self.get(*head, dep)).sum()
    }

    pub fn add_constant(&self, c: f64) -> ArcScores {
        ArcScores {
            len: self.len,
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }

    /// Elementwise mean of equally sized matrices.
    pub fn mean(matrices: &[ArcScores]) -> ArcScores {
        let len = matrices[0].len;
        let mut out = ArcScores::zeros(len);
        for m in matrices {
            assert_eq!(m.len, len, "matrices cover different sentences");
            for (o, v) in out.values.iter_mut().zip(&m.values) {
                *o += v;
            }
        }
        let k = matrices.len() as f64;
        for o in &mut out.values {
            *o /= k;
        }
        out
    }
}

const ROOT_FORM: &str = "<ROOT>";
const PAD_START: &str = "<S>";
const PAD_END: &str = "</S>";

/// Lowercased forms and tags in node space (index 0 is ROOT).
pub struct NodeView {
    words: Vec<String>,
    tags: Vec<String>,
}

impl NodeView {
    pub fn new(sentence: &Sentence) -> Self {
        let mut words = Vec::with_capacity(sentence.len() + 1);
        let mut tags = Vec::with_capacity(sentence.len() + 1);
        words.push(ROOT_FORM.to_string());
        tags.push(ROOT_FORM.to_string());
        for (w, t) in sentence.tokens().iter().zip(sentence.pos_tags()) {
            words.push(w.to_lowercase());
            tags.push(t.clone());
        }
        NodeView { words, tags }
    }

    pub(crate) fn word(&self, node: usize) -> &str {
        &self.words[node]
    }

    pub(crate) fn tag(&self, node: isize) -> &str {
        if node < 0 {
            PAD_START
        } else if node as usize >= self.tags.len() {
            PAD_END
        } else {
            &self.tags[node as usize]
        }
    }
}

fn distance_bucket(d: usize) -> &'static str {
    match d {
        0 => "0",
        1 => "1",
        2 => "2",
        3 => "3",
        4 => "4",
        5..=6 => "5-6",
        7..=10 => "7-10",
        _ => "11+",
    }
}

/// Feature ids of the arc `head -> dep + 1` (node indices).
pub(crate) fn arc_features(view: &NodeView, head: usize, dep_node: usize, capacity: Capacity) -> Vec<u64> {
    let dir = if head == 0 {
        "root"
    } else if head < dep_node {
        "R"
    } else {
        "L"
    };
    let hw = view.word(head);
    let dw = view.word(dep_node);
    let (h, d) = (head as isize, dep_node as isize);
    let hp = view.tag(h);
    let dp = view.tag(d);
    let mut ids = vec![
        FeatureHasher::new("a:hw").field(hw).field(dir).finish(),
        FeatureHasher::new("a:hp").field(hp).field(dir).finish(),
        FeatureHasher::new("a:dw").field(dw).field(dir).finish(),
        FeatureHasher::new("a:dp").field(dp).field(dir).finish(),
        FeatureHasher::new("a:hp,dp").field(hp).field(dp).field(dir).finish(),
    ];
    if capacity == Capacity::Large {
        let dist = distance_bucket(head.abs_diff(dep_node));
        ids.push(FeatureHasher::new("a:hw,dp").field(hw).field(dp).field(dir).finish());
        ids.push(FeatureHasher::new("a:hp,dw").field(hp).field(dw).field(dir).finish());
        ids.push(FeatureHasher::new("a:hw,dw").field(hw).field(dw).field(dir).finish());
        ids.push(
            FeatureHasher::new("a:hp,dp,dist")
                .field(hp)
                .field(dp)
                .field(dir)
                .field(dist)
                .finish(),
        );
        ids.push(
            FeatureHasher::new("a:hw,hp,dp,dist")
                .field(hw)
                .field(hp)
                .field(dp)
                .field(dist)
                .finish(),
        );
        if head != 0 {
            let (lo, hi) = if h < d { (h, d) } else { (d, h) };
            let between: BTreeSet<&str> = ((lo + 1)..hi).map(|i| view.tag(i)).collect();
            for b in between {
                ids.push(
                    FeatureHasher::new("a:hp,bp,dp")
                        .field(hp)
                        .field(b)
                        .field(dp)
                        .field(dir)
                        .finish(),
                );
            }
        }
        let context = [
            ("a:hp,hp+1,dp-1,dp", h + 1, d - 1),
            ("a:hp-1,hp,dp-1,dp", h - 1, d - 1),
            ("a:hp,hp+1,dp,dp+1", h + 1, d + 1),
            ("a:hp-1,hp,dp,dp+1", h - 1, d + 1),
        ];
        for (template, hn, dn) in context {
            ids.push(
                FeatureHasher::new(template)
                    .field(hp)
                    .field(view.tag(hn))
                    .field(view.tag(dn))
                    .field(dp)
                    .finish(),
            );
        }
    }
    ids
}

/// Label-feature prefixes of an arc; each is completed with a label name.
pub(crate) fn label_prefixes(view: &NodeView, head: usize, dep_node: usize, capacity: Capacity) -> Vec<FeatureHasher> {
    let dir = if head == 0 {
        "root"
    } else if head < dep_node {
        "R"
    } else {
        "L"
    };
    let (h, d) = (head as isize, dep_node as isize);
    let hp = view.tag(h);
    let dp = view.tag(d);
    let dw = view.word(dep_node);
    let mut prefixes = vec![
        FeatureHasher::new("l:bias"),
        FeatureHasher::new("l:dp").field(dp),
        FeatureHasher::new("l:dw").field(dw),
        FeatureHasher::new("l:hp,dp").field(hp).field(dp).field(dir),
    ];
    if capacity == Capacity::Large {
        let hw = view.word(head);
        prefixes.push(FeatureHasher::new("l:hw,dp").field(hw).field(dp));
        prefixes.push(FeatureHasher::new("l:hp,dw").field(hp).field(dw));
        prefixes.push(FeatureHasher::new("l:dp,dp+1").field(dp).field(view.tag(d + 1)));
        prefixes.push(FeatureHasher::new("l:dp-1,dp").field(view.tag(d - 1)).field(dp));
        prefixes.push(
            FeatureHasher::new("l:hp,dp,dist")
                .field(hp)
                .field(dp)
                .field(distance_bucket(head.abs_diff(dep_node))),
        );
    }
    prefixes
}

pub(crate) fn label_feature_ids(prefixes: &[FeatureHasher], label: &str) -> Vec<u64> {
    prefixes.iter().map(|p| p.field(label).finish()).collect()
}

/// Precomputed arc feature ids for one sentence.
pub(crate) struct ArcFeatureTable {
    len: usize,
    ids: Vec<Vec<u64>>,
}

impl ArcFeatureTable {
    pub fn new(sentence: &Sentence, capacity: Capacity) -> Self {
        let view = NodeView::new(sentence);
        let len = sentence.len();
        let mut ids = Vec::with_capacity((len + 1) * len);
        for head in 0..=len {
            for dep in 0..len {
                if head == dep + 1 {
                    ids.push(Vec::new());
                } else {
                    ids.push(arc_features(&view, head, dep + 1, capacity));
                }
            }
        }
        ArcFeatureTable { len, ids }
    }

    pub fn arc(&self, head: usize, dep: usize) -> &[u64] {
        &self.ids[head * self.len + dep]
    }

    pub fn scores(&self, mut score: impl FnMut(&[u64]) -> f64) -> ArcScores {
        ArcScores::from_fn(self.len, |h, d| score(self.arc(h, d)))
    }
}

/// Arc-factored scorer with a post-hoc arc labeler.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcScorer {
    capacity: Capacity,
    labels: Vec<String>,
    weights: Weights,
    seed: u64,
}

impl ArcScorer {
    pub fn new(capacity: Capacity, labels: Vec<String>, weights: Weights, seed: u64) -> Self {
        ArcScorer {
            capacity,
            labels,
            weights,
            seed,
        }
    }

    pub fn capacity(&self) -> Capacity {
        self.capacity
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_dropout(&self, dropout: &DropoutConfig) -> ArcScorer {
        ArcScorer {
            weights: self.weights.with_dropout(dropout),
            ..self.clone()
        }
    }

    /// Score of every candidate arc. With `dropout`, scoring uses a masked
    /// copy of the weights; without it the result is deterministic.
    pub fn score_arcs(&self, sentence: &Sentence, dropout: Option<&DropoutConfig>) -> ArcScores {
        match dropout {
            Some(cfg) if cfg.rate() > 0.0 => self.with_dropout(cfg).score_arcs(sentence, None),
            _ => ArcFeatureTable::new(sentence, self.capacity).scores(|ids| self.weights.dot(ids)),
        }
    }

    /// Score of every known label for the arc `head -> dep`.
    pub fn label_scores(&self, sentence: &Sentence, head: Head, dep: usize) -> Vec<f64> {
        let view = NodeView::new(sentence);
        self.label_scores_with(&view, head.node(), dep + 1)
    }

    fn label_scores_with(&self, view: &NodeView, head: usize, dep_node: usize) -> Vec<f64> {
        let prefixes = label_prefixes(view, head, dep_node, self.capacity);
        self.labels
            .iter()
            .map(|l| self.weights.dot(&label_feature_ids(&prefixes, l)))
            .collect()
    }

    /// Per-token label score vectors for a fixed head assignment.
    pub fn tree_label_scores(&self, sentence: &Sentence, heads: &[Head]) -> Vec<Vec<f64>> {
        let view = NodeView::new(sentence);
        heads
            .iter()
            .enumerate()
            .map(|(dep, head)| self.label_scores_with(&view, head.node(), dep + 1))
            .collect()
    }

    /// Attaches the best-scoring label to every arc of `heads`.
    pub fn label_tree(&self, sentence: &Sentence, heads: Vec<Head>) -> Result<DepTree, Error> {
        let scores = self.tree_label_scores(sentence, &heads);
        let labels = scores.iter().map(|s| best_label(&self.labels, s)).collect();
        DepTree::new(heads, labels)
    }

    /// Tree score: the sum of the tree's arc scores, plus a vanishingly
    /// weighted label term so that trees with equal heads rank by the
    /// per-token log-softmax of their labels. An unknown label joins the
    /// normalizer with its own score. Only meaningful for ranking trees of
    /// the same sentence.
    pub fn structure_score(&self, sentence: &Sentence, tree: &DepTree) -> f64 {
        let view = NodeView::new(sentence);
        let labels: f64 = (0..tree.len())
            .map(|dep| {
                let head = tree.head(dep).node();
                let mut scores = self.label_scores_with(&view, head, dep + 1);
                let label = tree.label(dep);
                let chosen = match self.labels.iter().position(|l| l == label) {
                    Some(i) => scores[i],
                    None => {
                        let prefixes = label_prefixes(&view, head, dep + 1, self.capacity);
                        let s = self.weights.dot(&label_feature_ids(&prefixes, label));
                        scores.push(s);
                        s
                    }
                };
                chosen - log_sum_exp(&scores)
            })
            .sum();
        self.score_arcs(sentence, None).tree_weight(tree.heads()) + LABEL_TIE_WEIGHT * labels
    }
}

/// Perceptron label margins dwarf arc margins, so a full-weight label term
/// would let dropout-noised labels veto better head attachments.
const LABEL_TIE_WEIGHT: f64 = 1e-6;

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Highest-scoring label; ties go to the earlier label. Falls back to `_`
/// when the label set is empty.
pub(crate) fn best_label(labels: &[String], scores: &[f64]) -> String {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    match best {
        Some((i, _)) => labels[i].clone(),
        None => crate::structures::EMPTY_FIELD.to_string(),
    }
}
