//! Structured-prediction data types: sentences, dependency trees,
//! intent/slot trees and the labeled-span view of the latter.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::Error;
use serde::{Deserialize, Serialize};

mod conllu;
mod top;

pub use conllu::{parse_conllu, read_conllu, write_conllu};
pub use top::{parse_top, parse_top_tree, read_top, serialize_top, write_top};

/// Universal POS tag that marks a token as punctuation.
pub const PUNCT_TAG: &str = "PUNCT";

/// Joins the labels of same-range nested nodes into one span label.
pub const CHAIN_SEPARATOR: &str = ";";

/// Placeholder used for missing CoNLL-U fields and unknown labels.
pub const EMPTY_FIELD: &str = "_";

/// A tokenized input sentence with its universal POS tags.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sentence {
    id: String,
    tokens: Vec<String>,
    pos_tags: Vec<String>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, pos_tags: Vec<String>) -> Result<Self, Error> {
        let id = id.into();
        if tokens.is_empty() {
            return Err(Error::InvalidSentence(format!("sentence {} has no tokens", id)));
        }
        if tokens.len() != pos_tags.len() {
            return Err(Error::InvalidSentence(format!(
                "sentence {} has {} tokens but {} POS tags",
                id,
                tokens.len(),
                pos_tags.len()
            )));
        }
        Ok(Sentence { id, tokens, pos_tags })
    }

    /// Sentence without POS information; every tag is `_`.
    pub fn untagged(id: impl Into<String>, tokens: Vec<String>) -> Result<Self, Error> {
        let tags = vec![EMPTY_FIELD.to_string(); tokens.len()];
        Sentence::new(id, tokens, tags)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pos_tags(&self) -> &[String] {
        &self.pos_tags
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Always false: the constructor rejects empty sentences.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_punct(&self, token: usize) -> bool {
        self.pos_tags[token] == PUNCT_TAG
    }
}

/// Head of a token in a dependency tree.
///
/// The derived order (`Root` before every word, words by index) is the
/// order used when comparing trees canonically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Head {
    Root,
    Word(usize),
}

impl Head {
    /// Node index in an arc-score matrix: 0 is ROOT, token `i` is `i + 1`.
    pub fn node(self) -> usize {
        match self {
            Head::Root => 0,
            Head::Word(i) => i + 1,
        }
    }

    pub fn from_node(node: usize) -> Head {
        if node == 0 {
            Head::Root
        } else {
            Head::Word(node - 1)
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.node())
    }
}

/// Checks the arborescence invariant: exactly one ROOT-attached token,
/// every head in range, no self loops and no cycles.
pub fn check_arborescence(heads: &[Head]) -> Result<(), String> {
    let n = heads.len();
    if n == 0 {
        return Err("tree has no tokens".into());
    }
    let roots = heads.iter().filter(|h| **h == Head::Root).count();
    if roots != 1 {
        return Err(format!("expected exactly one root, found {}", roots));
    }
    for (dep, head) in heads.iter().enumerate() {
        if let Head::Word(h) = *head {
            if h >= n {
                return Err(format!("token {} has out-of-range head {}", dep, h));
            }
            if h == dep {
                return Err(format!("token {} is its own head", dep));
            }
        }
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches ROOT
    let mut state = vec![0u8; n];
    for start in 0..n {
        let mut path = Vec::new();
        let mut cur = start;
        loop {
            match state[cur] {
                2 => break,
                1 => return Err(format!("cycle through token {}", cur)),
                _ => {}
            }
            state[cur] = 1;
            path.push(cur);
            match heads[cur] {
                Head::Root => break,
                Head::Word(h) => cur = h,
            }
        }
        for node in path {
            state[node] = 2;
        }
    }
    Ok(())
}

/// A labeled dependency tree over the tokens of one sentence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DepTree {
    heads: Vec<Head>,
    labels: Vec<String>,
}

impl DepTree {
    pub fn new(heads: Vec<Head>, labels: Vec<String>) -> Result<Self, Error> {
        if heads.len() != labels.len() {
            return Err(Error::InvalidTree(format!(
                "{} heads but {} labels",
                heads.len(),
                labels.len()
            )));
        }
        check_arborescence(&heads).map_err(Error::InvalidTree)?;
        Ok(DepTree { heads, labels })
    }

    /// Tree whose labels are all `_`.
    pub fn unlabeled(heads: Vec<Head>) -> Result<Self, Error> {
        let labels = vec![EMPTY_FIELD.to_string(); heads.len()];
        DepTree::new(heads, labels)
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn head(&self, token: usize) -> Head {
        self.heads[token]
    }

    pub fn label(&self, token: usize) -> &str {
        &self.labels[token]
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// The token attached to ROOT.
    pub fn root(&self) -> usize {
        self.heads
            .iter()
            .position(|h| *h == Head::Root)
            .expect("validated tree has a root")
    }

    pub fn with_labels(&self, labels: Vec<String>) -> Result<Self, Error> {
        DepTree::new(self.heads.clone(), labels)
    }
}

/// A labeled span `(start, end, label)`, both ends inclusive.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl LabeledSpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        LabeledSpan {
            start,
            end,
            label: label.into(),
        }
    }
}

impl fmt::Display for LabeledSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.start, self.end, self.label)
    }
}

/// Node of an intent/slot tree. Leaves are token positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpanNode {
    Leaf(usize),
    Node { label: String, children: Vec<SpanNode> },
}

impl SpanNode {
    pub fn node(label: impl Into<String>, children: Vec<SpanNode>) -> Self {
        SpanNode::Node {
            label: label.into(),
            children,
        }
    }

    /// Token range covered by this node. Interior nodes must have children.
    pub fn range(&self) -> (usize, usize) {
        match self {
            SpanNode::Leaf(i) => (*i, *i),
            SpanNode::Node { children, .. } => (
                children.first().expect("non-empty node").range().0,
                children.last().expect("non-empty node").range().1,
            ),
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            SpanNode::Leaf(_) => None,
            SpanNode::Node { label, .. } => Some(label),
        }
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            SpanNode::Leaf(i) => out.push(*i),
            SpanNode::Node { children, .. } => {
                for child in children {
                    child.collect_leaves(out);
                }
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        if let SpanNode::Node { label, children } = self {
            if !is_intent(label) && !is_slot(label) {
                return Err(format!("label {:?} is neither IN:* nor SL:*", label));
            }
            if children.is_empty() {
                return Err(format!("node {} has no children", label));
            }
            for child in children {
                child.validate()?;
            }
        }
        Ok(())
    }

    pub fn interior_count(&self) -> usize {
        match self {
            SpanNode::Leaf(_) => 0,
            SpanNode::Node { children, .. } => 1 + children.iter().map(SpanNode::interior_count).sum::<usize>(),
        }
    }
}

pub fn is_intent(label: &str) -> bool {
    label.len() > 3 && label.starts_with("IN:")
}

pub fn is_slot(label: &str) -> bool {
    label.len() > 3 && label.starts_with("SL:")
}

/// A hierarchical intent/slot tree whose leaves are the sentence positions
/// `0..len` in order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpanTree {
    root: SpanNode,
    len: usize,
}

impl SpanTree {
    pub fn new(root: SpanNode) -> Result<Self, Error> {
        match root.label() {
            Some(label) if is_intent(label) => {}
            Some(label) => return Err(Error::InvalidTree(format!("root label {} is not an intent", label))),
            None => return Err(Error::InvalidTree("root is a leaf".into())),
        }
        root.validate().map_err(Error::InvalidTree)?;
        let mut leaves = Vec::new();
        root.collect_leaves(&mut leaves);
        if leaves.iter().enumerate().any(|(i, &leaf)| i != leaf) {
            return Err(Error::InvalidTree(format!(
                "leaves {:?} are not the positions 0..{}",
                leaves,
                leaves.len()
            )));
        }
        Ok(SpanTree {
            len: leaves.len(),
            root,
        })
    }

    pub fn root(&self) -> &SpanNode {
        &self.root
    }

    /// Number of tokens covered.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// One labeled span per maximal chain of interior nodes sharing a token
    /// range, labels joined top-down with [`CHAIN_SEPARATOR`].
    pub fn decompose_to_spans(&self) -> BTreeSet<LabeledSpan> {
        let mut spans = BTreeSet::new();
        collect_spans(&self.root, None, &mut spans);
        spans
    }
}

fn collect_spans(node: &SpanNode, prefix: Option<String>, out: &mut BTreeSet<LabeledSpan>) {
    let SpanNode::Node { label, children } = node else {
        return;
    };
    let chain = match prefix {
        Some(prefix) => format!("{}{}{}", prefix, CHAIN_SEPARATOR, label),
        None => label.clone(),
    };
    let range = node.range();
    // A child covering the whole range is necessarily the only child.
    if let [child @ SpanNode::Node { .. }] = children.as_slice() {
        if child.range() == range {
            collect_spans(child, Some(chain), out);
            return;
        }
    }
    out.insert(LabeledSpan::new(range.0, range.1, chain));
    for child in children {
        collect_spans(child, None, out);
    }
}

/// Free-function form of [`SpanTree::decompose_to_spans`].
pub fn decompose_to_spans(tree: &SpanTree) -> BTreeSet<LabeledSpan> {
    tree.decompose_to_spans()
}

/// Output structure of either task.
///
/// The derived `Ord` is the canonical order used to break score ties.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Structure {
    Dep(DepTree),
    Span(SpanTree),
}

impl Structure {
    pub fn task(&self) -> Task {
        match self {
            Structure::Dep(_) => Task::Dependency,
            Structure::Span(_) => Task::Semantic,
        }
    }

    pub fn as_dep(&self) -> Option<&DepTree> {
        match self {
            Structure::Dep(tree) => Some(tree),
            Structure::Span(_) => None,
        }
    }

    pub fn as_span(&self) -> Option<&SpanTree> {
        match self {
            Structure::Span(tree) => Some(tree),
            Structure::Dep(_) => None,
        }
    }

    /// Number of tokens the structure covers.
    pub fn len(&self) -> usize {
        match self {
            Structure::Dep(tree) => tree.len(),
            Structure::Span(tree) => tree.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl From<DepTree> for Structure {
    fn from(tree: DepTree) -> Self {
        Structure::Dep(tree)
    }
}

impl From<SpanTree> for Structure {
    fn from(tree: SpanTree) -> Self {
        Structure::Span(tree)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Dependency,
    Semantic,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Dependency => f.write_str("dependency"),
            Task::Semantic => f.write_str("semantic"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub sentence: Sentence,
    pub gold: Structure,
}

/// A list of annotated sentences of a single task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    task: Task,
    split: Split,
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(task: Task, split: Split, examples: Vec<Example>) -> Result<Self, Error> {
        for example in &examples {
            let found = example.gold.task();
            if found != task {
                return Err(Error::TaskMismatch { expected: task, found });
            }
            if example.gold.len() != example.sentence.len() {
                return Err(Error::Structure {
                    sentence_id: example.sentence.id().to_string(),
                    message: format!(
                        "structure covers {} tokens, sentence has {}",
                        example.gold.len(),
                        example.sentence.len()
                    ),
                });
            }
        }
        Ok(Dataset { task, split, examples })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.examples.iter().map(|e| &e.sentence)
    }

    pub fn golds(&self) -> impl Iterator<Item = &Structure> {
        self.examples.iter().map(|e| &e.gold)
    }

    /// Same sentences with the gold structures replaced.
    pub fn with_golds(&self, golds: Vec<Structure>) -> Result<Self, Error> {
        if golds.len() != self.examples.len() {
            return Err(Error::InvalidTree(format!(
                "{} structures for {} sentences",
                golds.len(),
                self.examples.len()
            )));
        }
        let examples = self
            .examples
            .iter()
            .zip(golds)
            .map(|(e, gold)| Example {
                sentence: e.sentence.clone(),
                gold,
            })
            .collect();
        Dataset::new(self.task, self.split, examples)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Examples at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Dataset {
            task: self.task,
            split: self.split,
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Example;
    type IntoIter = std::slice::Iter<'a, Example>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn figure_one_gold() -> SpanTree {
        let (_, root) = parse_top_tree(
            "[IN:GET_DIRECTION Directions to [SL:DESTINATION [IN:FIND_EVENT \
             [SL:ORGANIZER the ] Eagles [SL:CATEGORY game ] ] ] ]",
        )
        .unwrap();
        SpanTree::new(root).unwrap()
    }

    #[test]
    fn sentence_rejects_length_mismatch() {
        assert!(Sentence::new("a", words("x y"), words("NOUN")).is_err());
        assert!(Sentence::new("a", vec![], vec![]).is_err());
    }

    #[test]
    fn arborescence_checks() {
        use Head::*;
        assert!(check_arborescence(&[Word(1), Root]).is_ok());
        assert!(check_arborescence(&[Word(1), Word(0)]).is_err());
        assert!(check_arborescence(&[Root, Root]).is_err());
        assert!(check_arborescence(&[Root, Word(1)]).is_err());
        assert!(check_arborescence(&[Root, Word(2), Word(1)]).is_err());
        assert!(check_arborescence(&[Root, Word(5)]).is_err());
    }

    #[test]
    fn figure_one_decomposes_to_four_spans() {
        let spans = figure_one_gold().decompose_to_spans();
        let expected: BTreeSet<_> = [
            LabeledSpan::new(0, 4, "IN:GET_DIRECTION"),
            LabeledSpan::new(2, 4, "SL:DESTINATION;IN:FIND_EVENT"),
            LabeledSpan::new(2, 2, "SL:ORGANIZER"),
            LabeledSpan::new(4, 4, "SL:CATEGORY"),
        ]
        .into_iter()
        .collect();
        assert_eq!(spans, expected);
    }

    #[test]
    fn single_intent_is_one_span() {
        let root = SpanNode::node("IN:X", (0..3).map(SpanNode::Leaf).collect());
        let tree = SpanTree::new(root).unwrap();
        let spans: Vec<_> = tree.decompose_to_spans().into_iter().collect();
        assert_eq!(spans, vec![LabeledSpan::new(0, 2, "IN:X")]);
    }

    #[test]
    fn full_range_span_starts_with_root_intent() {
        let spans = figure_one_gold().decompose_to_spans();
        let full = spans.iter().find(|s| s.start == 0 && s.end == 4).unwrap();
        assert!(full.label.starts_with("IN:GET_DIRECTION"));
    }

    #[test]
    fn span_tree_invariants() {
        assert!(SpanTree::new(SpanNode::node("SL:X", vec![SpanNode::Leaf(0)])).is_err());
        assert!(SpanTree::new(SpanNode::node("IN:X", vec![SpanNode::Leaf(1)])).is_err());
        assert!(SpanTree::new(SpanNode::node(
            "IN:X",
            vec![SpanNode::Leaf(0), SpanNode::node("SL:Y", vec![])]
        ))
        .is_err());
        assert!(SpanTree::new(SpanNode::node("FOO", vec![SpanNode::Leaf(0)])).is_err());
    }

    #[test]
    fn dataset_rejects_mixed_tasks() {
        let sentence = Sentence::untagged("a", words("x")).unwrap();
        let dep = DepTree::unlabeled(vec![Head::Root]).unwrap();
        let span = SpanTree::new(SpanNode::node("IN:X", vec![SpanNode::Leaf(0)])).unwrap();
        let examples = vec![
            Example {
                sentence: sentence.clone(),
                gold: dep.into(),
            },
            Example {
                sentence,
                gold: span.into(),
            },
        ];
        assert!(Dataset::new(Task::Dependency, Split::Train, examples).is_err());
    }

    #[test]
    fn canonical_order_puts_root_first() {
        assert!(Head::Root < Head::Word(0));
        assert!(Head::Word(0) < Head::Word(3));
        let a = DepTree::unlabeled(vec![Head::Root, Head::Word(0)]).unwrap();
        let b = DepTree::unlabeled(vec![Head::Word(1), Head::Root]).unwrap();
        assert!(a < b);
    }
}
