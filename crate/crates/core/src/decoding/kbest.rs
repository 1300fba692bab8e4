//! k-best single-root arborescences by Lawler-style partitioning: each
//! subproblem fixes some heads and forbids some arcs, and the best tree of
//! a subproblem splits the remainder of its space into disjoint children.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::mst::best_single_root;
use crate::scoring::ArcScores;
use crate::structures::{DepTree, Head};

/// Upper bound on how many equal-weight trees are collected before they
/// are sorted canonically. Beyond it, order among exact ties is only
/// deterministic, not canonical.
pub const TIE_GROUP_LIMIT: usize = 10_000;

#[derive(Clone, Debug)]
struct Subproblem {
    /// Forced head node per token.
    forced: Vec<Option<usize>>,
    /// Forbidden (head node, token) arcs, dense `(n + 1) x n`.
    banned: Vec<bool>,
    heads: Vec<Head>,
    weight: f64,
}

impl PartialEq for Subproblem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Subproblem {}

impl PartialOrd for Subproblem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Subproblem {
    // Max-heap: higher weight first, then canonically smaller heads.
    fn cmp(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then_with(|| other.heads.cmp(&self.heads))
    }
}

fn solve(scores: &ArcScores, forced: Vec<Option<usize>>, banned: Vec<bool>) -> Option<Subproblem> {
    let n = scores.len();
    let allowed = |h: usize, d: usize| match forced[d] {
        Some(f) => f == h,
        None => !banned[h * n + d],
    };
    let heads = best_single_root(scores, &allowed)?;
    let weight = scores.tree_weight(&heads);
    Some(Subproblem {
        forced,
        banned,
        heads,
        weight,
    })
}

fn expand(scores: &ArcScores, parent: &Subproblem, heap: &mut BinaryHeap<Subproblem>) {
    let n = scores.len();
    let mut forced = parent.forced.clone();
    for d in 0..n {
        if parent.forced[d].is_some() {
            continue;
        }
        let head = parent.heads[d].node();
        let mut banned = parent.banned.clone();
        banned[head * n + d] = true;
        if let Some(child) = solve(scores, forced.clone(), banned) {
            heap.push(child);
        }
        forced[d] = Some(head);
    }
}

/// The `k` highest-weight distinct single-root arborescences in
/// non-increasing weight order; equal weights are ordered by head
/// sequence. Labels are left as `_`.
pub fn kbest_mst(scores: &ArcScores, k: usize) -> Vec<DepTree> {
    let n = scores.len();
    let mut out: Vec<Vec<Head>> = Vec::new();
    let mut heap = BinaryHeap::new();
    if let Some(root) = solve(scores, vec![None; n], vec![false; (n + 1) * n]) {
        heap.push(root);
    }
    while out.len() < k {
        let Some(top) = heap.pop() else { break };
        let weight = top.weight;
        expand(scores, &top, &mut heap);
        let mut group = vec![top.heads];
        while group.len() < TIE_GROUP_LIMIT && heap.peek().is_some_and(|s| s.weight == weight) {
            let tied = heap.pop().expect("peeked");
            expand(scores, &tied, &mut heap);
            group.push(tied.heads);
        }
        if group.len() == TIE_GROUP_LIMIT {
            log::warn!("k-best tie group truncated at {} trees", TIE_GROUP_LIMIT);
        }
        group.sort();
        let room = k - out.len();
        out.extend(group.into_iter().take(room));
    }
    out.into_iter()
        .map(|heads| DepTree::unlabeled(heads).expect("decoder yields arborescences"))
        .collect()
}
