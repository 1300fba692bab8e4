//! Maximum spanning arborescence (Chu-Liu/Edmonds) with a single-root
//! constraint.

use crate::scoring::ArcScores;
use crate::structures::{DepTree, Head};

#[derive(Clone, Copy, Debug)]
struct Edge {
    u: usize,
    v: usize,
    w: f64,
}

/// Recursive Chu-Liu/Edmonds over an explicit edge list. Returns, for every
/// non-root node, the index of its chosen incoming edge, or `None` when
/// some node has no incoming edge.
fn chu_liu_edmonds(n: usize, root: usize, edges: &[Edge]) -> Option<Vec<Option<usize>>> {
    let mut best: Vec<Option<usize>> = vec![None; n];
    for (i, e) in edges.iter().enumerate() {
        if e.v == root || e.u == e.v {
            continue;
        }
        match best[e.v] {
            Some(b) if edges[b].w >= e.w => {}
            _ => best[e.v] = Some(i),
        }
    }
    if (0..n).any(|v| v != root && best[v].is_none()) {
        return None;
    }
    let parent = |v: usize| edges[best[v].expect("checked above")].u;

    let mut mark = vec![usize::MAX; n];
    let mut cycle = None;
    for start in 0..n {
        let mut v = start;
        while v != root && mark[v] == usize::MAX {
            mark[v] = start;
            v = parent(v);
        }
        if v != root && mark[v] == start {
            let mut members = vec![v];
            let mut x = parent(v);
            while x != v {
                members.push(x);
                x = parent(x);
            }
            cycle = Some(members);
            break;
        }
    }
    let Some(cycle) = cycle else {
        return Some(best);
    };

    let mut in_cycle = vec![false; n];
    for &c in &cycle {
        in_cycle[c] = true;
    }
    let mut map = vec![0; n];
    let mut next = 0;
    for v in 0..n {
        if !in_cycle[v] {
            map[v] = next;
            next += 1;
        }
    }
    for &c in &cycle {
        map[c] = next;
    }
    let mut contracted = Vec::with_capacity(edges.len());
    let mut origin = Vec::with_capacity(edges.len());
    for (i, e) in edges.iter().enumerate() {
        let (u, v) = (map[e.u], map[e.v]);
        if u == v {
            continue;
        }
        let w = if in_cycle[e.v] {
            e.w - edges[best[e.v].expect("cycle node has an edge")].w
        } else {
            e.w
        };
        contracted.push(Edge { u, v, w });
        origin.push(i);
    }
    let chosen = chu_liu_edmonds(next + 1, map[root], &contracted)?;
    let mut result: Vec<Option<usize>> = vec![None; n];
    for edge in chosen.into_iter().flatten() {
        let original = origin[edge];
        result[edges[original].v] = Some(original);
    }
    for &c in &cycle {
        if result[c].is_none() {
            result[c] = best[c];
        }
    }
    Some(result)
}

/// Best arborescence using only arcs with `allowed(head_node, dep)`; several
/// tokens may attach to ROOT.
fn unconstrained(scores: &ArcScores, allowed: &dyn Fn(usize, usize) -> bool) -> Option<Vec<Head>> {
    let n = scores.len();
    let mut edges = Vec::with_capacity((n + 1) * n);
    for h in 0..=n {
        for d in 0..n {
            if h != d + 1 && allowed(h, d) {
                edges.push(Edge {
                    u: h,
                    v: d + 1,
                    w: scores.node(h, d),
                });
            }
        }
    }
    let chosen = chu_liu_edmonds(n + 1, 0, &edges)?;
    Some(
        (1..=n)
            .map(|v| Head::from_node(edges[chosen[v].expect("non-root node")].u))
            .collect(),
    )
}

/// Best single-root arborescence whose arcs all satisfy `allowed`. Ties
/// between root choices go to the canonically smaller tree.
pub(crate) fn best_single_root(scores: &ArcScores, allowed: &dyn Fn(usize, usize) -> bool) -> Option<Vec<Head>> {
    let heads = unconstrained(scores, allowed)?;
    if heads.iter().filter(|h| **h == Head::Root).count() == 1 {
        return Some(heads);
    }
    let mut best: Option<(f64, Vec<Head>)> = None;
    for root in 0..scores.len() {
        if !allowed(0, root) {
            continue;
        }
        let only_root = |h: usize, d: usize| allowed(h, d) && (h != 0 || d == root);
        if let Some(heads) = unconstrained(scores, &only_root) {
            let w = scores.tree_weight(&heads);
            let better = match &best {
                None => true,
                Some((bw, bh)) => w > *bw || (w == *bw && heads < *bh),
            };
            if better {
                best = Some((w, heads));
            }
        }
    }
    best.map(|(_, heads)| heads)
}

/// Maximum single-root spanning tree without canonical tie resolution.
/// Cheaper than [`mst_decode`]; used inside training loops.
pub fn max_spanning_tree(scores: &ArcScores) -> Vec<Head> {
    best_single_root(scores, &|_, _| true).expect("complete graph has a spanning tree")
}

/// Maximum-weight single-root arborescence. Among equal-weight trees the
/// canonically smallest head sequence wins. Labels are left as `_`.
pub fn mst_decode(scores: &ArcScores) -> DepTree {
    super::kbest::kbest_mst(scores, 1)
        .into_iter()
        .next()
        .expect("complete graph has a spanning tree")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token_attaches_to_root() {
        let tree = mst_decode(&ArcScores::from_fn(1, |_, _| 3.0));
        assert_eq!(tree.heads(), &[Head::Root]);
    }

    #[test]
    fn unique_chain_is_found() {
        // ROOT -> 0 -> 1 -> 2
        let scores = ArcScores::from_fn(3, |h, d| if h == d { 1.0 } else { 0.0 });
        let tree = mst_decode(&scores);
        assert_eq!(tree.heads(), &[Head::Root, Head::Word(0), Head::Word(1)]);
    }

    #[test]
    fn cycle_is_broken() {
        // 0 <-> 1 strongly prefer each other; ROOT arcs are weak.
        let scores = ArcScores::from_fn(2, |h, d| match (h, d) {
            (2, 0) | (1, 1) => 10.0,
            (0, 0) => 1.0,
            _ => 0.0,
        });
        assert_eq!(mst_decode(&scores).heads(), &[Head::Root, Head::Word(0)]);
    }

    #[test]
    fn single_root_is_enforced() {
        // Every token prefers ROOT.
        let scores = ArcScores::from_fn(4, |h, d| if h == 0 { 5.0 + d as f64 } else { 0.0 });
        let tree = mst_decode(&scores);
        assert_eq!(tree.heads().iter().filter(|h| **h == Head::Root).count(), 1);
        let multi = unconstrained(&scores, &|_, _| true).unwrap();
        assert!(multi.iter().all(|h| *h == Head::Root));
    }

    #[test]
    fn all_zero_matrix_gives_canonical_tree() {
        let tree = mst_decode(&ArcScores::zeros(3));
        // Smallest head sequence: ROOT, then token 0 for the rest.
        assert_eq!(tree.heads(), &[Head::Root, Head::Word(0), Head::Word(0)]);
    }
}
