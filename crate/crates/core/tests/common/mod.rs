#![allow(dead_code)]

use backcompat::harness::ExperimentConfig;
use backcompat::scoring::ArcScores;
use backcompat::structures::Head;

pub const DESK_CONFIG: &str = include_str!("../../../../configs/desk.toml");

pub fn desk_config() -> ExperimentConfig {
    ExperimentConfig::from_toml(DESK_CONFIG).expect("shipped config is valid")
}

/// Follows head pointers from every token; valid iff each walk reaches
/// ROOT within n steps and exactly one token attaches to ROOT.
pub fn is_single_root_tree(heads: &[Head]) -> bool {
    let n = heads.len();
    if heads.iter().filter(|h| **h == Head::Root).count() != 1 {
        return false;
    }
    (0..n).all(|start| {
        let mut cur = start;
        for _ in 0..=n {
            match heads[cur] {
                Head::Root => return true,
                Head::Word(h) if h < n && h != cur => cur = h,
                Head::Word(_) => return false,
            }
        }
        false
    })
}

/// Every single-root tree over `n` tokens, by brute force over all
/// (n+1)^n head assignments.
pub fn all_trees(n: usize) -> Vec<Vec<Head>> {
    let total = (n + 1).pow(n as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let heads: Vec<Head> = (0..n)
            .map(|_| {
                let h = c % (n + 1);
                c /= n + 1;
                if h == 0 {
                    Head::Root
                } else {
                    Head::Word(h - 1)
                }
            })
            .collect();
        if is_single_root_tree(&heads) {
            out.push(heads);
        }
    }
    out
}

/// Tree weight summed in token order.
pub fn weight(scores: &ArcScores, heads: &[Head]) -> f64 {
    heads.iter().enumerate().map(|(d, &h)| scores.get(h, d)).sum()
}

/// All trees sorted best first, ties by ascending head vector.
pub fn ranked_trees(scores: &ArcScores) -> Vec<(f64, Vec<Head>)> {
    let mut trees: Vec<(f64, Vec<Head>)> = all_trees(scores.len())
        .into_iter()
        .map(|h| (weight(scores, &h), h))
        .collect();
    trees.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    trees
}
