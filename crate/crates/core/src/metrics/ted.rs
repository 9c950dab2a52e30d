//! Ordered tree edit distance (Zhang and Shasha) and TEDn.

use std::collections::HashMap;

use thiserror::Error;

use crate::mxl::{flatten_notes, truncate, LabeledTree};
use crate::Cost;

/// Default node limit; trees are truncated to stay strictly below it.
pub const DEFAULT_MAX_NODES: usize = 6000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TedError {
    #[error("tree has {nodes} nodes, above the limit of {limit}")]
    TreeTooLarge { nodes: usize, limit: usize },
    #[error("invalid edit costs: {0}")]
    InvalidCosts(String),
    #[error("max_nodes must be at least 2, got {0}")]
    InvalidLimit(usize),
}

/// Per-node operation costs. Relabeling equal labels is always free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EditCosts<C> {
    pub insert: C,
    pub delete: C,
    pub relabel: C,
}

impl<C: Cost> Default for EditCosts<C> {
    fn default() -> Self {
        EditCosts { insert: C::one(), delete: C::one(), relabel: C::one() }
    }
}

impl<C: Cost> EditCosts<C> {
    pub fn validate(&self) -> Result<(), TedError> {
        for (name, c) in [("insert", self.insert), ("delete", self.delete), ("relabel", self.relabel)] {
            if !c.is_nonnegative() {
                return Err(TedError::InvalidCosts(format!("{name} cost {c:?} is negative")));
            }
        }
        Ok(())
    }
}

/// Post-order view of a tree: label ids, leftmost-leaf indices and keyroots,
/// all 1-based as in the original formulation.
struct Postorder {
    labels: Vec<u32>,
    leftmost: Vec<usize>,
    keyroots: Vec<usize>,
}

impl Postorder {
    fn new(tree: &LabeledTree, interner: &mut HashMap<String, u32>) -> Self {
        let mut labels = vec![0];
        let mut leftmost = vec![0];
        // Iterative post-order: (node, next child index, leftmost leaf so far).
        let mut stack: Vec<(&LabeledTree, usize, usize)> = vec![(tree, 0, 0)];
        while let Some(top) = stack.last_mut() {
            let (node, next, _) = *top;
            if next < node.children.len() {
                top.1 += 1;
                stack.push((&node.children[next], 0, 0));
                continue;
            }
            let (node, _, lm) = stack.pop().expect("stack is non-empty");
            let index = labels.len();
            let lm = if node.children.is_empty() { index } else { lm };
            let next_id = interner.len() as u32;
            labels.push(*interner.entry(node.label.clone()).or_insert(next_id));
            leftmost.push(lm);
            // A parent's leftmost leaf is that of its first child.
            if let Some(parent) = stack.last_mut() {
                if parent.1 == 1 {
                    parent.2 = lm;
                }
            }
        }
        let n = labels.len() - 1;
        let mut seen = vec![false; n + 1];
        let mut keyroots = Vec::new();
        for i in (1..=n).rev() {
            if !seen[leftmost[i]] {
                seen[leftmost[i]] = true;
                keyroots.push(i);
            }
        }
        keyroots.reverse();
        Postorder { labels, leftmost, keyroots }
    }

    fn len(&self) -> usize {
        self.labels.len() - 1
    }
}

/// Minimal cost of turning `a` into `b` by inserting, deleting and relabeling
/// nodes. Fails if either tree has more than [`DEFAULT_MAX_NODES`] nodes.
pub fn tree_edit_distance<C: Cost>(a: &LabeledTree, b: &LabeledTree, costs: &EditCosts<C>) -> Result<C, TedError> {
    tree_edit_distance_capped(a, b, costs, DEFAULT_MAX_NODES)
}

/// [`tree_edit_distance`] with an explicit node cap per tree.
pub fn tree_edit_distance_capped<C: Cost>(
    a: &LabeledTree,
    b: &LabeledTree,
    costs: &EditCosts<C>,
    cap: usize,
) -> Result<C, TedError> {
    costs.validate()?;
    for t in [a, b] {
        let nodes = t.node_count();
        if nodes > cap {
            return Err(TedError::TreeTooLarge { nodes, limit: cap });
        }
    }
    let mut interner = HashMap::new();
    let ta = Postorder::new(a, &mut interner);
    let tb = Postorder::new(b, &mut interner);
    let (m, n) = (ta.len(), tb.len());
    let width = n + 1;
    let mut treedist = vec![C::zero(); (m + 1) * width];
    let mut forest = vec![C::zero(); (m + 1) * width];

    for &i in &ta.keyroots {
        for &j in &tb.keyroots {
            let (li, lj) = (ta.leftmost[i], tb.leftmost[j]);
            forest[(li - 1) * width + lj - 1] = C::zero();
            for x in li..=i {
                forest[x * width + lj - 1] = forest[(x - 1) * width + lj - 1] + costs.delete;
            }
            for y in lj..=j {
                forest[(li - 1) * width + y] = forest[(li - 1) * width + y - 1] + costs.insert;
            }
            for x in li..=i {
                let lx = ta.leftmost[x];
                for y in lj..=j {
                    let ly = tb.leftmost[y];
                    let del = forest[(x - 1) * width + y] + costs.delete;
                    let ins = forest[x * width + y - 1] + costs.insert;
                    let best = del.min_of(ins);
                    if lx == li && ly == lj {
                        let ren = if ta.labels[x] == tb.labels[y] { C::zero() } else { costs.relabel };
                        let v = best.min_of(forest[(x - 1) * width + y - 1] + ren);
                        forest[x * width + y] = v;
                        treedist[x * width + y] = v;
                    } else {
                        let sub = forest[(lx - 1) * width + ly - 1] + treedist[x * width + y];
                        forest[x * width + y] = best.min_of(sub);
                    }
                }
            }
        }
    }
    Ok(treedist[m * width + n])
}

/// Cost of building `tree` from nothing.
pub fn insertion_cost<C: Cost>(tree: &LabeledTree, costs: &EditCosts<C>) -> C {
    (0..tree.node_count()).fold(C::zero(), |acc, _| acc + costs.insert)
}

/// TEDn with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct TednOutcome<C> {
    pub score: f64,
    pub distance: C,
    /// Node counts after note flattening, before truncation.
    pub pred_nodes: usize,
    pub gold_nodes: usize,
    pub truncated: bool,
}

/// TEDn with unit costs.
pub fn tedn(pred: Option<&LabeledTree>, gold: &LabeledTree, max_nodes: usize) -> Result<TednOutcome<u32>, TedError> {
    tedn_with_costs(pred, gold, max_nodes, &EditCosts::default())
}

/// Flattens notes, truncates both trees to fewer than `max_nodes` nodes and
/// divides `ted(pred, gold)` by the cost of building gold from nothing.
/// `None` and a root-only prediction both count as an empty prediction.
/// The score is not clamped and can exceed 1.
pub fn tedn_with_costs<C: Cost>(
    pred: Option<&LabeledTree>,
    gold: &LabeledTree,
    max_nodes: usize,
    costs: &EditCosts<C>,
) -> Result<TednOutcome<C>, TedError> {
    if max_nodes < 2 {
        return Err(TedError::InvalidLimit(max_nodes));
    }
    costs.validate()?;
    let limit = max_nodes - 1;
    let gold_flat = flatten_notes(gold).into_tree();
    let gold_nodes = gold_flat.node_count();
    let gold_cut = truncate(&gold_flat, limit);
    let mut truncated = gold_nodes > limit;

    let denominator = insertion_cost(&gold_cut, costs);
    if denominator <= C::zero() {
        return Err(TedError::InvalidCosts("insert cost must be positive".into()));
    }

    let pred = pred.filter(|p| p.node_count() > 1);
    let (distance, pred_nodes) = match pred {
        None => (denominator, 0),
        Some(p) => {
            let flat = flatten_notes(p).into_tree();
            let nodes = flat.node_count();
            truncated |= nodes > limit;
            let cut = truncate(&flat, limit);
            (tree_edit_distance_capped(&cut, &gold_cut, costs, limit)?, nodes)
        }
    };
    Ok(TednOutcome { score: distance.ratio(denominator), distance, pred_nodes, gold_nodes, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    fn t(label: &str, children: Vec<LabeledTree>) -> LabeledTree {
        LabeledTree::node(label, children)
    }
    fn l(label: &str) -> LabeledTree {
        LabeledTree::leaf(label)
    }

    #[test]
    fn identity_and_single_relabel() {
        let a = t("a", vec![l("b"), t("c", vec![l("d")])]);
        assert_eq!(tree_edit_distance(&a, &a, &EditCosts::<u32>::default()).unwrap(), 0);
        assert_eq!(tree_edit_distance(&l("x"), &l("y"), &EditCosts::<u32>::default()).unwrap(), 1);
    }

    #[test]
    fn classic_example() {
        // The two trees from the Zhang-Shasha paper: distance 2.
        let a = t("f", vec![t("d", vec![l("a"), t("c", vec![l("b")])]), l("e")]);
        let b = t("f", vec![t("c", vec![t("d", vec![l("a"), l("b")])]), l("e")]);
        assert_eq!(tree_edit_distance(&a, &b, &EditCosts::<u32>::default()).unwrap(), 2);
        assert_eq!(tree_edit_distance(&b, &a, &EditCosts::<u32>::default()).unwrap(), 2);
    }

    #[test]
    fn generic_scalars_agree() {
        let a = t("r", vec![l("x"), l("y"), t("z", vec![l("w")])]);
        let b = t("r", vec![l("y"), t("q", vec![l("w"), l("v")])]);
        let u = tree_edit_distance(&a, &b, &EditCosts::<u32>::default()).unwrap();
        let f = tree_edit_distance(&a, &b, &EditCosts::<f64>::default()).unwrap();
        let r = tree_edit_distance(&a, &b, &EditCosts::<Rational>::default()).unwrap();
        assert_eq!(f, u as f64);
        assert_eq!(r, Rational::from_integer(u as i64));
    }

    #[test]
    fn weighted_costs() {
        let costs = EditCosts { insert: 1.0, delete: 1.0, relabel: 5.0 };
        // Relabel is dearer than delete + insert.
        assert_eq!(tree_edit_distance(&l("x"), &l("y"), &costs).unwrap(), 2.0);
        assert!(EditCosts { insert: -1.0, delete: 1.0, relabel: 1.0 }.validate().is_err());
    }

    #[test]
    fn tedn_boundaries() {
        let gold = t("score-partwise", vec![t("part", vec![t("measure", vec![t("note", vec![l("duration=1")])])])]);
        assert_eq!(tedn(Some(&gold), &gold, 6000).unwrap().score, 0.0);
        assert_eq!(tedn(None, &gold, 6000).unwrap().score, 1.0);
        assert_eq!(tedn(Some(&l("score-partwise")), &gold, 6000).unwrap().score, 1.0);
        assert!(matches!(tedn(None, &gold, 1), Err(TedError::InvalidLimit(1))));
    }

    #[test]
    fn tedn_truncates_below_limit() {
        let gold = t("r", (0..10).map(|i| l(&format!("c{i}"))).collect());
        let out = tedn(Some(&gold), &gold, 5).unwrap();
        assert!(out.truncated);
        assert_eq!(out.gold_nodes, 11);
        assert_eq!(out.score, 0.0);
    }

    #[test]
    fn too_large() {
        let big = t("r", (0..20).map(|i| l(&format!("c{i}"))).collect());
        assert!(matches!(
            tree_edit_distance_capped(&big, &big, &EditCosts::<u32>::default(), 10),
            Err(TedError::TreeTooLarge { nodes: 21, limit: 10 })
        ));
    }
}
