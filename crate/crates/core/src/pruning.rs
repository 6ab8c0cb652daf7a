//! Cost-complexity (weakest-link) pruning.
//!
//! Errors are misclassification rates on the data the tree is pruned
//! against. The link strength of an internal node `t` is
//! `g(t) = (C(t) - C(T_t)) / (|leaves(T_t)| - 1)`, where `C(t)` is the error
//! of `t` collapsed to a leaf and `C(T_t)` the error of its subtree. All
//! comparisons are made on exact integer ratios.

use std::cmp::Ordering;

use crate::cart::{build_tree_on, ClassCounts, DecisionTree, NodeKind, TreeConfig};
use crate::corpus::stratified_folds;
use crate::dataset::{LabeledDataset, TrainingData};
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct PruneEntry {
    pub alpha: f64,
    pub tree: DecisionTree,
}

/// Nested trees with strictly increasing complexity parameters. Entry 0 has
/// alpha 0; the last entry is the root alone.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedSequence {
    pub entries: Vec<PruneEntry>,
}

impl PrunedSequence {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the tree that is optimal at `alpha`: the last entry whose
    /// alpha does not exceed it.
    pub fn index_for(&self, alpha: f64) -> usize {
        self.entries
            .iter()
            .rposition(|e| e.alpha <= alpha)
            .unwrap_or(0)
    }
}

/// Class counts at every node when `indices` are routed from the root.
pub fn routed_counts<D: TrainingData + ?Sized>(tree: &DecisionTree, data: &D, indices: &[usize]) -> Vec<ClassCounts> {
    let mut counts = vec![ClassCounts::default(); tree.nodes().len()];
    for &i in indices {
        let label = data.label(i);
        let mut id = 0;
        loop {
            counts[id].add(label);
            match tree.nodes()[id].kind {
                NodeKind::Internal { feature, left, right } => {
                    id = if data.bit(i, feature) { right } else { left };
                }
                NodeKind::Leaf { .. } => break,
            }
        }
    }
    counts
}

/// Fraction of `indices` misclassified by the subtree rooted at `node`
/// (applied to every listed sample).
pub fn subtree_error<D: TrainingData + ?Sized>(
    tree: &DecisionTree,
    node: usize,
    data: &D,
    indices: &[usize],
) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let wrong = indices
        .iter()
        .filter(|&&i| {
            let mut id = node;
            loop {
                match tree.nodes()[id].kind {
                    NodeKind::Internal { feature, left, right } => {
                        id = if data.bit(i, feature) { right } else { left };
                    }
                    NodeKind::Leaf { prediction } => return prediction != data.label(i),
                }
            }
        })
        .count();
    wrong as f64 / indices.len() as f64
}

/// Error rate of the whole tree on every sample of `data`.
pub fn tree_error<D: TrainingData + ?Sized>(tree: &DecisionTree, data: &D) -> f64 {
    let all: Vec<usize> = (0..data.n_samples()).collect();
    subtree_error(tree, 0, data, &all)
}

/// Exact `num / den` with `den > 0`.
#[derive(Debug, Clone, Copy)]
struct Ratio {
    num: i128,
    den: i128,
}

impl Ratio {
    const ZERO: Ratio = Ratio { num: 0, den: 1 };

    fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Ratio {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ratio {}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

/// Per-node leaf count and error count of the current pruned tree.
struct Working<'a> {
    tree: &'a DecisionTree,
    counts: Vec<ClassCounts>,
    n: usize,
    collapsed: Vec<bool>,
}

impl Working<'_> {
    /// (leaves, errors) for every node, treating collapsed nodes as leaves.
    fn subtree_stats(&self) -> Vec<(usize, usize)> {
        let nodes = self.tree.nodes();
        let mut stats = vec![(1, 0); nodes.len()];
        for id in (0..nodes.len()).rev() {
            stats[id] = match nodes[id].kind {
                NodeKind::Internal { left, right, .. } if !self.collapsed[id] => {
                    (stats[left].0 + stats[right].0, stats[left].1 + stats[right].1)
                }
                _ => (1, self.counts[id].errors()),
            };
        }
        stats
    }

    /// Internal nodes still present in the pruned tree, with their g.
    fn links(&self) -> Vec<(usize, Ratio)> {
        let stats = self.subtree_stats();
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            if self.collapsed[id] {
                continue;
            }
            if let NodeKind::Internal { left, right, .. } = self.tree.nodes()[id].kind {
                let (leaves, errors) = stats[id];
                out.push((
                    id,
                    Ratio {
                        num: self.counts[id].errors() as i128 - errors as i128,
                        den: (self.n * (leaves - 1)) as i128,
                    },
                ));
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }

    fn snapshot(&self) -> DecisionTree {
        let ids: Vec<usize> = (0..self.collapsed.len()).filter(|&i| self.collapsed[i]).collect();
        self.tree.collapse(&ids)
    }
}

/// `g(t)` for internal node `node`, with errors measured on all of `data`.
pub fn weakest_link_g<D: TrainingData + ?Sized>(tree: &DecisionTree, node: usize, data: &D) -> Result<f64> {
    if tree.nodes().get(node).is_none_or(|n| n.is_leaf()) {
        return Err(Error::Data(format!("node {node} is not an internal node")));
    }
    let indices: Vec<usize> = (0..data.n_samples()).collect();
    let work = Working {
        tree,
        counts: routed_counts(tree, data, &indices),
        n: indices.len().max(1),
        collapsed: vec![false; tree.nodes().len()],
    };
    let links = work.links();
    Ok(links.iter().find(|(id, _)| *id == node).map(|(_, g)| g.value()).unwrap_or(0.0))
}

/// Weakest-link sequence of `tree` against every sample of `data`.
pub fn prune_sequence<D: TrainingData + ?Sized>(tree: &DecisionTree, data: &D) -> PrunedSequence {
    let indices: Vec<usize> = (0..data.n_samples()).collect();
    prune_sequence_on(tree, data, &indices)
}

/// Weakest-link sequence against the multiset `indices`. Every node whose
/// g equals the current minimum is collapsed in the same step, so the
/// recorded alphas are strictly increasing. The first entry is the smallest
/// subtree with the full tree's error (links with g = 0 already removed).
pub fn prune_sequence_on<D: TrainingData + ?Sized>(tree: &DecisionTree, data: &D, indices: &[usize]) -> PrunedSequence {
    let mut work = Working {
        tree,
        counts: routed_counts(tree, data, indices),
        n: indices.len().max(1),
        collapsed: vec![false; tree.nodes().len()],
    };
    let mut entries = Vec::new();
    let mut alpha = Ratio::ZERO;
    loop {
        loop {
            let weak: Vec<usize> = work
                .links()
                .into_iter()
                .filter(|(_, g)| *g <= alpha)
                .map(|(id, _)| id)
                .collect();
            if weak.is_empty() {
                break;
            }
            for id in weak {
                work.collapsed[id] = true;
            }
        }
        entries.push(PruneEntry {
            alpha: alpha.value(),
            tree: work.snapshot(),
        });
        match work.links().into_iter().map(|(_, g)| g).min() {
            Some(next) => alpha = next,
            None => break,
        }
    }
    PrunedSequence { entries }
}

/// Index of the entry with the best accuracy on `holdout`; ties go to the
/// later (smaller) tree.
pub fn select_on_holdout<D: TrainingData + ?Sized>(sequence: &PrunedSequence, data: &D, holdout: &[usize]) -> usize {
    let mut best = (0, usize::MAX);
    for (k, entry) in sequence.entries.iter().enumerate() {
        let wrong = holdout
            .iter()
            .filter(|&&i| entry.tree.predict_row(data, i) != data.label(i))
            .count();
        if wrong <= best.1 {
            best = (k, wrong);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Position of the chosen tree in the sequence.
    pub index: usize,
    pub alpha: f64,
    pub tree: DecisionTree,
    /// Mean held-out accuracy of each sequence entry across folds.
    pub cv_accuracy: Vec<f64>,
}

/// Chooses a member of `sequence` by k-fold cross-validation. In each fold a
/// tree is grown with `config` on the training part and pruned; entry `k` of
/// the full-data sequence is represented by the fold tree optimal at the
/// geometric midpoint of its alpha interval. The highest mean held-out
/// accuracy wins, ties going to the larger alpha.
pub fn select_by_validation(
    sequence: &PrunedSequence,
    folds: usize,
    dataset: &LabeledDataset,
    seed: u64,
    config: &TreeConfig,
) -> Result<Selection> {
    if sequence.is_empty() {
        return Err(Error::Data("empty pruning sequence".into()));
    }
    if sequence.len() == 1 {
        let entry = &sequence.entries[0];
        return Ok(Selection {
            index: 0,
            alpha: entry.alpha,
            tree: entry.tree.clone(),
            cv_accuracy: vec![f64::NAN],
        });
    }
    let fold_sets = stratified_folds(dataset, folds, seed)?;
    let alphas: Vec<f64> = sequence.entries.iter().map(|e| e.alpha).collect();
    let probes: Vec<f64> = (0..alphas.len())
        .map(|k| match alphas.get(k + 1) {
            Some(&next) => (alphas[k] * next).sqrt(),
            None => f64::INFINITY,
        })
        .collect();

    let per_fold: Vec<Vec<f64>> = par::try_map_slice(&fold_sets, |held_out| -> Result<Vec<f64>> {
        let mut in_fold = vec![false; dataset.len()];
        for &i in held_out {
            in_fold[i] = true;
        }
        let train: Vec<usize> = (0..dataset.len()).filter(|&i| !in_fold[i]).collect();
        let tree = build_tree_on(dataset, &train, config, None)?;
        let fold_seq = prune_sequence_on(&tree, dataset, &train);
        Ok(probes
            .iter()
            .map(|&beta| {
                let t = &fold_seq.entries[fold_seq.index_for(beta)].tree;
                let right = held_out
                    .iter()
                    .filter(|&&i| t.predict_row(dataset, i) == dataset.label(i))
                    .count();
                right as f64 / held_out.len() as f64
            })
            .collect())
    })?;

    let cv_accuracy: Vec<f64> = (0..probes.len())
        .map(|k| per_fold.iter().map(|f| f[k]).sum::<f64>() / per_fold.len() as f64)
        .collect();
    let mut index = 0;
    for (k, &acc) in cv_accuracy.iter().enumerate() {
        if acc >= cv_accuracy[index] - 1e-12 {
            index = k;
        }
    }
    let entry = &sequence.entries[index];
    Ok(Selection {
        index,
        alpha: entry.alpha,
        tree: entry.tree.clone(),
        cv_accuracy,
    })
}
