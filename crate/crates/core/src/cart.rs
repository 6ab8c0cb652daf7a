//! Binary CART over boolean features.
//!
//! Split scores are compared exactly on integer counts, so the chosen split
//! never depends on floating-point rounding or on sample order.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureVector, Label, TrainingData};
use crate::error::{Error, Result};
use crate::family::Family;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassCounts {
    pub n0: usize,
    pub n1: usize,
}

impl ClassCounts {
    pub fn new(n0: usize, n1: usize) -> Self {
        ClassCounts { n0, n1 }
    }

    pub fn total(self) -> usize {
        self.n0 + self.n1
    }

    pub fn add(&mut self, label: Label) {
        if label == 0 {
            self.n0 += 1;
        } else {
            self.n1 += 1;
        }
    }

    /// Majority class; ties go to 0.
    pub fn majority(self) -> Label {
        Label::from(self.n1 > self.n0)
    }

    /// Samples misclassified by predicting the majority class.
    pub fn errors(self) -> usize {
        self.n0.min(self.n1)
    }

    pub fn is_pure(self) -> bool {
        self.n0 == 0 || self.n1 == 0
    }

    fn count<D: TrainingData + ?Sized>(data: &D, indices: &[usize]) -> Self {
        let mut c = ClassCounts::default();
        for &i in indices {
            c.add(data.label(i));
        }
        c
    }
}

impl std::ops::Add for ClassCounts {
    type Output = ClassCounts;

    fn add(self, rhs: Self) -> Self {
        ClassCounts::new(self.n0 + rhs.n0, self.n1 + rhs.n1)
    }
}

/// `1 - p0^2 - p1^2`, evaluated as `2 * n0 * n1 / n^2` so that swapping the
/// classes gives the identical value.
pub fn gini(counts: ClassCounts) -> Result<f64> {
    let n = counts.total();
    if n == 0 {
        return Err(Error::EmptyNode);
    }
    let (n0, n1, n) = (counts.n0 as f64, counts.n1 as f64, n as f64);
    Ok(2.0 * n0 * n1 / (n * n))
}

fn gini_or_zero(counts: ClassCounts) -> f64 {
    gini(counts).unwrap_or(0.0)
}

/// Class counts on the false and true side of `feature`.
pub fn split_counts<D: TrainingData + ?Sized>(
    data: &D,
    indices: &[usize],
    feature: usize,
) -> (ClassCounts, ClassCounts) {
    let mut sides = [ClassCounts::default(); 2];
    for &i in indices {
        sides[usize::from(data.bit(i, feature))].add(data.label(i));
    }
    (sides[0], sides[1])
}

/// Size-weighted impurity of the two sides of `feature`; an empty side
/// contributes nothing.
pub fn weighted_gini<D: TrainingData + ?Sized>(data: &D, indices: &[usize], feature: usize) -> f64 {
    let (l, r) = split_counts(data, indices, feature);
    weighted_gini_of(l, r)
}

pub fn weighted_gini_of(left: ClassCounts, right: ClassCounts) -> f64 {
    let n = (left.total() + right.total()) as f64;
    if n == 0.0 {
        return 0.0;
    }
    left.total() as f64 / n * gini_or_zero(left) + right.total() as f64 / n * gini_or_zero(right)
}

/// Exact rational proportional to a weighted impurity: `n * gini / 2` for a
/// node is `n0 * n1 / n`, and a split sums that over its sides.
#[derive(Debug, Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn node(c: ClassCounts) -> Self {
        Score {
            num: (c.n0 * c.n1) as u128,
            den: c.total() as u128,
        }
    }

    fn split(l: ClassCounts, r: ClassCounts) -> Self {
        let (nl, nr) = (l.total() as u128, r.total() as u128);
        Score {
            num: (l.n0 * l.n1) as u128 * nr + (r.n0 * r.n1) as u128 * nl,
            den: nl * nr,
        }
    }
}

impl PartialEq for Score {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

/// Lowest score wins; equal scores go to the earliest candidate. Only
/// candidates strictly below `parent` qualify.
fn pick_min<S: PartialOrd + Copy>(candidates: impl IntoIterator<Item = (usize, S)>, parent: S) -> Option<(usize, S)> {
    let mut best: Option<(usize, S)> = None;
    for (feature, score) in candidates {
        if score.partial_cmp(&parent) != Some(Ordering::Less) {
            continue;
        }
        match best {
            Some((bf, bs)) if score > bs || (score == bs && feature > bf) => {}
            Some((bf, bs)) if score == bs && feature == bf => {}
            _ => best = Some((feature, score)),
        }
    }
    best
}

/// Selects among precomputed impurities: minimum value, lowest index on
/// ties, and only values strictly below `parent_impurity`.
pub fn select_split(impurities: &[(usize, f64)], parent_impurity: f64) -> Option<(usize, f64)> {
    pick_min(impurities.iter().copied(), parent_impurity)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub impurity: f64,
    pub left: ClassCounts,
    pub right: ClassCounts,
}

/// Best allowed feature for the samples in `indices`, or `None` when no
/// feature separates them with a strict impurity decrease.
pub fn best_split<D: TrainingData + ?Sized>(data: &D, indices: &[usize], allowed: &[usize]) -> Option<Split> {
    let parent = ClassCounts::count(data, indices);
    if parent.total() < 2 {
        return None;
    }
    let mut sorted: Vec<usize> = allowed.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let sides: Vec<(usize, ClassCounts, ClassCounts)> = sorted
        .into_iter()
        .map(|f| {
            let (l, r) = split_counts(data, indices, f);
            (f, l, r)
        })
        .filter(|(_, l, r)| l.total() > 0 && r.total() > 0)
        .collect();
    let (feature, _) = pick_min(
        sides.iter().map(|&(f, l, r)| (f, Score::split(l, r))),
        Score::node(parent),
    )?;
    let &(_, left, right) = sides.iter().find(|(f, _, _)| *f == feature)?;
    Some(Split {
        feature,
        impurity: weighted_gini_of(left, right),
        left,
        right,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Maximum depth, root at depth 1.
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Fixed feature subset used at every split, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_features: Option<Vec<usize>>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: usize::MAX,
            min_samples_split: 2,
            min_samples_leaf: 1,
            allowed_features: None,
        }
    }
}

impl TreeConfig {
    pub fn with_depth(max_depth: usize) -> Self {
        TreeConfig {
            max_depth,
            ..TreeConfig::default()
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Config("min_samples_split must be at least 2".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        if let Some(allowed) = &self.allowed_features {
            if allowed.is_empty() {
                return Err(Error::Config("allowed_features is empty".into()));
            }
            if let Some(&bad) = allowed.iter().find(|&&f| f >= n_features) {
                return Err(Error::Config(format!(
                    "allowed feature {bad} is out of range for {n_features} features"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Leaf { prediction: Label },
    /// `left` holds the samples whose bit is false.
    Internal { feature: usize, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub counts: ClassCounts,
    pub gini: f64,
    pub kind: NodeKind,
}

impl Node {
    fn leaf(counts: ClassCounts) -> Self {
        Node {
            counts,
            gini: gini_or_zero(counts),
            kind: NodeKind::Leaf {
                prediction: counts.majority(),
            },
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

/// Tree stored as a preorder arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    n_features: usize,
    nodes: Vec<Node>,
}

impl DecisionTree {
    /// Builds from a preorder arena, checking child links and feature range.
    pub fn from_nodes(n_features: usize, nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Model("tree has no nodes".into()));
        }
        let mut seen = vec![false; nodes.len()];
        seen[0] = true;
        for (id, node) in nodes.iter().enumerate() {
            if let NodeKind::Internal { feature, left, right } = node.kind {
                if feature >= n_features {
                    return Err(Error::Model(format!(
                        "node {id} splits on feature {feature}, tree has {n_features}"
                    )));
                }
                for child in [left, right] {
                    if child <= id || child >= nodes.len() || seen[child] {
                        return Err(Error::Model(format!("node {id} has an invalid child link {child}")));
                    }
                    seen[child] = true;
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Model("tree has unreachable nodes".into()));
        }
        Ok(DecisionTree { n_features, nodes })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Number of levels; a single leaf has depth 1.
    pub fn depth(&self) -> usize {
        self.node_depths().into_iter().max().unwrap_or(1)
    }

    /// Depth of each node, root = 1.
    pub fn node_depths(&self) -> Vec<usize> {
        let mut depth = vec![1; self.nodes.len()];
        for id in 0..self.nodes.len() {
            if let NodeKind::Internal { left, right, .. } = self.nodes[id].kind {
                depth[left] = depth[id] + 1;
                depth[right] = depth[id] + 1;
            }
        }
        depth
    }

    /// Leaf reached by `bits`.
    pub fn leaf_index(&self, bits: &[bool]) -> Result<usize> {
        if bits.len() != self.n_features {
            return Err(Error::Arity {
                expected: self.n_features,
                got: bits.len(),
            });
        }
        let mut id = 0;
        while let NodeKind::Internal { feature, left, right } = self.nodes[id].kind {
            id = if bits[feature] { right } else { left };
        }
        Ok(id)
    }

    pub fn predict_bits(&self, bits: &[bool]) -> Result<Label> {
        let leaf = self.leaf_index(bits)?;
        match self.nodes[leaf].kind {
            NodeKind::Leaf { prediction } => Ok(prediction),
            NodeKind::Internal { .. } => unreachable!(),
        }
    }

    pub fn predict(&self, fv: &FeatureVector) -> Result<Label> {
        self.predict_bits(fv.bits())
    }

    pub fn predict_counts(&self, fv: &FeatureVector) -> Result<ClassCounts> {
        Ok(self.nodes[self.leaf_index(fv.bits())?].counts)
    }

    /// Routes row `sample` of `data` to a leaf.
    pub(crate) fn leaf_of<D: TrainingData + ?Sized>(&self, data: &D, sample: usize) -> usize {
        let mut id = 0;
        while let NodeKind::Internal { feature, left, right } = self.nodes[id].kind {
            id = if data.bit(sample, feature) { right } else { left };
        }
        id
    }

    pub fn predict_row<D: TrainingData + ?Sized>(&self, data: &D, sample: usize) -> Label {
        match self.nodes[self.leaf_of(data, sample)].kind {
            NodeKind::Leaf { prediction } => prediction,
            NodeKind::Internal { .. } => unreachable!(),
        }
    }

    /// Node ids in the subtree rooted at `node` (preorder).
    pub fn subtree_ids(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(id) = stack.pop() {
            out.push(id);
            if let NodeKind::Internal { left, right, .. } = self.nodes[id].kind {
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }

    /// Copy with each listed node turned into a leaf predicting its majority
    /// class. Ids are renumbered.
    pub fn collapse(&self, nodes: &[usize]) -> DecisionTree {
        let mut collapsed = vec![false; self.nodes.len()];
        for &n in nodes {
            collapsed[n] = true;
        }
        let mut out = Vec::with_capacity(self.nodes.len());
        self.copy_into(0, &collapsed, &mut out);
        DecisionTree {
            n_features: self.n_features,
            nodes: out,
        }
    }

    fn copy_into(&self, id: usize, collapsed: &[bool], out: &mut Vec<Node>) -> usize {
        let node = &self.nodes[id];
        let new_id = out.len();
        match node.kind {
            NodeKind::Internal { feature, left, right } if !collapsed[id] => {
                out.push(node.clone());
                let l = self.copy_into(left, collapsed, out);
                let r = self.copy_into(right, collapsed, out);
                out[new_id].kind = NodeKind::Internal { feature, left: l, right: r };
            }
            _ => out.push(Node::leaf(node.counts)),
        }
        new_id
    }

    /// True if `self` can be obtained from `other` by collapsing internal
    /// nodes.
    pub fn is_pruned_subtree_of(&self, other: &DecisionTree) -> bool {
        fn walk(a: &DecisionTree, ai: usize, b: &DecisionTree, bi: usize) -> bool {
            let (na, nb) = (&a.nodes[ai], &b.nodes[bi]);
            if na.counts != nb.counts {
                return false;
            }
            match (na.kind, nb.kind) {
                (NodeKind::Leaf { .. }, _) => true,
                (
                    NodeKind::Internal { feature: fa, left: la, right: ra },
                    NodeKind::Internal { feature: fb, left: lb, right: rb },
                ) => fa == fb && walk(a, la, b, lb) && walk(a, ra, b, rb),
                (NodeKind::Internal { .. }, NodeKind::Leaf { .. }) => false,
            }
        }
        self.n_features == other.n_features && walk(self, 0, other, 0)
    }
}

/// Grows a tree on every sample of `data`.
pub fn build_tree<D: TrainingData + ?Sized>(data: &D, config: &TreeConfig) -> Result<DecisionTree> {
    let indices: Vec<usize> = (0..data.n_samples()).collect();
    build_tree_on(data, &indices, config, None)
}

/// Grows a tree on the multiset `indices` of `data`. When `sampler` is
/// given it is called once per splittable node (preorder) and returns the
/// features that node may split on.
pub fn build_tree_on<D: TrainingData + ?Sized>(
    data: &D,
    indices: &[usize],
    config: &TreeConfig,
    sampler: Option<&mut dyn FnMut() -> Vec<usize>>,
) -> Result<DecisionTree> {
    config.validate(data.n_features())?;
    if indices.is_empty() {
        return Err(Error::Data("cannot grow a tree on zero samples".into()));
    }
    let all: Vec<usize> = config
        .allowed_features
        .clone()
        .unwrap_or_else(|| (0..data.n_features()).collect());
    let mut builder = Builder {
        data,
        config,
        all,
        sampler,
        nodes: Vec::new(),
    };
    builder.grow(indices.to_vec(), 1);
    Ok(DecisionTree {
        n_features: data.n_features(),
        nodes: builder.nodes,
    })
}

struct Builder<'a, 's, D: TrainingData + ?Sized> {
    data: &'a D,
    config: &'a TreeConfig,
    all: Vec<usize>,
    sampler: Option<&'s mut dyn FnMut() -> Vec<usize>>,
    nodes: Vec<Node>,
}

impl<D: TrainingData + ?Sized> Builder<'_, '_, D> {
    fn grow(&mut self, indices: Vec<usize>, depth: usize) -> usize {
        let counts = ClassCounts::count(self.data, &indices);
        let id = self.nodes.len();
        self.nodes.push(Node::leaf(counts));
        if counts.is_pure() || depth >= self.config.max_depth || counts.total() < self.config.min_samples_split {
            return id;
        }
        let allowed = match self.sampler.as_mut() {
            Some(sample) => sample(),
            None => self.all.clone(),
        };
        let Some(split) = best_split(self.data, &indices, &allowed) else {
            return id;
        };
        let min_leaf = self.config.min_samples_leaf;
        if split.left.total() < min_leaf || split.right.total() < min_leaf {
            return id;
        }
        let (right_idx, left_idx): (Vec<usize>, Vec<usize>) =
            indices.into_iter().partition(|&i| self.data.bit(i, split.feature));
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[id].kind = NodeKind::Internal {
            feature: split.feature,
            left,
            right,
        };
        id
    }
}

fn format_gini(g: f64) -> String {
    let r = (g * 1000.0).round() / 1000.0;
    if r.fract() == 0.0 {
        format!("{r:.1}")
    } else {
        format!("{r}")
    }
}

/// Graphviz rendering with the family's feature codes as split labels.
pub fn export_dot(tree: &DecisionTree, family: Family) -> String {
    export_dot_with_names(tree, &family.codes())
}

/// Graphviz rendering with explicit feature names.
pub fn export_dot_with_names(tree: &DecisionTree, names: &[String]) -> String {
    let mut out = String::from(
        "digraph Tree {\nnode [shape=box, style=\"rounded\", fontname=\"helvetica\"] ;\nedge [fontname=\"helvetica\"] ;\n",
    );
    for (id, node) in tree.nodes.iter().enumerate() {
        let stats = format!(
            "gini = {}\\nsamples = {}\\nvalue = [{}, {}]",
            format_gini(node.gini),
            node.counts.total(),
            node.counts.n0,
            node.counts.n1
        );
        let label = match node.kind {
            NodeKind::Internal { feature, .. } => {
                let name = names.get(feature).cloned().unwrap_or_else(|| format!("X{feature}"));
                format!("{name} <= 0.5\\n{stats}")
            }
            NodeKind::Leaf { prediction } => format!("{stats}\\nclass = {prediction}"),
        };
        let _ = writeln!(out, "{id} [label=\"{label}\"] ;");
    }
    for (id, node) in tree.nodes.iter().enumerate() {
        if let NodeKind::Internal { left, right, .. } = node.kind {
            let _ = writeln!(out, "{id} -> {left} [label=\"False\"] ;");
            let _ = writeln!(out, "{id} -> {right} [label=\"True\"] ;");
        }
    }
    out.push_str("}\n");
    out
}
