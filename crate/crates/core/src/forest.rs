//! Bagged random forest with per-split feature subsampling, out-of-bag
//! scoring and a JSON model file.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cart::{build_tree_on, ClassCounts, DecisionTree, Node, NodeKind, TreeConfig};
use crate::dataset::{FeatureVector, Label, LabeledDataset, TrainingData};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::pruning::{prune_sequence_on, select_by_validation, select_on_holdout};
use crate::{par, rng};

pub const MODEL_FORMAT: &str = "nftforest-model";
pub const MODEL_VERSION: u32 = 1;

/// Granularity of random feature selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// A fresh subset at every split.
    #[default]
    PerSplit,
    /// One subset per tree.
    PerTree,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_features: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
    pub prune_trees: bool,
    #[serde(default)]
    pub feature_mode: FeatureMode,
}

impl ForestConfig {
    /// Configuration with the library defaults for everything but the three
    /// tuned parameters.
    pub fn new(max_features: usize, n_trees: usize, max_depth: usize) -> Self {
        ForestConfig {
            n_trees,
            max_features,
            max_depth,
            min_samples_split: 2,
            min_samples_leaf: 2,
            bootstrap: true,
            seed: 0,
            prune_trees: false,
            feature_mode: FeatureMode::PerSplit,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            allowed_features: None,
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.max_features == 0 || self.max_features > n_features {
            return Err(Error::Config(format!(
                "max_features must lie in 1..={n_features}, got {}",
                self.max_features
            )));
        }
        self.tree_config().validate(n_features)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    family: Family,
    config: ForestConfig,
    n_samples: usize,
    trees: Vec<DecisionTree>,
    bags: Vec<Vec<usize>>,
}

impl ForestModel {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    /// Size of the training set the bags index into (sorted by id).
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Bootstrap multiset of each tree, as sorted indices into the training
    /// set ordered by id.
    pub fn bags(&self) -> &[Vec<usize>] {
        &self.bags
    }

    /// Wraps one tree grown on all `n_samples` training samples as a
    /// single-tree model (no bootstrap, every feature available).
    pub fn from_tree(family: Family, tree: DecisionTree, n_samples: usize, config: &TreeConfig, seed: u64) -> Result<Self> {
        if tree.n_features() != family.arity() {
            return Err(Error::Arity {
                expected: family.arity(),
                got: tree.n_features(),
            });
        }
        let forest_config = ForestConfig {
            n_trees: 1,
            max_features: family.arity(),
            max_depth: config.max_depth,
            min_samples_split: config.min_samples_split,
            min_samples_leaf: config.min_samples_leaf,
            bootstrap: false,
            seed,
            prune_trees: true,
            feature_mode: FeatureMode::PerSplit,
        };
        forest_config.validate(family.arity())?;
        Ok(ForestModel {
            family,
            config: forest_config,
            n_samples,
            trees: vec![tree],
            bags: vec![(0..n_samples).collect()],
        })
    }

    /// Training indices that tree `t` never saw.
    pub fn out_of_bag(&self, t: usize) -> Vec<usize> {
        let mut in_bag = vec![false; self.n_samples];
        for &i in &self.bags[t] {
            in_bag[i] = true;
        }
        (0..self.n_samples).filter(|&i| !in_bag[i]).collect()
    }

    fn check_arity(&self, fv: &FeatureVector) -> Result<()> {
        if fv.bits().len() != self.family.arity() {
            return Err(Error::Arity {
                expected: self.family.arity(),
                got: fv.bits().len(),
            });
        }
        Ok(())
    }
}

/// `n` uniform draws with replacement from `0..n`, sorted.
pub fn bootstrap_sample(n: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let mut bag: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    bag.sort_unstable();
    bag
}

fn feature_subset(rng: &mut rng::Rng, n_features: usize, k: usize) -> Vec<usize> {
    let mut subset = rand::seq::index::sample(rng, n_features, k).into_vec();
    subset.sort_unstable();
    subset
}

/// Trains a forest. Samples are put in id order first, so the model depends
/// only on the set of samples and the seed. Tree `i` draws from its own
/// stream `(seed, i)`: bootstrap first, then feature subsets in preorder.
pub fn train_forest(dataset: &LabeledDataset, config: &ForestConfig) -> Result<ForestModel> {
    let family = dataset.family();
    let arity = family.arity();
    config.validate(arity)?;
    if dataset.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    let data = dataset.sorted_by_id();
    let n = data.len();
    let tree_ids: Vec<usize> = (0..config.n_trees).collect();

    let grown = par::try_map_slice(&tree_ids, |&t| -> Result<(DecisionTree, Vec<usize>)> {
        let mut rng = rng::stream(config.seed, t as u64);
        let bag = if config.bootstrap {
            bootstrap_sample(n, &mut rng)
        } else {
            (0..n).collect()
        };
        let mut tree_config = config.tree_config();
        let tree = match config.feature_mode {
            FeatureMode::PerTree => {
                tree_config.allowed_features = Some(feature_subset(&mut rng, arity, config.max_features));
                build_tree_on(&data, &bag, &tree_config, None)?
            }
            FeatureMode::PerSplit => {
                let k = config.max_features;
                let mut sampler = || feature_subset(&mut rng, arity, k);
                build_tree_on(&data, &bag, &tree_config, Some(&mut sampler))?
            }
        };
        let tree = if config.prune_trees {
            prune_tree(tree, &data, &bag, config, t)?
        } else {
            tree
        };
        Ok((tree, bag))
    })?;

    let (trees, bags) = grown.into_iter().unzip();
    Ok(ForestModel {
        family,
        config: config.clone(),
        n_samples: n,
        trees,
        bags,
    })
}

/// Picks a member of the tree's pruning sequence: on its out-of-bag samples
/// when bootstrapping, by cross-validation otherwise.
fn prune_tree(
    tree: DecisionTree,
    data: &LabeledDataset,
    bag: &[usize],
    config: &ForestConfig,
    t: usize,
) -> Result<DecisionTree> {
    let sequence = prune_sequence_on(&tree, data, bag);
    if config.bootstrap {
        let mut in_bag = vec![false; data.len()];
        for &i in bag {
            in_bag[i] = true;
        }
        let oob: Vec<usize> = (0..data.len()).filter(|&i| !in_bag[i]).collect();
        if oob.is_empty() {
            return Ok(tree);
        }
        let k = select_on_holdout(&sequence, data, &oob);
        Ok(sequence.entries[k].tree.clone())
    } else {
        let seed = config.seed.wrapping_add(t as u64);
        Ok(select_by_validation(&sequence, 5, data, seed, &config.tree_config())?.tree)
    }
}

/// Votes `(for 0, for 1)` over all trees.
pub fn predict_votes(model: &ForestModel, fv: &FeatureVector) -> Result<(usize, usize)> {
    model.check_arity(fv)?;
    let mut votes = (0, 0);
    for tree in &model.trees {
        if tree.predict_bits(fv.bits())? == 0 {
            votes.0 += 1;
        } else {
            votes.1 += 1;
        }
    }
    Ok(votes)
}

/// Majority vote; a tie predicts 0.
pub fn predict_forest(model: &ForestModel, fv: &FeatureVector) -> Result<Label> {
    let (v0, v1) = predict_votes(model, fv)?;
    Ok(Label::from(v1 > v0))
}

/// Accuracy of out-of-bag voting on the training set. Each sample is voted
/// on only by trees whose bag excludes it; samples with no such tree are
/// left out.
pub fn oob_score(model: &ForestModel, dataset: &LabeledDataset) -> Result<f64> {
    if !model.config.bootstrap {
        return Err(Error::OutOfBag("the model was trained without bootstrap".into()));
    }
    if dataset.len() != model.n_samples || dataset.family() != model.family {
        return Err(Error::OutOfBag(format!(
            "dataset ({} samples of {}) is not the training set ({} samples of {})",
            dataset.len(),
            dataset.family(),
            model.n_samples,
            model.family
        )));
    }
    let data = dataset.sorted_by_id();
    let mut votes = vec![(0usize, 0usize); data.len()];
    for (t, tree) in model.trees.iter().enumerate() {
        for i in model.out_of_bag(t) {
            if tree.predict_row(&data, i) == 0 {
                votes[i].0 += 1;
            } else {
                votes[i].1 += 1;
            }
        }
    }
    let (mut scored, mut right) = (0usize, 0usize);
    for (i, &(v0, v1)) in votes.iter().enumerate() {
        if v0 + v1 == 0 {
            continue;
        }
        scored += 1;
        if Label::from(v1 > v0) == data.label(i) {
            right += 1;
        }
    }
    if scored == 0 {
        return Err(Error::OutOfBag("no sample is out of bag for any tree".into()));
    }
    Ok(right as f64 / scored as f64)
}

// ------------------------------------------------------------------ model file

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    counts: [usize; 2],
    gini: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prediction: Option<Label>,
    /// `[false side, true side]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    children: Option<Box<(NodeRecord, NodeRecord)>>,
}

impl NodeRecord {
    fn from_tree(tree: &DecisionTree, id: usize) -> Self {
        let node = &tree.nodes()[id];
        let counts = [node.counts.n0, node.counts.n1];
        match node.kind {
            NodeKind::Leaf { prediction } => NodeRecord {
                counts,
                gini: node.gini,
                feature_index: None,
                prediction: Some(prediction),
                children: None,
            },
            NodeKind::Internal { feature, left, right } => NodeRecord {
                counts,
                gini: node.gini,
                feature_index: Some(feature),
                prediction: None,
                children: Some(Box::new((Self::from_tree(tree, left), Self::from_tree(tree, right)))),
            },
        }
    }

    fn flatten(self, out: &mut Vec<Node>) -> Result<usize> {
        let id = out.len();
        let counts = ClassCounts::new(self.counts[0], self.counts[1]);
        let (kind, children) = match (self.feature_index, self.prediction, self.children) {
            (None, Some(prediction), None) => (NodeKind::Leaf { prediction }, None),
            (Some(feature), None, Some(children)) => (
                NodeKind::Internal {
                    feature,
                    left: 0,
                    right: 0,
                },
                Some(children),
            ),
            _ => {
                return Err(Error::Model(
                    "node must have either prediction or feature_index with two children".into(),
                ))
            }
        };
        out.push(Node {
            counts,
            gini: self.gini,
            kind,
        });
        if let Some(children) = children {
            let (l, r) = *children;
            let (lc, rc) = (ClassCounts::new(l.counts[0], l.counts[1]), ClassCounts::new(r.counts[0], r.counts[1]));
            if lc + rc != counts {
                return Err(Error::Model(format!("node counts {:?} are not the sum of their children", self.counts)));
            }
            let left = l.flatten(out)?;
            let right = r.flatten(out)?;
            if let NodeKind::Internal { feature, .. } = out[id].kind {
                out[id].kind = NodeKind::Internal { feature, left, right };
            }
        }
        Ok(id)
    }
}

#[derive(Serialize, Deserialize)]
struct ConfigRecord {
    #[serde(flatten)]
    forest: ForestConfig,
    generator: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    family: Family,
    config: ConfigRecord,
    n_samples: usize,
    trees: Vec<NodeRecord>,
    bags: Vec<Vec<usize>>,
}

/// Serializes the model to its JSON document (stable field order, exact
/// float round-trip).
pub fn model_to_json(model: &ForestModel) -> String {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        family: model.family,
        config: ConfigRecord {
            forest: model.config.clone(),
            generator: rng::GENERATOR_ID.into(),
        },
        n_samples: model.n_samples,
        trees: model.trees.iter().map(|t| NodeRecord::from_tree(t, 0)).collect(),
        bags: model.bags.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
    text.push('\n');
    text
}

pub fn model_from_json(text: &str) -> Result<ForestModel> {
    #[derive(Deserialize)]
    struct Header {
        format: Option<String>,
        version: Option<u32>,
    }
    let header: Header = serde_json::from_str(text).map_err(|e| Error::Model(format!("malformed model file: {e}")))?;
    if header.format.as_deref() != Some(MODEL_FORMAT) {
        return Err(Error::Model(format!(
            "not a model file (format {:?}, expected {MODEL_FORMAT:?})",
            header.format
        )));
    }
    if header.version != Some(MODEL_VERSION) {
        return Err(Error::Model(format!(
            "unsupported model version {:?}; this build reads version {MODEL_VERSION}",
            header.version
        )));
    }
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Model(format!("malformed model file: {e}")))?;
    if file.config.generator != rng::GENERATOR_ID {
        return Err(Error::Model(format!(
            "model was trained with generator `{}`, this build uses `{}`",
            file.config.generator,
            rng::GENERATOR_ID
        )));
    }
    let config = file.config.forest;
    let arity = file.family.arity();
    config.validate(arity).map_err(|e| Error::Model(e.to_string()))?;
    if file.trees.len() != config.n_trees || file.bags.len() != config.n_trees {
        return Err(Error::Model(format!(
            "config says {} trees, file has {} trees and {} bags",
            config.n_trees,
            file.trees.len(),
            file.bags.len()
        )));
    }
    for bag in &file.bags {
        if bag.len() != file.n_samples || bag.iter().any(|&i| i >= file.n_samples) {
            return Err(Error::Model(format!(
                "bag does not hold {} indices below {}",
                file.n_samples, file.n_samples
            )));
        }
    }
    let trees = file
        .trees
        .into_iter()
        .map(|record| {
            let mut nodes = Vec::new();
            record.flatten(&mut nodes)?;
            DecisionTree::from_nodes(arity, nodes)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel {
        family: file.family,
        config,
        n_samples: file.n_samples,
        trees,
        bags: file.bags,
    })
}

pub fn save_model(model: &ForestModel, path: &Path) -> Result<()> {
    fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ForestModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text).map_err(|e| match e {
        Error::Model(m) => Error::Model(format!("{}: {m}", path.display())),
        other => other,
    })
}
