//! Static vulnerability features for NFT smart contracts and a from-scratch
//! decision-tree / random-forest classifier over them.
//!
//! Pipeline: [`corpus`] loads and normalizes Solidity files, [`scan`] finds
//! functions, [`rules`] and [`features`] turn each contract into one boolean
//! vector per vulnerability [`Family`], and [`cart`], [`pruning`],
//! [`forest`] and [`tuning`] learn from labelled vectors. [`report`] ties
//! models back to contracts. [`synth`] generates labelled test corpora.
//!
//! With the default `parallel` feature, per-contract extraction, forest
//! trees, grid cells and validation folds run on the rayon pool. Results are
//! identical with the feature disabled.

pub mod cart;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod family;
pub mod features;
pub mod forest;
pub mod par;
pub mod pruning;
pub mod report;
pub mod rng;
pub mod rules;
pub mod scan;
pub mod synth;
pub mod tuning;

pub use cart::{build_tree, ClassCounts, DecisionTree, TreeConfig};
pub use corpus::{load_corpus, ContractSource, LabelTable};
pub use dataset::{FeatureVector, Label, LabeledDataset, Sample};
pub use error::{Error, Result};
pub use family::Family;
pub use features::{build_dataset, extract_features};
pub use forest::{train_forest, ForestConfig, ForestModel};
pub use rules::{builtin_rules, RuleSet};
pub use tuning::{grid_search, GridSearchResult, GridSpec};
