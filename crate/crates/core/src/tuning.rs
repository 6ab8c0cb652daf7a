//! Exhaustive grid search over (max_features, n_trees, max_depth) with
//! stratified k-fold cross-validation, and per-family presets.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::stratified_folds;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::family::Family;
use crate::forest::{predict_forest, train_forest, ForestConfig};
use crate::par;

pub const SURFACE_HEADER: &str = "max_features,n_trees,max_depth,mean_cv_accuracy,fold_accuracies";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub max_features_values: Vec<usize>,
    pub n_trees_values: Vec<usize>,
    pub max_depth_values: Vec<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub folds: usize,
    pub seed: u64,
}

impl GridSpec {
    pub fn new(max_features_values: Vec<usize>, n_trees_values: Vec<usize>, max_depth_values: Vec<usize>) -> Self {
        GridSpec {
            max_features_values,
            n_trees_values,
            max_depth_values,
            min_samples_split: 2,
            min_samples_leaf: 2,
            folds: 5,
            seed: 0,
        }
    }

    /// max_features 2..=arity, n_trees {25, 50, 55, 75, 100}, max_depth 2..=10.
    pub fn default_for(family: Family) -> Self {
        GridSpec::new(
            (2..=family.arity()).collect(),
            vec![25, 50, 55, 75, 100],
            (2..=10).collect(),
        )
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_folds(mut self, folds: usize) -> Self {
        self.folds = folds;
        self
    }

    pub fn n_cells(&self) -> usize {
        self.max_features_values.len() * self.n_trees_values.len() * self.max_depth_values.len()
    }

    fn axes(&self) -> [(&'static str, Vec<usize>); 3] {
        let sorted = |v: &[usize]| {
            let mut v = v.to_vec();
            v.sort_unstable();
            v
        };
        [
            ("max_features", sorted(&self.max_features_values)),
            ("n_trees", sorted(&self.n_trees_values)),
            ("max_depth", sorted(&self.max_depth_values)),
        ]
    }

    /// Forest configuration of one cell.
    pub fn cell_config(&self, max_features: usize, n_trees: usize, max_depth: usize) -> ForestConfig {
        let mut config = ForestConfig::new(max_features, n_trees, max_depth).with_seed(self.seed);
        config.min_samples_split = self.min_samples_split;
        config.min_samples_leaf = self.min_samples_leaf;
        config
    }

    /// Cells in lexicographic axis order.
    pub fn cells(&self) -> Vec<(usize, usize, usize)> {
        let [(_, mf), (_, nt), (_, md)] = self.axes();
        let mut out = Vec::with_capacity(self.n_cells());
        for &f in &mf {
            for &t in &nt {
                for &d in &md {
                    out.push((f, t, d));
                }
            }
        }
        out
    }

    pub fn validate(&self, arity: usize) -> Result<()> {
        for (name, values) in self.axes() {
            if values.is_empty() {
                return Err(Error::Config(format!("grid axis {name} is empty")));
            }
            if values.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Config(format!("grid axis {name} repeats a value")));
            }
        }
        for (f, t, d) in self.cells() {
            self.cell_config(f, t, d).validate(arity)?;
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub max_features: usize,
    pub n_trees: usize,
    pub max_depth: usize,
    pub mean_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
}

impl GridCell {
    /// Better mean first; on equal means fewer trees, then smaller depth,
    /// then fewer features.
    pub fn rank(&self, other: &GridCell) -> Ordering {
        other
            .mean_accuracy
            .total_cmp(&self.mean_accuracy)
            .then(self.n_trees.cmp(&other.n_trees))
            .then(self.max_depth.cmp(&other.max_depth))
            .then(self.max_features.cmp(&other.max_features))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub cells: Vec<GridCell>,
    pub best: GridCell,
    /// Held-out indices of each fold, into the dataset sorted by id.
    pub folds: Vec<Vec<usize>>,
}

/// Accuracy of `config` trained on `train` and scored on `test`, both as
/// indices into `data`.
pub fn fold_accuracy(data: &LabeledDataset, train: &[usize], test: &[usize], config: &ForestConfig) -> Result<f64> {
    let model = train_forest(&data.subset(train), config)?;
    let mut right = 0usize;
    for &i in test {
        let s = &data.samples()[i];
        if predict_forest(&model, &s.features)? == s.label {
            right += 1;
        }
    }
    Ok(right as f64 / test.len() as f64)
}

/// Complement of a fold.
pub fn training_part(n: usize, held_out: &[usize]) -> Vec<usize> {
    let mut out = vec![true; n];
    for &i in held_out {
        out[i] = false;
    }
    (0..n).filter(|&i| out[i]).collect()
}

/// Evaluates every cell on the same stratified folds. Every forest is
/// seeded with the grid seed.
pub fn grid_search(dataset: &LabeledDataset, grid: &GridSpec) -> Result<GridSearchResult> {
    grid.validate(dataset.family().arity())?;
    let data = dataset.sorted_by_id();
    let folds = stratified_folds(&data, grid.folds, grid.seed)?;
    let splits: Vec<(Vec<usize>, &Vec<usize>)> = folds
        .iter()
        .map(|test| (training_part(data.len(), test), test))
        .collect();

    let cells = par::try_map_slice(&grid.cells(), |&(f, t, d)| -> Result<GridCell> {
        let config = grid.cell_config(f, t, d);
        let fold_accuracies = splits
            .iter()
            .map(|(train, test)| fold_accuracy(&data, train, test, &config))
            .collect::<Result<Vec<f64>>>()?;
        Ok(GridCell {
            max_features: f,
            n_trees: t,
            max_depth: d,
            mean_accuracy: fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64,
            fold_accuracies,
        })
    })?;

    let best = cells
        .iter()
        .min_by(|a, b| a.rank(b))
        .cloned()
        .expect("grid has at least one cell");
    Ok(GridSearchResult { cells, best, folds })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preset {
    pub family: Family,
    pub max_features: usize,
    pub n_trees: usize,
    pub max_depth: usize,
}

impl Preset {
    pub fn forest_config(&self, seed: u64) -> ForestConfig {
        ForestConfig::new(self.max_features, self.n_trees, self.max_depth).with_seed(seed)
    }
}

/// Tuned (max_features, n_trees, max_depth) per family.
pub fn builtin_presets() -> [Preset; 5] {
    let p = |family, max_features, n_trees, max_depth| Preset {
        family,
        max_features,
        n_trees,
        max_depth,
    };
    [
        p(Family::RiskyMutableProxy, 3, 50, 4),
        p(Family::Erc721Reentrancy, 4, 50, 5),
        p(Family::UnlimitedMinting, 4, 75, 4),
        p(Family::MissingRequirements, 4, 50, 4),
        p(Family::PublicBurn, 5, 55, 3),
    ]
}

pub fn preset(family: Family) -> Preset {
    builtin_presets()
        .into_iter()
        .find(|p| p.family == family)
        .expect("every family has a preset")
}

/// Surface CSV text: one row per cell in axis order, fold accuracies joined
/// with `;`. Floats are written in shortest round-trip form.
pub fn surface_csv(result: &GridSearchResult) -> String {
    let mut out = String::from(SURFACE_HEADER);
    out.push('\n');
    for c in &result.cells {
        let folds: Vec<String> = c.fold_accuracies.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.max_features,
            c.n_trees,
            c.max_depth,
            c.mean_accuracy,
            folds.join(";")
        );
    }
    out
}

pub fn export_surface(result: &GridSearchResult, path: &Path) -> Result<()> {
    if result.cells.is_empty() {
        return Err(Error::Data("grid search result has no cells".into()));
    }
    fs::write(path, surface_csv(result)).map_err(|e| Error::io(path, e))
}

/// Reads a surface CSV back into cells.
pub fn read_surface(path: &Path) -> Result<Vec<GridCell>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
    let csv_err = |line: u64, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = reader.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != SURFACE_HEADER {
        return Err(csv_err(1, format!("expected header `{SURFACE_HEADER}`")));
    }
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let int = |i: usize| -> Result<usize> {
            record[i]
                .parse()
                .map_err(|_| csv_err(line, format!("`{}` is not a count", &record[i])))
        };
        let float = |s: &str| -> Result<f64> { s.parse().map_err(|_| csv_err(line, format!("`{s}` is not a number"))) };
        cells.push(GridCell {
            max_features: int(0)?,
            n_trees: int(1)?,
            max_depth: int(2)?,
            mean_accuracy: float(&record[3])?,
            fold_accuracies: record[4].split(';').map(float).collect::<Result<_>>()?,
        });
    }
    Ok(cells)
}
