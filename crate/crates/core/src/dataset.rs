//! Feature vectors, labelled datasets, and the sample-access trait the
//! learners train against.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::Family;

/// Binary class label: 0 = no issue, 1 = issue present.
pub type Label = u8;

/// Ordered boolean features for one family. Position `i` is code
/// `<letter><i+1>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector {
    family: Family,
    bits: Vec<bool>,
}

impl FeatureVector {
    pub fn new(family: Family, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != family.arity() {
            return Err(Error::Arity {
                expected: family.arity(),
                got: bits.len(),
            });
        }
        Ok(FeatureVector { family, bits })
    }

    pub fn zeros(family: Family) -> Self {
        FeatureVector {
            family,
            bits: vec![false; family.arity()],
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    /// Codes of the bits that are set.
    pub fn fired_codes(&self) -> Vec<String> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| self.family.code(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub features: FeatureVector,
    pub label: Label,
}

/// Feature vectors plus 0/1 labels for one family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDataset {
    family: Family,
    samples: Vec<Sample>,
}

impl LabeledDataset {
    /// Validates family consistency, label range, and id uniqueness.
    pub fn new(family: Family, samples: Vec<Sample>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &samples {
            if s.features.family() != family {
                return Err(Error::Data(format!(
                    "sample `{}` belongs to {}, dataset is {}",
                    s.id,
                    s.features.family(),
                    family
                )));
            }
            if s.label > 1 {
                return Err(Error::Data(format!(
                    "sample `{}` has label {}, expected 0 or 1",
                    s.id, s.label
                )));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id `{}`", s.id)));
            }
        }
        Ok(LabeledDataset { family, samples })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Subset by index, keeping the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            family: self.family,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Same samples, sorted by id.
    pub fn sorted_by_id(&self) -> LabeledDataset {
        let mut samples = self.samples.clone();
        samples.sort_by(|a, b| a.id.cmp(&b.id));
        LabeledDataset {
            family: self.family,
            samples,
        }
    }

    /// Count of samples per class, `[n0, n1]`.
    pub fn class_sizes(&self) -> [usize; 2] {
        let mut sizes = [0usize; 2];
        for s in &self.samples {
            sizes[s.label as usize] += 1;
        }
        sizes
    }
}

/// Row-oriented access to boolean training data.
pub trait TrainingData: Sync {
    fn n_samples(&self) -> usize;
    fn n_features(&self) -> usize;
    fn bit(&self, sample: usize, feature: usize) -> bool;
    fn label(&self, sample: usize) -> Label;
}

impl TrainingData for LabeledDataset {
    fn n_samples(&self) -> usize {
        self.samples.len()
    }

    fn n_features(&self) -> usize {
        self.family.arity()
    }

    fn bit(&self, sample: usize, feature: usize) -> bool {
        self.samples[sample].features.bits[feature]
    }

    fn label(&self, sample: usize) -> Label {
        self.samples[sample].label
    }
}

/// A plain boolean matrix with labels, for learners used outside any
/// vulnerability family (and for tests over arbitrary widths).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolTable {
    n_features: usize,
    rows: Vec<Vec<bool>>,
    labels: Vec<Label>,
}

impl BoolTable {
    pub fn new(n_features: usize, rows: Vec<Vec<bool>>, labels: Vec<Label>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(row) = rows.iter().find(|r| r.len() != n_features) {
            return Err(Error::Arity {
                expected: n_features,
                got: row.len(),
            });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Data("labels must be 0 or 1".into()));
        }
        Ok(BoolTable {
            n_features,
            rows,
            labels,
        })
    }

    pub fn row(&self, sample: usize) -> &[bool] {
        &self.rows[sample]
    }
}

impl TrainingData for BoolTable {
    fn n_samples(&self) -> usize {
        self.rows.len()
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn bit(&self, sample: usize, feature: usize) -> bool {
        self.rows[sample][feature]
    }

    fn label(&self, sample: usize) -> Label {
        self.labels[sample]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, bits: [bool; 6], label: Label) -> Sample {
        Sample {
            id: id.into(),
            features: FeatureVector::new(Family::RiskyMutableProxy, bits.to_vec()).unwrap(),
            label,
        }
    }

    #[test]
    fn feature_vector_arity_checked() {
        assert!(FeatureVector::new(Family::UnlimitedMinting, vec![false; 6]).is_err());
        assert!(FeatureVector::new(Family::UnlimitedMinting, vec![false; 8]).is_ok());
    }

    #[test]
    fn fired_codes_follow_positions() {
        let fv = FeatureVector::new(
            Family::RiskyMutableProxy,
            vec![false, false, true, true, false, false],
        )
        .unwrap();
        assert_eq!(fv.fired_codes(), vec!["A3", "A4"]);
    }

    #[test]
    fn dataset_rejects_duplicates_and_bad_labels() {
        let a = sample("a", [false; 6], 0);
        assert!(LabeledDataset::new(Family::RiskyMutableProxy, vec![a.clone(), a.clone()]).is_err());
        let bad = sample("b", [false; 6], 2);
        assert!(LabeledDataset::new(Family::RiskyMutableProxy, vec![bad]).is_err());
        assert!(LabeledDataset::new(Family::PublicBurn, vec![a]).is_err());
    }

    #[test]
    fn bool_table_validates_shape() {
        assert!(BoolTable::new(2, vec![vec![true, false]], vec![1]).is_ok());
        assert!(BoolTable::new(2, vec![vec![true]], vec![1]).is_err());
        assert!(BoolTable::new(2, vec![vec![true, false]], vec![]).is_err());
    }
}
