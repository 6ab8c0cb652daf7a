//! Rule application: contracts to per-family feature vectors and datasets.

use crate::corpus::{ContractSource, LabelTable};
use crate::dataset::{FeatureVector, LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::par;
use crate::rules::{evaluate_rule, RuleSet};
use crate::scan::extract_functions;

/// Feature vector of one contract for one family.
pub fn extract_features(source: &ContractSource, family: Family, ruleset: &RuleSet) -> FeatureVector {
    let spans = extract_functions(&source.normalized_text);
    let bits = ruleset
        .family_rules(family)
        .iter()
        .map(|rule| evaluate_rule(rule, source, &spans))
        .collect();
    FeatureVector::new(family, bits).expect("ruleset family sizes match arity")
}

/// All five vectors of one contract, in family order.
pub fn extract_all(source: &ContractSource, ruleset: &RuleSet) -> Vec<FeatureVector> {
    let spans = extract_functions(&source.normalized_text);
    Family::ALL
        .iter()
        .map(|&family| {
            let bits = ruleset
                .family_rules(family)
                .iter()
                .map(|rule| evaluate_rule(rule, source, &spans))
                .collect();
            FeatureVector::new(family, bits).expect("ruleset family sizes match arity")
        })
        .collect()
}

/// Joins labels with sources by id and extracts one family's features.
/// Samples come out in id order; sources without a label are ignored.
pub fn build_dataset(
    sources: &[ContractSource],
    labels: &LabelTable,
    family: Family,
    ruleset: &RuleSet,
) -> Result<LabeledDataset> {
    if labels.family != family {
        return Err(Error::Data(format!(
            "label table is for {}, requested {family}",
            labels.family
        )));
    }
    let mut by_id: Vec<&ContractSource> = sources.iter().collect();
    by_id.sort_by(|a, b| a.id.cmp(&b.id));

    let mut missing = Vec::new();
    let mut joined = Vec::with_capacity(labels.entries.len());
    for (id, &label) in &labels.entries {
        match by_id.binary_search_by(|s| s.id.as_str().cmp(id)) {
            Ok(pos) => joined.push((by_id[pos], label)),
            Err(_) => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing));
    }

    let samples = par::map_slice(&joined, |&(source, label)| Sample {
        id: source.id.clone(),
        features: extract_features(source, family, ruleset),
        label,
    });
    LabeledDataset::new(family, samples)
}
