//! Classification metrics and per-contract scan reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::ContractSource;
use crate::dataset::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::features::extract_all;
use crate::forest::{predict_votes, ForestModel};
use crate::par;
use crate::rules::RuleSet;

/// Confusion counts with label 1 as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fp += 1,
            (_, 1) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Standard metrics; a ratio with a zero denominator is reported as 0.
pub fn metrics(c: &Confusion) -> Metrics {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1,
    }
}

/// Confusion of `model` over every sample of `dataset`.
pub fn evaluate(model: &ForestModel, dataset: &LabeledDataset) -> Result<Confusion> {
    let mut c = Confusion::default();
    for s in dataset.samples() {
        let (v0, v1) = predict_votes(model, &s.features)?;
        c.add(Label::from(v1 > v0), s.label);
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyVerdict {
    pub family: Family,
    pub prediction: Label,
    /// Tree votes for label 0 and label 1.
    pub votes: [usize; 2],
    /// Codes of the features that fired.
    pub fired: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractReport {
    pub id: String,
    pub verdicts: Vec<FamilyVerdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub ruleset_version: String,
    pub contracts: Vec<ContractReport>,
}

/// Extracts every family's features for each contract and runs the models
/// that are supplied (at most one per family). Contracts come out in id
/// order; verdicts in family order.
pub fn scan(sources: &[ContractSource], models: &[ForestModel], ruleset: &RuleSet) -> Result<ScanReport> {
    let mut by_family: Vec<Option<&ForestModel>> = vec![None; Family::ALL.len()];
    for model in models {
        let slot = Family::ALL.iter().position(|&f| f == model.family()).expect("known family");
        if by_family[slot].is_some() {
            return Err(Error::Config(format!("two models supplied for {}", model.family())));
        }
        let rules = ruleset.family_rules(model.family()).len();
        if let Some(tree) = model.trees().iter().find(|t| t.n_features() != rules) {
            return Err(Error::Arity {
                expected: rules,
                got: tree.n_features(),
            });
        }
        by_family[slot] = Some(model);
    }

    let mut ordered: Vec<&ContractSource> = sources.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let contracts = par::try_map_slice(&ordered, |source| -> Result<ContractReport> {
        let vectors = extract_all(source, ruleset);
        let mut verdicts = Vec::new();
        for (fv, model) in vectors.iter().zip(&by_family) {
            let Some(model) = model else { continue };
            let (v0, v1) = predict_votes(model, fv)?;
            verdicts.push(FamilyVerdict {
                family: fv.family(),
                prediction: Label::from(v1 > v0),
                votes: [v0, v1],
                fired: fv.fired_codes(),
            });
        }
        Ok(ContractReport {
            id: source.id.clone(),
            verdicts,
        })
    })?;
    Ok(ScanReport {
        ruleset_version: ruleset.version().to_string(),
        contracts,
    })
}

impl ScanReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.contracts {
            let _ = writeln!(out, "{}", c.id);
            for v in &c.verdicts {
                let verdict = if v.prediction == 1 { "VULNERABLE" } else { "ok" };
                let fired = if v.fired.is_empty() {
                    "-".to_string()
                } else {
                    v.fired.join(",")
                };
                let _ = writeln!(
                    out,
                    "  {:<8} {:<10} votes {}/{}  fired {}",
                    v.family.tag(),
                    verdict,
                    v.votes[1],
                    v.votes[0] + v.votes[1],
                    fired
                );
            }
        }
        out
    }
}
