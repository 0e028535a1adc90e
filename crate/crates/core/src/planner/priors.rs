use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::normalize_label;

/// Commonsense object → furniture rankings used when nothing is believed
/// about an object's location.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Vec<(String, f64)>>", into = "BTreeMap<String, Vec<(String, f64)>>")]
pub struct PriorTable {
    entries: BTreeMap<String, Vec<(String, f64)>>,
}

impl PriorTable {
    /// Validates and normalizes raw entries.
    pub fn new(raw: BTreeMap<String, Vec<(String, f64)>>) -> Result<Self, PlanError> {
        let mut entries = BTreeMap::new();
        for (object, locations) in raw {
            let object = normalize_label(&object);
            let mut normalized: Vec<(String, f64)> = Vec::with_capacity(locations.len());
            for (furniture, score) in locations {
                if !(0.0..=1.0).contains(&score) {
                    return Err(PlanError::InvalidPriors(format!("{object}: score {score} outside [0, 1]")));
                }
                if let Some((_, previous)) = normalized.last() {
                    if score >= *previous {
                        return Err(PlanError::InvalidPriors(format!(
                            "{object}: scores must be strictly descending"
                        )));
                    }
                }
                normalized.push((normalize_label(&furniture), score));
            }
            if object.is_empty() || normalized.iter().any(|(f, _)| f.is_empty()) {
                return Err(PlanError::InvalidPriors("empty label".into()));
            }
            entries.insert(object, normalized);
        }
        Ok(Self { entries })
    }

    /// apple and orange on the shelf, teddy bear on living-room furniture.
    pub fn household_defaults() -> Self {
        let raw = BTreeMap::from([
            ("apple".to_string(), vec![("shelf".to_string(), 0.7), ("dining table".to_string(), 0.4)]),
            ("orange".to_string(), vec![("shelf".to_string(), 0.7), ("dining table".to_string(), 0.4)]),
            ("teddy bear".to_string(), vec![("sofa".to_string(), 0.6), ("dining table".to_string(), 0.3)]),
        ]);
        Self::new(raw).expect("default priors are valid")
    }

    /// Entries of `other` replace ours label by label.
    pub fn merged_with(mut self, other: PriorTable) -> Self {
        self.entries.extend(other.entries);
        self
    }

    pub fn get(&self, object: &str) -> &[(String, f64)] {
        self.entries.get(object).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl TryFrom<BTreeMap<String, Vec<(String, f64)>>> for PriorTable {
    type Error = PlanError;

    fn try_from(raw: BTreeMap<String, Vec<(String, f64)>>) -> Result<Self, Self::Error> {
        Self::new(raw)
    }
}

impl From<PriorTable> for BTreeMap<String, Vec<(String, f64)>> {
    fn from(table: PriorTable) -> Self {
        table.entries
    }
}
