//! Open-vocabulary label handling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

const ARTICLES: [&str; 3] = ["the", "a", "an"];

/// Lowercases, collapses whitespace and strips one leading article.
///
/// ```
/// use hearth_core::normalize_label;
/// assert_eq!(normalize_label("The Cleaning  Table "), "cleaning table");
/// assert_eq!(normalize_label("an Orange"), "orange");
/// ```
pub fn normalize_label(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let mut words = lowered.split_whitespace().peekable();
    if let Some(first) = words.peek() {
        if ARTICLES.contains(first) {
            words.next();
        }
    }
    words.collect::<Vec<_>>().join(" ")
}

/// Known place labels plus a synonym table mapping aliases to canonical labels.
///
/// Place labels (furniture and rooms) are never instantiated provisionally:
/// a cue that names an unknown place cannot be grounded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub places: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub synonyms: BTreeMap<String, String>,
}

impl Lexicon {
    pub fn add_place(&mut self, label: &str) {
        let label = normalize_label(label);
        if let Err(pos) = self.places.binary_search(&label) {
            self.places.insert(pos, label);
        }
    }

    pub fn add_synonym(&mut self, alias: &str, canonical: &str) {
        let alias = normalize_label(alias);
        let canonical = normalize_label(canonical);
        if !alias.is_empty() && alias != canonical {
            self.synonyms.insert(alias, canonical);
        }
    }

    pub fn is_place(&self, normalized: &str) -> bool {
        self.places.binary_search_by(|p| p.as_str().cmp(normalized)).is_ok()
    }

    /// Normalizes `raw` and maps it through the synonym table.
    pub fn canonical(&self, raw: &str) -> String {
        let normalized = normalize_label(raw);
        match self.synonyms.get(&normalized) {
            Some(canonical) => canonical.clone(),
            None => normalized,
        }
    }
}
