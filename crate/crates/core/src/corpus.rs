//! Matched-pair scenario corpus: types, JSON Lines loading/saving, and the
//! mechanical validator.
//!
//! A scenario holds two source documents that differ in exactly one factor,
//! three query paraphrases, and the fixed search-query string reused across
//! repeated runs. The corpus file is UTF-8 JSON Lines with one scenario per
//! line; unknown fields are preserved on round-trip.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::extract;
use crate::factors::{self, VariantId};

/// One source document inside a matched pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantDoc {
    pub variant_id: VariantId,
    pub title: String,
    pub url: String,
    pub body: String,
    /// Character count of `body`; validated, not trusted.
    pub declared_length: usize,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl VariantDoc {
    pub fn new(variant_id: VariantId, title: String, url: String, body: String) -> Self {
        let declared_length = body.chars().count();
        Self {
            variant_id,
            title,
            url,
            body,
            declared_length,
            extra: Map::new(),
        }
    }
}

/// A matched pair of documents plus its query paraphrases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    pub factor_id: u8,
    pub blog_id: String,
    pub variant_a: VariantDoc,
    pub variant_b: VariantDoc,
    /// Exactly three user-question paraphrases.
    pub queries: Vec<String>,
    /// Fixed search-query string reused on every repeated run.
    pub tool_query: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Scenario {
    pub fn variant(&self, id: VariantId) -> &VariantDoc {
        match id {
            VariantId::A => &self.variant_a,
            VariantId::B => &self.variant_b,
        }
    }
}

/// An immutable set of scenarios with an id index. The 18-factor registry is
/// process-wide ([`factors::registry`]); scenarios reference it by id.
#[derive(Debug, Clone)]
pub struct Corpus {
    scenarios: Vec<Scenario>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Build a corpus from scenarios, rejecting duplicate ids and unknown
    /// factor ids.
    pub fn new(scenarios: Vec<Scenario>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(scenarios.len());
        for (pos, s) in scenarios.iter().enumerate() {
            if factors::by_id(s.factor_id).is_none() {
                return Err(CorpusError::UnknownFactor {
                    factor_id: s.factor_id,
                    scenario_id: s.scenario_id.clone(),
                });
            }
            if index.insert(s.scenario_id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateScenarioId {
                    scenario_id: s.scenario_id.clone(),
                });
            }
        }
        Ok(Self { scenarios, index })
    }

    pub fn get(&self, scenario_id: &str) -> Option<&Scenario> {
        self.index.get(scenario_id).map(|&i| &self.scenarios[i])
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Jsonl(#[from] crate::jsonl::JsonlError),
    #[error("duplicate scenario_id {scenario_id:?}")]
    DuplicateScenarioId { scenario_id: String },
    #[error("scenario {scenario_id:?} references unknown factor_id {factor_id} (registry has 18 factors)")]
    UnknownFactor { factor_id: u8, scenario_id: String },
}

/// Load a corpus from a JSON Lines file, one scenario per line. Every line
/// parses or the error names the offending line; nothing is skipped silently.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let scenarios: Vec<Scenario> = crate::jsonl::read_all(path)?;
    Corpus::new(scenarios)
}

/// Save a corpus as JSON Lines, one scenario per line.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    crate::jsonl::write_all(path, corpus.scenarios())?;
    Ok(())
}

/// Maximum allowed relative length difference between paired bodies.
pub const LENGTH_PARITY_LIMIT: f64 = 0.05;

/// Relative length difference `|len_a - len_b| / max(len_a, len_b)`.
pub fn length_disparity(len_a: usize, len_b: usize) -> f64 {
    let max = len_a.max(len_b);
    if max == 0 {
        return 0.0;
    }
    (len_a as f64 - len_b as f64).abs() / max as f64
}

/// One failed validation rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule_id: String,
    pub message: String,
}

/// Validation outcome for a single scenario. Violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scenario_id: String,
    pub passed: bool,
    pub violations: Vec<Violation>,
}

/// Check the mechanical pairing rules: length parity within 5%, exactly three
/// queries, distinct canonical variant URLs, non-empty bodies, truthful
/// declared lengths, and absence of blocklisted brand terms in either body.
pub fn validate_scenario(scenario: &Scenario, blocklist: &[String]) -> ValidationReport {
    let mut violations = Vec::new();
    let mut violate = |rule_id: &str, message: String| {
        violations.push(Violation {
            rule_id: rule_id.to_string(),
            message,
        });
    };

    if scenario.queries.len() != 3 {
        violate(
            "query_count",
            format!("query count != 3 (found {})", scenario.queries.len()),
        );
    }

    for doc in [&scenario.variant_a, &scenario.variant_b] {
        let label = match doc.variant_id {
            VariantId::A => "A",
            VariantId::B => "B",
        };
        if doc.body.is_empty() {
            violate("body_empty", format!("variant {label} body is empty"));
        }
        let actual = doc.body.chars().count();
        if doc.declared_length != actual {
            violate(
                "declared_length",
                format!(
                    "variant {label} declared_length {} != actual {}",
                    doc.declared_length, actual
                ),
            );
        }
    }

    let len_a = scenario.variant_a.body.chars().count();
    let len_b = scenario.variant_b.body.chars().count();
    let disparity = length_disparity(len_a, len_b);
    if disparity > LENGTH_PARITY_LIMIT {
        violate(
            "length_parity",
            format!(
                "body lengths {len_a} vs {len_b} differ by {:.1}% (> {:.0}%)",
                disparity * 100.0,
                LENGTH_PARITY_LIMIT * 100.0
            ),
        );
    }

    let canon_a = extract::canonicalize(&scenario.variant_a.url);
    let canon_b = extract::canonicalize(&scenario.variant_b.url);
    match (&canon_a, &canon_b) {
        (Some(a), Some(b)) if a == b => {
            violate(
                "url_distinct",
                format!("variant URLs canonicalize to the same key {a:?}"),
            );
        }
        (Some(_), Some(_)) => {}
        _ => violate(
            "url_parse",
            format!(
                "unparseable variant URL ({:?} / {:?})",
                scenario.variant_a.url, scenario.variant_b.url
            ),
        ),
    }

    for term in blocklist {
        if term.is_empty() {
            continue;
        }
        let needle = term.to_lowercase();
        for doc in [&scenario.variant_a, &scenario.variant_b] {
            if doc.body.to_lowercase().contains(&needle) {
                let label = match doc.variant_id {
                    VariantId::A => "A",
                    VariantId::B => "B",
                };
                violate(
                    "brand_term",
                    format!("blocklisted term {term:?} appears in variant {label} body"),
                );
            }
        }
    }

    ValidationReport {
        scenario_id: scenario.scenario_id.clone(),
        passed: violations.is_empty(),
        violations,
    }
}
