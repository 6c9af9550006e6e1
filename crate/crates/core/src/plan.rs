//! Deterministic, counterbalanced trial planning.
//!
//! Every (scenario, paraphrase, model) cell expands to `2 * reps` trials
//! split equally between the two source orders, except for the position
//! factor where order is the treatment and only the natural arrangement runs.
//! Execution order is shuffled deterministically by the plan seed.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::factors;
use crate::util;

/// Source order inside the tool response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    /// Variant A listed first.
    Ab,
    /// Variant B listed first.
    Ba,
}

impl Order {
    pub fn tag(self) -> &'static str {
        match self {
            Order::Ab => "ab",
            Order::Ba => "ba",
        }
    }
}

/// One planned execution. `trial_id` is a content hash of the remaining
/// fields and acts as the idempotency key for resume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub trial_id: String,
    pub scenario_id: String,
    pub paraphrase_index: u8,
    pub order: Order,
    pub replicate: u32,
    pub model_id: String,
}

/// Derive the idempotency key for a trial.
pub fn trial_id(
    scenario_id: &str,
    paraphrase_index: u8,
    order: Order,
    replicate: u32,
    model_id: &str,
) -> String {
    util::content_id(&[
        "trial",
        scenario_id,
        &paraphrase_index.to_string(),
        order.tag(),
        &replicate.to_string(),
        model_id,
    ])
}

/// Tallies of a trial list, recomputed from the list itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub total: usize,
    pub per_model: BTreeMap<String, usize>,
    pub per_factor: BTreeMap<u8, usize>,
    pub per_factor_per_model: BTreeMap<u8, BTreeMap<String, usize>>,
}

/// A deterministic trial plan.
#[derive(Debug, Clone)]
pub struct TrialPlan {
    pub seed: u64,
    pub trials: Vec<TrialSpec>,
    pub summary: PlanSummary,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no models given")]
    NoModels,
    #[error("duplicate model id {0:?}")]
    DuplicateModel(String),
    #[error("reps must be >= 1")]
    ZeroReps,
    #[error("scenario {scenario_id:?} references unknown factor_id {factor_id}")]
    UnknownFactor { scenario_id: String, factor_id: u8 },
    #[error(transparent)]
    Jsonl(#[from] crate::jsonl::JsonlError),
}

/// Expand a corpus into a counterbalanced trial plan across models and
/// replicates, shuffled deterministically by `seed`.
pub fn build_plan(
    corpus: &Corpus,
    models: &[String],
    reps: u32,
    seed: u64,
) -> Result<TrialPlan, PlanError> {
    if corpus.is_empty() {
        return Err(PlanError::EmptyCorpus);
    }
    if models.is_empty() {
        return Err(PlanError::NoModels);
    }
    let mut seen = HashSet::new();
    for m in models {
        if !seen.insert(m.as_str()) {
            return Err(PlanError::DuplicateModel(m.clone()));
        }
    }
    if reps == 0 {
        return Err(PlanError::ZeroReps);
    }

    let mut trials = Vec::new();
    for scenario in corpus.scenarios() {
        let factor =
            factors::by_id(scenario.factor_id).ok_or_else(|| PlanError::UnknownFactor {
                scenario_id: scenario.scenario_id.clone(),
                factor_id: scenario.factor_id,
            })?;
        let orders: &[Order] = if factor.counterbalanced {
            &[Order::Ab, Order::Ba]
        } else {
            &[Order::Ab]
        };
        for model in models {
            for paraphrase_index in 0..scenario.queries.len() as u8 {
                for &order in orders {
                    for replicate in 1..=reps {
                        trials.push(TrialSpec {
                            trial_id: trial_id(
                                &scenario.scenario_id,
                                paraphrase_index,
                                order,
                                replicate,
                                model,
                            ),
                            scenario_id: scenario.scenario_id.clone(),
                            paraphrase_index,
                            order,
                            replicate,
                            model_id: model.clone(),
                        });
                    }
                }
            }
        }
    }

    let mut rng = util::derived_rng(seed, &["plan-shuffle"]);
    trials.shuffle(&mut rng);

    debug_assert_eq!(
        trials.iter().map(|t| t.trial_id.as_str()).collect::<HashSet<_>>().len(),
        trials.len(),
        "trial ids must be unique"
    );

    let summary = summarize(&trials, corpus)?;
    Ok(TrialPlan { seed, trials, summary })
}

/// Recompute summary tallies for a trial list.
pub fn summarize(trials: &[TrialSpec], corpus: &Corpus) -> Result<PlanSummary, PlanError> {
    let mut per_model: BTreeMap<String, usize> = BTreeMap::new();
    let mut per_factor: BTreeMap<u8, usize> = BTreeMap::new();
    let mut per_factor_per_model: BTreeMap<u8, BTreeMap<String, usize>> = BTreeMap::new();
    for t in trials {
        let factor_id = corpus
            .get(&t.scenario_id)
            .map(|s| s.factor_id)
            .ok_or_else(|| PlanError::UnknownFactor {
                scenario_id: t.scenario_id.clone(),
                factor_id: 0,
            })?;
        *per_model.entry(t.model_id.clone()).or_default() += 1;
        *per_factor.entry(factor_id).or_default() += 1;
        *per_factor_per_model
            .entry(factor_id)
            .or_default()
            .entry(t.model_id.clone())
            .or_default() += 1;
    }
    Ok(PlanSummary {
        total: trials.len(),
        per_model,
        per_factor,
        per_factor_per_model,
    })
}

/// Export the trial list as JSON Lines of `TrialSpec`.
pub fn save_plan(plan: &TrialPlan, path: &Path) -> Result<(), PlanError> {
    crate::jsonl::write_all(path, &plan.trials)?;
    Ok(())
}

/// Load a trial list previously written by [`save_plan`].
pub fn load_plan(path: &Path) -> Result<Vec<TrialSpec>, PlanError> {
    Ok(crate::jsonl::read_all(path)?)
}
