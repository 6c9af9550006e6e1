//! Seeded simulator backend.
//!
//! Mirrors the data-generating process behind the fitted model: the
//! probability that variant A is cited first is
//! `logistic(gamma0 + gamma1 * x + u_s + v_so)` with `x` the centered
//! position indicator, `u_s` a per-scenario intercept and `v_so` a
//! per-(scenario, order) intercept. Answer-shape quirks (no URL, foreign
//! first URL, multiple URLs) are injected at configured rates so the
//! extractor sees realistic text.
//!
//! All draws derive from the seed and content keys, so outcomes are
//! independent of execution order and thread interleaving.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Scenario;
use crate::plan::{Order, TrialSpec};
use crate::util;

use super::{Backend, BackendError, BackendReply, TrialContext};

/// Parameters of the simulated citation process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Log-odds of citing variant A first.
    pub gamma0: f64,
    /// Coefficient on the centered position indicator (+1/2 when A is listed
    /// first, -1/2 otherwise).
    pub gamma1: f64,
    /// Standard deviation of the per-scenario intercept.
    pub sigma_s: f64,
    /// Standard deviation of the per-(scenario, order) intercept.
    pub sigma_so: f64,
    /// Share of answers containing no URL at all.
    pub no_url_rate: f64,
    /// Share of answers whose first URL matches neither variant.
    pub foreign_url_rate: f64,
    /// Share of remaining answers that cite the second source too.
    pub multi_url_rate: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        // Default rates land the URL-count mix near 86% / 11% / 3%
        // (one / two-or-more / none).
        Self {
            gamma0: 0.0,
            gamma1: 0.0,
            sigma_s: 0.0,
            sigma_so: 0.0,
            no_url_rate: 0.031,
            foreign_url_rate: 0.003,
            multi_url_rate: 0.1087,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimConfigError {
    #[error("rate {name} = {value} outside [0, 1]")]
    RateOutOfRange { name: &'static str, value: f64 },
    #[error("no_url_rate + foreign_url_rate = {0} exceeds 1")]
    RateSumTooLarge(f64),
    #[error("sigma {name} = {value} is negative")]
    NegativeSigma { name: &'static str, value: f64 },
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimConfigError> {
        for (name, value) in [
            ("no_url_rate", self.no_url_rate),
            ("foreign_url_rate", self.foreign_url_rate),
            ("multi_url_rate", self.multi_url_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SimConfigError::RateOutOfRange { name, value });
            }
        }
        let sum = self.no_url_rate + self.foreign_url_rate;
        if sum > 1.0 {
            return Err(SimConfigError::RateSumTooLarge(sum));
        }
        for (name, value) in [("sigma_s", self.sigma_s), ("sigma_so", self.sigma_so)] {
            if value < 0.0 {
                return Err(SimConfigError::NegativeSigma { name, value });
            }
        }
        Ok(())
    }
}

/// Per-factor overrides of the citation-process coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorEffects {
    pub gamma0: f64,
    #[serde(default)]
    pub gamma1: Option<f64>,
}

/// Memoized standard-normal draws for the random intercepts. Values are pure
/// functions of (seed, key), so the cache only saves hashing work and is safe
/// to share across threads.
#[derive(Debug, Default)]
pub struct RandomEffectsCache {
    scenario: Mutex<HashMap<String, f64>>,
    scenario_order: Mutex<HashMap<(String, Order), f64>>,
}

impl RandomEffectsCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn scenario_z(&self, seed: u64, scenario_id: &str) -> f64 {
        let mut cache = self.scenario.lock().expect("cache lock");
        *cache.entry(scenario_id.to_string()).or_insert_with(|| {
            util::derived_rng(seed, &["sim-scenario", scenario_id]).sample(StandardNormal)
        })
    }

    fn order_z(&self, seed: u64, scenario_id: &str, order: Order) -> f64 {
        let mut cache = self.scenario_order.lock().expect("cache lock");
        *cache
            .entry((scenario_id.to_string(), order))
            .or_insert_with(|| {
                util::derived_rng(seed, &["sim-order", scenario_id, order.tag()])
                    .sample(StandardNormal)
            })
    }
}

/// Centered position indicator for a trial.
fn position_indicator(order: Order) -> f64 {
    match order {
        Order::Ab => 0.5,
        Order::Ba => -0.5,
    }
}

/// Produce the simulated answer text for one trial. Deterministic given the
/// config seed and the trial spec.
pub fn simulate_answer(
    spec: &TrialSpec,
    scenario: &Scenario,
    sim: &SimConfig,
    effects: &RandomEffectsCache,
) -> String {
    let u = sim.sigma_s * effects.scenario_z(sim.seed, &spec.scenario_id);
    let v = sim.sigma_so * effects.order_z(sim.seed, &spec.scenario_id, spec.order);
    let x = position_indicator(spec.order);
    let p_a_first = crate::stats::logistic(sim.gamma0 + sim.gamma1 * x + u + v);

    // Fixed draw sequence keeps every event independent of the others.
    let mut rng = util::derived_rng(sim.seed, &["sim-trial", &spec.trial_id]);
    let shape: f64 = rng.random();
    let win: f64 = rng.random();
    let multi: f64 = rng.random();

    if shape < sim.no_url_rate {
        return format!(
            "After reviewing the search results, the options for \"{}\" look comparable \
             and I could not verify a single standout choice.",
            scenario.tool_query
        );
    }
    if shape < sim.no_url_rate + sim.foreign_url_rate {
        return format!(
            "The most useful starting point is https://catalog.example/{} which indexes \
             several relevant reviews.",
            spec.scenario_id
        );
    }

    let (winner, loser) = if win < p_a_first {
        (&scenario.variant_a, &scenario.variant_b)
    } else {
        (&scenario.variant_b, &scenario.variant_a)
    };
    let mut answer = format!(
        "Based on the search results, the pick described in \"{}\" is the stronger \
         choice here. See {} for the full review.",
        winner.title, winner.url
    );
    if multi < sim.multi_url_rate {
        answer.push_str(&format!(
            " A second opinion is available at {} for comparison.",
            loser.url
        ));
    }
    answer
}

/// Backend that serves simulated answers, with optional per-factor effect
/// overrides for end-to-end runs with known ground truth.
pub struct SimulatorBackend {
    id: String,
    base: SimConfig,
    per_factor: HashMap<u8, FactorEffects>,
    effects: RandomEffectsCache,
}

impl SimulatorBackend {
    pub fn new(
        id: impl Into<String>,
        base: SimConfig,
        per_factor: HashMap<u8, FactorEffects>,
    ) -> Result<Self, SimConfigError> {
        base.validate()?;
        Ok(Self {
            id: id.into(),
            base,
            per_factor,
            effects: RandomEffectsCache::new(),
        })
    }

    fn config_for(&self, factor_id: u8) -> SimConfig {
        match self.per_factor.get(&factor_id) {
            Some(effect) => SimConfig {
                gamma0: effect.gamma0,
                gamma1: effect.gamma1.unwrap_or(self.base.gamma1),
                ..self.base
            },
            None => self.base,
        }
    }
}

impl Backend for SimulatorBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn run(&self, ctx: &TrialContext<'_>) -> Result<BackendReply, BackendError> {
        let sim = self.config_for(ctx.scenario.factor_id);
        let text = simulate_answer(ctx.spec, ctx.scenario, &sim, &self.effects);
        Ok(BackendReply {
            text,
            meta: "simulator".to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Scenario, VariantDoc};
    use crate::factors::VariantId;
    use crate::plan;
    use serde_json::Map;

    fn scenario(id: &str) -> Scenario {
        Scenario {
            scenario_id: id.into(),
            factor_id: 1,
            blog_id: "b".into(),
            variant_a: VariantDoc::new(
                VariantId::A,
                format!("{id} strong"),
                format!("https://a.example/{id}"),
                "body".into(),
            ),
            variant_b: VariantDoc::new(
                VariantId::B,
                format!("{id} weak"),
                format!("https://b.example/{id}"),
                "body".into(),
            ),
            queries: vec!["q0".into(), "q1".into(), "q2".into()],
            tool_query: "best thing".into(),
            extra: Map::new(),
        }
    }

    fn spec(scenario_id: &str, order: Order, replicate: u32) -> TrialSpec {
        TrialSpec {
            trial_id: plan::trial_id(scenario_id, 0, order, replicate, "sim"),
            scenario_id: scenario_id.into(),
            paraphrase_index: 0,
            order,
            replicate,
            model_id: "sim".into(),
        }
    }

    fn count_a_first(sim: &SimConfig, n: u32, order: Order) -> (usize, usize) {
        let effects = RandomEffectsCache::new();
        let mut a_first = 0;
        let mut total = 0;
        for i in 0..n {
            let s = scenario(&format!("s{i}"));
            let t = spec(&s.scenario_id, order, 1);
            let answer = simulate_answer(&t, &s, sim, &effects);
            let urls = crate::extract::find_urls(&answer);
            if let Some(first) = urls.first() {
                if first.contains("a.example") {
                    a_first += 1;
                    total += 1;
                } else if first.contains("b.example") {
                    total += 1;
                }
            }
        }
        (a_first, total)
    }

    #[test]
    fn neutral_process_is_a_coin_flip() {
        // gamma0 = gamma1 = 0, sigmas = 0: A-first frequency over 10,000
        // retained trials stays within the 0.50 +/- 0.02 binomial band
        // computed for this sample size.
        let sim = SimConfig {
            no_url_rate: 0.0,
            foreign_url_rate: 0.0,
            multi_url_rate: 0.0,
            seed: 202,
            ..SimConfig::default()
        };
        let (a_first, total) = count_a_first(&sim, 10_000, Order::Ab);
        assert_eq!(total, 10_000);
        let rate = a_first as f64 / total as f64;
        assert!((rate - 0.5).abs() < 0.02, "rate = {rate}");
    }

    #[test]
    fn saturated_log_odds_always_cites_a_first() {
        let sim = SimConfig {
            gamma0: 50.0,
            no_url_rate: 0.0,
            foreign_url_rate: 0.0,
            multi_url_rate: 0.0,
            seed: 9,
            ..SimConfig::default()
        };
        let effects = RandomEffectsCache::new();
        for i in 0..200 {
            let s = scenario(&format!("s{i}"));
            let t = spec(&s.scenario_id, Order::Ab, 1);
            let answer = simulate_answer(&t, &s, &sim, &effects);
            let urls = crate::extract::find_urls(&answer);
            assert!(urls[0].contains("a.example"), "answer: {answer}");
        }
    }

    #[test]
    fn no_url_rate_is_respected() {
        let sim = SimConfig {
            no_url_rate: 0.031,
            foreign_url_rate: 0.0,
            multi_url_rate: 0.0,
            seed: 77,
            ..SimConfig::default()
        };
        let effects = RandomEffectsCache::new();
        let s = scenario("s0");
        let n = 100_000;
        let mut empty = 0;
        for i in 0..n {
            let t = spec("s0", Order::Ab, i);
            let answer = simulate_answer(&t, &s, &sim, &effects);
            if crate::extract::find_urls(&answer).is_empty() {
                empty += 1;
            }
        }
        let rate = empty as f64 / n as f64;
        // 3-sigma binomial band around 0.031 at n = 100,000 is ~0.0016 wide.
        assert!((rate - 0.031).abs() < 0.002, "rate = {rate}");
    }

    #[test]
    fn answers_are_deterministic_per_trial() {
        let sim = SimConfig {
            sigma_s: 0.5,
            sigma_so: 0.3,
            seed: 5,
            ..SimConfig::default()
        };
        let s = scenario("s0");
        let t = spec("s0", Order::Ab, 1);
        let e1 = RandomEffectsCache::new();
        let e2 = RandomEffectsCache::new();
        assert_eq!(
            simulate_answer(&t, &s, &sim, &e1),
            simulate_answer(&t, &s, &sim, &e2)
        );
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut sim = SimConfig::default();
        sim.no_url_rate = 1.2;
        assert!(sim.validate().is_err());
        sim.no_url_rate = 0.6;
        sim.foreign_url_rate = 0.6;
        assert!(matches!(
            sim.validate(),
            Err(SimConfigError::RateSumTooLarge(_))
        ));
        sim.foreign_url_rate = 0.0;
        sim.sigma_s = -1.0;
        assert!(matches!(
            sim.validate(),
            Err(SimConfigError::NegativeSigma { .. })
        ));
    }

    #[test]
    fn per_factor_overrides_change_only_that_factor() {
        let mut per_factor = HashMap::new();
        per_factor.insert(
            7u8,
            FactorEffects {
                gamma0: 50.0,
                gamma1: None,
            },
        );
        let backend = SimulatorBackend::new(
            "sim",
            SimConfig {
                no_url_rate: 0.0,
                foreign_url_rate: 0.0,
                multi_url_rate: 0.0,
                seed: 3,
                ..SimConfig::default()
            },
            per_factor,
        )
        .unwrap();
        assert_eq!(backend.config_for(7).gamma0, 50.0);
        assert_eq!(backend.config_for(8).gamma0, 0.0);
    }
}
