//! Trial execution: backend abstraction, retry policy, rate limiting, and an
//! append-only result store keyed by trial id for idempotent resume.

pub mod http;
pub mod messages;
pub mod sim;

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Scenario};
use crate::factors::FactorTest;
use crate::plan::TrialSpec;

pub use messages::{build_messages, MessageSequence, SourceEntry, ToolCall, SYSTEM_PROMPT};
pub use sim::{
    simulate_answer, FactorEffects, RandomEffectsCache, SimConfig, SimConfigError,
    SimulatorBackend,
};

/// Raw result of one executed trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTrialResult {
    pub trial_id: String,
    pub answer_text: String,
    pub attempts: u32,
    pub latency_ms: u64,
    pub backend_meta: String,
}

/// Everything a backend may need for one trial. HTTP backends read only the
/// messages; the simulator also needs the spec and scenario identities.
pub struct TrialContext<'a> {
    pub spec: &'a TrialSpec,
    pub scenario: &'a Scenario,
    pub factor: &'a FactorTest,
    pub messages: &'a MessageSequence,
}

#[derive(Debug, Error)]
pub enum BackendError {
    /// Transport problems, 5xx, and rate limiting: worth retrying.
    #[error("transient backend error: {0}")]
    Transient(String),
    /// Authentication failures: fail fast, never retry.
    #[error("backend auth failure: {0}")]
    Auth(String),
    /// Anything else that retrying cannot fix.
    #[error("backend error: {0}")]
    Fatal(String),
}

impl BackendError {
    pub fn retryable(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

/// Successful backend response.
#[derive(Debug, Clone)]
pub struct BackendReply {
    pub text: String,
    pub meta: String,
}

/// A citation-answering backend.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn run(&self, ctx: &TrialContext<'_>) -> Result<BackendReply, BackendError>;
}

/// Decorator applying a per-backend rate limit.
pub struct RateLimited<B> {
    inner: B,
    limiter: RateLimiter,
}

impl<B: Backend> RateLimited<B> {
    pub fn new(inner: B, limiter: RateLimiter) -> Self {
        Self { inner, limiter }
    }
}

impl<B: Backend> Backend for RateLimited<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn run(&self, ctx: &TrialContext<'_>) -> Result<BackendReply, BackendError> {
        self.limiter.acquire();
        self.inner.run(ctx)
    }
}

/// Exponential backoff with jitter, applied only to transient errors.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    /// Fraction of the delay randomized away (0 disables jitter).
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
            jitter: 0.5,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based count of failures so far).
    fn delay(&self, attempt: u32) -> Duration {
        let exp = self.base_delay.as_millis() as f64 * 2f64.powi(attempt as i32 - 1);
        let capped = exp.min(self.max_delay.as_millis() as f64);
        let jittered = if self.jitter > 0.0 {
            let cut: f64 = rand::rng().random::<f64>() * self.jitter;
            capped * (1.0 - cut)
        } else {
            capped
        };
        Duration::from_millis(jittered as u64)
    }
}

/// Minimum-interval rate limiter shared across worker threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_second(requests: f64) -> Option<Self> {
        if requests <= 0.0 {
            return None;
        }
        Some(Self {
            interval: Duration::from_secs_f64(1.0 / requests),
            last: Mutex::new(None),
        })
    }

    pub fn acquire(&self) {
        let wait = {
            let mut last = self.last.lock().expect("rate limiter lock");
            let now = Instant::now();
            let wait = match *last {
                Some(prev) => {
                    let next_ok = prev + self.interval;
                    next_ok.saturating_duration_since(now)
                }
                None => Duration::ZERO,
            };
            *last = Some(now + wait);
            wait
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("unknown scenario {0:?} referenced by plan")]
    UnknownScenario(String),
    #[error("paraphrase index {index} out of range (scenario has {available} queries)")]
    ParaphraseOutOfRange { index: u8, available: usize },
    #[error("unknown factor for scenario {0:?}")]
    UnknownFactor(String),
    #[error("retries exhausted after {attempts} attempts: {last_error}")]
    RetriesExhausted { attempts: u32, last_error: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Jsonl(#[from] crate::jsonl::JsonlError),
}

/// Append-only trial log keyed by trial id. Reopening a log resumes where
/// the previous run stopped; completed trials are served from memory without
/// touching the backend again.
pub struct TrialLog {
    completed: Mutex<HashMap<String, RawTrialResult>>,
    writer: Mutex<crate::jsonl::AppendWriter>,
}

impl TrialLog {
    pub fn open(path: &Path) -> Result<Self, RunError> {
        let existing: Vec<RawTrialResult> = if path.exists() {
            crate::jsonl::read_all(path)?
        } else {
            Vec::new()
        };
        let completed = existing
            .into_iter()
            .map(|r| (r.trial_id.clone(), r))
            .collect();
        Ok(Self {
            completed: Mutex::new(completed),
            writer: Mutex::new(crate::jsonl::AppendWriter::open(path)?),
        })
    }

    pub fn get(&self, trial_id: &str) -> Option<RawTrialResult> {
        self.completed.lock().expect("log lock").get(trial_id).cloned()
    }

    pub fn len(&self) -> usize {
        self.completed.lock().expect("log lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Record a result exactly once. A concurrent duplicate is dropped and
    /// the stored record returned instead.
    pub fn record(&self, result: RawTrialResult) -> Result<RawTrialResult, RunError> {
        let mut completed = self.completed.lock().expect("log lock");
        if let Some(existing) = completed.get(&result.trial_id) {
            return Ok(existing.clone());
        }
        self.writer.lock().expect("writer lock").append(&result)?;
        completed.insert(result.trial_id.clone(), result.clone());
        Ok(result)
    }
}

/// Execute one trial with retries, serving completed trials from the log.
pub fn run_trial(
    spec: &TrialSpec,
    corpus: &Corpus,
    backend: &dyn Backend,
    retry: &RetryPolicy,
    limiter: Option<&RateLimiter>,
    log: &TrialLog,
) -> Result<RawTrialResult, RunError> {
    if let Some(stored) = log.get(&spec.trial_id) {
        return Ok(stored);
    }
    let scenario = corpus
        .get(&spec.scenario_id)
        .ok_or_else(|| RunError::UnknownScenario(spec.scenario_id.clone()))?;
    let factor = crate::factors::by_id(scenario.factor_id)
        .ok_or_else(|| RunError::UnknownFactor(spec.scenario_id.clone()))?;
    let messages = build_messages(spec, corpus)?;
    let ctx = TrialContext {
        spec,
        scenario,
        factor,
        messages: &messages,
    };

    let started = Instant::now();
    let mut attempts = 0;
    loop {
        attempts += 1;
        if let Some(limiter) = limiter {
            limiter.acquire();
        }
        match backend.run(&ctx) {
            Ok(reply) => {
                let result = RawTrialResult {
                    trial_id: spec.trial_id.clone(),
                    answer_text: reply.text,
                    attempts,
                    latency_ms: started.elapsed().as_millis() as u64,
                    backend_meta: reply.meta,
                };
                return log.record(result);
            }
            Err(err) if err.retryable() && attempts < retry.max_attempts => {
                std::thread::sleep(retry.delay(attempts));
            }
            Err(err @ BackendError::Auth(_)) => return Err(err.into()),
            Err(err) if attempts >= retry.max_attempts => {
                return Err(RunError::RetriesExhausted {
                    attempts,
                    last_error: err.to_string(),
                })
            }
            Err(err) => return Err(err.into()),
        }
    }
}

/// Outcome of a plan execution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub executed: usize,
    /// Trials served from the log without a backend call.
    pub reused: usize,
    /// Failed trials (id, error); they stay absent from the log and are
    /// picked up by the next run.
    pub failed: Vec<(String, String)>,
}

/// Execute every trial of a plan whose model id matches one of the given
/// backends, with bounded parallelism. The log guarantees exactly one record
/// per trial id across crashes and reruns.
pub fn run_plan(
    trials: &[TrialSpec],
    corpus: &Corpus,
    backends: &[&dyn Backend],
    retry: &RetryPolicy,
    limiter: Option<&RateLimiter>,
    parallelism: usize,
    log: &TrialLog,
) -> Result<RunReport, RunError> {
    let by_id: HashMap<&str, &dyn Backend> = backends.iter().map(|b| (b.id(), *b)).collect();
    for trial in trials {
        if !by_id.contains_key(trial.model_id.as_str()) {
            return Err(RunError::Backend(BackendError::Fatal(format!(
                "no backend configured for model {:?}",
                trial.model_id
            ))));
        }
    }

    let next = AtomicUsize::new(0);
    let executed = AtomicUsize::new(0);
    let reused = AtomicUsize::new(0);
    let failed: Mutex<Vec<(String, String)>> = Mutex::new(Vec::new());
    let workers = parallelism.max(1).min(trials.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= trials.len() {
                    break;
                }
                let spec = &trials[idx];
                let backend = by_id[spec.model_id.as_str()];
                let was_stored = log.get(&spec.trial_id).is_some();
                match run_trial(spec, corpus, backend, retry, limiter, log) {
                    Ok(_) if was_stored => {
                        reused.fetch_add(1, Ordering::Relaxed);
                    }
                    Ok(_) => {
                        executed.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(err) => {
                        failed
                            .lock()
                            .expect("failure list lock")
                            .push((spec.trial_id.clone(), err.to_string()));
                    }
                }
            });
        }
    });

    let mut failed = failed.into_inner().expect("failure list");
    failed.sort();
    Ok(RunReport {
        executed: executed.into_inner(),
        reused: reused.into_inner(),
        failed,
    })
}
