//! Experiment configuration: a TOML file describing the corpus source, the
//! backends, and run parameters. Secrets never live in the config; auth
//! tokens are read from the environment variables the config names.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use citepref::run::http::{HttpBackend, HttpBackendConfig};
use citepref::run::{Backend, FactorEffects, RateLimited, SimConfig, SimulatorBackend};
use citepref::util;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: u32,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub output_dir: PathBuf,
    pub corpus: CorpusSource,
    pub backends: Vec<BackendDef>,
}

fn default_reps() -> u32 {
    5
}
fn default_parallelism() -> usize {
    2
}
fn default_alpha() -> f64 {
    0.05
}

/// Where the corpus comes from: a file, or deterministic synthesis.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<SynthSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub per_factor: usize,
    /// Defaults to the global seed.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Defaults to all 18 factors.
    #[serde(default)]
    pub factors: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendDef {
    pub id: String,
    pub kind: BackendKind,
    #[serde(default)]
    pub simulator: Option<SimBackendDef>,
    #[serde(default)]
    pub http: Option<HttpBackendDef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Simulator,
    Http,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBackendDef {
    #[serde(default)]
    pub gamma0: f64,
    #[serde(default)]
    pub gamma1: f64,
    #[serde(default)]
    pub sigma_s: f64,
    #[serde(default)]
    pub sigma_so: f64,
    #[serde(default = "default_no_url_rate")]
    pub no_url_rate: f64,
    #[serde(default = "default_foreign_url_rate")]
    pub foreign_url_rate: f64,
    #[serde(default = "default_multi_url_rate")]
    pub multi_url_rate: f64,
    /// Defaults to a value derived from the global seed and backend id.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub factor_effects: Vec<FactorEffectDef>,
}

fn default_no_url_rate() -> f64 {
    SimConfig::default().no_url_rate
}
fn default_foreign_url_rate() -> f64 {
    SimConfig::default().foreign_url_rate
}
fn default_multi_url_rate() -> f64 {
    SimConfig::default().multi_url_rate
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorEffectDef {
    pub factor_id: u8,
    pub gamma0: f64,
    #[serde(default)]
    pub gamma1: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct HttpBackendDef {
    #[serde(flatten)]
    pub config: HttpBackendConfig,
    #[serde(default)]
    pub requests_per_second: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.reps == 0 {
            return Err(CliError::Config("reps must be >= 1".into()));
        }
        if self.parallelism == 0 {
            return Err(CliError::Config("parallelism must be >= 1".into()));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(CliError::Config("alpha must lie in (0, 1)".into()));
        }
        if self.backends.is_empty() {
            return Err(CliError::Config("at least one backend is required".into()));
        }
        let mut ids = HashSet::new();
        for backend in &self.backends {
            if !ids.insert(backend.id.as_str()) {
                return Err(CliError::Config(format!(
                    "duplicate backend id {:?}",
                    backend.id
                )));
            }
            match backend.kind {
                BackendKind::Simulator if backend.simulator.is_none() => {
                    return Err(CliError::Config(format!(
                        "backend {:?} is kind = \"simulator\" but has no [backends.simulator] table",
                        backend.id
                    )));
                }
                BackendKind::Http if backend.http.is_none() => {
                    return Err(CliError::Config(format!(
                        "backend {:?} is kind = \"http\" but has no [backends.http] table",
                        backend.id
                    )));
                }
                _ => {}
            }
            if let Some(sim) = &backend.simulator {
                for effect in &sim.factor_effects {
                    if citepref::factors::by_id(effect.factor_id).is_none() {
                        return Err(CliError::Config(format!(
                            "backend {:?} overrides unknown factor_id {}",
                            backend.id, effect.factor_id
                        )));
                    }
                }
            }
        }
        match (&self.corpus.path, &self.corpus.synth) {
            (None, None) => Err(CliError::Config(
                "corpus needs either path or [corpus.synth]".into(),
            )),
            (Some(_), Some(_)) => Err(CliError::Config(
                "corpus path and [corpus.synth] are mutually exclusive".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn model_ids(&self) -> Vec<String> {
        self.backends.iter().map(|b| b.id.clone()).collect()
    }

    /// Instantiate every configured backend. Simulator seeds default to a
    /// value derived from the global seed and the backend id, so two
    /// simulator backends behave like distinct models.
    pub fn build_backends(&self) -> Result<Vec<Box<dyn Backend>>, CliError> {
        let mut backends: Vec<Box<dyn Backend>> = Vec::new();
        for def in &self.backends {
            match def.kind {
                BackendKind::Simulator => {
                    let sim = def.simulator.as_ref().expect("validated");
                    let seed = sim.seed.unwrap_or_else(|| {
                        let digest = util::stable_digest(&[
                            "backend-seed",
                            &self.seed.to_string(),
                            &def.id,
                        ]);
                        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
                    });
                    let config = SimConfig {
                        gamma0: sim.gamma0,
                        gamma1: sim.gamma1,
                        sigma_s: sim.sigma_s,
                        sigma_so: sim.sigma_so,
                        no_url_rate: sim.no_url_rate,
                        foreign_url_rate: sim.foreign_url_rate,
                        multi_url_rate: sim.multi_url_rate,
                        seed,
                    };
                    let effects: HashMap<u8, FactorEffects> = sim
                        .factor_effects
                        .iter()
                        .map(|e| {
                            (
                                e.factor_id,
                                FactorEffects {
                                    gamma0: e.gamma0,
                                    gamma1: e.gamma1,
                                },
                            )
                        })
                        .collect();
                    let backend = SimulatorBackend::new(def.id.clone(), config, effects)
                        .map_err(|e| CliError::Config(format!("backend {:?}: {e}", def.id)))?;
                    backends.push(Box::new(backend));
                }
                BackendKind::Http => {
                    let http = def.http.as_ref().expect("validated");
                    let backend = HttpBackend::new(def.id.clone(), http.config.clone())
                        .map_err(|e| CliError::Backend(format!("backend {:?}: {e}", def.id)))?;
                    match http
                        .requests_per_second
                        .and_then(citepref::run::RateLimiter::per_second)
                    {
                        Some(limiter) => {
                            backends.push(Box::new(RateLimited::new(backend, limiter)))
                        }
                        None => backends.push(Box::new(backend)),
                    }
                }
            }
        }
        Ok(backends)
    }
}

/// Brand profile file for the audit subcommand.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrandFile {
    #[serde(default)]
    pub names: Vec<String>,
    #[serde(default)]
    pub domains: Vec<String>,
}

impl BrandFile {
    pub fn load(path: &Path) -> Result<citepref::audit::BrandProfile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read brand file {}: {e}", path.display())))?;
        let parsed: BrandFile = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(citepref::audit::BrandProfile {
            names: parsed.names,
            domains: parsed.domains,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> &'static str {
        r#"
seed = 42
output_dir = "out"

[corpus.synth]
per_factor = 2

[[backends]]
id = "sim-a"
kind = "simulator"
[backends.simulator]
gamma0 = 1.0
"#
    }

    #[test]
    fn parses_minimal_config_with_defaults() {
        let config: RunConfig = toml::from_str(minimal_toml()).unwrap();
        config.validate().unwrap();
        assert_eq!(config.reps, 5);
        assert_eq!(config.parallelism, 2);
        assert_eq!(config.alpha, 0.05);
        assert_eq!(config.model_ids(), vec!["sim-a"]);
        let backends = config.build_backends().unwrap();
        assert_eq!(backends.len(), 1);
    }

    #[test]
    fn rejects_inconsistent_backend_sections() {
        let bad = r#"
seed = 1
output_dir = "out"
[corpus.synth]
per_factor = 1
[[backends]]
id = "x"
kind = "http"
"#;
        let config: RunConfig = toml::from_str(bad).unwrap();
        assert!(matches!(config.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn rejects_missing_and_double_corpus_sources() {
        let none = r#"
seed = 1
output_dir = "out"
[corpus]
[[backends]]
id = "x"
kind = "simulator"
[backends.simulator]
"#;
        let config: RunConfig = toml::from_str(none).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn simulator_seeds_differ_per_backend_id() {
        let two = r#"
seed = 7
output_dir = "out"
[corpus.synth]
per_factor = 1
[[backends]]
id = "sim-a"
kind = "simulator"
[backends.simulator]
[[backends]]
id = "sim-b"
kind = "simulator"
[backends.simulator]
"#;
        let config: RunConfig = toml::from_str(two).unwrap();
        config.validate().unwrap();
        // Derived seeds are stable and distinct; reflected indirectly by the
        // digest inputs differing only in backend id.
        let a = util::stable_digest(&["backend-seed", "7", "sim-a"]);
        let b = util::stable_digest(&["backend-seed", "7", "sim-b"]);
        assert_ne!(a, b);
    }
}
