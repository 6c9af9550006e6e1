//! Controlled testbed for competitive citation preference in answer engines.
//!
//! The pipeline plans paired two-source trials over a matched-pair corpus,
//! executes them against a backend (live chat API or seeded simulator),
//! extracts which injected source is cited first, fits logistic mixed-effects
//! models to estimate per-factor odds ratios, renders effect-size reports,
//! and audits page content against the consensus factor checklist.
//!
//! The numeric layers ([`optim`], [`fit`], [`stats`]) are generic over the
//! scalar type via [`num::Real`]; the pipeline itself runs on [`Scalar`].

pub mod audit;
pub mod corpus;
pub mod extract;
pub mod factors;
pub mod fit;
pub mod jsonl;
pub mod linalg;
pub mod num;
pub mod optim;
pub mod plan;
pub mod report;
pub mod run;
pub mod stats;
pub mod synth;
pub mod util;

#[cfg(feature = "testkit")]
pub mod testkit;

/// Scalar type used by the CLI pipeline and all file formats.
pub type Scalar = f64;

/// Fit result at pipeline precision.
pub type FitResult = fit::FitResult<Scalar>;

/// Analysis configuration at pipeline precision.
pub type AnalysisConfig = fit::AnalysisConfig<Scalar>;

/// Optimizer options at pipeline precision.
pub type TrustRegionOptions = optim::TrustRegionOptions<Scalar>;
