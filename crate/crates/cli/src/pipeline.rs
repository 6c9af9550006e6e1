//! Stage orchestration shared by the `run` and `pipeline` subcommands.
//!
//! Stage outputs are files in the configured output directory, each in the
//! format the next stage consumes:
//!   corpus.jsonl -> plan.jsonl -> trials.jsonl -> outcomes.jsonl
//!   -> fits.jsonl -> report.txt / report.json
//!
//! All derived artifacts (outcomes, fits, reports) are deterministic given
//! the config and seed; the trial log is append-only and carries wall-clock
//! latencies, so it is the one file that may differ between reruns.

use std::path::{Path, PathBuf};

use citepref::corpus::{load_corpus, save_corpus, Corpus};
use citepref::extract::{extract_outcome, url_stats, Outcome};
use citepref::fit::{fit_all, prepare_groups, AnalysisConfig, FitRecord};
use citepref::plan::{build_plan, save_plan, TrialPlan, TrialSpec};
use citepref::report::{render_report, Report, ReportConfig};
use citepref::run::{run_plan, RawTrialResult, RetryPolicy, RunReport, TrialLog};
use citepref::synth::{synth_corpus, SynthConfig};

use crate::config::RunConfig;
use crate::CliError;

pub struct StagePaths {
    pub corpus: PathBuf,
    pub plan: PathBuf,
    pub trials: PathBuf,
    pub outcomes: PathBuf,
    pub fits: PathBuf,
    pub report_text: PathBuf,
    pub report_json: PathBuf,
}

impl StagePaths {
    pub fn new(output_dir: &Path) -> Self {
        Self {
            corpus: output_dir.join("corpus.jsonl"),
            plan: output_dir.join("plan.jsonl"),
            trials: output_dir.join("trials.jsonl"),
            outcomes: output_dir.join("outcomes.jsonl"),
            fits: output_dir.join("fits.jsonl"),
            report_text: output_dir.join("report.txt"),
            report_json: output_dir.join("report.json"),
        }
    }
}

/// Load the corpus from the configured source, synthesizing (and saving the
/// synthesized file) when requested.
pub fn obtain_corpus(config: &RunConfig, paths: &StagePaths) -> Result<Corpus, CliError> {
    match (&config.corpus.path, &config.corpus.synth) {
        (Some(path), None) => {
            load_corpus(path).map_err(|e| CliError::Data(format!("corpus: {e}")))
        }
        (None, Some(spec)) => {
            let synth_config = match &spec.factors {
                Some(ids) => SynthConfig {
                    factor_ids: ids.clone(),
                    per_factor: spec.per_factor,
                    seed: spec.seed.unwrap_or(config.seed),
                },
                None => SynthConfig::all_factors(spec.per_factor, spec.seed.unwrap_or(config.seed)),
            };
            let corpus =
                synth_corpus(&synth_config).map_err(|e| CliError::Config(format!("synth: {e}")))?;
            save_corpus(&corpus, &paths.corpus)
                .map_err(|e| CliError::Io(format!("saving corpus: {e}")))?;
            Ok(corpus)
        }
        _ => unreachable!("validated config"),
    }
}

pub fn stage_plan(
    config: &RunConfig,
    corpus: &Corpus,
    paths: &StagePaths,
) -> Result<TrialPlan, CliError> {
    let plan = build_plan(corpus, &config.model_ids(), config.reps, config.seed)
        .map_err(|e| CliError::Data(format!("plan: {e}")))?;
    save_plan(&plan, &paths.plan).map_err(|e| CliError::Io(format!("saving plan: {e}")))?;
    Ok(plan)
}

pub fn stage_run(
    config: &RunConfig,
    corpus: &Corpus,
    trials: &[TrialSpec],
    paths: &StagePaths,
) -> Result<RunReport, CliError> {
    let backends = config.build_backends()?;
    let backend_refs: Vec<&dyn citepref::run::Backend> =
        backends.iter().map(|b| b.as_ref()).collect();
    let log = TrialLog::open(&paths.trials)
        .map_err(|e| CliError::Io(format!("trial log: {e}")))?;
    let report = run_plan(
        trials,
        corpus,
        &backend_refs,
        &RetryPolicy::default(),
        None,
        config.parallelism,
        &log,
    )
    .map_err(|e| CliError::Backend(format!("run: {e}")))?;
    Ok(report)
}

/// Extract outcomes for every logged trial, sorted by trial id so the output
/// does not depend on execution interleaving.
pub fn extract_outcomes(
    raws: &[RawTrialResult],
    trials: &[TrialSpec],
    corpus: &Corpus,
) -> Result<Vec<Outcome>, CliError> {
    let by_id: std::collections::HashMap<&str, &TrialSpec> =
        trials.iter().map(|t| (t.trial_id.as_str(), t)).collect();
    let mut outcomes = Vec::with_capacity(raws.len());
    for raw in raws {
        let spec = by_id.get(raw.trial_id.as_str()).ok_or_else(|| {
            CliError::Data(format!(
                "trial log entry {:?} is not in the plan",
                raw.trial_id
            ))
        })?;
        let scenario = corpus.get(&spec.scenario_id).ok_or_else(|| {
            CliError::Data(format!("plan references unknown scenario {:?}", spec.scenario_id))
        })?;
        outcomes.push(extract_outcome(raw, spec, scenario));
    }
    outcomes.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
    Ok(outcomes)
}

pub fn stage_extract(
    trials: &[TrialSpec],
    corpus: &Corpus,
    paths: &StagePaths,
) -> Result<Vec<Outcome>, CliError> {
    let raws: Vec<RawTrialResult> = citepref::jsonl::read_all(&paths.trials)
        .map_err(|e| CliError::Data(format!("trial log: {e}")))?;
    let outcomes = extract_outcomes(&raws, trials, corpus)?;
    citepref::jsonl::write_all(&paths.outcomes, &outcomes)
        .map_err(|e| CliError::Io(format!("saving outcomes: {e}")))?;
    Ok(outcomes)
}

pub fn stage_fit(
    config: &RunConfig,
    outcomes: &[Outcome],
    trials: &[TrialSpec],
    corpus: &Corpus,
    paths: &StagePaths,
) -> Result<Vec<FitRecord>, CliError> {
    let groups = prepare_groups(outcomes, trials, corpus)
        .map_err(|e| CliError::Data(format!("fit groups: {e}")))?;
    let analysis = AnalysisConfig {
        alpha: config.alpha,
        ..AnalysisConfig::default()
    };
    let records = fit_all(&groups, &analysis);
    citepref::jsonl::write_all(&paths.fits, &records)
        .map_err(|e| CliError::Io(format!("saving fits: {e}")))?;
    Ok(records)
}

pub fn stage_report(
    config: &RunConfig,
    records: &[FitRecord],
    paths: &StagePaths,
) -> Result<Report, CliError> {
    let report_config = ReportConfig {
        alpha: config.alpha,
        ..ReportConfig::default()
    };
    let report = render_report(records, &report_config)
        .map_err(|e| CliError::Analysis(format!("report: {e}")))?;
    std::fs::write(&paths.report_text, report.to_text())
        .map_err(|e| CliError::Io(format!("saving report: {e}")))?;
    std::fs::write(&paths.report_json, report.to_json())
        .map_err(|e| CliError::Io(format!("saving report: {e}")))?;
    Ok(report)
}

/// The full chain: corpus, plan, run, extract, fit, report.
pub fn run_pipeline(config: &RunConfig) -> Result<Report, CliError> {
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| CliError::Io(format!("output dir: {e}")))?;
    let paths = StagePaths::new(&config.output_dir);

    let corpus = obtain_corpus(config, &paths)?;
    println!("corpus: {} scenarios", corpus.len());

    let plan = stage_plan(config, &corpus, &paths)?;
    println!(
        "plan: {} trials across {} model(s), seed {}",
        plan.summary.total,
        plan.summary.per_model.len(),
        plan.seed
    );

    let run_report = stage_run(config, &corpus, &plan.trials, &paths)?;
    println!(
        "run: {} executed, {} reused, {} failed",
        run_report.executed,
        run_report.reused,
        run_report.failed.len()
    );
    for (trial_id, error) in run_report.failed.iter().take(5) {
        eprintln!("  failed {trial_id}: {error}");
    }

    let outcomes = stage_extract(&plan.trials, &corpus, &paths)?;
    if let Some(stats) = url_stats(&outcomes) {
        println!(
            "extract: {} outcomes ({:.1}% one URL, {:.1}% multi, {:.1}% none; {:.1}% excluded)",
            stats.total,
            stats.one_url * 100.0,
            stats.multi_url * 100.0,
            stats.no_url * 100.0,
            stats.excluded * 100.0
        );
    }

    let records = stage_fit(config, &outcomes, &plan.trials, &corpus, &paths)?;
    let fitted = records.iter().filter(|r| r.fit.is_some()).count();
    println!("fit: {fitted}/{} groups fitted", records.len());

    let report = stage_report(config, &records, &paths)?;
    println!("report: {}", paths.report_text.display());
    Ok(report)
}
