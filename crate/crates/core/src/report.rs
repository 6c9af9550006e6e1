//! Effect-size report rendering: one row per factor, one column per model,
//! with significance marking, convergence markers, the ">10k" capping
//! convention, and a cross-model consensus summary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::{FitFlags, FitRecord};

/// Effect-size bands over the direction-normalized odds-ratio magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectCategory {
    VeryStrong,
    Strong,
    Moderate,
    Weak,
    Negligible,
}

impl EffectCategory {
    pub fn label(self) -> &'static str {
        match self {
            EffectCategory::VeryStrong => "Very strong",
            EffectCategory::Strong => "Strong",
            EffectCategory::Moderate => "Moderate",
            EffectCategory::Weak => "Weak",
            EffectCategory::Negligible => "Negligible",
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("odds ratio must be positive, got {0}")]
    NonPositiveOddsRatio(f64),
    #[error("no fits to report")]
    Empty,
}

/// Classify an odds ratio by direction-normalized magnitude
/// `m = max(or, 1/or)`: Very strong above 100, Strong in (10, 100],
/// Moderate in (3, 10], Weak in (1.5, 3], Negligible otherwise. Boundary
/// values classify downward because the band bounds are strict.
pub fn classify_effect(odds_ratio: f64) -> Result<EffectCategory, ReportError> {
    if !(odds_ratio > 0.0) || !odds_ratio.is_finite() {
        return Err(ReportError::NonPositiveOddsRatio(odds_ratio));
    }
    let magnitude = odds_ratio.max(1.0 / odds_ratio);
    Ok(if magnitude > 100.0 {
        EffectCategory::VeryStrong
    } else if magnitude > 10.0 {
        EffectCategory::Strong
    } else if magnitude > 3.0 {
        EffectCategory::Moderate
    } else if magnitude > 1.5 {
        EffectCategory::Weak
    } else {
        EffectCategory::Negligible
    })
}

/// One rendered table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCell {
    pub factor_id: u8,
    pub model_id: String,
    /// Cap string when the separation flag is set, otherwise the odds ratio
    /// at three significant digits.
    pub display: String,
    pub significant: bool,
    pub category: Option<EffectCategory>,
    pub flags: FitFlags,
    pub odds_ratio: Option<f64>,
    pub p_value: Option<f64>,
}

/// Cross-model agreement tier for one factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Significant in every model with a very large effect in each.
    Gatekeeper,
    /// Significant in at least the consensus threshold of models.
    Differentiator,
    NoConsensus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusEntry {
    pub factor_id: u8,
    pub factor_name: String,
    pub n_models: usize,
    pub n_significant: usize,
    pub tier: Tier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSummary {
    /// Models needed for consensus: ceil(2/3 * n_models), which is 4 of 6.
    pub threshold: usize,
    pub entries: Vec<ConsensusEntry>,
    pub n_consensus: usize,
    pub n_factors: usize,
}

/// Report configuration.
#[derive(Debug, Clone)]
pub struct ReportConfig {
    pub alpha: f64,
    pub or_cap: f64,
    pub cap_display: String,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            or_cap: 10_000.0,
            cap_display: ">10k".to_string(),
        }
    }
}

/// A rendered report: cells plus optional consensus, and both text and JSON
/// serializations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub alpha: f64,
    pub models: Vec<String>,
    pub rows: Vec<ReportRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub consensus: Option<ConsensusSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub factor_id: u8,
    pub factor_name: String,
    pub contrast: String,
    pub cells: Vec<EffectCell>,
}

/// Format an odds ratio at three significant digits, with thousands
/// separators above 1,000 and at most two decimals below 1.
fn format_or(or: f64) -> String {
    if !or.is_finite() {
        return "inf".to_string();
    }
    if or >= 1000.0 {
        let rounded = round_sig(or, 3);
        return group_thousands(rounded.round() as i64);
    }
    let magnitude = or.abs().max(1e-300);
    let decimals = (2 - magnitude.log10().floor() as i32).clamp(0, 2);
    format!("{or:.*}", decimals as usize)
}

fn round_sig(v: f64, digits: i32) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(digits - 1 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}

fn group_thousands(v: i64) -> String {
    let raw = v.to_string();
    let mut out = String::new();
    let digits: Vec<char> = raw.chars().collect();
    for (i, c) in digits.iter().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(*c);
    }
    out
}

/// Render the effect-size report from fit records.
pub fn render_report(records: &[FitRecord], cfg: &ReportConfig) -> Result<Report, ReportError> {
    if records.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut models: Vec<String> = records.iter().map(|r| r.model_id.clone()).collect();
    models.sort();
    models.dedup();

    let mut by_factor: BTreeMap<u8, Vec<&FitRecord>> = BTreeMap::new();
    for record in records {
        by_factor.entry(record.factor_id).or_default().push(record);
    }

    let mut rows = Vec::new();
    for (&factor_id, group) in &by_factor {
        let first = group[0];
        let mut cells = Vec::new();
        for model in &models {
            let record = group.iter().find(|r| &r.model_id == model);
            let cell = match record {
                Some(record) => cell_for(record, model, cfg),
                None => EffectCell {
                    factor_id,
                    model_id: model.clone(),
                    display: "—".to_string(),
                    significant: false,
                    category: None,
                    flags: FitFlags::default(),
                    odds_ratio: None,
                    p_value: None,
                },
            };
            cells.push(cell);
        }
        rows.push(ReportRow {
            factor_id,
            factor_name: first.factor_name.clone(),
            contrast: first.contrast.clone(),
            cells,
        });
    }

    let consensus = if rows.len() >= 2 && models.len() >= 2 {
        Some(consensus_summary(&rows, models.len()))
    } else {
        None
    };

    Ok(Report {
        alpha: cfg.alpha,
        models,
        rows,
        consensus,
    })
}

fn cell_for(record: &FitRecord, model: &str, cfg: &ReportConfig) -> EffectCell {
    match &record.fit {
        Some(fit) => {
            let capped = fit.flags.separation || fit.odds_ratio > cfg.or_cap;
            let display = if capped {
                cfg.cap_display.clone()
            } else {
                format_or(fit.odds_ratio)
            };
            EffectCell {
                factor_id: record.factor_id,
                model_id: model.to_string(),
                display,
                significant: fit.p_value < cfg.alpha,
                category: classify_effect(fit.odds_ratio).ok(),
                flags: fit.flags,
                odds_ratio: Some(fit.odds_ratio),
                p_value: Some(fit.p_value),
            }
        }
        None => EffectCell {
            factor_id: record.factor_id,
            model_id: model.to_string(),
            display: "—".to_string(),
            significant: false,
            category: None,
            flags: FitFlags::default(),
            odds_ratio: None,
            p_value: None,
        },
    }
}

fn consensus_summary(rows: &[ReportRow], n_models: usize) -> ConsensusSummary {
    let threshold = (2 * n_models).div_ceil(3);
    let mut entries = Vec::new();
    let mut n_consensus = 0;
    for row in rows {
        let fitted: Vec<&EffectCell> =
            row.cells.iter().filter(|c| c.odds_ratio.is_some()).collect();
        let n_significant = fitted.iter().filter(|c| c.significant).count();
        let all_very_strong = !fitted.is_empty()
            && fitted.iter().all(|c| {
                c.significant
                    && c.odds_ratio
                        .map(|or| or.max(1.0 / or) > 100.0)
                        .unwrap_or(false)
            });
        let tier = if fitted.len() == n_models && all_very_strong {
            Tier::Gatekeeper
        } else if n_significant >= threshold {
            Tier::Differentiator
        } else {
            Tier::NoConsensus
        };
        if tier != Tier::NoConsensus {
            n_consensus += 1;
        }
        entries.push(ConsensusEntry {
            factor_id: row.factor_id,
            factor_name: row.factor_name.clone(),
            n_models: fitted.len(),
            n_significant,
            tier,
        });
    }
    ConsensusSummary {
        threshold,
        entries,
        n_consensus,
        n_factors: rows.len(),
    }
}

impl Report {
    /// Plain-text table (markdown flavored). Rendering is pure: identical
    /// fits produce byte-identical text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("| Factor (A vs B) |");
        for model in &self.models {
            out.push_str(&format!(" {model} |"));
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in &self.models {
            out.push_str("---|");
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("| {} |", row.contrast));
            for cell in &row.cells {
                let mut text = cell.display.clone();
                if cell.flags.degenerate_hessian {
                    text.push('*');
                }
                if cell.flags.singular_fit {
                    text.push('†');
                }
                if cell.significant {
                    text = format!("**{text}**");
                }
                out.push_str(&format!(" {text} |"));
            }
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&format!(
            "Bold = statistically significant (p < {}). OR > 1 favors variant A.\n",
            self.alpha
        ));
        out.push_str("Convergence warnings: *degenerate Hessian, †singular fit.\n");
        out.push_str(
            "Effect sizes: Very strong (OR > 100), Strong (10, 100], Moderate (3, 10], \
             Weak (1.5, 3], Negligible otherwise.\n",
        );
        if let Some(consensus) = &self.consensus {
            out.push('\n');
            let percent =
                (consensus.n_consensus as f64 / consensus.n_factors as f64 * 100.0).round();
            out.push_str(&format!(
                "Consensus: {}/{} factors ({percent:.0}%) significant in >= {} of {} models.\n",
                consensus.n_consensus,
                consensus.n_factors,
                consensus.threshold,
                self.models.len()
            ));
            for entry in &consensus.entries {
                let tier = match entry.tier {
                    Tier::Gatekeeper => "gatekeeper",
                    Tier::Differentiator => "differentiator",
                    Tier::NoConsensus => "no consensus",
                };
                out.push_str(&format!(
                    "  {:>2}. {} — significant in {}/{} — {}\n",
                    entry.factor_id, entry.factor_name, entry.n_significant, entry.n_models, tier
                ));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::FitResult;

    fn record(factor_id: u8, model: &str, or: f64, p: f64, flags: FitFlags) -> FitRecord {
        let factor = crate::factors::by_id(factor_id).unwrap();
        FitRecord {
            factor_id,
            factor_name: factor.name.to_string(),
            contrast: factor.contrast.to_string(),
            model_id: model.to_string(),
            n_used: 100,
            n_excluded: 3,
            fit: Some(FitResult {
                beta0: or.ln(),
                beta1: Some(0.0),
                se0: Some(0.1),
                se1: Some(0.1),
                sigma_s: 0.2,
                sigma_so: 0.1,
                loglik: -50.0,
                p_value: p,
                odds_ratio: or,
                flags,
                n_obs: 100,
                n_scenarios: 10,
                evals: 200,
            }),
            skipped: None,
        }
    }

    #[test]
    fn classifies_boundary_and_reference_values() {
        use EffectCategory::*;
        // Boundary values classify downward (strict upper bounds).
        assert_eq!(classify_effect(100.0).unwrap(), Strong);
        assert_eq!(classify_effect(10.0).unwrap(), Moderate);
        assert_eq!(classify_effect(3.0).unwrap(), Weak);
        assert_eq!(classify_effect(1.5).unwrap(), Negligible);
        // Reference values.
        assert_eq!(classify_effect(243.0).unwrap(), VeryStrong);
        assert_eq!(classify_effect(5.99).unwrap(), Moderate);
        assert_eq!(classify_effect(1.0).unwrap(), Negligible);
        assert_eq!(classify_effect(1.31).unwrap(), Negligible);
        // Direction normalization handles sub-1 odds ratios.
        assert_eq!(classify_effect(0.79).unwrap(), Negligible);
        assert_eq!(classify_effect(0.005).unwrap(), VeryStrong);
        assert!(classify_effect(0.0).is_err());
        assert!(classify_effect(-2.0).is_err());
    }

    #[test]
    fn classification_is_monotone_in_magnitude() {
        let rank = |c: EffectCategory| match c {
            EffectCategory::Negligible => 0,
            EffectCategory::Weak => 1,
            EffectCategory::Moderate => 2,
            EffectCategory::Strong => 3,
            EffectCategory::VeryStrong => 4,
        };
        let mut prev = 0;
        for or in [1.0, 1.4, 1.6, 2.9, 3.1, 9.9, 10.1, 99.0, 101.0, 9999.0] {
            let r = rank(classify_effect(or).unwrap());
            assert!(r >= prev, "not monotone at {or}");
            prev = r;
        }
    }

    #[test]
    fn formats_three_significant_digits() {
        assert_eq!(format_or(243.2), "243");
        assert_eq!(format_or(5.991), "5.99");
        assert_eq!(format_or(17.04), "17.0");
        assert_eq!(format_or(0.79), "0.79");
        assert_eq!(format_or(1.31), "1.31");
        assert_eq!(format_or(1484.0), "1,480");
        assert_eq!(format_or(2002.0), "2,000");
    }

    #[test]
    fn separation_cells_render_the_cap_string() {
        let flags = FitFlags {
            separation: true,
            ..FitFlags::default()
        };
        let records = vec![record(4, "m1", 162754.0, 1e-30, flags)];
        let report = render_report(&records, &ReportConfig::default()).unwrap();
        assert_eq!(report.rows[0].cells[0].display, ">10k");
        assert!(report.rows[0].cells[0].significant);
    }

    #[test]
    fn renders_rows_per_factor_and_marks_markers() {
        let mut flags = FitFlags::default();
        flags.degenerate_hessian = true;
        let records = vec![
            record(1, "m1", 243.0, 0.001, FitFlags::default()),
            record(1, "m2", 0.9, 0.7, flags),
            record(2, "m1", 5.99, 0.01, FitFlags::default()),
            record(2, "m2", 1.31, 0.4, FitFlags::default()),
        ];
        let report = render_report(&records, &ReportConfig::default()).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.models, vec!["m1", "m2"]);
        let text = report.to_text();
        assert!(text.contains("**243**"));
        assert!(text.contains("0.90*"));
        assert!(text.contains("On-Topic vs Off-Topic"));
        // Identical input renders byte-identically.
        assert_eq!(text, render_report(&records, &ReportConfig::default()).unwrap().to_text());
    }

    #[test]
    fn single_cell_report_has_no_consensus_section() {
        let records = vec![record(1, "m1", 2.0, 0.01, FitFlags::default())];
        let report = render_report(&records, &ReportConfig::default()).unwrap();
        assert!(report.consensus.is_none());
        assert!(!report.to_text().contains("Consensus"));
    }

    #[test]
    fn consensus_counts_and_tiers() {
        // Factors 1..=11 significant in both models, 12..=18 in neither;
        // factor 1 very strong everywhere (gatekeeper).
        let mut records = Vec::new();
        for id in 1..=18u8 {
            for model in ["m1", "m2"] {
                let (or, p) = if id == 1 {
                    (500.0, 1e-10)
                } else if id <= 11 {
                    (4.0, 0.01)
                } else {
                    (1.1, 0.6)
                };
                records.push(record(id, model, or, p, FitFlags::default()));
            }
        }
        let report = render_report(&records, &ReportConfig::default()).unwrap();
        let consensus = report.consensus.clone().unwrap();
        assert_eq!(consensus.threshold, 2); // ceil(2/3 * 2)
        assert_eq!(consensus.n_factors, 18);
        assert_eq!(consensus.n_consensus, 11);
        assert_eq!(consensus.entries[0].tier, Tier::Gatekeeper);
        assert_eq!(consensus.entries[1].tier, Tier::Differentiator);
        assert_eq!(consensus.entries[17].tier, Tier::NoConsensus);
        let text = report.to_text();
        assert!(text.contains("11/18 factors (61%)"), "text: {text}");
    }

    #[test]
    fn skipped_groups_render_placeholder_cells() {
        let mut rec = record(1, "m1", 2.0, 0.01, FitFlags::default());
        rec.fit = None;
        rec.skipped = Some("no retained trials".into());
        let report = render_report(&[rec], &ReportConfig::default()).unwrap();
        assert_eq!(report.rows[0].cells[0].display, "—");
        assert!(!report.rows[0].cells[0].significant);
    }

    #[test]
    fn empty_report_is_an_error() {
        assert!(matches!(
            render_report(&[], &ReportConfig::default()),
            Err(ReportError::Empty)
        ));
    }
}
