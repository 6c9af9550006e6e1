//! First-URL citation extraction.
//!
//! An answer's outcome is decided entirely by the URLs it contains: the
//! first URL in reading order either matches variant A, matches variant B,
//! or excludes the trial (no URL at all, or a first URL matching neither).

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Scenario;
use crate::plan::TrialSpec;
use crate::run::RawTrialResult;

fn url_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r#"https?://[^\s<>"'\)\]\}]+"#).expect("valid regex"))
}

/// Find absolute http(s) URLs in reading order, with trailing sentence
/// punctuation trimmed. Matches that fail to parse as URLs are dropped.
pub fn find_urls(text: &str) -> Vec<String> {
    let mut urls = Vec::new();
    for matched in url_pattern().find_iter(text) {
        let mut candidate = matched.as_str();
        while let Some(last) = candidate.chars().last() {
            if matches!(last, '.' | ',' | ';' | ':' | '!' | '?') {
                candidate = &candidate[..candidate.len() - last.len_utf8()];
            } else {
                break;
            }
        }
        if url::Url::parse(candidate).is_ok() {
            urls.push(candidate.to_string());
        }
    }
    urls
}

/// Canonical matching key for a URL.
///
/// Deliberately minimal: scheme-insensitive (http and https collapse), host
/// lowercased, at most one trailing slash stripped from the path, query
/// string significant, fragment dropped. The key is rendered with a fixed
/// `https` scheme so canonicalization is idempotent. Returns `None` for
/// strings that do not parse as http(s) URLs.
pub fn canonicalize(raw: &str) -> Option<String> {
    let parsed = url::Url::parse(raw).ok()?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return None;
    }
    let host = parsed.host_str()?.to_lowercase();
    let port = match parsed.port() {
        Some(p) => format!(":{p}"),
        None => String::new(),
    };
    let path = parsed.path().trim_end_matches('/');
    let query = match parsed.query() {
        Some(q) => format!("?{q}"),
        None => String::new(),
    };
    Some(format!("https://{host}{port}{path}{query}"))
}

/// Which source the first URL resolved to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CitationResult {
    AFirst,
    BFirst,
    Excluded,
}

/// Why a trial was dropped from the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NoUrl,
    ForeignFirstUrl,
}

/// Binary citation outcome for one trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub trial_id: String,
    pub result: CitationResult,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exclusion_reason: Option<ExclusionReason>,
    /// Distinct canonical URLs found in the answer.
    pub url_count: usize,
}

/// Classify one raw answer against its scenario's two variant URLs.
pub fn extract_outcome(raw: &RawTrialResult, spec: &TrialSpec, scenario: &Scenario) -> Outcome {
    debug_assert_eq!(raw.trial_id, spec.trial_id);
    let canon_a = canonicalize(&scenario.variant_a.url);
    let canon_b = canonicalize(&scenario.variant_b.url);

    let found = find_urls(&raw.answer_text);
    let canon_found: Vec<String> = found.iter().filter_map(|u| canonicalize(u)).collect();
    let distinct: BTreeSet<&str> = canon_found.iter().map(String::as_str).collect();
    let url_count = distinct.len();

    let (result, exclusion_reason) = match canon_found.first() {
        None => (CitationResult::Excluded, Some(ExclusionReason::NoUrl)),
        Some(first) => {
            if Some(first) == canon_a.as_ref() {
                (CitationResult::AFirst, None)
            } else if Some(first) == canon_b.as_ref() {
                (CitationResult::BFirst, None)
            } else {
                (CitationResult::Excluded, Some(ExclusionReason::ForeignFirstUrl))
            }
        }
    };

    Outcome {
        trial_id: raw.trial_id.clone(),
        result,
        exclusion_reason,
        url_count,
    }
}

/// URL-count mix over a set of outcomes. The three shares partition all
/// answers; the exclusion share is reported separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrlCountStats {
    pub total: usize,
    /// Share of answers with exactly one distinct URL.
    pub one_url: f64,
    /// Share of answers with two or more distinct URLs.
    pub multi_url: f64,
    /// Share of answers with no URL.
    pub no_url: f64,
    /// Share of trials excluded from the regression (no URL or foreign first).
    pub excluded: f64,
}

/// Compute URL-count shares; `None` for an empty input.
pub fn url_stats(outcomes: &[Outcome]) -> Option<UrlCountStats> {
    if outcomes.is_empty() {
        return None;
    }
    let total = outcomes.len();
    let n = total as f64;
    let one = outcomes.iter().filter(|o| o.url_count == 1).count();
    let multi = outcomes.iter().filter(|o| o.url_count >= 2).count();
    let none = outcomes.iter().filter(|o| o.url_count == 0).count();
    let excluded = outcomes
        .iter()
        .filter(|o| o.result == CitationResult::Excluded)
        .count();
    Some(UrlCountStats {
        total,
        one_url: one as f64 / n,
        multi_url: multi as f64 / n,
        no_url: none as f64 / n,
        excluded: excluded as f64 / n,
    })
}
