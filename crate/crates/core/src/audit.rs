//! Content audit workflow: route a brand's situation from an answer-engine
//! response (top recommendation / cited but not first / absent), and when
//! content is the bottleneck, score the page against the consensus-factor
//! checklist and rank the weaknesses by effect-size priors.
//!
//! Every detector is a transparent deterministic rule over the page text;
//! no model calls are made.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract;
use crate::factors::{self, AuditCategory};

/// The brand under audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrandProfile {
    /// Brand or product names and aliases.
    #[serde(default)]
    pub names: Vec<String>,
    /// Owned domains (e.g. `brand.example`); subdomains match.
    #[serde(default)]
    pub domains: Vec<String>,
}

impl BrandProfile {
    pub fn validate(&self) -> Result<(), AuditError> {
        if self.names.iter().all(|n| n.trim().is_empty())
            && self.domains.iter().all(|d| d.trim().is_empty())
        {
            return Err(AuditError::EmptyBrand);
        }
        Ok(())
    }
}

/// Page under audit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageContent {
    pub text: String,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
}

/// Detector thresholds and priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    /// Reference "today" for freshness checks; explicit so audits are pure.
    pub reference_date: NaiveDate,
    /// Content older than this many days (or undated) fires the freshness
    /// detector.
    pub freshness_window_days: i64,
    /// Hedge lexicon, matched on word boundaries, case-insensitive.
    pub hedge_terms: Vec<String>,
    /// Hedge density per 100 words above which the hedging detector fires.
    pub hedge_density_threshold: f64,
    /// Query-term coverage below this is a topic mismatch.
    pub coverage_mismatch_threshold: f64,
    /// Coverage below this (but above the mismatch bound) is a keyword gap.
    pub coverage_gap_threshold: f64,
    /// Fewer distinct spec-like details than this fires the specs detector.
    pub min_spec_details: usize,
    /// Fewer words than this fires the comprehensiveness detector.
    pub min_words: usize,
    /// Per-factor priority weights; defaults come from the shipped
    /// effect-size table, and fitted odds ratios can override them.
    pub weights: BTreeMap<u8, f64>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        let weights = factors::CONSENSUS_FACTOR_IDS
            .iter()
            .map(|&id| (id, factors::default_priority_weight(id).unwrap()))
            .collect();
        Self {
            reference_date: NaiveDate::from_ymd_opt(2026, 1, 1).unwrap(),
            freshness_window_days: 548, // 18 months
            hedge_terms: [
                "might",
                "possibly",
                "could",
                "perhaps",
                "maybe",
                "seems",
                "seemingly",
                "arguably",
                "supposedly",
                "presumably",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            hedge_density_threshold: 1.0,
            coverage_mismatch_threshold: 0.2,
            coverage_gap_threshold: 0.7,
            min_spec_details: 3,
            min_words: 250,
            weights,
        }
    }
}

impl AuditConfig {
    /// Replace priority weights with fitted odds ratios where available,
    /// treating capped estimates as the cap value.
    pub fn with_fitted_weights(mut self, records: &[crate::fit::FitRecord], or_cap: f64) -> Self {
        let mut by_factor: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
        for record in records {
            if let Some(fit) = &record.fit {
                let or = if fit.flags.separation {
                    or_cap
                } else {
                    fit.odds_ratio.min(or_cap)
                };
                by_factor.entry(record.factor_id).or_default().push(or);
            }
        }
        for (factor_id, mut ors) in by_factor {
            if !factors::is_consensus_factor(factor_id) || ors.is_empty() {
                continue;
            }
            ors.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = if ors.len() % 2 == 1 {
                ors[ors.len() / 2]
            } else {
                (ors[ors.len() / 2 - 1] + ors[ors.len() / 2]) / 2.0
            };
            self.weights.insert(factor_id, median);
        }
        self
    }
}

/// Routing decision of the workflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Brand is already the top recommendation.
    BrandIsTop,
    /// Brand is cited but not first: content quality is the bottleneck.
    FixContent,
    /// Brand is absent from citations: retrieval is the bottleneck.
    ImproveSeo,
}

/// One firing detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub factor_id: u8,
    pub factor_name: String,
    pub category: AuditCategory,
    pub evidence: String,
    pub weight: f64,
}

/// Workflow outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub route: Route,
    pub cited: bool,
    /// Confidence in the top-recommendation call; low values mean the answer
    /// had no clear first entity.
    pub confidence: f64,
    pub weak_factors: Vec<Finding>,
    pub recommendations: Vec<String>,
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("answer text is empty")]
    EmptyAnswer,
    #[error("page text is empty")]
    EmptyPage,
    #[error("brand profile needs at least one name or domain")]
    EmptyBrand,
    #[error("factor {0} is not part of the consensus checklist")]
    NotConsensusFactor(u8),
}

fn regex(cache: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cache.get_or_init(|| Regex::new(pattern).expect("valid regex"))
}

fn currency_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    regex(
        &P,
        r"(?i)([$€£¥]\s?\d)|(\b\d+(\.\d{1,2})?\s?(usd|eur|gbp|dollars|euros|pounds)\b)",
    )
}

fn spec_detail_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    regex(
        &P,
        r"(?i)\b\d+(\.\d+)?(\s|-)?(pa|mah|gb|tb|mb|ghz|mhz|hz|kw|w|v|mm|cm|m|kg|g|lb|lbs|oz|in|inch|inches|px|mp|db|l|ml|sqft|cfm|bar|nits|ppi|hour|hours|hrs|minute|minutes|min|second|seconds|sec|day|days|month|months|%)\b",
    )
}

fn iso_date_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    regex(&P, r"\b((19|20)\d{2})-(\d{2})-(\d{2})\b")
}

fn month_date_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    regex(
        &P,
        r"(?i)\b(january|february|march|april|may|june|july|august|september|october|november|december)\.?\s+(\d{1,2},?\s+)?((19|20)\d{2})\b",
    )
}

fn marker_year_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    regex(
        &P,
        r"(?i)\b(updated|published|posted|reviewed|dated|copyright|©)\b[^.\n]{0,40}?\b((19|20)\d{2})\b",
    )
}

fn claim_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    regex(
        &P,
        r"(?i)\b(best|fastest|strongest|leading|exceptional|outstanding|unbeatable|guaranteed|proven|top-rated|#1)\b|\b\d+(\.\d+)?%",
    )
}

fn support_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    regex(
        &P,
        r"(?i)\b(tested|testing|certified|verified|measured|benchmark|study|studies|lab|laboratory|according to|award|independent)\b",
    )
}

fn comparison_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    regex(
        &P,
        r"(?i)\b(compared to|versus|vs\.?|alternatives?|unlike|than the|competitors?)\b",
    )
}

fn negation_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    regex(
        &P,
        r"(?i)\b(not|never|no longer|cannot|can't|doesn't|does not|won't|will not|isn't|is not)\b",
    )
}

const QUERY_STOPWORDS: [&str; 28] = [
    "the", "a", "an", "best", "good", "top", "for", "with", "what", "which", "should", "i",
    "buy", "is", "are", "to", "of", "in", "on", "that", "any", "recommendations", "need", "me",
    "my", "looking", "well", "do",
];

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_string())
        .collect()
}

fn content_query_terms(query: &str) -> Vec<String> {
    let mut terms: Vec<String> = words(query)
        .into_iter()
        .filter(|w| w.len() > 1 && !QUERY_STOPWORDS.contains(&w.as_str()))
        .collect();
    terms.dedup();
    terms
}

fn term_present(page_words: &[String], term: &str) -> bool {
    let singular = term.strip_suffix('s').unwrap_or(term);
    page_words
        .iter()
        .any(|w| w == term || w == singular || w.strip_suffix('s').unwrap_or(w) == singular)
}

fn snippet(text: &str, max: usize) -> String {
    let trimmed = text.trim();
    if trimmed.chars().count() <= max {
        trimmed.to_string()
    } else {
        let cut: String = trimmed.chars().take(max).collect();
        format!("{cut}…")
    }
}

/// Newest parseable date on the page, if any.
fn newest_date(text: &str) -> Option<NaiveDate> {
    let mut newest: Option<NaiveDate> = None;
    let mut push = |d: Option<NaiveDate>| {
        if let Some(d) = d {
            newest = Some(match newest {
                Some(prev) if prev >= d => prev,
                _ => d,
            });
        }
    };
    for cap in iso_date_pattern().captures_iter(text) {
        let year: i32 = cap[1].parse().unwrap_or(0);
        let month: u32 = cap[3].parse().unwrap_or(0);
        let day: u32 = cap[4].parse().unwrap_or(0);
        push(NaiveDate::from_ymd_opt(year, month, day));
    }
    for cap in month_date_pattern().captures_iter(text) {
        let month = match cap[1].to_lowercase().as_str() {
            "january" => 1,
            "february" => 2,
            "march" => 3,
            "april" => 4,
            "may" => 5,
            "june" => 6,
            "july" => 7,
            "august" => 8,
            "september" => 9,
            "october" => 10,
            "november" => 11,
            _ => 12,
        };
        let year: i32 = cap[3].parse().unwrap_or(0);
        push(NaiveDate::from_ymd_opt(year, month, 1));
    }
    for cap in marker_year_pattern().captures_iter(text) {
        let year: i32 = cap[2].parse().unwrap_or(0);
        push(NaiveDate::from_ymd_opt(year, 1, 1));
    }
    newest
}

/// Run one consensus-factor detector against the page. `Ok(None)` means the
/// detector did not fire. The position factor is assessed from the answer
/// during routing, never from the page, so it reports `None` here.
pub fn detect_factor(
    factor_id: u8,
    page: &PageContent,
    query: &str,
    cfg: &AuditConfig,
) -> Result<Option<Finding>, AuditError> {
    if !factors::is_consensus_factor(factor_id) {
        return Err(AuditError::NotConsensusFactor(factor_id));
    }
    let factor = factors::by_id(factor_id).expect("consensus factor exists");
    let category = factors::audit_category(factor_id).expect("consensus factor has a category");
    let weight = cfg
        .weights
        .get(&factor_id)
        .copied()
        .or_else(|| factors::default_priority_weight(factor_id))
        .unwrap_or(1.0);
    let make = |evidence: String| {
        Some(Finding {
            factor_id,
            factor_name: factor.name.to_string(),
            category,
            evidence,
            weight,
        })
    };
    let text = &page.text;
    let page_words = words(text);

    let finding = match factor_id {
        // Topic mismatch / keyword gap: query-term coverage.
        1 | 2 => {
            let terms = content_query_terms(query);
            if terms.is_empty() {
                None
            } else {
                let present = terms
                    .iter()
                    .filter(|t| term_present(&page_words, t))
                    .count();
                let coverage = present as f64 / terms.len() as f64;
                if factor_id == 1 && coverage < cfg.coverage_mismatch_threshold {
                    make(format!(
                        "page covers {present} of {} query terms ({:.0}%): content looks \
                         off-topic for {query:?}",
                        terms.len(),
                        coverage * 100.0
                    ))
                } else if factor_id == 2
                    && (cfg.coverage_mismatch_threshold..cfg.coverage_gap_threshold)
                        .contains(&coverage)
                {
                    let missing: Vec<&String> = terms
                        .iter()
                        .filter(|t| !term_present(&page_words, t))
                        .collect();
                    make(format!(
                        "page misses query terms {missing:?} (coverage {:.0}%)",
                        coverage * 100.0
                    ))
                } else {
                    None
                }
            }
        }
        // Price: currency pattern presence.
        3 => {
            if currency_pattern().is_match(text) {
                None
            } else {
                let hint = text
                    .split(['.', '\n'])
                    .find(|s| s.to_lowercase().contains("pricing") || s.to_lowercase().contains("price"))
                    .map(|s| format!(" ({})", snippet(s, 80)))
                    .unwrap_or_default();
                make(format!("no concrete price found on the page{hint}"))
            }
        }
        // Specifications: density of spec-like details.
        4 => {
            let mut details: Vec<String> = spec_detail_pattern()
                .find_iter(text)
                .map(|m| m.as_str().to_lowercase())
                .collect();
            details.sort();
            details.dedup();
            if details.len() < cfg.min_spec_details {
                make(format!(
                    "only {} spec-like detail(s) found (need {}): {:?}",
                    details.len(),
                    cfg.min_spec_details,
                    details
                ))
            } else {
                None
            }
        }
        // Comparisons: competitor-mention patterns.
        5 => {
            if comparison_pattern().is_match(text) {
                None
            } else {
                make("no comparison with alternatives found".to_string())
            }
        }
        // Hedging: lexicon density.
        6 => {
            let total_words = page_words.len().max(1);
            let hedges: Vec<&String> = page_words
                .iter()
                .filter(|w| cfg.hedge_terms.iter().any(|h| h == *w))
                .collect();
            let density = hedges.len() as f64 / total_words as f64 * 100.0;
            if density > cfg.hedge_density_threshold {
                make(format!(
                    "hedging density {density:.1} per 100 words ({} hedges in {} words)",
                    hedges.len(),
                    total_words
                ))
            } else {
                None
            }
        }
        // Evidence: claims without support markers.
        7 => {
            let claims = claim_pattern().find_iter(text).count();
            let support = support_pattern().find_iter(text).count();
            if claims > 0 && support == 0 {
                make(format!(
                    "{claims} strong claim(s) with no supporting evidence markers"
                ))
            } else {
                None
            }
        }
        // Contradictions: negated restatements of matched claims.
        8 => {
            let sentences: Vec<&str> = text
                .split(['.', '!', '?', '\n'])
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect();
            let content_words = |s: &str| -> Vec<String> {
                words(s)
                    .into_iter()
                    .filter(|w| w.len() >= 4 && !QUERY_STOPWORDS.contains(&w.as_str()))
                    .collect()
            };
            let mut hit = None;
            'outer: for i in 0..sentences.len() {
                for j in (i + 1)..sentences.len() {
                    let neg_i = negation_pattern().is_match(sentences[i]);
                    let neg_j = negation_pattern().is_match(sentences[j]);
                    if neg_i == neg_j {
                        continue;
                    }
                    let wi = content_words(sentences[i]);
                    let wj = content_words(sentences[j]);
                    let shared = wi.iter().filter(|w| wj.contains(w)).count();
                    if shared >= 3 {
                        hit = Some((sentences[i], sentences[j]));
                        break 'outer;
                    }
                }
            }
            hit.and_then(|(a, b)| {
                make(format!(
                    "conflicting statements: {:?} vs {:?}",
                    snippet(a, 70),
                    snippet(b, 70)
                ))
            })
        }
        // Comprehensiveness: length heuristic.
        13 => {
            let n = page_words.len();
            if n < cfg.min_words {
                make(format!("only {n} words of coverage (need {})", cfg.min_words))
            } else {
                None
            }
        }
        // Position is routing-level evidence, not a page property.
        15 => None,
        // Freshness: newest parseable date inside the window.
        16 => {
            let window_start = cfg.reference_date - chrono::Days::new(cfg.freshness_window_days as u64);
            match newest_date(text) {
                None => make("no parseable timestamp found".to_string()),
                Some(date) if date < window_start => make(format!(
                    "newest timestamp {date} is outside the {}-day freshness window",
                    cfg.freshness_window_days
                )),
                Some(_) => None,
            }
        }
        _ => unreachable!("consensus ids are handled exhaustively"),
    };
    Ok(finding)
}

fn host_matches_brand(host: &str, domains: &[String]) -> bool {
    domains.iter().any(|d| {
        let d = d.trim().trim_start_matches("www.").to_lowercase();
        !d.is_empty() && (host == d || host.ends_with(&format!(".{d}")))
    })
}

fn url_host(url: &str) -> Option<String> {
    url::Url::parse(url)
        .ok()
        .and_then(|u| u.host_str().map(|h| h.trim_start_matches("www.").to_lowercase()))
}

/// Byte ranges of every brand-name mention, case-insensitive.
fn brand_mention_ranges(answer: &str, names: &[String]) -> Vec<(usize, usize)> {
    let lower = answer.to_lowercase();
    let mut ranges = Vec::new();
    for name in names {
        let needle = name.trim().to_lowercase();
        if needle.is_empty() {
            continue;
        }
        let mut from = 0;
        while let Some(pos) = lower[from..].find(&needle) {
            let start = from + pos;
            ranges.push((start, start + needle.len()));
            from = start + needle.len();
        }
    }
    ranges.sort();
    ranges
}

/// Capitalized multi-word sequences: crude product-entity candidates.
fn entity_positions(answer: &str) -> Vec<(usize, String)> {
    static P: OnceLock<Regex> = OnceLock::new();
    let pattern = regex(
        &P,
        r"\b([A-Z][A-Za-z0-9]+(?:\s+[A-Z][A-Za-z0-9]*){1,4})\b",
    );
    pattern
        .find_iter(answer)
        .map(|m| (m.start(), m.as_str().to_string()))
        .collect()
}

/// Run the full workflow.
pub fn audit(
    answer: &str,
    brand: &BrandProfile,
    page: &PageContent,
    query: &str,
    cfg: &AuditConfig,
) -> Result<AuditReport, AuditError> {
    if answer.trim().is_empty() {
        return Err(AuditError::EmptyAnswer);
    }
    if page.text.trim().is_empty() {
        return Err(AuditError::EmptyPage);
    }
    brand.validate()?;

    let cited_urls = extract::find_urls(answer);
    let brand_positions: Vec<usize> = cited_urls
        .iter()
        .enumerate()
        .filter(|(_, u)| {
            url_host(u).map_or(false, |h| host_matches_brand(&h, &brand.domains))
        })
        .map(|(i, _)| i)
        .collect();
    let cited = !brand_positions.is_empty();

    if !cited {
        return Ok(AuditReport {
            route: Route::ImproveSeo,
            cited: false,
            confidence: 1.0,
            weak_factors: Vec::new(),
            recommendations: vec![
                "Brand is absent from the citations: improve retrieval visibility (SEO) \
                 before optimizing page content."
                    .to_string(),
            ],
        });
    }

    // Top-recommendation check: first citation must be the brand's, and no
    // other entity may be recommended before the brand's first mention.
    // Entity candidates whose span intersects a brand mention count as the
    // brand (the crude capitalized-sequence scan often swallows a leading
    // sentence word).
    let url_first = brand_positions.first() == Some(&0);
    let mentions = brand_mention_ranges(answer, &brand.names);
    let first_brand_pos = mentions.first().map(|&(start, _)| start);
    let rival_before = match first_brand_pos {
        Some(pos) => entity_positions(answer).iter().any(|(start, entity)| {
            let end = start + entity.len();
            let intersects_brand = mentions.iter().any(|&(ms, me)| *start < me && ms < end);
            *start < pos && !intersects_brand
        }),
        // Brand never named: rely on the URL signal alone at low confidence.
        None => false,
    };
    let is_top = url_first && !rival_before;
    let confidence = match (url_first, first_brand_pos.is_some()) {
        (true, true) => 1.0,
        (false, true) => 0.9,
        (true, false) => 0.6,
        (false, false) => 0.5,
    };

    if is_top {
        return Ok(AuditReport {
            route: Route::BrandIsTop,
            cited: true,
            confidence,
            weak_factors: Vec::new(),
            recommendations: vec![
                "Brand is already the top recommendation; monitor periodically.".to_string(),
            ],
        });
    }

    // Cited but not first: content quality is the bottleneck.
    let mut findings = Vec::new();
    for &factor_id in &factors::CONSENSUS_FACTOR_IDS {
        if let Some(finding) = detect_factor(factor_id, page, query, cfg)? {
            findings.push(finding);
        }
    }
    if let Some(&pos) = brand_positions.first() {
        if pos > 0 {
            let factor = factors::by_id(factors::POSITION_FACTOR_ID).unwrap();
            findings.push(Finding {
                factor_id: factor.id,
                factor_name: factor.name.to_string(),
                category: AuditCategory::Context,
                evidence: format!(
                    "brand URL appears at citation position {} (not first)",
                    pos + 1
                ),
                weight: cfg
                    .weights
                    .get(&factor.id)
                    .copied()
                    .or_else(|| factors::default_priority_weight(factor.id))
                    .unwrap_or(1.0),
            });
        }
    }
    // Rank by weight, descending; ties keep checklist definition order
    // (ascending factor id), which the stable sort preserves.
    findings.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap_or(std::cmp::Ordering::Equal));

    let mut recommendations: Vec<String> = findings
        .iter()
        .map(|f| recommendation_for(f.factor_id))
        .collect();
    recommendations.dedup();
    if findings.is_empty() {
        recommendations.push(
            "No checklist factor fired; compare against the winning source manually."
                .to_string(),
        );
    }

    Ok(AuditReport {
        route: Route::FixContent,
        cited: true,
        confidence,
        weak_factors: findings,
        recommendations,
    })
}

fn recommendation_for(factor_id: u8) -> String {
    match factor_id {
        1 => "Align the page with the target query's topic.",
        2 => "Close the keyword gap: use the query's terms verbatim.",
        3 => "Add concrete pricing instead of contact-for-quote language.",
        4 => "Add a specification table with concrete figures.",
        5 => "Add comparisons against named alternatives.",
        6 => "Replace hedged phrasing with confident, checkable statements.",
        7 => "Back strong claims with tests, certifications, or citations.",
        8 => "Resolve contradictory statements.",
        13 => "Deepen coverage: more aspects, more detail.",
        15 => "Improve retrieval rank so the page is listed earlier.",
        16 => "Add or update a visible timestamp.",
        _ => "Review this factor manually.",
    }
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brand() -> BrandProfile {
        BrandProfile {
            names: vec!["Zephyr Pulse 2".into()],
            domains: vec!["zephyrgear.example".into()],
        }
    }

    fn cfg() -> AuditConfig {
        AuditConfig::default()
    }

    const WEAK_PAGE: &str = "The Zephyr Pulse 2 fitness tracker features 8-9 day battery \
         life and offline maps with turn-by-turn navigation. Contact us for pricing details.";

    #[test]
    fn weak_product_page_fires_price_and_specs() {
        let answer = "The best pick is the TrailMaster Fit 9 (https://rival.example/trailmaster). \
             The Zephyr Pulse 2 (https://zephyrgear.example/pulse2) is a runner-up.";
        let page = PageContent {
            text: WEAK_PAGE.into(),
            ..PageContent::default()
        };
        let report = audit(
            answer,
            &brand(),
            &page,
            "best fitness tracker with offline maps",
            &cfg(),
        )
        .unwrap();
        assert_eq!(report.route, Route::FixContent);
        assert!(report.cited);
        let names: Vec<&str> = report
            .weak_factors
            .iter()
            .map(|f| f.factor_name.as_str())
            .collect();
        assert!(names.contains(&"Price Not Mentioned"), "findings: {names:?}");
        assert!(names.contains(&"Missing Specifications"), "findings: {names:?}");
        // Ranked by priority weight, descending.
        for pair in report.weak_factors.windows(2) {
            assert!(pair[0].weight >= pair[1].weight);
        }
    }

    #[test]
    fn absent_brand_routes_to_improve_seo() {
        let answer =
            "Top choice: https://rival.example/a then https://other.example/b for value.";
        let page = PageContent {
            text: WEAK_PAGE.into(),
            ..PageContent::default()
        };
        let report = audit(answer, &brand(), &page, "best fitness tracker", &cfg()).unwrap();
        assert_eq!(report.route, Route::ImproveSeo);
        assert!(!report.cited);
        assert!(report.weak_factors.is_empty());
    }

    #[test]
    fn top_brand_routes_to_brand_is_top_with_no_findings() {
        let answer = "The Zephyr Pulse 2 is the clear winner \
             (https://zephyrgear.example/pulse2); the TrailMaster Fit 9 trails behind.";
        let page = PageContent {
            text: WEAK_PAGE.into(),
            ..PageContent::default()
        };
        let report = audit(answer, &brand(), &page, "best fitness tracker", &cfg()).unwrap();
        assert_eq!(report.route, Route::BrandIsTop);
        assert!(report.weak_factors.is_empty());
        assert!(report.confidence >= 0.9);
    }

    #[test]
    fn brand_url_first_but_rival_named_first_is_not_top() {
        let answer = "The TrailMaster Fit 9 leads this roundup, though the Zephyr Pulse 2 \
             review at https://zephyrgear.example/pulse2 is cited first; see also \
             https://rival.example/t9.";
        let page = PageContent {
            text: WEAK_PAGE.into(),
            ..PageContent::default()
        };
        let report = audit(answer, &brand(), &page, "best fitness tracker", &cfg()).unwrap();
        assert_eq!(report.route, Route::FixContent);
    }

    #[test]
    fn routing_is_exhaustive_and_exclusive() {
        let answers = [
            "Winner: Zephyr Pulse 2 (https://zephyrgear.example/p)",
            "Winner: Rival (https://rival.example/a), also https://zephyrgear.example/p",
            "Winner: Rival (https://rival.example/a)",
        ];
        let page = PageContent {
            text: WEAK_PAGE.into(),
            ..PageContent::default()
        };
        let mut seen = std::collections::HashSet::new();
        for answer in answers {
            let report = audit(answer, &brand(), &page, "fitness tracker", &cfg()).unwrap();
            seen.insert(format!("{:?}", report.route));
            // A route implies its invariants.
            match report.route {
                Route::ImproveSeo => assert!(!report.cited),
                Route::BrandIsTop | Route::FixContent => assert!(report.cited),
            }
        }
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn detectors_are_pure() {
        let page = PageContent {
            text: WEAK_PAGE.into(),
            ..PageContent::default()
        };
        let a = detect_factor(3, &page, "q", &cfg()).unwrap();
        let b = detect_factor(3, &page, "q", &cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_consensus_factor_is_rejected() {
        let page = PageContent {
            text: "text".into(),
            ..PageContent::default()
        };
        assert!(matches!(
            detect_factor(9, &page, "q", &cfg()),
            Err(AuditError::NotConsensusFactor(9))
        ));
    }

    #[test]
    fn price_detector_sees_currency_patterns() {
        let priced = PageContent {
            text: "It sells for $199.99 at launch.".into(),
            ..PageContent::default()
        };
        assert!(detect_factor(3, &priced, "q", &cfg()).unwrap().is_none());
        let unpriced = PageContent {
            text: "Contact us for pricing details.".into(),
            ..PageContent::default()
        };
        let finding = detect_factor(3, &unpriced, "q", &cfg()).unwrap().unwrap();
        assert_eq!(finding.factor_name, "Price Not Mentioned");
        assert!(finding.evidence.contains("pricing"));
    }

    #[test]
    fn stale_timestamp_fires_within_window_rule() {
        // Page dated 7 years before the reference date, window 18 months.
        let cfg = AuditConfig {
            reference_date: NaiveDate::from_ymd_opt(2026, 1, 1).unwrap(),
            ..AuditConfig::default()
        };
        let old = PageContent {
            text: "Updated: 2019-03-02. Still a solid device.".into(),
            ..PageContent::default()
        };
        let finding = detect_factor(16, &old, "q", &cfg).unwrap().unwrap();
        assert!(finding.evidence.contains("2019-03-02"));
        let fresh = PageContent {
            text: "Updated: 2025-11-20. Still a solid device.".into(),
            ..PageContent::default()
        };
        assert!(detect_factor(16, &fresh, "q", &cfg).unwrap().is_none());
        let undated = PageContent {
            text: "No dates here at all.".into(),
            ..PageContent::default()
        };
        assert!(detect_factor(16, &undated, "q", &cfg).unwrap().is_some());
    }

    #[test]
    fn topic_mismatch_fires_on_disjoint_vocabulary() {
        let coffee = PageContent {
            text: "This espresso machine brews rich coffee with a fast heat-up time and a \
                 large water tank. Milk frothing is excellent."
                .into(),
            ..PageContent::default()
        };
        let finding = detect_factor(1, &coffee, "best robot vacuum", &cfg())
            .unwrap()
            .unwrap();
        assert_eq!(finding.factor_name, "Topic Mismatch");
        let on_topic = PageContent {
            text: "This robot vacuum cleans pet hair from hardwood.".into(),
            ..PageContent::default()
        };
        assert!(detect_factor(1, &on_topic, "best robot vacuum", &cfg())
            .unwrap()
            .is_none());
    }

    #[test]
    fn hedging_and_contradiction_detectors() {
        let hedged = PageContent {
            text: "It might possibly work and could perhaps clean, though it seems \
                 uncertain. Maybe."
                .into(),
            ..PageContent::default()
        };
        assert!(detect_factor(6, &hedged, "q", &cfg()).unwrap().is_some());

        let contradictory = PageContent {
            text: "The battery endurance reaches 10 hours in our battery endurance runs. \
                 However, the battery endurance does not reach 10 hours under normal use."
                .into(),
            ..PageContent::default()
        };
        assert!(detect_factor(8, &contradictory, "q", &cfg()).unwrap().is_some());
        let consistent = PageContent {
            text: "The battery lasts 10 hours. The screen is sharp.".into(),
            ..PageContent::default()
        };
        assert!(detect_factor(8, &consistent, "q", &cfg()).unwrap().is_none());
    }

    #[test]
    fn empty_inputs_are_errors() {
        let page = PageContent {
            text: "text".into(),
            ..PageContent::default()
        };
        assert!(matches!(
            audit("", &brand(), &page, "q", &cfg()),
            Err(AuditError::EmptyAnswer)
        ));
        let empty_page = PageContent::default();
        assert!(matches!(
            audit("answer", &brand(), &empty_page, "q", &cfg()),
            Err(AuditError::EmptyPage)
        ));
        let no_brand = BrandProfile {
            names: vec![],
            domains: vec![],
        };
        assert!(matches!(
            audit("answer", &no_brand, &page, "q", &cfg()),
            Err(AuditError::EmptyBrand)
        ));
    }

    #[test]
    fn fitted_weights_override_defaults() {
        use crate::fit::{FitFlags, FitResult};
        let fit = |or: f64, separation: bool| FitResult::<f64> {
            beta0: or.ln(),
            beta1: None,
            se0: Some(0.1),
            se1: None,
            sigma_s: 0.1,
            sigma_so: 0.1,
            loglik: -10.0,
            p_value: 0.01,
            odds_ratio: or,
            flags: FitFlags {
                separation,
                ..FitFlags::default()
            },
            n_obs: 100,
            n_scenarios: 10,
            evals: 100,
        };
        let record = |factor_id: u8, or: f64, separation: bool| crate::fit::FitRecord {
            factor_id,
            factor_name: String::new(),
            contrast: String::new(),
            model_id: "m".into(),
            n_used: 100,
            n_excluded: 0,
            fit: Some(fit(or, separation)),
            skipped: None,
        };
        let cfg = AuditConfig::default()
            .with_fitted_weights(&[record(3, 7.0, false), record(16, 1.0, true)], 10_000.0);
        assert_eq!(cfg.weights[&3], 7.0);
        assert_eq!(cfg.weights[&16], 10_000.0); // capped estimate enters at the cap
        assert_eq!(cfg.weights[&1], 10_000.0); // untouched default
    }
}
