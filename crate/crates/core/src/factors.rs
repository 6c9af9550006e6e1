//! The fixed registry of the 18 tested content factors.
//!
//! Every factor pairs an expected-stronger variant A against a weakened
//! variant B. All factors are counterbalanced across both source orders
//! except Lower List Position, where order itself is the treatment.

use serde::{Deserialize, Serialize};

/// Variant label within a matched pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantId {
    A,
    B,
}

/// Taxonomy group a factor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FactorCategory {
    ContentMatch,
    Completeness,
    Trustworthiness,
    Readability,
    CompetitiveStanding,
    Freshness,
}

/// Category used by the content auditor for the consensus factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuditCategory {
    Trust,
    Completeness,
    Relevance,
    Context,
}

/// One paired hypothesis: variant A (expected winner) vs variant B.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactorTest {
    pub id: u8,
    /// Factor name (what variant B lacks or degrades).
    pub name: &'static str,
    /// Report row label in "A vs B" form.
    pub contrast: &'static str,
    pub category: FactorCategory,
    /// Whether trials run under both source orders.
    pub counterbalanced: bool,
}

impl FactorTest {
    /// By construction the expected winner is always variant A.
    pub const fn expected_winner(&self) -> VariantId {
        VariantId::A
    }
}

pub const FACTOR_COUNT: usize = 18;

/// Factor id of the Lower List Position test, the only non-counterbalanced
/// factor.
pub const POSITION_FACTOR_ID: u8 = 15;

const REGISTRY: [FactorTest; FACTOR_COUNT] = [
    FactorTest { id: 1, name: "Topic Mismatch", contrast: "On-Topic vs Off-Topic", category: FactorCategory::ContentMatch, counterbalanced: true },
    FactorTest { id: 2, name: "Keyword Gap", contrast: "Query Terms vs Missing", category: FactorCategory::ContentMatch, counterbalanced: true },
    FactorTest { id: 3, name: "Price Not Mentioned", contrast: "Price vs No Price", category: FactorCategory::Completeness, counterbalanced: true },
    FactorTest { id: 4, name: "Missing Specifications", contrast: "Specs vs No Specs", category: FactorCategory::Completeness, counterbalanced: true },
    FactorTest { id: 5, name: "No Comparisons", contrast: "With vs No Comparisons", category: FactorCategory::Completeness, counterbalanced: true },
    FactorTest { id: 6, name: "Hedged Language", contrast: "Confident vs Hedged", category: FactorCategory::Trustworthiness, counterbalanced: true },
    FactorTest { id: 7, name: "Claims With Evidence", contrast: "Evidence vs No Evidence", category: FactorCategory::Trustworthiness, counterbalanced: true },
    FactorTest { id: 8, name: "Internal Contradictions", contrast: "Consistent vs Contradictory", category: FactorCategory::Trustworthiness, counterbalanced: true },
    FactorTest { id: 9, name: "Overly Promotional", contrast: "Neutral vs Promotional", category: FactorCategory::Trustworthiness, counterbalanced: true },
    FactorTest { id: 10, name: "Content Structure", contrast: "Structured vs Dense", category: FactorCategory::Readability, counterbalanced: true },
    FactorTest { id: 11, name: "Scattered Information", contrast: "Organized vs Scattered", category: FactorCategory::Readability, counterbalanced: true },
    FactorTest { id: 12, name: "Weaker Value Proposition", contrast: "Strong vs Weak Value Prop", category: FactorCategory::CompetitiveStanding, counterbalanced: true },
    FactorTest { id: 13, name: "Less Comprehensive", contrast: "Deep vs Shallow Coverage", category: FactorCategory::CompetitiveStanding, counterbalanced: true },
    FactorTest { id: 14, name: "Weaker Social Proof", contrast: "Strong vs Weak Social Proof", category: FactorCategory::CompetitiveStanding, counterbalanced: true },
    FactorTest { id: 15, name: "Lower List Position", contrast: "Position 1 vs 2", category: FactorCategory::CompetitiveStanding, counterbalanced: false },
    FactorTest { id: 16, name: "Recent vs Old Timestamp", contrast: "Recent vs Old Timestamp", category: FactorCategory::Freshness, counterbalanced: true },
    FactorTest { id: 17, name: "No vs Old Timestamp", contrast: "No vs Old Timestamp", category: FactorCategory::Freshness, counterbalanced: true },
    FactorTest { id: 18, name: "Recent vs No Timestamp", contrast: "Recent vs No Timestamp", category: FactorCategory::Freshness, counterbalanced: true },
];

/// The full 18-factor registry in id order.
pub fn registry() -> &'static [FactorTest; FACTOR_COUNT] {
    &REGISTRY
}

/// Look up a factor by id (1..=18).
pub fn by_id(id: u8) -> Option<&'static FactorTest> {
    if (1..=FACTOR_COUNT as u8).contains(&id) {
        Some(&REGISTRY[id as usize - 1])
    } else {
        None
    }
}

/// Ids of the 11 consensus factors: significant in at least four of the six
/// models in the calibration runs behind the default audit checklist.
pub const CONSENSUS_FACTOR_IDS: [u8; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 13, 15, 16];

pub fn is_consensus_factor(id: u8) -> bool {
    CONSENSUS_FACTOR_IDS.contains(&id)
}

/// Audit checklist category for a consensus factor; `None` for the seven
/// factors outside the checklist.
pub fn audit_category(id: u8) -> Option<AuditCategory> {
    match id {
        1 | 2 => Some(AuditCategory::Relevance),
        3 | 4 | 5 | 13 => Some(AuditCategory::Completeness),
        6 | 7 | 8 => Some(AuditCategory::Trust),
        15 | 16 => Some(AuditCategory::Context),
        _ => None,
    }
}

/// Default audit priority weight for a consensus factor: the cross-model
/// median odds ratio from the calibration runs, with capped estimates
/// entered at the cap value (10,000).
pub fn default_priority_weight(id: u8) -> Option<f64> {
    match id {
        1 => Some(10_000.0),
        2 => Some(15.4),
        3 => Some(33.25),
        4 => Some(126.7),
        5 => Some(3.345),
        6 => Some(8.02),
        7 => Some(6.955),
        8 => Some(2.765),
        13 => Some(75.75),
        15 => Some(10_000.0),
        16 => Some(5_747.0),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_exactly_18_factors_with_one_uncounterbalanced() {
        assert_eq!(registry().len(), 18);
        let uncounterbalanced: Vec<_> =
            registry().iter().filter(|f| !f.counterbalanced).collect();
        assert_eq!(uncounterbalanced.len(), 1);
        assert_eq!(uncounterbalanced[0].id, POSITION_FACTOR_ID);
        assert_eq!(uncounterbalanced[0].name, "Lower List Position");
    }

    #[test]
    fn ids_are_dense_and_lookup_works() {
        for (idx, f) in registry().iter().enumerate() {
            assert_eq!(f.id as usize, idx + 1);
            assert_eq!(by_id(f.id), Some(f));
            assert_eq!(f.expected_winner(), VariantId::A);
        }
        assert!(by_id(0).is_none());
        assert!(by_id(19).is_none());
    }

    #[test]
    fn category_sizes_match_the_taxonomy() {
        use FactorCategory::*;
        let count = |c: FactorCategory| registry().iter().filter(|f| f.category == c).count();
        assert_eq!(count(ContentMatch), 2);
        assert_eq!(count(Completeness), 3);
        assert_eq!(count(Trustworthiness), 4);
        assert_eq!(count(Readability), 2);
        assert_eq!(count(CompetitiveStanding), 4);
        assert_eq!(count(Freshness), 3);
    }

    #[test]
    fn consensus_set_is_consistent() {
        assert_eq!(CONSENSUS_FACTOR_IDS.len(), 11);
        for id in CONSENSUS_FACTOR_IDS {
            assert!(by_id(id).is_some());
            assert!(audit_category(id).is_some());
            assert!(default_priority_weight(id).is_some());
        }
        for f in registry() {
            if !is_consensus_factor(f.id) {
                assert!(audit_category(f.id).is_none());
                assert!(default_priority_weight(f.id).is_none());
            }
        }
    }
}
