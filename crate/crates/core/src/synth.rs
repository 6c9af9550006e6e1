//! Template-based synthetic corpus generation.
//!
//! Produces matched review pairs for desk-scale testing: variant A carries
//! the full strong template and variant B applies exactly one factor-specific
//! degradation, with neutral filler appended to whichever side is shorter
//! until the pair satisfies the 5% length-parity bound. All names, domains,
//! and products are fictional; generation is deterministic per seed and
//! independent of scenario ordering.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Map;
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Scenario, VariantDoc};
use crate::factors::{self, VariantId};
use crate::util;

/// What to synthesize.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Factor ids to generate for; empty is an error.
    pub factor_ids: Vec<u8>,
    /// Scenarios per factor; must be >= 1.
    pub per_factor: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// All 18 factors at the given scale.
    pub fn all_factors(per_factor: usize, seed: u64) -> Self {
        Self {
            factor_ids: factors::registry().iter().map(|f| f.id).collect(),
            per_factor,
            seed,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("config requests no factors")]
    NoFactors,
    #[error("config requests 0 scenarios per factor")]
    ZeroPerFactor,
    #[error("unknown factor_id {0}")]
    UnknownFactor(u8),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

struct Product {
    category: &'static str,
    use_case: &'static str,
    specs: [(&'static str, &'static str, std::ops::Range<u32>); 4],
    rival_kind: &'static str,
}

const PRODUCTS: [Product; 6] = [
    Product {
        category: "robot vacuum",
        use_case: "pet hair on hardwood floors",
        specs: [
            ("Suction power", "Pa", 9000..30000),
            ("Battery life", "minutes", 90..240),
            ("Dust bin", "ml", 300..800),
            ("Noise level", "dB", 52..68),
        ],
        rival_kind: "upright vacuum",
    },
    Product {
        category: "fitness tracker",
        use_case: "trail running and sleep tracking",
        specs: [
            ("Battery life", "days", 5..21),
            ("Display", "inches", 1..2),
            ("Water rating", "m", 30..100),
            ("Weight", "g", 18..45),
        ],
        rival_kind: "smartwatch",
    },
    Product {
        category: "espresso machine",
        use_case: "small kitchens and daily lattes",
        specs: [
            ("Pump pressure", "bar", 9..20),
            ("Water tank", "ml", 900..2500),
            ("Heat-up time", "seconds", 25..90),
            ("Power draw", "W", 1100..1800),
        ],
        rival_kind: "pod brewer",
    },
    Product {
        category: "air purifier",
        use_case: "allergy season in medium rooms",
        specs: [
            ("Coverage", "sqft", 250..900),
            ("CADR", "cfm", 150..400),
            ("Filter life", "months", 6..18),
            ("Noise level", "dB", 24..52),
        ],
        rival_kind: "dehumidifier",
    },
    Product {
        category: "noise-cancelling headphones",
        use_case: "open offices and long flights",
        specs: [
            ("Battery life", "hours", 20..70),
            ("Driver size", "mm", 35..50),
            ("Weight", "g", 210..330),
            ("Charge time", "minutes", 45..180),
        ],
        rival_kind: "earbud set",
    },
    Product {
        category: "electric kettle",
        use_case: "pour-over coffee and tea",
        specs: [
            ("Capacity", "ml", 800..1800),
            ("Power draw", "W", 1200..3000),
            ("Boil time", "seconds", 120..300),
            ("Hold temperature", "minutes", 20..60),
        ],
        rival_kind: "stovetop kettle",
    },
];

const NAME_PREFIXES: [&str; 10] = [
    "Velo", "Zephyr", "Aura", "Nimbus", "Quanta", "Halcyon", "Vertex", "Ionet", "Strato", "Lumen",
];
const NAME_SUFFIXES: [&str; 8] = ["Pro", "Max", "Plus", "Prime", "Core", "Edge", "One", "Ultra"];
const PUBLISHERS: [&str; 8] = [
    "gearlens",
    "homelabnotes",
    "dailycircuit",
    "benchandfield",
    "brightpicks",
    "comparerooms",
    "quietreviewer",
    "fieldtestedhq",
];

// Filler must stay factor-neutral: no hedges, prices, dates, units,
// comparatives, or promotional tone.
const FILLERS: [&str; 6] = [
    "Testing notes are archived for reference.",
    "Scores reflect a unit purchased at retail.",
    "Readings were taken in a controlled room.",
    "Setup photos are available in the gallery.",
    "Reader questions are answered in the forum.",
    "The scoring rubric is published separately.",
];

const RECENT_DATE: &str = "2026-02-10";
const OLD_DATE: &str = "2019-03-02";

struct Draft {
    product_name: String,
    category: &'static str,
    use_case: &'static str,
    /// (intro, price, specs, comparison, evidence, social, value, structure-agnostic closing)
    sections: Vec<(&'static str, String)>,
    timestamp: Option<&'static str>,
    structured: bool,
}

impl Draft {
    fn render(&self) -> String {
        let mut out = String::new();
        if let Some(ts) = self.timestamp {
            out.push_str(&format!("Updated: {ts}\n\n"));
        }
        for (heading, text) in &self.sections {
            if self.structured {
                out.push_str(&format!("## {heading}\n{text}\n\n"));
            } else {
                out.push_str(text);
                out.push(' ');
            }
        }
        out.trim_end().to_string()
    }
}

fn product_name(rng: &mut ChaCha8Rng) -> String {
    let prefix = NAME_PREFIXES.choose(rng).unwrap();
    let suffix = NAME_SUFFIXES.choose(rng).unwrap();
    let model: u32 = rng.random_range(1..9);
    format!("{prefix} {suffix} X{model}")
}

fn base_draft(rng: &mut ChaCha8Rng, product: &Product) -> Draft {
    let name = product_name(rng);
    let price: u32 = rng.random_range(79..1299);
    let rating_tenths: u32 = rng.random_range(44..50);
    let reviews: u32 = rng.random_range(800..4000);
    let spec_values: Vec<(String, String)> = product
        .specs
        .iter()
        .map(|(label, unit, range)| {
            let v = rng.random_range(range.clone());
            (label.to_string(), format!("{v} {unit}"))
        })
        .collect();
    let rival = product_name(rng);

    let sections = vec![
        (
            "Overview",
            format!(
                "The {name} is a {category} built for {use_case}. After three weeks of \
                 hands-on testing it earns a clear recommendation for that job.",
                name = name,
                category = product.category,
                use_case = product.use_case
            ),
        ),
        (
            "Price",
            format!("It sells for ${price} at launch, and retailers list it near ${sale} during seasonal events.", sale = price.saturating_sub(price / 10)),
        ),
        (
            "Specifications",
            {
                let mut s = String::from("Key specifications. ");
                for (label, value) in &spec_values {
                    s.push_str(&format!("{label}: {value}. "));
                }
                s.trim_end().to_string()
            },
        ),
        (
            "Comparisons",
            format!(
                "Compared to the {rival} and a typical {rival_kind}, it finishes the same \
                 workload faster and needs less upkeep.",
                rival_kind = product.rival_kind
            ),
        ),
        (
            "Evidence",
            "Every claim here was verified in our lab tests, and the results were certified \
             by an independent reviewer panel."
                .to_string(),
        ),
        (
            "Ratings",
            format!(
                "User rating: {}.{}/5 across {reviews} reviews on the product page.",
                rating_tenths / 10,
                rating_tenths % 10
            ),
        ),
        (
            "Value",
            "It delivers standout value: faster results, quieter operation, and lower \
             running costs over a full year of use."
                .to_string(),
        ),
        (
            "Verdict",
            format!(
                "For {use_case}, the {name} is the strongest {category} we have tested \
                 this year.",
                use_case = product.use_case,
                category = product.category
            ),
        ),
    ];

    Draft {
        product_name: name,
        category: product.category,
        use_case: product.use_case,
        sections,
        timestamp: Some(RECENT_DATE),
        structured: true,
    }
}

fn section_mut<'a>(draft: &'a mut Draft, heading: &str) -> &'a mut String {
    &mut draft
        .sections
        .iter_mut()
        .find(|(h, _)| *h == heading)
        .expect("known section")
        .1
}

/// Apply the single factor-specific degradation to produce variant B.
fn degrade(factor_id: u8, rng: &mut ChaCha8Rng, a: &Draft, alt_product: &Product) -> Draft {
    let mut b = Draft {
        product_name: a.product_name.clone(),
        category: a.category,
        use_case: a.use_case,
        sections: a.sections.clone(),
        timestamp: a.timestamp,
        structured: a.structured,
    };
    match factor_id {
        // Off-topic: a different product category entirely.
        1 => {
            b = base_draft(rng, alt_product);
        }
        // Keyword gap: strip the query's category terms from the text.
        2 => {
            for (_, text) in &mut b.sections {
                *text = text.replace(a.category, "device");
                *text = text.replace(a.use_case, "everyday household work");
            }
        }
        3 => {
            *section_mut(&mut b, "Price") =
                "Contact the manufacturer for current pricing details.".to_string();
        }
        4 => {
            *section_mut(&mut b, "Specifications") =
                "It performs well in daily use without getting into technical minutiae."
                    .to_string();
        }
        5 => {
            *section_mut(&mut b, "Comparisons") =
                "We evaluated this unit on its own terms in a standard test room.".to_string();
        }
        6 => {
            for heading in ["Overview", "Value", "Verdict"] {
                let text = section_mut(&mut b, heading);
                *text = text
                    .replace("is a", "might be a")
                    .replace("earns a clear", "could possibly earn a")
                    .replace("It delivers", "It could perhaps deliver")
                    .replace("is the strongest", "might possibly be the strongest");
            }
        }
        7 => {
            *section_mut(&mut b, "Evidence") =
                "These results speak for themselves and need no outside validation."
                    .to_string();
        }
        8 => {
            let spec_text = section_mut(&mut b, "Specifications").clone();
            // Restate the first spec claim, negated.
            let first_claim = spec_text
                .split(". ")
                .nth(1)
                .unwrap_or("the headline figure")
                .to_string();
            section_mut(&mut b, "Verdict").push_str(&format!(
                " That said, {claim} is actually not what we recorded, and the {claim} \
                 figure does not hold in practice.",
                claim = first_claim.to_lowercase()
            ));
        }
        9 => {
            *section_mut(&mut b, "Value") = "BUY NOW! Unbeatable deal! You will not find a \
                 better offer anywhere, act today before stock runs out!"
                .to_string();
        }
        10 => {
            b.structured = false;
        }
        11 => {
            // Scatter related sentences: interleave section order.
            let mut scattered = Vec::new();
            let (evens, odds): (Vec<_>, Vec<_>) = b
                .sections
                .iter()
                .cloned()
                .enumerate()
                .partition(|(i, _)| i % 2 == 0);
            scattered.extend(odds.into_iter().map(|(_, s)| s));
            scattered.extend(evens.into_iter().map(|(_, s)| s));
            b.sections = scattered;
        }
        12 => {
            *section_mut(&mut b, "Value") =
                "It is an acceptable option if nothing else is available at the time."
                    .to_string();
        }
        13 => {
            // Shallow coverage: keep only overview and verdict.
            b.sections.retain(|(h, _)| matches!(*h, "Overview" | "Verdict"));
        }
        14 => {
            *section_mut(&mut b, "Ratings") =
                "User rating: 3.1/5 across 12 reviews on the product page.".to_string();
        }
        // Position treatment: content-identical bodies, distinct URLs.
        15 => {}
        16 => {
            b.timestamp = Some(OLD_DATE);
        }
        17 => {
            // A carries no timestamp; B keeps the old one.
            b.timestamp = Some(OLD_DATE);
        }
        18 => {
            b.timestamp = None;
        }
        _ => unreachable!("validated factor id"),
    }
    b
}

/// Append neutral filler to the shorter body until the pair is inside the
/// parity bound (with margin).
fn pad_to_parity(rng: &mut ChaCha8Rng, body_a: &mut String, body_b: &mut String) {
    const TARGET: f64 = 0.04;
    let mut guard = 0;
    loop {
        let la = body_a.chars().count();
        let lb = body_b.chars().count();
        if crate::corpus::length_disparity(la, lb) <= TARGET || guard > 400 {
            return;
        }
        let filler = *FILLERS.choose(rng).unwrap();
        let shorter = if la < lb { &mut *body_a } else { &mut *body_b };
        shorter.push(' ');
        shorter.push_str(filler);
        guard += 1;
    }
}

fn slugify(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect::<String>()
        .split('-')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

fn synth_scenario(factor_id: u8, index: usize, seed: u64) -> Scenario {
    let mut rng = util::derived_rng(
        seed,
        &["synth-scenario", &factor_id.to_string(), &index.to_string()],
    );
    let product = &PRODUCTS[rng.random_range(0..PRODUCTS.len())];
    let alt_product = &PRODUCTS[(PRODUCTS
        .iter()
        .position(|p| std::ptr::eq(p, product))
        .unwrap()
        + 1)
        % PRODUCTS.len()];

    let mut draft_a = base_draft(&mut rng, product);
    if factor_id == 17 {
        // A side of "No vs Old Timestamp" carries no timestamp.
        draft_a.timestamp = None;
    }
    let draft_b = degrade(factor_id, &mut rng, &draft_a, alt_product);

    let mut body_a = draft_a.render();
    let mut body_b = draft_b.render();
    pad_to_parity(&mut rng, &mut body_a, &mut body_b);

    let pub_a = PUBLISHERS.choose(&mut rng).unwrap();
    let pub_b = PUBLISHERS
        .iter()
        .find(|p| *p != pub_a)
        .expect("at least two publishers");
    let scenario_id = format!("f{factor_id:02}-s{index:03}");
    let slug = slugify(&draft_a.product_name);
    let url_a = format!("https://{pub_a}.example/reviews/{slug}-{scenario_id}");
    let url_b = format!("https://{pub_b}.example/reviews/{slug}-{scenario_id}");

    let title_a = format!("{} review: {} tested", draft_a.product_name, product.category);
    let title_b = if factor_id == 1 {
        format!("{} review: {} tested", draft_b.product_name, alt_product.category)
    } else {
        format!("{} hands-on review", draft_a.product_name)
    };

    let queries = vec![
        format!("What is the best {} for {}?", product.category, product.use_case),
        format!("Which {} should I buy for {}?", product.category, product.use_case),
        format!(
            "I need a {} that handles {} well. Any recommendations?",
            product.category, product.use_case
        ),
    ];
    let tool_query = format!("best {} for {}", product.category, product.use_case);

    Scenario {
        scenario_id,
        factor_id,
        blog_id: format!("f{factor_id:02}-b{:02}", index / 4),
        variant_a: VariantDoc::new(VariantId::A, title_a, url_a, body_a),
        variant_b: VariantDoc::new(VariantId::B, title_b, url_b, body_b),
        queries,
        tool_query,
        extra: Map::new(),
    }
}

/// Synthesize a corpus: `per_factor` scenarios for each requested factor,
/// deterministic for a given seed.
pub fn synth_corpus(config: &SynthConfig) -> Result<Corpus, SynthError> {
    if config.factor_ids.is_empty() {
        return Err(SynthError::NoFactors);
    }
    if config.per_factor == 0 {
        return Err(SynthError::ZeroPerFactor);
    }
    for &id in &config.factor_ids {
        if factors::by_id(id).is_none() {
            return Err(SynthError::UnknownFactor(id));
        }
    }
    let mut scenarios = Vec::with_capacity(config.factor_ids.len() * config.per_factor);
    for &factor_id in &config.factor_ids {
        for index in 0..config.per_factor {
            scenarios.push(synth_scenario(factor_id, index, config.seed));
        }
    }
    Ok(Corpus::new(scenarios)?)
}
