//! Synthetic commodity corpus for simulation runs.
//!
//! Names are built as `brand + product + pack`. Positives take their product
//! from the target category's family. Plain negatives come from unrelated
//! groceries, household goods and the other beverage family. Ambiguous items
//! are negatives whose product pairs a category fragment with an unrelated
//! head noun ("coffee mug", "tea towel"); the default lexicon scores them
//! just above 0.5, so they are neither confident positives nor confident
//! negatives.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{LexiconError, WeightedTerm, ZeroShotLexicon};
use crate::rng::{below, shuffle, substream, StreamPurpose};
use crate::types::Record;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthCategory {
    Coffee,
    Tea,
}

impl SynthCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthCategory::Coffee => "coffee",
            SynthCategory::Tea => "tea",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "coffee" => Some(SynthCategory::Coffee),
            "tea" => Some(SynthCategory::Tea),
            _ => None,
        }
    }

    fn family(self) -> &'static [&'static str] {
        match self {
            SynthCategory::Coffee => COFFEE,
            SynthCategory::Tea => TEA,
        }
    }

    fn ambiguous(self) -> &'static [&'static str] {
        match self {
            SynthCategory::Coffee => COFFEE_AMBIGUOUS,
            SynthCategory::Tea => TEA_AMBIGUOUS,
        }
    }

    fn other(self) -> SynthCategory {
        match self {
            SynthCategory::Coffee => SynthCategory::Tea,
            SynthCategory::Tea => SynthCategory::Coffee,
        }
    }
}

const COFFEE: &[&str] = &[
    "coffee beans",
    "ground coffee",
    "instant coffee",
    "drip coffee bags",
    "coffee capsules",
    "espresso",
    "espresso roast",
    "latte",
    "iced latte",
    "americano",
    "cold brew",
    "cappuccino",
    "mocha",
    "flat white",
    "macchiato",
    "decaf coffee",
    "arabica beans",
    "robusta beans",
    "canned coffee",
    "white coffee",
];

const TEA: &[&str] = &[
    "green tea",
    "oolong tea",
    "black tea",
    "jasmine tea",
    "matcha powder",
    "earl grey",
    "pu-erh tea",
    "chamomile tea",
    "tea bags",
    "milk tea",
    "sencha",
    "darjeeling",
    "white tea",
    "barley tea",
    "lemon tea",
    "iced tea",
    "rooibos",
    "tieguanyin",
    "longjing",
    "herbal tea",
];

const COFFEE_AMBIGUOUS: &[&str] = &[
    "coffee mug",
    "coffee grinder",
    "coffee table",
    "coffee filter paper",
    "espresso cup set",
    "latte art pitcher",
    "mocha chocolate bar",
    "coffee flavored cookies",
    "coffee scented candle",
    "cappuccino wafer",
    "coffee creamer",
    "coffee body scrub",
];

const TEA_AMBIGUOUS: &[&str] = &[
    "tea cup set",
    "teapot",
    "tea towel",
    "green tea ice cream",
    "matcha cookies",
    "tea tree oil shampoo",
    "milk tea candy",
    "tea light candles",
    "tea strainer",
    "earl grey tea cake",
    "tea scented soap",
    "tea tray",
];

const DISTRACTORS: &[&str] = &[
    "potato chips",
    "chocolate bar",
    "butter cookies",
    "soda crackers",
    "granola",
    "whole milk",
    "greek yogurt",
    "cheese slices",
    "salted butter",
    "orange juice",
    "cola",
    "mineral water",
    "energy drink",
    "soy milk",
    "instant noodles",
    "jasmine rice",
    "olive oil",
    "soy sauce",
    "laundry detergent",
    "facial tissue",
    "toothpaste",
    "shampoo",
    "dish soap",
    "paper towels",
    "frozen dumplings",
    "beef jerky",
    "peanut butter",
    "strawberry jam",
    "sparkling water",
    "coconut water",
    "kettle",
    "thermos",
    "water bottle",
    "lunch box",
    "drinking glasses",
    "cocoa powder",
    "hot chocolate",
    "malt drink",
    "sports drink",
    "lemonade",
];

const BRANDS: &[&str] = &[
    "Sunrise",
    "Golden Hill",
    "Blue Peak",
    "Red Lantern",
    "Morning Dew",
    "Old Town",
    "Maple Leaf",
    "Silver Spoon",
    "Green Valley",
    "Harbor",
    "Lucky Star",
    "North Wind",
    "Jade",
    "Panda",
    "Oak & Ash",
    "Riverbank",
    "Highland",
    "Kirin Farm",
    "Coastline",
    "Summit",
    "Lotus",
    "Meadow",
    "Ember",
    "Pioneer",
    "Crescent",
    "Tidewater",
    "Orchard",
    "Bamboo Grove",
    "Cloud Nine",
    "Fairview",
];

const PACKS: &[&str] = &[
    "",
    "250g",
    "500g",
    "1kg",
    "6 pack",
    "12 pack",
    "24 cans",
    "gift box",
    "family size",
    "organic",
    "premium",
    "value pack",
    "limited edition",
    "travel size",
    "refill",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub size: usize,
    pub category: SynthCategory,
    pub positive_fraction: f64,
    pub ambiguous_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            size: 10_000,
            category: SynthCategory::Coffee,
            positive_fraction: 0.10,
            ambiguous_fraction: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("{name} must lie in [0, 1] (got {value})")]
    Fraction { name: &'static str, value: f64 },
    #[error("positive and ambiguous fractions sum to {0}, more than 1")]
    FractionSum(f64),
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, value) in [
            ("positive_fraction", self.positive_fraction),
            ("ambiguous_fraction", self.ambiguous_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SynthError::Fraction { name, value });
            }
        }
        let sum = self.positive_fraction + self.ambiguous_fraction;
        if sum > 1.0 + 1e-12 {
            return Err(SynthError::FractionSum(sum));
        }
        Ok(())
    }

    /// Exact item counts: `(positives, ambiguous, plain negatives)`.
    pub fn counts(&self) -> (usize, usize, usize) {
        let n = self.size as f64;
        let pos = libm::round(n * self.positive_fraction) as usize;
        let amb = (libm::round(n * self.ambiguous_fraction) as usize).min(self.size - pos.min(self.size));
        let pos = pos.min(self.size);
        (pos, amb, self.size - pos - amb)
    }
}

/// How an item was generated. Records do not carry it; see [`generate_with_kinds`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemKind {
    Positive,
    Ambiguous,
    Negative,
}

pub fn generate(spec: &SynthSpec) -> Result<Vec<Record>, SynthError> {
    Ok(generate_with_kinds(spec)?.into_iter().map(|(r, _)| r).collect())
}

/// Generates the corpus in a shuffled order with ids `item-000000`, ...
pub fn generate_with_kinds(spec: &SynthSpec) -> Result<Vec<(Record, ItemKind)>, SynthError> {
    spec.validate()?;
    let (pos, amb, neg) = spec.counts();
    let mut rng = substream(spec.seed, StreamPurpose::Synthesis, 0);

    let mut negatives: Vec<&str> = DISTRACTORS.to_vec();
    negatives.extend_from_slice(spec.category.other().family());

    let mut kinds = Vec::with_capacity(spec.size);
    kinds.extend(core::iter::repeat_n(ItemKind::Positive, pos));
    kinds.extend(core::iter::repeat_n(ItemKind::Ambiguous, amb));
    kinds.extend(core::iter::repeat_n(ItemKind::Negative, neg));
    shuffle(&mut rng, &mut kinds);

    let width = digits(spec.size.saturating_sub(1)).max(6);
    let mut out = Vec::with_capacity(spec.size);
    for (i, kind) in kinds.into_iter().enumerate() {
        let products: &[&str] = match kind {
            ItemKind::Positive => spec.category.family(),
            ItemKind::Ambiguous => spec.category.ambiguous(),
            ItemKind::Negative => &negatives,
        };
        let brand = BRANDS[below(&mut rng, BRANDS.len())];
        let product = products[below(&mut rng, products.len())];
        let pack = PACKS[below(&mut rng, PACKS.len())];
        let text = if pack.is_empty() {
            format!("{brand} {product}")
        } else {
            format!("{brand} {product} {pack}")
        };
        out.push((
            Record {
                id: format!("item-{i:0width$}"),
                text,
                label: Some(kind == ItemKind::Positive),
            },
            kind,
        ));
    }
    Ok(out)
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}

// Category words outweigh nothing but the head nouns of the ambiguous
// items, which they beat by a quarter point.
const COFFEE_LEXICON: &[(&str, f64, bool)] = &[
    ("coffee", 3.0, true),
    ("espresso", 2.5, true),
    ("latte", 2.5, true),
    ("cappuccino", 2.5, true),
    ("mocha", 2.0, true),
    ("brew", 1.5, true),
    ("bean", 1.5, true),
    ("roast", 1.0, true),
    ("drink", 0.5, true),
    ("mug", 2.75, false),
    ("grinder", 2.75, false),
    ("table", 2.75, false),
    ("filter", 2.75, false),
    ("cup set", 2.25, false),
    ("pitcher", 2.25, false),
    ("chocolate", 1.75, false),
    ("flavored", 2.75, false),
    ("candle", 2.75, false),
    ("wafer", 2.25, false),
    ("creamer", 2.75, false),
    ("scrub", 2.75, false),
    ("tea", 1.5, false),
    ("juice", 1.0, false),
    ("water", 0.5, false),
    ("detergent", 2.0, false),
    ("shampoo", 2.0, false),
    ("soap", 2.0, false),
    ("tissue", 2.0, false),
    ("toothpaste", 2.0, false),
];

const TEA_LEXICON: &[(&str, f64, bool)] = &[
    ("tea", 3.0, true),
    ("matcha", 2.5, true),
    ("oolong", 2.5, true),
    ("herbal", 1.5, true),
    ("jasmine", 1.5, true),
    ("drink", 0.5, true),
    ("cup set", 2.75, false),
    ("pot", 2.75, false),
    ("towel", 2.75, false),
    ("ice cream", 2.75, false),
    ("cookies", 2.25, false),
    ("shampoo", 2.75, false),
    ("candy", 2.75, false),
    ("candle", 2.75, false),
    ("strainer", 2.75, false),
    ("cake", 2.75, false),
    ("soap", 2.75, false),
    ("tray", 2.75, false),
    ("coffee", 1.5, false),
    ("juice", 1.0, false),
    ("water", 0.5, false),
    ("detergent", 2.0, false),
    ("tissue", 2.0, false),
    ("toothpaste", 2.0, false),
];

/// The zero-shot lexicon used with synthetic corpora. It is deliberately
/// crude: it has no opinion on most groceries, and it rates the ambiguous
/// items only slightly positive, so they sit in the middle of the ranking.
pub fn default_lexicon(category: SynthCategory, temperature: f64) -> Result<ZeroShotLexicon, LexiconError> {
    let table = match category {
        SynthCategory::Coffee => COFFEE_LEXICON,
        SynthCategory::Tea => TEA_LEXICON,
    };
    let term = |&(t, w, _): &(&str, f64, bool)| WeightedTerm {
        term: t.to_string(),
        weight: w,
    };
    let positive = table.iter().filter(|e| e.2).map(term).collect();
    let negative = table.iter().filter(|e| !e.2).map(term).collect();
    ZeroShotLexicon::new(positive, negative, temperature)
}

/// Lexicon file text for a category, in the `term<TAB>weight<TAB>+|-` format.
pub fn default_lexicon_text(category: SynthCategory) -> String {
    default_lexicon(category, 1.0).map(|l| l.to_lines()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    #[test]
    fn exact_counts() {
        let spec = SynthSpec {
            size: 1000,
            ..SynthSpec::default()
        };
        let items = generate_with_kinds(&spec).unwrap();
        assert_eq!(items.len(), 1000);
        let count = |k| items.iter().filter(|(_, kind)| *kind == k).count();
        assert_eq!(count(ItemKind::Positive), 100);
        assert_eq!(count(ItemKind::Ambiguous), 50);
        assert_eq!(count(ItemKind::Negative), 850);
        assert_eq!(items.iter().filter(|(r, _)| r.label == Some(true)).count(), 100);
        let ids: BTreeSet<_> = items.iter().map(|(r, _)| r.id.clone()).collect();
        assert_eq!(ids.len(), 1000);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SynthSpec {
            size: 300,
            ..SynthSpec::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SynthSpec {
            seed: 1,
            ..spec.clone()
        };
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn rejects_bad_fractions() {
        let bad = SynthSpec {
            positive_fraction: 1.5,
            ..SynthSpec::default()
        };
        assert!(matches!(bad.validate(), Err(SynthError::Fraction { .. })));
        let sum = SynthSpec {
            positive_fraction: 0.7,
            ambiguous_fraction: 0.4,
            ..SynthSpec::default()
        };
        assert!(matches!(sum.validate(), Err(SynthError::FractionSum(_))));
    }

    #[test]
    fn ambiguous_items_score_mid_range() {
        for category in [SynthCategory::Coffee, SynthCategory::Tea] {
            let lex = default_lexicon(category, 1.0).unwrap();
            for name in category.ambiguous() {
                let s = lex.raw_score(name);
                assert!(s > 0.0 && s < 0.5, "{name}: {s}");
            }
            for name in category.family() {
                assert!(lex.raw_score(name) >= 0.0, "{name}");
            }
        }
    }

    #[test]
    fn lexicon_text_round_trips() {
        let text = default_lexicon_text(SynthCategory::Tea);
        let parsed = ZeroShotLexicon::parse(&text, 1.0).unwrap();
        assert_eq!(parsed, default_lexicon(SynthCategory::Tea, 1.0).unwrap());
    }
}
