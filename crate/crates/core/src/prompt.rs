//! Sentence-pair prompt used by remote scorers and oracles.

use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const COMMODITY_PLACEHOLDER: &str = "{commodity}";
pub const CATEGORY_PLACEHOLDER: &str = "{category}";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("first template must contain {{commodity}} exactly once (found {0})")]
    Commodity(usize),
    #[error("second template must contain {{category}} exactly once (found {0})")]
    Category(usize),
}

/// A next-sentence-style question: does `s2` follow `s1`?
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate", into = "RawTemplate")]
pub struct PromptTemplate {
    s1_template: String,
    s2_template: String,
    category: String,
}

#[derive(Serialize, Deserialize)]
struct RawTemplate {
    s1_template: String,
    s2_template: String,
    category: String,
}

impl TryFrom<RawTemplate> for PromptTemplate {
    type Error = PromptError;

    fn try_from(raw: RawTemplate) -> Result<Self, Self::Error> {
        PromptTemplate::new(raw.s1_template, raw.s2_template, raw.category)
    }
}

impl From<PromptTemplate> for RawTemplate {
    fn from(t: PromptTemplate) -> Self {
        RawTemplate {
            s1_template: t.s1_template,
            s2_template: t.s2_template,
            category: t.category,
        }
    }
}

impl PromptTemplate {
    pub const DEFAULT_S1: &'static str = "Commodity with name {commodity}";
    pub const DEFAULT_S2: &'static str = "is belong to {category} category.";

    pub fn new(
        s1_template: impl Into<String>,
        s2_template: impl Into<String>,
        category: impl Into<String>,
    ) -> Result<Self, PromptError> {
        let s1_template = s1_template.into();
        let s2_template = s2_template.into();
        let n1 = s1_template.matches(COMMODITY_PLACEHOLDER).count();
        if n1 != 1 {
            return Err(PromptError::Commodity(n1));
        }
        let n2 = s2_template.matches(CATEGORY_PLACEHOLDER).count();
        if n2 != 1 {
            return Err(PromptError::Category(n2));
        }
        Ok(PromptTemplate {
            s1_template,
            s2_template,
            category: category.into(),
        })
    }

    /// The default commodity/category sentence pair for `category`.
    pub fn for_category(category: &str) -> Self {
        Self::new(Self::DEFAULT_S1, Self::DEFAULT_S2, category).expect("default templates are valid")
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    /// Substitutes both placeholders in a single pass; braces inside the
    /// substituted values are left alone.
    pub fn render(&self, commodity: &str) -> (String, String) {
        (
            substitute_once(&self.s1_template, COMMODITY_PLACEHOLDER, commodity),
            substitute_once(&self.s2_template, CATEGORY_PLACEHOLDER, &self.category),
        )
    }
}

fn substitute_once(template: &str, placeholder: &str, value: &str) -> String {
    match template.split_once(placeholder) {
        Some((head, tail)) => {
            let mut out = String::with_capacity(template.len() + value.len());
            out.push_str(head);
            out.push_str(value);
            out.push_str(tail);
            out
        }
        None => template.to_string(),
    }
}

/// Renders the sentence pair for a point's text.
pub fn render_prompt(template: &PromptTemplate, text: &str) -> (String, String) {
    template.render(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coffee_pair() {
        let t = PromptTemplate::for_category("coffee");
        assert_eq!(
            render_prompt(&t, "latte"),
            (
                "Commodity with name latte".to_string(),
                "is belong to coffee category.".to_string()
            )
        );
    }

    #[test]
    fn tea_pair() {
        let (_, s2) = PromptTemplate::for_category("tea").render("oolong");
        assert_eq!(s2, "is belong to tea category.");
    }

    #[test]
    fn braces_are_literal() {
        let (s1, _) = PromptTemplate::for_category("coffee").render("a{b}");
        assert_eq!(s1, "Commodity with name a{b}");
        let (s1, _) = PromptTemplate::for_category("coffee").render("{commodity}");
        assert_eq!(s1, "Commodity with name {commodity}");
        let (_, s2) = PromptTemplate::for_category("{category}").render("x");
        assert_eq!(s2, "is belong to {category} category.");
    }

    #[test]
    fn placeholders_validated_at_construction() {
        assert_eq!(
            PromptTemplate::new("no slot", "{category}", "c"),
            Err(PromptError::Commodity(0))
        );
        assert_eq!(
            PromptTemplate::new("{commodity}{commodity}", "{category}", "c"),
            Err(PromptError::Commodity(2))
        );
        assert_eq!(
            PromptTemplate::new("{commodity}", "x", "c"),
            Err(PromptError::Category(0))
        );
        let bad = r#"{"s1_template":"x","s2_template":"{category}","category":"c"}"#;
        assert!(serde_json::from_str::<PromptTemplate>(bad).is_err());
    }
}
