use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RelationPair;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A template family used to turn a word pair into a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSet {
    /// The three templates probes are trained on.
    Original,
    /// A held-out template never seen during training.
    Novel,
    /// The bare pair with no connecting words.
    #[serde(alias = "none")]
    NoContext,
}

const ORIGINAL: [&str; 3] = [
    "The word {A} relates to {B}",
    "{A} and {B} are connected",
    "Consider {A} and {B} together",
];
const NOVEL: [&str; 1] = ["{A} occurs with {B}"];
const NO_CONTEXT: [&str; 1] = ["{A} {B}"];

impl PromptSet {
    pub const ALL: [PromptSet; 3] = [PromptSet::Original, PromptSet::Novel, PromptSet::NoContext];

    pub fn templates(self) -> &'static [&'static str] {
        match self {
            PromptSet::Original => &ORIGINAL,
            PromptSet::Novel => &NOVEL,
            PromptSet::NoContext => &NO_CONTEXT,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PromptSet::Original => "original",
            PromptSet::Novel => "novel",
            PromptSet::NoContext => "no_context",
        }
    }
}

impl fmt::Display for PromptSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        PromptSet::ALL
            .into_iter()
            .find(|p| p.name() == s || (s == "none" && *p == PromptSet::NoContext))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown prompt set '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPair {
    pub pair: RelationPair,
    pub split: Split,
}

/// One rendered prompt: a pair under a specific template.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptInstance {
    pub pair: RelationPair,
    pub template_id: u8,
    pub text: String,
    pub split: Split,
    pub prompt_set: PromptSet,
}

/// Replaces the `{A}` and `{B}` slots of a template.
pub fn render(template: &str, a: &str, b: &str) -> String {
    template.replace("{A}", a).replace("{B}", b)
}

/// Renders every pair under every template of `set`, pair-major.
pub fn apply_prompts(pairs: &[SplitPair], set: PromptSet) -> Vec<PromptInstance> {
    let templates = set.templates();
    let mut out = Vec::with_capacity(pairs.len() * templates.len());
    for sp in pairs {
        for (id, t) in templates.iter().enumerate() {
            out.push(PromptInstance {
                pair: sp.pair.clone(),
                template_id: id as u8,
                text: render(t, &sp.pair.word_a, &sp.pair.word_b),
                split: sp.split,
                prompt_set: set,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::RelationLabel;
    use crate::wordnet::Pos;

    #[test]
    fn renders_all_three_original_templates() {
        let sp = SplitPair {
            pair: RelationPair {
                word_a: "hot".into(),
                word_b: "cold".into(),
                label: RelationLabel::Antonym,
                pos: Pos::Adj,
            },
            split: Split::Train,
        };
        let texts: Vec<String> = apply_prompts(&[sp], PromptSet::Original).into_iter().map(|i| i.text).collect();
        assert_eq!(
            texts,
            ["The word hot relates to cold", "hot and cold are connected", "Consider hot and cold together"]
        );
    }

    #[test]
    fn held_out_sets() {
        assert_eq!(render(NOVEL[0], "x", "y"), "x occurs with y");
        assert_eq!(render(NO_CONTEXT[0], "x", "y"), "x y");
        assert_eq!("no_context".parse::<PromptSet>().unwrap(), PromptSet::NoContext);
    }
}
