use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The five probe classes. The discriminant is the class index used by every
/// probe, logit vector and prediction in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationLabel {
    Synonym = 0,
    Antonym = 1,
    Hypernym = 2,
    Hyponym = 3,
    /// No-relation control class.
    Random = 4,
}

pub const N_CLASSES: usize = 5;

impl RelationLabel {
    pub const ALL: [RelationLabel; N_CLASSES] = [
        RelationLabel::Synonym,
        RelationLabel::Antonym,
        RelationLabel::Hypernym,
        RelationLabel::Hyponym,
        RelationLabel::Random,
    ];

    pub const SEMANTIC: [RelationLabel; 4] = [
        RelationLabel::Synonym,
        RelationLabel::Antonym,
        RelationLabel::Hypernym,
        RelationLabel::Hyponym,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationLabel::Synonym => "synonym",
            RelationLabel::Antonym => "antonym",
            RelationLabel::Hypernym => "hypernym",
            RelationLabel::Hyponym => "hyponym",
            RelationLabel::Random => "random",
        }
    }

    pub fn is_semantic(self) -> bool {
        self != RelationLabel::Random
    }

    /// Label after swapping the word order: hypernym and hyponym trade
    /// places, symmetric relations are unchanged.
    pub fn inverted(self) -> Self {
        match self {
            RelationLabel::Hypernym => RelationLabel::Hyponym,
            RelationLabel::Hyponym => RelationLabel::Hypernym,
            other => other,
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown relation label {s:?}")))
    }
}
