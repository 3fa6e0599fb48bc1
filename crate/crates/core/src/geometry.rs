//! Cosine-similarity analysis of bare-word representations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationSet, StreamId};
use crate::dataset::RelationPair;
use crate::error::{Error, Result};
use crate::relation::RelationLabel;
use crate::rng;

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("cosine of vectors of length {} and {}", u.len(), v.len())));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let c = u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv);
    Ok(c.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityGroup {
    SynSyn,
    AntAnt,
    SynAnt,
    SynRand,
    AntRand,
}

impl SimilarityGroup {
    pub const ALL: [SimilarityGroup; 5] = [
        SimilarityGroup::SynSyn,
        SimilarityGroup::AntAnt,
        SimilarityGroup::SynAnt,
        SimilarityGroup::SynRand,
        SimilarityGroup::AntRand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimilarityGroup::SynSyn => "syn_syn",
            SimilarityGroup::AntAnt => "ant_ant",
            SimilarityGroup::SynAnt => "syn_ant",
            SimilarityGroup::SynRand => "syn_rand",
            SimilarityGroup::AntRand => "ant_rand",
        }
    }
}

impl fmt::Display for SimilarityGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSlot {
    Embedding,
    Middle,
    Final,
}

impl LayerSlot {
    pub const ALL: [LayerSlot; 3] = [LayerSlot::Embedding, LayerSlot::Middle, LayerSlot::Final];

    /// `(layer, stream)` read for this slot in an `n_layers`-deep model.
    pub fn locate(self, n_layers: usize) -> (usize, StreamId) {
        match self {
            LayerSlot::Embedding => (0, StreamId::Embedding),
            LayerSlot::Middle => (n_layers / 2, StreamId::PostResidual),
            LayerSlot::Final => (n_layers - 1, StreamId::PostResidual),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerSlot::Embedding => "embedding",
            LayerSlot::Middle => "middle",
            LayerSlot::Final => "final",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCell {
    pub group: SimilarityGroup,
    pub layer_slot: LayerSlot,
    pub mean_cos: f64,
    pub n_pairs: usize,
}

pub type WordPairs = BTreeMap<SimilarityGroup, Vec<(String, String)>>;

/// Word pairs compared in each group.
///
/// * `syn_syn`, `ant_ant`: the two words of every synonym / antonym pair.
/// * `syn_ant`: for every anchor word with both a synonym `s` and an
///   antonym `a` in the dataset, all `(s, a)` combinations.
/// * `syn_rand`, `ant_rand`: the first word of every synonym / antonym pair
///   against a seeded draw from the words of the random-class pairs.
pub fn build_groups(pairs: &[RelationPair], seed: u64) -> WordPairs {
    let of = |label: RelationLabel| -> Vec<(String, String)> {
        pairs
            .iter()
            .filter(|p| p.label == label)
            .map(|p| (p.word_a.clone(), p.word_b.clone()))
            .collect()
    };
    let syn = of(RelationLabel::Synonym);
    let ant = of(RelationLabel::Antonym);

    let neighbours = |list: &[(String, String)]| {
        let mut m: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (a, b) in list {
            m.entry(a.clone()).or_default().insert(b.clone());
            m.entry(b.clone()).or_default().insert(a.clone());
        }
        m
    };
    let (syn_of, ant_of) = (neighbours(&syn), neighbours(&ant));
    let mut syn_ant = Vec::new();
    for (anchor, synonyms) in &syn_of {
        if let Some(antonyms) = ant_of.get(anchor) {
            for s in synonyms {
                for a in antonyms {
                    if s != a {
                        syn_ant.push((s.clone(), a.clone()));
                    }
                }
            }
        }
    }

    let random_words: Vec<String> = pairs
        .iter()
        .filter(|p| p.label == RelationLabel::Random)
        .flat_map(|p| [p.word_a.clone(), p.word_b.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let with_random = |list: &[(String, String)], name: &str| -> Vec<(String, String)> {
        let mut rng = rng::stream(seed, name);
        list.iter()
            .filter_map(|(a, b)| {
                let candidates: Vec<&String> = random_words.iter().filter(|w| *w != a && *w != b).collect();
                candidates.choose(&mut rng).map(|r| (a.clone(), (*r).clone()))
            })
            .collect()
    };
    let syn_rand = with_random(&syn, "geometry:syn_rand");
    let ant_rand = with_random(&ant, "geometry:ant_rand");
    BTreeMap::from([
        (SimilarityGroup::SynSyn, syn),
        (SimilarityGroup::AntAnt, ant),
        (SimilarityGroup::SynAnt, syn_ant),
        (SimilarityGroup::SynRand, syn_rand),
        (SimilarityGroup::AntRand, ant_rand),
    ])
}

/// Mean within-pair cosine of one group, looking vectors up in `vectors`.
pub fn group_similarity(
    vectors: &BTreeMap<String, Vec<f64>>,
    group: SimilarityGroup,
    pairs: &[(String, String)],
    slot: LayerSlot,
) -> Result<SimilarityCell> {
    if pairs.is_empty() {
        return Err(Error::Empty(format!("similarity group {group}")));
    }
    let lookup = |w: &String| {
        vectors
            .get(w)
            .ok_or_else(|| Error::InvalidArgument(format!("no representation for word '{w}'")))
    };
    let mut sum = 0.0;
    for (a, b) in pairs {
        sum += cosine(lookup(a)?, lookup(b)?)?;
    }
    Ok(SimilarityCell {
        group,
        layer_slot: slot,
        mean_cos: sum / pairs.len() as f64,
        n_pairs: pairs.len(),
    })
}

/// Word → vector map for one layer slot of a word-level activation set
/// (instance `i` is `words[i]`).
pub fn slot_vectors(acts: &ActivationSet, words: &[String], slot: LayerSlot) -> Result<BTreeMap<String, Vec<f64>>> {
    if words.len() != acts.n_instances() {
        return Err(Error::Shape(format!("{} words for {} activation rows", words.len(), acts.n_instances())));
    }
    let (layer, stream) = slot.locate(acts.n_layers());
    words
        .iter()
        .enumerate()
        .map(|(i, w)| Ok((w.clone(), acts.vector(i, layer, stream)?.iter().map(|&x| f64::from(x)).collect())))
        .collect()
}

/// Every non-empty (group, slot) cell; empty groups are reported by name.
pub fn similarity_table(
    acts: &ActivationSet,
    words: &[String],
    groups: &WordPairs,
) -> Result<(Vec<SimilarityCell>, Vec<SimilarityGroup>)> {
    let mut cells = Vec::new();
    let empty: Vec<SimilarityGroup> = groups.iter().filter(|(_, p)| p.is_empty()).map(|(g, _)| *g).collect();
    for slot in LayerSlot::ALL {
        let vectors = slot_vectors(acts, words, slot)?;
        for (group, pairs) in groups {
            if !pairs.is_empty() {
                cells.push(group_similarity(&vectors, *group, pairs, slot)?);
            }
        }
    }
    Ok((cells, empty))
}
