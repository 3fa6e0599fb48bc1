//! Construction of the five-class relation dataset from a [`LexicalDB`].

mod balance;
mod io;
mod prompts;
mod split;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation::RelationLabel;
use crate::rng;
use crate::wordnet::{LexicalDB, Pos};

pub use balance::{enforce_pos_balance, pos_quotas, select_balanced, PosTargets};
pub use io::{read_dataset, read_word_list, write_dataset, write_word_list, DatasetManifest, WordListManifest};
pub use prompts::{apply_prompts, render, PromptInstance, PromptSet, Split, SplitPair};
pub use split::{shared_lemmas, split_lemma_disjoint, LemmaSplit};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationPair {
    pub word_a: String,
    pub word_b: String,
    pub label: RelationLabel,
    /// Part of speech of `word_a`.
    pub pos: Pos,
}

impl RelationPair {
    pub fn unordered_key(&self) -> (String, String) {
        unordered(&self.word_a, &self.word_b)
    }
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Longer than two characters, ASCII alphabetic, lowercase. Underscores and
/// hyphens fail the alphabetic test.
pub fn passes_lexical_filter(word: &str) -> bool {
    word.len() > 2 && word.bytes().all(|b| b.is_ascii_lowercase())
}

/// Unordered word pairs already claimed by some relation. Shared across
/// extraction calls so that hypernym and hyponym sets never overlap.
#[derive(Debug, Clone, Default)]
pub struct PairExclusion {
    pairs: BTreeSet<(String, String)>,
}

impl PairExclusion {
    pub fn contains(&self, a: &str, b: &str) -> bool {
        self.pairs.contains(&unordered(a, b))
    }

    pub fn insert_all<'a>(&mut self, pairs: impl IntoIterator<Item = &'a RelationPair>) {
        for p in pairs {
            self.pairs.insert(p.unordered_key());
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Every filtered pair for a semantic relation, in a canonical order, with
/// duplicates (as unordered pairs) and excluded pairs removed.
///
/// Hypernym pairs read `(specific, general)`, hyponym pairs
/// `(general, specific)`, e.g. `dog -> animal` and `dog -> beagle`.
pub fn candidate_pairs(db: &LexicalDB, label: RelationLabel, exclude: &PairExclusion) -> Result<Vec<RelationPair>> {
    let mut raw: Vec<RelationPair> = Vec::new();
    let mut push = |a: &str, b: &str, pos: Pos| {
        if a != b && passes_lexical_filter(a) && passes_lexical_filter(b) {
            raw.push(RelationPair {
                word_a: a.to_string(),
                word_b: b.to_string(),
                label,
                pos,
            });
        }
    };
    match label {
        RelationLabel::Synonym => {
            for s in db.synsets.values() {
                for (i, a) in s.lemmas.iter().enumerate() {
                    for b in &s.lemmas[i + 1..] {
                        push(a, b, s.id.pos);
                    }
                }
            }
        }
        RelationLabel::Antonym => {
            for e in &db.antonyms {
                let (Some(from), Some(to)) = (db.synset(e.from), db.synset(e.to)) else {
                    continue;
                };
                let pick = |lemmas: &'_ [String], w: Option<usize>| -> Vec<String> {
                    match w {
                        Some(i) => lemmas.get(i).cloned().into_iter().collect(),
                        None => lemmas.to_vec(),
                    }
                };
                for a in pick(&from.lemmas, e.from_word) {
                    for b in pick(&to.lemmas, e.to_word) {
                        push(&a, &b, e.from.pos);
                    }
                }
            }
        }
        RelationLabel::Hypernym | RelationLabel::Hyponym => {
            for e in &db.hypernyms {
                let (Some(spec), Some(gen)) = (db.synset(e.specific), db.synset(e.general)) else {
                    continue;
                };
                for s in &spec.lemmas {
                    for g in &gen.lemmas {
                        if label == RelationLabel::Hypernym {
                            push(s, g, e.specific.pos);
                        } else {
                            push(g, s, e.general.pos);
                        }
                    }
                }
            }
        }
        RelationLabel::Random => return Err(Error::InvalidTarget(RelationLabel::Random)),
    }
    let mut seen = BTreeSet::new();
    Ok(raw
        .into_iter()
        .filter(|p| !exclude.contains(&p.word_a, &p.word_b) && seen.insert(p.unordered_key()))
        .collect())
}

/// Candidates in a seeded random order.
pub fn shuffled_candidates(
    db: &LexicalDB,
    label: RelationLabel,
    seed: u64,
    exclude: &PairExclusion,
) -> Result<Vec<RelationPair>> {
    let mut pool = candidate_pairs(db, label, exclude)?;
    pool.shuffle(&mut rng::stream(seed, label.name()));
    Ok(pool)
}

/// Draws `n` distinct filtered pairs of a semantic relation and records them
/// in `exclude`.
pub fn extract_relation_pairs(
    db: &LexicalDB,
    label: RelationLabel,
    n: usize,
    seed: u64,
    exclude: &mut PairExclusion,
) -> Result<Vec<RelationPair>> {
    let pool = shuffled_candidates(db, label, seed, exclude)?;
    if pool.len() < n {
        return Err(Error::Exhausted {
            label,
            requested: n,
            available: pool.len(),
        });
    }
    let chosen: Vec<RelationPair> = pool.into_iter().take(n).collect();
    exclude.insert_all(&chosen);
    Ok(chosen)
}

#[derive(Debug, Clone)]
pub struct RandomPairConfig {
    /// Hypernym hops searched when verifying that two words are unrelated.
    pub closure_depth: usize,
    /// Rejection-sampling budget; `None` means `100 * n + 1000`.
    pub max_attempts: Option<usize>,
    /// Restrict both words to this part of speech.
    pub pos: Option<Pos>,
    /// Stream name suffix, so per-POS draws use independent streams.
    pub stream: String,
}

impl Default for RandomPairConfig {
    fn default() -> Self {
        Self {
            closure_depth: 10,
            max_attempts: None,
            pos: None,
            stream: String::new(),
        }
    }
}

/// Rejection-samples `n` word pairs that share no synset, antonym edge or
/// hypernym path (within `closure_depth` hops).
pub fn sample_random_pairs(
    db: &LexicalDB,
    n: usize,
    seed: u64,
    config: &RandomPairConfig,
    exclude: &PairExclusion,
) -> Result<Vec<RelationPair>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let pool: Vec<&str> = match config.pos {
        Some(pos) => db.words_with_pos(pos),
        None => db.words(),
    }
    .into_iter()
    .filter(|w| passes_lexical_filter(w))
    .collect();
    let budget = config.max_attempts.unwrap_or(100 * n + 1000);
    if pool.len() < 2 {
        return Err(Error::SamplingBudget {
            attempts: 0,
            found: 0,
            requested: n,
        });
    }
    let mut rng = rng::stream(seed, &format!("random{}", config.stream));
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        if attempts == budget {
            return Err(Error::SamplingBudget {
                attempts,
                found: out.len(),
                requested: n,
            });
        }
        attempts += 1;
        let a = pool[rng.random_range(0..pool.len())];
        let b = pool[rng.random_range(0..pool.len())];
        if a == b || exclude.contains(a, b) || seen.contains(&unordered(a, b)) {
            continue;
        }
        if db.related(a, b, config.closure_depth) {
            continue;
        }
        let pos = match config.pos {
            Some(p) => p,
            None => db.synsets_of(a).iter().map(|id| id.pos).min().unwrap_or(Pos::Noun),
        };
        seen.insert(unordered(a, b));
        out.push(RelationPair {
            word_a: a.to_string(),
            word_b: b.to_string(),
            label: RelationLabel::Random,
            pos,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub seed: u64,
    pub pairs_per_label: usize,
    pub pos_targets: PosTargets,
    pub pos_tolerance: f64,
    pub split_ratio: f64,
    /// Allowed per-label deviation (in pairs) of the split from the ratio.
    pub split_max_deviation: usize,
    pub closure_depth: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            pairs_per_label: 1000,
            pos_targets: PosTargets::wordnet(),
            pos_tolerance: 0.03,
            split_ratio: 0.8,
            split_max_deviation: 2,
            closure_depth: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub pairs: Vec<SplitPair>,
    pub instances: Vec<PromptInstance>,
    pub manifest: DatasetManifest,
    /// POS targets actually applied per label (renormalized where a part of
    /// speech has no candidates for that relation).
    pub effective_targets: Vec<(RelationLabel, PosTargets)>,
}

/// Builds the full dataset: per-relation POS-balanced extraction, random
/// controls, lemma-disjoint stratified split, prompt augmentation.
pub fn build_dataset(db: &LexicalDB, config: &DatasetConfig) -> Result<Dataset> {
    config.pos_targets.validate()?;
    let n = config.pairs_per_label;
    let mut exclude = PairExclusion::default();
    let mut all: Vec<RelationPair> = Vec::with_capacity(5 * n);
    let mut effective = Vec::new();

    for label in RelationLabel::SEMANTIC {
        let pool = shuffled_candidates(db, label, config.seed, &exclude)?;
        if pool.len() < n {
            return Err(Error::Exhausted {
                label,
                requested: n,
                available: pool.len(),
            });
        }
        let present: BTreeSet<Pos> = pool.iter().map(|p| p.pos).collect();
        let targets = config.pos_targets.restricted_to(&present)?;
        let chosen = select_balanced(&pool, &targets, n)?;
        exclude.insert_all(&chosen);
        effective.push((label, targets));
        all.extend(chosen);
    }

    // random controls: per-POS quotas, both words drawn from that POS
    let present: BTreeSet<Pos> = Pos::ALL
        .into_iter()
        .filter(|&p| db.words_with_pos(p).iter().filter(|w| passes_lexical_filter(w)).count() >= 2)
        .collect();
    let targets = config.pos_targets.restricted_to(&present)?;
    let mut randoms = Vec::with_capacity(n);
    for (pos, quota) in pos_quotas(n, &targets) {
        let cfg = RandomPairConfig {
            closure_depth: config.closure_depth,
            max_attempts: None,
            pos: Some(pos),
            stream: format!(":{pos}"),
        };
        let mut drawn = sample_random_pairs(db, quota, config.seed, &cfg, &exclude)?;
        exclude.insert_all(&drawn);
        randoms.append(&mut drawn);
    }
    randoms.shuffle(&mut rng::stream(config.seed, "random:order"));
    effective.push((RelationLabel::Random, targets));
    all.extend(randoms);

    let split = split_lemma_disjoint(&all, config.split_ratio, config.seed, config.split_max_deviation)?;
    let pairs: Vec<SplitPair> = all
        .into_iter()
        .zip(split.assignment.iter())
        .map(|(pair, &split)| SplitPair { pair, split })
        .collect();
    let instances = apply_prompts(&pairs, PromptSet::Original);
    let manifest = DatasetManifest::describe(config, &pairs, &instances, PromptSet::Original, None, &effective);
    Ok(Dataset {
        pairs,
        instances,
        manifest,
        effective_targets: effective,
    })
}
