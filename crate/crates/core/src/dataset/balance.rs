use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::RelationPair;
use crate::error::{Error, Result};
use crate::relation::RelationLabel;
use crate::wordnet::Pos;

/// Target part-of-speech proportions, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PosTargets(pub BTreeMap<Pos, f64>);

impl PosTargets {
    /// Proportions of the full WordNet database: 66% nouns, 23% verbs, 11%
    /// adjectives.
    pub fn wordnet() -> Self {
        Self(BTreeMap::from([(Pos::Noun, 0.66), (Pos::Verb, 0.23), (Pos::Adj, 0.11)]))
    }

    pub fn get(&self, pos: Pos) -> f64 {
        self.0.get(&pos).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.values().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(Error::InvalidArgument("POS targets must lie in [0, 1]".into()));
        }
        let sum: f64 = self.0.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("POS targets sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Drops parts of speech outside `present` and renormalizes the rest.
    pub fn restricted_to(&self, present: &BTreeSet<Pos>) -> Result<Self> {
        let kept: BTreeMap<Pos, f64> = self
            .0
            .iter()
            .filter(|(p, &t)| present.contains(p) && t > 0.0)
            .map(|(&p, &t)| (p, t))
            .collect();
        let total: f64 = kept.values().sum();
        if kept.is_empty() || total <= 0.0 {
            let bucket = self.0.keys().next().map(|p| p.to_string()).unwrap_or_default();
            return Err(Error::PosUnattainable {
                bucket,
                needed: 1,
                available: 0,
            });
        }
        Ok(Self(kept.into_iter().map(|(p, t)| (p, t / total)).collect()))
    }
}

/// Integer per-bucket counts summing to `n`, by largest remainder (ties go
/// to the earlier part of speech).
pub fn pos_quotas(n: usize, targets: &PosTargets) -> Vec<(Pos, usize)> {
    let mut quotas: Vec<(Pos, usize, f64)> = targets
        .0
        .iter()
        .map(|(&p, &t)| {
            let exact = t * n as f64;
            (p, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        quotas[i].1 += 1;
    }
    quotas.into_iter().map(|(p, q, _)| (p, q)).collect()
}

fn pos_counts<'a>(pairs: impl IntoIterator<Item = &'a RelationPair>) -> BTreeMap<Pos, usize> {
    let mut counts = BTreeMap::new();
    for p in pairs {
        *counts.entry(p.pos).or_insert(0) += 1;
    }
    counts
}

fn within_tolerance(counts: &BTreeMap<Pos, usize>, total: usize, targets: &PosTargets, tolerance: f64) -> bool {
    if total == 0 {
        return false;
    }
    let keys: BTreeSet<Pos> = counts.keys().chain(targets.0.keys()).copied().collect();
    keys.into_iter().all(|p| {
        let share = counts.get(&p).copied().unwrap_or(0) as f64 / total as f64;
        (share - targets.get(p)).abs() <= tolerance + 1e-12
    })
}

/// Takes exactly `n` pairs from `pool` with per-POS quotas, preserving pool
/// order.
pub fn select_balanced(pool: &[RelationPair], targets: &PosTargets, n: usize) -> Result<Vec<RelationPair>> {
    targets.validate()?;
    let quotas: BTreeMap<Pos, usize> = pos_quotas(n, targets).into_iter().collect();
    let available = pos_counts(pool);
    for (&pos, &need) in &quotas {
        let have = available.get(&pos).copied().unwrap_or(0);
        if have < need {
            let label = pool.first().map(|p| p.label.name()).unwrap_or("?");
            return Err(Error::PosUnattainable {
                bucket: format!("{label}/{pos}"),
                needed: need,
                available: have,
            });
        }
    }
    let mut taken: BTreeMap<Pos, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(n);
    for p in pool {
        let quota = quotas.get(&p.pos).copied().unwrap_or(0);
        let t = taken.entry(p.pos).or_insert(0);
        if *t < quota {
            *t += 1;
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Subsamples each label's pairs so that its POS shares lie within
/// `tolerance` of `targets`. Labels already within tolerance are returned
/// unchanged; otherwise the largest balanced subset is kept, in input order.
pub fn enforce_pos_balance(pairs: &[RelationPair], targets: &PosTargets, tolerance: f64) -> Result<Vec<RelationPair>> {
    targets.validate()?;
    let mut keep = vec![false; pairs.len()];
    for label in RelationLabel::ALL {
        let idx: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].label == label).collect();
        if idx.is_empty() {
            continue;
        }
        let counts = pos_counts(idx.iter().map(|&i| &pairs[i]));
        if within_tolerance(&counts, idx.len(), targets, tolerance) {
            idx.iter().for_each(|&i| keep[i] = true);
            continue;
        }
        let feasible = (1..=idx.len()).rev().find_map(|total| {
            let quotas: BTreeMap<Pos, usize> = pos_quotas(total, targets).into_iter().collect();
            let fits = quotas.iter().all(|(p, &q)| counts.get(p).copied().unwrap_or(0) >= q);
            (fits && within_tolerance(&quotas, total, targets, tolerance)).then_some(quotas)
        });
        let Some(quotas) = feasible else {
            let full: BTreeMap<Pos, usize> = pos_quotas(idx.len(), targets).into_iter().collect();
            let (pos, need, have) = full
                .iter()
                .map(|(&p, &q)| (p, q, counts.get(&p).copied().unwrap_or(0)))
                .max_by_key(|&(_, q, h)| q.saturating_sub(h))
                .expect("targets are non-empty");
            return Err(Error::PosUnattainable {
                bucket: format!("{label}/{pos}"),
                needed: need,
                available: have,
            });
        };
        let mut taken: BTreeMap<Pos, usize> = BTreeMap::new();
        for &i in &idx {
            let t = taken.entry(pairs[i].pos).or_insert(0);
            if *t < quotas.get(&pairs[i].pos).copied().unwrap_or(0) {
                *t += 1;
                keep[i] = true;
            }
        }
    }
    Ok(pairs.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p.clone()).collect())
}
