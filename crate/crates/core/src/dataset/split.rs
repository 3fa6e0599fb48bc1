use std::collections::BTreeMap;

use rand::Rng;

use super::prompts::Split;
use super::RelationPair;
use crate::error::{Error, Result};
use crate::relation::N_CLASSES;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaSplit {
    /// Split of each input pair, in input order.
    pub assignment: Vec<Split>,
    pub achieved_ratio: f64,
    /// Largest per-label distance (in pairs) from the rounded target.
    pub max_label_deviation: usize,
    pub n_components: usize,
}

impl LemmaSplit {
    pub fn partition<'a>(&self, pairs: &'a [RelationPair]) -> (Vec<&'a RelationPair>, Vec<&'a RelationPair>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (p, s) in pairs.iter().zip(&self.assignment) {
            match s {
                Split::Train => train.push(p),
                Split::Test => test.push(p),
            }
        }
        (train, test)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn cost(train: &[usize; N_CLASSES], target: &[usize; N_CLASSES]) -> usize {
    train.iter().zip(target).map(|(&t, &g)| t.abs_diff(g)).sum()
}

/// Exchanges one train component with one test component if that lowers
/// the deviation. Returns whether a swap was made.
fn swap_once(
    order: &[usize],
    comp_counts: &[[usize; N_CLASSES]],
    in_train: &mut [bool],
    train: &mut [usize; N_CLASSES],
    target: &[usize; N_CLASSES],
) -> bool {
    let current = cost(train, target);
    let mut best: Option<(usize, usize, usize)> = None;
    for &a in order.iter().filter(|&&c| in_train[c]) {
        for &b in order.iter().filter(|&&c| !in_train[c]) {
            let mut moved = *train;
            for l in 0..N_CLASSES {
                moved[l] = moved[l] + comp_counts[b][l] - comp_counts[a][l];
            }
            let c = cost(&moved, target);
            if c < current && best.is_none_or(|(bc, _, _)| c < bc) {
                best = Some((c, a, b));
            }
        }
    }
    let Some((_, a, b)) = best else {
        return false;
    };
    for l in 0..N_CLASSES {
        train[l] = train[l] + comp_counts[b][l] - comp_counts[a][l];
    }
    in_train[a] = false;
    in_train[b] = true;
    true
}

/// Train/test split in which no lemma appears on both sides, stratified by
/// label.
///
/// Pairs sharing a lemma form connected components that must stay together.
/// Components are placed greedily, largest first, on whichever side brings
/// the per-label train counts closer to `round(ratio * n_label)`; a local
/// search then moves single components, or exchanges a train component for
/// a test component, while that strictly reduces the total deviation.
pub fn split_lemma_disjoint(
    pairs: &[RelationPair],
    ratio: f64,
    seed: u64,
    max_deviation: usize,
) -> Result<LemmaSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for p in pairs {
        for w in [p.word_a.as_str(), p.word_b.as_str()] {
            let next = ids.len();
            ids.entry(w).or_insert(next);
        }
    }
    let mut uf = UnionFind {
        parent: (0..ids.len()).collect(),
    };
    for p in pairs {
        uf.union(ids[p.word_a.as_str()], ids[p.word_b.as_str()]);
    }

    // component -> member pair indices, in order of first appearance
    let mut by_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut components: Vec<Vec<usize>> = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        let root = uf.find(ids[p.word_a.as_str()]);
        let c = *by_root.entry(root).or_insert_with(|| {
            components.push(Vec::new());
            components.len() - 1
        });
        components[c].push(i);
    }
    let mut rng = rng::stream(seed, "split");
    let tiebreak: Vec<u64> = components.iter().map(|_| rng.random()).collect();
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_by(|&a, &b| {
        components[b]
            .len()
            .cmp(&components[a].len())
            .then(tiebreak[a].cmp(&tiebreak[b]))
    });

    let label_counts = |c: &[usize]| {
        let mut counts = [0usize; N_CLASSES];
        for &i in c {
            counts[pairs[i].label.index()] += 1;
        }
        counts
    };
    let comp_counts: Vec<[usize; N_CLASSES]> = components.iter().map(|c| label_counts(c)).collect();
    let totals = label_counts(&(0..pairs.len()).collect::<Vec<_>>());
    let mut target = [0usize; N_CLASSES];
    for l in 0..N_CLASSES {
        target[l] = (ratio * totals[l] as f64).round() as usize;
    }
    let target_total: usize = target.iter().sum();

    let mut in_train = vec![false; components.len()];
    let mut train = [0usize; N_CLASSES];
    let add = |train: &[usize; N_CLASSES], c: &[usize; N_CLASSES]| {
        let mut t = *train;
        for l in 0..N_CLASSES {
            t[l] += c[l];
        }
        t
    };
    for &c in &order {
        let with = add(&train, &comp_counts[c]);
        let (cw, co) = (cost(&with, &target), cost(&train, &target));
        let to_train = cw < co || (cw == co && train.iter().sum::<usize>() < target_total);
        if to_train {
            train = with;
            in_train[c] = true;
        }
    }
    for _ in 0..1000 {
        let mut improved = false;
        for &c in order.iter().rev() {
            let mut moved = train;
            for l in 0..N_CLASSES {
                if in_train[c] {
                    moved[l] -= comp_counts[c][l];
                } else {
                    moved[l] += comp_counts[c][l];
                }
            }
            if cost(&moved, &target) < cost(&train, &target) {
                train = moved;
                in_train[c] = !in_train[c];
                improved = true;
            }
        }
        if !improved {
            improved = swap_once(&order, &comp_counts, &mut in_train, &mut train, &target);
        }
        if !improved {
            break;
        }
    }

    let mut assignment = vec![Split::Test; pairs.len()];
    for (c, members) in components.iter().enumerate() {
        if in_train[c] {
            for &i in members {
                assignment[i] = Split::Train;
            }
        }
    }
    let n_train: usize = train.iter().sum();
    let achieved_ratio = if pairs.is_empty() { 0.0 } else { n_train as f64 / pairs.len() as f64 };
    let max_label_deviation = (0..N_CLASSES).map(|l| train[l].abs_diff(target[l])).max().unwrap_or(0);
    if max_label_deviation > max_deviation {
        return Err(Error::SplitInfeasible {
            achieved_ratio,
            max_deviation: max_label_deviation,
        });
    }
    Ok(LemmaSplit {
        assignment,
        achieved_ratio,
        max_label_deviation,
        n_components: components.len(),
    })
}

/// Lemmas shared between the two sides (empty for a valid split).
pub fn shared_lemmas(pairs: &[RelationPair], assignment: &[Split]) -> Vec<String> {
    let mut train = std::collections::BTreeSet::new();
    let mut test = std::collections::BTreeSet::new();
    for (p, s) in pairs.iter().zip(assignment) {
        let side = if *s == Split::Train { &mut train } else { &mut test };
        side.insert(p.word_a.clone());
        side.insert(p.word_b.clone());
    }
    train.intersection(&test).cloned().collect()
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::RelationLabel;
    use crate::wordnet::Pos;

    fn pair(a: &str, b: &str, label: RelationLabel) -> RelationPair {
        RelationPair {
            word_a: a.into(),
            word_b: b.into(),
            label,
            pos: Pos::Noun,
        }
    }

    #[test]
    fn two_disjoint_pairs_split_evenly() {
        let pairs = [pair("aaa", "bbb", RelationLabel::Synonym), pair("ccc", "ddd", RelationLabel::Synonym)];
        let s = split_lemma_disjoint(&pairs, 0.5, 1, 2).unwrap();
        let (train, test) = s.partition(&pairs);
        assert_eq!((train.len(), test.len()), (1, 1));
    }

    #[test]
    fn chained_pairs_degrade_to_one_side() {
        // (a,b),(b,c) form one component: it cannot be split, so the report
        // carries the degraded 2/0 outcome.
        let pairs = [pair("aaa", "bbb", RelationLabel::Synonym), pair("bbb", "ccc", RelationLabel::Synonym)];
        let s = split_lemma_disjoint(&pairs, 0.5, 1, 2).unwrap();
        let (train, test) = s.partition(&pairs);
        assert_eq!((train.len(), test.len()), (2, 0));
        assert_eq!(s.achieved_ratio, 1.0);
        assert_eq!(s.n_components, 1);
        // with zero tolerance the same input is an error
        match split_lemma_disjoint(&pairs, 0.5, 1, 0) {
            Err(Error::SplitInfeasible { achieved_ratio, max_deviation }) => {
                assert_eq!(achieved_ratio, 1.0);
                assert_eq!(max_deviation, 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_degenerate_ratio() {
        assert!(split_lemma_disjoint(&[], 0.0, 1, 2).is_err());
        assert!(split_lemma_disjoint(&[], 1.0, 1, 2).is_err());
    }
}
