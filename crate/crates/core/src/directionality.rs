//! Order-reversed evaluation sets and the hypernym/hyponym asymmetry.

use serde::{Deserialize, Serialize};

use crate::dataset::{render, PromptInstance, RelationPair};
use crate::error::{Error, Result};
use crate::probe::{bootstrap_ci, BootstrapCI};
use crate::relation::RelationLabel;

/// Relations that take part in the reversal experiment.
pub const REVERSIBLE: [RelationLabel; 3] = [RelationLabel::Hypernym, RelationLabel::Hyponym, RelationLabel::Random];

/// Swaps the two words of an instance, re-renders its template and inverts
/// hypernym ↔ hyponym. Random instances keep their label.
pub fn reverse_instance(inst: &PromptInstance) -> Result<PromptInstance> {
    if !REVERSIBLE.contains(&inst.pair.label) {
        return Err(Error::UnsupportedRelation(inst.pair.label));
    }
    let template = inst
        .prompt_set
        .templates()
        .get(inst.template_id as usize)
        .ok_or_else(|| Error::InvalidArgument(format!("template id {} out of range", inst.template_id)))?;
    let pair = RelationPair {
        word_a: inst.pair.word_b.clone(),
        word_b: inst.pair.word_a.clone(),
        label: inst.pair.label.inverted(),
        pos: inst.pair.pos,
    };
    Ok(PromptInstance {
        text: render(template, &pair.word_a, &pair.word_b),
        pair,
        template_id: inst.template_id,
        split: inst.split,
        prompt_set: inst.prompt_set,
    })
}

pub fn build_reversed_set(instances: &[PromptInstance]) -> Result<Vec<PromptInstance>> {
    instances.iter().map(reverse_instance).collect()
}

/// Per-layer predictions on one evaluation set.
#[derive(Debug, Clone)]
pub struct EvalSet {
    /// Label each item is scored against.
    pub gold: Vec<RelationLabel>,
    /// Relation of the item in the original (unreversed) set.
    pub origin: Vec<RelationLabel>,
    /// `predictions[l][i]`: probe prediction at layer `l` for item `i`.
    pub predictions: Vec<Vec<RelationLabel>>,
}

impl EvalSet {
    fn correct(&self, layer: usize, i: usize) -> bool {
        self.predictions[layer][i] == self.gold[i]
    }

    fn members(&self, relation: RelationLabel) -> Vec<usize> {
        (0..self.gold.len()).filter(|&i| self.origin[i] == relation).collect()
    }

    /// Accuracy at every layer over items originating from `relation`.
    pub fn layer_accuracy(&self, relation: RelationLabel) -> Result<Vec<f64>> {
        let members = self.members(relation);
        if members.is_empty() {
            return Err(Error::AbsentClass(relation.index()));
        }
        Ok((0..self.predictions.len())
            .map(|l| members.iter().filter(|&&i| self.correct(l, i)).count() as f64 / members.len() as f64)
            .collect())
    }

    fn validate(&self) -> Result<()> {
        let n = self.gold.len();
        if self.origin.len() != n || self.predictions.iter().any(|p| p.len() != n) || self.predictions.is_empty() {
            return Err(Error::Shape("evaluation set fields disagree in length".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalResult {
    pub relation: RelationLabel,
    pub acc_orig: BootstrapCI,
    pub acc_flip: BootstrapCI,
    /// `acc_flip - acc_orig` (each at its own peak layer).
    pub delta: f64,
    /// Both sets resampled independently, peaks held fixed.
    pub delta_ci: BootstrapCI,
    pub peak_layer_orig: usize,
    pub peak_layer_flip: usize,
}

fn peak(accs: &[f64]) -> usize {
    crate::probe::argmax(accs)
}

fn peak_ci(set: &EvalSet, relation: RelationLabel, layer: usize, replicates: usize, seed: u64) -> Result<BootstrapCI> {
    let members = set.members(relation);
    let strata = vec![0; members.len()];
    bootstrap_ci(&strata, replicates, seed, |idx| {
        Ok(idx.iter().filter(|&&k| set.correct(layer, members[k])).count() as f64 / idx.len() as f64)
    })
}

fn gap_ci(
    orig: &EvalSet,
    flip: &EvalSet,
    relation: RelationLabel,
    (po, pf): (usize, usize),
    replicates: usize,
    seed: u64,
) -> Result<BootstrapCI> {
    let (mo, mf) = (orig.members(relation), flip.members(relation));
    let hits: Vec<bool> = mo
        .iter()
        .map(|&i| orig.correct(po, i))
        .chain(mf.iter().map(|&i| flip.correct(pf, i)))
        .collect();
    let strata: Vec<usize> = (0..hits.len()).map(|k| usize::from(k >= mo.len())).collect();
    bootstrap_ci(&strata, replicates, seed, |idx| {
        let (mut n, mut c) = ([0usize; 2], [0usize; 2]);
        for &k in idx {
            n[strata[k]] += 1;
            c[strata[k]] += usize::from(hits[k]);
        }
        Ok(c[1] as f64 / n[1] as f64 - c[0] as f64 / n[0] as f64)
    })
}

/// Peak-layer accuracy on the original and reversed sets for each
/// reversible relation. Peaks are chosen independently on each set.
pub fn reversal_gap(orig: &EvalSet, flip: &EvalSet, replicates: usize, seed: u64) -> Result<Vec<ReversalResult>> {
    orig.validate()?;
    flip.validate()?;
    REVERSIBLE
        .iter()
        .map(|&relation| {
            let (ao, af) = (orig.layer_accuracy(relation)?, flip.layer_accuracy(relation)?);
            let (po, pf) = (peak(&ao), peak(&af));
            let salt = relation.index() as u64;
            let acc_orig = peak_ci(orig, relation, po, replicates, seed ^ salt)?;
            let acc_flip = peak_ci(flip, relation, pf, replicates, seed ^ (salt << 8))?;
            let delta_ci = gap_ci(orig, flip, relation, (po, pf), replicates, seed ^ (salt << 16))?;
            Ok(ReversalResult {
                relation,
                delta: af[pf] - ao[po],
                delta_ci,
                acc_orig,
                acc_flip,
                peak_layer_orig: po,
                peak_layer_flip: pf,
            })
        })
        .collect()
}
