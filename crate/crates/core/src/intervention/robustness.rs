use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

use super::{ablate, delta_flip_rate, drop_rate, full_logits, inject, patch_rows, LatentSet};
use crate::depth::depth_profile;
use crate::error::{Error, Result};
use crate::probe::ProbeModel;
use crate::relation::RelationLabel;

/// A patch fixed on the original prompts: SAE probe, ranking, `k` and
/// injection values for one relation at one layer.
#[derive(Debug, Clone)]
pub struct FrozenPatch<'a> {
    pub relation: RelationLabel,
    pub layer: usize,
    pub probe: &'a ProbeModel,
    pub ranking: &'a [usize],
    pub k: usize,
    pub injection_values: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub prompt_set: String,
    /// Layer-averaged dense-probe accuracy, averaged over the semantic
    /// relations.
    pub mean_acc: f64,
    /// Best single-layer accuracy of the same average.
    pub peak_acc: f64,
    /// Injection ΔFR averaged over the frozen patches.
    pub delta_fr: f64,
    /// Ablation DR averaged over the frozen patches.
    pub drop_rate: f64,
}

/// One row of the robustness table for a prompt set.
///
/// `layer_recall[l]` holds per-relation recall of the frozen dense probe at
/// layer `l` on the new prompts; `latents` returns the SAE latents of the
/// new test prompts at a layer.
pub fn robustness_row<'a>(
    prompt_set: &str,
    layer_recall: &[std::collections::BTreeMap<RelationLabel, f64>],
    patches: &[FrozenPatch<'_>],
    latents: impl Fn(usize) -> Result<LatentSet<'a>>,
) -> Result<RobustnessRow> {
    if layer_recall.is_empty() || patches.is_empty() {
        return Err(Error::Empty("robustness needs layers and frozen patches".into()));
    }
    let per_layer: Vec<f64> = layer_recall
        .iter()
        .map(|m| RelationLabel::SEMANTIC.iter().map(|r| m.get(r).copied().unwrap_or(0.0)).sum::<f64>() / 4.0)
        .collect();
    let profile = depth_profile(&per_layer);
    let (mean_acc, peak_acc) = match profile {
        Ok(p) => (p.mean, p.peak),
        Err(Error::UndefinedCenterOfMass) => (0.0, 0.0),
        Err(e) => return Err(e),
    };

    let mut fr = 0.0;
    let mut dr = 0.0;
    for p in patches {
        let set = latents(p.layer)?;
        let rows_of = |label: RelationLabel| {
            let idx: Vec<usize> = (0..set.labels.len()).filter(|&i| set.labels[i] == label).collect();
            set.latents.select(Axis(0), &idx)
        };
        let neutral = rows_of(RelationLabel::Random);
        let targets = rows_of(p.relation);
        if neutral.nrows() == 0 || targets.nrows() == 0 {
            return Err(Error::Empty(format!("robustness items for {}", p.relation)));
        }
        let values = p.injection_values.as_slice().expect("contiguous");
        let injected = patch_rows(neutral.view(), |z| inject(z, p.ranking, p.k, values))?;
        fr += delta_flip_rate(
            full_logits(p.probe, neutral.view())?.view(),
            full_logits(p.probe, injected.view())?.view(),
            p.relation,
        )?;
        let ablated = patch_rows(targets.view(), |z| ablate(z, p.ranking, p.k))?;
        dr += drop_rate(
            full_logits(p.probe, targets.view())?.view(),
            full_logits(p.probe, ablated.view())?.view(),
            p.relation,
        )?;
    }
    let n = patches.len() as f64;
    Ok(RobustnessRow {
        prompt_set: prompt_set.to_string(),
        mean_acc,
        peak_acc,
        delta_fr: fr / n,
        drop_rate: dr / n,
    })
}
