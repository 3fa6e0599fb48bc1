//! SAE-feature interventions: ranking, the top-k sweep, injection and
//! ablation patches, semantic logit-difference metrics and controls.

mod report;
mod robustness;
mod sweep;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::ProbeModel;
use crate::relation::{RelationLabel, N_CLASSES};

pub use report::{
    necessity_report, peak_necessity, peak_sufficiency, random_control, sufficiency_report, InterventionReport,
    LatentSet, PatchMode, ReportOptions, STD_DENOMINATOR,
};
pub use robustness::{robustness_row, FrozenPatch, RobustnessRow};
pub use sweep::{choose_k, selection_score, sweep_k, ScoreVariant, SweepConfig, SweepOutcome};

/// Latent indices of one relation ordered by decreasing `|w|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub relation: RelationLabel,
    pub layer: usize,
    pub ranked_indices: Vec<usize>,
}

/// Indices sorted by decreasing `|w_j|`, lower index first on ties.
pub fn rank_by_magnitude(w: ArrayView1<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()).then(a.cmp(&b)));
    idx
}

/// Ranks latents by the magnitude of their coefficient in the probe row of
/// `relation`.
pub fn rank_features(probe: &ProbeModel, relation: RelationLabel, layer: usize) -> Result<FeatureRanking> {
    if relation == RelationLabel::Random {
        return Err(Error::InvalidTarget(relation));
    }
    let row = probe
        .class_index(relation)
        .ok_or(Error::AbsentClass(relation.index()))?;
    Ok(FeatureRanking {
        relation,
        layer,
        ranked_indices: rank_by_magnitude(probe.weights.row(row)),
    })
}

fn check_target(target: RelationLabel) -> Result<()> {
    if target.is_semantic() {
        Ok(())
    } else {
        Err(Error::InvalidTarget(target))
    }
}

/// `logit_t - max_{c not in {t, random}} logit_c` over the five-class logit
/// vector.
pub fn ld_sem(logits: &[f64], target: RelationLabel) -> Result<f64> {
    check_target(target)?;
    if logits.len() != N_CLASSES {
        return Err(Error::Shape(format!("expected {N_CLASSES} logits, got {}", logits.len())));
    }
    let rival = RelationLabel::SEMANTIC
        .iter()
        .filter(|&&c| c != target)
        .map(|c| logits[c.index()])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(logits[target.index()] - rival)
}

/// Argmax over the four semantic classes (the no-relation class is
/// excluded); lowest class index on ties.
pub fn semantic_prediction(logits: &[f64]) -> RelationLabel {
    let mut best = RelationLabel::Synonym;
    for c in RelationLabel::SEMANTIC {
        if logits[c.index()] > logits[best.index()] {
            best = c;
        }
    }
    best
}

fn rows(m: ArrayView2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn check_pair(before: ArrayView2<f64>, after: ArrayView2<f64>) -> Result<()> {
    if before.dim() != after.dim() || before.ncols() != N_CLASSES {
        return Err(Error::Shape(format!(
            "logit matrices {:?} and {:?} must match and have {N_CLASSES} columns",
            before.dim(),
            after.dim()
        )));
    }
    if before.nrows() == 0 {
        return Err(Error::Empty("no items".into()));
    }
    Ok(())
}

/// `P[pred_sem(after) = t] - P[pred_sem(before) = t]`.
pub fn delta_flip_rate(before: ArrayView2<f64>, after: ArrayView2<f64>, target: RelationLabel) -> Result<f64> {
    check_target(target)?;
    check_pair(before, after)?;
    let n = before.nrows() as f64;
    let hits = |m: ArrayView2<f64>| rows(m).into_iter().filter(|r| semantic_prediction(r) == target).count() as f64;
    Ok((hits(after) - hits(before)) / n)
}

/// `P[pred_sem(before) = t and pred_sem(after) != t]`.
pub fn drop_rate(before: ArrayView2<f64>, after: ArrayView2<f64>, target: RelationLabel) -> Result<f64> {
    check_target(target)?;
    check_pair(before, after)?;
    let dropped = rows(before)
        .into_iter()
        .zip(rows(after))
        .filter(|(b, a)| semantic_prediction(b) == target && semantic_prediction(a) != target)
        .count();
    Ok(dropped as f64 / before.nrows() as f64)
}

fn check_k(ranking: &[usize], k: usize, m: usize) -> Result<()> {
    if k > ranking.len() {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds ranking length {}", ranking.len())));
    }
    if let Some(&bad) = ranking[..k].iter().find(|&&j| j >= m) {
        return Err(Error::Shape(format!("latent index {bad} out of range for {m} latents")));
    }
    Ok(())
}

/// Sets the first `k` ranked latents of `z` to `values[j]`.
pub fn inject(z: &[f64], ranking: &[usize], k: usize, values: &[f64]) -> Result<Vec<f64>> {
    check_k(ranking, k, z.len())?;
    if values.len() != z.len() {
        return Err(Error::Shape(format!("{} injection values for {} latents", values.len(), z.len())));
    }
    let mut out = z.to_vec();
    for &j in &ranking[..k] {
        out[j] = values[j];
    }
    Ok(out)
}

/// Sets the first `k` ranked latents of `z` to zero.
pub fn ablate(z: &[f64], ranking: &[usize], k: usize) -> Result<Vec<f64>> {
    check_k(ranking, k, z.len())?;
    let mut out = z.to_vec();
    for &j in &ranking[..k] {
        out[j] = 0.0;
    }
    Ok(out)
}

/// Per-latent mean over the rows of `latents` labeled `relation`.
pub fn injection_values(latents: ArrayView2<f64>, labels: &[RelationLabel], relation: RelationLabel) -> Result<Array1<f64>> {
    if latents.nrows() != labels.len() {
        return Err(Error::Shape(format!("{} latent rows for {} labels", latents.nrows(), labels.len())));
    }
    let mut sum = Array1::zeros(latents.ncols());
    let mut n = 0usize;
    for (row, &l) in latents.rows().into_iter().zip(labels) {
        if l == relation {
            sum += &row;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::AbsentClass(relation.index()));
    }
    Ok(sum / n as f64)
}

/// Applies `patch` to every row and returns the patched matrix.
pub(crate) fn patch_rows(z: ArrayView2<f64>, patch: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(z.dim());
    for (i, row) in z.rows().into_iter().enumerate() {
        let p = patch(&row.to_vec())?;
        out.row_mut(i).assign(&ArrayView1::from(&p[..]));
    }
    Ok(out)
}

/// Five-class logits in fixed class order; the probe must cover all five.
pub(crate) fn full_logits(probe: &ProbeModel, z: ArrayView2<f64>) -> Result<Array2<f64>> {
    if let Some(missing) = RelationLabel::ALL.iter().find(|c| probe.class_index(**c).is_none()) {
        return Err(Error::AbsentClass(missing.index()));
    }
    probe.logits(z)
}
