use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::patch_rows;
use crate::error::{Error, Result};
use crate::probe::ProbeModel;
use crate::relation::RelationLabel;

/// How a candidate feature set is isolated when scoring it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreVariant {
    /// `logit_t(keep only K) - logit_t(all latents zero)`.
    KeepOnly,
    /// `logit_t(all latents) - logit_t(K removed)`.
    RemoveOnly,
}

/// Mean absolute change of the target-class logit when the top-`k` ranked
/// latents are isolated according to `variant`.
pub fn selection_score(
    probe: &ProbeModel,
    latents: ArrayView2<f64>,
    relation: RelationLabel,
    ranking: &[usize],
    k: usize,
    variant: ScoreVariant,
) -> Result<f64> {
    let m = latents.ncols();
    if k > m || k > ranking.len() {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {m} latents or ranking length")));
    }
    if latents.nrows() == 0 {
        return Err(Error::Empty("selection score over zero examples".into()));
    }
    let t = probe
        .class_index(relation)
        .ok_or(Error::AbsentClass(relation.index()))?;
    let mut in_k = vec![false; m];
    for &j in &ranking[..k] {
        in_k[j] = true;
    }
    let (hi, lo) = match variant {
        ScoreVariant::KeepOnly => (
            patch_rows(latents, |z| Ok(z.iter().zip(&in_k).map(|(v, &keep)| if keep { *v } else { 0.0 }).collect()))?,
            Array2::zeros(latents.dim()),
        ),
        ScoreVariant::RemoveOnly => (
            latents.to_owned(),
            patch_rows(latents, |z| Ok(z.iter().zip(&in_k).map(|(v, &rm)| if rm { 0.0 } else { *v }).collect()))?,
        ),
    };
    let (a, b) = (probe.logits(hi.view())?, probe.logits(lo.view())?);
    let total: f64 = a.column(t).iter().zip(b.column(t)).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / latents.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Candidate k values, ascending.
    pub grid: Vec<usize>,
    pub k_ref: usize,
    /// Fraction of the reference score a grid value must reach.
    pub cutoff: f64,
}

/// Grid for a 32,768-latent dictionary.
pub const REFERENCE_GRID: [usize; 9] = [32, 64, 128, 160, 192, 224, 256, 296, 320];
pub const REFERENCE_LATENTS: usize = 32_768;

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: REFERENCE_GRID.to_vec(),
            k_ref: 327,
            cutoff: 0.9,
        }
    }
}

impl SweepConfig {
    /// The reference grid rescaled to an `m`-latent dictionary, with
    /// `k_ref = ceil(0.01 * m)`.
    pub fn for_dictionary(m: usize) -> Self {
        if m == REFERENCE_LATENTS {
            return Self::default();
        }
        let k_ref = (m as f64 * 0.01).ceil().max(1.0) as usize;
        let mut grid: Vec<usize> = REFERENCE_GRID
            .iter()
            .map(|&g| ((g as f64 * m as f64 / REFERENCE_LATENTS as f64).round() as usize).clamp(1, k_ref.min(m)))
            .collect();
        grid.dedup();
        Self { grid, k_ref, cutoff: 0.9 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sweep grid must be strictly ascending".into()));
        }
        if !(self.cutoff > 0.0 && self.cutoff <= 1.0) {
            return Err(Error::Config(format!("sweep cutoff {} outside (0, 1]", self.cutoff)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub chosen_k: usize,
    /// False when no grid value reached the cutoff and the largest was used.
    pub qualified: bool,
    pub reference_score: f64,
    /// `(k, score)` for every grid value.
    pub curve: Vec<(usize, f64)>,
}

/// Smallest grid value whose score reaches `cutoff * reference`; the largest
/// grid value (unqualified) if none does.
pub fn choose_k(grid: &[usize], scores: &[f64], reference: f64, cutoff: f64) -> (usize, bool) {
    let threshold = cutoff * reference;
    grid.iter()
        .zip(scores)
        .find(|(_, &s)| s >= threshold)
        .map(|(&k, _)| (k, true))
        .unwrap_or((*grid.last().expect("non-empty grid"), false))
}

pub fn sweep_k(config: &SweepConfig, score: impl Fn(usize) -> Result<f64>) -> Result<SweepOutcome> {
    config.validate()?;
    let reference_score = score(config.k_ref)?;
    let scores: Vec<f64> = config.grid.iter().map(|&k| score(k)).collect::<Result<_>>()?;
    let (chosen_k, qualified) = choose_k(&config.grid, &scores, reference_score, config.cutoff);
    Ok(SweepOutcome {
        chosen_k,
        qualified,
        reference_score,
        curve: config.grid.iter().copied().zip(scores).collect(),
    })
}
