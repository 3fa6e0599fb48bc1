//! Depth profiles of per-layer probe accuracy and block-wise deltas.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::activation::StreamId;
use crate::error::{Error, Result};
use crate::probe::{bootstrap_joint, BootstrapCI};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthProfile {
    pub accs: Vec<f64>,
    pub mean: f64,
    pub peak: f64,
    /// Layer of the peak; the lowest such layer on ties.
    pub peak_depth: usize,
    /// Accuracy-weighted mean layer index, `sum(l * a_l) / sum(a_l)`.
    pub com: f64,
    pub peak_depth_norm: f64,
    pub com_norm: f64,
}

pub fn depth_profile(accs: &[f64]) -> Result<DepthProfile> {
    let l = accs.len();
    if l < 2 {
        return Err(Error::InsufficientData(format!("depth profile needs at least 2 layers, got {l}")));
    }
    if accs.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::InvalidArgument("accuracies must lie in [0, 1]".into()));
    }
    let total: f64 = accs.iter().sum();
    if total == 0.0 {
        return Err(Error::UndefinedCenterOfMass);
    }
    let mut peak_depth = 0;
    for (i, &a) in accs.iter().enumerate() {
        if a > accs[peak_depth] {
            peak_depth = i;
        }
    }
    let peak = accs[peak_depth];
    let weights: Vec<f64> = accs.iter().map(|a| a / peak).collect();
    let com = weights.iter().enumerate().map(|(i, w)| i as f64 * w).sum::<f64>() / weights.iter().sum::<f64>();
    let last = (l - 1) as f64;
    Ok(DepthProfile {
        accs: accs.to_vec(),
        mean: total / l as f64,
        peak,
        peak_depth,
        com,
        peak_depth_norm: peak_depth as f64 / last,
        com_norm: com / last,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockDelta {
    pub layer: usize,
    pub delta_attn: f64,
    pub delta_mlp: f64,
}

/// Accuracy of the attention and MLP streams minus the post-residual
/// accuracy at the same layer.
pub fn block_deltas(acc_by_stream: &BTreeMap<StreamId, Vec<f64>>) -> Result<Vec<BlockDelta>> {
    let get = |s: StreamId| {
        acc_by_stream
            .get(&s)
            .ok_or_else(|| Error::InvalidArgument(format!("missing stream {s}")))
    };
    let (attn, mlp, post) = (get(StreamId::AttentionOut)?, get(StreamId::MlpOut)?, get(StreamId::PostResidual)?);
    if attn.len() != post.len() || mlp.len() != post.len() {
        return Err(Error::Shape("streams have different layer counts".into()));
    }
    Ok((0..post.len())
        .map(|l| BlockDelta {
            layer: l,
            delta_attn: attn[l] - post[l],
            delta_mlp: mlp[l] - post[l],
        })
        .collect())
}

/// A depth profile with joint bootstrap intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthProfileCI {
    pub profile: DepthProfile,
    pub layer_accs: Vec<BootstrapCI>,
    pub mean: BootstrapCI,
    pub peak: BootstrapCI,
    pub peak_depth: BootstrapCI,
    pub com: BootstrapCI,
    pub peak_depth_norm: BootstrapCI,
    pub com_norm: BootstrapCI,
}

/// Bootstraps a depth profile from per-item correctness.
///
/// `correct[l][i]` says whether item `i` was classified correctly at layer
/// `l`; accuracy at a layer is the mean over items. Every replicate
/// resamples items once (within `strata`) and recomputes all fields.
pub fn profile_ci(correct: &[Vec<bool>], strata: &[usize], replicates: usize, seed: u64) -> Result<DepthProfileCI> {
    let l = correct.len();
    if correct.iter().any(|c| c.len() != strata.len()) {
        return Err(Error::Shape("correctness rows must match the item count".into()));
    }
    let fields = |idx: &[usize]| -> Result<Vec<f64>> {
        let accs: Vec<f64> = correct
            .iter()
            .map(|c| idx.iter().filter(|&&i| c[i]).count() as f64 / idx.len() as f64)
            .collect();
        let p = depth_profile(&accs)?;
        let mut v = accs;
        v.extend([p.mean, p.peak, p.peak_depth as f64, p.com, p.peak_depth_norm, p.com_norm]);
        Ok(v)
    };
    let identity: Vec<usize> = (0..strata.len()).collect();
    let point = fields(&identity)?;
    let profile = depth_profile(&point[..l])?;
    let cis = bootstrap_joint(strata, replicates, seed, fields)?;
    Ok(DepthProfileCI {
        profile,
        layer_accs: cis[..l].to_vec(),
        mean: cis[l],
        peak: cis[l + 1],
        peak_depth: cis[l + 2],
        com: cis[l + 3],
        peak_depth_norm: cis[l + 4],
        com_norm: cis[l + 5],
    })
}
