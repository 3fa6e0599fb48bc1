//! Stratified percentile bootstrap.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_REPLICATES: usize = 1000;
pub const MIN_REPLICATES: usize = 100;

/// Point estimate with a 95% percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub replicates: usize,
    pub half_width: f64,
}

impl BootstrapCI {
    /// A zero-width interval around `point`.
    pub fn exact(point: f64) -> Self {
        Self {
            point,
            lo: point,
            hi: point,
            replicates: 0,
            half_width: 0.0,
        }
    }

    fn from_replicates(point: f64, mut reps: Vec<f64>) -> Self {
        reps.sort_by(f64::total_cmp);
        let lo = percentile(&reps, 0.025);
        let hi = percentile(&reps, 0.975);
        Self {
            point,
            lo,
            hi,
            replicates: reps.len(),
            half_width: (hi - lo) / 2.0,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Linear-interpolated quantile of ascending `sorted` at position
/// `q * (len - 1)`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// One stratified resample: within every stratum, draws as many indices as
/// the stratum holds, with replacement. Output is stratum-major.
pub fn stratified_resample<R: Rng>(strata: &[usize], rng: &mut R) -> Vec<usize> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in strata.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    let mut out = Vec::with_capacity(strata.len());
    for members in groups.values() {
        for _ in 0..members.len() {
            out.push(members[rng.random_range(0..members.len())]);
        }
    }
    out
}

/// Joint bootstrap of a vector-valued metric: every replicate resamples once
/// and recomputes all fields, so the intervals share replicates.
///
/// `metric` receives the row indices of a resample. The point estimate is
/// `metric` on the identity resample.
pub fn bootstrap_joint<F>(strata: &[usize], replicates: usize, seed: u64, metric: F) -> Result<Vec<BootstrapCI>>
where
    F: Fn(&[usize]) -> Result<Vec<f64>> + Sync,
{
    if replicates < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    if strata.is_empty() {
        return Err(Error::Empty("bootstrap over an empty set".into()));
    }
    let identity: Vec<usize> = (0..strata.len()).collect();
    let point = metric(&identity)?;
    let reps: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::indexed_stream(seed, "bootstrap", r as u64);
            let idx = stratified_resample(strata, &mut rng);
            metric(&idx).map_err(|e| Error::Replicate {
                index: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    for (r, v) in reps.iter().enumerate() {
        if v.len() != point.len() {
            return Err(Error::Replicate {
                index: r,
                source: Box::new(Error::Shape(format!("metric returned {} fields, expected {}", v.len(), point.len()))),
            });
        }
    }
    Ok((0..point.len())
        .map(|k| BootstrapCI::from_replicates(point[k], reps.iter().map(|v| v[k]).collect()))
        .collect())
}

/// Bootstrap of a scalar metric; see [`bootstrap_joint`].
pub fn bootstrap_ci<F>(strata: &[usize], replicates: usize, seed: u64, metric: F) -> Result<BootstrapCI>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    let mut v = bootstrap_joint(strata, replicates, seed, |idx| metric(idx).map(|m| vec![m]))?;
    Ok(v.remove(0))
}
