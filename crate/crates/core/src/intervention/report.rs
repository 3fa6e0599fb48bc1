use ndarray::{Array1, ArrayView2, Axis};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{ablate, full_logits, inject, injection_values, ld_sem, patch_rows, semantic_prediction};
use crate::error::{Error, Result};
use crate::probe::{bootstrap_joint, BootstrapCI, ProbeModel, DEFAULT_REPLICATES};
use crate::relation::RelationLabel;
use crate::rng;

/// Denominator used for standardized ΔLD, recorded in every report.
pub const STD_DENOMINATOR: &str = "population sd of baseline LD_sem over the unpatched evaluation items";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchMode {
    /// Inject the relation's top-k features into no-relation items.
    Sufficiency,
    /// Zero the relation's top-k features in items of that relation.
    Necessity,
}

impl PatchMode {
    pub fn name(self) -> &'static str {
        match self {
            PatchMode::Sufficiency => "sufficiency",
            PatchMode::Necessity => "necessity",
        }
    }
}

/// Latent rows with their gold labels.
#[derive(Debug, Clone, Copy)]
pub struct LatentSet<'a> {
    pub latents: ArrayView2<'a, f64>,
    pub labels: &'a [RelationLabel],
}

impl<'a> LatentSet<'a> {
    pub fn new(latents: ArrayView2<'a, f64>, labels: &'a [RelationLabel]) -> Result<Self> {
        if latents.nrows() != labels.len() {
            return Err(Error::Shape(format!("{} latent rows for {} labels", latents.nrows(), labels.len())));
        }
        Ok(Self { latents, labels })
    }

    fn rows_of(&self, label: RelationLabel) -> ndarray::Array2<f64> {
        let idx: Vec<usize> = (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect();
        self.latents.select(Axis(0), &idx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Random feature sets averaged by the control.
    pub control_seeds: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            control_seeds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionReport {
    pub relation: RelationLabel,
    pub layer: usize,
    pub mode: PatchMode,
    pub k: usize,
    pub n_items: usize,
    pub delta_ld_raw: BootstrapCI,
    /// `delta_ld_raw` divided by `baseline_sd`; absent when the baseline has
    /// no spread.
    pub delta_ld_std: Option<BootstrapCI>,
    pub baseline_sd: f64,
    /// ΔFR for sufficiency, DR for necessity.
    pub rate: BootstrapCI,
    /// Share of items predicted as the target after patching.
    pub target_rate_after: f64,
    /// Mean |effect| of random feature sets over |top-k effect|; absent for
    /// k = 0 or a zero top-k effect.
    pub control_ratio: Option<f64>,
    pub std_denominator: String,
}

struct Effect {
    delta_ld: Vec<f64>,
    baseline_ld: Vec<f64>,
    hit_before: Vec<bool>,
    hit_after: Vec<bool>,
}

fn effect(
    probe: &ProbeModel,
    items: ArrayView2<f64>,
    target: RelationLabel,
    patch: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<Effect> {
    let before = full_logits(probe, items)?;
    let after = full_logits(probe, patch_rows(items, patch)?.view())?;
    let mut e = Effect {
        delta_ld: Vec::with_capacity(items.nrows()),
        baseline_ld: Vec::with_capacity(items.nrows()),
        hit_before: Vec::with_capacity(items.nrows()),
        hit_after: Vec::with_capacity(items.nrows()),
    };
    for (b, a) in before.rows().into_iter().zip(after.rows()) {
        let (b, a) = (b.to_vec(), a.to_vec());
        let (lb, la) = (ld_sem(&b, target)?, ld_sem(&a, target)?);
        e.delta_ld.push(la - lb);
        e.baseline_ld.push(lb);
        e.hit_before.push(semantic_prediction(&b) == target);
        e.hit_after.push(semantic_prediction(&a) == target);
    }
    Ok(e)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn population_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn scale(ci: BootstrapCI, by: f64) -> BootstrapCI {
    BootstrapCI {
        point: ci.point / by,
        lo: ci.lo / by,
        hi: ci.hi / by,
        replicates: ci.replicates,
        half_width: ci.half_width / by,
    }
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    probe: &ProbeModel,
    items: ArrayView2<f64>,
    relation: RelationLabel,
    layer: usize,
    mode: PatchMode,
    ranking: &[usize],
    k: usize,
    values: Option<&Array1<f64>>,
    opts: &ReportOptions,
) -> Result<InterventionReport> {
    let e = effect(probe, items, relation, |z| match values {
        Some(v) => inject(z, ranking, k, v.as_slice().expect("contiguous")),
        None => ablate(z, ranking, k),
    })?;
    let n = items.nrows();
    let strata = vec![0usize; n];
    let cis = bootstrap_joint(&strata, opts.replicates, opts.seed, |idx| {
        let d = idx.iter().map(|&i| e.delta_ld[i]).sum::<f64>() / idx.len() as f64;
        let rate = match mode {
            PatchMode::Sufficiency => {
                idx.iter()
                    .map(|&i| f64::from(u8::from(e.hit_after[i])) - f64::from(u8::from(e.hit_before[i])))
                    .sum::<f64>()
                    / idx.len() as f64
            }
            PatchMode::Necessity => {
                idx.iter().filter(|&&i| e.hit_before[i] && !e.hit_after[i]).count() as f64 / idx.len() as f64
            }
        };
        Ok(vec![d, rate])
    })?;
    let baseline_sd = population_sd(&e.baseline_ld);
    let top_effect = mean(&e.delta_ld);

    let control_ratio = random_control(probe, items, relation, k, values, top_effect, opts.control_seeds, opts.seed)?;

    Ok(InterventionReport {
        relation,
        layer,
        mode,
        k,
        n_items: n,
        delta_ld_raw: cis[0],
        delta_ld_std: (baseline_sd > 0.0).then(|| scale(cis[0], baseline_sd)),
        baseline_sd,
        rate: cis[1],
        target_rate_after: e.hit_after.iter().filter(|h| **h).count() as f64 / n as f64,
        control_ratio,
        std_denominator: STD_DENOMINATOR.into(),
    })
}

/// Injects the top-`k` features of `relation` (at their class-conditional
/// train means) into every no-relation test item.
#[allow(clippy::too_many_arguments)]
pub fn sufficiency_report(
    probe: &ProbeModel,
    train: LatentSet<'_>,
    test: LatentSet<'_>,
    relation: RelationLabel,
    layer: usize,
    ranking: &[usize],
    k: usize,
    opts: &ReportOptions,
) -> Result<InterventionReport> {
    if !relation.is_semantic() {
        return Err(Error::InvalidTarget(relation));
    }
    let neutral = test.rows_of(RelationLabel::Random);
    if neutral.nrows() == 0 {
        return Err(Error::Empty("no neutral (random-class) test items".into()));
    }
    let values = injection_values(train.latents, train.labels, relation)?;
    build_report(probe, neutral.view(), relation, layer, PatchMode::Sufficiency, ranking, k, Some(&values), opts)
}

/// Zeroes the top-`k` features of `relation` in every test item of that
/// relation.
#[allow(clippy::too_many_arguments)]
pub fn necessity_report(
    probe: &ProbeModel,
    test: LatentSet<'_>,
    relation: RelationLabel,
    layer: usize,
    ranking: &[usize],
    k: usize,
    opts: &ReportOptions,
) -> Result<InterventionReport> {
    if !relation.is_semantic() {
        return Err(Error::InvalidTarget(relation));
    }
    let items = test.rows_of(relation);
    if items.nrows() == 0 {
        return Err(Error::Empty(format!("no {relation} test items")));
    }
    build_report(probe, items.view(), relation, layer, PatchMode::Necessity, ranking, k, None, opts)
}

/// Mean |ΔLD| of `seeds` uniformly drawn `k`-feature sets divided by
/// `|top_effect|`; `None` when `k = 0` or the top-k effect is zero.
#[allow(clippy::too_many_arguments)]
pub fn random_control(
    probe: &ProbeModel,
    items: ArrayView2<f64>,
    relation: RelationLabel,
    k: usize,
    values: Option<&Array1<f64>>,
    top_effect: f64,
    seeds: usize,
    seed: u64,
) -> Result<Option<f64>> {
    if k == 0 || top_effect == 0.0 {
        return Ok(None);
    }
    let m = items.ncols();
    let mut total = 0.0;
    for s in 0..seeds {
        let mut rng = rng::indexed_stream(seed, "random-control", s as u64);
        let set = sample(&mut rng, m, k.min(m)).into_vec();
        let e = effect(probe, items, relation, |z| match values {
            Some(v) => inject(z, &set, set.len(), v.as_slice().expect("contiguous")),
            None => ablate(z, &set, set.len()),
        })?;
        total += mean(&e.delta_ld).abs();
    }
    Ok(Some(total / seeds as f64 / top_effect.abs()))
}

fn std_or_raw(r: &InterventionReport) -> f64 {
    r.delta_ld_std.map_or(r.delta_ld_raw.point, |c| c.point)
}

/// Report with the largest standardized ΔLD.
pub fn peak_sufficiency(reports: &[InterventionReport]) -> Option<&InterventionReport> {
    reports.iter().fold(None, |best: Option<&InterventionReport>, r| match best {
        Some(b) if std_or_raw(b) >= std_or_raw(r) => Some(b),
        _ => Some(r),
    })
}

/// Report with the most negative standardized ΔLD.
pub fn peak_necessity(reports: &[InterventionReport]) -> Option<&InterventionReport> {
    reports.iter().fold(None, |best: Option<&InterventionReport>, r| match best {
        Some(b) if std_or_raw(b) <= std_or_raw(r) => Some(b),
        _ => Some(r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::{ProbeConfig, Standardizer, TrainStatus};
    use ndarray::{Array2, Axis};

    fn probe_with(weights: Array2<f64>) -> ProbeModel {
        let m = weights.ncols();
        ProbeModel {
            standardizer: Standardizer {
                mu: vec![0.0; m],
                sigma: vec![1.0; m],
            },
            weights,
            bias: Array1::zeros(5),
            classes: RelationLabel::ALL.to_vec(),
            config: ProbeConfig::default(),
            status: TrainStatus {
                converged: true,
                iterations: 0,
                grad_norm: 0.0,
                loss: 0.0,
                loss_trace: vec![],
            },
        }
    }

    fn opts() -> ReportOptions {
        ReportOptions {
            replicates: 100,
            ..ReportOptions::default()
        }
    }

    #[test]
    fn probe_blind_to_patched_dims_shows_no_effect() {
        let mut w = Array2::zeros((5, 6));
        w[[0, 5]] = 1.0;
        w[[1, 4]] = 1.0;
        let probe = probe_with(w);
        let z = Array2::from_shape_fn((10, 6), |(i, j)| ((i * 7 + j * 3) % 5) as f64);
        let labels: Vec<RelationLabel> = (0..10).map(|i| if i < 5 { RelationLabel::Hypernym } else { RelationLabel::Random }).collect();
        let set = LatentSet::new(z.view(), &labels).unwrap();
        let ranking = [0, 1, 2, 3, 4, 5];
        let s = sufficiency_report(&probe, set, set, RelationLabel::Hypernym, 0, &ranking, 3, &opts()).unwrap();
        assert_eq!((s.delta_ld_raw.point, s.rate.point), (0.0, 0.0));
        assert_eq!(s.control_ratio, None);
        let n = necessity_report(&probe, set, RelationLabel::Hypernym, 0, &ranking, 3, &opts()).unwrap();
        assert_eq!((n.delta_ld_raw.point, n.rate.point), (0.0, 0.0));
    }

    #[test]
    fn uniform_weights_give_unit_control_ratio() {
        let mut w = Array2::zeros((5, 20));
        w.index_axis_mut(Axis(0), 0).fill(1.0);
        let probe = probe_with(w);
        let z = Array2::from_elem((8, 20), 1.0);
        let labels = vec![RelationLabel::Synonym; 8];
        let set = LatentSet::new(z.view(), &labels).unwrap();
        let ranking: Vec<usize> = (0..20).collect();
        let r = necessity_report(&probe, set, RelationLabel::Synonym, 0, &ranking, 4, &opts()).unwrap();
        assert_eq!(r.delta_ld_raw.point, -4.0);
        assert!((r.control_ratio.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.delta_ld_std, None);
        let r0 = necessity_report(&probe, set, RelationLabel::Synonym, 0, &ranking, 0, &opts()).unwrap();
        assert_eq!(r0.control_ratio, None);
    }

    #[test]
    fn empty_evaluation_sets_are_errors() {
        let probe = probe_with(Array2::zeros((5, 2)));
        let z = Array2::zeros((2, 2));
        let labels = [RelationLabel::Synonym; 2];
        let set = LatentSet::new(z.view(), &labels).unwrap();
        assert!(matches!(
            sufficiency_report(&probe, set, set, RelationLabel::Synonym, 0, &[0, 1], 1, &opts()),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            necessity_report(&probe, set, RelationLabel::Antonym, 0, &[0, 1], 1, &opts()),
            Err(Error::Empty(_))
        ));
    }
}
