//! Planted-feature activations: Gaussian noise plus a constant shift on a
//! small, class-specific set of dimensions.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::relation::RelationLabel;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub d: usize,
    pub classes: Vec<RelationLabel>,
    pub planted_dims: BTreeMap<RelationLabel, Vec<usize>>,
    pub signal_strength: f64,
    pub noise_sigma: f64,
    pub n_per_class: usize,
    pub seed: u64,
}

pub const DEFAULT_DIMS_PER_CLASS: usize = 8;

impl PlantedSpec {
    /// Default geometry (d = 512, 8 dims per class, shift 3, unit noise,
    /// 500 items per class) with planted dimensions drawn from `seed`.
    pub fn with_seed(seed: u64) -> Self {
        let d = 512;
        let classes = RelationLabel::ALL.to_vec();
        let planted_dims = draw_dims(d, &classes, DEFAULT_DIMS_PER_CLASS, seed);
        Self {
            d,
            classes,
            planted_dims,
            signal_strength: 3.0,
            noise_sigma: 1.0,
            n_per_class: 500,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.classes.is_empty() || self.n_per_class == 0 {
            return Err(Error::InvalidArgument("planted spec needs d, classes and items".into()));
        }
        if !(self.signal_strength.is_finite() && self.signal_strength >= 0.0) {
            return Err(Error::InvalidArgument(format!("signal strength {}", self.signal_strength)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise sigma {}", self.noise_sigma)));
        }
        let mut seen = BTreeSet::new();
        for (label, dims) in &self.planted_dims {
            if !self.classes.contains(label) {
                return Err(Error::InvalidArgument(format!("planted dims for unlisted class {label}")));
            }
            for &i in dims {
                if i >= self.d {
                    return Err(Error::InvalidArgument(format!("planted dim {i} >= d = {}", self.d)));
                }
                if !seen.insert(i) {
                    return Err(Error::InvalidArgument(format!("planted dim {i} assigned to more than one class")));
                }
            }
        }
        Ok(())
    }
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

/// Disjoint random index sets, `per_class` dimensions for each class.
pub fn draw_dims(d: usize, classes: &[RelationLabel], per_class: usize, seed: u64) -> BTreeMap<RelationLabel, Vec<usize>> {
    let mut all: Vec<usize> = (0..d).collect();
    all.shuffle(&mut rng::stream(seed, "planted:dims"));
    classes
        .iter()
        .enumerate()
        .map(|(c, &label)| {
            let lo = (c * per_class).min(d);
            let hi = ((c + 1) * per_class).min(d);
            let mut dims = all[lo..hi].to_vec();
            dims.sort_unstable();
            (label, dims)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PlantedData {
    pub x: Array2<f64>,
    pub y: Vec<RelationLabel>,
    pub planted_dims: BTreeMap<RelationLabel, Vec<usize>>,
}

impl PlantedData {
    /// Stratified split: within each class, the first `round(ratio * n_c)`
    /// items (in generation order) go to the first part.
    pub fn split(&self, ratio: f64) -> Result<(PlantedData, PlantedData)> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidArgument(format!("split ratio {ratio} outside (0, 1)")));
        }
        let mut per_class: BTreeMap<RelationLabel, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.y.iter().enumerate() {
            per_class.entry(l).or_default().push(i);
        }
        let mut first = vec![false; self.y.len()];
        for rows in per_class.values() {
            let cut = (ratio * rows.len() as f64).round() as usize;
            for &i in &rows[..cut] {
                first[i] = true;
            }
        }
        let pick = |want: bool| {
            let rows: Vec<usize> = (0..self.y.len()).filter(|&i| first[i] == want).collect();
            PlantedData {
                x: self.x.select(ndarray::Axis(0), &rows),
                y: rows.iter().map(|&i| self.y[i]).collect(),
                planted_dims: self.planted_dims.clone(),
            }
        };
        Ok((pick(true), pick(false)))
    }
}

/// Rows cycle through the classes (`row i` has class `classes[i % C]`).
pub fn gen_planted(spec: &PlantedSpec) -> Result<PlantedData> {
    spec.validate()?;
    let n = spec.n_per_class * spec.classes.len();
    let mut rng = rng::stream(spec.seed, "planted:noise");
    let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut x = Array2::from_shape_simple_fn((n, spec.d), || normal.sample(&mut rng));
    let y: Vec<RelationLabel> = (0..n).map(|i| spec.classes[i % spec.classes.len()]).collect();
    for (i, label) in y.iter().enumerate() {
        if let Some(dims) = spec.planted_dims.get(label) {
            for &j in dims {
                x[[i, j]] += spec.signal_strength;
            }
        }
    }
    Ok(PlantedData {
        x,
        y,
        planted_dims: spec.planted_dims.clone(),
    })
}
