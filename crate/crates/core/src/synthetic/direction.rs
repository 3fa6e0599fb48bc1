//! Reversal-symmetric relation features.
//!
//! Each item is a word pair with latent vectors `e` and a scalar generality
//! `g`. The representation of `(a, b)` at every layer is
//! `[e(a) + e(b), e(a) * e(b), g(b) - g(a)] + noise`, so swapping the words
//! negates only the last coordinate. Hypernym pairs have `g(b) > g(a)` and
//! hyponym pairs the opposite, which makes a reversed hypernym item
//! distributed exactly like a hyponym item. A probe trained on the original
//! order therefore scores the same on the reversed set.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::directionality::{EvalSet, REVERSIBLE};
use crate::error::{Error, Result};
use crate::probe::{ProbeConfig, ProbeModel};
use crate::relation::RelationLabel;
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionNullSpec {
    pub word_dim: usize,
    /// Observation noise per layer; one entry per layer.
    pub layer_noise: Vec<f64>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for DirectionNullSpec {
    fn default() -> Self {
        Self {
            word_dim: 16,
            layer_noise: vec![0.6, 0.3, 0.5],
            train_per_class: 400,
            test_per_class: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Word<'a> {
    e: &'a [f64],
    g: f64,
}

#[derive(Debug, Clone)]
struct Item {
    a: (Vec<f64>, f64),
    b: (Vec<f64>, f64),
    label: RelationLabel,
}

fn gauss(rng: &mut StreamRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn item(rng: &mut StreamRng, dim: usize, label: RelationLabel) -> Item {
    let ea = gauss(rng, dim, 1.0);
    let ga: f64 = rng.sample(StandardNormal);
    let jitter = gauss(rng, dim, 0.3);
    let eb: Vec<f64> = match label {
        RelationLabel::Synonym => ea.iter().zip(&jitter).map(|(x, j)| x + j).collect(),
        RelationLabel::Antonym => ea.iter().zip(&jitter).map(|(x, j)| -x + j).collect(),
        RelationLabel::Hypernym | RelationLabel::Hyponym => {
            let fresh = gauss(rng, dim, 0.8);
            ea.iter().zip(&fresh).map(|(x, f)| 0.6 * x + f).collect()
        }
        RelationLabel::Random => gauss(rng, dim, 1.0),
    };
    let step = 4.0 + 0.3 * rng.sample::<f64, _>(StandardNormal);
    let gb = match label {
        RelationLabel::Hypernym => ga + step,
        RelationLabel::Hyponym => ga - step,
        RelationLabel::Random => ga + 0.5 * rng.sample::<f64, _>(StandardNormal),
        _ => ga,
    };
    Item {
        a: (ea, ga),
        b: (eb, gb),
        label,
    }
}

fn features(a: Word<'_>, b: Word<'_>, noise: f64, rng: &mut StreamRng) -> Vec<f64> {
    let mut f: Vec<f64> = a.e.iter().zip(b.e).map(|(x, y)| x + y).collect();
    f.extend(a.e.iter().zip(b.e).map(|(x, y)| x * y));
    f.push(b.g - a.g);
    for v in &mut f {
        *v += noise * rng.sample::<f64, _>(StandardNormal);
    }
    f
}

fn word(w: &(Vec<f64>, f64)) -> Word<'_> {
    Word { e: &w.0, g: w.1 }
}

fn matrix(rows: Vec<Vec<f64>>) -> Array2<f64> {
    let (n, d) = (rows.len(), rows.first().map_or(0, Vec::len));
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).expect("rows share a length")
}

/// Per-layer features for the original test set and its reversal.
#[derive(Debug, Clone)]
pub struct DirectionNull {
    pub train: Vec<Array2<f64>>,
    pub train_labels: Vec<RelationLabel>,
    pub test: Vec<Array2<f64>>,
    pub test_labels: Vec<RelationLabel>,
    /// Reversed reversible test items, gold labels inverted.
    pub flipped: Vec<Array2<f64>>,
    pub flipped_labels: Vec<RelationLabel>,
    pub flipped_origin: Vec<RelationLabel>,
}

pub fn gen_direction_null(spec: &DirectionNullSpec) -> Result<DirectionNull> {
    if spec.word_dim == 0 || spec.layer_noise.is_empty() || spec.train_per_class == 0 || spec.test_per_class == 0 {
        return Err(Error::InvalidArgument("direction-null spec needs positive sizes and at least one layer".into()));
    }
    if spec.layer_noise.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidArgument("layer noise must be finite and non-negative".into()));
    }
    let mut rng = rng::stream(spec.seed, "direction-null");
    let draw = |n: usize, rng: &mut StreamRng| -> Vec<Item> {
        (0..n * RelationLabel::ALL.len())
            .map(|i| item(rng, spec.word_dim, RelationLabel::ALL[i % RelationLabel::ALL.len()]))
            .collect()
    };
    let train_items = draw(spec.train_per_class, &mut rng);
    let test_items = draw(spec.test_per_class, &mut rng);
    let reversible: Vec<&Item> = test_items.iter().filter(|it| REVERSIBLE.contains(&it.label)).collect();

    let mut layer = |items: &[&Item], reversed: bool, noise: f64| -> Array2<f64> {
        matrix(
            items
                .iter()
                .map(|it| {
                    let (a, b) = if reversed { (&it.b, &it.a) } else { (&it.a, &it.b) };
                    features(word(a), word(b), noise, &mut rng)
                })
                .collect(),
        )
    };
    let train_refs: Vec<&Item> = train_items.iter().collect();
    let test_refs: Vec<&Item> = test_items.iter().collect();
    let train = spec.layer_noise.iter().map(|&s| layer(&train_refs, false, s)).collect();
    let test = spec.layer_noise.iter().map(|&s| layer(&test_refs, false, s)).collect();
    let flipped = spec.layer_noise.iter().map(|&s| layer(&reversible, true, s)).collect();
    Ok(DirectionNull {
        train,
        train_labels: train_items.iter().map(|it| it.label).collect(),
        test,
        test_labels: test_items.iter().map(|it| it.label).collect(),
        flipped,
        flipped_labels: reversible.iter().map(|it| it.label.inverted()).collect(),
        flipped_origin: reversible.iter().map(|it| it.label).collect(),
    })
}

impl DirectionNull {
    /// Trains one probe per layer on the original order and scores both
    /// evaluation sets.
    pub fn eval_sets(&self, config: &ProbeConfig) -> Result<(EvalSet, EvalSet)> {
        let mut orig = Vec::new();
        let mut flip = Vec::new();
        for l in 0..self.train.len() {
            let probe = ProbeModel::train(self.train[l].view(), &self.train_labels, config)?;
            orig.push(probe.predict(self.test[l].view())?);
            flip.push(probe.predict(self.flipped[l].view())?);
        }
        Ok((
            EvalSet {
                gold: self.test_labels.clone(),
                origin: self.test_labels.clone(),
                predictions: orig,
            },
            EvalSet {
                gold: self.flipped_labels.clone(),
                origin: self.flipped_origin.clone(),
                predictions: flip,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reversal_negates_only_the_direction_coordinate() {
        let spec = DirectionNullSpec {
            layer_noise: vec![0.0],
            train_per_class: 1,
            test_per_class: 2,
            ..DirectionNullSpec::default()
        };
        let data = gen_direction_null(&spec).unwrap();
        let test = &data.test[0];
        let flip = &data.flipped[0];
        let d = test.ncols();
        let rev_rows: Vec<usize> = (0..data.test_labels.len())
            .filter(|&i| REVERSIBLE.contains(&data.test_labels[i]))
            .collect();
        for (k, &i) in rev_rows.iter().enumerate() {
            for j in 0..d - 1 {
                assert!((test[[i, j]] - flip[[k, j]]).abs() < 1e-12);
            }
            assert_eq!(test[[i, d - 1]], -flip[[k, d - 1]]);
        }
        assert_eq!(data.flipped_labels.len(), 6);
    }
}
