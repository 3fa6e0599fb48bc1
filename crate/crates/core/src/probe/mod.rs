//! Linear probes: standardization, multinomial logistic regression,
//! prediction, per-class recall and bootstrap intervals.

mod bootstrap;
mod standardize;
mod train;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation::RelationLabel;

pub use bootstrap::{
    bootstrap_ci, bootstrap_joint, percentile, stratified_resample, BootstrapCI, DEFAULT_REPLICATES, MIN_REPLICATES,
};
pub use standardize::{fit_standardizer, Standardizer, SIGMA_FLOOR};
pub use train::{fit_softmax, objective, ProbeConfig, SoftmaxFit, TrainStatus};

/// A trained probe: standardizer plus one weight row and bias per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    pub standardizer: Standardizer,
    /// `C × F`, rows in `classes` order.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// Classes present in training, ascending.
    pub classes: Vec<RelationLabel>,
    pub config: ProbeConfig,
    pub status: TrainStatus,
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl ProbeModel {
    /// Standardizes `x` with statistics of `x` itself and fits the probe.
    pub fn train(x: ArrayView2<f64>, y: &[RelationLabel], config: &ProbeConfig) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
        }
        let standardizer = fit_standardizer(x)?;
        let z = standardizer.transform(x)?;
        let mut classes: Vec<RelationLabel> = y.to_vec();
        classes.sort();
        classes.dedup();
        let yi: Vec<usize> = y
            .iter()
            .map(|l| classes.binary_search(l).expect("class collected"))
            .collect();
        let fit = fit_softmax(z.view(), &yi, classes.len(), config)?;
        Ok(Self {
            standardizer,
            weights: fit.weights,
            bias: fit.bias,
            classes,
            config: config.clone(),
            status: fit.status,
        })
    }

    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    /// Row of `weights` for `label`.
    pub fn class_index(&self, label: RelationLabel) -> Option<usize> {
        self.classes.iter().position(|&c| c == label)
    }

    /// True when all five classes were seen in training.
    pub fn is_complete(&self) -> bool {
        self.classes == RelationLabel::ALL
    }

    /// `standardize(x) · Wᵀ + b`, one row per input row, columns in
    /// `classes` order.
    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let z = self.standardizer.transform(x)?;
        let mut out = z.dot(&self.weights.t());
        out += &self.bias;
        Ok(out)
    }

    pub fn logits_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardizer.transform_row(ndarray::ArrayView1::from(x))?;
        Ok(self
            .weights
            .rows()
            .into_iter()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(&z).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect())
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<RelationLabel>> {
        let logits = self.logits(x)?;
        Ok(logits
            .rows()
            .into_iter()
            .map(|r| self.classes[argmax(&r.to_vec())])
            .collect())
    }

    /// Per-class recall on `(x, y)`.
    pub fn per_class_accuracy(&self, x: ArrayView2<f64>, y: &[RelationLabel]) -> Result<BTreeMap<RelationLabel, f64>> {
        let pred = self.predict(x)?;
        per_class_recall(&pred, y, &self.classes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ProbeFile {
            classes: self.classes.clone(),
            mu: self.standardizer.mu.clone(),
            sigma: self.standardizer.sigma.clone(),
            weights: self.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
            bias: self.bias.to_vec(),
            config: self.config.clone(),
            config_hash: self.config.hash(),
            status: self.status.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ProbeFile = serde_json::from_str(&text)?;
        let c = file.classes.len();
        let f = file.mu.len();
        if file.sigma.len() != f || file.weights.len() != c || file.bias.len() != c || file.weights.iter().any(|r| r.len() != f) {
            return Err(Error::Shape(format!("inconsistent probe file {}", path.display())));
        }
        if file.config.hash() != file.config_hash {
            return Err(Error::Checksum {
                what: format!("probe config in {}", path.display()),
                expected: file.config_hash,
                found: file.config.hash(),
            });
        }
        Ok(Self {
            standardizer: Standardizer {
                mu: file.mu,
                sigma: file.sigma,
            },
            weights: Array2::from_shape_vec((c, f), file.weights.concat()).expect("sized"),
            bias: Array1::from_vec(file.bias),
            classes: file.classes,
            config: file.config,
            status: file.status,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeFile {
    classes: Vec<RelationLabel>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    config: ProbeConfig,
    config_hash: String,
    status: TrainStatus,
}

/// Fraction of gold-`c` items predicted `c`, for every `c` in `classes`.
pub fn per_class_recall(
    pred: &[RelationLabel],
    gold: &[RelationLabel],
    classes: &[RelationLabel],
) -> Result<BTreeMap<RelationLabel, f64>> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", pred.len(), gold.len())));
    }
    let mut out = BTreeMap::new();
    for &c in classes {
        let (mut hit, mut total) = (0usize, 0usize);
        for (p, g) in pred.iter().zip(gold) {
            if *g == c {
                total += 1;
                hit += usize::from(p == g);
            }
        }
        if total == 0 {
            return Err(Error::AbsentClass(c.index()));
        }
        out.insert(c, hit as f64 / total as f64);
    }
    Ok(out)
}

/// Overall fraction of correct predictions.
pub fn accuracy(pred: &[RelationLabel], gold: &[RelationLabel]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / gold.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Axis};
    use rand::{Rng, SeedableRng};

    use RelationLabel::*;

    #[test]
    fn separable_two_class_data_is_fit_perfectly() {
        let mut x = Array2::zeros((100, 1));
        let mut y = Vec::new();
        for i in 0..100 {
            x[[i, 0]] = if i % 2 == 0 { -1.0 } else { 1.0 };
            y.push(if i % 2 == 0 { Synonym } else { Antonym });
        }
        let probe = ProbeModel::train(x.view(), &y, &ProbeConfig::default()).unwrap();
        assert_eq!(accuracy(&probe.predict(x.view()).unwrap(), &y), 1.0);
    }

    #[test]
    fn zero_weights_predict_the_bias_argmax() {
        let probe = ProbeModel {
            standardizer: Standardizer {
                mu: vec![0.0; 2],
                sigma: vec![1.0; 2],
            },
            weights: Array2::zeros((5, 2)),
            bias: array![1.0, 0.0, 0.0, 0.0, 0.0],
            classes: RelationLabel::ALL.to_vec(),
            config: ProbeConfig::default(),
            status: TrainStatus {
                converged: true,
                iterations: 0,
                grad_norm: 0.0,
                loss: 0.0,
                loss_trace: vec![],
            },
        };
        let x = array![[3.0, -1.0], [0.5, 8.0]];
        assert_eq!(probe.predict(x.view()).unwrap(), [Synonym, Synonym]);
        assert_eq!(argmax(&[2.0, 1.0, 0.5, 0.0, 3.0]), 4);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn logits_match_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_simple_fn((40, 3), || rng.random_range(-1.0..1.0));
        let y: Vec<RelationLabel> = (0..40).map(|i| RelationLabel::ALL[i % 5]).collect();
        let probe = ProbeModel::train(x.view(), &y, &ProbeConfig::default()).unwrap();
        let logits = probe.logits(x.view()).unwrap();
        for i in 0..40 {
            let row = probe.logits_row(x.row(i).as_slice().unwrap()).unwrap();
            for c in 0..5 {
                let mut s = probe.bias[c];
                for f in 0..3 {
                    s += probe.weights[[c, f]] * (x[[i, f]] - probe.standardizer.mu[f]) / probe.standardizer.sigma[f];
                }
                assert!((logits[[i, c]] - s).abs() <= 1e-12);
                assert!((row[c] - s).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn recall_definition() {
        let gold = [Synonym, Synonym, Antonym, Antonym];
        let pred = [Synonym, Synonym, Synonym, Synonym];
        let r = per_class_recall(&pred, &gold, &[Synonym, Antonym]).unwrap();
        assert_eq!((r[&Synonym], r[&Antonym]), (1.0, 0.0));
        assert!(matches!(per_class_recall(&pred, &gold, &[Random]), Err(Error::AbsentClass(4))));
    }

    #[test]
    fn duplicated_rows_give_the_same_optimum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_simple_fn((60, 4), || rng.random_range(-2.0..2.0));
        let y: Vec<RelationLabel> = (0..60).map(|i| RelationLabel::ALL[(i * 7) % 3]).collect();
        let cfg = ProbeConfig {
            tolerance: 1e-10,
            ..ProbeConfig::default()
        };
        let a = ProbeModel::train(x.view(), &y, &cfg).unwrap();
        let idx: Vec<usize> = (0..60).chain(0..60).collect();
        let x2 = x.select(Axis(0), &idx);
        let y2: Vec<RelationLabel> = idx.iter().map(|&i| y[i]).collect();
        // twice the rows under the (1/n)-scaled objective: matched by 2λ
        let cfg2 = ProbeConfig {
            l2_lambda: 2.0 * cfg.l2_lambda,
            ..cfg.clone()
        };
        let b = ProbeModel::train(x2.view(), &y2, &cfg2).unwrap();
        for (p, q) in a.weights.iter().zip(&b.weights) {
            assert!((p - q).abs() <= 1e-9, "{p} {q}");
        }
        for (p, q) in a.bias.iter().zip(&b.bias) {
            assert!((p - q).abs() <= 1e-9);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = array![[0.0, 1.0], [1.0, 0.0], [0.5, 0.5], [2.0, 1.0]];
        let y = [Hypernym, Hyponym, Hypernym, Hyponym];
        let probe = ProbeModel::train(x.view(), &y, &ProbeConfig::default()).unwrap();
        let path = dir.path().join("p.json");
        probe.save(&path).unwrap();
        let back = ProbeModel::load(&path).unwrap();
        let mut expected = probe.clone();
        expected.status.loss_trace.clear();
        assert_eq!(back, expected);
    }
}
