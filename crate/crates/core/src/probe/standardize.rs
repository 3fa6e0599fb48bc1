use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to every per-feature standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Per-feature z-scoring fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mu: Vec<f64>,
    /// Population standard deviation, floored at [`SIGMA_FLOOR`].
    pub sigma: Vec<f64>,
}

/// Column means and floored population standard deviations (two-pass).
pub fn fit_standardizer(x: ArrayView2<f64>) -> Result<Standardizer> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!("standardizer needs at least 2 rows, got {n}")));
    }
    let mut mu = Vec::with_capacity(x.ncols());
    let mut sigma = Vec::with_capacity(x.ncols());
    for col in x.columns() {
        let m = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        mu.push(m);
        sigma.push(var.sqrt().max(SIGMA_FLOOR));
    }
    Ok(Standardizer { mu, sigma })
}

impl Standardizer {
    pub fn n_features(&self) -> usize {
        self.mu.len()
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::Shape(format!("{} features, standardizer expects {}", x.ncols(), self.n_features())));
        }
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mu).zip(&self.sigma) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn transform_row(&self, x: ArrayView1<f64>) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(Error::Shape(format!("{} features, standardizer expects {}", x.len(), self.n_features())));
        }
        Ok(x.iter().zip(&self.mu).zip(&self.sigma).map(|((v, m), s)| (v - m) / s).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_column_hits_the_floor() {
        let s = fit_standardizer(array![[3.0, -1.0], [3.0, 1.0]].view()).unwrap();
        assert_eq!(s.sigma[0], SIGMA_FLOOR);
        assert_eq!((s.mu[1], s.sigma[1]), (0.0, 1.0));
        assert!(fit_standardizer(array![[1.0]].view()).is_err());
    }

    #[test]
    fn matches_two_pass_oracle_and_standardizes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_simple_fn((100, 3), || rng.random_range(-4.0..9.0));
        let s = fit_standardizer(x.view()).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = x.column(j).to_vec();
            let mean = col.iter().sum::<f64>() / 100.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0;
            assert!((s.mu[j] - mean).abs() <= 1e-12);
            assert!((s.sigma[j] - var.sqrt()).abs() <= 1e-12);
        }
        let z = s.transform(x.view()).unwrap();
        let again = fit_standardizer(z.view()).unwrap();
        for j in 0..3 {
            assert!(again.mu[j].abs() <= 1e-9);
            assert!((again.sigma[j] - 1.0).abs() <= 1e-9);
        }
    }
}
