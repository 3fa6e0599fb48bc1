//! Analytic sparse autoencoder for toy activations.
//!
//! The dictionary stacks two random orthonormal bases `Q1`, `Q2` of
//! `R^d` and their negatives, giving `m = 4d` unit-norm atoms. With
//! `W_enc = [Q1; Q2; -Q1; -Q2]^T`, `W_dec = [Q1; Q2; -Q1; -Q2] / 2` and zero
//! biases, `relu(v.x) - relu(-v.x) = v.x` for each atom, so
//! `decode(encode(x)) = (Q1^T Q1 x + Q2^T Q2 x) / 2 = x` exactly.

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::activation::{Nonlinearity, SaeParams};
use crate::error::Result;
use crate::rng;

/// Gram-Schmidt on a seeded Gaussian matrix; rows are orthonormal.
pub fn random_orthonormal(d: usize, seed: u64, name: &str) -> Array2<f64> {
    let mut rng = rng::stream(seed, name);
    loop {
        let mut q = Array2::from_shape_simple_fn((d, d), || rng.sample::<f64, _>(StandardNormal));
        let mut ok = true;
        for i in 0..d {
            for j in 0..i {
                let proj = q.row(i).dot(&q.row(j));
                let rj = q.row(j).to_owned();
                q.row_mut(i).scaled_add(-proj, &rj);
            }
            let norm = q.row(i).dot(&q.row(i)).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            q.row_mut(i).mapv_inplace(|v| v / norm);
        }
        if ok {
            return q;
        }
    }
}

/// Dictionary with `4 * d` latents that reconstructs every input exactly.
pub fn toy_sae(d: usize, seed: u64) -> Result<SaeParams> {
    let q1 = random_orthonormal(d, seed, "toy-sae:q1");
    let q2 = random_orthonormal(d, seed, "toy-sae:q2");
    let atoms = concatenate(Axis(0), &[q1.view(), q2.view(), (-&q1).view(), (-&q2).view()]).expect("same width");
    let m = atoms.nrows();
    SaeParams::new(
        atoms.t().mapv(|v| v as f32),
        Array1::zeros(m),
        atoms.mapv(|v| (v / 2.0) as f32),
        Array1::zeros(d),
        Nonlinearity::Relu,
    )
}
