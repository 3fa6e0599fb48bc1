use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::mean_pool;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Relu,
}

impl Nonlinearity {
    pub fn id(self) -> u32 {
        match self {
            Nonlinearity::Relu => 0,
        }
    }

    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            0 => Ok(Nonlinearity::Relu),
            other => Err(Error::UnsupportedNonlinearity(other)),
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => x.max(0.0),
        }
    }
}

/// Order of SAE encoding and token pooling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodeMode {
    /// Pool token activations first, then encode once.
    #[default]
    Pooled,
    /// Encode every token, then mean-pool the latents.
    TokenThenPool,
}

/// Weights of one sparse autoencoder.
///
/// `z_j = f(sum_i x_i W_enc[i, j] + b_enc[j])` and
/// `x_hat_i = sum_j z_j W_dec[j, i] + b_dec[i]`, with `W_enc` of shape
/// `d × m` and `W_dec` of shape `m × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeParams {
    pub w_enc: Array2<f32>,
    pub b_enc: Array1<f32>,
    pub w_dec: Array2<f32>,
    pub b_dec: Array1<f32>,
    pub nonlinearity: Nonlinearity,
}

impl SaeParams {
    pub fn new(
        w_enc: Array2<f32>,
        b_enc: Array1<f32>,
        w_dec: Array2<f32>,
        b_dec: Array1<f32>,
        nonlinearity: Nonlinearity,
    ) -> Result<Self> {
        let (d, m) = w_enc.dim();
        if d == 0 || m == 0 {
            return Err(Error::Shape("SAE dimensions must be positive".into()));
        }
        if b_enc.len() != m || w_dec.dim() != (m, d) || b_dec.len() != d {
            return Err(Error::Shape(format!(
                "inconsistent SAE shapes: W_enc {d}x{m}, b_enc {}, W_dec {:?}, b_dec {}",
                b_enc.len(),
                w_dec.dim(),
                b_dec.len()
            )));
        }
        let all = w_enc.iter().chain(&b_enc).chain(&w_dec).chain(&b_dec);
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("SAE parameters".into()));
        }
        Ok(Self {
            w_enc,
            b_enc,
            w_dec,
            b_dec,
            nonlinearity,
        })
    }

    /// `W_enc = W_dec = I`, zero biases.
    pub fn identity(d: usize) -> Self {
        Self::new(
            Array2::eye(d),
            Array1::zeros(d),
            Array2::eye(d),
            Array1::zeros(d),
            Nonlinearity::Relu,
        )
        .expect("identity SAE is well formed")
    }

    pub fn d_model(&self) -> usize {
        self.w_enc.nrows()
    }

    pub fn n_latents(&self) -> usize {
        self.w_enc.ncols()
    }

    pub fn encode(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.d_model() {
            return Err(Error::Shape(format!("input length {} but SAE d_model is {}", x.len(), self.d_model())));
        }
        let mut z: Array1<f64> = self.b_enc.mapv(f64::from);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                z.iter_mut().zip(self.w_enc.row(i)).for_each(|(zj, &w)| *zj += xi * f64::from(w));
            }
        }
        Ok(z.mapv_into(|v| self.nonlinearity.apply(v)))
    }

    pub fn decode(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        if z.len() != self.n_latents() {
            return Err(Error::Shape(format!("latent length {} but SAE has {} latents", z.len(), self.n_latents())));
        }
        let mut x: Array1<f64> = self.b_dec.mapv(f64::from);
        for (j, &zj) in z.iter().enumerate() {
            if zj != 0.0 {
                x.iter_mut().zip(self.w_dec.row(j)).for_each(|(xi, &w)| *xi += zj * f64::from(w));
            }
        }
        Ok(x)
    }

    /// Encodes every row of `x` (`n × d`), returning `n × m` latents.
    pub fn encode_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.d_model() {
            return Err(Error::Shape(format!("input width {} but SAE d_model is {}", x.ncols(), self.d_model())));
        }
        let w = self.w_enc.mapv(f64::from);
        let b = self.b_enc.mapv(f64::from);
        let mut z = x.dot(&w);
        z += &b;
        Ok(z.mapv_into(|v| self.nonlinearity.apply(v)))
    }

    /// Latents for one instance given its `T × d` token activations.
    pub fn encode_tokens(&self, tokens: ArrayView2<f64>, mode: EncodeMode) -> Result<Array1<f64>> {
        match mode {
            EncodeMode::Pooled => self.encode(mean_pool(tokens)?.view()),
            EncodeMode::TokenThenPool => {
                if tokens.nrows() == 0 {
                    return Err(Error::Empty("cannot pool an empty token sequence".into()));
                }
                let z = self.encode_batch(tokens)?;
                Ok(z.sum_axis(Axis(0)) / tokens.nrows() as f64)
            }
        }
    }
}
