//! A tiny pre-norm decoder-only transformer with seeded weights.
//!
//! Each block computes `attn = Attn(LN1(h))`, `mlp = MLP(LN2(h + attn))` and
//! `post = h + attn + mlp`, so every pass satisfies the stream identity by
//! construction. Activations are mean-pooled over tokens before export.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::lexicon::SyntheticLexicon;
use crate::activation::{mean_pool, ActivationMeta, ActivationRecord, ActivationSet, StreamId};
use crate::error::{Error, Result};
use crate::rng;

pub const TOY_MODEL_NAME: &str = "toy-transformer";
pub const DEFAULT_VOCAB_SIZE: usize = 1000;
const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModelSpec {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for ToyModelSpec {
    fn default() -> Self {
        Self {
            n_layers: 2,
            d_model: 16,
            n_heads: 2,
            vocab_size: DEFAULT_VOCAB_SIZE,
            seed: 0,
        }
    }
}

impl ToyModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "toy model needs positive sizes and d_model divisible by n_heads (got {} / {})",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

/// Whitespace tokenizer over a closed word list with single-character
/// fallback tokens (`#c`) for words outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

fn char_token(c: char) -> String {
    format!("#{c}")
}

impl Vocabulary {
    /// Character tokens for `a..=z` and every other character seen, then the
    /// most frequent words (ties alphabetical) until `size` tokens are
    /// reached.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, size: usize) -> Result<Self> {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        let mut chars: std::collections::BTreeSet<char> = ('a'..='z').collect();
        for t in texts {
            for w in t.split_whitespace() {
                *freq.entry(w).or_default() += 1;
                chars.extend(w.chars());
            }
        }
        if chars.len() > size {
            return Err(Error::InvalidArgument(format!(
                "{} distinct characters do not fit a vocabulary of {size}",
                chars.len()
            )));
        }
        let mut words: Vec<(&str, usize)> = freq.into_iter().collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut tokens: Vec<String> = chars.into_iter().map(char_token).collect();
        tokens.extend(words.into_iter().take(size - tokens.len()).map(|(w, _)| w.to_string()));
        Ok(Self::from_tokens(tokens))
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        let mut ids = Vec::new();
        for w in text.split_whitespace() {
            if let Some(id) = self.id(w) {
                ids.push(id);
                continue;
            }
            for c in w.chars() {
                let id = self
                    .id(&char_token(c))
                    .ok_or_else(|| Error::InvalidArgument(format!("character {c:?} in {w:?} is not in the vocabulary")))?;
                ids.push(id);
            }
        }
        if ids.is_empty() {
            return Err(Error::Empty(format!("no tokens in {text:?}")));
        }
        Ok(ids)
    }
}

/// Seeded word vectors that mirror the lexicon: synonyms are close, antonyms
/// point in opposite directions, hyponyms are perturbed copies of their
/// hypernym and dimension 0 carries tree depth.
pub fn concept_vectors(lex: &SyntheticLexicon, d: usize, seed: u64) -> BTreeMap<String, Vec<f64>> {
    let mut rng = rng::stream(seed, "concepts");
    let mut gauss = |scale: f64| -> Array1<f64> { Array1::from_shape_simple_fn(d, || scale * rng.sample::<f64, _>(StandardNormal)) };
    let mut out = BTreeMap::new();
    for synsets in [&lex.nouns, &lex.verbs, &lex.adjs] {
        let mut centers: Vec<Option<Array1<f64>>> = vec![None; synsets.len()];
        let mut depth = vec![0usize; synsets.len()];
        for i in 0..synsets.len() {
            let s = &synsets[i];
            let center = match (s.parent, s.antonym) {
                (Some(p), _) => {
                    depth[i] = depth[p] + 1;
                    centers[p].clone().expect("parents precede children") + gauss(0.6)
                }
                (None, Some(a)) if a < i => -centers[a].clone().expect("partner generated first") + gauss(0.3),
                _ => gauss(1.0),
            };
            let mut center = center;
            if d > 0 {
                center[0] = depth[i] as f64;
            }
            for w in &s.lemmas {
                let v = &center + &gauss(0.15);
                out.insert(w.clone(), v.to_vec());
            }
            centers[i] = Some(center);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    ln1_g: Array1<f64>,
    ln1_b: Array1<f64>,
    w_q: Array2<f64>,
    w_k: Array2<f64>,
    w_v: Array2<f64>,
    w_o: Array2<f64>,
    ln2_g: Array1<f64>,
    ln2_b: Array1<f64>,
    w_1: Array2<f64>,
    b_1: Array1<f64>,
    w_2: Array2<f64>,
    b_2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub spec: ToyModelSpec,
    pub vocab: Vocabulary,
    embed: Array2<f64>,
    blocks: Vec<Block>,
}

/// Per-token activations of one forward pass (`T × d` each).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub resid_in: Array2<f64>,
    pub attn_out: Array2<f64>,
    pub mlp_out: Array2<f64>,
    pub post: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTrace {
    pub embedding: Array2<f64>,
    pub layers: Vec<LayerTrace>,
}

fn positional(t: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((t, d), |(p, i)| {
        let rate = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / d as f64);
        let angle = p as f64 * rate;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let mu = row.mean().unwrap_or(0.0);
        let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / row.len() as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mu) * inv * g[j] + b[j];
        }
    }
    out
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044_715 * x.powi(3))).tanh())
}

impl ToyModel {
    /// Seeded weights. Word tokens found in `word_vectors` use those vectors
    /// as embeddings; all other tokens get seeded Gaussian embeddings.
    pub fn new(spec: ToyModelSpec, vocab: Vocabulary, word_vectors: Option<&BTreeMap<String, Vec<f64>>>) -> Result<Self> {
        spec.validate()?;
        if vocab.len() > spec.vocab_size {
            return Err(Error::InvalidArgument(format!(
                "vocabulary of {} exceeds the model's {}",
                vocab.len(),
                spec.vocab_size
            )));
        }
        let d = spec.d_model;
        let mut rng = rng::stream(spec.seed, "toy-weights");
        let mut mat = |r: usize, c: usize, scale: f64| {
            Array2::from_shape_simple_fn((r, c), || scale * rng.sample::<f64, _>(StandardNormal))
        };
        let mut embed = mat(vocab.len(), d, 1.0);
        if let Some(vectors) = word_vectors {
            for (i, tok) in vocab.tokens.iter().enumerate() {
                if let Some(v) = vectors.get(tok) {
                    if v.len() != d {
                        return Err(Error::Shape(format!("word vector for {tok:?} has {} dims, expected {d}", v.len())));
                    }
                    embed.row_mut(i).assign(&Array1::from(v.clone()));
                }
            }
        }
        let wscale = 1.0 / (d as f64).sqrt();
        let hidden = 4 * d;
        let blocks = (0..spec.n_layers)
            .map(|_| Block {
                ln1_g: Array1::ones(d),
                ln1_b: Array1::zeros(d),
                w_q: mat(d, d, wscale),
                w_k: mat(d, d, wscale),
                w_v: mat(d, d, wscale),
                w_o: mat(d, d, wscale),
                ln2_g: Array1::ones(d),
                ln2_b: Array1::zeros(d),
                w_1: mat(d, hidden, wscale),
                b_1: Array1::zeros(hidden),
                w_2: mat(hidden, d, 1.0 / (hidden as f64).sqrt()),
                b_2: Array1::zeros(d),
            })
            .collect();
        Ok(Self {
            spec,
            vocab,
            embed,
            blocks,
        })
    }

    /// The same model with every block parameter set to zero.
    pub fn zeroed_blocks(mut self) -> Self {
        for b in &mut self.blocks {
            for m in [&mut b.w_q, &mut b.w_k, &mut b.w_v, &mut b.w_o, &mut b.w_1, &mut b.w_2] {
                m.fill(0.0);
            }
            for v in [&mut b.ln1_g, &mut b.ln1_b, &mut b.ln2_g, &mut b.ln2_b, &mut b.b_1, &mut b.b_2] {
                v.fill(0.0);
            }
        }
        self
    }

    fn attention(&self, b: &Block, x: &Array2<f64>) -> Array2<f64> {
        let (t, d) = x.dim();
        let h = self.spec.n_heads;
        let dh = d / h;
        let (q, k, v) = (x.dot(&b.w_q), x.dot(&b.w_k), x.dot(&b.w_v));
        let mut heads = Array2::zeros((t, d));
        for head in 0..h {
            let cols = s![.., head * dh..(head + 1) * dh];
            let (qh, kh, vh) = (q.slice(cols), k.slice(cols), v.slice(cols));
            let mut scores = qh.dot(&kh.t()) / (dh as f64).sqrt();
            for i in 0..t {
                let mut row = scores.row_mut(i);
                let max = row.iter().take(i + 1).copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..t {
                    row[j] = if j <= i { (row[j] - max).exp() } else { 0.0 };
                    z += row[j];
                }
                row /= z;
            }
            heads.slice_mut(cols).assign(&scores.dot(&vh));
        }
        heads.dot(&b.w_o)
    }

    pub fn forward(&self, ids: &[u32]) -> Result<ToyTrace> {
        if ids.is_empty() {
            return Err(Error::Empty("token sequence".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= self.vocab.len()) {
            return Err(Error::UnknownToken(bad));
        }
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let embedding = self.embed.select(Axis(0), &idx) + positional(ids.len(), self.spec.d_model);
        let mut h = embedding.clone();
        let mut layers = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let attn_out = self.attention(b, &layer_norm(&h, &b.ln1_g, &b.ln1_b));
            let mid = &h + &attn_out;
            let hidden = (layer_norm(&mid, &b.ln2_g, &b.ln2_b).dot(&b.w_1) + &b.b_1).mapv(gelu);
            let mlp_out = hidden.dot(&b.w_2) + &b.b_2;
            let post = &mid + &mlp_out;
            layers.push(LayerTrace {
                resid_in: std::mem::replace(&mut h, post.clone()),
                attn_out,
                mlp_out,
                post,
            });
        }
        Ok(ToyTrace { embedding, layers })
    }
}

fn pooled(m: &Array2<f64>) -> Result<Vec<f32>> {
    Ok(mean_pool(m.view())?.iter().map(|&v| v as f32).collect())
}

/// Mean-pooled records for every layer and stream of one instance.
pub fn toy_forward(model: &ToyModel, instance_id: usize, ids: &[u32]) -> Result<Vec<ActivationRecord>> {
    let trace = model.forward(ids)?;
    let mut out = vec![ActivationRecord {
        instance_id,
        layer: 0,
        stream: StreamId::Embedding,
        vector: pooled(&trace.embedding)?,
    }];
    for (layer, lt) in trace.layers.iter().enumerate() {
        for (stream, m) in [
            (StreamId::AttentionOut, &lt.attn_out),
            (StreamId::MlpOut, &lt.mlp_out),
            (StreamId::PostResidual, &lt.post),
        ] {
            out.push(ActivationRecord {
                instance_id,
                layer,
                stream,
                vector: pooled(m)?,
            });
        }
    }
    Ok(out)
}

/// Runs the model over every text (in parallel) and assembles an activation
/// set with all four streams.
pub fn toy_activations(model: &ToyModel, texts: &[String], dataset_checksum: &str) -> Result<ActivationSet> {
    let meta = ActivationMeta {
        model_name: TOY_MODEL_NAME.into(),
        n_layers: model.spec.n_layers,
        d_model: model.spec.d_model,
        streams: StreamId::ALL.to_vec(),
        n_instances: texts.len(),
        dataset_checksum: dataset_checksum.into(),
    };
    let records: Vec<Vec<ActivationRecord>> = texts
        .par_iter()
        .enumerate()
        .map(|(i, t)| toy_forward(model, i, &model.vocab.tokenize(t)?))
        .collect::<Result<_>>()?;
    ActivationSet::from_records(meta, records.into_iter().flatten())
}
