//! Activation storage: stream identifiers, the dense per-instance activation
//! set, pooling, the RELACT1/RELSAE1 binary formats and SAE encode/decode.

mod format;
mod sae;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{
    read_activations, read_activations_checked, read_sae, write_activations, write_sae, ActivationManifest,
    SaeManifest, ACT_MAGIC, ACT_VERSION, SAE_MAGIC, SAE_VERSION,
};
pub use sae::{EncodeMode, Nonlinearity, SaeParams};

/// Which activation stream a vector was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamId {
    AttentionOut,
    MlpOut,
    PostResidual,
    /// Token embedding (input to the first block); stored at layer 0 only.
    Embedding,
}

impl StreamId {
    pub const ALL: [StreamId; 4] = [StreamId::AttentionOut, StreamId::MlpOut, StreamId::PostResidual, StreamId::Embedding];
    /// The three per-block streams.
    pub const BLOCK: [StreamId; 3] = [StreamId::AttentionOut, StreamId::MlpOut, StreamId::PostResidual];

    /// Bit in the RELACT1 stream mask.
    pub fn bit(self) -> u32 {
        match self {
            StreamId::AttentionOut => 1,
            StreamId::MlpOut => 2,
            StreamId::PostResidual => 4,
            StreamId::Embedding => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StreamId::AttentionOut => "attention_out",
            StreamId::MlpOut => "mlp_out",
            StreamId::PostResidual => "post_residual",
            StreamId::Embedding => "embedding",
        }
    }

    pub fn from_mask(mask: u32) -> Result<Vec<StreamId>> {
        if mask == 0 || mask & !0xF != 0 {
            return Err(Error::Shape(format!("invalid stream mask {mask:#x}")));
        }
        Ok(Self::ALL.into_iter().filter(|s| mask & s.bit() != 0).collect())
    }

    pub fn mask(streams: &[StreamId]) -> u32 {
        streams.iter().fold(0, |m, s| m | s.bit())
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StreamId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = match s {
            "attn" => "attention_out",
            "mlp" => "mlp_out",
            "post" | "resid" => "post_residual",
            "embed" => "embedding",
            other => other,
        };
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stream '{s}'")))
    }
}

/// Descriptive metadata shared by an activation set and its manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationMeta {
    pub model_name: String,
    pub n_layers: usize,
    pub d_model: usize,
    /// Streams present, in canonical order.
    pub streams: Vec<StreamId>,
    pub n_instances: usize,
    /// Checksum of the dataset file these activations were computed from.
    pub dataset_checksum: String,
}

impl ActivationMeta {
    fn validate(&mut self) -> Result<()> {
        if self.n_layers == 0 || self.d_model == 0 {
            return Err(Error::Shape("n_layers and d_model must be positive".into()));
        }
        let mask = StreamId::mask(&self.streams);
        self.streams = StreamId::from_mask(mask)?;
        Ok(())
    }

    /// Records stored per instance.
    pub fn records_per_instance(&self) -> usize {
        let block = self.streams.iter().filter(|s| **s != StreamId::Embedding).count();
        block * self.n_layers + usize::from(self.streams.contains(&StreamId::Embedding))
    }

    /// Record slot of `(layer, stream)` within an instance, in
    /// (layer, stream) order with the embedding at layer 0.
    pub fn slot(&self, layer: usize, stream: StreamId) -> Option<usize> {
        if !self.streams.contains(&stream) || layer >= self.n_layers {
            return None;
        }
        if stream == StreamId::Embedding && layer != 0 {
            return None;
        }
        let at_layer0 = self.streams.len();
        let block: Vec<StreamId> = self.streams.iter().copied().filter(|s| *s != StreamId::Embedding).collect();
        if layer == 0 {
            return self.streams.iter().position(|s| *s == stream);
        }
        let pos = block.iter().position(|s| *s == stream)?;
        Some(at_layer0 + (layer - 1) * block.len() + pos)
    }

    /// Layers at which `stream` is stored.
    pub fn layers_of(&self, stream: StreamId) -> std::ops::Range<usize> {
        match (self.streams.contains(&stream), stream) {
            (false, _) => 0..0,
            (true, StreamId::Embedding) => 0..1,
            (true, _) => 0..self.n_layers,
        }
    }
}

/// One pooled activation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub instance_id: usize,
    pub layer: usize,
    pub stream: StreamId,
    pub vector: Vec<f32>,
}

/// Dense, immutable-after-build store of pooled activations.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    meta: ActivationMeta,
    data: Vec<f32>,
}

impl ActivationSet {
    pub fn zeros(mut meta: ActivationMeta) -> Result<Self> {
        meta.validate()?;
        let len = meta.n_instances * meta.records_per_instance() * meta.d_model;
        Ok(Self { meta, data: vec![0.0; len] })
    }

    /// Builds a set from raw payload in record order.
    pub fn from_raw(mut meta: ActivationMeta, data: Vec<f32>) -> Result<Self> {
        meta.validate()?;
        let expected = meta.n_instances * meta.records_per_instance() * meta.d_model;
        if data.len() != expected {
            return Err(Error::Shape(format!("payload has {} floats, expected {expected}", data.len())));
        }
        let set = Self { meta, data };
        set.check_finite()?;
        Ok(set)
    }

    /// Builds a set from individual records; every slot must be filled
    /// exactly once.
    pub fn from_records(meta: ActivationMeta, records: impl IntoIterator<Item = ActivationRecord>) -> Result<Self> {
        let mut set = Self::zeros(meta)?;
        let mut filled = vec![false; set.meta.n_instances * set.meta.records_per_instance()];
        for r in records {
            let idx = set.record_index(r.instance_id, r.layer, r.stream)?;
            if filled[idx] {
                return Err(Error::Shape(format!(
                    "duplicate record for instance {} layer {} stream {}",
                    r.instance_id, r.layer, r.stream
                )));
            }
            filled[idx] = true;
            set.set(r.instance_id, r.layer, r.stream, &r.vector)?;
        }
        if let Some(missing) = filled.iter().position(|f| !f) {
            return Err(Error::Shape(format!("record {missing} missing")));
        }
        set.check_finite()?;
        Ok(set)
    }

    pub fn meta(&self) -> &ActivationMeta {
        &self.meta
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    pub fn n_instances(&self) -> usize {
        self.meta.n_instances
    }

    pub fn n_layers(&self) -> usize {
        self.meta.n_layers
    }

    pub fn d_model(&self) -> usize {
        self.meta.d_model
    }

    pub fn has_stream(&self, stream: StreamId) -> bool {
        self.meta.streams.contains(&stream)
    }

    fn record_index(&self, instance: usize, layer: usize, stream: StreamId) -> Result<usize> {
        if instance >= self.meta.n_instances {
            return Err(Error::Shape(format!(
                "instance {instance} out of range ({} instances)",
                self.meta.n_instances
            )));
        }
        let slot = self
            .meta
            .slot(layer, stream)
            .ok_or_else(|| Error::Shape(format!("no {stream} record at layer {layer}")))?;
        Ok(instance * self.meta.records_per_instance() + slot)
    }

    pub fn vector(&self, instance: usize, layer: usize, stream: StreamId) -> Result<&[f32]> {
        let d = self.meta.d_model;
        let i = self.record_index(instance, layer, stream)?;
        Ok(&self.data[i * d..(i + 1) * d])
    }

    pub fn set(&mut self, instance: usize, layer: usize, stream: StreamId, vector: &[f32]) -> Result<()> {
        let d = self.meta.d_model;
        if vector.len() != d {
            return Err(Error::Shape(format!("vector length {} but d_model is {d}", vector.len())));
        }
        let i = self.record_index(instance, layer, stream)?;
        self.data[i * d..(i + 1) * d].copy_from_slice(vector);
        Ok(())
    }

    /// Rows `rows` of `(layer, stream)` as an f64 matrix.
    pub fn matrix(&self, layer: usize, stream: StreamId, rows: &[usize]) -> Result<Array2<f64>> {
        let d = self.meta.d_model;
        let mut out = Array2::zeros((rows.len(), d));
        for (r, &i) in rows.iter().enumerate() {
            let v = self.vector(i, layer, stream)?;
            out.row_mut(r).iter_mut().zip(v).for_each(|(o, &x)| *o = f64::from(x));
        }
        Ok(out)
    }

    /// All records in storage order.
    pub fn records(&self) -> impl Iterator<Item = ActivationRecord> + '_ {
        let meta = &self.meta;
        (0..meta.n_instances).flat_map(move |i| {
            (0..meta.n_layers).flat_map(move |l| {
                meta.streams
                    .iter()
                    .filter(move |&&s| meta.slot(l, s).is_some())
                    .map(move |&s| ActivationRecord {
                        instance_id: i,
                        layer: l,
                        stream: s,
                        vector: self.vector(i, l, s).expect("slot exists").to_vec(),
                    })
            })
        })
    }

    fn check_finite(&self) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|x| !x.is_finite()) {
            let d = self.meta.d_model;
            let per = self.meta.records_per_instance();
            return Err(Error::NonFinite(format!(
                "instance {} record {} element {}",
                pos / d / per,
                (pos / d) % per,
                pos % d
            )));
        }
        Ok(())
    }
}

/// Elementwise mean over the rows of a `T × d` token matrix.
pub fn mean_pool(tokens: ArrayView2<f64>) -> Result<Array1<f64>> {
    if tokens.nrows() == 0 {
        return Err(Error::Empty("cannot pool an empty token sequence".into()));
    }
    Ok(tokens.sum_axis(Axis(0)) / tokens.nrows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    pub(crate) fn meta(n: usize, d: usize, streams: &[StreamId]) -> ActivationMeta {
        ActivationMeta {
            model_name: "toy".into(),
            n_layers: 3,
            d_model: d,
            streams: streams.to_vec(),
            n_instances: n,
            dataset_checksum: "abc".into(),
        }
    }

    #[test]
    fn pooling_identity_and_symmetry() {
        let v = array![[1.5, -2.0, 0.25]];
        assert_eq!(mean_pool(v.view()).unwrap(), array![1.5, -2.0, 0.25]);
        assert_eq!(mean_pool(array![[1.0, 3.0], [3.0, 1.0]].view()).unwrap(), array![2.0, 2.0]);
        assert!(matches!(mean_pool(Array2::<f64>::zeros((0, 3)).view()), Err(Error::Empty(_))));
    }

    #[test]
    fn pooling_matches_summation_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m = Array2::from_shape_fn((5, 7), |_| rng.random_range(-3.0..3.0));
        let pooled = mean_pool(m.view()).unwrap();
        for j in 0..7 {
            let mut s = 0.0;
            for i in 0..5 {
                s += m[[i, j]];
            }
            assert!((pooled[j] - s / 5.0).abs() <= 1e-12);
        }
        let scaled = mean_pool((&m * 2.5).view()).unwrap();
        for j in 0..7 {
            assert!((scaled[j] - 2.5 * pooled[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn slots_follow_layer_then_stream_order() {
        let m = meta(1, 2, &StreamId::ALL);
        assert_eq!(m.records_per_instance(), 10);
        assert_eq!(m.slot(0, StreamId::AttentionOut), Some(0));
        assert_eq!(m.slot(0, StreamId::Embedding), Some(3));
        assert_eq!(m.slot(1, StreamId::AttentionOut), Some(4));
        assert_eq!(m.slot(2, StreamId::PostResidual), Some(9));
        assert_eq!(m.slot(1, StreamId::Embedding), None);
        let post_only = meta(1, 2, &[StreamId::PostResidual]);
        assert_eq!(post_only.slot(2, StreamId::PostResidual), Some(2));
    }

    #[test]
    fn wrong_vector_length_is_a_shape_error() {
        let m = meta(1, 8, &[StreamId::PostResidual]);
        let records = (0..3).map(|l| ActivationRecord {
            instance_id: 0,
            layer: l,
            stream: StreamId::PostResidual,
            vector: vec![0.0; 7],
        });
        assert!(matches!(ActivationSet::from_records(m, records), Err(Error::Shape(_))));
    }

    #[test]
    fn records_round_trip_through_from_records() {
        let m = meta(2, 3, &StreamId::ALL);
        let mut set = ActivationSet::zeros(m.clone()).unwrap();
        let mut x = 0.0f32;
        for i in 0..2 {
            for l in 0..3 {
                for s in StreamId::ALL {
                    if set.meta().slot(l, s).is_some() {
                        x += 1.0;
                        set.set(i, l, s, &[x, -x, x * 0.5]).unwrap();
                    }
                }
            }
        }
        let rebuilt = ActivationSet::from_records(m, set.records()).unwrap();
        assert_eq!(rebuilt, set);
        // storage order equals record order
        assert_eq!(set.raw()[0..3], [1.0, -1.0, 0.5]);
    }
}
