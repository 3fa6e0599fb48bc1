//! RELACT1 / RELSAE1 binary formats.
//!
//! Both are little-endian: an 8-byte magic, a fixed run of `u32` header
//! fields, then an `f32` payload. Each binary has a JSON sidecar manifest
//! (`x.manifest.json`) carrying descriptive metadata and the SHA-256 of the
//! payload.
//!
//! RELACT1 header: magic, version, L, d, n, stream mask. Records follow in
//! (instance, layer, stream) order; the embedding stream is stored at layer 0
//! only.
//!
//! RELSAE1 header: magic, version, d, m, nonlinearity id. Payload: `W_enc`
//! (d × m, row-major), `b_enc`, `W_dec` (m × d, row-major), `b_dec`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::sae::{Nonlinearity, SaeParams};
use super::{ActivationMeta, ActivationSet, StreamId};
use crate::checksum::{manifest_path, sha256_hex};
use crate::error::{Error, Result};

pub const ACT_MAGIC: &[u8; 8] = b"RELACT1\0";
pub const SAE_MAGIC: &[u8; 8] = b"RELSAE1\0";
pub const ACT_VERSION: u32 = 1;
pub const SAE_VERSION: u32 = 1;
const ACT_HEADER: usize = 8 + 5 * 4;
const SAE_HEADER: usize = 8 + 4 * 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationManifest {
    pub format: String,
    pub version: u32,
    pub model_name: String,
    pub n_layers: usize,
    pub d_model: usize,
    pub streams: Vec<StreamId>,
    pub n_instances: usize,
    pub dataset_checksum: String,
    pub endianness: String,
    pub payload_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeManifest {
    pub format: String,
    pub version: u32,
    pub d_model: usize,
    pub n_latents: usize,
    pub nonlinearity: Nonlinearity,
    pub layer: Option<usize>,
    /// Where the dictionary came from (a pre-trained id or "synthetic").
    pub source: String,
    pub endianness: String,
    pub payload_sha256: String,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Shape(format!("{v} does not fit in a u32 header field")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn get_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn put_f32s<'a>(buf: &mut Vec<u8>, xs: impl IntoIterator<Item = &'a f32>) {
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

fn get_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect()
}

fn write_pair<M: Serialize>(path: &Path, bytes: &[u8], manifest: &M) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))
}

fn read_manifest<M: for<'de> Deserialize<'de>>(path: &Path) -> Result<M> {
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads the file, checks the magic and header length, and returns the
/// bytes.
fn read_checked(path: &Path, magic: &[u8; 8], header: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let n = bytes.len().min(8);
    if bytes[..n] != magic[..n] {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: String::from_utf8_lossy(&magic[..7]).into_owned(),
        });
    }
    if bytes.len() < header {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: header as u64,
            found: bytes.len() as u64,
        });
    }
    Ok(bytes)
}

fn check_length(path: &Path, bytes: &[u8], expected: usize) -> Result<()> {
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: bytes.len() as u64,
        });
    }
    if bytes.len() > expected {
        return Err(Error::Shape(format!(
            "{} has {} trailing bytes",
            path.display(),
            bytes.len() - expected
        )));
    }
    Ok(())
}

fn check_payload(path: &Path, payload: &[u8], expected: &str) -> Result<()> {
    let found = sha256_hex(payload);
    if found != expected {
        return Err(Error::Checksum {
            what: format!("payload of {}", path.display()),
            expected: expected.to_string(),
            found,
        });
    }
    Ok(())
}

/// Writes `set` as RELACT1 plus manifest; returns the manifest.
pub fn write_activations(path: &Path, set: &ActivationSet) -> Result<ActivationManifest> {
    let meta = set.meta();
    let mut bytes = Vec::with_capacity(ACT_HEADER + set.raw().len() * 4);
    bytes.extend_from_slice(ACT_MAGIC);
    put_u32(&mut bytes, ACT_VERSION as usize)?;
    put_u32(&mut bytes, meta.n_layers)?;
    put_u32(&mut bytes, meta.d_model)?;
    put_u32(&mut bytes, meta.n_instances)?;
    put_u32(&mut bytes, StreamId::mask(&meta.streams) as usize)?;
    put_f32s(&mut bytes, set.raw());
    let manifest = ActivationManifest {
        format: "RELACT1".into(),
        version: ACT_VERSION,
        model_name: meta.model_name.clone(),
        n_layers: meta.n_layers,
        d_model: meta.d_model,
        streams: meta.streams.clone(),
        n_instances: meta.n_instances,
        dataset_checksum: meta.dataset_checksum.clone(),
        endianness: "little".into(),
        payload_sha256: sha256_hex(&bytes[ACT_HEADER..]),
    };
    write_pair(path, &bytes, &manifest)?;
    Ok(manifest)
}

/// Reads and fully validates a RELACT1 file and its manifest.
pub fn read_activations(path: &Path) -> Result<ActivationSet> {
    let bytes = read_checked(path, ACT_MAGIC, ACT_HEADER)?;
    let version = get_u32(&bytes, 8);
    if version != ACT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (l, d, n, mask) = (
        get_u32(&bytes, 12) as usize,
        get_u32(&bytes, 16) as usize,
        get_u32(&bytes, 20) as usize,
        get_u32(&bytes, 24),
    );
    let meta = ActivationMeta {
        model_name: String::new(),
        n_layers: l,
        d_model: d,
        streams: StreamId::from_mask(mask)?,
        n_instances: n,
        dataset_checksum: String::new(),
    };
    check_length(path, &bytes, ACT_HEADER + n * meta.records_per_instance() * d * 4)?;
    let manifest: ActivationManifest = read_manifest(path)?;
    if manifest.endianness != "little" {
        return Err(Error::Shape(format!("unsupported endianness '{}'", manifest.endianness)));
    }
    if (manifest.n_layers, manifest.d_model, manifest.n_instances, StreamId::mask(&manifest.streams))
        != (l, d, n, mask)
    {
        return Err(Error::Shape(format!(
            "manifest (L={}, d={}, n={}) disagrees with header (L={l}, d={d}, n={n})",
            manifest.n_layers, manifest.d_model, manifest.n_instances
        )));
    }
    check_payload(path, &bytes[ACT_HEADER..], &manifest.payload_sha256)?;
    let meta = ActivationMeta {
        model_name: manifest.model_name,
        dataset_checksum: manifest.dataset_checksum,
        ..meta
    };
    ActivationSet::from_raw(meta, get_f32s(&bytes[ACT_HEADER..]))
}

/// [`read_activations`], additionally requiring that the activations were
/// computed from the dataset with checksum `dataset_checksum`.
pub fn read_activations_checked(path: &Path, dataset_checksum: &str) -> Result<ActivationSet> {
    let set = read_activations(path)?;
    if set.meta().dataset_checksum != dataset_checksum {
        return Err(Error::Checksum {
            what: format!("dataset referenced by {}", path.display()),
            expected: dataset_checksum.to_string(),
            found: set.meta().dataset_checksum.clone(),
        });
    }
    Ok(set)
}

pub fn write_sae(path: &Path, sae: &SaeParams, layer: Option<usize>, source: &str) -> Result<SaeManifest> {
    let (d, m) = (sae.d_model(), sae.n_latents());
    let mut bytes = Vec::with_capacity(SAE_HEADER + (2 * d * m + d + m) * 4);
    bytes.extend_from_slice(SAE_MAGIC);
    put_u32(&mut bytes, SAE_VERSION as usize)?;
    put_u32(&mut bytes, d)?;
    put_u32(&mut bytes, m)?;
    put_u32(&mut bytes, sae.nonlinearity.id() as usize)?;
    put_f32s(&mut bytes, sae.w_enc.iter());
    put_f32s(&mut bytes, sae.b_enc.iter());
    put_f32s(&mut bytes, sae.w_dec.iter());
    put_f32s(&mut bytes, sae.b_dec.iter());
    let manifest = SaeManifest {
        format: "RELSAE1".into(),
        version: SAE_VERSION,
        d_model: d,
        n_latents: m,
        nonlinearity: sae.nonlinearity,
        layer,
        source: source.into(),
        endianness: "little".into(),
        payload_sha256: sha256_hex(&bytes[SAE_HEADER..]),
    };
    write_pair(path, &bytes, &manifest)?;
    Ok(manifest)
}

pub fn read_sae(path: &Path) -> Result<(SaeParams, SaeManifest)> {
    let bytes = read_checked(path, SAE_MAGIC, SAE_HEADER)?;
    let version = get_u32(&bytes, 8);
    if version != SAE_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (d, m) = (get_u32(&bytes, 12) as usize, get_u32(&bytes, 16) as usize);
    let nonlinearity = Nonlinearity::from_id(get_u32(&bytes, 20))?;
    check_length(path, &bytes, SAE_HEADER + (2 * d * m + d + m) * 4)?;
    let manifest: SaeManifest = read_manifest(path)?;
    if (manifest.d_model, manifest.n_latents) != (d, m) || manifest.nonlinearity != nonlinearity {
        return Err(Error::Shape(format!(
            "manifest (d={}, m={}) disagrees with header (d={d}, m={m})",
            manifest.d_model, manifest.n_latents
        )));
    }
    check_payload(path, &bytes[SAE_HEADER..], &manifest.payload_sha256)?;
    let mut floats = get_f32s(&bytes[SAE_HEADER..]).into_iter();
    let mut take = |k: usize| -> Vec<f32> { floats.by_ref().take(k).collect() };
    let w_enc = Array2::from_shape_vec((d, m), take(d * m)).expect("sized");
    let b_enc = Array1::from_vec(take(m));
    let w_dec = Array2::from_shape_vec((m, d), take(m * d)).expect("sized");
    let b_dec = Array1::from_vec(take(d));
    let sae = SaeParams::new(w_enc, b_enc, w_dec, b_dec, nonlinearity)?;
    Ok((sae, manifest))
}
