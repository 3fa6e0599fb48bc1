//! C ABI over the relprobe engine.
//!
//! Every fallible function returns a [`RelprobeStatus`]. On failure the
//! message is kept per thread and can be read with
//! [`relprobe_last_error`]. Handles are opaque; each `*_open` / `*_load`
//! has a matching `*_free`, and passing NULL to a `*_free` is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ndarray::ArrayView2;
use relprobe::activation::{read_activations, read_sae, ActivationSet, SaeParams, StreamId};
use relprobe::depth::depth_profile;
use relprobe::intervention::ld_sem;
use relprobe::probe::ProbeModel;
use relprobe::{Error, RelationLabel, N_CLASSES};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelprobeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    /// Malformed, truncated or mismatched file contents.
    Format = 4,
    Shape = 5,
    InvalidArgument = 6,
    /// Dataset construction could not satisfy its constraints.
    Dataset = 7,
    Config = 8,
    /// A Rust panic was caught at the boundary.
    Panic = 9,
    Internal = 10,
}

impl From<&Error> for RelprobeStatus {
    fn from(e: &Error) -> Self {
        use RelprobeStatus as S;
        match e {
            Error::Io { .. } | Error::MissingFile(_) => S::Io,
            Error::Parse { .. }
            | Error::DanglingPointer { .. }
            | Error::BadMagic { .. }
            | Error::UnsupportedVersion(_)
            | Error::Truncated { .. }
            | Error::Checksum { .. }
            | Error::NonFinite(_)
            | Error::UnsupportedNonlinearity(_) => S::Format,
            Error::Exhausted { .. }
            | Error::SamplingBudget { .. }
            | Error::PosUnattainable { .. }
            | Error::SplitInfeasible { .. } => S::Dataset,
            Error::Shape(_) => S::Shape,
            Error::Empty(_)
            | Error::InsufficientData(_)
            | Error::SingleClass
            | Error::AbsentClass(_)
            | Error::InvalidTarget(_)
            | Error::UndefinedCenterOfMass
            | Error::ZeroVector
            | Error::UnsupportedRelation(_)
            | Error::InvalidArgument(_)
            | Error::UnknownToken(_) => S::InvalidArgument,
            Error::Config(_) => S::Config,
            Error::Replicate { .. } | Error::Serde(_) => S::Internal,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(RelprobeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(RelprobeStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RelprobeStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(RelprobeStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording any error or panic for `relprobe_last_error`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RelprobeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            RelprobeStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RelprobeStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Failure(RelprobeStatus::InvalidUtf8, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

unsafe fn boxed_out<T>(out: *mut *mut T, v: T) -> Result<(), Failure> {
    write_out(out, Box::into_raw(Box::new(v)), "out")
}

fn relation(index: u32) -> Result<RelationLabel, Failure> {
    RelationLabel::from_index(index as usize).ok_or_else(|| invalid(format!("relation index {index} out of range")))
}

fn stream(id: u32) -> Result<StreamId, Failure> {
    StreamId::ALL
        .into_iter()
        .find(|s| s.bit() == id)
        .ok_or_else(|| invalid(format!("stream id {id} is not one of 1, 2, 4, 8")))
}

/// Message of the last failed call on this thread, or NULL after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn relprobe_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn relprobe_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// SAE

/// A sparse autoencoder read from a RELSAE1 file.
pub struct RelprobeSae {
    inner: SaeParams,
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn relprobe_sae_open(path: *const c_char, out: *mut *mut RelprobeSae) -> RelprobeStatus {
    guard(|| {
        let path = path_arg(path)?;
        let (inner, _) = read_sae(&path)?;
        boxed_out(out, RelprobeSae { inner })
    })
}

/// # Safety
/// `sae` must be NULL or a handle from `relprobe_sae_open` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn relprobe_sae_free(sae: *mut RelprobeSae) {
    if !sae.is_null() {
        drop(Box::from_raw(sae));
    }
}

/// # Safety
/// `sae` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn relprobe_sae_shape(
    sae: *const RelprobeSae,
    d_model: *mut usize,
    n_latents: *mut usize,
) -> RelprobeStatus {
    guard(|| {
        let s = handle(sae, "sae")?;
        write_out(d_model, s.inner.d_model(), "d_model")?;
        write_out(n_latents, s.inner.n_latents(), "n_latents")
    })
}

/// Encodes one `d_model` vector into `n_latents` latents.
///
/// # Safety
/// `x` must hold `x_len` doubles and `out` room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn relprobe_sae_encode(
    sae: *const RelprobeSae,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> RelprobeStatus {
    guard(|| {
        let s = handle(sae, "sae")?;
        let x = slice_arg(x, x_len, "x")?;
        if out_len != s.inner.n_latents() {
            return Err(Failure(
                RelprobeStatus::Shape,
                format!("output holds {out_len} values, SAE has {} latents", s.inner.n_latents()),
            ));
        }
        let z = s.inner.encode(x.into())?;
        out_slice(out, out_len, "out")?.copy_from_slice(z.as_slice().expect("contiguous"));
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Probe

/// A trained linear probe loaded from its JSON file.
pub struct RelprobeProbe {
    inner: ProbeModel,
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn relprobe_probe_load(path: *const c_char, out: *mut *mut RelprobeProbe) -> RelprobeStatus {
    guard(|| {
        let path = path_arg(path)?;
        let inner = ProbeModel::load(&path)?;
        boxed_out(out, RelprobeProbe { inner })
    })
}

/// # Safety
/// `probe` must be NULL or a handle from `relprobe_probe_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn relprobe_probe_free(probe: *mut RelprobeProbe) {
    if !probe.is_null() {
        drop(Box::from_raw(probe));
    }
}

/// Input width and number of trained classes.
///
/// # Safety
/// `probe` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn relprobe_probe_shape(
    probe: *const RelprobeProbe,
    n_features: *mut usize,
    n_classes: *mut usize,
) -> RelprobeStatus {
    guard(|| {
        let p = handle(probe, "probe")?;
        write_out(n_features, p.inner.n_features(), "n_features")?;
        write_out(n_classes, p.inner.classes.len(), "n_classes")
    })
}

/// Five-class logits of one input row, indexed by relation. Classes absent
/// from training get negative infinity.
///
/// # Safety
/// `x` must hold `x_len` doubles and `out` room for five.
#[no_mangle]
pub unsafe extern "C" fn relprobe_probe_logits(
    probe: *const RelprobeProbe,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
) -> RelprobeStatus {
    guard(|| {
        let p = handle(probe, "probe")?;
        let x = slice_arg(x, x_len, "x")?;
        let logits = p.inner.logits_row(x)?;
        let out = out_slice(out, N_CLASSES, "out")?;
        out.fill(f64::NEG_INFINITY);
        for (c, v) in p.inner.classes.iter().zip(logits) {
            out[c.index()] = v;
        }
        Ok(())
    })
}

/// Predicted relation index for each of `n_rows` row-major inputs.
///
/// # Safety
/// `x` must hold `n_rows * n_features` doubles and `out` room for `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn relprobe_probe_predict(
    probe: *const RelprobeProbe,
    x: *const f64,
    n_rows: usize,
    n_features: usize,
    out: *mut u32,
) -> RelprobeStatus {
    guard(|| {
        let p = handle(probe, "probe")?;
        let len = n_rows.checked_mul(n_features).ok_or_else(|| invalid("input size overflows"))?;
        let x = slice_arg(x, len, "x")?;
        let m = ArrayView2::from_shape((n_rows, n_features), x).map_err(|e| Failure(RelprobeStatus::Shape, e.to_string()))?;
        let pred = p.inner.predict(m)?;
        for (o, l) in out_slice(out, n_rows, "out")?.iter_mut().zip(pred) {
            *o = l.index() as u32;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Activations

/// A RELACT1 activation file held in memory.
pub struct RelprobeActivations {
    inner: ActivationSet,
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn relprobe_activations_open(
    path: *const c_char,
    out: *mut *mut RelprobeActivations,
) -> RelprobeStatus {
    guard(|| {
        let path = path_arg(path)?;
        let inner = read_activations(&path)?;
        boxed_out(out, RelprobeActivations { inner })
    })
}

/// # Safety
/// `acts` must be NULL or a handle from `relprobe_activations_open` not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn relprobe_activations_free(acts: *mut RelprobeActivations) {
    if !acts.is_null() {
        drop(Box::from_raw(acts));
    }
}

/// # Safety
/// `acts` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn relprobe_activations_shape(
    acts: *const RelprobeActivations,
    n_instances: *mut usize,
    n_layers: *mut usize,
    d_model: *mut usize,
) -> RelprobeStatus {
    guard(|| {
        let a = handle(acts, "activations")?;
        write_out(n_instances, a.inner.n_instances(), "n_instances")?;
        write_out(n_layers, a.inner.n_layers(), "n_layers")?;
        write_out(d_model, a.inner.d_model(), "d_model")
    })
}

/// Copies one pooled vector. `stream` is the RELACT1 stream bit
/// (1 attention, 2 MLP, 4 post-residual, 8 embedding).
///
/// # Safety
/// `acts` must be a live handle and `out` must have room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn relprobe_activations_vector(
    acts: *const RelprobeActivations,
    instance: usize,
    layer: usize,
    stream_id: u32,
    out: *mut f32,
    out_len: usize,
) -> RelprobeStatus {
    guard(|| {
        let a = handle(acts, "activations")?;
        let v = a.inner.vector(instance, layer, stream(stream_id)?)?;
        if out_len != v.len() {
            return Err(Failure(
                RelprobeStatus::Shape,
                format!("output holds {out_len} values, vectors have {}", v.len()),
            ));
        }
        out_slice(out, out_len, "out")?.copy_from_slice(v);
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Metrics

/// Semantic logit difference of a five-class logit vector for a semantic
/// target (relation index 0 to 3).
///
/// # Safety
/// `logits` must hold `len` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn relprobe_ld_sem(logits: *const f64, len: usize, target: u32, out: *mut f64) -> RelprobeStatus {
    guard(|| {
        let logits = slice_arg(logits, len, "logits")?;
        let v = ld_sem(logits, relation(target)?)?;
        write_out(out, v, "out")
    })
}

/// Summary of a per-layer accuracy curve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RelprobeDepthProfile {
    pub mean: f64,
    pub peak: f64,
    pub peak_depth: usize,
    pub com: f64,
    pub peak_depth_norm: f64,
    pub com_norm: f64,
}

/// # Safety
/// `accs` must hold `n_layers` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn relprobe_depth_profile(
    accs: *const f64,
    n_layers: usize,
    out: *mut RelprobeDepthProfile,
) -> RelprobeStatus {
    guard(|| {
        let accs = slice_arg(accs, n_layers, "accs")?;
        let p = depth_profile(accs)?;
        write_out(
            out,
            RelprobeDepthProfile {
                mean: p.mean,
                peak: p.peak,
                peak_depth: p.peak_depth,
                com: p.com,
                peak_depth_norm: p.peak_depth_norm,
                com_norm: p.com_norm,
            },
            "out",
        )
    })
}
