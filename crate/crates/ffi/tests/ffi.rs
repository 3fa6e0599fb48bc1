use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use ndarray::Array2;
use relprobe::activation::{write_activations, write_sae, ActivationMeta, ActivationSet, StreamId};
use relprobe::probe::{ProbeConfig, ProbeModel};
use relprobe::synthetic::toy_sae;
use relprobe::RelationLabel;
use relprobe_ffi::*;

fn c_path(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = relprobe_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(relprobe_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn ld_sem_matches_the_engine_and_rejects_random() {
    let logits = [1.0, 3.0, 0.5, 2.0, 9.0];
    let mut out = 0.0;
    let s = unsafe { relprobe_ld_sem(logits.as_ptr(), 5, 1, &mut out) };
    assert_eq!(s, RelprobeStatus::Ok);
    assert!(relprobe_last_error().is_null());
    assert_eq!(out, 1.0);

    let s = unsafe { relprobe_ld_sem(logits.as_ptr(), 5, RelationLabel::Random.index() as u32, &mut out) };
    assert_eq!(s, RelprobeStatus::InvalidArgument);
    assert!(last_error().contains("random"));

    let s = unsafe { relprobe_ld_sem(logits.as_ptr(), 4, 0, &mut out) };
    assert_eq!(s, RelprobeStatus::Shape);
    let s = unsafe { relprobe_ld_sem(ptr::null(), 5, 0, &mut out) };
    assert_eq!(s, RelprobeStatus::NullPointer);
    let s = unsafe { relprobe_ld_sem(logits.as_ptr(), 5, 7, &mut out) };
    assert_eq!(s, RelprobeStatus::InvalidArgument);
}

#[test]
fn depth_profile_closed_form_and_errors() {
    let accs = [0.2, 0.6, 0.4];
    let mut p = RelprobeDepthProfile::default();
    assert_eq!(unsafe { relprobe_depth_profile(accs.as_ptr(), 3, &mut p) }, RelprobeStatus::Ok);
    assert_eq!(p.peak_depth, 1);
    assert!((p.mean - 0.4).abs() < 1e-12);
    assert!((p.com - (0.6 + 0.8) / 1.2).abs() < 1e-12);
    assert!((p.com_norm - p.com / 2.0).abs() < 1e-12);
    assert!((p.peak_depth_norm - 0.5).abs() < 1e-12);

    let zeros = [0.0, 0.0];
    assert_eq!(
        unsafe { relprobe_depth_profile(zeros.as_ptr(), 2, &mut p) },
        RelprobeStatus::InvalidArgument
    );
    assert!(last_error().contains("center of mass"));
    assert_eq!(
        unsafe { relprobe_depth_profile(accs.as_ptr(), 3, ptr::null_mut()) },
        RelprobeStatus::NullPointer
    );
}

#[test]
fn sae_handle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.relsae");
    let sae = toy_sae(8, 3).unwrap();
    write_sae(&path, &sae, Some(0), "test").unwrap();

    let mut h: *mut RelprobeSae = ptr::null_mut();
    assert_eq!(unsafe { relprobe_sae_open(c_path(&path).as_ptr(), &mut h) }, RelprobeStatus::Ok);
    let (mut d, mut m) = (0usize, 0usize);
    assert_eq!(unsafe { relprobe_sae_shape(h, &mut d, &mut m) }, RelprobeStatus::Ok);
    assert_eq!((d, m), (8, 32));

    let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.25 - 1.0).collect();
    let mut z = vec![0.0; m];
    assert_eq!(unsafe { relprobe_sae_encode(h, x.as_ptr(), 8, z.as_mut_ptr(), m) }, RelprobeStatus::Ok);
    let expected = sae.encode(ndarray::ArrayView1::from(&x)).unwrap();
    assert_eq!(z, expected.to_vec());
    assert_eq!(
        unsafe { relprobe_sae_encode(h, x.as_ptr(), 8, z.as_mut_ptr(), m - 1) },
        RelprobeStatus::Shape
    );
    unsafe { relprobe_sae_free(h) };
    unsafe { relprobe_sae_free(ptr::null_mut()) };
}

#[test]
fn opening_bad_files_reports_status_and_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.relsae");
    let mut h: *mut RelprobeSae = ptr::null_mut();
    assert_eq!(unsafe { relprobe_sae_open(c_path(&missing).as_ptr(), &mut h) }, RelprobeStatus::Io);
    assert!(h.is_null());

    let junk = dir.path().join("junk.relsae");
    std::fs::write(&junk, b"not an sae file at all").unwrap();
    assert_eq!(unsafe { relprobe_sae_open(c_path(&junk).as_ptr(), &mut h) }, RelprobeStatus::Format);
    assert!(last_error().contains("magic"));

    assert_eq!(unsafe { relprobe_sae_open(ptr::null(), &mut h) }, RelprobeStatus::NullPointer);
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { relprobe_sae_open(bad.as_ptr().cast(), &mut h) },
        RelprobeStatus::InvalidUtf8
    );
}

#[test]
fn probe_handle_matches_engine_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("probe.json");
    let n = 50;
    let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64 + if j == i % 3 { 5.0 } else { 0.0 });
    let y: Vec<RelationLabel> = (0..n).map(|i| RelationLabel::ALL[i % 3]).collect();
    let probe = ProbeModel::train(x.view(), &y, &ProbeConfig::default()).unwrap();
    probe.save(&path).unwrap();

    let mut h: *mut RelprobeProbe = ptr::null_mut();
    assert_eq!(unsafe { relprobe_probe_load(c_path(&path).as_ptr(), &mut h) }, RelprobeStatus::Ok);
    let (mut f, mut c) = (0usize, 0usize);
    assert_eq!(unsafe { relprobe_probe_shape(h, &mut f, &mut c) }, RelprobeStatus::Ok);
    assert_eq!((f, c), (3, 3));

    let flat: Vec<f64> = x.iter().copied().collect();
    let mut pred = vec![0u32; n];
    assert_eq!(
        unsafe { relprobe_probe_predict(h, flat.as_ptr(), n, 3, pred.as_mut_ptr()) },
        RelprobeStatus::Ok
    );
    let expected: Vec<u32> = probe.predict(x.view()).unwrap().iter().map(|l| l.index() as u32).collect();
    assert_eq!(pred, expected);

    let mut logits = [0.0; 5];
    assert_eq!(
        unsafe { relprobe_probe_logits(h, flat.as_ptr(), 3, logits.as_mut_ptr()) },
        RelprobeStatus::Ok
    );
    let row = probe.logits_row(&flat[..3]).unwrap();
    assert_eq!(&logits[..3], &row[..]);
    assert!(logits[3..].iter().all(|v| *v == f64::NEG_INFINITY));
    unsafe { relprobe_probe_free(h) };
}

#[test]
fn activation_handle_reads_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("acts.relact");
    let meta = ActivationMeta {
        model_name: "m".into(),
        n_layers: 2,
        d_model: 4,
        streams: vec![StreamId::PostResidual, StreamId::Embedding],
        n_instances: 3,
        dataset_checksum: "abc".into(),
    };
    let mut set = ActivationSet::zeros(meta).unwrap();
    set.set(2, 1, StreamId::PostResidual, &[1.0, 2.0, 3.0, 4.0]).unwrap();
    write_activations(&path, &set).unwrap();

    let mut h: *mut RelprobeActivations = ptr::null_mut();
    assert_eq!(unsafe { relprobe_activations_open(c_path(&path).as_ptr(), &mut h) }, RelprobeStatus::Ok);
    let (mut n, mut l, mut d) = (0, 0, 0);
    assert_eq!(unsafe { relprobe_activations_shape(h, &mut n, &mut l, &mut d) }, RelprobeStatus::Ok);
    assert_eq!((n, l, d), (3, 2, 4));
    let mut v = [0f32; 4];
    let post = StreamId::PostResidual.bit();
    assert_eq!(
        unsafe { relprobe_activations_vector(h, 2, 1, post, v.as_mut_ptr(), 4) },
        RelprobeStatus::Ok
    );
    assert_eq!(v, [1.0, 2.0, 3.0, 4.0]);
    assert_eq!(
        unsafe { relprobe_activations_vector(h, 2, 1, StreamId::MlpOut.bit(), v.as_mut_ptr(), 4) },
        RelprobeStatus::Shape
    );
    assert_eq!(
        unsafe { relprobe_activations_vector(h, 2, 1, 3, v.as_mut_ptr(), 4) },
        RelprobeStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { relprobe_activations_vector(h, 9, 1, post, v.as_mut_ptr(), 4) },
        RelprobeStatus::Shape
    );
    unsafe { relprobe_activations_free(h) };
}

#[test]
fn header_declares_the_api_and_parses_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/relprobe.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "relprobe_last_error",
        "relprobe_sae_open",
        "relprobe_sae_encode",
        "relprobe_probe_predict",
        "relprobe_activations_vector",
        "relprobe_ld_sem",
        "relprobe_depth_profile",
        "typedef struct RelprobeSae RelprobeSae;",
        "RELPROBE_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    if let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .output()
    {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
