use ndarray::{Array1, Array2};
use proptest::prelude::*;

use relprobe::activation::{
    read_activations, read_activations_checked, read_sae, write_activations, write_sae, ActivationMeta, ActivationSet,
    Nonlinearity, SaeParams, StreamId,
};
use relprobe::checksum::manifest_path;
use relprobe::Error;

fn stream_sets() -> impl Strategy<Value = Vec<StreamId>> {
    (1u32..16).prop_map(|mask| StreamId::from_mask(mask).unwrap())
}

fn activation_set() -> impl Strategy<Value = ActivationSet> {
    (1usize..4, 1usize..6, 1usize..5, stream_sets()).prop_flat_map(|(layers, d, n, streams)| {
        let meta = ActivationMeta {
            model_name: "prop".into(),
            n_layers: layers,
            d_model: d,
            streams,
            n_instances: n,
            dataset_checksum: "c0ffee".into(),
        };
        let len = n * meta.records_per_instance() * d;
        prop::collection::vec(-1e6f32..1e6, len).prop_map(move |data| ActivationSet::from_raw(meta.clone(), data).unwrap())
    })
}

fn sae() -> impl Strategy<Value = SaeParams> {
    (1usize..6, 1usize..10).prop_flat_map(|(d, m)| {
        let n = 2 * d * m + m + d;
        prop::collection::vec(-10f32..10.0, n).prop_map(move |v| {
            let w_enc = Array2::from_shape_vec((d, m), v[..d * m].to_vec()).unwrap();
            let w_dec = Array2::from_shape_vec((m, d), v[d * m..2 * d * m].to_vec()).unwrap();
            let b_enc = Array1::from_vec(v[2 * d * m..2 * d * m + m].to_vec());
            let b_dec = Array1::from_vec(v[2 * d * m + m..].to_vec());
            SaeParams::new(w_enc, b_enc, w_dec, b_dec, Nonlinearity::Relu).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relact_round_trips_bit_exact(set in activation_set()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.relact");
        let manifest = write_activations(&path, &set).unwrap();
        prop_assert_eq!(&manifest.dataset_checksum, "c0ffee");
        let back = read_activations_checked(&path, "c0ffee").unwrap();
        prop_assert_eq!(back.meta(), set.meta());
        let bits = |s: &ActivationSet| s.raw().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&set));
        let wrong = read_activations_checked(&path, "other");
        let is_checksum = matches!(wrong, Err(Error::Checksum { .. }));
        prop_assert!(is_checksum);
    }

    #[test]
    fn relsae_round_trips_bit_exact(params in sae(), layer in prop::option::of(0usize..40)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.relsae");
        write_sae(&path, &params, layer, "synthetic").unwrap();
        let (back, manifest) = read_sae(&path).unwrap();
        prop_assert_eq!(manifest.layer, layer);
        prop_assert_eq!(manifest.n_latents, params.n_latents());
        prop_assert_eq!(back, params);
    }

    #[test]
    fn any_truncation_is_an_error_not_a_panic(set in activation_set(), cut in 0.0f64..1.0) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.relact");
        write_activations(&path, &set).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let keep = ((bytes.len() as f64) * cut) as usize;
        std::fs::write(&path, &bytes[..keep]).unwrap();
        prop_assert!(read_activations(&path).is_err());
    }
}

#[test]
fn flipped_payload_byte_fails_the_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.relsae");
    write_sae(&path, &SaeParams::identity(3), Some(1), "synthetic").unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_sae(&path), Err(Error::Checksum { .. })));
}

#[test]
fn missing_manifest_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.relsae");
    write_sae(&path, &SaeParams::identity(2), None, "synthetic").unwrap();
    std::fs::remove_file(manifest_path(&path)).unwrap();
    assert!(read_sae(&path).is_err());
}
