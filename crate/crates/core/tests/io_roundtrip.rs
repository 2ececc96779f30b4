mod common;

use std::path::Path;

use common::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use sparse_dl::io::{
    decode_features, decode_labels, decode_model, encode_features, encode_labels, encode_model, load_features, load_model,
    save_features, save_model,
};
use sparse_dl::model::{EncoderKind, FeatureMatrix, HyperParams};
use sparse_dl::trainer::init_state;
use sparse_dl::Error;

fn p() -> &'static Path {
    Path::new("mem")
}

fn f32_matrix(rows: usize, cols: usize, vals: Vec<f32>) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), vals.into_iter().map(f64::from).collect()).unwrap()
}

fn model(kind: EncoderKind, seed: u64) -> sparse_dl::model::ModelState {
    let mut r = rng(seed);
    let y = FeatureMatrix::new(gaussian(&mut r, 5, 20)).unwrap();
    let hp = HyperParams { sparsity: 2, n_layers: 3, seed, ..Default::default() };
    let mut s = init_state(&y, 6, 3, &hp, kind).unwrap();
    s.lc = gaussian(&mut r, 6, 6);
    s.classifier = gaussian(&mut r, 3, 6);
    s
}

proptest! {
    #[test]
    fn features_roundtrip(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let vals: Vec<f32> = (0..rows * cols).map(|_| r.random_range(-1e3f32..1e3)).collect();
        let m = f32_matrix(rows, cols, vals);
        let bytes = encode_features(&m).unwrap();
        let back = decode_features(&bytes, p()).unwrap();
        prop_assert_eq!(back.as_array(), &m);
        prop_assert_eq!(encode_features(back.as_array()).unwrap(), bytes);
    }

    #[test]
    fn labels_roundtrip(labels in proptest::collection::vec(0usize..50, 1..40)) {
        let back = decode_labels(&encode_labels(&labels), p()).unwrap();
        prop_assert_eq!(back, labels);
    }

    #[test]
    fn model_roundtrip(seed in 0u64..1000, topk in any::<bool>()) {
        let kind = if topk { EncoderKind::TopKLista } else { EncoderKind::FistaLasso };
        let s = model(kind, seed);
        let bytes = encode_model(&s).unwrap();
        let back = decode_model(&bytes, p()).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(encode_model(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_or_mutated_files_give_typed_errors(seed in any::<u64>(), cut in 0usize..4096, flips in 0usize..6) {
        let mut r = rng(seed);
        let feat = encode_features(&gaussian(&mut r, 3, 4)).unwrap();
        let modl = encode_model(&model(EncoderKind::TopKLista, seed % 17)).unwrap();
        for bytes in [feat, modl] {
            let mut b = bytes.clone();
            b.truncate(cut % (bytes.len() + 1));
            for _ in 0..flips {
                if !b.is_empty() {
                    let i = r.random_range(0..b.len());
                    b[i] = r.random();
                }
            }
            let _ = decode_features(&b, p());
            let _ = decode_model(&b, p());
            let _ = decode_labels(&b, p());
        }
    }
}

#[test]
fn loader_errors_are_typed() {
    let m = Array2::<f64>::ones((2, 3));
    let good = encode_features(&m).unwrap();
    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(matches!(decode_features(&magic, p()), Err(Error::BadMagic { .. })));
    let mut dtype = good.clone();
    dtype[16] = 0x02;
    assert!(matches!(decode_features(&dtype, p()), Err(Error::UnsupportedDtype { tag: 2, .. })));
    assert!(matches!(decode_features(&good[..good.len() - 1], p()), Err(Error::Truncated { .. })));
    assert!(matches!(decode_features(&good[..5], p()), Err(Error::BadMagic { .. })));
    let mut extra = good.clone();
    extra.push(0);
    assert!(matches!(decode_features(&extra, p()), Err(Error::TrailingBytes { extra: 1, .. })));
    let mut nan = good.clone();
    nan[17..21].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(decode_features(&nan, p()), Err(Error::NonFinite(_))));

    let mb = encode_model(&model(EncoderKind::FistaLasso, 1)).unwrap();
    let mut bad = mb.clone();
    bad[7] = b'9';
    assert!(matches!(decode_model(&bad, p()), Err(Error::Version { .. })));
    let mut tag = mb.clone();
    tag[8] = 7;
    assert!(matches!(decode_model(&tag, p()), Err(Error::Version { .. })));
    assert!(matches!(decode_model(&mb[..mb.len() - 3], p()), Err(Error::Truncated { .. })));

    assert!(matches!(decode_labels(b"0\n1\nx\n", p()), Err(Error::Parse { line: 3, .. })));
    assert!(matches!(decode_labels(b"", p()), Err(Error::Data(_))));
    assert_eq!(decode_labels(b"2\r\n0\r\n", p()).unwrap(), vec![2, 0]);
}

#[test]
fn file_roundtrip_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let m = f32_matrix(2, 2, vec![1.5, -2.0, 0.25, 8.0]);
    let fp = dir.path().join("f.bin");
    save_features(&m, &fp).unwrap();
    assert_eq!(load_features(&fp).unwrap().as_array(), &m);
    let s = model(EncoderKind::TopKLista, 4);
    let mp = dir.path().join("m.bin");
    save_model(&s, &mp).unwrap();
    assert_eq!(load_model(&mp).unwrap(), s);
    assert!(matches!(load_features(&dir.path().join("nope")), Err(Error::Io { .. })));
}
