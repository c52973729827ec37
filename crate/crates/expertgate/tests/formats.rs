use std::fs;
use std::path::PathBuf;

use expertgate::dataset::{decode_egd1, encode_csv, encode_egd1, load_dataset, save_dataset};
use expertgate::weights::{decode_layers, decode_stats, encode_layers, encode_stats};
use expertgate::Error;
use expertgate_core::synth::{generate_synthetic_task, SyntheticTaskSpec};
use expertgate_core::{Activation, DenseLayer, LabeledDataset, Matrix, ReferenceStats};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn tiny() -> LabeledDataset {
    let x = Matrix::new(2, 2, vec![1.0, -2.0, 0.5, 0.0]).unwrap();
    LabeledDataset::new(x, vec![1, 2], 3, "tiny").unwrap()
}

#[test]
fn egd1_layout_is_pinned() {
    let bytes = fs::read(golden("tiny.egd1")).unwrap();
    assert_eq!(encode_egd1(&tiny()).unwrap(), bytes);
    assert_eq!(load_dataset(&golden("tiny.egd1")).unwrap(), tiny());
}

#[test]
fn csv_layout_is_pinned() {
    let text = fs::read(golden("tiny.csv")).unwrap();
    assert_eq!(encode_csv(&tiny()).unwrap(), text);
    let from_csv = load_dataset(&golden("tiny.csv")).unwrap();
    assert_eq!(from_csv.features(), tiny().features());
    assert_eq!(from_csv.labels(), tiny().labels());
}

#[test]
fn egw1_layout_is_pinned() {
    let enc = DenseLayer::new(Matrix::new(1, 2, vec![0.5, -1.0]).unwrap(), vec![0.25], Activation::Relu).unwrap();
    let dec = DenseLayer::new(Matrix::new(2, 1, vec![2.0, -0.5]).unwrap(), vec![0.0, 1.0], Activation::Sigmoid).unwrap();
    let bytes = fs::read(golden("gate.egw")).unwrap();
    assert_eq!(encode_layers(&[&enc, &dec]).unwrap(), bytes);
    assert_eq!(decode_layers(&bytes).unwrap(), vec![enc, dec]);
}

#[test]
fn stats_layout_is_pinned() {
    let stats = ReferenceStats::new(vec![1.0, 2.0], vec![0.5, 4.0], "g").unwrap();
    let bytes = fs::read(golden("stats.egw")).unwrap();
    assert_eq!(encode_stats(&stats).unwrap(), bytes);
    assert_eq!(decode_stats(&bytes, "g").unwrap(), stats);
}

#[test]
fn binary_and_csv_files_hold_the_same_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SyntheticTaskSpec::subspace("s", 3, 8, 4, 200, 5);
    spec.noise = 0.2;
    let data = generate_synthetic_task(&spec).unwrap();
    let (bin, csv) = (dir.path().join("s.egd1"), dir.path().join("s.csv"));
    save_dataset(&bin, &data).unwrap();
    save_dataset(&csv, &data).unwrap();
    let a = load_dataset(&bin).unwrap();
    let b = load_dataset(&csv).unwrap();
    assert_eq!(a, data);
    assert_eq!(a.features().as_slice(), b.features().as_slice());
    assert_eq!(a.labels(), b.labels());
    assert_eq!(fs::metadata(&bin).unwrap().len(), 16 + 4 * 200 * 8 + 4 * 200);
}

#[test]
fn damaged_datasets_are_format_errors() {
    let good = fs::read(golden("tiny.egd1")).unwrap();
    let mut label_eq_c = good.clone();
    let at = good.len() - 4;
    label_eq_c[at..].copy_from_slice(&3i32.to_le_bytes());
    assert!(matches!(decode_egd1(&label_eq_c, "t"), Err(Error::Format(_))));
    assert!(matches!(decode_egd1(&good[..good.len() - 4], "t"), Err(Error::Format(_))));
    let mut magic = good.clone();
    magic[3] = b'2';
    assert!(matches!(decode_egd1(&magic, "t"), Err(Error::Format(_))));
    let mut long = good;
    long.extend_from_slice(&[0; 4]);
    assert!(matches!(decode_egd1(&long, "t"), Err(Error::Format(_))));
}
