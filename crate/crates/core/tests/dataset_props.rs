use std::collections::{BTreeMap, HashSet};

use dlimd_core::dataset::{
    append_dataset, balance, extract_samples, file_digest, from_bytes, read_dataset, split_validation, to_bytes,
    write_dataset, SampleRecord, RefSource, HEADER_BYTES, RECORD_BYTES, STANDARD_QPS,
};
use dlimd_core::error::CoreError;
use dlimd_core::frame_store::Partition;
use dlimd_core::synth;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn record(label: u8, qp: u8, fill: f32) -> SampleRecord {
    SampleRecord {
        canvas: (0..528).map(|i| fill + i as f32 * 1e-3).collect(),
        features: (0..73).map(|i| fill * i as f32).collect(),
        label,
        qp,
        w: 8,
        h: 4,
    }
}

fn arb_record() -> impl Strategy<Value = SampleRecord> {
    (
        prop::collection::vec(any::<f32>(), 528),
        prop::collection::vec(any::<f32>(), 73),
        0u8..67,
        any::<u8>(),
        any::<u8>(),
        any::<u8>(),
    )
        .prop_map(|(canvas, features, label, qp, w, h)| SampleRecord { canvas, features, label, qp, w, h })
}

fn counts(records: &[SampleRecord]) -> BTreeMap<(u8, u8), usize> {
    let mut m = BTreeMap::new();
    for r in records {
        *m.entry((r.label, r.qp)).or_default() += 1;
    }
    m
}

#[test]
fn file_round_trip_and_append() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.bin");
    let a: Vec<_> = (0..5).map(|i| record(i, 22, i as f32)).collect();
    write_dataset(&path, &a[..2]).unwrap();
    append_dataset(&path, &a[2..]).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), a);
    assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, HEADER_BYTES + 5 * RECORD_BYTES);
    assert_eq!(file_digest(&path).unwrap(), {
        write_dataset(&path, &a).unwrap();
        file_digest(&path).unwrap()
    });
}

#[test]
fn corrupt_files_are_rejected() {
    let bytes = to_bytes(&[record(3, 22, 1.0)]);
    assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    assert!(from_bytes(&bad).is_err());
    let mut bad_label = bytes;
    let n = bad_label.len();
    bad_label[n - 4] = 67;
    assert!(from_bytes(&bad_label).is_err());
}

#[test]
fn three_label_set_balances_exactly() {
    let mut records = Vec::new();
    for (label, n) in [(2u8, 30), (18, 11), (50, 19)] {
        for &qp in &STANDARD_QPS {
            for i in 0..n {
                records.push(record(label, qp, i as f32));
            }
        }
    }
    let b = balance(&records, 10, 1, false).unwrap();
    assert_eq!(b.len(), 3 * 4 * 10);
    assert!(counts(&b).values().all(|&n| n == 10));

    let collapsed = balance(&records, 40, 1, true).unwrap();
    let mut per_label = BTreeMap::new();
    for r in &collapsed {
        *per_label.entry(r.label).or_insert(0) += 1;
    }
    assert_eq!(per_label.values().collect::<Vec<_>>(), [&40, &40, &40]);

    match balance(&records, 12, 1, false) {
        Err(CoreError::Deficit(msg)) => assert!(msg.contains("label 18"), "{msg}"),
        other => panic!("expected a deficit, got {other:?}"),
    }

    let (train, val) = split_validation(&collapsed, 5).unwrap();
    assert_eq!(val.len(), 15);
    assert_eq!(train.len(), 105);
    let val_digests: HashSet<_> = val.iter().map(SampleRecord::digest).collect();
    assert!(train.iter().all(|r| !val_digests.contains(&r.digest())));
}

#[test]
fn extraction_is_deterministic_across_workers() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let frames = synth::corpus(5, 32, 16, &mut rng).unwrap();
    let qps = [22, 37];
    let (one, s1) = extract_samples(&frames, &qps, Partition::RdQuad, RefSource::Recon, 1).unwrap();
    let (three, s3) = extract_samples(&frames, &qps, Partition::RdQuad, RefSource::Recon, 3).unwrap();
    assert_eq!(to_bytes(&one), to_bytes(&three));
    assert_eq!(s1, s3);
    assert_eq!(s1.blocks, one.len());
    assert!(one.iter().all(|r| r.canvas.len() == 528 && r.features.len() == 73));
    let (src, _) = extract_samples(&frames, &qps, Partition::RdQuad, RefSource::Source, 1).unwrap();
    let labels = |v: &[SampleRecord]| v.iter().map(|r| r.label).collect::<Vec<_>>();
    assert_eq!(labels(&one), labels(&src));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn records_round_trip(records in prop::collection::vec(arb_record(), 0..6)) {
        let back = from_bytes(&to_bytes(&records)).unwrap();
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in back.iter().zip(&records) {
            prop_assert_eq!(a.digest(), b.digest());
            prop_assert_eq!((a.label, a.qp, a.w, a.h), (b.label, b.qp, b.w, b.h));
        }
    }

    #[test]
    fn balanced_output_is_flat_and_replayable(
        cells in prop::collection::vec((0u8..67, prop::sample::select(STANDARD_QPS.to_vec()), 3usize..12), 1..20),
        per_cell in 1usize..4,
        seed: u64,
    ) {
        let mut records = Vec::new();
        let labels: HashSet<u8> = cells.iter().map(|c| c.0).collect();
        let qps: HashSet<u8> = cells.iter().map(|c| c.1).collect();
        // Fill every (label, qp) combination so no cell is short.
        for &l in &labels {
            for &q in &qps {
                let extra = cells.iter().filter(|c| c.0 == l && c.1 == q).map(|c| c.2).sum::<usize>();
                for i in 0..per_cell + extra {
                    records.push(record(l, q, i as f32));
                }
            }
        }
        let a = balance(&records, per_cell, seed, false).unwrap();
        let b = balance(&records, per_cell, seed, false).unwrap();
        prop_assert_eq!(to_bytes(&a), to_bytes(&b));
        let c = counts(&a);
        prop_assert_eq!(c.len(), labels.len() * qps.len());
        prop_assert!(c.values().all(|&n| n == per_cell));
    }
}
