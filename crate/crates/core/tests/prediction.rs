mod support;

use dlimd_core::frame_store::BLOCK_SIZES;
use dlimd_core::intra_pred::{predict, IntraMode, ReferenceLines};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::pred_oracle::{oracle_predict, random_refs};

#[test]
fn matches_scalar_oracle_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut shapes = std::collections::HashSet::new();
    for case in 0..10_000 {
        // Cycle through all 25 shapes first so each one is covered.
        let (w, h) = if case < 25 {
            (BLOCK_SIZES[case % 5], BLOCK_SIZES[case / 5])
        } else {
            (BLOCK_SIZES[rng.gen_range(0..5)], BLOCK_SIZES[rng.gen_range(0..5)])
        };
        shapes.insert((w, h));
        let mode = rng.gen_range(0..67u8);
        let refs = random_refs(w, h, || rng.gen());
        let got = predict(IntraMode::new(mode as u32).unwrap(), &refs, w, h).unwrap();
        assert_eq!(got, oracle_predict(mode, &refs), "mode {mode} {w}x{h}");
    }
    assert_eq!(shapes.len(), 25);
}

#[test]
fn flat_references_give_flat_blocks() {
    for &w in &BLOCK_SIZES {
        for &h in &BLOCK_SIZES {
            for v in [0u8, 1, 128, 254, 255] {
                let refs = ReferenceLines::uniform(w, h, v);
                for mode in IntraMode::all() {
                    let p = predict(mode, &refs, w, h).unwrap();
                    assert!(p.iter().all(|&s| s == v), "mode {mode} {w}x{h} value {v}");
                }
            }
        }
    }
}

#[test]
fn rejects_mismatched_geometry() {
    let refs = ReferenceLines::uniform(8, 4, 0);
    assert!(predict(IntraMode::DC, &refs, 4, 8).is_err());
    assert!(IntraMode::new(67).is_err());
}

fn shape() -> impl Strategy<Value = (u32, u32)> {
    (0..5usize, 0..5usize).prop_map(|(a, b)| (BLOCK_SIZES[a], BLOCK_SIZES[b]))
}

proptest! {
    #[test]
    fn transposing_references_transposes_prediction((w, h) in shape(), mode in 0u32..67, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let refs = random_refs(w, h, || rng.gen());
        let mode = IntraMode::new(mode).unwrap();
        let p = predict(mode, &refs, w, h).unwrap();
        let t = predict(mode.transposed(), &refs.transposed(), h, w).unwrap();
        for y in 0..h as usize {
            for x in 0..w as usize {
                prop_assert_eq!(p[y * w as usize + x], t[x * h as usize + y]);
            }
        }
    }

    #[test]
    fn oracle_agrees_on_extreme_references((w, h) in shape(), mode in 0u8..67, seed: u64) {
        // Saturated samples exercise the rounding and clamping paths.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let refs = random_refs(w, h, || if rng.gen() { 255 } else { 0 });
        let got = predict(IntraMode::new(mode as u32).unwrap(), &refs, w, h).unwrap();
        prop_assert_eq!(got, oracle_predict(mode, &refs));
    }
}
