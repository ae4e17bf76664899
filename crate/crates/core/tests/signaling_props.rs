use dlimd_core::intra_pred::IntraMode;
use dlimd_core::signaling::{bit_saving_eta, derive_mpm, mode_bits, mode_code, MpmList};
use proptest::prelude::*;

fn m(i: u32) -> IntraMode {
    IntraMode::new(i).unwrap()
}

fn histogram(mpm: &MpmList) -> [usize; 8] {
    let mut h = [0; 8];
    for mode in IntraMode::all() {
        h[mode_bits(mode, mpm).bits as usize] += 1;
    }
    h
}

#[test]
fn every_neighbor_pair_gives_six_distinct_modes() {
    for l in 0..67 {
        for a in 0..67 {
            let mpm = derive_mpm(m(l), m(a));
            let e = mpm.entries();
            assert_eq!(e[0], IntraMode::PLANAR);
            for i in 0..6 {
                for j in i + 1..6 {
                    assert_ne!(e[i], e[j], "left {l} above {a}");
                }
            }
            assert_eq!(histogram(&mpm), [0, 0, 1, 1, 1, 1, 5, 58]);
            assert_eq!(mpm.non_mpm().len(), 61);
        }
    }
}

#[test]
fn hand_evaluated_saving() {
    // cost = 1 (flag entropy at one half) + 0.5 * 3.35
    let expected = (3.35 - 2.675) / 3.35 * 0.0828;
    assert!((bit_saving_eta(3.35, 0.0828, 0.5).unwrap() - expected).abs() < 1e-12);
    assert_eq!(bit_saving_eta(2.5, 0.3, 1.0).unwrap(), 0.3);
    assert_eq!(bit_saving_eta(2.5, 0.3, 0.0).unwrap(), 0.0);
}

#[test]
fn saving_grows_with_gamma_above_one_half() {
    for ai in 0..=20 {
        let alpha = 2.0 + ai as f64 * 0.25;
        for beta in [0.01, 0.0828, 0.5, 1.0] {
            let mut prev = f64::NEG_INFINITY;
            for gi in 0..=100 {
                let gamma = 0.5 + gi as f64 * 0.005;
                let eta = bit_saving_eta(alpha, beta, gamma).unwrap();
                assert!(eta >= prev, "alpha {alpha} beta {beta} gamma {gamma}");
                prev = eta;
            }
        }
    }
}

proptest! {
    #[test]
    fn codes_are_prefix_free(l in 0u32..67, a in 0u32..67) {
        let mpm = derive_mpm(m(l), m(a));
        let codes: Vec<(u32, u32)> = IntraMode::all().map(|x| mode_code(x, &mpm)).collect();
        for (i, &(vi, li)) in codes.iter().enumerate() {
            for &(vj, lj) in &codes[i + 1..] {
                let (short, long, ls, ll) = if li <= lj { (vi, vj, li, lj) } else { (vj, vi, lj, li) };
                prop_assert_ne!(long >> (ll - ls), short);
            }
        }
    }
}
