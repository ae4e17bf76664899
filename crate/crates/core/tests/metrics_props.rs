use dlimd_core::metrics::{accuracy, bd_rate, AccuracyReport, RdPoint, DELTAS};
use proptest::prelude::*;

fn curve(base: f64, slope: f64, start: f64, step: f64) -> Vec<RdPoint> {
    (0..4)
        .map(|i| {
            let psnr = start + i as f64 * step;
            RdPoint { rate: base * (slope * (psnr - start)).exp(), psnr }
        })
        .collect()
}

#[test]
fn cubic_curves_match_closed_form() {
    // Anchor log-rate is an exact cubic in PSNR; the test curve adds
    // k0 + k1 * d, so the mean difference over [30, 39] is k0 + k1 * 34.5.
    let pts = [30.0, 33.0, 36.0, 39.0];
    let anchor_ln = |d: f64| 5.0 + 0.2 * (d - 30.0) + 0.004 * (d - 30.0).powi(2) - 0.0003 * (d - 30.0).powi(3);
    let (k0, k1) = (0.35, -0.012);
    let a: Vec<_> = pts.iter().map(|&d| RdPoint { rate: anchor_ln(d).exp(), psnr: d }).collect();
    let t: Vec<_> = pts.iter().map(|&d| RdPoint { rate: (anchor_ln(d) + k0 + k1 * d).exp(), psnr: d }).collect();
    let expected = ((k0 + k1 * 34.5f64).exp() - 1.0) * 100.0;
    let got = bd_rate(&a, &t).unwrap();
    assert!(((got - expected) / expected).abs() < 1e-4, "{got} vs {expected}");
}

#[test]
fn disjoint_curves_are_rejected() {
    let a = curve(1000.0, 0.2, 30.0, 1.0);
    let b = curve(1000.0, 0.2, 40.0, 1.0);
    assert!(bd_rate(&a, &b).is_err());
}

proptest! {
    #[test]
    fn self_comparison_is_zero(base in 100.0..1e6f64, slope in 0.05..0.5f64, start in 25.0..40.0f64, step in 0.5..4.0f64) {
        let a = curve(base, slope, start, step);
        prop_assert!(bd_rate(&a, &a).unwrap().abs() < 1e-9);
    }

    #[test]
    fn uniform_rate_shift(base in 100.0..1e6f64, slope in 0.05..0.5f64, start in 25.0..40.0f64, step in 0.5..4.0f64, shift in -0.5..0.5f64) {
        let a = curve(base, slope, start, step);
        let t: Vec<_> = a.iter().map(|p| RdPoint { rate: p.rate * (1.0 + shift), ..*p }).collect();
        prop_assert!((bd_rate(&a, &t).unwrap() - shift * 100.0).abs() < 0.05);
    }

    #[test]
    fn accuracy_grows_with_tolerance(pairs in prop::collection::vec((0usize..67, 0usize..67), 1..300)) {
        let (p, l): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let report = AccuracyReport::new(&p, &l).unwrap();
        let values: Vec<f64> = report.by_delta.iter().map(|x| x.1).collect();
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(values[0], accuracy(&p, &l, DELTAS[0]).unwrap());
        for class in 0..67 {
            let row: u64 = report.confusion[class].iter().sum();
            let col: u64 = report.confusion.iter().map(|r| r[class]).sum();
            prop_assert_eq!(row as usize, l.iter().filter(|&&x| x == class).count());
            prop_assert_eq!(col as usize, p.iter().filter(|&&x| x == class).count());
        }
    }
}
