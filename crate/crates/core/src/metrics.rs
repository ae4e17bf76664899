//! Signaling, accuracy, rate-distortion and complexity metrics.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::codec::TraceRecord;
use crate::error::{invalid, CoreError, Result};
use crate::frame_store::Frame;
use crate::intra_pred::NUM_MODES;

/// Tolerances of the accuracy report.
pub const DELTAS: [u32; 4] = [0, 1, 3, 5];

/// Relative mode-bit saving in percent.
pub fn eta_prime(alpha: f64, alpha_prime: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return invalid(format!("baseline bits per mode must be positive, got {alpha}"));
    }
    Ok((alpha - alpha_prime) / alpha * 100.0)
}

/// Share of the coded area, in percent, whose mode was derived.
pub fn omega(trace: &[TraceRecord]) -> Result<f64> {
    if trace.is_empty() {
        return Err(CoreError::EmptyInput("trace".into()));
    }
    let area = |t: &TraceRecord| t.rect.area() as u64;
    let total: u64 = trace.iter().map(area).sum();
    let derived: u64 = trace.iter().filter(|t| t.dlimd).map(area).sum();
    Ok(derived as f64 / total as f64 * 100.0)
}

/// Percent of predictions within `delta` mode indices of the label.
pub fn accuracy(predictions: &[usize], labels: &[usize], delta: u32) -> Result<f64> {
    if predictions.len() != labels.len() {
        return invalid(format!("{} predictions for {} labels", predictions.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(CoreError::EmptyInput("labels".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p.abs_diff(**l) <= delta as usize).count();
    Ok(hits as f64 / labels.len() as f64 * 100.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyReport {
    /// `(delta, percent)` for each tolerance in [`DELTAS`].
    pub by_delta: Vec<(u32, f64)>,
    /// `confusion[label][prediction]` counts.
    pub confusion: Vec<[u64; NUM_MODES]>,
}

impl AccuracyReport {
    pub fn new(predictions: &[usize], labels: &[usize]) -> Result<Self> {
        let by_delta =
            DELTAS.iter().map(|&d| Ok((d, accuracy(predictions, labels, d)?))).collect::<Result<_>>()?;
        let mut confusion = vec![[0u64; NUM_MODES]; NUM_MODES];
        for (&p, &l) in predictions.iter().zip(labels) {
            if p >= NUM_MODES || l >= NUM_MODES {
                return invalid(format!("mode {} out of range", p.max(l)));
            }
            confusion[l][p] += 1;
        }
        Ok(AccuracyReport { by_delta, confusion })
    }

    pub fn table(&self) -> String {
        let mut s = String::from("delta  accuracy(%)\n");
        for (d, p) in &self.by_delta {
            writeln!(s, "{d:>5}  {p:>11.2}").unwrap();
        }
        s
    }

    /// `label,prediction,count` lines for every nonzero cell.
    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("label,prediction,count\n");
        for (l, row) in self.confusion.iter().enumerate() {
            for (p, &n) in row.iter().enumerate().filter(|(_, &n)| n > 0) {
                writeln!(s, "{l},{p},{n}").unwrap();
            }
        }
        s
    }
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return invalid("frames differ in size");
    }
    let sum: u64 = a.samples().iter().zip(b.samples()).map(|(&x, &y)| (x as i64 - y as i64).pow(2) as u64).sum();
    Ok(sum as f64 / a.samples().len() as f64)
}

/// Luma PSNR with peak 255; infinite for identical frames.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { 10.0 * (255.0 * 255.0 / m).log10() })
}

/// Rate-distortion point: bits (or any rate unit) and PSNR in dB.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdPoint {
    pub rate: f64,
    pub psnr: f64,
}

/// Least-squares cubic `ln(rate) = p(t)` with `t = (psnr - center) / scale`.
fn fit_cubic(points: &[RdPoint], center: f64, scale: f64) -> Result<[f64; 4]> {
    let n = points.len();
    let a = DMatrix::from_fn(n, 4, |i, j| ((points[i].psnr - center) / scale).powi(j as i32));
    let b = DVector::from_iterator(n, points.iter().map(|p| p.rate.ln()));
    let svd = a.svd(true, true);
    let x = svd.solve(&b, 1e-12).map_err(|e| CoreError::InvalidArgument(format!("cubic fit: {e}")))?;
    Ok([x[0], x[1], x[2], x[3]])
}

fn integral(c: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let prim = |t: f64| c[0] * t + c[1] * t * t / 2.0 + c[2] * t.powi(3) / 3.0 + c[3] * t.powi(4) / 4.0;
    prim(hi) - prim(lo)
}

fn check_curve(name: &str, points: &[RdPoint]) -> Result<()> {
    if points.len() < 4 {
        return invalid(format!("{name} curve needs at least 4 points, has {}", points.len()));
    }
    if points.iter().any(|p| !(p.rate > 0.0) || !p.psnr.is_finite()) {
        return invalid(format!("{name} curve has a non-positive rate or non-finite PSNR"));
    }
    if points.windows(2).any(|w| w[1].rate < w[0].rate) {
        return invalid(format!("{name} curve is not sorted by rate"));
    }
    Ok(())
}

/// Average rate difference of `test` against `anchor` at equal PSNR, in
/// percent, from cubic fits of log-rate over the shared PSNR range.
pub fn bd_rate(anchor: &[RdPoint], test: &[RdPoint]) -> Result<f64> {
    check_curve("anchor", anchor)?;
    check_curve("test", test)?;
    let range = |c: &[RdPoint]| {
        c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.psnr), hi.max(p.psnr)))
    };
    let (alo, ahi) = range(anchor);
    let (tlo, thi) = range(test);
    let (lo, hi) = (alo.max(tlo), ahi.min(thi));
    if !(hi > lo) {
        return invalid("curves share no PSNR range");
    }
    let center = (lo + hi) / 2.0;
    let scale = (hi - lo) / 2.0;
    let pa = fit_cubic(anchor, center, scale)?;
    let pt = fit_cubic(test, center, scale)?;
    // Both integrals run over t in [-1, 1].
    let avg = (integral(&pt, -1.0, 1.0) - integral(&pa, -1.0, 1.0)) / 2.0;
    Ok((avg.exp() - 1.0) * 100.0)
}

/// Mean over QPs of test time / anchor time.
pub fn complexity_ratio(anchor: &[f64], test: &[f64]) -> Result<f64> {
    if anchor.len() != test.len() || anchor.is_empty() {
        return invalid(format!("{} anchor and {} test timings", anchor.len(), test.len()));
    }
    if anchor.iter().any(|&t| !(t > 0.0)) {
        return invalid("anchor time must be positive");
    }
    Ok(anchor.iter().zip(test).map(|(a, t)| t / a).sum::<f64>() / anchor.len() as f64)
}

/// One row of the signaling table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalingRow {
    pub qp: u8,
    /// Bits per mode without derivation.
    pub alpha: f64,
    /// Bits per mode with derivation.
    pub alpha_prime: f64,
    pub beta: f64,
    pub gamma: f64,
    pub omega: f64,
}

impl SignalingRow {
    pub fn eta_prime(&self) -> Result<f64> {
        eta_prime(self.alpha, self.alpha_prime)
    }
}

pub fn signaling_table(rows: &[SignalingRow]) -> Result<String> {
    let mut s = String::from("  qp   alpha  alpha'  eta'(%)    beta  gamma(%)  omega(%)\n");
    for r in rows {
        writeln!(
            s,
            "{:>4}  {:>6.3}  {:>6.3}  {:>7.2}  {:>6.4}  {:>8.2}  {:>8.2}",
            r.qp,
            r.alpha,
            r.alpha_prime,
            r.eta_prime()?,
            r.beta,
            r.gamma * 100.0,
            r.omega
        )
        .unwrap();
    }
    Ok(s)
}

/// `key=value` line for scripting.
pub fn machine_line(fields: &[(&str, String)]) -> String {
    fields.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_store::Rect;
    use crate::intra_pred::IntraMode;

    #[test]
    fn eta_prime_examples() {
        assert!((eta_prime(3.0, 1.5).unwrap() - 50.0).abs() < 1e-12);
        assert_eq!(eta_prime(2.0, 2.0).unwrap(), 0.0);
        assert!(eta_prime(0.0, 1.0).is_err());
    }

    #[test]
    fn omega_examples() {
        let t = |dlimd| TraceRecord {
            rect: Rect::new(0, 0, 8, 8),
            mode: IntraMode::DC,
            dlimd,
            mode_bits: 0,
            flag_bits: 1,
            residual_bits: 1,
            distortion: 0,
        };
        assert_eq!(omega(&[t(true), t(false)]).unwrap(), 50.0);
        assert_eq!(omega(&[t(true)]).unwrap(), 100.0);
        assert_eq!(omega(&[t(false)]).unwrap(), 0.0);
        assert!(omega(&[]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[4], &[4], 0).unwrap(), 100.0);
        assert_eq!(accuracy(&[5], &[4], 0).unwrap(), 0.0);
        assert_eq!(accuracy(&[5], &[4], 1).unwrap(), 100.0);
        let p = accuracy(&[1, 2, 3], &[1, 9, 3], 0).unwrap();
        assert!((p - 200.0 / 3.0).abs() < 1e-12);
        assert!(accuracy(&[1], &[1, 2], 0).is_err());
    }

    #[test]
    fn confusion_sums() {
        let r = AccuracyReport::new(&[0, 0, 5], &[0, 3, 5]).unwrap();
        assert_eq!(r.confusion[3][0], 1);
        let rows: u64 = r.confusion.iter().flatten().sum();
        assert_eq!(rows, 3);
    }

    fn curve() -> Vec<RdPoint> {
        [(1000.0, 30.0), (1800.0, 33.0), (3000.0, 36.0), (5200.0, 39.0)]
            .iter()
            .map(|&(rate, psnr)| RdPoint { rate, psnr })
            .collect()
    }

    #[test]
    fn bd_rate_shift_and_identity() {
        let a = curve();
        assert!(bd_rate(&a, &a).unwrap().abs() < 1e-9);
        let t: Vec<_> = a.iter().map(|p| RdPoint { rate: p.rate * 0.9, ..*p }).collect();
        assert!((bd_rate(&a, &t).unwrap() + 10.0).abs() < 1e-9);
        assert!(bd_rate(&a[..3], &t).is_err());
    }

    #[test]
    fn complexity_examples() {
        assert_eq!(complexity_ratio(&[1.0; 4], &[1.0; 4]).unwrap(), 1.0);
        assert_eq!(complexity_ratio(&[1.0; 4], &[2.0; 4]).unwrap(), 2.0);
        assert_eq!(complexity_ratio(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert!(complexity_ratio(&[0.0], &[1.0]).is_err());
    }
}
