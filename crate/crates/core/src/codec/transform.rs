//! Orthonormal 2-D DCT-II, dead-zone quantization and coefficient scans.

use std::sync::OnceLock;

use crate::frame_store::BLOCK_SIZES;

/// Dead-zone rounding offset of the quantizer.
pub const DEAD_ZONE: f64 = 1.0 / 3.0;

pub fn qstep(qp: u8) -> f64 {
    2f64.powf((qp as f64 - 4.0) / 6.0)
}

fn size_index(n: usize) -> usize {
    BLOCK_SIZES.iter().position(|&s| s as usize == n).expect("block size")
}

/// `basis(n)[k * n + i]` = k-th orthonormal DCT-II basis function at `i`.
fn basis(n: usize) -> &'static [f64] {
    static TABLES: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| {
        BLOCK_SIZES
            .iter()
            .map(|&s| {
                let n = s as usize;
                let mut t = vec![0.0; n * n];
                for k in 0..n {
                    let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                    for i in 0..n {
                        t[k * n + i] = scale
                            * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
                    }
                }
                t
            })
            .collect()
    });
    &tables[size_index(n)]
}

/// Forward transform of a `w x h` raster block.
pub fn dct2d(x: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (bw, bh) = (basis(w), basis(h));
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        for k in 0..w {
            rows[y * w + k] = (0..w).map(|i| bw[k * w + i] * x[y * w + i]).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for k in 0..h {
        for u in 0..w {
            out[k * w + u] = (0..h).map(|y| bh[k * h + y] * rows[y * w + u]).sum();
        }
    }
    out
}

/// Inverse of [`dct2d`].
pub fn idct2d(c: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (bw, bh) = (basis(w), basis(h));
    let mut cols = vec![0.0; w * h];
    for y in 0..h {
        for u in 0..w {
            cols[y * w + u] = (0..h).map(|k| bh[k * h + y] * c[k * w + u]).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for i in 0..w {
            out[y * w + i] = (0..w).map(|k| bw[k * w + i] * cols[y * w + k]).sum();
        }
    }
    out
}

pub fn quantize(c: f64, step: f64) -> i32 {
    let q = (c.abs() / step + DEAD_ZONE).floor();
    (q as i32) * if c < 0.0 { -1 } else { 1 }
}

/// Up-right diagonal scan: diagonals from the DC corner outward, each
/// walked from bottom-left to top-right. Entries are raster indices.
pub fn diagonal_scan(w: usize, h: usize) -> &'static [usize] {
    static SCANS: OnceLock<Vec<Vec<Vec<usize>>>> = OnceLock::new();
    let scans = SCANS.get_or_init(|| {
        BLOCK_SIZES
            .iter()
            .map(|&sh| {
                BLOCK_SIZES
                    .iter()
                    .map(|&sw| {
                        let (w, h) = (sw as usize, sh as usize);
                        let mut order = Vec::with_capacity(w * h);
                        for d in 0..w + h - 1 {
                            for y in (0..h).rev() {
                                if d >= y && d - y < w {
                                    order.push(y * w + d - y);
                                }
                            }
                        }
                        order
                    })
                    .collect()
            })
            .collect()
    });
    &scans[size_index(h)][size_index(w)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_is_orthonormal() {
        let x: Vec<f64> = (0..32).map(|i| (i * 7 % 13) as f64 - 6.0).collect();
        let c = dct2d(&x, 8, 4);
        let energy = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        assert!((energy(&x) - energy(&c)).abs() < 1e-9);
        let back = idct2d(&c, 8, 4);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dc_of_constant_block() {
        let c = dct2d(&[10.0; 16], 4, 4);
        assert!((c[0] - 40.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn quantizer_dead_zone() {
        assert_eq!(quantize(0.66, 1.0), 0);
        assert_eq!(quantize(0.67, 1.0), 1);
        assert_eq!(quantize(-2.7, 1.0), -3);
        assert_eq!(qstep(4), 1.0);
        assert_eq!(qstep(28), 16.0);
    }

    #[test]
    fn scan_covers_block_once() {
        let s = diagonal_scan(8, 4);
        assert_eq!(&s[..4], &[0, 8, 1, 16]);
        let mut seen = s.to_vec();
        seen.sort_unstable();
        assert_eq!(seen, (0..32).collect::<Vec<_>>());
    }
}
