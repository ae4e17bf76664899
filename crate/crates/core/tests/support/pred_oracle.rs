//! Scalar reference predictor written directly from the per-sample
//! formulas, with separate vertical and horizontal loops. Shared with the
//! acceptance suite.

#![allow(dead_code)]

use dlimd_core::intra_pred::ReferenceLines;

const ANGLE: [i32; 65] = [
    32, 29, 26, 23, 20, 18, 16, 14, 12, 10, 8, 6, 4, 3, 2, 1, 0, -1, -2, -3, -4, -6, -8, -10, -12,
    -14, -16, -18, -20, -23, -26, -29, -32, -29, -26, -23, -20, -18, -16, -14, -12, -10, -8, -6,
    -4, -3, -2, -1, 0, 1, 2, 3, 4, 6, 8, 10, 12, 14, 16, 18, 20, 23, 26, 29, 32,
];

/// p(x, -1), with x clamped to the last reference sample.
fn above(refs: &ReferenceLines, x: i32) -> i32 {
    refs.top(1, x.min(2 * refs.w as i32 - 1)) as i32
}

/// p(-1, y), with y clamped to the last reference sample.
fn leftof(refs: &ReferenceLines, y: i32) -> i32 {
    refs.left(1, y.min(2 * refs.h as i32 - 1)) as i32
}

fn log2(n: u32) -> u32 {
    let mut k = 0;
    while (1 << k) < n {
        k += 1;
    }
    k
}

fn inv_angle(a: i32) -> i32 {
    (16384.0 / a as f64).round() as i32
}

pub fn oracle_predict(mode: u8, refs: &ReferenceLines) -> Vec<u8> {
    let (w, h) = (refs.w as i32, refs.h as i32);
    let mut out = vec![0u8; (w * h) as usize];
    let mut put = |x: i32, y: i32, v: i32| out[(y * w + x) as usize] = v.clamp(0, 255) as u8;
    match mode {
        0 => {
            let (lw, lh) = (log2(w as u32), log2(h as u32));
            for y in 0..h {
                for x in 0..w {
                    let pv = ((h - 1 - y) * above(refs, x) + (y + 1) * leftof(refs, h)) << lw;
                    let ph = ((w - 1 - x) * leftof(refs, y) + (x + 1) * above(refs, w)) << lh;
                    put(x, y, (pv + ph + w * h) >> (lw + lh + 1));
                }
            }
        }
        1 => {
            let mut sum = 0;
            for x in 0..w {
                sum += above(refs, x);
            }
            for y in 0..h {
                sum += leftof(refs, y);
            }
            let dc = (sum + (w + h) / 2) / (w + h);
            for y in 0..h {
                for x in 0..w {
                    put(x, y, dc);
                }
            }
        }
        m if m >= 34 => {
            let a = ANGLE[m as usize - 2];
            // ref[k] is p(k - 1, -1); negative k projects onto the left column.
            let r = |k: i32| {
                if k >= 0 {
                    above(refs, k - 1)
                } else {
                    leftof(refs, ((k * inv_angle(a) + 256) >> 9) - 1)
                }
            };
            for y in 0..h {
                let idx = ((y + 1) * a) >> 5;
                let f = ((y + 1) * a) & 31;
                for x in 0..w {
                    let v = if f == 0 {
                        r(x + idx + 1)
                    } else {
                        ((32 - f) * r(x + idx + 1) + f * r(x + idx + 2) + 16) >> 5
                    };
                    put(x, y, v);
                }
            }
        }
        m => {
            let a = ANGLE[m as usize - 2];
            // ref[k] is p(-1, k - 1); negative k projects onto the top row.
            let r = |k: i32| {
                if k >= 0 {
                    leftof(refs, k - 1)
                } else {
                    above(refs, ((k * inv_angle(a) + 256) >> 9) - 1)
                }
            };
            for x in 0..w {
                let idx = ((x + 1) * a) >> 5;
                let f = ((x + 1) * a) & 31;
                for y in 0..h {
                    let v = if f == 0 {
                        r(y + idx + 1)
                    } else {
                        ((32 - f) * r(y + idx + 1) + f * r(y + idx + 2) + 16) >> 5
                    };
                    put(x, y, v);
                }
            }
        }
    }
    out
}

/// Line-1 references with independent random samples; deeper lines are
/// left at zero.
pub fn random_refs(w: u32, h: u32, mut next: impl FnMut() -> u8) -> ReferenceLines {
    let mut refs = ReferenceLines::uniform(w, h, 0);
    let line = &mut refs.lines[0];
    for v in line.top.iter_mut().skip(1) {
        *v = next();
    }
    for v in line.left.iter_mut().skip(1) {
        *v = next();
    }
    let corner = next();
    line.top[0] = corner;
    line.left[0] = corner;
    refs
}
