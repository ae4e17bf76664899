//! Hand-crafted features and the fixed-size reference canvas.

use std::f64::consts::PI;
use std::sync::OnceLock;

use dlimd_nn::{CANVAS_COLS, CANVAS_LEN, CANVAS_ROWS, FEATURE_LEN, HIST_LEN};

use crate::frame_store::{ReconBuffer, Rect};
use crate::intra_pred::{build_reference, IntraMode, ReferenceLines, NUM_LINES, NUM_MODES};

/// Columns of each padded side segment of the canvas.
pub const SIDE: usize = 64;
/// Columns of the pooled segment above the block.
pub const MID: usize = 4;
/// Template depth for the gradient histogram.
pub const TEMPLATE: i64 = 4;
pub const MAX_QP: u8 = 51;

/// Orientation in `[0, pi)` of the line each angular mode propagates along,
/// with `y` pointing down.
fn mode_orientations() -> &'static [f64; NUM_MODES] {
    static TABLE: OnceLock<[f64; NUM_MODES]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [f64::NAN; NUM_MODES];
        for m in IntraMode::all().filter(|m| m.is_angular()) {
            let a = m.angle().unwrap() as f64;
            let phi = if m.index() >= 34 { (32.0f64).atan2(-a) } else { (-a).atan2(32.0) };
            t[m.index() as usize] = phi.rem_euclid(PI);
        }
        t
    })
}

/// Angular mode whose orientation is closest to the gradient `(gx, gy)`.
pub fn gradient_mode(gx: f64, gy: f64) -> IntraMode {
    let psi = gy.atan2(gx).rem_euclid(PI);
    let table = mode_orientations();
    let mut best = (f64::INFINITY, 2usize);
    for (m, &phi) in table.iter().enumerate().skip(2) {
        let d = (psi - phi).abs();
        let d = d.min(PI - d);
        // Equal orientations (modes 2 and 66) go to the smaller index.
        if d < best.0 - 1e-12 {
            best = (d, m);
        }
    }
    IntraMode::new(best.1 as u32).expect("angular mode")
}

/// 3x3 Sobel response at `(x, y)`, if the whole support is decoded.
fn sobel(recon: &ReconBuffer, x: i64, y: i64) -> Option<(f64, f64)> {
    let mut p = [[0i32; 3]; 3];
    for (dy, row) in p.iter_mut().enumerate() {
        for (dx, v) in row.iter_mut().enumerate() {
            *v = recon.sample(x + dx as i64 - 1, y + dy as i64 - 1)? as i32;
        }
    }
    let gx = (p[0][2] + 2 * p[1][2] + p[2][2]) - (p[0][0] + 2 * p[1][0] + p[2][0]);
    let gy = (p[2][0] + 2 * p[2][1] + p[2][2]) - (p[0][0] + 2 * p[0][1] + p[0][2]);
    Some((gx as f64, gy as f64))
}

/// Gradient-direction histogram over the 4-line template above and left of
/// `rect`, weighted by `|gx| + |gy|` and L1-normalized. Planar and DC bins
/// stay zero.
pub fn gradient_histogram(recon: &ReconBuffer, rect: Rect) -> [f64; HIST_LEN] {
    let (bx, by, w, h) = (rect.x as i64, rect.y as i64, rect.w as i64, rect.h as i64);
    let mut hist = [0.0; HIST_LEN];
    let mut visit = |x: i64, y: i64| {
        if let Some((gx, gy)) = sobel(recon, bx + x, by + y) {
            if gx != 0.0 || gy != 0.0 {
                hist[gradient_mode(gx, gy).index() as usize] += gx.abs() + gy.abs();
            }
        }
    };
    for y in -TEMPLATE..0 {
        for x in -TEMPLATE..2 * w {
            visit(x, y);
        }
    }
    for y in 0..2 * h {
        for x in -TEMPLATE..0 {
            visit(x, y);
        }
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        for v in &mut hist {
            *v /= total;
        }
    }
    hist
}

/// Final modes at the up-left, up, up-right, left and bottom-left positions;
/// Planar where nothing is coded.
pub fn neighbor_modes(recon: &ReconBuffer, rect: Rect) -> [IntraMode; 5] {
    let (x, y, w, h) = (rect.x as i64, rect.y as i64, rect.w as i64, rect.h as i64);
    let at = [(x - 1, y - 1), (x + w / 2, y - 1), (x + w, y - 1), (x - 1, y + h / 2), (x - 1, y + h)];
    at.map(|(px, py)| {
        recon.mode_at(px, py).map(|m| IntraMode::new(m as u32).expect("stored mode")).unwrap_or_default()
    })
}

/// The 4x132 canvas, row-major, samples scaled to `[0, 1]`. Row `r - 1`
/// holds line `r`: the left column (bottom end replicated outward), the top
/// row above the block pooled to 4 values, then the top row to the right
/// (replicated outward).
pub fn build_canvas(refs: &ReferenceLines) -> Vec<f32> {
    let (w, h) = (refs.w as i32, refs.h as i32);
    let mut canvas = vec![0.0f32; CANVAS_LEN];
    let pool = (w / MID as i32) as usize;
    for r in 1..=CANVAS_ROWS {
        let row = &mut canvas[(r - 1) * CANVAS_COLS..r * CANVAS_COLS];
        for (c, v) in row[..SIDE].iter_mut().enumerate() {
            let y = (SIDE as i32 - 1 - c as i32).min(h - 1);
            *v = refs.left(r, y) as f32;
        }
        for (i, v) in row[SIDE..SIDE + MID].iter_mut().enumerate() {
            let start = (i * pool) as i32;
            let sum: u32 = (start..start + pool as i32).map(|x| refs.top(r, x) as u32).sum();
            *v = sum as f32 / pool as f32;
        }
        for (j, v) in row[SIDE + MID..].iter_mut().enumerate() {
            *v = refs.top(r, w + (j as i32).min(w - 1)) as f32;
        }
        for v in row.iter_mut() {
            *v /= 255.0;
        }
    }
    canvas
}

/// Flat feature vector: histogram, neighbor modes / 66, qp / 51.
pub fn assemble_features(hist: &[f64; HIST_LEN], nbr: &[IntraMode; 5], qp: u8) -> Vec<f32> {
    let mut f = Vec::with_capacity(FEATURE_LEN);
    f.extend(hist.iter().map(|&v| v as f32));
    f.extend(nbr.iter().map(|m| m.index() as f32 / 66.0));
    f.push(qp as f32 / MAX_QP as f32);
    f
}

/// Network inputs for `rect` from the current state of `recon`.
pub fn block_inputs(recon: &ReconBuffer, rect: Rect, qp: u8) -> (Vec<f32>, Vec<f32>) {
    let refs = build_reference(recon, rect, NUM_LINES);
    let canvas = build_canvas(&refs);
    let features =
        assemble_features(&gradient_histogram(recon, rect), &neighbor_modes(recon, rect), qp);
    (canvas, features)
}
