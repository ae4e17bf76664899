//! Reference sample construction and the 67 luma intra predictors.

use std::fmt;

use crate::error::{invalid, Result};
use crate::frame_store::{ReconBuffer, Rect};

pub const NUM_MODES: usize = 67;
/// Reference lines gathered around each block.
pub const NUM_LINES: usize = 4;
/// Fill value when a whole reference line is unavailable.
pub const MID_GRAY: u8 = 128;

/// `intraPredAngle` for modes 2..=66, in 1/32 sample units.
const ANGLES: [i32; 65] = [
    32, 29, 26, 23, 20, 18, 16, 14, 12, 10, 8, 6, 4, 3, 2, 1, 0, -1, -2, -3, -4, -6, -8, -10, -12,
    -14, -16, -18, -20, -23, -26, -29, -32, -29, -26, -23, -20, -18, -16, -14, -12, -10, -8, -6,
    -4, -3, -2, -1, 0, 1, 2, 3, 4, 6, 8, 10, 12, 14, 16, 18, 20, 23, 26, 29, 32,
];

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct IntraMode(u8);

impl IntraMode {
    pub const PLANAR: IntraMode = IntraMode(0);
    pub const DC: IntraMode = IntraMode(1);
    pub const HORIZONTAL: IntraMode = IntraMode(18);
    pub const DIAGONAL: IntraMode = IntraMode(34);
    pub const VERTICAL: IntraMode = IntraMode(50);

    pub fn new(index: u32) -> Result<Self> {
        if index as usize >= NUM_MODES {
            return invalid(format!("intra mode {index}"));
        }
        Ok(IntraMode(index as u8))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn is_angular(self) -> bool {
        self.0 >= 2
    }

    /// Projection slope for angular modes.
    pub fn angle(self) -> Option<i32> {
        self.is_angular().then(|| ANGLES[self.0 as usize - 2])
    }

    /// The mode predicting the transposed block.
    pub fn transposed(self) -> IntraMode {
        if self.is_angular() {
            IntraMode(68 - self.0)
        } else {
            self
        }
    }

    pub fn all() -> impl Iterator<Item = IntraMode> {
        (0..NUM_MODES as u8).map(IntraMode)
    }
}

impl fmt::Debug for IntraMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IntraMode({})", self.0)
    }
}

impl fmt::Display for IntraMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `round(512 * 32 / angle)`, signed.
pub fn inverse_angle(angle: i32) -> i32 {
    debug_assert!(angle != 0);
    let q = 512.0 * 32.0 / angle as f64;
    q.round() as i32
}

/// One L-shaped reference line at distance `r`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefLine {
    /// Row `y = -r`, `x` from `-r` to `2w - 1`.
    pub top: Vec<u8>,
    /// Column `x = -r`, `y` from `-r` to `2h - 1`; `left[0]` is the corner.
    pub left: Vec<u8>,
    pub top_available: Vec<bool>,
    pub left_available: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReferenceLines {
    pub w: u32,
    pub h: u32,
    /// `lines[r - 1]` is the line at distance `r`.
    pub lines: Vec<RefLine>,
}

impl ReferenceLines {
    /// Every line filled with `value` and flagged unavailable.
    pub fn uniform(w: u32, h: u32, value: u8) -> Self {
        let lines = (1..=NUM_LINES)
            .map(|r| RefLine {
                top: vec![value; 2 * w as usize + r],
                left: vec![value; 2 * h as usize + r],
                top_available: vec![false; 2 * w as usize + r],
                left_available: vec![false; 2 * h as usize + r],
            })
            .collect();
        ReferenceLines { w, h, lines }
    }

    /// Sample at `(x, -r)`.
    pub fn top(&self, r: usize, x: i32) -> u8 {
        self.lines[r - 1].top[(x + r as i32) as usize]
    }

    /// Sample at `(-r, y)`.
    pub fn left(&self, r: usize, y: i32) -> u8 {
        self.lines[r - 1].left[(y + r as i32) as usize]
    }

    /// Swaps the roles of the top and left references.
    pub fn transposed(&self) -> ReferenceLines {
        let lines = self
            .lines
            .iter()
            .map(|l| RefLine {
                top: l.left.clone(),
                left: l.top.clone(),
                top_available: l.left_available.clone(),
                left_available: l.top_available.clone(),
            })
            .collect();
        ReferenceLines { w: self.h, h: self.w, lines }
    }
}

/// Gathers `num_lines` reference lines around `rect`. Unavailable samples
/// take the last available one met scanning from the bottom-left end to the
/// top-right end; a leading gap takes the first available sample, and a
/// line with nothing available is mid-gray.
pub fn build_reference(recon: &ReconBuffer, rect: Rect, num_lines: usize) -> ReferenceLines {
    let (w, h) = (rect.w as i64, rect.h as i64);
    let (bx, by) = (rect.x as i64, rect.y as i64);
    let mut lines = Vec::with_capacity(num_lines);
    for r in 1..=num_lines as i64 {
        // Scan order: left column bottom to corner, then top row after the corner.
        let mut coords = Vec::with_capacity((2 * (w + h) + 2 * r) as usize);
        for y in (-r..2 * h).rev() {
            coords.push((-r, y));
        }
        for x in -r + 1..2 * w {
            coords.push((x, -r));
        }
        let raw: Vec<Option<u8>> = coords.iter().map(|&(x, y)| recon.sample(bx + x, by + y)).collect();
        let first = raw.iter().flatten().next().copied();
        let mut filled = Vec::with_capacity(raw.len());
        let mut last = first.unwrap_or(MID_GRAY);
        for v in &raw {
            if let Some(v) = v {
                last = *v;
            }
            filled.push(last);
        }
        let left_len = (2 * h + r) as usize;
        let mut left: Vec<u8> = filled[..left_len].to_vec();
        left.reverse();
        let mut left_available: Vec<bool> = raw[..left_len].iter().map(Option::is_some).collect();
        left_available.reverse();
        let mut top = vec![left[0]];
        top.extend_from_slice(&filled[left_len..]);
        let mut top_available = vec![left_available[0]];
        top_available.extend(raw[left_len..].iter().map(Option::is_some));
        lines.push(RefLine { top, left, top_available, left_available });
    }
    ReferenceLines { w: rect.w, h: rect.h, lines }
}

/// Predicts a `w x h` block in raster order from reference line 1.
pub fn predict(mode: IntraMode, refs: &ReferenceLines, w: u32, h: u32) -> Result<Vec<u8>> {
    if refs.w != w || refs.h != h || refs.lines.is_empty() {
        return invalid(format!("references for {}x{} used for a {w}x{h} block", refs.w, refs.h));
    }
    let (w, h) = (w as usize, h as usize);
    let line = &refs.lines[0];
    // Both slices start at the corner sample.
    let (top, left) = (&line.top[..], &line.left[..]);
    let mut out = vec![0u8; w * h];
    match mode.0 {
        0 => planar(top, left, w, h, &mut out),
        1 => {
            let sum: u32 = top[1..=w].iter().chain(&left[1..=h]).map(|&v| v as u32).sum();
            let n = (w + h) as u32;
            out.fill(((sum + n / 2) / n) as u8);
        }
        m if m >= 34 => angular(ANGLES[m as usize - 2], top, left, w, h, &mut out, false),
        m => angular(ANGLES[m as usize - 2], left, top, h, w, &mut out, true),
    }
    Ok(out)
}

fn planar(top: &[u8], left: &[u8], w: usize, h: usize, out: &mut [u8]) {
    let (lw, lh) = (w.trailing_zeros(), h.trailing_zeros());
    let top_right = top[w + 1] as u32;
    let bottom_left = left[h + 1] as u32;
    for y in 0..h {
        for x in 0..w {
            let v = ((h - 1 - y) as u32 * top[x + 1] as u32 + (y + 1) as u32 * bottom_left) << lw;
            let hz = ((w - 1 - x) as u32 * left[y + 1] as u32 + (x + 1) as u32 * top_right) << lh;
            out[y * w + x] = ((v + hz + (w * h) as u32) >> (lw + lh + 1)) as u8;
        }
    }
}

/// Vertical-family projection onto `main` (row above the block). With
/// `transpose`, `main` is the left column and the result is written
/// transposed into a `h x w` raster.
fn angular(angle: i32, main: &[u8], side: &[u8], w: usize, h: usize, out: &mut [u8], transpose: bool) {
    // ext[k - lo] holds reference index k, where index k is sample x = k - 1.
    let lo = if angle < 0 { (h as i32 * angle) >> 5 } else { 0 };
    let hi = (w + h + 2) as i32;
    let last_main = main.len() - 1;
    let mut ext = Vec::with_capacity((hi - lo) as usize);
    for k in lo..hi {
        let v = if k >= 0 {
            main[(k as usize).min(last_main)]
        } else {
            let inv = inverse_angle(angle);
            let idx = (k * inv + 256) >> 9;
            side[(idx as usize).min(side.len() - 1)]
        };
        ext.push(v as i32);
    }
    for y in 0..h {
        let pos = (y as i32 + 1) * angle;
        let (i_idx, i_fact) = (pos >> 5, pos & 31);
        for x in 0..w {
            let k = (x as i32 + i_idx + 1 - lo) as usize;
            let v = if i_fact == 0 {
                ext[k]
            } else {
                ((32 - i_fact) * ext[k] + i_fact * ext[k + 1] + 16) >> 5
            };
            let at = if transpose { x * h + y } else { y * w + x };
            out[at] = v.clamp(0, 255) as u8;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs_from(w: u32, h: u32, top: &[u8], left: &[u8]) -> ReferenceLines {
        let mut refs = ReferenceLines::uniform(w, h, 0);
        refs.lines[0].top = top.to_vec();
        refs.lines[0].left = left.to_vec();
        refs
    }

    #[test]
    fn dc_of_constant_refs() {
        let refs = ReferenceLines::uniform(8, 4, 128);
        assert!(predict(IntraMode::DC, &refs, 8, 4).unwrap().iter().all(|&v| v == 128));
    }

    #[test]
    fn pure_vertical_and_horizontal_copy() {
        let top = [0, 10, 20, 30, 40, 50, 60, 70, 80];
        let left = [0, 7, 9, 11, 13, 1, 1, 1, 1];
        let refs = refs_from(4, 4, &top, &left);
        let v = predict(IntraMode::VERTICAL, &refs, 4, 4).unwrap();
        for row in v.chunks(4) {
            assert_eq!(row, &[10, 20, 30, 40]);
        }
        let hz = predict(IntraMode::HORIZONTAL, &refs, 4, 4).unwrap();
        for (y, row) in hz.chunks(4).enumerate() {
            assert!(row.iter().all(|&s| s == left[y + 1]));
        }
    }

    #[test]
    fn diagonal_modes_follow_the_references() {
        let top: Vec<u8> = (0..9).map(|i| i * 10).collect();
        let left: Vec<u8> = (0..9).map(|i| 100 + i * 10).collect();
        let refs = refs_from(4, 4, &top, &left);
        // Mode 66 reads top[x + y + 2] (x, y from 0).
        let p = predict(IntraMode::new(66).unwrap(), &refs, 4, 4).unwrap();
        assert_eq!(p[0], 20);
        assert_eq!(p[15], 80);
        // Mode 34 reads the corner on the main diagonal.
        let p = predict(IntraMode::DIAGONAL, &refs, 4, 4).unwrap();
        assert_eq!(p[0], 0);
        assert_eq!(p[4], 110);
        assert_eq!(p[1], 10);
    }

    #[test]
    fn missing_top_is_filled_from_left_chain() {
        // Only the block to the left is coded: left samples 50, everything
        // above copies the corner chain upward.
        let mut recon = ReconBuffer::new(16, 16);
        recon.write_block(Rect::new(0, 4, 4, 4), &[50; 16], 0);
        let refs = build_reference(&recon, Rect::new(4, 4, 4, 4), 4);
        assert!(refs.lines[0].top.iter().all(|&v| v == 50));
        assert_eq!(&refs.lines[0].left_available[1..5], &[true; 4]);
        assert!(!refs.lines[0].left_available[5]);
        assert!(refs.lines[0].left.iter().all(|&v| v == 50));
    }

    #[test]
    fn top_available_left_missing_propagates_through_corner() {
        let mut recon = ReconBuffer::new(16, 16);
        recon.write_block(Rect::new(0, 0, 16, 4), &[50; 64], 0);
        let refs = build_reference(&recon, Rect::new(0, 4, 4, 4), 4);
        let line = &refs.lines[0];
        assert!(line.left.iter().all(|&v| v == 50));
        assert!(line.left_available.iter().all(|&a| !a));
        assert!(line.top_available[1..].iter().all(|&a| a));
    }

    #[test]
    fn picture_corner_is_mid_gray() {
        let recon = ReconBuffer::new(16, 16);
        let refs = build_reference(&recon, Rect::new(0, 0, 8, 8), 4);
        assert_eq!(refs, ReferenceLines::uniform(8, 8, MID_GRAY));
    }

    #[test]
    fn inverse_angles() {
        assert_eq!(inverse_angle(32), 512);
        assert_eq!(inverse_angle(-32), -512);
        assert_eq!(inverse_angle(29), 565);
        assert_eq!(inverse_angle(1), 16384);
    }

    #[test]
    fn mode_validation() {
        assert!(IntraMode::new(66).is_ok());
        assert!(IntraMode::new(67).is_err());
        assert_eq!(IntraMode::new(2).unwrap().transposed().index(), 66);
        assert_eq!(IntraMode::DC.transposed(), IntraMode::DC);
    }
}
