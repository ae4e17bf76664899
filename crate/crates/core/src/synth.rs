//! Synthetic test content: oriented gratings along each angular mode's
//! direction, smooth fields and flat frames.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::Result;
use crate::frame_store::Frame;
use crate::intra_pred::{IntraMode, NUM_MODES};

/// Unit vector along which angular `mode` propagates samples (y down).
pub fn mode_direction(mode: IntraMode) -> Option<(f64, f64)> {
    let a = mode.angle()? as f64;
    let (dx, dy) = if mode.index() >= 34 { (-a, 32.0) } else { (32.0, -a) };
    let n = dx.hypot(dy);
    Some((dx / n, dy / n))
}

fn to_frame(w: u32, h: u32, f: impl Fn(f64, f64) -> f64) -> Result<Frame> {
    let samples = (0..w * h)
        .map(|i| f((i % w) as f64, (i / w) as f64).round().clamp(0.0, 255.0) as u8)
        .collect();
    Frame::new(w, h, samples)
}

/// Sinusoidal grating whose crests run along `mode`'s direction.
pub fn grating(
    w: u32,
    h: u32,
    mode: IntraMode,
    period: f64,
    phase: f64,
    contrast: f64,
    noise: f64,
    rng: &mut impl Rng,
) -> Result<Frame> {
    let (ux, uy) = mode_direction(mode).unwrap_or((1.0, 0.0));
    let jitter: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-noise..=noise)).collect();
    to_frame(w, h, |x, y| {
        let t = x * -uy + y * ux;
        128.0 + contrast * (2.0 * PI * t / period + phase).sin() + jitter[(y as u32 * w + x as u32) as usize]
    })
}

/// Low-frequency bilinear ramp with a gentle bump.
pub fn smooth(w: u32, h: u32, rng: &mut impl Rng) -> Result<Frame> {
    let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(40.0..216.0));
    let (bx, by, amp) = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64), rng.gen_range(-30.0..30.0));
    let r2 = (w * w + h * h) as f64 / 8.0;
    to_frame(w, h, |x, y| {
        let (u, v) = (x / w as f64, y / h as f64);
        let ramp = c[0] * (1.0 - u) * (1.0 - v) + c[1] * u * (1.0 - v) + c[2] * (1.0 - u) * v + c[3] * u * v;
        ramp + amp * (-((x - bx).powi(2) + (y - by).powi(2)) / r2).exp()
    })
}

/// Content meant to favor `mode`: smooth or flat fields for Planar and DC,
/// a grating along the mode's direction otherwise.
pub fn frame_for_mode(w: u32, h: u32, mode: IntraMode, rng: &mut impl Rng) -> Result<Frame> {
    match mode.index() {
        0 => smooth(w, h, rng),
        1 => {
            let base = rng.gen_range(20.0..235.0);
            let noise = rng.gen_range(0.0..6.0);
            let jitter: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-noise..=noise)).collect();
            to_frame(w, h, |x, y| base + jitter[(y as u32 * w + x as u32) as usize])
        }
        _ => {
            let period = rng.gen_range(6.0..24.0);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let contrast = rng.gen_range(30.0..100.0);
            let noise = rng.gen_range(0.0..4.0);
            grating(w, h, mode, period, phase, contrast, noise, rng)
        }
    }
}

/// `count` frames cycling through all 67 modes.
pub fn corpus(count: usize, w: u32, h: u32, rng: &mut impl Rng) -> Result<Vec<Frame>> {
    (0..count)
        .map(|i| frame_for_mode(w, h, IntraMode::new((i % NUM_MODES) as u32)?, rng))
        .collect()
}
