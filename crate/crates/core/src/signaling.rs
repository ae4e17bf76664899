//! Most-probable-mode lists and the explicit mode-signaling bit model.

use crate::error::{invalid, CoreError, Result};
use crate::intra_pred::{IntraMode, NUM_MODES};

pub const MPM_SIZE: usize = 6;
/// Code lengths of MPM entries 0..=5.
pub const MPM_BITS: [u32; MPM_SIZE] = [2, 3, 4, 5, 6, 6];
/// Non-MPM modes (in ascending index order) that get the short code.
pub const SHORT_NON_MPM: usize = 3;
/// Strategy flag cost in bits.
pub const FLAG_BITS: u32 = 1;

const FILL: [u8; 5] = [1, 50, 18, 46, 54];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MpmList([IntraMode; MPM_SIZE]);

impl MpmList {
    pub fn entries(&self) -> &[IntraMode; MPM_SIZE] {
        &self.0
    }

    pub fn position(&self, mode: IntraMode) -> Option<usize> {
        self.0.iter().position(|&m| m == mode)
    }

    /// Modes outside the list, ascending.
    pub fn non_mpm(&self) -> Vec<IntraMode> {
        IntraMode::all().filter(|m| self.position(*m).is_none()).collect()
    }
}

fn wrap_angular(m: i32) -> u8 {
    match m {
        m if m < 2 => (m + 65) as u8,
        m if m > 66 => (m - 65) as u8,
        m => m as u8,
    }
}

/// Pass unavailable neighbors as Planar.
pub fn derive_mpm(left: IntraMode, above: IntraMode) -> MpmList {
    let mut list: Vec<u8> = vec![0];
    let push = |list: &mut Vec<u8>, m: u8| {
        if list.len() < MPM_SIZE && !list.contains(&m) {
            list.push(m);
        }
    };
    let mut angular = Vec::new();
    for n in [left, above] {
        if n.is_angular() && !angular.contains(&n.index()) {
            angular.push(n.index());
            push(&mut list, n.index());
        }
    }
    for &m in &angular {
        push(&mut list, wrap_angular(m as i32 - 1));
        push(&mut list, wrap_angular(m as i32 + 1));
    }
    for m in FILL {
        push(&mut list, m);
    }
    let mut out = [IntraMode::PLANAR; MPM_SIZE];
    for (o, m) in out.iter_mut().zip(list) {
        *o = IntraMode::new(m as u32).expect("mode in range");
    }
    MpmList(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeBits {
    pub mode: IntraMode,
    pub bits: u32,
}

/// Symbol rank of `mode`: MPM positions first, then non-MPM modes ascending.
fn rank(mode: IntraMode, mpm: &MpmList) -> usize {
    match mpm.position(mode) {
        Some(i) => i,
        None => MPM_SIZE + mode.index() as usize - mpm.0.iter().filter(|m| **m < mode).count(),
    }
}

fn rank_bits(rank: usize) -> u32 {
    match rank {
        r if r < MPM_SIZE => MPM_BITS[r],
        r if r < MPM_SIZE + SHORT_NON_MPM => 6,
        _ => 7,
    }
}

pub fn mode_bits(mode: IntraMode, mpm: &MpmList) -> ModeBits {
    ModeBits { mode, bits: rank_bits(rank(mode, mpm)) }
}

/// Canonical prefix codewords for ranks `0..67`, as `(value, length)`.
fn canonical_codes() -> [(u32, u32); NUM_MODES] {
    let mut codes = [(0, 0); NUM_MODES];
    let mut code = 0u32;
    let mut prev_len = rank_bits(0);
    for (r, c) in codes.iter_mut().enumerate() {
        let len = rank_bits(r);
        code <<= len - prev_len;
        *c = (code, len);
        code += 1;
        prev_len = len;
    }
    codes
}

/// The codeword sent for `mode`, as `(value, length)`; the value's bits are
/// written most significant first.
pub fn mode_code(mode: IntraMode, mpm: &MpmList) -> (u32, u32) {
    canonical_codes()[rank(mode, mpm)]
}

/// Decodes one mode codeword, pulling bits through `next_bit`.
pub fn decode_mode(mpm: &MpmList, mut next_bit: impl FnMut() -> Result<bool>) -> Result<IntraMode> {
    let codes = canonical_codes();
    let (mut value, mut len) = (0u32, 0u32);
    while len < 7 {
        value = (value << 1) | next_bit()? as u32;
        len += 1;
        if let Some(r) = codes.iter().position(|&c| c == (value, len)) {
            return Ok(if r < MPM_SIZE { mpm.0[r] } else { mpm.non_mpm()[r - MPM_SIZE] });
        }
    }
    Err(CoreError::CorruptStream(format!("no mode codeword {value:07b}")))
}

/// One coded block as recorded in a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockBits {
    pub mode: IntraMode,
    pub mode_bits: u32,
    pub flag_bits: u32,
    /// Every bit spent on the block, including residual and flag.
    pub total_bits: u64,
    pub dlimd: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalingStats {
    pub blocks: usize,
    /// Mode bits per block; derived modes count zero.
    pub bpm: f64,
    /// Flag bits per block.
    pub flag_bpm: f64,
    /// Mode-bit share of all bits.
    pub beta: f64,
    /// Fraction of blocks whose mode was derived.
    pub gamma: f64,
}

pub fn bpm_stats(trace: &[BlockBits]) -> Result<SignalingStats> {
    if trace.is_empty() {
        return Err(CoreError::EmptyInput("signaling trace".into()));
    }
    let n = trace.len() as f64;
    let mode: u64 = trace.iter().map(|b| if b.dlimd { 0 } else { b.mode_bits as u64 }).sum();
    let flags: u64 = trace.iter().map(|b| b.flag_bits as u64).sum();
    let total: u64 = trace.iter().map(|b| b.total_bits).sum();
    Ok(SignalingStats {
        blocks: trace.len(),
        bpm: mode as f64 / n,
        flag_bpm: flags as f64 / n,
        beta: if total == 0 { 0.0 } else { mode as f64 / total as f64 },
        gamma: trace.iter().filter(|b| b.dlimd).count() as f64 / n,
    })
}

fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// Expected mode-bit saving when a fraction `gamma` of blocks derive their
/// mode, given `alpha` bits per mode and mode-bit share `beta`.
pub fn bit_saving_eta(alpha: f64, beta: f64, gamma: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return invalid(format!("alpha must be positive, got {alpha}"));
    }
    if !(0.0..=1.0).contains(&beta) || !(0.0..=1.0).contains(&gamma) {
        return invalid(format!("beta {beta} and gamma {gamma} must lie in [0, 1]"));
    }
    let rest = 1.0 - gamma;
    let cost = -xlog2x(gamma) + rest * alpha - xlog2x(rest);
    Ok((alpha - cost) / alpha * beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(i: u32) -> IntraMode {
        IntraMode::new(i).unwrap()
    }

    fn list(l: &MpmList) -> Vec<u8> {
        l.entries().iter().map(|m| m.index()).collect()
    }

    #[test]
    fn mpm_examples() {
        assert_eq!(list(&derive_mpm(m(0), m(0))), [0, 1, 50, 18, 46, 54]);
        assert_eq!(list(&derive_mpm(m(50), m(50))), [0, 50, 49, 51, 1, 18]);
        assert_eq!(list(&derive_mpm(m(2), m(66))), [0, 2, 66, 3, 65, 1]);
        assert_eq!(list(&derive_mpm(m(1), m(18))), [0, 18, 17, 19, 1, 50]);
    }

    #[test]
    fn mode_bit_examples() {
        let mpm = derive_mpm(m(30), m(7));
        assert_eq!(mode_bits(IntraMode::PLANAR, &mpm).bits, 2);
        assert_eq!(mode_bits(mpm.entries()[1], &mpm).bits, 3);
        assert_eq!(mode_bits(mpm.entries()[5], &mpm).bits, 6);
        let non = mpm.non_mpm();
        assert_eq!(mode_bits(non[2], &mpm).bits, 6);
        assert_eq!(mode_bits(non[3], &mpm).bits, 7);
    }

    #[test]
    fn canonical_code_is_complete() {
        let kraft: f64 = canonical_codes().iter().map(|&(_, l)| 0.5f64.powi(l as i32)).sum();
        assert_eq!(kraft, 1.0);
        assert_eq!(canonical_codes()[66], (127, 7));
    }

    #[test]
    fn codes_decode_back() {
        let mpm = derive_mpm(m(44), m(12));
        for mode in IntraMode::all() {
            let (value, len) = mode_code(mode, &mpm);
            assert_eq!(len, mode_bits(mode, &mpm).bits);
            let mut i = len;
            let got = decode_mode(&mpm, || {
                i -= 1;
                Ok((value >> i) & 1 == 1)
            })
            .unwrap();
            assert_eq!(got, mode);
        }
    }

    #[test]
    fn eta_identities() {
        assert_eq!(bit_saving_eta(3.35, 0.0828, 1.0).unwrap(), 0.0828);
        assert_eq!(bit_saving_eta(3.35, 0.0828, 0.0).unwrap(), 0.0);
        assert!(bit_saving_eta(0.0, 0.1, 0.5).is_err());
    }

    #[test]
    fn stats_examples() {
        let b = |bits, dlimd| BlockBits {
            mode: IntraMode::PLANAR,
            mode_bits: bits,
            flag_bits: 1,
            total_bits: 10,
            dlimd,
        };
        let s = bpm_stats(&[b(2, false), b(7, false), b(0, true), b(0, true)]).unwrap();
        assert_eq!(s.bpm, 9.0 / 4.0);
        assert_eq!(s.gamma, 0.5);
        assert_eq!(s.flag_bpm, 1.0);
        assert!(bpm_stats(&[]).is_err());
    }
}
