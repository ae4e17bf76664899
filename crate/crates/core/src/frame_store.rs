//! Luma frames, reconstruction buffers and block enumeration.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::codec::{self, RdConfig};
use crate::error::{invalid, CoreError, Result};

/// Block sizes a rect side may take.
pub const BLOCK_SIZES: [u32; 5] = [4, 8, 16, 32, 64];
/// Granularity of the coded-flag and mode maps.
pub const UNIT: u32 = 4;
/// Root size for quadtree partitioning.
pub const MAX_BLOCK: u32 = 64;

#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    samples: Vec<u8>,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Frame({}x{})", self.width, self.height)
    }
}

impl Frame {
    pub fn new(width: u32, height: u32, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid(format!("frame geometry {width}x{height}"));
        }
        if samples.len() != width as usize * height as usize {
            return invalid(format!(
                "{} samples for a {width}x{height} frame",
                samples.len()
            ));
        }
        Ok(Frame { width, height, samples })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self> {
        Frame::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.samples[(y * self.width + x) as usize]
    }

    /// Copies out the samples of `rect` in raster order.
    pub fn block(&self, rect: Rect) -> Vec<u8> {
        let mut out = Vec::with_capacity(rect.area());
        for y in rect.y..rect.y + rect.h {
            let row = (y * self.width) as usize;
            out.extend_from_slice(&self.samples[row + rect.x as usize..row + (rect.x + rect.w) as usize]);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Rect { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w as usize * self.h as usize
    }

    pub fn intersects(&self, o: &Rect) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.x + self.w <= width && self.y + self.h <= height
    }

    /// The four quadrants in z-order.
    pub fn quadrants(&self) -> [Rect; 4] {
        let (hw, hh) = (self.w / 2, self.h / 2);
        [
            Rect::new(self.x, self.y, hw, hh),
            Rect::new(self.x + hw, self.y, hw, hh),
            Rect::new(self.x, self.y + hh, hw, hh),
            Rect::new(self.x + hw, self.y + hh, hw, hh),
        ]
    }
}

/// Decoded samples plus the coded-flag and mode maps, tracked per 4x4 unit.
#[derive(Clone, Debug)]
pub struct ReconBuffer {
    width: u32,
    height: u32,
    samples: Vec<u8>,
    coded: Vec<bool>,
    modes: Vec<u8>,
}

/// Saved state of one rect of a [`ReconBuffer`].
#[derive(Clone, Debug)]
pub struct RegionSnapshot {
    rect: Rect,
    samples: Vec<u8>,
    coded: Vec<bool>,
    modes: Vec<u8>,
}

impl ReconBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        let units = (width.div_ceil(UNIT) * height.div_ceil(UNIT)) as usize;
        ReconBuffer {
            width,
            height,
            samples: vec![0; (width * height) as usize],
            coded: vec![false; units],
            modes: vec![0; units],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn unit(&self, x: u32, y: u32) -> usize {
        ((y / UNIT) * self.width.div_ceil(UNIT) + x / UNIT) as usize
    }

    fn inside(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    pub fn is_coded(&self, x: i64, y: i64) -> bool {
        self.inside(x, y) && self.coded[self.unit(x as u32, y as u32)]
    }

    /// The decoded sample, if its block has been coded.
    pub fn sample(&self, x: i64, y: i64) -> Option<u8> {
        self.is_coded(x, y).then(|| self.samples[(y as u32 * self.width + x as u32) as usize])
    }

    /// The final mode of the coded block containing `(x, y)`.
    pub fn mode_at(&self, x: i64, y: i64) -> Option<u8> {
        self.is_coded(x, y).then(|| self.modes[self.unit(x as u32, y as u32)])
    }

    /// Stores a decoded block and marks it coded.
    pub fn write_block(&mut self, rect: Rect, samples: &[u8], mode: u8) {
        assert_eq!(samples.len(), rect.area());
        assert!(rect.fits(self.width, self.height));
        for (row, src) in samples.chunks(rect.w as usize).enumerate() {
            let at = ((rect.y + row as u32) * self.width + rect.x) as usize;
            self.samples[at..at + rect.w as usize].copy_from_slice(src);
        }
        for uy in (rect.y..rect.y + rect.h).step_by(UNIT as usize) {
            for ux in (rect.x..rect.x + rect.w).step_by(UNIT as usize) {
                let u = self.unit(ux, uy);
                self.coded[u] = true;
                self.modes[u] = mode;
            }
        }
    }

    pub fn snapshot(&self, rect: Rect) -> RegionSnapshot {
        let mut coded = Vec::new();
        let mut modes = Vec::new();
        for uy in (rect.y..rect.y + rect.h).step_by(UNIT as usize) {
            for ux in (rect.x..rect.x + rect.w).step_by(UNIT as usize) {
                let u = self.unit(ux, uy);
                coded.push(self.coded[u]);
                modes.push(self.modes[u]);
            }
        }
        let mut samples = Vec::with_capacity(rect.area());
        for y in rect.y..rect.y + rect.h {
            let at = (y * self.width + rect.x) as usize;
            samples.extend_from_slice(&self.samples[at..at + rect.w as usize]);
        }
        RegionSnapshot { rect, samples, coded, modes }
    }

    pub fn restore(&mut self, snap: &RegionSnapshot) {
        let rect = snap.rect;
        for (row, src) in snap.samples.chunks(rect.w as usize).enumerate() {
            let at = ((rect.y + row as u32) * self.width + rect.x) as usize;
            self.samples[at..at + rect.w as usize].copy_from_slice(src);
        }
        let mut i = 0;
        for uy in (rect.y..rect.y + rect.h).step_by(UNIT as usize) {
            for ux in (rect.x..rect.x + rect.w).step_by(UNIT as usize) {
                let u = self.unit(ux, uy);
                self.coded[u] = snap.coded[i];
                self.modes[u] = snap.modes[i];
                i += 1;
            }
        }
    }

    /// The decoded picture. Uncoded samples read as 0.
    pub fn to_frame(&self) -> Frame {
        Frame { width: self.width, height: self.height, samples: self.samples.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameFormat {
    /// Planar 8-bit 4:2:0; only the luma plane is read.
    Raw420,
    /// Binary PGM (P5) or PPM (P6), maxval 255.
    Pnm,
}

impl FromStr for FrameFormat {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw420" | "yuv" => Ok(FrameFormat::Raw420),
            "pnm" | "ppm" | "pgm" => Ok(FrameFormat::Pnm),
            _ => invalid(format!("unknown frame format '{s}'")),
        }
    }
}

fn raw_frame_bytes(width: u32, height: u32) -> usize {
    let chroma = (width.div_ceil(2) * height.div_ceil(2)) as usize;
    (width * height) as usize + 2 * chroma
}

/// Reads the first frame of `path`. `width x height` must match the file.
pub fn load_frame(path: &Path, width: u32, height: u32, format: FrameFormat) -> Result<Frame> {
    if width == 0 || height == 0 {
        return invalid(format!("frame geometry {width}x{height}"));
    }
    let bytes = fs::read(path)?;
    match format {
        FrameFormat::Raw420 => {
            let mut frames = raw_frames(&bytes, width, height, 1)?;
            Ok(frames.remove(0))
        }
        FrameFormat::Pnm => {
            let frame = parse_pnm(&bytes)?;
            if (frame.width, frame.height) != (width, height) {
                return invalid(format!(
                    "image is {}x{}, expected {width}x{height}",
                    frame.width, frame.height
                ));
            }
            Ok(frame)
        }
    }
}

/// Reads up to `limit` whole frames of a raw 4:2:0 sequence.
pub fn load_raw_frames(path: &Path, width: u32, height: u32, limit: usize) -> Result<Vec<Frame>> {
    if width == 0 || height == 0 {
        return invalid(format!("frame geometry {width}x{height}"));
    }
    raw_frames(&fs::read(path)?, width, height, limit)
}

fn raw_frames(bytes: &[u8], width: u32, height: u32, limit: usize) -> Result<Vec<Frame>> {
    let per = raw_frame_bytes(width, height);
    let luma = (width * height) as usize;
    if bytes.len() < per {
        return Err(CoreError::TruncatedInput(format!(
            "{} bytes, a {width}x{height} 4:2:0 frame needs {per}",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(per)
        .take(limit)
        .map(|f| Frame { width, height, samples: f[..luma].to_vec() })
        .collect())
}

fn parse_pnm(bytes: &[u8]) -> Result<Frame> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(CoreError::TruncatedInput("pnm header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return invalid(format!("unsupported pnm type '{m}'")),
    };
    let mut num = || -> Result<u32> {
        let t = token()?;
        t.parse().map_err(|_| CoreError::InvalidArgument(format!("bad pnm header field '{t}'")))
    };
    let (width, height, maxval) = (num()?, num()?, num()?);
    if width == 0 || height == 0 {
        return invalid(format!("frame geometry {width}x{height}"));
    }
    if maxval != 255 {
        return invalid(format!("pnm maxval {maxval}, only 255 is supported"));
    }
    let data = &bytes[(pos + 1).min(bytes.len())..];
    let need = (width * height) as usize * channels;
    if data.len() < need {
        return Err(CoreError::TruncatedInput(format!("pnm payload {} of {need} bytes", data.len())));
    }
    let samples = if channels == 1 {
        data[..need].to_vec()
    } else {
        data[..need].chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect()
    };
    Ok(Frame { width, height, samples })
}

/// Full-range BT.601 luma in 8-bit fixed point.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = (77 * r as u32 + 150 * g as u32 + 29 * b as u32 + 128) >> 8;
    y.min(255) as u8
}

/// Writes `frame` as a binary PGM, or as 4:2:0 with neutral chroma.
pub fn save_frame(frame: &Frame, path: &Path, format: FrameFormat) -> Result<()> {
    let mut out = Vec::new();
    match format {
        FrameFormat::Pnm => {
            write!(out, "P5\n{} {}\n255\n", frame.width, frame.height)?;
            out.extend_from_slice(&frame.samples);
        }
        FrameFormat::Raw420 => {
            out.extend_from_slice(&frame.samples);
            let chroma = (frame.width.div_ceil(2) * frame.height.div_ceil(2)) as usize;
            out.resize(out.len() + 2 * chroma, 128);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partition {
    /// Regular N x N grid.
    Fixed(u32),
    /// Quadtree from 64x64 roots, split decided by RD cost.
    RdQuad,
}

impl Partition {
    pub fn validate(&self) -> Result<()> {
        match self {
            Partition::Fixed(n) if !BLOCK_SIZES.contains(n) => invalid(format!("block size {n}")),
            _ => Ok(()),
        }
    }

    pub fn root_size(&self) -> u32 {
        match self {
            Partition::Fixed(n) => *n,
            Partition::RdQuad => MAX_BLOCK,
        }
    }

    /// Header byte: 0 for rd-quad, otherwise the block size.
    pub fn code(&self) -> u8 {
        match self {
            Partition::Fixed(n) => *n as u8,
            Partition::RdQuad => 0,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        let p = if code == 0 { Partition::RdQuad } else { Partition::Fixed(code as u32) };
        p.validate().map(|_| p)
    }
}

impl FromStr for Partition {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "rd-quad" {
            return Ok(Partition::RdQuad);
        }
        let n = s.strip_prefix("fixed").unwrap_or(s).trim_start_matches([':', '-']);
        let n: u32 = n.parse().map_err(|_| CoreError::InvalidArgument(format!("partition '{s}'")))?;
        let p = Partition::Fixed(n);
        p.validate().map(|_| p)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Partition::Fixed(n) => write!(f, "{n}"),
            Partition::RdQuad => f.write_str("rd-quad"),
        }
    }
}

pub(crate) fn check_geometry(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 || width % UNIT != 0 || height % UNIT != 0 {
        return invalid(format!("frame {width}x{height}: sides must be positive multiples of 4"));
    }
    if width > u16::MAX as u32 || height > u16::MAX as u32 {
        return invalid(format!("frame {width}x{height} too large"));
    }
    Ok(())
}

/// Quadtree traversal over a frame: `root x root` nodes in raster order,
/// children in z-order. Nodes crossing the frame edge are always split and
/// nodes outside it are dropped. `visit` sees every node that fits and
/// returns whether to split it (ignored at size 4).
pub(crate) fn walk_quadtree(
    width: u32,
    height: u32,
    root: u32,
    visit: &mut dyn FnMut(Rect) -> bool,
) {
    fn node(r: Rect, width: u32, height: u32, visit: &mut dyn FnMut(Rect) -> bool) {
        if r.x >= width || r.y >= height {
            return;
        }
        let split = if r.fits(width, height) { visit(r) && r.w > UNIT } else { true };
        if split {
            for q in r.quadrants() {
                node(q, width, height, visit);
            }
        }
    }
    for y in (0..height).step_by(root as usize) {
        for x in (0..width).step_by(root as usize) {
            node(Rect::new(x, y, root, root), width, height, visit);
        }
    }
}

/// Regular tiling by `n x n` blocks; edge blocks shrink by quad splits.
pub fn fixed_tiling(width: u32, height: u32, n: u32) -> Result<Vec<Rect>> {
    check_geometry(width, height)?;
    Partition::Fixed(n).validate()?;
    let mut rects = Vec::new();
    walk_quadtree(width, height, n, &mut |r| {
        rects.push(r);
        false
    });
    Ok(rects)
}

/// Coding blocks of `frame` in coding order. Rd-quad runs the
/// traditional-only encoder at `config.qp` to choose the splits.
pub fn partition(frame: &Frame, config: &RdConfig) -> Result<Vec<Rect>> {
    match config.partition {
        Partition::Fixed(n) => fixed_tiling(frame.width, frame.height, n),
        Partition::RdQuad => {
            let cfg = RdConfig { dlimd: false, ..config.clone() };
            let encoded = codec::encode_frame(frame, &cfg, None)?;
            Ok(encoded.trace.iter().map(|t| t.rect).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_tiling_examples() {
        let r = fixed_tiling(8, 8, 4).unwrap();
        assert_eq!(
            r,
            vec![Rect::new(0, 0, 4, 4), Rect::new(4, 0, 4, 4), Rect::new(0, 4, 4, 4), Rect::new(4, 4, 4, 4)]
        );
        assert_eq!(fixed_tiling(4, 4, 64).unwrap(), vec![Rect::new(0, 0, 4, 4)]);
    }

    #[test]
    fn edge_blocks_shrink() {
        let r = fixed_tiling(24, 8, 16).unwrap();
        // 16x16 root crosses the bottom edge: split into 8x8s; the second root
        // at x=16 keeps its fitting 8x8.
        assert_eq!(r, vec![Rect::new(0, 0, 8, 8), Rect::new(8, 0, 8, 8), Rect::new(16, 0, 8, 8)]);
        assert!(fixed_tiling(10, 8, 8).is_err());
        assert!(fixed_tiling(8, 8, 12).is_err());
    }

    #[test]
    fn luma_of_white_and_black() {
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(0, 0, 0), 0);
    }

    #[test]
    fn snapshot_restores_flags_and_modes() {
        let mut rb = ReconBuffer::new(8, 8);
        let r = Rect::new(4, 0, 4, 4);
        let snap = rb.snapshot(r);
        rb.write_block(r, &[9; 16], 50);
        assert_eq!(rb.sample(5, 1), Some(9));
        assert_eq!(rb.mode_at(7, 3), Some(50));
        rb.restore(&snap);
        assert_eq!(rb.sample(5, 1), None);
        assert_eq!(rb.mode_at(7, 3), None);
    }

    #[test]
    fn partition_strings() {
        assert_eq!("rd-quad".parse::<Partition>().unwrap(), Partition::RdQuad);
        assert_eq!("8".parse::<Partition>().unwrap(), Partition::Fixed(8));
        assert_eq!("fixed:16".parse::<Partition>().unwrap(), Partition::Fixed(16));
        assert!("7".parse::<Partition>().is_err());
        for p in [Partition::RdQuad, Partition::Fixed(32)] {
            assert_eq!(Partition::from_code(p.code()).unwrap(), p);
        }
    }
}
