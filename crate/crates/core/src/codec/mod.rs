//! Intra-only encoder and decoder. Every block carries a strategy flag that
//! selects between an explicitly signaled mode and a mode derived by the
//! classification network from decoded neighbors.
//!
//! Bitstream layout (integers little-endian):
//!
//! ```text
//! magic "DLMD" | version u8 | width u16 | height u16 | qp u8
//! | partition u8 (0 = rd-quad, else block size) | dlimd u8 | digest [u8; 32]
//! | payload bits, MSB first, zero-padded to a byte
//! ```
//!
//! Payload, per quadtree node that fits the frame and is larger than 4x4
//! under rd-quad: split flag. Per block: strategy flag (1 = derived), the
//! canonical mode codeword when the flag is 0, then `ue(n)` with `n` the
//! number of coefficients up to the last nonzero one in diagonal scan, and
//! `se(level)` for each of them.

pub mod bits;
pub mod transform;

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use dlimd_nn::{argmax, checkpoint, Input, Network};
use sha2::{Digest, Sha256};

use crate::error::{invalid, CoreError, Result};
use crate::features::{assemble_features, build_canvas, gradient_histogram, neighbor_modes};
use crate::frame_store::{check_geometry, fixed_tiling, Frame, Partition, ReconBuffer, Rect, UNIT};
use crate::intra_pred::{build_reference, predict, IntraMode, ReferenceLines, NUM_LINES};
use crate::signaling::{decode_mode, derive_mpm, mode_bits, mode_code, BlockBits, MpmList, FLAG_BITS};
use bits::{se_len, ue_len, BitReader, BitWriter};
use transform::{dct2d, diagonal_scan, idct2d, qstep, quantize};

pub const MAGIC: [u8; 4] = *b"DLMD";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 2 + 2 + 1 + 1 + 1 + 32;
pub const MAX_QP: u8 = 51;

#[derive(Clone, Debug, PartialEq)]
pub struct RdConfig {
    pub qp: u8,
    pub partition: Partition,
    /// Let blocks derive their mode with the network.
    pub dlimd: bool,
}

impl RdConfig {
    pub fn new(qp: u8, partition: Partition, dlimd: bool) -> Result<Self> {
        let cfg = RdConfig { qp, partition, dlimd };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.qp > MAX_QP {
            return invalid(format!("qp {} outside [0, {MAX_QP}]", self.qp));
        }
        self.partition.validate()
    }

    pub fn lambda(&self) -> f64 {
        0.57 * 2f64.powf((self.qp as f64 - 12.0) / 3.0)
    }

    pub fn qstep(&self) -> f64 {
        qstep(self.qp)
    }
}

/// A network plus the SHA-256 of its checkpoint bytes.
pub struct DlimdModel {
    net: Network<f32>,
    digest: [u8; 32],
}

impl DlimdModel {
    pub fn new(net: Network<f32>) -> Self {
        let digest = Sha256::digest(checkpoint::to_bytes(&net)).into();
        DlimdModel { net, digest }
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let net = checkpoint::from_bytes(bytes)?;
        Ok(DlimdModel { net, digest: Sha256::digest(bytes).into() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_bytes(&std::fs::read(path)?)
    }

    pub fn digest(&self) -> [u8; 32] {
        self.digest
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    /// Most probable mode for the given inputs; ties go to the smaller index.
    pub fn derive(&self, canvas: &[f32], features: &[f32]) -> Result<IntraMode> {
        let probs = self.net.predict(Input { canvas, features })?;
        Ok(IntraMode::new(argmax(&probs) as u32)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Traditional,
    Dlimd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdCandidate {
    pub mode: IntraMode,
    /// Sum of squared reconstruction error.
    pub distortion: u64,
    pub residual_bits: u32,
    pub mode_bits: u32,
    pub flag_bits: u32,
    pub other_bits: u32,
    pub cost: f64,
    pub levels: Vec<i32>,
    pub recon: Vec<u8>,
}

impl RdCandidate {
    pub fn bits(&self) -> u32 {
        self.residual_bits + self.mode_bits + self.flag_bits + self.other_bits
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdDecision {
    pub scheme: Scheme,
    pub candidate: RdCandidate,
}

impl RdDecision {
    pub fn flag(&self) -> bool {
        self.scheme == Scheme::Dlimd
    }
}

/// Picks the cheaper scheme; equal costs keep the signaled mode.
pub fn decide(traditional: RdCandidate, dlimd: Option<RdCandidate>) -> RdDecision {
    match dlimd {
        Some(d) if d.cost < traditional.cost => RdDecision { scheme: Scheme::Dlimd, candidate: d },
        _ => RdDecision { scheme: Scheme::Traditional, candidate: traditional },
    }
}

/// Exact bit count of the coefficient syntax for `levels` (raster order).
pub fn residual_bits(levels: &[i32], w: usize, h: usize) -> u32 {
    let scan = diagonal_scan(w, h);
    let n = scan.iter().rposition(|&i| levels[i] != 0).map_or(0, |p| p + 1);
    ue_len(n as u32) + scan[..n].iter().map(|&i| se_len(levels[i])).sum::<u32>()
}

/// Prediction plus dequantized, inverse-transformed levels, rounded and clamped.
pub fn reconstruct(pred: &[u8], levels: &[i32], w: usize, h: usize, step: f64) -> Vec<u8> {
    if levels.iter().all(|&l| l == 0) {
        return pred.to_vec();
    }
    let coeffs: Vec<f64> = levels.iter().map(|&l| l as f64 * step).collect();
    let res = idct2d(&coeffs, w, h);
    pred.iter().zip(&res).map(|(&p, &r)| (p as f64 + r).round().clamp(0.0, 255.0) as u8).collect()
}

/// Transforms, quantizes and reconstructs `src - pred`; returns
/// `(levels, recon, distortion, residual bits)`.
pub fn code_residual(src: &[u8], pred: &[u8], w: usize, h: usize, step: f64) -> (Vec<i32>, Vec<u8>, u64, u32) {
    let diff: Vec<f64> = src.iter().zip(pred).map(|(&s, &p)| s as f64 - p as f64).collect();
    let levels: Vec<i32> = dct2d(&diff, w, h).iter().map(|&c| quantize(c, step)).collect();
    let recon = reconstruct(pred, &levels, w, h, step);
    let distortion = ssd(src, &recon);
    let bits = residual_bits(&levels, w, h);
    (levels, recon, distortion, bits)
}

pub fn ssd(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).map(|(&x, &y)| (x as i64 - y as i64).pow(2) as u64).sum()
}

fn evaluate(
    mode: IntraMode,
    src: &[u8],
    refs: &ReferenceLines,
    cfg: &RdConfig,
    mode_bits: u32,
) -> Result<RdCandidate> {
    let (w, h) = (refs.w as usize, refs.h as usize);
    if src.len() != w * h {
        return invalid(format!("{} source samples for a {w}x{h} block", src.len()));
    }
    let pred = predict(mode, refs, refs.w, refs.h)?;
    let (levels, recon, distortion, residual_bits) = code_residual(src, &pred, w, h, cfg.qstep());
    let bits = residual_bits + mode_bits + FLAG_BITS;
    Ok(RdCandidate {
        mode,
        distortion,
        residual_bits,
        mode_bits,
        flag_bits: FLAG_BITS,
        other_bits: 0,
        cost: distortion as f64 + cfg.lambda() * bits as f64,
        levels,
        recon,
    })
}

/// Full search over all 67 modes; equal costs go to the smaller index.
pub fn code_block_traditional(
    src: &[u8],
    refs: &ReferenceLines,
    mpm: &MpmList,
    cfg: &RdConfig,
) -> Result<RdCandidate> {
    let mut best: Option<RdCandidate> = None;
    for mode in IntraMode::all() {
        let cand = evaluate(mode, src, refs, cfg, mode_bits(mode, mpm).bits)?;
        if best.as_ref().map_or(true, |b| cand.cost < b.cost) {
            best = Some(cand);
        }
    }
    Ok(best.expect("67 candidates"))
}

/// The network's mode, coded without mode bits.
pub fn code_block_dlimd(
    src: &[u8],
    refs: &ReferenceLines,
    canvas: &[f32],
    features: &[f32],
    model: &DlimdModel,
    cfg: &RdConfig,
) -> Result<RdCandidate> {
    let mode = model.derive(canvas, features)?;
    evaluate(mode, src, refs, cfg, 0)
}

/// Left and above neighbors feeding the MPM list; Planar when uncoded.
pub fn mpm_neighbors(recon: &ReconBuffer, rect: Rect) -> (IntraMode, IntraMode) {
    let (x, y, w, h) = (rect.x as i64, rect.y as i64, rect.w as i64, rect.h as i64);
    let get = |px, py| {
        recon.mode_at(px, py).map(|m| IntraMode::new(m as u32).expect("stored mode")).unwrap_or_default()
    };
    (get(x - 1, y + h - 1), get(x + w - 1, y - 1))
}

/// Network inputs for `rect`, given its 4-line references.
fn network_inputs(recon: &ReconBuffer, rect: Rect, refs: &ReferenceLines, qp: u8) -> (Vec<f32>, Vec<f32>) {
    let canvas = build_canvas(refs);
    let features =
        assemble_features(&gradient_histogram(recon, rect), &neighbor_modes(recon, rect), qp);
    (canvas, features)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub rect: Rect,
    pub mode: IntraMode,
    pub dlimd: bool,
    pub mode_bits: u32,
    pub flag_bits: u32,
    pub residual_bits: u32,
    pub distortion: u64,
}

impl TraceRecord {
    pub fn bits(&self) -> u32 {
        self.mode_bits + self.flag_bits + self.residual_bits
    }

    pub fn block_bits(&self) -> BlockBits {
        BlockBits {
            mode: self.mode,
            mode_bits: self.mode_bits,
            flag_bits: self.flag_bits,
            total_bits: self.bits() as u64,
            dlimd: self.dlimd,
        }
    }
}

pub const TRACE_HEADER: &str = "# x y w h mode dlimd mode_bits flag_bits residual_bits distortion";

pub fn format_trace(trace: &[TraceRecord]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for t in trace {
        let r = t.rect;
        writeln!(
            s,
            "{} {} {} {} {} {} {} {} {} {}",
            r.x, r.y, r.w, r.h, t.mode, t.dlimd as u8, t.mode_bits, t.flag_bits, t.residual_bits, t.distortion
        )
        .unwrap();
    }
    s
}

pub fn parse_trace(text: impl BufRead) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || CoreError::InvalidArgument(format!("trace line {}: '{line}'", no + 1));
        let v: Vec<u64> = line.split_whitespace().map(|t| t.parse().map_err(|_| bad())).collect::<Result<_>>()?;
        if v.len() != 10 || v[5] > 1 {
            return Err(bad());
        }
        out.push(TraceRecord {
            rect: Rect::new(v[0] as u32, v[1] as u32, v[2] as u32, v[3] as u32),
            mode: IntraMode::new(v[4] as u32)?,
            dlimd: v[5] == 1,
            mode_bits: v[6] as u32,
            flag_bits: v[7] as u32,
            residual_bits: v[8] as u32,
            distortion: v[9],
        });
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Encoded {
    pub bitstream: Vec<u8>,
    pub trace: Vec<TraceRecord>,
    pub recon: Frame,
    pub split_bits: u64,
    /// `D + lambda * R` over the whole frame payload.
    pub cost: f64,
    /// The derived-mode pass cost more than signaling every mode, so the
    /// signaled-only choices were kept.
    pub fallback: bool,
}

impl Encoded {
    pub fn payload_bits(&self) -> u64 {
        self.trace.iter().map(|t| t.bits() as u64).sum::<u64>() + self.split_bits
    }
}

pub fn frame_cost(trace: &[TraceRecord], split_bits: u64, lambda: f64) -> f64 {
    let d: u64 = trace.iter().map(|t| t.distortion).sum();
    let r: u64 = trace.iter().map(|t| t.bits() as u64).sum::<u64>() + split_bits;
    d as f64 + lambda * r as f64
}

struct Pass<'a> {
    frame: &'a Frame,
    cfg: &'a RdConfig,
    model: Option<&'a DlimdModel>,
    recon: ReconBuffer,
    writer: BitWriter,
    trace: Vec<TraceRecord>,
    split_bits: u64,
}

impl<'a> Pass<'a> {
    fn new(frame: &'a Frame, cfg: &'a RdConfig, model: Option<&'a DlimdModel>) -> Self {
        Pass {
            frame,
            cfg,
            model,
            recon: ReconBuffer::new(frame.width(), frame.height()),
            writer: BitWriter::new(),
            trace: Vec::new(),
            split_bits: 0,
        }
    }

    fn run(mut self) -> Result<Encoded> {
        match self.cfg.partition {
            Partition::Fixed(n) => {
                for rect in fixed_tiling(self.frame.width(), self.frame.height(), n)? {
                    self.block(rect)?;
                }
            }
            Partition::RdQuad => {
                let root = Partition::RdQuad.root_size();
                for y in (0..self.frame.height()).step_by(root as usize) {
                    for x in (0..self.frame.width()).step_by(root as usize) {
                        self.node(Rect::new(x, y, root, root))?;
                    }
                }
            }
        }
        let cost = frame_cost(&self.trace, self.split_bits, self.cfg.lambda());
        Ok(Encoded {
            bitstream: self.writer.into_bytes(),
            trace: self.trace,
            recon: self.recon.to_frame(),
            split_bits: self.split_bits,
            cost,
            fallback: false,
        })
    }

    fn node(&mut self, rect: Rect) -> Result<f64> {
        let (fw, fh) = (self.frame.width(), self.frame.height());
        if rect.x >= fw || rect.y >= fh {
            return Ok(0.0);
        }
        if !rect.fits(fw, fh) {
            let mut cost = 0.0;
            for q in rect.quadrants() {
                cost += self.node(q)?;
            }
            return Ok(cost);
        }
        if rect.w == UNIT {
            return self.block(rect);
        }
        let lambda = self.cfg.lambda();
        let (start_bits, start_trace, start_split) = (self.writer.len(), self.trace.len(), self.split_bits);
        let before = self.recon.snapshot(rect);

        self.writer.put_bit(false);
        self.split_bits += 1;
        let leaf = lambda + self.block(rect)?;
        let leaf_writer = self.writer.clone();
        let leaf_trace: Vec<_> = self.trace.drain(start_trace..).collect();
        let leaf_recon = self.recon.snapshot(rect);
        let leaf_split = self.split_bits;

        self.writer.truncate(start_bits);
        self.recon.restore(&before);
        self.split_bits = start_split;
        self.writer.put_bit(true);
        self.split_bits += 1;
        let mut split = lambda;
        for q in rect.quadrants() {
            split += self.node(q)?;
        }
        if leaf <= split {
            self.writer = leaf_writer;
            self.trace.truncate(start_trace);
            self.trace.extend(leaf_trace);
            self.recon.restore(&leaf_recon);
            self.split_bits = leaf_split;
            Ok(leaf)
        } else {
            Ok(split)
        }
    }

    fn block(&mut self, rect: Rect) -> Result<f64> {
        let src = self.frame.block(rect);
        let lines = if self.model.is_some() { NUM_LINES } else { 1 };
        let refs = build_reference(&self.recon, rect, lines);
        let (left, above) = mpm_neighbors(&self.recon, rect);
        let mpm = derive_mpm(left, above);
        let traditional = code_block_traditional(&src, &refs, &mpm, self.cfg)?;
        let derived = match self.model {
            Some(model) => {
                let (canvas, features) = network_inputs(&self.recon, rect, &refs, self.cfg.qp);
                Some(code_block_dlimd(&src, &refs, &canvas, &features, model, self.cfg)?)
            }
            None => None,
        };
        let decision = decide(traditional, derived);
        let c = &decision.candidate;
        self.writer.put_bit(decision.flag());
        if !decision.flag() {
            let (value, len) = mode_code(c.mode, &mpm);
            self.writer.put_bits(value as u64, len);
        }
        write_levels(&mut self.writer, &c.levels, rect.w as usize, rect.h as usize);
        self.recon.write_block(rect, &c.recon, c.mode.index());
        self.trace.push(TraceRecord {
            rect,
            mode: c.mode,
            dlimd: decision.flag(),
            mode_bits: c.mode_bits,
            flag_bits: c.flag_bits,
            residual_bits: c.residual_bits,
            distortion: c.distortion,
        });
        Ok(c.cost)
    }
}

fn write_levels(w: &mut BitWriter, levels: &[i32], bw: usize, bh: usize) {
    let scan = diagonal_scan(bw, bh);
    let n = scan.iter().rposition(|&i| levels[i] != 0).map_or(0, |p| p + 1);
    w.put_ue(n as u32);
    for &i in &scan[..n] {
        w.put_se(levels[i]);
    }
}

fn read_levels(r: &mut BitReader<'_>, bw: usize, bh: usize) -> Result<Vec<i32>> {
    let scan = diagonal_scan(bw, bh);
    let n = r.ue()? as usize;
    if n > scan.len() {
        return Err(CoreError::CorruptStream(format!("{n} coefficients in a {bw}x{bh} block")));
    }
    let mut levels = vec![0; bw * bh];
    for &i in &scan[..n] {
        levels[i] = r.se()?;
    }
    Ok(levels)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub width: u32,
    pub height: u32,
    pub qp: u8,
    pub partition: Partition,
    pub dlimd: bool,
    pub digest: [u8; 32],
}

impl Header {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN);
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.width as u16).to_le_bytes());
        out.extend_from_slice(&(self.height as u16).to_le_bytes());
        out.push(self.qp);
        out.push(self.partition.code());
        out.push(self.dlimd as u8);
        out.extend_from_slice(&self.digest);
        out
    }
}

pub fn read_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 5 {
        return Err(CoreError::TruncatedInput("bitstream header".into()));
    }
    if bytes[..4] != MAGIC {
        return Err(CoreError::CorruptStream("bad magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(CoreError::UnknownVersion(bytes[4] as u32));
    }
    if bytes.len() < HEADER_LEN {
        return Err(CoreError::TruncatedInput("bitstream header".into()));
    }
    let width = u16::from_le_bytes([bytes[5], bytes[6]]) as u32;
    let height = u16::from_le_bytes([bytes[7], bytes[8]]) as u32;
    check_geometry(width, height).map_err(|e| CoreError::CorruptStream(e.to_string()))?;
    let qp = bytes[9];
    let partition = Partition::from_code(bytes[10]).map_err(|e| CoreError::CorruptStream(e.to_string()))?;
    if qp > MAX_QP || bytes[11] > 1 {
        return Err(CoreError::CorruptStream("bad header field".into()));
    }
    let mut digest = [0u8; 32];
    digest.copy_from_slice(&bytes[12..HEADER_LEN]);
    Ok(Header { width, height, qp, partition, dlimd: bytes[11] == 1, digest })
}

/// Encodes one frame. With `cfg.dlimd`, every block weighs the derived mode
/// against the best signaled one; if the frame ends up costlier than
/// signaling every mode, the signaled-only choices are emitted instead.
pub fn encode_frame(frame: &Frame, cfg: &RdConfig, model: Option<&DlimdModel>) -> Result<Encoded> {
    cfg.validate()?;
    check_geometry(frame.width(), frame.height())?;
    let model = match (cfg.dlimd, model) {
        (true, None) => return invalid("derived modes enabled without a network"),
        (true, m) => m,
        (false, _) => None,
    };
    let header = Header {
        width: frame.width(),
        height: frame.height(),
        qp: cfg.qp,
        partition: cfg.partition,
        dlimd: cfg.dlimd,
        digest: model.map(DlimdModel::digest).unwrap_or_default(),
    };
    let mut best = Pass::new(frame, cfg, None).run()?;
    if let Some(model) = model {
        let derived = Pass::new(frame, cfg, Some(model)).run()?;
        if derived.cost < best.cost {
            best = derived;
        } else {
            best.fallback = true;
        }
    }
    let mut bitstream = header.to_bytes();
    bitstream.append(&mut best.bitstream);
    best.bitstream = bitstream;
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodedBlock {
    pub rect: Rect,
    pub mode: IntraMode,
    pub dlimd: bool,
}

#[derive(Clone, Debug)]
pub struct Decoded {
    pub header: Header,
    pub frame: Frame,
    pub blocks: Vec<DecodedBlock>,
    /// Network evaluations performed while decoding.
    pub network_calls: usize,
}

struct Decoder<'a, 'b> {
    header: &'a Header,
    model: Option<&'a DlimdModel>,
    reader: BitReader<'b>,
    recon: ReconBuffer,
    blocks: Vec<DecodedBlock>,
    network_calls: usize,
}

impl Decoder<'_, '_> {
    fn node(&mut self, rect: Rect) -> Result<()> {
        let (fw, fh) = (self.header.width, self.header.height);
        if rect.x >= fw || rect.y >= fh {
            return Ok(());
        }
        let split = !rect.fits(fw, fh) || (rect.w > UNIT && self.reader.bit()?);
        if split {
            for q in rect.quadrants() {
                self.node(q)?;
            }
            Ok(())
        } else {
            self.block(rect)
        }
    }

    fn block(&mut self, rect: Rect) -> Result<()> {
        let flag = self.reader.bit()?;
        let (w, h) = (rect.w as usize, rect.h as usize);
        let mode = if flag {
            let model = match (self.header.dlimd, self.model) {
                (true, Some(m)) => m,
                _ => return Err(CoreError::CorruptStream("derived-mode flag in a stream without a network".into())),
            };
            let refs = build_reference(&self.recon, rect, NUM_LINES);
            let (canvas, features) = network_inputs(&self.recon, rect, &refs, self.header.qp);
            self.network_calls += 1;
            model.derive(&canvas, &features)?
        } else {
            let (left, above) = mpm_neighbors(&self.recon, rect);
            let mpm = derive_mpm(left, above);
            decode_mode(&mpm, || self.reader.bit())?
        };
        let refs = build_reference(&self.recon, rect, 1);
        let pred = predict(mode, &refs, rect.w, rect.h)?;
        let levels = read_levels(&mut self.reader, w, h)?;
        let recon = reconstruct(&pred, &levels, w, h, qstep(self.header.qp));
        self.recon.write_block(rect, &recon, mode.index());
        self.blocks.push(DecodedBlock { rect, mode, dlimd: flag });
        Ok(())
    }
}

/// Decodes a stream. A stream using derived modes needs the network whose
/// checkpoint digest is recorded in its header.
pub fn decode_frame(bytes: &[u8], model: Option<&DlimdModel>) -> Result<Decoded> {
    let header = read_header(bytes)?;
    if header.dlimd {
        match model {
            None => return Err(CoreError::StreamMismatch("stream needs a network checkpoint".into())),
            Some(m) if m.digest() != header.digest => {
                return Err(CoreError::StreamMismatch("checkpoint digest differs from the stream's".into()))
            }
            _ => {}
        }
    }
    let mut dec = Decoder {
        header: &header,
        model,
        reader: BitReader::new(&bytes[HEADER_LEN..]),
        recon: ReconBuffer::new(header.width, header.height),
        blocks: Vec::new(),
        network_calls: 0,
    };
    match header.partition {
        Partition::Fixed(n) => {
            for rect in fixed_tiling(header.width, header.height, n)? {
                dec.block(rect)?;
            }
        }
        Partition::RdQuad => {
            let root = Partition::RdQuad.root_size();
            for y in (0..header.height).step_by(root as usize) {
                for x in (0..header.width).step_by(root as usize) {
                    dec.node(Rect::new(x, y, root, root))?;
                }
            }
        }
    }
    let frame = dec.recon.to_frame();
    let (blocks, network_calls) = (dec.blocks, dec.network_calls);
    Ok(Decoded { header, frame, blocks, network_calls })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intra_pred::ReferenceLines;

    #[test]
    fn lambda_and_step() {
        let cfg = RdConfig::new(12, Partition::Fixed(8), false).unwrap();
        assert_eq!(cfg.lambda(), 0.57);
        assert!(RdConfig::new(52, Partition::Fixed(8), false).is_err());
    }

    #[test]
    fn exact_prediction_wins_with_zero_distortion() {
        let mut refs = ReferenceLines::uniform(4, 4, 0);
        for (i, v) in refs.lines[0].top.iter_mut().enumerate() {
            *v = (i * 30) as u8;
        }
        let src = predict(IntraMode::VERTICAL, &refs, 4, 4).unwrap();
        let cfg = RdConfig::new(32, Partition::Fixed(4), false).unwrap();
        let mpm = derive_mpm(IntraMode::VERTICAL, IntraMode::PLANAR);
        let best = code_block_traditional(&src, &refs, &mpm, &cfg).unwrap();
        assert_eq!(best.mode, IntraMode::VERTICAL);
        assert_eq!(best.distortion, 0);
        assert_eq!(best.residual_bits, 1);
    }

    #[test]
    fn flat_block_ties_to_planar() {
        let refs = ReferenceLines::uniform(8, 8, 90);
        let cfg = RdConfig::new(22, Partition::Fixed(8), false).unwrap();
        let mpm = derive_mpm(IntraMode::PLANAR, IntraMode::PLANAR);
        let best = code_block_traditional(&[90; 64], &refs, &mpm, &cfg).unwrap();
        assert_eq!(best.mode, IntraMode::PLANAR);
    }

    #[test]
    fn derived_cost_arithmetic() {
        let refs = ReferenceLines::uniform(4, 4, 100);
        let cfg = RdConfig::new(27, Partition::Fixed(4), true).unwrap();
        let model = DlimdModel::new(Network::zeros(dlimd_nn::Variant::AblationH));
        let mut src = [100u8; 16];
        src[0] = 104;
        let c = code_block_dlimd(&src, &refs, &[0.5; 528], &[0.0; 73], &model, &cfg).unwrap();
        // Uniform output: mode 0.
        assert_eq!(c.mode, IntraMode::PLANAR);
        assert_eq!(c.mode_bits, 0);
        let want = c.distortion as f64 + cfg.lambda() * (c.residual_bits + 1) as f64;
        assert_eq!(c.cost, want);
    }

    #[test]
    fn decision_ties_keep_signaling() {
        let cand = |cost| RdCandidate {
            mode: IntraMode::DC,
            distortion: 0,
            residual_bits: 1,
            mode_bits: 0,
            flag_bits: 1,
            other_bits: 0,
            cost,
            levels: vec![],
            recon: vec![],
        };
        assert_eq!(decide(cand(5.0), Some(cand(5.0))).scheme, Scheme::Traditional);
        assert_eq!(decide(cand(5.0), Some(cand(4.0))).scheme, Scheme::Dlimd);
    }

    #[test]
    fn trace_text_round_trip() {
        let t = TraceRecord {
            rect: Rect::new(8, 4, 4, 4),
            mode: IntraMode::new(33).unwrap(),
            dlimd: true,
            mode_bits: 0,
            flag_bits: 1,
            residual_bits: 17,
            distortion: 1234,
        };
        let text = format_trace(&[t, t]);
        assert_eq!(parse_trace(text.as_bytes()).unwrap(), vec![t, t]);
    }

    #[test]
    fn header_errors() {
        let h = Header {
            width: 16,
            height: 8,
            qp: 30,
            partition: Partition::RdQuad,
            dlimd: false,
            digest: [0; 32],
        };
        let mut b = h.to_bytes();
        assert_eq!(read_header(&b).unwrap(), h);
        b[4] = 9;
        assert!(matches!(read_header(&b), Err(CoreError::UnknownVersion(9))));
        assert!(matches!(read_header(&h.to_bytes()[..20]), Err(CoreError::TruncatedInput(_))));
    }
}
