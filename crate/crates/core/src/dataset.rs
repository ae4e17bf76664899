//! Training samples: extraction from coding runs, class balancing,
//! validation splits and the binary dataset file.
//!
//! File layout (little-endian): magic `DLIMDSET`, version u32, record count
//! u64, then fixed-width records of 528 f32 canvas values, 73 f32 features
//! and label, qp, width, height as u8.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use dlimd_nn::{Input, Labeled, CANVAS_LEN, FEATURE_LEN};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::codec::{encode_frame, RdConfig};
use crate::error::{invalid, CoreError, Result};
use crate::features::block_inputs;
use crate::frame_store::{Frame, Partition, ReconBuffer};
use crate::intra_pred::NUM_MODES;

pub const MAGIC: [u8; 8] = *b"DLIMDSET";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 8 + 4 + 8;
pub const RECORD_BYTES: usize = (CANVAS_LEN + FEATURE_LEN) * 4 + 4;
/// QPs of the standard extraction recipe.
pub const STANDARD_QPS: [u8; 4] = [22, 27, 32, 37];

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub canvas: Vec<f32>,
    pub features: Vec<f32>,
    pub label: u8,
    pub qp: u8,
    pub w: u8,
    pub h: u8,
}

impl SampleRecord {
    pub fn write_to(&self, out: &mut Vec<u8>) {
        for v in self.canvas.iter().chain(&self.features) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&[self.label, self.qp, self.w, self.h]);
    }

    pub fn read_from(b: &[u8]) -> Result<Self> {
        if b.len() != RECORD_BYTES {
            return Err(CoreError::CorruptDataset(format!("record of {} bytes", b.len())));
        }
        let floats: Vec<f32> = b[..RECORD_BYTES - 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = &b[RECORD_BYTES - 4..];
        if t[0] as usize >= NUM_MODES {
            return Err(CoreError::CorruptDataset(format!("label {}", t[0])));
        }
        Ok(SampleRecord {
            canvas: floats[..CANVAS_LEN].to_vec(),
            features: floats[CANVAS_LEN..].to_vec(),
            label: t[0],
            qp: t[1],
            w: t[2],
            h: t[3],
        })
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut b = Vec::with_capacity(RECORD_BYTES);
        self.write_to(&mut b);
        Sha256::digest(&b).into()
    }

    pub fn labeled(&self) -> Labeled<'_> {
        Labeled {
            input: Input { canvas: &self.canvas, features: &self.features },
            label: self.label as usize,
        }
    }
}

pub fn to_bytes(records: &[SampleRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + records.len() * RECORD_BYTES);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        r.write_to(&mut out);
    }
    out
}

fn read_header(b: &[u8]) -> Result<u64> {
    if b.len() < HEADER_BYTES || b[..8] != MAGIC {
        return Err(CoreError::CorruptDataset("missing dataset header".into()));
    }
    let version = u32::from_le_bytes(b[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(CoreError::UnknownVersion(version));
    }
    Ok(u64::from_le_bytes(b[12..20].try_into().unwrap()))
}

pub fn from_bytes(b: &[u8]) -> Result<Vec<SampleRecord>> {
    let count = read_header(b)? as usize;
    let body = &b[HEADER_BYTES..];
    if body.len() != count * RECORD_BYTES {
        return Err(CoreError::CorruptDataset(format!(
            "{count} records declared, {} bytes of payload",
            body.len()
        )));
    }
    body.chunks_exact(RECORD_BYTES).map(SampleRecord::read_from).collect()
}

pub fn write_dataset(path: &Path, records: &[SampleRecord]) -> Result<()> {
    fs::write(path, to_bytes(records))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<SampleRecord>> {
    from_bytes(&fs::read(path)?)
}

/// Appends to `path`, creating it if missing, and updates the record count.
pub fn append_dataset(path: &Path, records: &[SampleRecord]) -> Result<()> {
    if !path.exists() {
        return write_dataset(path, records);
    }
    let mut f = OpenOptions::new().read(true).write(true).open(path)?;
    let mut header = [0u8; HEADER_BYTES];
    f.read_exact(&mut header)?;
    let count = read_header(&header)?;
    let expected = HEADER_BYTES as u64 + count * RECORD_BYTES as u64;
    if f.metadata()?.len() != expected {
        return Err(CoreError::CorruptDataset("file length disagrees with its record count".into()));
    }
    let mut body = Vec::with_capacity(records.len() * RECORD_BYTES);
    for r in records {
        r.write_to(&mut body);
    }
    f.seek(SeekFrom::End(0))?;
    f.write_all(&body)?;
    f.seek(SeekFrom::Start(12))?;
    f.write_all(&(count + records.len() as u64).to_le_bytes())?;
    Ok(())
}

pub fn file_digest(path: &Path) -> Result<[u8; 32]> {
    Ok(Sha256::digest(fs::read(path)?).into())
}

/// Where the features of extracted samples read their neighbor samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RefSource {
    /// Decoded samples, as the decoder sees them.
    #[default]
    Recon,
    /// Original source samples.
    Source,
}

impl FromStr for RefSource {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recon" => Ok(RefSource::Recon),
            "source" => Ok(RefSource::Source),
            _ => invalid(format!("reference source '{s}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtractSummary {
    pub blocks: usize,
    pub per_label: [usize; NUM_MODES],
}

impl ExtractSummary {
    pub fn of(records: &[SampleRecord]) -> Self {
        let mut per_label = [0; NUM_MODES];
        for r in records {
            per_label[r.label as usize] += 1;
        }
        ExtractSummary { blocks: records.len(), per_label }
    }
}

/// Samples of one frame coded at one QP with signaled modes only.
pub fn frame_samples(
    frame: &Frame,
    qp: u8,
    partition: Partition,
    source: RefSource,
) -> Result<Vec<SampleRecord>> {
    let cfg = RdConfig::new(qp, partition, false)?;
    let encoded = encode_frame(frame, &cfg, None)?;
    // Replay the coding order so each block sees exactly its predecessors.
    let mut state = ReconBuffer::new(frame.width(), frame.height());
    let mut out = Vec::with_capacity(encoded.trace.len());
    for t in &encoded.trace {
        let (canvas, features) = block_inputs(&state, t.rect, qp);
        out.push(SampleRecord {
            canvas,
            features,
            label: t.mode.index(),
            qp,
            w: t.rect.w as u8,
            h: t.rect.h as u8,
        });
        let samples = match source {
            RefSource::Recon => encoded.recon.block(t.rect),
            RefSource::Source => frame.block(t.rect),
        };
        state.write_block(t.rect, &samples, t.mode.index());
    }
    Ok(out)
}

/// One record per coded block for every (frame, qp) pair, in frame-major
/// order whatever the number of worker threads.
pub fn extract_samples(
    frames: &[Frame],
    qps: &[u8],
    partition: Partition,
    source: RefSource,
    jobs: usize,
) -> Result<(Vec<SampleRecord>, ExtractSummary)> {
    let tasks: Vec<(usize, u8)> =
        (0..frames.len()).flat_map(|f| qps.iter().map(move |&q| (f, q))).collect();
    let results: Mutex<Vec<Option<Result<Vec<SampleRecord>>>>> =
        Mutex::new((0..tasks.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(tasks.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(f, qp)) = tasks.get(i) else { break };
                let r = frame_samples(&frames[f], qp, partition, source);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let mut records = Vec::new();
    for r in results.into_inner().unwrap() {
        records.extend(r.expect("every task ran")?);
    }
    let summary = ExtractSummary::of(&records);
    Ok((records, summary))
}

/// Uniform subsample of `per_cell` records from every (label, qp) cell, or
/// every label when `collapse_qp`, then shuffled. Cells are the labels seen
/// crossed with the QPs seen.
pub fn balance(
    records: &[SampleRecord],
    per_cell: usize,
    seed: u64,
    collapse_qp: bool,
) -> Result<Vec<SampleRecord>> {
    let key = |r: &SampleRecord| (r.label, if collapse_qp { 0 } else { r.qp });
    let mut cells: BTreeMap<(u8, u8), Vec<usize>> = BTreeMap::new();
    let mut labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let mut qps: Vec<u8> = records.iter().map(|r| key(r).1).collect();
    labels.sort_unstable();
    labels.dedup();
    qps.sort_unstable();
    qps.dedup();
    for &l in &labels {
        for &q in &qps {
            cells.insert((l, q), Vec::new());
        }
    }
    for (i, r) in records.iter().enumerate() {
        cells.get_mut(&key(r)).unwrap().push(i);
    }
    let deficits: Vec<String> = cells
        .iter()
        .filter(|(_, v)| v.len() < per_cell)
        .map(|((l, q), v)| {
            if collapse_qp {
                format!("label {l}: {}", v.len())
            } else {
                format!("label {l} qp {q}: {}", v.len())
            }
        })
        .collect();
    if !deficits.is_empty() {
        return Err(CoreError::Deficit(format!("need {per_cell} per cell; {}", deficits.join(", "))));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = Vec::with_capacity(cells.len() * per_cell);
    for idx in cells.values() {
        picked.extend(idx.choose_multiple(&mut rng, per_cell));
    }
    picked.shuffle(&mut rng);
    Ok(picked.into_iter().map(|i| records[i].clone()).collect())
}

/// Moves the first `per_label` records of every label into the validation
/// set; everything else stays in training order.
pub fn split_validation(
    records: &[SampleRecord],
    per_label: usize,
) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    let summary = ExtractSummary::of(records);
    let short: Vec<String> = summary
        .per_label
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0 && n < per_label)
        .map(|(l, n)| format!("label {l}: {n}"))
        .collect();
    if !short.is_empty() {
        return Err(CoreError::Deficit(format!("need {per_label} per label; {}", short.join(", "))));
    }
    let mut taken = [0usize; NUM_MODES];
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for r in records {
        let t = &mut taken[r.label as usize];
        if *t < per_label {
            *t += 1;
            val.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(label: u8, qp: u8, v: f32) -> SampleRecord {
        SampleRecord {
            canvas: vec![v; CANVAS_LEN],
            features: vec![v * 0.5; FEATURE_LEN],
            label,
            qp,
            w: 8,
            h: 4,
        }
    }

    #[test]
    fn bytes_round_trip() {
        let recs = vec![rec(3, 22, 0.25), rec(66, 37, 1.0)];
        let b = to_bytes(&recs);
        assert_eq!(b.len(), HEADER_BYTES + 2 * RECORD_BYTES);
        assert_eq!(from_bytes(&b).unwrap(), recs);
        assert!(from_bytes(&b[..b.len() - 1]).is_err());
    }

    #[test]
    fn balance_two_label_toy() {
        let mut recs = Vec::new();
        for i in 0..5 {
            for qp in [22, 27] {
                recs.push(rec(1, qp, i as f32));
                recs.push(rec(9, qp, i as f32));
            }
        }
        let b = balance(&recs, 1, 7, false).unwrap();
        assert_eq!(b.len(), 4);
        assert_eq!(balance(&recs, 5, 7, true).unwrap().len(), 10);
        assert!(matches!(balance(&recs, 6, 7, false), Err(CoreError::Deficit(_))));
    }

    #[test]
    fn split_counts() {
        let recs: Vec<_> = (0..30).map(|i| rec((i % 3) as u8, 22, i as f32)).collect();
        let (train, val) = split_validation(&recs, 4).unwrap();
        assert_eq!(val.len(), 12);
        assert_eq!(train.len(), 18);
        let (train, val) = split_validation(&recs, 0).unwrap();
        assert!(val.is_empty());
        assert_eq!(train, recs);
    }
}
