//! Command-line workflows: coding, dataset preparation, training and
//! evaluation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dlimd_core::codec::{decode_frame, encode_frame, format_trace, DlimdModel, Encoded, RdConfig};
use dlimd_core::dataset::{self, RefSource, SampleRecord, STANDARD_QPS};
use dlimd_core::frame_store::{load_frame, load_raw_frames, save_frame, Frame, FrameFormat, Partition};
use dlimd_core::metrics::{self, AccuracyReport, RdPoint, SignalingRow};
use dlimd_core::signaling::bpm_stats;
use dlimd_core::synth;
use dlimd_nn::{checkpoint, flops, short_flops, train, LayerKind, Labeled, TrainConfig, Variant};

#[derive(Parser, Debug)]
#[command(name = "dlimd", version, about = "Learned intra-mode derivation laboratory")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for extraction and coding evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct FrameArgs {
    /// Raw 4:2:0 sequences or PNM images.
    #[arg(long = "input", short, required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub width: u32,
    #[arg(long)]
    pub height: u32,
    #[arg(long, default_value = "raw420")]
    pub format: FrameFormat,
    /// Frames read from each raw sequence.
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
}

impl FrameArgs {
    pub fn load(&self) -> Result<Vec<Frame>> {
        let mut out = Vec::new();
        for path in &self.inputs {
            let frames = match self.format {
                FrameFormat::Raw420 => load_raw_frames(path, self.width, self.height, self.frames),
                FrameFormat::Pnm => load_frame(path, self.width, self.height, self.format).map(|f| vec![f]),
            };
            out.extend(frames.with_context(|| format!("reading {}", path.display()))?);
        }
        Ok(out)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Encode one frame to a bitstream and a block trace.
    Encode {
        #[command(flatten)]
        frames: FrameArgs,
        #[arg(long, default_value_t = 32)]
        qp: u8,
        #[arg(long, default_value = "rd-quad")]
        partition: Partition,
        /// Let blocks derive their mode with the network.
        #[arg(long, requires = "checkpoint")]
        dlimd: bool,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also write the reconstruction (PGM).
        #[arg(long)]
        recon: Option<PathBuf>,
    },
    /// Decode a bitstream to a frame.
    Decode {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value = "pnm")]
        format: FrameFormat,
    },
    /// Code a corpus with signaled modes and record one sample per block.
    Extract {
        #[command(flatten)]
        frames: FrameArgs,
        #[arg(long, value_delimiter = ',', default_values_t = STANDARD_QPS)]
        qps: Vec<u8>,
        #[arg(long, default_value = "rd-quad")]
        partition: Partition,
        #[arg(long, default_value = "recon")]
        ref_source: RefSource,
        #[arg(long, short)]
        output: PathBuf,
        /// Append to an existing dataset file.
        #[arg(long)]
        append: bool,
    },
    /// Subsample a dataset to equal counts per (label, qp) cell.
    Balance {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = 200)]
        per_cell: usize,
        /// Count cells per label only.
        #[arg(long)]
        collapse_qp: bool,
        /// Move this many records per label to a validation file.
        #[arg(long, requires = "val_output")]
        validation: Option<usize>,
        #[arg(long, requires = "validation")]
        val_output: Option<PathBuf>,
    },
    /// Train a classifier and write its checkpoint.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long, default_value = "dlimd-l")]
        variant: Variant,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        #[arg(long, default_value_t = 1024)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0.999)]
        lr_decay: f64,
        #[arg(long, default_value_t = 0.5)]
        dropout: f32,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        checkpoint_every: Option<usize>,
        /// Per-epoch log file; stdout otherwise.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Classification accuracy of a checkpoint on a dataset.
    EvalAccuracy {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Write the confusion matrix as CSV.
        #[arg(long)]
        confusion: Option<PathBuf>,
    },
    /// Compare signaled-only coding against derived-mode coding.
    EvalCoding {
        #[command(flatten)]
        frames: FrameArgs,
        #[arg(long, value_delimiter = ',', default_values_t = STANDARD_QPS)]
        qps: Vec<u8>,
        #[arg(long, default_value = "rd-quad")]
        partition: Partition,
        #[arg(long, required_unless_present = "no_dlimd")]
        checkpoint: Option<PathBuf>,
        /// Disable derivation in the test arm too.
        #[arg(long)]
        no_dlimd: bool,
    },
    /// Per-layer FLOPs of a network variant.
    Flops {
        #[arg(long, default_value = "dlimd")]
        variant: Variant,
    },
    /// Write a synthetic corpus of oriented gratings and smooth fields.
    Synth {
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = 67)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        width: u32,
        #[arg(long, default_value_t = 64)]
        height: u32,
        /// raw420 writes one sequence file; pnm writes a directory of PGMs.
        #[arg(long, default_value = "raw420")]
        format: FrameFormat,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let stdout = std::io::stdout();
    run_to(cli, &mut stdout.lock())
}

pub fn run_to(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let (seed, jobs) = (cli.seed, cli.jobs.max(1));
    match cli.command {
        Command::Encode { frames, qp, partition, dlimd, checkpoint, output, trace, recon } => {
            let frame = frames.load()?.into_iter().next().context("no input frame")?;
            let model = checkpoint.as_deref().map(load_model).transpose()?;
            let cfg = RdConfig::new(qp, partition, dlimd)?;
            let enc = encode_frame(&frame, &cfg, model.as_ref())?;
            fs::write(&output, &enc.bitstream).with_context(|| format!("writing {}", output.display()))?;
            if let Some(path) = trace {
                fs::write(&path, format_trace(&enc.trace))?;
            }
            if let Some(path) = recon {
                save_frame(&enc.recon, &path, FrameFormat::Pnm)?;
            }
            let psnr = metrics::psnr(&frame, &enc.recon)?;
            let derived = enc.trace.iter().filter(|t| t.dlimd).count();
            writeln!(
                out,
                "{}",
                metrics::machine_line(&[
                    ("bytes", enc.bitstream.len().to_string()),
                    ("blocks", enc.trace.len().to_string()),
                    ("derived", derived.to_string()),
                    ("psnr", format!("{psnr:.4}")),
                    ("cost", format!("{:.2}", enc.cost)),
                    ("fallback", enc.fallback.to_string()),
                    ("digest", hex(&dataset::file_digest(&output)?)),
                ])
            )?;
        }
        Command::Decode { input, checkpoint, output, format } => {
            let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let model = checkpoint.as_deref().map(load_model).transpose()?;
            let dec = decode_frame(&bytes, model.as_ref())?;
            save_frame(&dec.frame, &output, format)?;
            writeln!(
                out,
                "{}",
                metrics::machine_line(&[
                    ("width", dec.header.width.to_string()),
                    ("height", dec.header.height.to_string()),
                    ("blocks", dec.blocks.len().to_string()),
                    ("network_calls", dec.network_calls.to_string()),
                ])
            )?;
        }
        Command::Extract { frames, qps, partition, ref_source, output, append } => {
            let frames = frames.load()?;
            let (records, summary) = dataset::extract_samples(&frames, &qps, partition, ref_source, jobs)?;
            if append && output.exists() {
                dataset::append_dataset(&output, &records)?;
            } else {
                dataset::write_dataset(&output, &records)?;
            }
            let present = summary.per_label.iter().filter(|&&n| n > 0).count();
            let min = summary.per_label.iter().copied().min().unwrap_or(0);
            writeln!(
                out,
                "{}",
                metrics::machine_line(&[
                    ("records", summary.blocks.to_string()),
                    ("labels", present.to_string()),
                    ("min_per_label", min.to_string()),
                    ("digest", hex(&dataset::file_digest(&output)?)),
                ])
            )?;
        }
        Command::Balance { input, output, per_cell, collapse_qp, validation, val_output } => {
            let records = dataset::read_dataset(&input)?;
            let balanced = dataset::balance(&records, per_cell, seed, collapse_qp)?;
            let (train_set, val_set) = match validation {
                Some(n) => dataset::split_validation(&balanced, n)?,
                None => (balanced, Vec::new()),
            };
            dataset::write_dataset(&output, &train_set)?;
            let mut fields = vec![
                ("records", train_set.len().to_string()),
                ("digest", hex(&dataset::file_digest(&output)?)),
            ];
            if let Some(path) = val_output {
                dataset::write_dataset(&path, &val_set)?;
                fields.push(("val_records", val_set.len().to_string()));
                fields.push(("val_digest", hex(&dataset::file_digest(&path)?)));
            }
            writeln!(out, "{}", metrics::machine_line(&fields))?;
        }
        Command::Train {
            train: train_path,
            val,
            variant,
            epochs,
            batch_size,
            lr,
            lr_decay,
            dropout,
            output,
            checkpoint_every,
            log,
            resume,
        } => {
            let train_set = dataset::read_dataset(&train_path)?;
            let val_set = match val {
                Some(p) => dataset::read_dataset(&p)?,
                None => Vec::new(),
            };
            let config = TrainConfig {
                variant,
                epochs,
                batch_size,
                lr0: lr,
                lr_decay,
                dropout,
                seed,
                checkpoint_every,
                checkpoint_path: Some(output.clone()),
            };
            let train_l: Vec<Labeled<'_>> = train_set.iter().map(SampleRecord::labeled).collect();
            let val_l: Vec<Labeled<'_>> = val_set.iter().map(SampleRecord::labeled).collect();
            let mut sink: Box<dyn Write> = match &log {
                Some(p) => Box::new(fs::File::create(p)?),
                None => Box::new(&mut *out),
            };
            let (net, history) = match resume {
                Some(p) => {
                    let net = checkpoint::load(&p)?;
                    ensure!(net.variant() == variant, "checkpoint is {}, not {variant}", net.variant());
                    dlimd_nn::train_from(net, &config, &train_l, &val_l, &mut sink)?
                }
                None => train(&config, &train_l, &val_l, &mut sink)?,
            };
            drop(sink);
            checkpoint::save(&net, &output)?;
            let last = history.last().context("no epochs were run")?;
            writeln!(
                out,
                "{}",
                metrics::machine_line(&[
                    ("epochs", history.len().to_string()),
                    ("loss", format!("{:.6}", last.loss)),
                    ("val_accuracy", format!("{:.4}", last.accuracy)),
                    ("digest", hex(&dataset::file_digest(&output)?)),
                ])
            )?;
        }
        Command::EvalAccuracy { checkpoint: ck, dataset: ds, confusion } => {
            let net = checkpoint::load(&ck)?;
            let records = dataset::read_dataset(&ds)?;
            ensure!(!records.is_empty(), "dataset {} is empty", ds.display());
            let set: Vec<Labeled<'_>> = records.iter().map(SampleRecord::labeled).collect();
            let preds = dlimd_nn::train::predict_all(&net, &set)?;
            let labels: Vec<usize> = set.iter().map(|e| e.label).collect();
            let report = AccuracyReport::new(&preds, &labels)?;
            write!(out, "{}", report.table())?;
            if let Some(path) = confusion {
                fs::write(path, report.confusion_csv())?;
            }
            let fields: Vec<(String, String)> =
                report.by_delta.iter().map(|(d, p)| (format!("p{d}"), format!("{p:.4}"))).collect();
            let fields: Vec<(&str, String)> = fields.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
            writeln!(out, "{}", metrics::machine_line(&fields))?;
        }
        Command::EvalCoding { frames, qps, partition, checkpoint, no_dlimd } => {
            let frames = frames.load()?;
            let model = match (&checkpoint, no_dlimd) {
                (Some(p), false) => Some(load_model(p)?),
                (_, true) => None,
                (None, false) => bail!("eval-coding needs --checkpoint unless --no-dlimd is given"),
            };
            let report = eval_coding(&frames, &qps, partition, model.as_ref(), jobs)?;
            write!(out, "{}", report.render()?)?;
        }
        Command::Flops { variant } => write!(out, "{}", flops_table(variant))?,
        Command::Synth { output, count, width, height, format } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames = synth::corpus(count, width, height, &mut rng)?;
            write_corpus(&frames, &output, format)?;
            writeln!(out, "{}", metrics::machine_line(&[("frames", frames.len().to_string())]))?;
        }
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<DlimdModel> {
    DlimdModel::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One sequence file for raw output, a directory of PGMs otherwise.
pub fn write_corpus(frames: &[Frame], output: &Path, format: FrameFormat) -> Result<()> {
    match format {
        FrameFormat::Raw420 => {
            let mut bytes = Vec::new();
            let tmp = output.with_extension("part");
            for f in frames {
                save_frame(f, &tmp, FrameFormat::Raw420)?;
                bytes.extend(fs::read(&tmp)?);
            }
            fs::remove_file(&tmp).ok();
            fs::write(output, bytes)?;
        }
        FrameFormat::Pnm => {
            fs::create_dir_all(output)?;
            for (i, f) in frames.iter().enumerate() {
                save_frame(f, &output.join(format!("frame_{i:04}.pgm")), FrameFormat::Pnm)?;
            }
        }
    }
    Ok(())
}

/// Layer name, exact FLOPs and the two-digit truncated value.
pub fn flops_rows(variant: Variant) -> Vec<(String, u64, String)> {
    let specs = variant.architecture().layer_specs();
    specs.iter().zip(flops(&specs)).map(|(s, f)| (s.name.clone(), f, short_flops(f))).collect()
}

pub fn flops_table(variant: Variant) -> String {
    let specs = variant.architecture().layer_specs();
    let mut s = format!("{:<6} {:<22} {:>13} {:>7}\n", "layer", "shape", "flops", "approx");
    let mut total = 0;
    for (spec, (name, f, short)) in specs.iter().zip(flops_rows(variant)) {
        let shape = match spec.kind {
            LayerKind::Conv { kernel, in_channels, out_channels, .. } => {
                format!("conv {kernel}x{kernel} {in_channels}->{out_channels}")
            }
            LayerKind::Full { inputs, outputs } => format!("fc {inputs}->{outputs}"),
        };
        s.push_str(&format!("{name:<6} {shape:<22} {f:>13} {short:>7}\n"));
        total += f;
    }
    s.push_str(&format!("{:<6} {:<22} {total:>13} {:>7}\n", "total", "", short_flops(total)));
    s
}

/// One QP of a coding comparison.
#[derive(Clone, Debug)]
pub struct QpResult {
    pub qp: u8,
    pub anchor: RdPoint,
    pub test: RdPoint,
    pub anchor_seconds: f64,
    pub test_seconds: f64,
    pub signaling: SignalingRow,
    /// Frames where the test arm costs more than the anchor (should be 0).
    pub cost_violations: usize,
}

#[derive(Clone, Debug)]
pub struct CodingReport {
    pub per_qp: Vec<QpResult>,
}

fn arm(frames: &[Frame], cfg: &RdConfig, model: Option<&DlimdModel>) -> Result<(Vec<Encoded>, f64)> {
    let start = Instant::now();
    let enc = frames.iter().map(|f| encode_frame(f, cfg, model)).collect::<dlimd_core::Result<Vec<_>>>()?;
    Ok((enc, start.elapsed().as_secs_f64()))
}

fn rd_point(frames: &[Frame], enc: &[Encoded]) -> Result<RdPoint> {
    let bits: u64 = enc.iter().map(|e| e.bitstream.len() as u64 * 8).sum();
    let mut sse = 0.0;
    let mut n = 0usize;
    for (f, e) in frames.iter().zip(enc) {
        sse += metrics::mse(f, &e.recon)? * f.samples().len() as f64;
        n += f.samples().len();
    }
    let mse = sse / n as f64;
    // Lossless frames are held at 100 dB so curves stay finite.
    let psnr = if mse == 0.0 { 100.0 } else { 10.0 * (255.0 * 255.0 / mse).log10() };
    Ok(RdPoint { rate: bits as f64, psnr })
}

fn qp_result(frames: &[Frame], qp: u8, partition: Partition, model: Option<&DlimdModel>) -> Result<QpResult> {
    let anchor_cfg = RdConfig::new(qp, partition, false)?;
    let (anchor, anchor_seconds) = arm(frames, &anchor_cfg, None)?;
    let test_cfg = RdConfig::new(qp, partition, model.is_some())?;
    let (test, test_seconds) = arm(frames, &test_cfg, model)?;
    let blocks = |enc: &[Encoded]| enc.iter().flat_map(|e| e.trace.iter().map(|t| t.block_bits())).collect::<Vec<_>>();
    let a = bpm_stats(&blocks(&anchor))?;
    let t = bpm_stats(&blocks(&test))?;
    let all_test: Vec<_> = test.iter().flat_map(|e| e.trace.iter().cloned()).collect();
    let alpha_prime = if model.is_some() { t.bpm + t.flag_bpm } else { t.bpm };
    Ok(QpResult {
        qp,
        anchor: rd_point(frames, &anchor)?,
        test: rd_point(frames, &test)?,
        anchor_seconds,
        test_seconds,
        signaling: SignalingRow {
            qp,
            alpha: a.bpm,
            alpha_prime,
            beta: a.beta,
            gamma: t.gamma,
            omega: metrics::omega(&all_test)?,
        },
        cost_violations: anchor.iter().zip(&test).filter(|(a, t)| t.cost > a.cost).count(),
    })
}

/// Codes `frames` at every QP with signaled modes only (anchor) and with
/// `model` deriving modes (test; signaled only again without a model).
pub fn eval_coding(
    frames: &[Frame],
    qps: &[u8],
    partition: Partition,
    model: Option<&DlimdModel>,
    jobs: usize,
) -> Result<CodingReport> {
    ensure!(!frames.is_empty(), "no frames to code");
    let mut slots: Vec<Option<Result<QpResult>>> = (0..qps.len()).map(|_| None).collect();
    let chunk = qps.len().div_ceil(jobs.max(1)).max(1);
    std::thread::scope(|s| {
        for (qs, out) in qps.chunks(chunk).zip(slots.chunks_mut(chunk)) {
            s.spawn(move || {
                for (&qp, slot) in qs.iter().zip(out) {
                    *slot = Some(qp_result(frames, qp, partition, model));
                }
            });
        }
    });
    let per_qp = slots.into_iter().map(|r| r.expect("every QP ran")).collect::<Result<Vec<_>>>()?;
    Ok(CodingReport { per_qp })
}

impl CodingReport {
    pub fn anchor_curve(&self) -> Vec<RdPoint> {
        sorted(self.per_qp.iter().map(|r| r.anchor).collect())
    }

    pub fn test_curve(&self) -> Vec<RdPoint> {
        sorted(self.per_qp.iter().map(|r| r.test).collect())
    }

    pub fn bd_rate(&self) -> Result<f64> {
        Ok(metrics::bd_rate(&self.anchor_curve(), &self.test_curve())?)
    }

    pub fn time_ratio(&self) -> Result<f64> {
        let a: Vec<f64> = self.per_qp.iter().map(|r| r.anchor_seconds).collect();
        let t: Vec<f64> = self.per_qp.iter().map(|r| r.test_seconds).collect();
        Ok(metrics::complexity_ratio(&a, &t)?)
    }

    pub fn render(&self) -> Result<String> {
        let rows: Vec<SignalingRow> = self.per_qp.iter().map(|r| r.signaling).collect();
        let mut s = metrics::signaling_table(&rows)?;
        for r in &self.per_qp {
            s.push_str(&metrics::machine_line(&[
                ("qp", r.qp.to_string()),
                ("alpha", format!("{:.4}", r.signaling.alpha)),
                ("alpha_prime", format!("{:.4}", r.signaling.alpha_prime)),
                ("eta_prime", format!("{:.4}", r.signaling.eta_prime()?)),
                ("omega", format!("{:.4}", r.signaling.omega)),
                ("anchor_bits", format!("{}", r.anchor.rate)),
                ("anchor_psnr", format!("{:.4}", r.anchor.psnr)),
                ("test_bits", format!("{}", r.test.rate)),
                ("test_psnr", format!("{:.4}", r.test.psnr)),
            ]));
            s.push('\n');
        }
        let bd = match self.bd_rate() {
            Ok(v) => format!("{v:.4}"),
            Err(e) => format!("n/a ({e})"),
        };
        s.push_str(&format!("BD-rate (%): {bd}\n"));
        s.push_str(&format!("time ratio: {:.3}\n", self.time_ratio()?));
        Ok(s)
    }
}

/// Sorted by rate, ties by PSNR.
fn sorted(mut v: Vec<RdPoint>) -> Vec<RdPoint> {
    v.sort_by(|a, b| a.rate.total_cmp(&b.rate).then(a.psnr.total_cmp(&b.psnr)));
    v
}

/// Balanced set of `labels x per_label` training and validation records,
/// extracted from a synthetic corpus of `frames` frames.
pub fn synthetic_dataset(
    frames: usize,
    size: u32,
    partition: Partition,
    per_label: usize,
    val_per_label: usize,
    seed: u64,
    jobs: usize,
) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus = synth::corpus(frames, size, size, &mut rng)?;
    let (records, _) = dataset::extract_samples(&corpus, &STANDARD_QPS, partition, RefSource::Recon, jobs)?;
    let balanced = dataset::balance(&records, per_label + val_per_label, seed, true)?;
    let (train_set, val_set) = dataset::split_validation(&balanced, val_per_label)?;
    Ok((train_set, val_set))
}
