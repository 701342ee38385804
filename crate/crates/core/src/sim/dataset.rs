//! Supervised training sets for the flip scorer and the flip validator, and
//! the `NFDS1` file format they are stored in.
//!
//! Header (little-endian):
//!
//! ```text
//! "NFDS1"        5 bytes
//! version        u8 (= 1)
//! kind           u8: 1 = flip scorer (f_dnc), 2 = flip validator (fv_dnc)
//! code digest    32 bytes, see PolarCode::digest
//! n              u32
//! list_size      u32
//! omega          u32
//! shape_p        f64
//! snr_db         f64
//! seed           u64
//! state_len      u32   (L + 1) N
//! label_len      u32   N for f_dnc, 1 for fv_dnc
//! ```
//!
//! Then fixed-width records until end of file: `frame_id: u64`,
//! `state: [f32; state_len]`, `label: [f32; label_len]`. Flip-scorer labels
//! are the dense LSD flip vector; validator labels are `0.0` (continue) or
//! `1.0` (re-select).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{frame_rng, make_frame, noise_sigma, run_batch, thread_pool, BATCH};
use crate::code::PolarCode;
use crate::decoder::{decode, DecoderConfig, FlipSpec};
use crate::error::{FlipError, SimError};
use crate::flip::{encode_state, lsd_flip_vector};
use crate::scorers::{genie_labels, GenieContext, LabelMode};

pub const DATASET_MAGIC: &[u8; 5] = b"NFDS1";
pub const DATASET_VERSION: u8 = 1;
/// Genie labels flipped one after another per validator frame.
pub const FV_LABELS: usize = 5;
/// Random wrong flips recorded after each correct prefix.
pub const FV_WRONG_FLIPS: usize = 5;

const HEADER_LEN: usize = 5 + 1 + 1 + 32 + 4 * 3 + 8 * 3 + 4 * 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    FDnc,
    FvDnc,
}

impl DatasetKind {
    fn tag(self) -> u8 {
        match self {
            DatasetKind::FDnc => 1,
            DatasetKind::FvDnc => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub kind: DatasetKind,
    pub code_digest: [u8; 32],
    pub n: u32,
    pub list_size: u32,
    pub omega: u32,
    pub shape_p: f64,
    pub snr_db: f64,
    pub seed: u64,
    pub state_len: u32,
    pub label_len: u32,
}

impl DatasetHeader {
    pub fn new(
        kind: DatasetKind,
        code: &PolarCode,
        list_size: usize,
        omega: usize,
        shape_p: f64,
        snr_db: f64,
        seed: u64,
    ) -> Self {
        let n = code.n_bits();
        Self {
            kind,
            code_digest: code.digest(),
            n: n as u32,
            list_size: list_size as u32,
            omega: omega as u32,
            shape_p,
            snr_db,
            seed,
            state_len: ((list_size + 1) * n) as u32,
            label_len: match kind {
                DatasetKind::FDnc => n as u32,
                DatasetKind::FvDnc => 1,
            },
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(HEADER_LEN);
        b.extend_from_slice(DATASET_MAGIC);
        b.push(DATASET_VERSION);
        b.push(self.kind.tag());
        b.extend_from_slice(&self.code_digest);
        for v in [self.n, self.list_size, self.omega] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&self.shape_p.to_le_bytes());
        b.extend_from_slice(&self.snr_db.to_le_bytes());
        b.extend_from_slice(&self.seed.to_le_bytes());
        b.extend_from_slice(&self.state_len.to_le_bytes());
        b.extend_from_slice(&self.label_len.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, SimError> {
        let bad = |m: &str| SimError::Dataset(m.to_string());
        if b.len() < HEADER_LEN {
            return Err(bad("truncated header"));
        }
        if &b[..5] != DATASET_MAGIC {
            return Err(bad("not an NFDS1 file"));
        }
        if b[5] != DATASET_VERSION {
            return Err(SimError::Dataset(format!("unsupported version {}", b[5])));
        }
        let kind = match b[6] {
            1 => DatasetKind::FDnc,
            2 => DatasetKind::FvDnc,
            k => return Err(SimError::Dataset(format!("unknown record kind {k}"))),
        };
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().expect("4 bytes"));
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().expect("8 bytes"));
        let mut code_digest = [0u8; 32];
        code_digest.copy_from_slice(&b[7..39]);
        let h = Self {
            kind,
            code_digest,
            n: u32_at(39),
            list_size: u32_at(43),
            omega: u32_at(47),
            shape_p: f64::from_bits(u64_at(51)),
            snr_db: f64::from_bits(u64_at(59)),
            seed: u64_at(67),
            state_len: u32_at(75),
            label_len: u32_at(79),
        };
        if h.state_len != (h.list_size + 1) * h.n {
            return Err(bad("state length disagrees with N and L"));
        }
        Ok(h)
    }

    fn record_len(&self) -> usize {
        8 + 4 * (self.state_len as usize + self.label_len as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub frame_id: u64,
    pub state: Vec<f32>,
    pub label: Vec<f32>,
}

pub struct DatasetWriter<W: Write> {
    out: W,
    header: DatasetHeader,
    records: u64,
}

impl DatasetWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: DatasetHeader) -> Result<Self, SimError> {
        Self::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(mut out: W, header: DatasetHeader) -> Result<Self, SimError> {
        out.write_all(&header.to_bytes())?;
        Ok(Self {
            out,
            header,
            records: 0,
        })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    pub fn write(&mut self, r: &TrainingRecord) -> Result<(), SimError> {
        if r.state.len() != self.header.state_len as usize
            || r.label.len() != self.header.label_len as usize
        {
            return Err(SimError::Dataset(format!(
                "record has {} state and {} label values, header declares {} and {}",
                r.state.len(),
                r.label.len(),
                self.header.state_len,
                self.header.label_len
            )));
        }
        let mut buf = Vec::with_capacity(self.header.record_len());
        buf.extend_from_slice(&r.frame_id.to_le_bytes());
        for v in r.state.iter().chain(&r.label) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.out.write_all(&buf)?;
        self.records += 1;
        Ok(())
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn finish(mut self) -> Result<W, SimError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub struct DatasetReader<R: Read> {
    input: R,
    header: DatasetHeader,
}

impl DatasetReader<BufReader<File>> {
    /// Opens `path`; with `code` given, rejects files made for another code.
    pub fn open(path: &Path, code: Option<&PolarCode>) -> Result<Self, SimError> {
        Self::new(BufReader::new(File::open(path)?), code)
    }
}

impl<R: Read> DatasetReader<R> {
    pub fn new(mut input: R, code: Option<&PolarCode>) -> Result<Self, SimError> {
        let mut head = vec![0u8; HEADER_LEN];
        input
            .read_exact(&mut head)
            .map_err(|_| SimError::Dataset("truncated header".into()))?;
        let header = DatasetHeader::from_bytes(&head)?;
        if let Some(code) = code {
            if header.code_digest != code.digest() || header.n as usize != code.n_bits() {
                return Err(SimError::Dataset(
                    "dataset was generated for a different code".into(),
                ));
            }
        }
        Ok(Self { input, header })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    /// Next record, `None` at a clean end of file.
    pub fn next_record(&mut self) -> Result<Option<TrainingRecord>, SimError> {
        let mut buf = vec![0u8; self.header.record_len()];
        let mut filled = 0;
        while filled < buf.len() {
            match self.input.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(k) => filled += k,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        if filled == 0 {
            return Ok(None);
        }
        if filled < buf.len() {
            return Err(SimError::Dataset("truncated record".into()));
        }
        let frame_id = u64::from_le_bytes(buf[..8].try_into().expect("8 bytes"));
        let floats: Vec<f32> = buf[8..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let (state, label) = floats.split_at(self.header.state_len as usize);
        Ok(Some(TrainingRecord {
            frame_id,
            state: state.to_vec(),
            label: label.to_vec(),
        }))
    }
}

/// Reads a whole dataset file.
pub fn read_dataset(
    path: &Path,
    code: Option<&PolarCode>,
) -> Result<(DatasetHeader, Vec<TrainingRecord>), SimError> {
    let mut r = DatasetReader::open(path, code)?;
    let mut records = Vec::new();
    while let Some(rec) = r.next_record()? {
        records.push(rec);
    }
    Ok((r.header, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub snr_db: f64,
    pub seed: u64,
    /// Records to write.
    pub count: u64,
    /// Give up after this many simulated frames.
    pub max_frames: u64,
    pub decoder: DecoderConfig,
    /// Genie labels per flip-scorer record.
    pub omega: usize,
    pub shape_p: f64,
    #[serde(skip)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: u64,
    pub frames_simulated: u64,
    pub error_frames: u64,
}

fn check_config(cfg: &DatasetConfig) -> Result<(), SimError> {
    if cfg.decoder.list_size == 0 {
        return Err(SimError::Config("list size must be at least 1".into()));
    }
    if cfg.omega == 0 {
        return Err(SimError::Config("omega must be at least 1".into()));
    }
    if !(cfg.shape_p > 0.0 && cfg.shape_p < 1.0) {
        return Err(SimError::Config(format!(
            "p = {} outside (0, 1)",
            cfg.shape_p
        )));
    }
    Ok(())
}

fn state_of(st: &crate::decoder::DecoderState, list_size: usize) -> Result<Vec<f32>, SimError> {
    Ok(encode_state(st, list_size)
        .map_err(|e: FlipError| SimError::Scorer(e.into()))?
        .into_values())
}

/// Drives `per_frame` over frames in order until `cfg.count` records exist.
fn generate<W, F>(
    code: &PolarCode,
    cfg: &DatasetConfig,
    out: &mut DatasetWriter<W>,
    per_frame: F,
) -> Result<DatasetSummary, SimError>
where
    W: Write,
    F: Fn(u64) -> Result<Vec<TrainingRecord>, SimError> + Sync,
{
    check_config(cfg)?;
    let h = out.header();
    if h.code_digest != code.digest() || h.list_size as usize != cfg.decoder.list_size {
        return Err(SimError::Config(
            "dataset header does not match the code or list size".into(),
        ));
    }
    let pool = thread_pool(cfg.threads)?;
    let mut s = DatasetSummary {
        records: 0,
        frames_simulated: 0,
        error_frames: 0,
    };
    'outer: while s.records < cfg.count && s.frames_simulated < cfg.max_frames {
        let len = BATCH.min(cfg.max_frames - s.frames_simulated);
        for recs in run_batch(&pool, s.frames_simulated, len, &per_frame) {
            s.frames_simulated += 1;
            let recs = recs?;
            if !recs.is_empty() {
                s.error_frames += 1;
            }
            for r in recs {
                out.write(&r)?;
                s.records += 1;
                if s.records == cfg.count {
                    break 'outer;
                }
            }
        }
    }
    Ok(s)
}

/// Flip-scorer records: for every frame the decoder gets wrong, the state of
/// the failed decode and the LSD flip vector over its iterative-genie labels.
pub fn generate_f_dnc_dataset<W: Write>(
    code: &PolarCode,
    cfg: &DatasetConfig,
    out: &mut DatasetWriter<W>,
) -> Result<DatasetSummary, SimError> {
    let sigma = noise_sigma(code, cfg.snr_db);
    let n = code.n_bits();
    generate(code, cfg, out, |id| {
        let frame = make_frame(code, sigma, id, &mut frame_rng(cfg.seed, cfg.snr_db, id));
        let none = FlipSpec::none();
        let st = decode(code, &frame.llrs, &cfg.decoder, &none)?;
        if st.passed_crc() {
            return Ok(Vec::new());
        }
        let ctx = GenieContext {
            true_u: frame.u.clone(),
            max_labels: cfg.omega,
        };
        let labels = genie_labels(code, &cfg.decoder, &st, &none, &ctx, LabelMode::Iterative)?;
        if labels.positions.is_empty() {
            return Ok(Vec::new());
        }
        let plan = lsd_flip_vector(&labels.positions, cfg.shape_p)
            .map_err(|e| SimError::Scorer(e.into()))?;
        let label = plan.to_dense(n).iter().map(|&v| v as f32).collect();
        Ok(vec![TrainingRecord {
            frame_id: id,
            state: state_of(&st, cfg.decoder.list_size)?,
            label,
        }])
    })
}

/// Flip-validator records. For every failed frame with genie labels
/// `l_1 .. l_m` (`m <= 5`) and every `k <= m`: the state after flipping
/// `l_1 .. l_k` (continue), then the states after flipping `l_1 .. l_k` plus
/// one random non-label free position, five times (re-select).
pub fn generate_fv_dnc_dataset<W: Write>(
    code: &PolarCode,
    cfg: &DatasetConfig,
    out: &mut DatasetWriter<W>,
) -> Result<DatasetSummary, SimError> {
    let sigma = noise_sigma(code, cfg.snr_db);
    generate(code, cfg, out, |id| {
        let mut rng = frame_rng(cfg.seed, cfg.snr_db, id);
        let frame = make_frame(code, sigma, id, &mut rng);
        let none = FlipSpec::none();
        let st = decode(code, &frame.llrs, &cfg.decoder, &none)?;
        if st.passed_crc() {
            return Ok(Vec::new());
        }
        let ctx = GenieContext {
            true_u: frame.u.clone(),
            max_labels: FV_LABELS,
        };
        let labels =
            genie_labels(code, &cfg.decoder, &st, &none, &ctx, LabelMode::Iterative)?.positions;
        let wrong: Vec<usize> = code
            .free_positions()
            .iter()
            .copied()
            .filter(|p| !labels.contains(p))
            .collect();
        let mut records = Vec::with_capacity(labels.len() * (1 + FV_WRONG_FLIPS));
        for k in 1..=labels.len() {
            let prefix = &labels[..k];
            let st = decode(
                code,
                &frame.llrs,
                &cfg.decoder,
                &FlipSpec::new(prefix.to_vec()),
            )?;
            records.push(TrainingRecord {
                frame_id: id,
                state: state_of(&st, cfg.decoder.list_size)?,
                label: vec![0.0],
            });
            if wrong.is_empty() {
                continue;
            }
            for _ in 0..FV_WRONG_FLIPS {
                let w = wrong[rng.random_range(0..wrong.len())];
                let mut flips = prefix.to_vec();
                flips.push(w);
                let st = decode(code, &frame.llrs, &cfg.decoder, &FlipSpec::new(flips))?;
                records.push(TrainingRecord {
                    frame_id: id,
                    state: state_of(&st, cfg.decoder.list_size)?,
                    label: vec![1.0],
                });
            }
        }
        Ok(records)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(count: u64) -> DatasetConfig {
        DatasetConfig {
            snr_db: 1.0,
            seed: 5,
            count,
            max_frames: 1_000_000,
            decoder: DecoderConfig::sc(),
            omega: 5,
            shape_p: 0.8,
            threads: 1,
        }
    }

    #[test]
    fn header_round_trip() {
        let code = PolarCode::ga(64, 32, 2.0).unwrap();
        let h = DatasetHeader::new(DatasetKind::FvDnc, &code, 2, 5, 0.8, 2.0, 42);
        let b = h.to_bytes();
        assert_eq!(b.len(), HEADER_LEN);
        assert_eq!(DatasetHeader::from_bytes(&b).unwrap(), h);
        assert_eq!(h.state_len, 192);
        assert_eq!(h.label_len, 1);
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(DatasetHeader::from_bytes(&bad).is_err());
        assert!(DatasetHeader::from_bytes(&b[..40]).is_err());
    }

    #[test]
    fn f_dnc_records_carry_normalized_labels() {
        let code = PolarCode::ga(64, 32, 2.0).unwrap();
        let c = cfg(25);
        let mut w = DatasetWriter::new(
            Vec::new(),
            DatasetHeader::new(DatasetKind::FDnc, &code, 1, 5, 0.8, 1.0, 5),
        )
        .unwrap();
        let s = generate_f_dnc_dataset(&code, &c, &mut w).unwrap();
        assert_eq!(s.records, 25);
        let bytes = w.finish().unwrap();
        let mut r = DatasetReader::new(&bytes[..], Some(&code)).unwrap();
        let mut n = 0;
        while let Some(rec) = r.next_record().unwrap() {
            let sum: f64 = rec.label.iter().map(|&v| v as f64).sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert_eq!(rec.state.len(), 128);
            n += 1;
        }
        assert_eq!(n, 25);
        let other = PolarCode::ga(64, 31, 2.0).unwrap();
        assert!(DatasetReader::new(&bytes[..], Some(&other)).is_err());
        assert!(DatasetReader::new(&bytes[..bytes.len() - 3], None)
            .unwrap()
            .next_record()
            .is_ok());
    }

    #[test]
    fn truncated_record_is_an_error() {
        let code = PolarCode::ga(64, 32, 2.0).unwrap();
        let mut w = DatasetWriter::new(
            Vec::new(),
            DatasetHeader::new(DatasetKind::FDnc, &code, 1, 5, 0.8, 1.0, 5),
        )
        .unwrap();
        generate_f_dnc_dataset(&code, &cfg(2), &mut w).unwrap();
        let bytes = w.finish().unwrap();
        let mut r = DatasetReader::new(&bytes[..bytes.len() - 3], None).unwrap();
        assert!(r.next_record().unwrap().is_some());
        assert!(r.next_record().is_err());
    }

    #[test]
    fn fv_dnc_ratio_per_frame() {
        let code = PolarCode::ga(64, 32, 2.0).unwrap();
        let mut w = DatasetWriter::new(
            Vec::new(),
            DatasetHeader::new(DatasetKind::FvDnc, &code, 1, 5, 0.8, 1.0, 5),
        )
        .unwrap();
        let s = generate_fv_dnc_dataset(&code, &cfg(300), &mut w).unwrap();
        assert_eq!(s.records, 300);
        let bytes = w.finish().unwrap();
        let mut r = DatasetReader::new(&bytes[..], None).unwrap();
        let mut per_frame: std::collections::BTreeMap<u64, (usize, usize)> = Default::default();
        while let Some(rec) = r.next_record().unwrap() {
            let e = per_frame.entry(rec.frame_id).or_default();
            if rec.label[0] == 0.0 {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
        let last = *per_frame.keys().last().unwrap();
        for (id, (c, r)) in per_frame {
            if id != last {
                assert!((1..=5).contains(&c));
                assert_eq!(r, 5 * c);
            }
        }
    }
}
