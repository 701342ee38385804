//! Frame/bit error rate sweeps with decoding-attempt statistics.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    frame_rng, make_frame, noise_sigma, run_batch, thread_pool, FrameOutcome, PreparedDecoder,
    BATCH,
};
use crate::code::PolarCode;
use crate::error::SimError;
use crate::flip::{Outcome, Phase};

/// Stop a point after `max_errors` frame errors or `max_frames` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_errors: u64,
    pub max_frames: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_errors: 100,
            max_frames: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub snrs: Vec<f64>,
    pub seed: u64,
    pub stop: StopRule,
    /// Worker threads; does not influence results.
    #[serde(skip)]
    pub threads: usize,
}

/// Counters of one SNR point.
///
/// Attempt statistics cover flip-triggered frames (initial decode failed):
/// `t_avg` is their mean number of decodes after the initial one, `beta1` the
/// fraction decoded by the Phase-I attempt, and `omega2_avg` the mean
/// number of post-initial decodes among the others. By construction
/// `t_avg = beta1 + omega2_avg (1 - beta1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub snr_db: f64,
    pub frames: u64,
    pub frame_errors: u64,
    pub bit_errors: u64,
    pub info_bits: usize,
    /// `attempt_hist[a]` frames needed `a` decodes.
    pub attempt_hist: Vec<u64>,
    pub flip_frames: u64,
    pub phase_one_successes: u64,
    pub flip_attempts: u64,
    /// Post-initial decodes of flip-triggered frames not rescued by Phase I.
    pub flip_attempts_after_phase_one: u64,
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if k == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if k == n {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

impl PointStats {
    fn new(snr_db: f64, info_bits: usize) -> Self {
        Self {
            snr_db,
            frames: 0,
            frame_errors: 0,
            bit_errors: 0,
            info_bits,
            attempt_hist: Vec::new(),
            flip_frames: 0,
            phase_one_successes: 0,
            flip_attempts: 0,
            flip_attempts_after_phase_one: 0,
        }
    }

    fn add(&mut self, bit_errors: u64, outcome: &FrameOutcome) {
        self.frames += 1;
        self.bit_errors += bit_errors;
        if bit_errors > 0 {
            self.frame_errors += 1;
        }
        let a = outcome.attempts();
        if self.attempt_hist.len() <= a {
            self.attempt_hist.resize(a + 1, 0);
        }
        self.attempt_hist[a] += 1;
        if let Some(log) = &outcome.log {
            if log.outcome != Outcome::Success(Phase::Initial) {
                self.flip_frames += 1;
                let extra = log.flip_attempts() as u64;
                self.flip_attempts += extra;
                if log.outcome == Outcome::Success(Phase::PhaseOne) {
                    self.phase_one_successes += 1;
                } else {
                    self.flip_attempts_after_phase_one += extra;
                }
            }
        }
    }

    pub fn fer(&self) -> f64 {
        ratio(self.frame_errors, self.frames)
    }

    pub fn ber(&self) -> f64 {
        ratio(self.bit_errors, self.frames * self.info_bits as u64)
    }

    pub fn fer_interval(&self) -> (f64, f64) {
        wilson_interval(self.frame_errors, self.frames)
    }

    pub fn max_attempts(&self) -> usize {
        self.attempt_hist.iter().rposition(|&c| c > 0).unwrap_or(0)
    }

    pub fn t_avg(&self) -> f64 {
        ratio(self.flip_attempts, self.flip_frames)
    }

    pub fn beta1(&self) -> f64 {
        ratio(self.phase_one_successes, self.flip_frames)
    }

    pub fn omega2_avg(&self) -> f64 {
        ratio(
            self.flip_attempts_after_phase_one,
            self.flip_frames - self.phase_one_successes,
        )
    }

    fn tsv_row(&self) -> String {
        let (lo, hi) = self.fer_interval();
        let hist: Vec<String> = self
            .attempt_hist
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(a, c)| format!("{a}:{c}"))
            .collect();
        format!(
            "{}\t{}\t{}\t{}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            self.snr_db,
            self.frames,
            self.frame_errors,
            self.bit_errors,
            self.fer(),
            lo,
            hi,
            self.ber(),
            self.flip_frames,
            self.t_avg(),
            self.beta1(),
            self.omega2_avg(),
            self.max_attempts(),
            hist.join(",")
        )
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

const TSV_HEADER: &str = "snr_db\tframes\tframe_errors\tbit_errors\tfer\tfer_lo95\tfer_hi95\tber\tflip_frames\tt_avg\tbeta1\tomega2_avg\tmax_attempts\tattempt_hist";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    /// `# key: value` lines describing the run.
    pub preamble: Vec<String>,
    pub points: Vec<PointStats>,
}

impl ExperimentResult {
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for line in &self.preamble {
            let _ = writeln!(s, "# {line}");
        }
        let _ = writeln!(s, "{TSV_HEADER}");
        for p in &self.points {
            let _ = writeln!(s, "{}", p.tsv_row());
        }
        s
    }
}

fn preamble(code: &PolarCode, decoder: &PreparedDecoder, cfg: &SweepConfig) -> Vec<String> {
    vec![
        "polarflip FER sweep".to_string(),
        format!(
            "code: N={} K={} crc={}:{:#06x}:{:#x} design_snr_db={} digest={}",
            code.n_bits(),
            code.k_info(),
            code.crc_len(),
            code.crc().poly(),
            code.crc().init(),
            code.design_snr_db(),
            code.digest_hex()
        ),
        format!("decoder: {}", serde_json::to_string(decoder.setup()).expect("setup serializes")),
        "channel: BPSK over AWGN, SNR = Eb/N0 (dB), sigma^2 = 1/(2 R 10^(snr/10)), LLR = 2y/sigma^2".to_string(),
        format!("seed: {}", cfg.seed),
        format!("stop: {} frame errors or {} frames", cfg.stop.max_errors, cfg.stop.max_frames),
        "confidence: 95% Wilson score interval on FER".to_string(),
        "attempts: t_avg, beta1 and omega2_avg count decodes after the initial one, over flip-triggered frames"
            .to_string(),
    ]
}

/// Simulates every SNR of `cfg`. When `sink` is given, the preamble and each
/// finished row are written (and flushed) to it as the sweep progresses.
pub fn run_fer_sweep(
    code: &PolarCode,
    decoder: &PreparedDecoder,
    cfg: &SweepConfig,
    mut sink: Option<&mut dyn Write>,
) -> Result<ExperimentResult, SimError> {
    let pool = thread_pool(cfg.threads)?;
    let mut result = ExperimentResult {
        preamble: preamble(code, decoder, cfg),
        points: Vec::new(),
    };
    if let Some(out) = sink.as_mut() {
        for line in &result.preamble {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "{TSV_HEADER}")?;
        out.flush()?;
    }
    let bound = decoder.setup().max_attempts();
    for &snr in &cfg.snrs {
        let sigma = noise_sigma(code, snr);
        let mut stats = PointStats::new(snr, code.k_info());
        'point: while stats.frames < cfg.stop.max_frames && stats.frame_errors < cfg.stop.max_errors
        {
            let len = BATCH.min(cfg.stop.max_frames - stats.frames);
            let batch = run_batch(&pool, stats.frames, len, |id| {
                let frame = make_frame(code, sigma, id, &mut frame_rng(cfg.seed, snr, id));
                let out = decoder.decode_frame(code, &frame)?;
                let wrong = code
                    .message(&out.decisions)
                    .iter()
                    .zip(&frame.message)
                    .filter(|(a, b)| a != b)
                    .count();
                Ok((wrong as u64, out))
            });
            for r in batch {
                let (wrong, out) = r?;
                assert!(
                    out.attempts() <= bound,
                    "frame used {} decodes, bound is {bound}",
                    out.attempts()
                );
                stats.add(wrong, &out);
                if stats.frame_errors >= cfg.stop.max_errors {
                    break 'point;
                }
            }
        }
        if let Some(out) = sink.as_mut() {
            writeln!(out, "{}", stats.tsv_row())?;
            out.flush()?;
        }
        log::info!(
            "snr {snr} dB: {} frames, {} errors",
            stats.frames,
            stats.frame_errors
        );
        result.points.push(stats);
    }
    Ok(result)
}
