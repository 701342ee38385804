//! BPSK/AWGN channel, per-frame decoding pipelines and Monte-Carlo drivers.
//!
//! Every frame draws its randomness from its own ChaCha8 stream, keyed by the
//! run seed, the SNR and the frame id. Frames are decoded in parallel batches
//! and merged in frame order, so results do not depend on the thread count.

mod accuracy;
mod dataset;
mod fer;

pub use accuracy::{run_identification_accuracy, AccuracyConfig, AccuracyResult, RankRate};
pub use dataset::{
    generate_f_dnc_dataset, generate_fv_dnc_dataset, read_dataset, DatasetConfig, DatasetHeader,
    DatasetKind, DatasetReader, DatasetSummary, DatasetWriter, TrainingRecord, DATASET_MAGIC,
    DATASET_VERSION, FV_LABELS, FV_WRONG_FLIPS,
};
pub use fer::{
    run_fer_sweep, wilson_interval, ExperimentResult, PointStats, StopRule, SweepConfig,
};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::code::PolarCode;
use crate::decoder::{decode, DecoderConfig, FlipSpec, LlrWord};
use crate::error::{ScorerError, SimError};
use crate::flip::{
    decode_two_phase, AttemptLog, FlipScorer, FlipValidator, FvAction, TwoPhaseConfig,
    DEFAULT_ALPHA,
};
use crate::kernels::CheckKernel;
use crate::scorers::{
    ConstantValidator, ExternalScorer, GenieContext, GenieScorer, GenieValidator, HeuristicScorer,
    LabelMode, ModelBundle, NeuralFlipScorer, NeuralValidator,
};

/// Code rate used for the noise variance: `K / N`, or `(K + crc) / N` when
/// `K = 0`.
fn energy_rate(code: &PolarCode) -> f64 {
    let k = if code.k_info() > 0 {
        code.k_info()
    } else {
        code.k_info() + code.crc_len()
    };
    k as f64 / code.n_bits() as f64
}

/// `sigma` with `sigma^2 = 1 / (2 R 10^(snr/10))`, SNR as Eb/N0 in dB.
pub fn noise_sigma(code: &PolarCode, snr_db: f64) -> f64 {
    (1.0 / (2.0 * energy_rate(code) * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Random stream of frame `frame_id` at `snr_db` in a run seeded with `seed`.
pub fn frame_rng(seed: u64, snr_db: f64, frame_id: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&snr_db.to_bits().to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(frame_id);
    rng
}

/// Maps `x` to BPSK (`0 -> +1`), adds noise and returns `2y / sigma^2`.
pub fn transmit<R: Rng>(codeword: &[u8], sigma: f64, rng: &mut R) -> LlrWord {
    let scale = 2.0 / (sigma * sigma);
    codeword
        .iter()
        .map(|&b| {
            let s = if b == 0 { 1.0 } else { -1.0 };
            scale * (s + sigma * rng.sample::<f64, _>(StandardNormal))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: u64,
    pub message: Vec<u8>,
    pub u: Vec<u8>,
    pub llrs: LlrWord,
}

/// Draws message and noise for one frame; `rng` is left positioned after the
/// noise samples.
pub fn make_frame(code: &PolarCode, sigma: f64, id: u64, rng: &mut ChaCha8Rng) -> Frame {
    let message: Vec<u8> = (0..code.k_info())
        .map(|_| rng.random::<bool>() as u8)
        .collect();
    let u = code.u_from_message(&message).expect("message has K bits");
    let x = code.encode(&u).expect("u respects the frozen set");
    let llrs = transmit(&x.0, sigma, rng);
    Frame {
        id,
        message,
        u,
        llrs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    Sc,
    Scl,
    /// Two-phase flip decoding around SC.
    DncScf,
    /// Two-phase flip decoding around SCL.
    DncSclf,
}

impl DecoderKind {
    pub fn uses_flips(self) -> bool {
        matches!(self, DecoderKind::DncScf | DecoderKind::DncSclf)
    }
}

impl FromStr for DecoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sc" => Ok(Self::Sc),
            "scl" => Ok(Self::Scl),
            "dnc-scf" => Ok(Self::DncScf),
            "dnc-sclf" => Ok(Self::DncSclf),
            _ => Err(format!(
                "unknown decoder {s:?} (expected sc, scl, dnc-scf or dnc-sclf)"
            )),
        }
    }
}

/// Flip scorer selection: `genie`, `genie-direct`, `heuristic`, `model:PATH`
/// or `external:COMMAND`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScorerChoice {
    Genie(LabelMode),
    Heuristic,
    Model(PathBuf),
    External(String),
}

/// Flip validator selection: `genie`, `continue`, `reselect`, `model:PATH` or
/// `external:COMMAND`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ValidatorChoice {
    Genie,
    Constant(FvAction),
    Model(PathBuf),
    External(String),
}

fn split_prefixed(s: &str) -> Option<(&str, &str)> {
    let (head, rest) = s.split_once(':')?;
    if rest.is_empty() {
        return None;
    }
    Some((head, rest))
}

impl FromStr for ScorerChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "genie" => return Ok(Self::Genie(LabelMode::Iterative)),
            "genie-direct" => return Ok(Self::Genie(LabelMode::Direct)),
            "heuristic" => return Ok(Self::Heuristic),
            _ => {}
        }
        match split_prefixed(s) {
            Some(("model", path)) => Ok(Self::Model(PathBuf::from(path))),
            Some(("external", cmd)) => Ok(Self::External(cmd.to_string())),
            _ => Err(format!(
                "unknown scorer {s:?} (expected genie, genie-direct, heuristic, model:PATH or external:COMMAND)"
            )),
        }
    }
}

impl fmt::Display for ScorerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Genie(LabelMode::Iterative) => f.write_str("genie"),
            Self::Genie(LabelMode::Direct) => f.write_str("genie-direct"),
            Self::Heuristic => f.write_str("heuristic"),
            Self::Model(p) => write!(f, "model:{}", p.display()),
            Self::External(c) => write!(f, "external:{c}"),
        }
    }
}

impl FromStr for ValidatorChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "genie" => return Ok(Self::Genie),
            "continue" => return Ok(Self::Constant(FvAction::Continue)),
            "reselect" | "re-select" => return Ok(Self::Constant(FvAction::Reselect)),
            _ => {}
        }
        match split_prefixed(s) {
            Some(("model", path)) => Ok(Self::Model(PathBuf::from(path))),
            Some(("external", cmd)) => Ok(Self::External(cmd.to_string())),
            _ => Err(format!(
                "unknown flip validator {s:?} (expected genie, continue, reselect, model:PATH or external:COMMAND)"
            )),
        }
    }
}

impl fmt::Display for ValidatorChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Genie => f.write_str("genie"),
            Self::Constant(FvAction::Continue) => f.write_str("continue"),
            Self::Constant(FvAction::Reselect) => f.write_str("reselect"),
            Self::Model(p) => write!(f, "model:{}", p.display()),
            Self::External(c) => write!(f, "external:{c}"),
        }
    }
}

macro_rules! string_conversions {
    ($t:ty) => {
        impl TryFrom<String> for $t {
            type Error = String;
            fn try_from(s: String) -> Result<Self, String> {
                s.parse()
            }
        }
        impl From<$t> for String {
            fn from(v: $t) -> String {
                v.to_string()
            }
        }
    };
}
string_conversions!(ScorerChoice);
string_conversions!(ValidatorChoice);

/// Everything that determines how one frame is decoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderSetup {
    pub kind: DecoderKind,
    /// List size for `scl` and `dnc-sclf`; SC-based kinds always use 1.
    pub list_size: usize,
    pub kernel: CheckKernel,
    pub omega: usize,
    pub shape_p: f64,
    pub alpha: f64,
    pub scorer: Option<ScorerChoice>,
    pub validator: Option<ValidatorChoice>,
}

impl DecoderSetup {
    pub fn sc() -> Self {
        Self {
            kind: DecoderKind::Sc,
            list_size: 1,
            kernel: CheckKernel::Exact,
            omega: 5,
            shape_p: 0.8,
            alpha: DEFAULT_ALPHA,
            scorer: None,
            validator: None,
        }
    }

    pub fn scl(list_size: usize) -> Self {
        Self {
            kind: DecoderKind::Scl,
            list_size,
            ..Self::sc()
        }
    }

    /// Two-phase flip decoding; `list_size == 1` selects the SC variant.
    pub fn flip(
        list_size: usize,
        omega: usize,
        scorer: ScorerChoice,
        validator: ValidatorChoice,
    ) -> Self {
        let kind = if list_size == 1 {
            DecoderKind::DncScf
        } else {
            DecoderKind::DncSclf
        };
        Self {
            kind,
            list_size,
            omega,
            scorer: Some(scorer),
            validator: Some(validator),
            ..Self::sc()
        }
    }

    pub fn decoder_config(&self) -> DecoderConfig {
        let list_size = match self.kind {
            DecoderKind::Sc | DecoderKind::DncScf => 1,
            DecoderKind::Scl | DecoderKind::DncSclf => self.list_size,
        };
        DecoderConfig {
            list_size,
            kernel: self.kernel,
        }
    }

    /// Most decoding attempts a frame can take.
    pub fn max_attempts(&self) -> usize {
        if self.kind.uses_flips() {
            2 + self.omega
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.decoder_config().list_size == 0 {
            return bad("list size must be at least 1".into());
        }
        if self.kind.uses_flips() {
            if self.scorer.is_none() {
                return bad(format!("{:?} needs a flip scorer", self.kind));
            }
            if self.validator.is_none() {
                return bad(format!("{:?} needs a flip validator", self.kind));
            }
            if self.omega == 0 {
                return bad("omega must be at least 1".into());
            }
            if !(self.shape_p > 0.0 && self.shape_p < 1.0) {
                return bad(format!("p = {} outside (0, 1)", self.shape_p));
            }
            if !(0.0..1.0).contains(&self.alpha) {
                return bad(format!("alpha = {} outside [0, 1)", self.alpha));
            }
        }
        Ok(())
    }
}

/// Flip scorer that may need per-frame knowledge.
#[derive(Clone)]
pub(crate) enum FlipSource {
    Genie(LabelMode),
    Shared(Arc<dyn FlipScorer>),
}

#[derive(Clone)]
pub(crate) enum ValidatorSource {
    Genie,
    Shared(Arc<dyn FlipValidator>),
}

pub(crate) fn prepare_scorer(
    choice: &ScorerChoice,
    code: &PolarCode,
    decoder: &DecoderConfig,
    omega: usize,
    shape_p: f64,
) -> Result<FlipSource, ScorerError> {
    Ok(match choice {
        ScorerChoice::Genie(mode) => FlipSource::Genie(*mode),
        ScorerChoice::Heuristic => FlipSource::Shared(Arc::new(HeuristicScorer { omega, shape_p })),
        ScorerChoice::Model(path) => {
            let bundle = ModelBundle::load(path)?;
            FlipSource::Shared(Arc::new(NeuralFlipScorer::new(
                &bundle,
                code,
                decoder.list_size,
                omega,
            )?))
        }
        ScorerChoice::External(cmd) => {
            FlipSource::Shared(Arc::new(ExternalScorer::spawn_command_line(cmd)?))
        }
    })
}

fn prepare_validator(
    choice: &ValidatorChoice,
    code: &PolarCode,
    decoder: &DecoderConfig,
) -> Result<ValidatorSource, ScorerError> {
    Ok(match choice {
        ValidatorChoice::Genie => ValidatorSource::Genie,
        ValidatorChoice::Constant(a) => ValidatorSource::Shared(Arc::new(ConstantValidator(*a))),
        ValidatorChoice::Model(path) => {
            let bundle = ModelBundle::load(path)?;
            ValidatorSource::Shared(Arc::new(NeuralValidator::new(
                &bundle,
                code,
                decoder.list_size,
            )?))
        }
        ValidatorChoice::External(cmd) => {
            ValidatorSource::Shared(Arc::new(ExternalScorer::spawn_command_line(cmd)?))
        }
    })
}

impl FlipSource {
    pub(crate) fn for_frame<'a>(
        &'a self,
        frame: &Frame,
        decoder: DecoderConfig,
        max_labels: usize,
        shape_p: f64,
    ) -> Box<dyn FlipScorer + 'a> {
        match self {
            FlipSource::Genie(mode) => Box::new(
                GenieScorer::new(
                    GenieContext {
                        true_u: frame.u.clone(),
                        max_labels,
                    },
                    decoder,
                    shape_p,
                )
                .with_mode(*mode),
            ),
            FlipSource::Shared(s) => Box::new(s.as_ref()),
        }
    }
}

impl ValidatorSource {
    fn for_frame<'a>(&'a self, frame: &Frame) -> Box<dyn FlipValidator + 'a> {
        match self {
            ValidatorSource::Genie => Box::new(GenieValidator {
                true_u: frame.u.clone(),
            }),
            ValidatorSource::Shared(s) => Box::new(s.as_ref()),
        }
    }
}

/// A [`DecoderSetup`] with its scorers loaded (models read, processes spawned).
#[derive(Clone)]
pub struct PreparedDecoder {
    setup: DecoderSetup,
    flip: Option<(FlipSource, ValidatorSource)>,
}

/// Result of decoding one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub decisions: Vec<u8>,
    /// Present for flip decoders.
    pub log: Option<AttemptLog>,
}

impl FrameOutcome {
    pub fn attempts(&self) -> usize {
        self.log.as_ref().map_or(1, |l| l.attempt_count())
    }
}

impl PreparedDecoder {
    pub fn new(code: &PolarCode, setup: DecoderSetup) -> Result<Self, SimError> {
        setup.validate()?;
        let flip = if setup.kind.uses_flips() {
            let cfg = setup.decoder_config();
            let scorer = prepare_scorer(
                setup.scorer.as_ref().expect("validated"),
                code,
                &cfg,
                setup.omega,
                setup.shape_p,
            )?;
            let validator =
                prepare_validator(setup.validator.as_ref().expect("validated"), code, &cfg)?;
            Some((scorer, validator))
        } else {
            None
        };
        Ok(Self { setup, flip })
    }

    pub fn setup(&self) -> &DecoderSetup {
        &self.setup
    }

    pub fn decode_frame(&self, code: &PolarCode, frame: &Frame) -> Result<FrameOutcome, SimError> {
        let cfg = self.setup.decoder_config();
        let Some((scorer, validator)) = &self.flip else {
            let st = decode(code, &frame.llrs, &cfg, &FlipSpec::none())?;
            return Ok(FrameOutcome {
                decisions: st.decisions().to_vec(),
                log: None,
            });
        };
        let f = scorer.for_frame(frame, cfg, self.setup.omega, self.setup.shape_p);
        let fv = validator.for_frame(frame);
        let two = TwoPhaseConfig {
            decoder: cfg,
            alpha: self.setup.alpha,
        };
        match decode_two_phase(code, &frame.llrs, &two, f.as_ref(), fv.as_ref()) {
            Ok(out) => Ok(FrameOutcome {
                decisions: out.decisions().to_vec(),
                log: Some(out.log),
            }),
            Err(e) => Err(SimError::Aborted {
                frame: frame.id,
                source: Box::new(e),
            }),
        }
    }
}

/// Frames decoded per parallel batch. Results are merged in frame order and
/// cut at the exact stopping frame, so this only affects throughput.
pub(crate) const BATCH: u64 = 512;

pub(crate) fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, SimError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::Config(format!("thread pool: {e}")))
}

/// Runs `work` on frames `start..start + BATCH` in parallel, in frame order.
pub(crate) fn run_batch<T, F>(
    pool: &rayon::ThreadPool,
    start: u64,
    len: u64,
    work: F,
) -> Vec<Result<T, SimError>>
where
    T: Send,
    F: Fn(u64) -> Result<T, SimError> + Sync,
{
    pool.install(|| (start..start + len).into_par_iter().map(&work).collect())
}
