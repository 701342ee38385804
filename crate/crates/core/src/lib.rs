//! Polar codes with CRC-aided SC/SCL decoding and two-phase flip decoding.
//!
//! * [`code`] / [`crc`]: construction, encoding and CRC attachment.
//! * [`decoder`]: SC and SCL decoders that expose per-bit path-metric
//!   increments and accept decision flips.
//! * [`flip`]: state and action encodings and the two-phase flip decoder.
//! * [`scorers`]: flip-position scorers and flip validators.
//! * [`sim`]: channel, Monte-Carlo drivers and training-set export.

pub mod code;
pub mod construction;
pub mod crc;
pub mod decoder;
pub mod error;
pub mod flip;
pub mod kernels;
pub mod scorers;
pub mod sim;

pub use code::{Codeword, ConstructionMethod, PolarCode};
pub use crc::Crc;
pub use decoder::{
    decode, sc_decode, scl_decode, DecodePath, DecoderConfig, DecoderState, FlipSpec, LlrWord,
};
pub use flip::{
    apply_alpha_threshold, decode_two_phase, encode_state, lsd_flip_vector, AttemptLog, FlipPlan,
    FlipScorer, FlipValidator, FvAction, FvDecision, ScoringInput, StateEncoding, TwoPhaseConfig,
};
pub use kernels::CheckKernel;
