//! Successive-cancellation decoding with exact path metrics.
//!
//! Both decoders record, for every path and every bit `i`, the bit LLR seen by
//! the path and the path-metric increment `ln(1 + e^{-(1-2u_i) L_i})`. Frozen
//! bits decode to zero and still accrue their increment. Decisions can be
//! inverted at a caller-supplied set of free positions ([`FlipSpec`]).

mod sc;
mod scl;

pub use sc::sc_decode;
pub use scl::scl_decode;

use serde::{Deserialize, Serialize};

use crate::code::PolarCode;
use crate::error::DecodeError;
use crate::kernels::CheckKernel;

/// Channel LLRs `r_0 .. r_{N-1}`, natural log, positive favours bit 0.
pub type LlrWord = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub list_size: usize,
    pub kernel: CheckKernel,
}

impl DecoderConfig {
    pub fn sc() -> Self {
        Self {
            list_size: 1,
            kernel: CheckKernel::Exact,
        }
    }

    pub fn scl(list_size: usize) -> Self {
        Self {
            list_size,
            kernel: CheckKernel::Exact,
        }
    }
}

/// Free positions at which the decoder takes the decision it would otherwise
/// reject. Order is preserved (rank order of the producer).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipSpec {
    positions: Vec<usize>,
}

impl FlipSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(positions: Vec<usize>) -> Self {
        Self { positions }
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    /// Length-`N` membership mask; rejects frozen or out-of-range positions.
    pub(crate) fn mask(&self, code: &PolarCode) -> Result<Vec<bool>, DecodeError> {
        let mut mask = vec![false; code.n_bits()];
        for &p in &self.positions {
            if !code.is_free(p) {
                return Err(DecodeError::InvalidFlip(p));
            }
            mask[p] = true;
        }
        Ok(mask)
    }
}

impl From<Vec<usize>> for FlipSpec {
    fn from(positions: Vec<usize>) -> Self {
        Self::new(positions)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodePath {
    /// List slot the path occupied when decoding finished.
    pub id: usize,
    pub decisions: Vec<u8>,
    pub path_metric: f64,
    /// Per-bit path-metric increments; they sum to `path_metric`.
    pub gradient: Vec<f64>,
    /// Bit LLR `L_i` the path saw at every position.
    pub bit_llrs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    /// Survivors in ascending order of final path metric.
    pub paths: Vec<DecodePath>,
    pub received: LlrWord,
    pub crc_pass: Vec<bool>,
    pub chosen: usize,
}

impl DecoderState {
    fn from_paths(code: &PolarCode, received: &[f64], mut paths: Vec<DecodePath>) -> Self {
        paths.sort_by(|a, b| a.path_metric.total_cmp(&b.path_metric));
        let crc_pass: Vec<bool> = paths.iter().map(|p| code.crc_check(&p.decisions)).collect();
        let chosen = crc_pass.iter().position(|&ok| ok).unwrap_or(0);
        Self {
            paths,
            received: received.to_vec(),
            crc_pass,
            chosen,
        }
    }

    pub fn chosen_path(&self) -> &DecodePath {
        &self.paths[self.chosen]
    }

    /// Decided `u`-vector of the chosen path.
    pub fn decisions(&self) -> &[u8] {
        &self.chosen_path().decisions
    }

    pub fn passed_crc(&self) -> bool {
        self.crc_pass[self.chosen]
    }

    /// Smallest free index where the chosen path differs from `true_u`.
    pub fn first_divergence(&self, code: &PolarCode, true_u: &[u8]) -> Option<usize> {
        first_divergence(code, self.decisions(), true_u)
    }
}

/// Smallest free index where `decisions` differs from `true_u`.
pub fn first_divergence(code: &PolarCode, decisions: &[u8], true_u: &[u8]) -> Option<usize> {
    code.free_positions()
        .iter()
        .copied()
        .find(|&i| decisions[i] != true_u[i])
}

fn check_input(code: &PolarCode, llrs: &[f64]) -> Result<(), DecodeError> {
    if llrs.len() != code.n_bits() {
        return Err(DecodeError::LengthMismatch {
            expected: code.n_bits(),
            got: llrs.len(),
        });
    }
    if let Some(i) = llrs.iter().position(|v| !v.is_finite()) {
        return Err(DecodeError::NonFiniteLlr(i));
    }
    Ok(())
}

/// Runs SC for `list_size == 1` and SCL otherwise.
pub fn decode(
    code: &PolarCode,
    llrs: &[f64],
    config: &DecoderConfig,
    flips: &FlipSpec,
) -> Result<DecoderState, DecodeError> {
    if config.list_size == 1 {
        sc_decode(code, llrs, flips, config.kernel)
    } else {
        scl_decode(code, llrs, config, flips)
    }
}
