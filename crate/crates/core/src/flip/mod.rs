//! State encoding, soft multi-hot flip vectors and two-phase flip decoding.

mod two_phase;

pub use two_phase::{
    decode_two_phase, AttemptLog, AttemptRecord, Outcome, Phase, TwoPhaseConfig, TwoPhaseError,
    TwoPhaseOutcome,
};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::code::PolarCode;
use crate::decoder::{DecoderState, FlipSpec};
use crate::error::{FlipError, ScorerError};

/// Default α for the Phase-I threshold.
pub const DEFAULT_ALPHA: f64 = 0.03;

/// Decoder state as seen by a scorer: the path-metric increments of the `L`
/// survivors (ascending final metric), each of length `N`, followed by the
/// channel LLRs. Length `(L + 1) N`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEncoding {
    n_bits: usize,
    list_size: usize,
    values: Vec<f32>,
}

impl StateEncoding {
    pub fn from_parts(
        n_bits: usize,
        list_size: usize,
        values: Vec<f32>,
    ) -> Result<Self, FlipError> {
        if values.len() != (list_size + 1) * n_bits {
            return Err(FlipError::MissingPaths {
                expected: list_size,
                got: (values.len() / n_bits.max(1)).saturating_sub(1),
            });
        }
        Ok(Self {
            n_bits,
            list_size,
            values,
        })
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn list_size(&self) -> usize {
        self.list_size
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Increments of the path at rank `l` (0 = lowest metric).
    pub fn gradients(&self, l: usize) -> &[f32] {
        &self.values[l * self.n_bits..(l + 1) * self.n_bits]
    }

    pub fn received(&self) -> &[f32] {
        &self.values[self.list_size * self.n_bits..]
    }

    /// Features of bit `i`: `[grad_1[i], .., grad_L[i], r[i]]`.
    pub fn step(&self, i: usize) -> impl Iterator<Item = f32> + '_ {
        (0..=self.list_size).map(move |l| self.values[l * self.n_bits + i])
    }
}

/// Concatenates the survivors' increments and the received LLRs.
pub fn encode_state(state: &DecoderState, list_size: usize) -> Result<StateEncoding, FlipError> {
    if state.paths.len() < list_size {
        return Err(FlipError::MissingPaths {
            expected: list_size,
            got: state.paths.len(),
        });
    }
    let n = state.received.len();
    let mut values = Vec::with_capacity((list_size + 1) * n);
    for path in &state.paths[..list_size] {
        values.extend(path.gradient.iter().map(|&g| g as f32));
    }
    values.extend(state.received.iter().map(|&r| r as f32));
    Ok(StateEncoding {
        n_bits: n,
        list_size,
        values,
    })
}

/// Ranked flip positions with their soft likelihoods (the nonzeros of the
/// length-`N` flip vector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipPlan {
    positions: Vec<usize>,
    likelihoods: Vec<f64>,
    shape_p: Option<f64>,
}

impl FlipPlan {
    pub fn empty() -> Self {
        Self {
            positions: Vec::new(),
            likelihoods: Vec::new(),
            shape_p: None,
        }
    }

    /// Plan with likelihoods proportional to `weights`. Weights must be
    /// positive, finite and non-increasing along `positions`.
    pub fn from_weights(positions: Vec<usize>, weights: Vec<f64>) -> Result<Self, FlipError> {
        if positions.len() != weights.len() {
            return Err(FlipError::BadLikelihoods(format!(
                "{} positions, {} weights",
                positions.len(),
                weights.len()
            )));
        }
        check_distinct(&positions)?;
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(FlipError::BadLikelihoods(
                "weights must be finite and positive".into(),
            ));
        }
        if weights.windows(2).any(|w| w[1] > w[0]) {
            return Err(FlipError::BadLikelihoods(
                "weights must be non-increasing".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        let likelihoods = weights.iter().map(|w| w / total).collect();
        Ok(Self {
            positions,
            likelihoods,
            shape_p: None,
        })
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn likelihoods(&self) -> &[f64] {
        &self.likelihoods
    }

    pub fn shape_p(&self) -> Option<f64> {
        self.shape_p
    }

    pub fn omega(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Length-`n` flip vector `v_f`.
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for (&p, &l) in self.positions.iter().zip(&self.likelihoods) {
            v[p] = l;
        }
        v
    }

    /// Drops positions that are frozen or out of range, renormalizing the rest.
    pub fn restrict_to_free(self, code: &PolarCode) -> Self {
        if self.positions.iter().all(|&p| code.is_free(p)) {
            return self;
        }
        let (positions, weights): (Vec<usize>, Vec<f64>) = self
            .positions
            .iter()
            .zip(&self.likelihoods)
            .filter(|(&p, _)| {
                let ok = code.is_free(p);
                if !ok {
                    log::warn!("dropping flip position {p}: not a free position");
                }
                ok
            })
            .map(|(&p, &l)| (p, l))
            .unzip();
        let total: f64 = weights.iter().sum();
        if positions.is_empty() || total <= 0.0 {
            return Self::empty();
        }
        Self {
            positions,
            likelihoods: weights.iter().map(|w| w / total).collect(),
            shape_p: self.shape_p,
        }
    }
}

fn check_distinct(positions: &[usize]) -> Result<(), FlipError> {
    let mut seen = HashSet::with_capacity(positions.len());
    for &p in positions {
        if !seen.insert(p) {
            return Err(FlipError::DuplicatePosition(p));
        }
    }
    Ok(())
}

/// Logarithmic-series likelihoods over a ranked flip set: the position of
/// rank `k` (1-based) gets weight `p^k / k`, normalized to sum to one. The
/// `-1/ln(1-p)` factor of the distribution cancels in the normalization.
pub fn lsd_flip_vector(positions: &[usize], shape_p: f64) -> Result<FlipPlan, FlipError> {
    if !(shape_p > 0.0 && shape_p < 1.0) {
        return Err(FlipError::InvalidShape(shape_p));
    }
    if positions.is_empty() {
        return Err(FlipError::EmptyFlipSet);
    }
    check_distinct(positions)?;
    let weights: Vec<f64> = (1..=positions.len())
        .map(|k| shape_p.powi(k as i32) / k as f64)
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(FlipPlan {
        positions: positions.to_vec(),
        likelihoods: weights.iter().map(|w| w / total).collect(),
        shape_p: Some(shape_p),
    })
}

/// Positions whose normalized likelihood exceeds `alpha`, in rank order.
pub fn apply_alpha_threshold(plan: &FlipPlan, alpha: f64) -> FlipSpec {
    let total: f64 = plan.likelihoods.iter().sum();
    if total <= 0.0 {
        return FlipSpec::none();
    }
    FlipSpec::new(
        plan.positions
            .iter()
            .zip(&plan.likelihoods)
            .filter(|(_, &l)| l / total > alpha)
            .map(|(&p, _)| p)
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FvAction {
    Continue,
    Reselect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FvDecision {
    pub action: FvAction,
    pub confidence: f64,
}

impl FvDecision {
    pub fn new(action: FvAction, confidence: f64) -> Self {
        Self { action, confidence }
    }
}

/// Everything a scorer may look at for one decoding attempt.
#[derive(Debug, Clone, Copy)]
pub struct ScoringInput<'a> {
    pub code: &'a PolarCode,
    pub state: &'a DecoderState,
    pub encoding: &'a StateEncoding,
    /// Flips that produced `state`.
    pub flips: &'a FlipSpec,
}

/// Ranks likely error positions after a failed decode.
pub trait FlipScorer: Send + Sync {
    fn score_flips(&self, input: &ScoringInput<'_>) -> Result<FlipPlan, ScorerError>;
}

/// Judges whether the most recent flip should be kept.
pub trait FlipValidator: Send + Sync {
    fn validate_flip(&self, input: &ScoringInput<'_>) -> Result<FvDecision, ScorerError>;
}

impl<T: FlipScorer + ?Sized> FlipScorer for &T {
    fn score_flips(&self, input: &ScoringInput<'_>) -> Result<FlipPlan, ScorerError> {
        (**self).score_flips(input)
    }
}

impl<T: FlipValidator + ?Sized> FlipValidator for &T {
    fn validate_flip(&self, input: &ScoringInput<'_>) -> Result<FvDecision, ScorerError> {
        (**self).validate_flip(input)
    }
}
