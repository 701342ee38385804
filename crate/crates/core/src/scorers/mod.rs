//! Flip scorers and flip validators.
//!
//! * [`GenieScorer`] / [`GenieValidator`]: oracles that know the transmitted
//!   `u`-vector. Simulation only.
//! * [`HeuristicScorer`]: ranks free bits by ascending decision confidence.
//! * [`NeuralFlipScorer`] / [`NeuralValidator`]: native LSTM inference from an
//!   `NFSW1` weight bundle.
//! * [`ExternalScorer`]: JSON-lines adapter to a child process.

mod bundle;
mod external;
mod neural;

pub use bundle::{
    BundleMetadata, HeadKind, ModelBundle, Tensor, TensorInfo, BUNDLE_MAGIC, BUNDLE_VERSION,
    INPUT_LAYOUT,
};
pub use external::{ExternalScorer, Request, RequestKind, DEFAULT_TIMEOUT};
pub use neural::{LstmModel, LstmWeights, NeuralFlipScorer, NeuralValidator, ARCHITECTURE};

use serde::{Deserialize, Serialize};

use crate::code::PolarCode;
use crate::decoder::{decode, first_divergence, DecoderConfig, DecoderState, FlipSpec};
use crate::error::{DecodeError, ScorerError};
use crate::flip::{
    lsd_flip_vector, FlipPlan, FlipScorer, FlipValidator, FvAction, FvDecision, ScoringInput,
};

/// What the genie knows about a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenieContext {
    pub true_u: Vec<u8>,
    /// Upper bound `omega_max` on the number of labels.
    pub max_labels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    /// Find the first error, flip it, re-decode, repeat.
    #[default]
    Iterative,
    /// Every free position where the chosen path differs from the truth.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenieLabels {
    pub positions: Vec<usize>,
    /// Decoding with all labels flipped reproduces the transmitted word.
    pub resolved: bool,
}

/// Error positions of a frame relative to `ctx.true_u`.
///
/// `state` must be the result of decoding `llrs` with `start` flipped; the
/// labels extend `start`.
pub fn genie_labels(
    code: &PolarCode,
    decoder: &DecoderConfig,
    state: &DecoderState,
    start: &FlipSpec,
    ctx: &GenieContext,
    mode: LabelMode,
) -> Result<GenieLabels, DecodeError> {
    match mode {
        LabelMode::Direct => {
            let wrong: Vec<usize> = code
                .free_positions()
                .iter()
                .copied()
                .filter(|&i| state.decisions()[i] != ctx.true_u[i])
                .collect();
            let resolved = wrong.len() <= ctx.max_labels;
            Ok(GenieLabels {
                positions: wrong.into_iter().take(ctx.max_labels).collect(),
                resolved,
            })
        }
        LabelMode::Iterative => {
            let mut flips = start.positions().to_vec();
            let mut labels = Vec::new();
            let mut current: Option<DecoderState> = None;
            loop {
                let st = current.as_ref().unwrap_or(state);
                let Some(d) = first_divergence(code, st.decisions(), &ctx.true_u) else {
                    return Ok(GenieLabels {
                        positions: labels,
                        resolved: true,
                    });
                };
                if labels.len() == ctx.max_labels || flips.contains(&d) {
                    return Ok(GenieLabels {
                        positions: labels,
                        resolved: false,
                    });
                }
                labels.push(d);
                flips.push(d);
                current = Some(decode(
                    code,
                    &state.received,
                    decoder,
                    &FlipSpec::new(flips.clone()),
                )?);
            }
        }
    }
}

/// Labels the frame with the genie and spreads LSD likelihoods over them.
#[derive(Debug, Clone)]
pub struct GenieScorer {
    pub context: GenieContext,
    pub decoder: DecoderConfig,
    pub shape_p: f64,
    pub mode: LabelMode,
}

impl GenieScorer {
    pub fn new(context: GenieContext, decoder: DecoderConfig, shape_p: f64) -> Self {
        Self {
            context,
            decoder,
            shape_p,
            mode: LabelMode::Iterative,
        }
    }

    pub fn with_mode(mut self, mode: LabelMode) -> Self {
        self.mode = mode;
        self
    }
}

impl FlipScorer for GenieScorer {
    fn score_flips(&self, input: &ScoringInput<'_>) -> Result<FlipPlan, ScorerError> {
        let labels = genie_labels(
            input.code,
            &self.decoder,
            input.state,
            input.flips,
            &self.context,
            self.mode,
        )?;
        if labels.positions.is_empty() {
            return Ok(FlipPlan::empty());
        }
        Ok(lsd_flip_vector(&labels.positions, self.shape_p)?)
    }
}

/// Continues iff the chosen path agrees with the transmitted word on every
/// position up to the furthest flip in the queue.
#[derive(Debug, Clone)]
pub struct GenieValidator {
    pub true_u: Vec<u8>,
}

impl FlipValidator for GenieValidator {
    fn validate_flip(&self, input: &ScoringInput<'_>) -> Result<FvDecision, ScorerError> {
        let Some(&last) = input.flips.positions().iter().max() else {
            return Ok(FvDecision::new(FvAction::Continue, 1.0));
        };
        let d = input.state.decisions();
        let action = if d[..=last] == self.true_u[..=last] {
            FvAction::Continue
        } else {
            FvAction::Reselect
        };
        Ok(FvDecision::new(action, 1.0))
    }
}

/// Ranks free positions by ascending `|L_i|` of the chosen path; ties go to
/// the lower index.
#[derive(Debug, Clone, Copy)]
pub struct HeuristicScorer {
    pub omega: usize,
    pub shape_p: f64,
}

impl HeuristicScorer {
    pub fn rank(code: &PolarCode, state: &DecoderState) -> Vec<usize> {
        let llrs = &state.chosen_path().bit_llrs;
        let mut free = code.free_positions().to_vec();
        free.sort_by(|&a, &b| llrs[a].abs().total_cmp(&llrs[b].abs()).then(a.cmp(&b)));
        free
    }
}

impl FlipScorer for HeuristicScorer {
    fn score_flips(&self, input: &ScoringInput<'_>) -> Result<FlipPlan, ScorerError> {
        let mut ranked = Self::rank(input.code, input.state);
        ranked.truncate(self.omega);
        if ranked.is_empty() {
            return Ok(FlipPlan::empty());
        }
        Ok(lsd_flip_vector(&ranked, self.shape_p)?)
    }
}

/// Returns the same plan for every frame.
#[derive(Debug, Clone)]
pub struct FixedPlanScorer(pub FlipPlan);

impl FlipScorer for FixedPlanScorer {
    fn score_flips(&self, _: &ScoringInput<'_>) -> Result<FlipPlan, ScorerError> {
        Ok(self.0.clone())
    }
}

/// Always answers with the same action.
#[derive(Debug, Clone, Copy)]
pub struct ConstantValidator(pub FvAction);

impl FlipValidator for ConstantValidator {
    fn validate_flip(&self, _: &ScoringInput<'_>) -> Result<FvDecision, ScorerError> {
        Ok(FvDecision::new(self.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flip::encode_state;

    fn small_code() -> PolarCode {
        let crc = crate::crc::Crc::new(4, 0x3).unwrap();
        PolarCode::construct(
            16,
            4,
            crc,
            &crate::code::ConstructionMethod::GaussianApproximation,
            2.0,
        )
        .unwrap()
    }

    /// First noisy all-zero frame (seeded search) that SC decodes wrongly.
    fn error_frame(code: &PolarCode) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        loop {
            let llrs: Vec<f64> = (0..code.n_bits())
                .map(|_| 2.0 * (1.0 + rng.sample::<f64, _>(rand_distr::StandardNormal)))
                .collect();
            let st = decode(code, &llrs, &DecoderConfig::sc(), &FlipSpec::none()).unwrap();
            if !st.passed_crc() {
                return llrs;
            }
        }
    }

    #[test]
    fn genie_on_correct_frame_is_empty() {
        let code = PolarCode::ga(64, 24, 2.0).unwrap();
        let st = decode(
            &code,
            &vec![8.0; 64],
            &DecoderConfig::sc(),
            &FlipSpec::none(),
        )
        .unwrap();
        let ctx = GenieContext {
            true_u: vec![0; 64],
            max_labels: 5,
        };
        let labels = genie_labels(
            &code,
            &DecoderConfig::sc(),
            &st,
            &FlipSpec::none(),
            &ctx,
            LabelMode::Iterative,
        )
        .unwrap();
        assert_eq!(
            labels,
            GenieLabels {
                positions: vec![],
                resolved: true
            }
        );
        let enc = encode_state(&st, 1).unwrap();
        let scorer = GenieScorer::new(ctx, DecoderConfig::sc(), 0.8);
        let none = FlipSpec::none();
        let plan = scorer
            .score_flips(&ScoringInput {
                code: &code,
                state: &st,
                encoding: &enc,
                flips: &none,
            })
            .unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn genie_finds_injected_error_and_resolves() {
        let code = PolarCode::ga(64, 24, 2.0).unwrap();
        let u = vec![0u8; 64];
        let llrs = error_frame(&code);
        let st = decode(&code, &llrs, &DecoderConfig::sc(), &FlipSpec::none()).unwrap();
        let target = st.decisions().iter().position(|&b| b == 1).unwrap();
        let ctx = GenieContext {
            true_u: u.clone(),
            max_labels: 5,
        };
        let labels = genie_labels(
            &code,
            &DecoderConfig::sc(),
            &st,
            &FlipSpec::none(),
            &ctx,
            LabelMode::Iterative,
        )
        .unwrap();
        assert_eq!(labels.positions[0], target);
        assert!(labels.resolved);
        {
            let fixed = decode(
                &code,
                &llrs,
                &DecoderConfig::sc(),
                &FlipSpec::new(labels.positions.clone()),
            )
            .unwrap();
            assert_eq!(fixed.decisions(), &u[..]);
        }
        let capped = genie_labels(
            &code,
            &DecoderConfig::sc(),
            &st,
            &FlipSpec::none(),
            &GenieContext {
                true_u: u,
                max_labels: 1,
            },
            LabelMode::Iterative,
        )
        .unwrap();
        assert_eq!(capped.positions, vec![target]);
    }

    #[test]
    fn direct_mode_lists_all_mismatches() {
        let code = PolarCode::ga(64, 24, 2.0).unwrap();
        let st = decode(
            &code,
            &vec![-8.0; 64],
            &DecoderConfig::sc(),
            &FlipSpec::none(),
        )
        .unwrap();
        let ctx = GenieContext {
            true_u: vec![0; 64],
            max_labels: 100,
        };
        let labels = genie_labels(
            &code,
            &DecoderConfig::sc(),
            &st,
            &FlipSpec::none(),
            &ctx,
            LabelMode::Direct,
        )
        .unwrap();
        let expect: Vec<usize> = code
            .free_positions()
            .iter()
            .copied()
            .filter(|&i| st.decisions()[i] == 1)
            .collect();
        assert_eq!(labels.positions, expect);
        assert!(labels.resolved);
    }

    #[test]
    fn heuristic_ranks_weakest_first_with_index_ties() {
        let code = small_code();
        let free = code.free_positions().to_vec();
        let mut st = decode(
            &code,
            &vec![5.0; 16],
            &DecoderConfig::sc(),
            &FlipSpec::none(),
        )
        .unwrap();
        let llrs = &mut st.paths[0].bit_llrs;
        for &i in &free {
            llrs[i] = 9.0;
        }
        let weak = free[free.len() - 2];
        llrs[weak] = 0.01;
        llrs[free[1]] = -3.0;
        llrs[free[0]] = 3.0;
        let ranked = HeuristicScorer::rank(&code, &st);
        assert_eq!(ranked[..3], [weak, free[0], free[1]]);
        let enc = encode_state(&st, 1).unwrap();
        let none = FlipSpec::none();
        let plan = HeuristicScorer {
            omega: 2,
            shape_p: 0.8,
        }
        .score_flips(&ScoringInput {
            code: &code,
            state: &st,
            encoding: &enc,
            flips: &none,
        })
        .unwrap();
        assert_eq!(plan.positions(), &[weak, free[0]]);
    }

    #[test]
    fn genie_validator_judges_prefix() {
        let code = small_code();
        let free = code.free_positions().to_vec();
        let mut st = decode(
            &code,
            &vec![5.0; 16],
            &DecoderConfig::sc(),
            &FlipSpec::none(),
        )
        .unwrap();
        let truth = vec![0u8; 16];
        let v = GenieValidator { true_u: truth };
        let enc = encode_state(&st, 1).unwrap();
        let flips = FlipSpec::new(vec![free[1]]);
        let input = ScoringInput {
            code: &code,
            state: &st,
            encoding: &enc,
            flips: &flips,
        };
        assert_eq!(v.validate_flip(&input).unwrap().action, FvAction::Continue);
        st.paths[0].decisions[free[1]] = 1;
        let input = ScoringInput {
            code: &code,
            state: &st,
            encoding: &enc,
            flips: &flips,
        };
        assert_eq!(v.validate_flip(&input).unwrap().action, FvAction::Reselect);
        st.paths[0].decisions[free[1]] = 0;
        st.paths[0].decisions[free[2]] = 1;
        let input = ScoringInput {
            code: &code,
            state: &st,
            encoding: &enc,
            flips: &flips,
        };
        assert_eq!(v.validate_flip(&input).unwrap().action, FvAction::Continue);
    }
}
