//! How often a flip scorer's rank-`j` position equals the genie's `j`-th label.

use serde::{Deserialize, Serialize};

use super::{
    frame_rng, make_frame, noise_sigma, prepare_scorer, run_batch, thread_pool, ScorerChoice, BATCH,
};
use crate::code::PolarCode;
use crate::decoder::{decode, DecoderConfig, FlipSpec};
use crate::error::SimError;
use crate::flip::{encode_state, ScoringInput};
use crate::scorers::{genie_labels, GenieContext, LabelMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyConfig {
    pub snr_db: f64,
    pub seed: u64,
    /// Number of error frames to evaluate.
    pub error_frames: u64,
    /// Give up after this many simulated frames.
    pub max_frames: u64,
    /// Ranks evaluated, 5 by default.
    pub k_max: usize,
    /// Flip-set size requested from the scorer.
    pub omega: usize,
    pub shape_p: f64,
    #[serde(skip)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankRate {
    pub rank: usize,
    /// Frames with at least `rank` genie labels.
    pub eligible: u64,
    pub hits: u64,
}

impl RankRate {
    pub fn rate(&self) -> f64 {
        if self.eligible == 0 {
            0.0
        } else {
            self.hits as f64 / self.eligible as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyResult {
    pub frames_simulated: u64,
    pub error_frames: u64,
    pub ranks: Vec<RankRate>,
    /// Hit rate of a uniformly random free position, `1 / (K + crc)`.
    pub chance: f64,
}

impl AccuracyResult {
    pub fn to_tsv(&self) -> String {
        let mut s = format!(
            "# frames_simulated: {}\n# error_frames: {}\n# chance: {:.6}\nrank\teligible\thits\trate\n",
            self.frames_simulated, self.error_frames, self.chance
        );
        for r in &self.ranks {
            s.push_str(&format!(
                "{}\t{}\t{}\t{:.6}\n",
                r.rank,
                r.eligible,
                r.hits,
                r.rate()
            ));
        }
        s
    }
}

/// Collects frames the plain decoder gets wrong and compares the scorer's
/// ranking (from the failed decode) with the iterative-genie labels.
pub fn run_identification_accuracy(
    code: &PolarCode,
    decoder: DecoderConfig,
    scorer: &ScorerChoice,
    cfg: &AccuracyConfig,
) -> Result<AccuracyResult, SimError> {
    if cfg.k_max == 0 {
        return Err(SimError::Config("k_max must be at least 1".into()));
    }
    let pool = thread_pool(cfg.threads)?;
    let source = prepare_scorer(scorer, code, &decoder, cfg.omega, cfg.shape_p)?;
    let sigma = noise_sigma(code, cfg.snr_db);
    let mut ranks: Vec<RankRate> = (1..=cfg.k_max)
        .map(|rank| RankRate {
            rank,
            eligible: 0,
            hits: 0,
        })
        .collect();
    let (mut frames, mut errors) = (0u64, 0u64);
    'outer: while frames < cfg.max_frames && errors < cfg.error_frames {
        let len = BATCH.min(cfg.max_frames - frames);
        let batch = run_batch(&pool, frames, len, |id| {
            let frame = make_frame(code, sigma, id, &mut frame_rng(cfg.seed, cfg.snr_db, id));
            let none = FlipSpec::none();
            let st = decode(code, &frame.llrs, &decoder, &none)?;
            if st.passed_crc() {
                return Ok(None);
            }
            let ctx = GenieContext {
                true_u: frame.u.clone(),
                max_labels: cfg.k_max,
            };
            let labels = genie_labels(code, &decoder, &st, &none, &ctx, LabelMode::Iterative)?;
            let enc =
                encode_state(&st, decoder.list_size).map_err(crate::error::ScorerError::from)?;
            let f = source.for_frame(&frame, decoder, cfg.omega, cfg.shape_p);
            let plan = f.score_flips(&ScoringInput {
                code,
                state: &st,
                encoding: &enc,
                flips: &none,
            })?;
            Ok(Some((labels.positions, plan.positions().to_vec())))
        });
        for r in batch {
            frames += 1;
            let Some((labels, ranked)) = r? else { continue };
            errors += 1;
            for (j, label) in labels.iter().enumerate().take(cfg.k_max) {
                ranks[j].eligible += 1;
                if ranked.get(j) == Some(label) {
                    ranks[j].hits += 1;
                }
            }
            if errors == cfg.error_frames {
                break 'outer;
            }
        }
    }
    let free = code.free_positions().len().max(1);
    Ok(AccuracyResult {
        frames_simulated: frames,
        error_frames: errors,
        ranks,
        chance: 1.0 / free as f64,
    })
}
