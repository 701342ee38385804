//! Two-phase flip decoding.
//!
//! 1. Standard decode; stop on CRC pass.
//! 2. Phase I: the flip scorer ranks positions `F` (size `omega`); all
//!    positions whose likelihood exceeds `alpha` are flipped at once.
//! 3. Phase II: the flip queue starts as `{F[0]}`. After every failed attempt
//!    `i < omega - 1` the validator either keeps the last flip and appends
//!    `F[i+1]` (continue), or replaces the last flip by `F[i+1]` (re-select).
//!
//! At most `2 + omega` decodes are run per frame.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{
    apply_alpha_threshold, encode_state, FlipPlan, FlipScorer, FlipValidator, FvAction, FvDecision,
    ScoringInput, DEFAULT_ALPHA,
};
use crate::code::PolarCode;
use crate::decoder::{decode, DecoderConfig, DecoderState, FlipSpec};
use crate::error::{DecodeError, FlipError, ScorerError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPhaseConfig {
    pub decoder: DecoderConfig,
    pub alpha: f64,
}

impl TwoPhaseConfig {
    pub fn new(decoder: DecoderConfig) -> Self {
        Self {
            decoder,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Initial,
    PhaseOne,
    PhaseTwo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: usize,
    pub phase: Phase,
    pub flips: Vec<usize>,
    pub crc_pass: bool,
    pub path_metric: f64,
    /// Validator verdict on this attempt, when one was requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub validation: Option<FvDecision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "result", content = "phase")]
pub enum Outcome {
    Success(Phase),
    Failure,
    /// A scorer or decoder call failed; the log holds everything before it.
    Aborted,
}

/// Trace of one frame through the two-phase decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub attempts: Vec<AttemptRecord>,
    pub outcome: Outcome,
    /// Flip-set size returned by the flip scorer (0 if never consulted).
    pub omega: usize,
    /// Flip plan returned by the flip scorer.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plan: Option<FlipPlan>,
}

impl AttemptLog {
    fn new() -> Self {
        Self {
            attempts: Vec::new(),
            outcome: Outcome::Aborted,
            omega: 0,
            plan: None,
        }
    }

    pub fn attempt_count(&self) -> usize {
        self.attempts.len()
    }

    /// Attempts beyond the initial decode.
    pub fn flip_attempts(&self) -> usize {
        self.attempts.len().saturating_sub(1)
    }

    pub fn attempts_in(&self, phase: Phase) -> usize {
        self.attempts.iter().filter(|a| a.phase == phase).count()
    }

    /// Flip queues of the Phase-II attempts, in order.
    pub fn phase_two_queues(&self) -> Vec<Vec<usize>> {
        self.attempts
            .iter()
            .filter(|a| a.phase == Phase::PhaseTwo)
            .map(|a| a.flips.clone())
            .collect()
    }

    /// One JSON record per attempt, then one outcome record.
    pub fn write_trace<W: Write>(&self, mut out: W) -> io::Result<()> {
        #[derive(Serialize)]
        #[serde(tag = "record", rename_all = "kebab-case")]
        enum Line<'a> {
            Attempt(&'a AttemptRecord),
            Outcome {
                outcome: Outcome,
                attempts: usize,
                omega: usize,
                plan: Option<&'a FlipPlan>,
            },
        }
        for a in &self.attempts {
            serde_json::to_writer(&mut out, &Line::Attempt(a))?;
            out.write_all(b"\n")?;
        }
        serde_json::to_writer(
            &mut out,
            &Line::Outcome {
                outcome: self.outcome,
                attempts: self.attempts.len(),
                omega: self.omega,
                plan: self.plan.as_ref(),
            },
        )?;
        out.write_all(b"\n")
    }

    pub fn trace_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_trace(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    fn push(&mut self, phase: Phase, flips: &FlipSpec, state: &DecoderState) {
        self.attempts.push(AttemptRecord {
            attempt: self.attempts.len(),
            phase,
            flips: flips.positions().to_vec(),
            crc_pass: state.passed_crc(),
            path_metric: state.chosen_path().path_metric,
            validation: None,
        });
    }
}

#[derive(Debug, Clone)]
pub struct TwoPhaseOutcome {
    /// State of the last decoding attempt.
    pub state: DecoderState,
    pub log: AttemptLog,
}

impl TwoPhaseOutcome {
    pub fn decisions(&self) -> &[u8] {
        self.state.decisions()
    }

    pub fn success(&self) -> bool {
        matches!(self.log.outcome, Outcome::Success(_))
    }
}

#[derive(Debug)]
pub struct TwoPhaseError {
    pub log: AttemptLog,
    pub source: ScorerError,
}

impl fmt::Display for TwoPhaseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "two-phase decoding aborted after {} attempts: {}",
            self.log.attempts.len(),
            self.source
        )
    }
}

impl std::error::Error for TwoPhaseError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

struct Runner<'a> {
    code: &'a PolarCode,
    llrs: &'a [f64],
    config: &'a TwoPhaseConfig,
    log: AttemptLog,
}

impl Runner<'_> {
    fn attempt(&mut self, phase: Phase, flips: &FlipSpec) -> Result<DecoderState, ScorerError> {
        let state = decode(self.code, self.llrs, &self.config.decoder, flips)?;
        self.log.push(phase, flips, &state);
        Ok(state)
    }

    fn finish(mut self, state: DecoderState, outcome: Outcome) -> TwoPhaseOutcome {
        self.log.outcome = outcome;
        TwoPhaseOutcome {
            state,
            log: self.log,
        }
    }

    fn run(
        &mut self,
        f_scorer: &dyn FlipScorer,
        fv_scorer: &dyn FlipValidator,
    ) -> Result<(DecoderState, Outcome), ScorerError> {
        let list_size = self.config.decoder.list_size;
        let no_flips = FlipSpec::none();
        let state = self.attempt(Phase::Initial, &no_flips)?;
        if state.passed_crc() {
            return Ok((state, Outcome::Success(Phase::Initial)));
        }

        // Phase I: multi-bit flipping.
        let encoding = encode_state(&state, list_size)?;
        let plan = f_scorer
            .score_flips(&ScoringInput {
                code: self.code,
                state: &state,
                encoding: &encoding,
                flips: &no_flips,
            })?
            .restrict_to_free(self.code);
        self.log.omega = plan.omega();
        self.log.plan = Some(plan.clone());
        if plan.is_empty() {
            return Ok((state, Outcome::Failure));
        }
        let thresholded = apply_alpha_threshold(&plan, self.config.alpha);
        if !thresholded.is_empty() {
            let state = self.attempt(Phase::PhaseOne, &thresholded)?;
            if state.passed_crc() {
                return Ok((state, Outcome::Success(Phase::PhaseOne)));
            }
        }

        // Phase II: successive single-position trials.
        let ranked = plan.positions();
        let omega = ranked.len();
        let mut queue = vec![ranked[0]];
        let mut i = 0;
        loop {
            let flips = FlipSpec::new(queue.clone());
            let state = self.attempt(Phase::PhaseTwo, &flips)?;
            if state.passed_crc() {
                return Ok((state, Outcome::Success(Phase::PhaseTwo)));
            }
            if i == omega - 1 {
                return Ok((state, Outcome::Failure));
            }
            let encoding = encode_state(&state, list_size)?;
            let verdict = fv_scorer.validate_flip(&ScoringInput {
                code: self.code,
                state: &state,
                encoding: &encoding,
                flips: &flips,
            })?;
            self.log
                .attempts
                .last_mut()
                .expect("attempt just pushed")
                .validation = Some(verdict);
            match verdict.action {
                FvAction::Continue => queue.push(ranked[i + 1]),
                FvAction::Reselect => *queue.last_mut().expect("queue never empty") = ranked[i + 1],
            }
            i += 1;
        }
    }
}

/// Two-phase flip decoding of one frame.
pub fn decode_two_phase(
    code: &PolarCode,
    llrs: &[f64],
    config: &TwoPhaseConfig,
    f_scorer: &dyn FlipScorer,
    fv_scorer: &dyn FlipValidator,
) -> Result<TwoPhaseOutcome, TwoPhaseError> {
    let mut runner = Runner {
        code,
        llrs,
        config,
        log: AttemptLog::new(),
    };
    match runner.run(f_scorer, fv_scorer) {
        Ok((state, outcome)) => Ok(runner.finish(state, outcome)),
        Err(source) => {
            let mut log = runner.log;
            log.outcome = Outcome::Aborted;
            Err(TwoPhaseError { log, source })
        }
    }
}

impl From<DecodeError> for TwoPhaseError {
    fn from(e: DecodeError) -> Self {
        Self {
            log: AttemptLog::new(),
            source: e.into(),
        }
    }
}

impl From<FlipError> for TwoPhaseError {
    fn from(e: FlipError) -> Self {
        Self {
            log: AttemptLog::new(),
            source: e.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crc::Crc;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct FixedPlan(FlipPlan, AtomicUsize);

    impl FlipScorer for FixedPlan {
        fn score_flips(&self, _: &ScoringInput<'_>) -> Result<FlipPlan, ScorerError> {
            self.1.fetch_add(1, Ordering::SeqCst);
            Ok(self.0.clone())
        }
    }

    struct Script(Vec<FvAction>, AtomicUsize);

    impl FlipValidator for Script {
        fn validate_flip(&self, _: &ScoringInput<'_>) -> Result<FvDecision, ScorerError> {
            let k = self.1.fetch_add(1, Ordering::SeqCst);
            Ok(FvDecision::new(self.0[k], 1.0))
        }
    }

    struct Broken;

    impl FlipValidator for Broken {
        fn validate_flip(&self, _: &ScoringInput<'_>) -> Result<FvDecision, ScorerError> {
            Err(ScorerError::Model("offline".into()))
        }
    }

    /// N = 16 code whose free set contains 2, 7 and 9, and a received word
    /// that fails the CRC under every flip pattern tried below.
    fn setup() -> (PolarCode, Vec<f64>) {
        let mut frozen = vec![true; 16];
        for i in [2, 7, 9, 10, 11, 12, 13, 14, 15] {
            frozen[i] = false;
        }
        let code = PolarCode::from_frozen_mask(1, Crc::new(8, 0x07).unwrap(), frozen, 2.0).unwrap();
        let llrs = vec![-3.0; 16];
        (code, llrs)
    }

    fn run(actions: &[FvAction]) -> AttemptLog {
        let (code, llrs) = setup();
        let plan = FlipPlan::from_weights(vec![7, 9, 2], vec![0.4, 0.3, 0.1]).unwrap();
        let f = FixedPlan(plan, AtomicUsize::new(0));
        let fv = Script(actions.to_vec(), AtomicUsize::new(0));
        let cfg = TwoPhaseConfig::new(DecoderConfig::sc());
        let out = decode_two_phase(&code, &llrs, &cfg, &f, &fv).unwrap();
        assert_eq!(fv.1.load(Ordering::SeqCst), actions.len());
        out.log
    }

    #[test]
    fn continue_continue_tree() {
        use FvAction::Continue;
        let log = run(&[Continue, Continue]);
        assert_eq!(log.outcome, Outcome::Failure);
        assert_eq!(
            log.phase_two_queues(),
            vec![vec![7], vec![7, 9], vec![7, 9, 2]]
        );
        assert_eq!(log.attempts[1].flips, vec![7, 9, 2]);
        assert_eq!(log.attempt_count(), 5);
    }

    #[test]
    fn reselect_continue_tree() {
        use FvAction::{Continue, Reselect};
        let log = run(&[Reselect, Continue]);
        assert_eq!(log.phase_two_queues(), vec![vec![7], vec![9], vec![9, 2]]);
        let verdicts: Vec<_> = log
            .attempts
            .iter()
            .filter_map(|a| a.validation.map(|v| v.action))
            .collect();
        assert_eq!(verdicts, vec![Reselect, Continue]);
    }

    #[test]
    fn early_exit_skips_scorers() {
        let (code, _) = setup();
        let u = code.u_from_message(&[1]).unwrap();
        let llrs: Vec<f64> = code
            .encode(&u)
            .unwrap()
            .0
            .iter()
            .map(|&b| if b == 0 { 9.0 } else { -9.0 })
            .collect();
        let f = FixedPlan(FlipPlan::empty(), AtomicUsize::new(0));
        let out = decode_two_phase(
            &code,
            &llrs,
            &TwoPhaseConfig::new(DecoderConfig::sc()),
            &f,
            &Broken,
        )
        .unwrap();
        assert_eq!(out.log.attempt_count(), 1);
        assert_eq!(out.log.outcome, Outcome::Success(Phase::Initial));
        assert_eq!(f.1.load(Ordering::SeqCst), 0);
        assert_eq!(out.decisions(), &u[..]);
    }

    #[test]
    fn empty_plan_fails_after_one_attempt() {
        let (code, llrs) = setup();
        let f = FixedPlan(FlipPlan::empty(), AtomicUsize::new(0));
        let out = decode_two_phase(
            &code,
            &llrs,
            &TwoPhaseConfig::new(DecoderConfig::sc()),
            &f,
            &Broken,
        )
        .unwrap();
        assert_eq!(out.log.outcome, Outcome::Failure);
        assert_eq!(out.log.attempt_count(), 1);
    }

    #[test]
    fn scorer_error_keeps_log() {
        let (code, llrs) = setup();
        let plan = FlipPlan::from_weights(vec![7, 9, 2], vec![0.4, 0.3, 0.1]).unwrap();
        let f = FixedPlan(plan, AtomicUsize::new(0));
        let err = decode_two_phase(
            &code,
            &llrs,
            &TwoPhaseConfig::new(DecoderConfig::sc()),
            &f,
            &Broken,
        )
        .unwrap_err();
        assert!(matches!(err.source, ScorerError::Model(_)));
        assert_eq!(err.log.outcome, Outcome::Aborted);
        // initial, Phase I, first Phase-II attempt
        assert_eq!(err.log.attempt_count(), 3);
    }

    #[test]
    fn high_alpha_skips_phase_one() {
        let (code, llrs) = setup();
        let plan = FlipPlan::from_weights(vec![7, 9], vec![0.5, 0.5]).unwrap();
        let f = FixedPlan(plan, AtomicUsize::new(0));
        let fv = Script(vec![FvAction::Continue], AtomicUsize::new(0));
        let cfg = TwoPhaseConfig {
            decoder: DecoderConfig::sc(),
            alpha: 0.5,
        };
        let log = decode_two_phase(&code, &llrs, &cfg, &f, &fv).unwrap().log;
        assert_eq!(log.attempts_in(Phase::PhaseOne), 0);
        assert_eq!(log.phase_two_queues(), vec![vec![7], vec![7, 9]]);
    }

    #[test]
    fn trace_lines() {
        let log = run(&[FvAction::Reselect, FvAction::Reselect]);
        let text = log.trace_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), log.attempt_count() + 1);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["record"], "attempt");
        assert_eq!(first["phase"], "initial");
        let last: serde_json::Value = serde_json::from_str(lines.last().unwrap()).unwrap();
        assert_eq!(last["record"], "outcome");
        assert_eq!(last["outcome"]["result"], "failure");
        assert!(text.contains("\"action\":\"reselect\""));
    }
}
