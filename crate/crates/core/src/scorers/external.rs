//! Scorers served by a child process over JSON lines.
//!
//! Each call writes one request line to the child's stdin:
//!
//! ```text
//! {"kind":"score_flips","n":256,"list_size":1,"flips":[],"state":[0.0,1.25e-3,...]}
//! ```
//!
//! and reads one response line from its stdout:
//!
//! ```text
//! {"positions":[7,9,2],"likelihoods":[0.4,0.3,0.1]}      score_flips
//! {"action":"continue","confidence":0.9}               validate_flip
//! {"error":"message"}                                  either
//! ```
//!
//! State values are `f32` printed in shortest round-trip form (at most 9
//! significant digits), so the child can recover them bit-exactly.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::ScorerError;
use crate::flip::{FlipPlan, FlipScorer, FlipValidator, FvAction, FvDecision, ScoringInput};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    ScoreFlips,
    ValidateFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub kind: RequestKind,
    pub n: usize,
    pub list_size: usize,
    /// Flips that produced the state.
    pub flips: Vec<usize>,
    pub state: Vec<f32>,
}

impl Request {
    pub fn from_input(kind: RequestKind, input: &ScoringInput<'_>) -> Self {
        Self {
            kind,
            n: input.encoding.n_bits(),
            list_size: input.encoding.list_size(),
            flips: input.flips.positions().to_vec(),
            state: input.encoding.values().to_vec(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

#[derive(Deserialize)]
struct PlanResponse {
    positions: Vec<usize>,
    likelihoods: Vec<f64>,
}

#[derive(Deserialize)]
struct DecisionResponse {
    action: FvAction,
    confidence: f64,
}

struct Link {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    /// Set once the child is unusable.
    dead: Option<String>,
}

impl Link {
    fn kill(&mut self, why: String) {
        let _ = self.child.kill();
        let _ = self.child.wait();
        self.dead = Some(why);
    }

    fn exit_reason(&mut self) -> String {
        match self.child.wait() {
            Ok(status) => format!("child exited with {status}"),
            Err(e) => format!("child lost: {e}"),
        }
    }
}

/// One child process implementing both scorer roles. Calls are serialized.
pub struct ExternalScorer {
    link: Mutex<Link>,
    timeout: Duration,
    command: String,
}

impl std::fmt::Debug for ExternalScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalScorer")
            .field("command", &self.command)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl ExternalScorer {
    /// Starts `program` with `args`; its stderr is inherited.
    pub fn spawn<S: AsRef<str>>(program: &str, args: &[S]) -> Result<Self, ScorerError> {
        let mut child = Command::new(program)
            .args(args.iter().map(|a| a.as_ref()))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut command = program.to_string();
        for a in args {
            command.push(' ');
            command.push_str(a.as_ref());
        }
        Ok(Self {
            link: Mutex::new(Link {
                child,
                stdin,
                lines: rx,
                dead: None,
            }),
            timeout: DEFAULT_TIMEOUT,
            command,
        })
    }

    /// Splits `command_line` on whitespace and spawns it.
    pub fn spawn_command_line(command_line: &str) -> Result<Self, ScorerError> {
        let parts: Vec<&str> = command_line.split_whitespace().collect();
        let Some((program, args)) = parts.split_first() else {
            return Err(ScorerError::ProcessExited("empty scorer command".into()));
        };
        Self::spawn(program, args)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Sends one line and waits for one line back.
    pub fn call_raw(&self, line: &str) -> Result<String, ScorerError> {
        let mut link = self.link.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(why) = &link.dead {
            return Err(ScorerError::ProcessExited(why.clone()));
        }
        let sent = link
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| link.stdin.write_all(b"\n"));
        if sent.and_then(|_| link.stdin.flush()).is_err() {
            let why = link.exit_reason();
            link.dead = Some(why.clone());
            return Err(ScorerError::ProcessExited(why));
        }
        match link.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => {
                link.kill(format!("reading reply failed: {e}"));
                Err(ScorerError::Io(e))
            }
            Err(RecvTimeoutError::Timeout) => {
                link.kill("timed out".into());
                Err(ScorerError::Timeout(self.timeout))
            }
            Err(RecvTimeoutError::Disconnected) => {
                let why = link.exit_reason();
                link.dead = Some(why.clone());
                Err(ScorerError::ProcessExited(why))
            }
        }
    }

    fn call<T: for<'de> Deserialize<'de>>(&self, request: &Request) -> Result<T, ScorerError> {
        let reply = self.call_raw(&request.to_line())?;
        let value: serde_json::Value = serde_json::from_str(&reply)
            .map_err(|e| ScorerError::Malformed(format!("{e}: {reply:.80}")))?;
        if let Some(msg) = value.get("error") {
            return Err(ScorerError::Malformed(format!(
                "scorer reported an error: {msg}"
            )));
        }
        serde_json::from_value(value)
            .map_err(|e| ScorerError::Malformed(format!("{e}: {reply:.80}")))
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        let link = self.link.get_mut().unwrap_or_else(|p| p.into_inner());
        if link.dead.is_none() {
            link.kill("dropped".into());
        }
    }
}

impl FlipScorer for ExternalScorer {
    fn score_flips(&self, input: &ScoringInput<'_>) -> Result<FlipPlan, ScorerError> {
        let r: PlanResponse = self.call(&Request::from_input(RequestKind::ScoreFlips, input))?;
        if r.positions.is_empty() {
            return Ok(FlipPlan::empty());
        }
        FlipPlan::from_weights(r.positions, r.likelihoods)
            .map_err(|e| ScorerError::Malformed(e.to_string()))
    }
}

impl FlipValidator for ExternalScorer {
    fn validate_flip(&self, input: &ScoringInput<'_>) -> Result<FvDecision, ScorerError> {
        let r: DecisionResponse =
            self.call(&Request::from_input(RequestKind::ValidateFlip, input))?;
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(ScorerError::Malformed(format!(
                "confidence {} outside [0, 1]",
                r.confidence
            )));
        }
        Ok(FvDecision::new(r.action, r.confidence))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn wire_floats_round_trip_bit_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let state: Vec<f32> = (0..24)
                .map(|_| {
                    let mag = 10f32.powi(rng.random_range(-30..30));
                    rng.random_range(-1.0f32..1.0) * mag
                })
                .collect();
            let req = Request {
                kind: RequestKind::ValidateFlip,
                n: 8,
                list_size: 2,
                flips: vec![3],
                state,
            };
            let line = req.to_line();
            let back: Request = serde_json::from_str(&line).unwrap();
            for (a, b) in req.state.iter().zip(&back.state) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            // Every printed number carries at most 9 significant digits.
            let body = &line[line.find("\"state\":[").unwrap() + 9..line.len() - 2];
            for tok in body.split(',') {
                let mantissa = tok.split(['e', 'E']).next().unwrap();
                let digits = mantissa
                    .chars()
                    .filter(|c| c.is_ascii_digit())
                    .collect::<String>();
                assert!(digits.trim_matches('0').len() <= 9, "{tok}");
            }
        }
    }

    #[test]
    fn request_shape() {
        let req = Request {
            kind: RequestKind::ScoreFlips,
            n: 2,
            list_size: 1,
            flips: vec![],
            state: vec![0.5, 0.0, 1.0, -2.0],
        };
        assert_eq!(
            req.to_line(),
            r#"{"kind":"score_flips","n":2,"list_size":1,"flips":[],"state":[0.5,0.0,1.0,-2.0]}"#
        );
    }

    #[test]
    fn missing_program_fails_to_spawn() {
        assert!(ExternalScorer::spawn::<&str>("/nonexistent/scorer", &[]).is_err());
        assert!(ExternalScorer::spawn_command_line("  ").is_err());
    }
}
