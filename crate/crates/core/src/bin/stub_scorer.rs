//! Scripted scorer process speaking the adapter wire format. Used by tests and
//! for wiring checks.
//!
//! ```text
//! stub_scorer [--plan 7,9,2] [--weights 0.4,0.3,0.1] [--actions continue,reselect]
//!             [--echo] [--garbage] [--exit-after N] [--delay-ms N]
//! ```
//!
//! `--actions` is replayed cyclically. `--echo` adds the received state to every
//! reply under `"state"`.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

struct Script {
    plan: Vec<usize>,
    weights: Vec<f64>,
    actions: Vec<String>,
    echo: bool,
    garbage: bool,
    exit_after: Option<usize>,
    delay: Duration,
}

fn list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>, String> {
    text.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse().map_err(|_| format!("bad list item {s:?}")))
        .collect()
}

fn parse_args() -> Result<Script, String> {
    let mut s = Script {
        plan: vec![7, 9, 2],
        weights: vec![0.4, 0.3, 0.1],
        actions: vec!["continue".into()],
        echo: false,
        garbage: false,
        exit_after: None,
        delay: Duration::ZERO,
    };
    let mut args = std::env::args().skip(1);
    while let Some(flag) = args.next() {
        let mut value = || args.next().ok_or_else(|| format!("{flag} needs a value"));
        match flag.as_str() {
            "--plan" => s.plan = list(&value()?)?,
            "--weights" => s.weights = list(&value()?)?,
            "--actions" => s.actions = list(&value()?)?,
            "--echo" => s.echo = true,
            "--garbage" => s.garbage = true,
            "--exit-after" => {
                s.exit_after = Some(value()?.parse().map_err(|_| "bad --exit-after")?)
            }
            "--delay-ms" => {
                s.delay = Duration::from_millis(value()?.parse().map_err(|_| "bad --delay-ms")?)
            }
            other => return Err(format!("unknown flag {other}")),
        }
    }
    if s.actions.is_empty() {
        return Err("--actions must not be empty".into());
    }
    Ok(s)
}

fn reply(script: &Script, request: &Value, served_validations: usize) -> Value {
    let mut out = match request["kind"].as_str() {
        Some("score_flips") => json!({ "positions": script.plan, "likelihoods": script.weights }),
        Some("validate_flip") => {
            let action = &script.actions[served_validations % script.actions.len()];
            json!({ "action": action, "confidence": 1.0 })
        }
        _ => json!({ "error": "unknown request kind" }),
    };
    if script.echo {
        out["state"] = request["state"].clone();
    }
    out
}

fn main() -> ExitCode {
    let script = match parse_args() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("stub_scorer: {e}");
            return ExitCode::from(2);
        }
    };
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    let mut validations = 0;
    for (served, line) in stdin.lock().lines().enumerate() {
        let Ok(line) = line else { break };
        if script.exit_after == Some(served) {
            return ExitCode::from(1);
        }
        thread::sleep(script.delay);
        if script.garbage {
            let _ = writeln!(stdout, "this is not json");
        } else {
            let out = match serde_json::from_str::<Value>(&line) {
                Ok(req) => {
                    let r = reply(&script, &req, validations);
                    if req["kind"] == "validate_flip" {
                        validations += 1;
                    }
                    r
                }
                Err(e) => json!({ "error": e.to_string() }),
            };
            let _ = writeln!(stdout, "{out}");
        }
        if stdout.flush().is_err() {
            break;
        }
    }
    ExitCode::SUCCESS
}
