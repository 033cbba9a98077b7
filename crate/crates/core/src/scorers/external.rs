//! Bridge to an out-of-process scorer over newline-delimited JSON.
//!
//! The child first prints a handshake line, then answers each request line
//! with exactly one response line carrying the same id. Requests on one
//! connection are strictly serialized.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::length::triangular_lengths;
use super::{check_state_tokens, PositionDistribution, QueryScope, Scorer, ScorerError, TokenDistribution};
use crate::types::{HypothesisState, TokenId};

pub const PROTOCOL_NAME: &str = "cmlm-scorer";
pub const PROTOCOL_VERSION: u32 = 1;

/// Mass tolerance applied before top-k renormalization.
const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub proto: String,
    pub version: u32,
    pub vocab_size: usize,
}

/// One request line. `tgt` carries `null` at masked positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub src: Vec<TokenId>,
    pub tgt: Vec<Option<TokenId>>,
    pub n: usize,
    pub topk: usize,
}

#[derive(Debug, Deserialize)]
struct RawResponse {
    id: u64,
    #[serde(default)]
    preds: Option<Vec<RawPrediction>>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawPrediction {
    pos: usize,
    dist: Vec<(TokenId, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalOptions {
    pub topk: usize,
    pub timeout: Duration,
}

impl Default for ExternalOptions {
    fn default() -> Self {
        Self {
            topk: 8,
            timeout: Duration::from_secs(30),
        }
    }
}

/// Parses and checks one response line against the request it answers:
/// matching id, exactly the masked positions, in-vocabulary tokens and
/// total mass at most one (within 1e-6). Distributions come back
/// renormalized and sorted by position.
pub fn validate_response(
    line: &str,
    expected_id: u64,
    masked: &[usize],
    vocab_size: usize,
) -> Result<Vec<PositionDistribution>, ScorerError> {
    let protocol = |reason: String| ScorerError::Protocol {
        line: line.trim_end().to_string(),
        reason,
    };
    let raw: RawResponse = serde_json::from_str(line).map_err(|e| protocol(format!("malformed response: {e}")))?;
    if raw.id != expected_id {
        return Err(ScorerError::Desync {
            expected: expected_id,
            got: raw.id,
        });
    }
    if let Some(message) = raw.error {
        return Err(ScorerError::Remote { id: raw.id, message });
    }
    let preds = raw.preds.ok_or_else(|| protocol("missing `preds`".into()))?;
    let wanted: BTreeSet<usize> = masked.iter().copied().collect();
    let got: BTreeSet<usize> = preds.iter().map(|p| p.pos).collect();
    if got.len() != preds.len() {
        return Err(protocol("duplicate position in `preds`".into()));
    }
    if got != wanted {
        return Err(protocol(format!(
            "expected predictions for positions {wanted:?}, got {got:?}"
        )));
    }
    let mut out = Vec::with_capacity(preds.len());
    for p in preds {
        if p.dist.is_empty() {
            return Err(protocol(format!("empty distribution at position {}", p.pos)));
        }
        let mut tokens = BTreeSet::new();
        for &(tok, prob) in &p.dist {
            if tok as usize >= vocab_size {
                return Err(protocol(format!(
                    "token {tok} at position {} outside vocabulary of size {vocab_size}",
                    p.pos
                )));
            }
            if !tokens.insert(tok) {
                return Err(protocol(format!("token {tok} repeated at position {}", p.pos)));
            }
            if !prob.is_finite() || prob < 0.0 {
                return Err(protocol(format!("invalid probability {prob} at position {}", p.pos)));
            }
        }
        let mass: f64 = p.dist.iter().map(|&(_, q)| q).sum();
        if !(mass > 0.0) || mass > 1.0 + MASS_TOLERANCE {
            return Err(protocol(format!("probabilities at position {} sum to {mass}", p.pos)));
        }
        out.push(PositionDistribution {
            position: p.pos,
            dist: TokenDistribution::sparse(p.dist.into_iter().map(|(t, q)| (t, q / mass)).collect()),
        });
    }
    out.sort_by_key(|d| d.position);
    Ok(out)
}

struct Connection {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    broken: Option<String>,
}

impl Connection {
    fn read_line(&mut self, timeout: Duration) -> Result<String, ScorerError> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(ScorerError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(ScorerError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(ScorerError::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "scorer closed its output",
            ))),
        }
    }
}

/// A scorer served by a child process. Queries from several threads are
/// serialized on the one connection.
pub struct ExternalScorer {
    command: String,
    vocab_size: usize,
    options: ExternalOptions,
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for ExternalScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalScorer")
            .field("command", &self.command)
            .field("vocab_size", &self.vocab_size)
            .field("options", &self.options)
            .finish()
    }
}

impl ExternalScorer {
    /// Runs `cmdline` through `sh -c` and completes the handshake.
    pub fn spawn(cmdline: &str, options: ExternalOptions) -> Result<Self, ScorerError> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(cmdline);
        Self::spawn_command(cmd, cmdline, options)
    }

    pub fn spawn_command(mut cmd: Command, label: &str, options: ExternalOptions) -> Result<Self, ScorerError> {
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ScorerError::Launch {
                command: label.to_string(),
                source,
            })?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut conn = Connection {
            child,
            stdin,
            lines: rx,
            next_id: 0,
            broken: None,
        };
        let line = conn.read_line(options.timeout).map_err(|e| match e {
            ScorerError::Timeout(d) => ScorerError::Handshake(format!("no handshake within {d:?}")),
            other => ScorerError::Handshake(other.to_string()),
        })?;
        let hs: Handshake = serde_json::from_str(&line)
            .map_err(|e| ScorerError::Handshake(format!("malformed handshake `{line}`: {e}")))?;
        if hs.proto != PROTOCOL_NAME || hs.version != PROTOCOL_VERSION {
            return Err(ScorerError::Handshake(format!(
                "unsupported protocol {} v{}",
                hs.proto, hs.version
            )));
        }
        if hs.vocab_size < 2 {
            return Err(ScorerError::Handshake(format!("vocab_size {} < 2", hs.vocab_size)));
        }
        Ok(Self {
            command: label.to_string(),
            vocab_size: hs.vocab_size,
            options,
            conn: Mutex::new(conn),
        })
    }

    pub fn options(&self) -> ExternalOptions {
        self.options
    }

    /// One request/response round trip for the `null` positions of `tgt`.
    pub fn call(
        &self,
        source: &[TokenId],
        tgt: Vec<Option<TokenId>>,
    ) -> Result<Vec<PositionDistribution>, ScorerError> {
        let masked: Vec<usize> = tgt
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_none())
            .map(|(i, _)| i)
            .collect();
        let mut conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(reason) = &conn.broken {
            return Err(ScorerError::Io(std::io::Error::other(format!(
                "connection unusable after earlier failure: {reason}"
            ))));
        }
        let id = conn.next_id;
        conn.next_id += 1;
        let request = Request {
            id,
            src: source.to_vec(),
            n: tgt.len(),
            tgt,
            topk: self.options.topk,
        };
        let mut line = serde_json::to_string(&request).expect("request serializes");
        line.push('\n');
        let result = conn
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| conn.stdin.flush())
            .map_err(ScorerError::Io)
            .and_then(|_| conn.read_line(self.options.timeout))
            .and_then(|reply| validate_response(&reply, id, &masked, self.vocab_size));
        if let Err(e) = &result {
            // a remote error answers its request, anything else leaves the stream out of step
            if !matches!(e, ScorerError::Remote { .. }) {
                conn.broken = Some(e.to_string());
            }
        }
        result
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        let conn = self.conn.get_mut().unwrap_or_else(|e| e.into_inner());
        let _ = conn.child.kill();
        let _ = conn.child.wait();
    }
}

impl Scorer for ExternalScorer {
    fn target_vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(
        &self,
        source: &[TokenId],
        state: &HypothesisState,
        scope: QueryScope,
    ) -> Result<Vec<PositionDistribution>, ScorerError> {
        check_state_tokens(state, self.vocab_size)?;
        let observed = state.observed_tokens();
        let mut out = if state.is_complete() {
            Vec::new()
        } else {
            self.call(source, observed.clone())?
        };
        if scope == QueryScope::All {
            // the protocol only scores nulls, so each observed position is
            // scored by hiding it alone
            for i in (0..state.len()).filter(|&i| !state.is_masked(i)) {
                let mut tgt = observed.clone();
                tgt[i] = None;
                let reply = self.call(source, tgt)?;
                out.extend(reply.into_iter().filter(|d| d.position == i));
            }
            out.sort_by_key(|d| d.position);
        }
        Ok(out)
    }

    fn length_distribution(&self, source: &[TokenId]) -> Result<Vec<(usize, f64)>, ScorerError> {
        if source.is_empty() {
            return Err(ScorerError::InvalidSource("empty source".into()));
        }
        Ok(triangular_lengths(source.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_well_formed_response() {
        let line = r#"{"id":3,"preds":[{"pos":2,"dist":[[1,0.5],[0,0.5]]},{"pos":0,"dist":[[2,0.6]]}]}"#;
        let d = validate_response(line, 3, &[0, 2], 4).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].position, 0);
        // top-k mass renormalized
        assert!((d[0].dist.prob(2) - 1.0).abs() < 1e-12);
        assert!((d[1].dist.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_excess_mass() {
        let line = r#"{"id":0,"preds":[{"pos":0,"dist":[[0,0.75],[1,0.75]]}]}"#;
        match validate_response(line, 0, &[0], 2) {
            Err(ScorerError::Protocol { line: l, reason }) => {
                assert!(reason.contains("sum to 1.5"), "{reason}");
                assert!(l.contains("0.75"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_mismatches() {
        assert!(matches!(
            validate_response(r#"{"id":1,"preds":[]}"#, 2, &[], 2),
            Err(ScorerError::Desync { expected: 2, got: 1 })
        ));
        assert!(matches!(
            validate_response(r#"{"id":0,"preds":[{"pos":1,"dist":[[0,1.0]]}]}"#, 0, &[0], 2),
            Err(ScorerError::Protocol { .. })
        ));
        assert!(matches!(
            validate_response(r#"{"id":0,"preds":[{"pos":0,"dist":[[7,1.0]]}]}"#, 0, &[0], 2),
            Err(ScorerError::Protocol { .. })
        ));
        assert!(matches!(
            validate_response("not json", 0, &[0], 2),
            Err(ScorerError::Protocol { .. })
        ));
        assert!(matches!(
            validate_response(r#"{"id":0,"error":"boom"}"#, 0, &[0], 2),
            Err(ScorerError::Remote { .. })
        ));
        assert!(matches!(
            validate_response(r#"{"id":0,"preds":[{"pos":0,"dist":[[0,-0.1],[1,0.5]]}]}"#, 0, &[0], 2),
            Err(ScorerError::Protocol { .. })
        ));
    }

    #[test]
    fn request_wire_format() {
        let r = Request {
            id: 4,
            src: vec![1, 2],
            tgt: vec![Some(3), None],
            n: 2,
            topk: 8,
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"id":4,"src":[1,2],"tgt":[3,null],"n":2,"topk":8}"#
        );
    }
}
