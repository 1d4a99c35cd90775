//! Host side of the newline-delimited JSON policy protocol.
//!
//! The host sends `{"type":"hello","v":1}` and expects the same back. Each
//! decision is one `query` line answered by one `response` line. A reader
//! thread forwards incoming lines over a channel so every wait can time out.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Policy, PolicyError, PolicyQuery};
use crate::episode::extract_tag;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Where the external policy lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    /// Spawn a process and talk over its stdin/stdout.
    Stdio { program: String, args: Vec<String> },
    /// Connect to `host:port`.
    Tcp(String),
}

impl std::str::FromStr for Transport {
    type Err = String;
    /// `tcp:HOST:PORT`, `tcp:PORT` or `stdio:COMMAND ARGS...`.
    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(rest) = s.strip_prefix("tcp:") {
            let addr = if rest.contains(':') {
                rest.to_string()
            } else {
                format!("127.0.0.1:{rest}")
            };
            Ok(Transport::Tcp(addr))
        } else if let Some(rest) = s.strip_prefix("stdio:") {
            let mut parts = rest.split_whitespace().map(str::to_string);
            let program = parts.next().ok_or("stdio transport needs a command")?;
            Ok(Transport::Stdio {
                program,
                args: parts.collect(),
            })
        } else {
            Err(format!(
                "transport must start with tcp: or stdio:, got {s:?}"
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    #[serde(rename = "type")]
    pub kind: String,
    pub v: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireQuery {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: String,
    pub decision_index: usize,
    pub instruction: String,
    pub panorama_png_b64: String,
    pub topdown_png_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: String,
    pub think: String,
    pub think_summary: String,
    pub action: String,
}

impl WireQuery {
    pub fn from_query(q: &PolicyQuery) -> Self {
        let b64 = base64::engine::general_purpose::STANDARD;
        Self {
            v: PROTOCOL_VERSION,
            kind: "query".into(),
            decision_index: q.decision_index,
            instruction: q.instruction.clone(),
            panorama_png_b64: b64.encode(q.panorama.to_png()),
            topdown_png_b64: b64.encode(q.topdown.to_png()),
        }
    }

    pub fn decode_png(field: &str) -> Result<Vec<u8>, String> {
        base64::engine::general_purpose::STANDARD
            .decode(field)
            .map_err(|e| e.to_string())
    }
}

impl WireResponse {
    pub fn new(think: &str, think_summary: &str, action: &str) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            kind: "response".into(),
            think: think.into(),
            think_summary: think_summary.into(),
            action: action.into(),
        }
    }

    /// Convert tagged text (as produced by built-in policies) to wire form.
    pub fn from_tagged(text: &str) -> Self {
        let get = |t| extract_tag(text, t).unwrap_or("").trim().to_string();
        Self::new(&get("think"), &get("think_summary"), &get("action"))
    }

    /// Tagged text handed to the response parser.
    pub fn to_tagged(&self) -> String {
        format!(
            "<think>{}</think><think_summary>{}</think_summary><action>{}</action>",
            self.think, self.think_summary, self.action
        )
    }
}

/// A policy served by another process over stdio or TCP.
pub struct ExternalPolicy {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    timeout: Duration,
    /// Responses still owed for queries that timed out.
    stale: usize,
    label: String,
}

fn spawn_reader<R: Read + Send + 'static>(r: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let reader = BufReader::new(r);
        for line in reader.lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    rx
}

impl ExternalPolicy {
    /// Connect and complete the handshake.
    pub fn connect(transport: &Transport, timeout: Duration) -> Result<Self, PolicyError> {
        let (writer, lines, child, label): (Box<dyn Write + Send>, _, _, _) = match transport {
            Transport::Tcp(addr) => {
                let stream = TcpStream::connect(addr)?;
                stream.set_nodelay(true).ok();
                let rx = spawn_reader(stream.try_clone()?);
                (Box::new(stream), rx, None, format!("tcp:{addr}"))
            }
            Transport::Stdio { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()?;
                let stdin = child.stdin.take().expect("piped stdin");
                let rx = spawn_reader(child.stdout.take().expect("piped stdout"));
                (Box::new(stdin), rx, Some(child), format!("stdio:{program}"))
            }
        };
        let mut p = ExternalPolicy {
            writer,
            lines,
            child,
            timeout,
            stale: 0,
            label,
        };
        p.send(&Hello {
            kind: "hello".into(),
            v: PROTOCOL_VERSION,
        })?;
        let line = p.recv()?;
        let hello: Hello = serde_json::from_str(&line)
            .map_err(|e| PolicyError::ProtocolViolation(format!("bad hello: {e}")))?;
        if hello.kind != "hello" || hello.v != PROTOCOL_VERSION {
            return Err(PolicyError::ProtocolViolation(format!(
                "expected hello v{PROTOCOL_VERSION}, got {line}"
            )));
        }
        Ok(p)
    }

    fn send<T: Serialize>(&mut self, msg: &T) -> Result<(), PolicyError> {
        let mut line = serde_json::to_vec(msg).expect("message serializes");
        line.push(b'\n');
        self.writer.write_all(&line)?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<String, PolicyError> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(PolicyError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(PolicyError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(PolicyError::TransportClosed),
        }
    }
}

impl Drop for ExternalPolicy {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Policy for ExternalPolicy {
    fn name(&self) -> String {
        format!("external({})", self.label)
    }

    fn concurrent_safe(&self) -> bool {
        false
    }

    fn respond(&mut self, query: &PolicyQuery) -> Result<String, PolicyError> {
        // Drain answers to queries that previously timed out.
        while self.stale > 0 {
            match self.lines.recv_timeout(Duration::from_millis(1)) {
                Ok(_) => self.stale -= 1,
                Err(_) => break,
            }
        }
        self.send(&WireQuery::from_query(query))?;
        let line = match self.recv() {
            Ok(l) => l,
            Err(PolicyError::Timeout(t)) => {
                self.stale += 1;
                return Err(PolicyError::Timeout(t));
            }
            Err(e) => return Err(e),
        };
        let resp: WireResponse = serde_json::from_str(&line)
            .map_err(|e| PolicyError::ProtocolViolation(format!("{e}: {line}")))?;
        if resp.kind != "response" || resp.v != PROTOCOL_VERSION {
            return Err(PolicyError::ProtocolViolation(format!(
                "expected response v{PROTOCOL_VERSION}, got type {:?} v{}",
                resp.kind, resp.v
            )));
        }
        Ok(resp.to_tagged())
    }
}
