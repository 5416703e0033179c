//! Line-delimited JSON protocol spoken with external agents and validators.
//!
//! Every message is one JSON object per line with a `type` tag. The harness
//! opens with `hello`; the peer must answer `hello` with the same protocol
//! number before anything else is exchanged.
//!
//! Endpoints are either `host:port` (TCP) or a shell command whose stdin and
//! stdout carry the protocol.

use crate::provenance::{TOOL, VERSION};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;
use thiserror::Error;

pub const PROTOCOL: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HarnessMsg {
    Hello {
        tool: String,
        version: String,
        protocol: u32,
    },
    Init {
        goal: String,
        mode: String,
        config: Value,
        /// Prior history assembled for the selected context mode.
        context: Value,
    },
    Observe {
        step: usize,
        observation: Value,
        #[serde(rename = "contextTokens")]
        context_tokens: u64,
    },
    Question {
        id: String,
        question: String,
        /// Metadata entries of the evidence steps.
        evidence: Value,
    },
    Done {
        report: Value,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PeerMsg {
    Hello {
        protocol: u32,
        #[serde(default)]
        name: String,
    },
    Act {
        action: String,
    },
    Answer {
        id: String,
        answer: String,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    #[error("cannot reach `{endpoint}`: {message}")]
    Connect { endpoint: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("peer closed the connection")]
    Closed,
    #[error("malformed message `{line}`: {message}")]
    Malformed { line: String, message: String },
    #[error("expected {expected}, got {got}")]
    Unexpected { expected: &'static str, got: String },
    #[error("peer speaks protocol {0}, expected {PROTOCOL}")]
    Version(u32),
}

/// A connected peer. Reads happen on a helper thread so that every receive
/// can be bounded by the timeout regardless of transport.
pub struct Channel {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    child: Option<Child>,
    pub peer_name: String,
}

impl Channel {
    pub fn from_parts<R, W>(reader: R, writer: W, timeout: Duration) -> Self
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Self {
            writer: Box::new(writer),
            lines: rx,
            timeout,
            child: None,
            peer_name: String::new(),
        }
    }

    /// Connects to `endpoint` and performs the handshake.
    pub fn connect(endpoint: &str, timeout: Duration) -> Result<Self, WireError> {
        let connect_err = |e: std::io::Error| WireError::Connect {
            endpoint: endpoint.to_string(),
            message: e.to_string(),
        };
        let addr: Option<SocketAddr> = endpoint
            .strip_prefix("tcp:")
            .unwrap_or(endpoint)
            .to_socket_addrs()
            .ok()
            .and_then(|mut a| a.next());
        let mut ch = match addr {
            Some(addr) => {
                let stream = TcpStream::connect_timeout(&addr, timeout).map_err(connect_err)?;
                let reader = BufReader::new(stream.try_clone().map_err(connect_err)?);
                Self::from_parts(reader, stream, timeout)
            }
            None => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(endpoint)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(connect_err)?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
                let mut ch = Self::from_parts(stdout, stdin, timeout);
                ch.child = Some(child);
                ch
            }
        };
        ch.handshake()?;
        Ok(ch)
    }

    pub fn handshake(&mut self) -> Result<(), WireError> {
        self.send(&HarnessMsg::Hello {
            tool: TOOL.into(),
            version: VERSION.into(),
            protocol: PROTOCOL,
        })?;
        match self.recv()? {
            PeerMsg::Hello { protocol, name } if protocol == PROTOCOL => {
                self.peer_name = name;
                Ok(())
            }
            PeerMsg::Hello { protocol, .. } => Err(WireError::Version(protocol)),
            other => Err(WireError::Unexpected {
                expected: "hello",
                got: format!("{other:?}"),
            }),
        }
    }

    pub fn send(&mut self, msg: &HarnessMsg) -> Result<(), WireError> {
        let mut line = serde_json::to_string(msg).expect("message serializes");
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| WireError::Io(e.to_string()))
    }

    pub fn recv(&mut self) -> Result<PeerMsg, WireError> {
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(WireError::Io(e.to_string())),
            Err(RecvTimeoutError::Timeout) => return Err(WireError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(WireError::Closed),
        };
        serde_json::from_str(&line).map_err(|e| WireError::Malformed {
            line,
            message: e.to_string(),
        })
    }

    pub fn request(&mut self, msg: &HarnessMsg) -> Result<PeerMsg, WireError> {
        self.send(msg)?;
        self.recv()
    }
}

impl Drop for Channel {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    fn serve(reply: impl Fn(HarnessMsg) -> Option<String> + Send + 'static) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut w = stream.try_clone().unwrap();
            for line in BufReader::new(stream).lines() {
                let msg: HarnessMsg = serde_json::from_str(&line.unwrap()).unwrap();
                if let Some(r) = reply(msg) {
                    writeln!(w, "{r}").unwrap();
                }
            }
        });
        addr
    }

    #[test]
    fn tcp_handshake_and_request() {
        let addr = serve(|m| match m {
            HarnessMsg::Hello { .. } => Some(r#"{"type":"hello","protocol":1,"name":"echo"}"#.into()),
            HarnessMsg::Question { id, .. } => {
                Some(format!(r#"{{"type":"answer","id":"{id}","answer":"yes"}}"#))
            }
            _ => None,
        });
        let mut ch = Channel::connect(&addr, DEFAULT_TIMEOUT).unwrap();
        assert_eq!(ch.peer_name, "echo");
        let r = ch
            .request(&HarnessMsg::Question {
                id: "q1".into(),
                question: "?".into(),
                evidence: Value::Null,
            })
            .unwrap();
        assert_eq!(
            r,
            PeerMsg::Answer {
                id: "q1".into(),
                answer: "yes".into()
            }
        );
    }

    #[test]
    fn version_mismatch_and_garbage() {
        let addr = serve(|_| Some(r#"{"type":"hello","protocol":9}"#.into()));
        assert!(matches!(Channel::connect(&addr, DEFAULT_TIMEOUT), Err(WireError::Version(9))));
        let addr = serve(|_| Some("not json".into()));
        assert!(matches!(
            Channel::connect(&addr, DEFAULT_TIMEOUT),
            Err(WireError::Malformed { .. })
        ));
    }

    #[test]
    fn silent_peer_times_out() {
        let addr = serve(|_| None);
        let t = Duration::from_millis(100);
        assert_eq!(Channel::connect(&addr, t).err(), Some(WireError::Timeout(t)));
    }

    #[test]
    fn stdio_peer() {
        let cmd = r#"read l; echo '{"type":"hello","protocol":1,"name":"sh"}'; read l; echo '{"type":"act","action":"MoveAhead"}'"#;
        let mut ch = Channel::connect(cmd, DEFAULT_TIMEOUT).unwrap();
        let r = ch
            .request(&HarnessMsg::Observe {
                step: 0,
                observation: Value::Null,
                context_tokens: 0,
            })
            .unwrap();
        assert_eq!(r, PeerMsg::Act { action: "MoveAhead".into() });
        assert_eq!(ch.recv(), Err(WireError::Closed));
    }

    #[test]
    fn unreachable_command_reports_closed() {
        assert!(Channel::connect("exit 0", Duration::from_secs(5)).is_err());
    }
}
