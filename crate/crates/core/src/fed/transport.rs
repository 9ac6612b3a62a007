//! Message transports: length-prefixed frames over TCP, and an in-process
//! loopback with the same contract.

use std::io::{ErrorKind, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use super::protocol::{decode_payload, encode_frame, Message, MAX_FRAME};
use crate::error::{Error, Result};

pub trait Transport: Send {
    fn send(&mut self, m: &Message) -> Result<()>;

    /// Next message, waiting at most `timeout` (forever when `None`). A
    /// timeout leaves the connection usable.
    fn recv(&mut self, timeout: Option<Duration>) -> Result<Message>;

    /// Human-readable name of the other end.
    fn peer(&self) -> String;
}

fn timed_out(peer: String, t: Duration) -> Error {
    Error::Timeout {
        worker: peer,
        secs: t.as_secs_f64(),
    }
}

pub struct TcpTransport {
    stream: TcpStream,
    peer: String,
    buf: Vec<u8>,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        stream.set_nonblocking(false)?;
        let peer = stream
            .peer_addr()
            .map(|a| a.to_string())
            .unwrap_or_else(|_| "unknown peer".into());
        Ok(TcpTransport {
            stream,
            peer,
            buf: Vec::new(),
        })
    }

    pub fn connect(addr: &str) -> Result<Self> {
        Self::new(TcpStream::connect(addr)?)
    }

    fn take_frame(&mut self) -> Result<Option<Message>> {
        if self.buf.len() < 4 {
            return Ok(None);
        }
        let len = u32::from_le_bytes(self.buf[..4].try_into().unwrap()) as usize;
        if len == 0 || len > MAX_FRAME {
            return Err(Error::Protocol(format!("bad frame length {len}")));
        }
        if self.buf.len() < 4 + len {
            return Ok(None);
        }
        let m = decode_payload(self.buf[4], &self.buf[5..4 + len]);
        self.buf.drain(..4 + len);
        m.map(Some)
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, m: &Message) -> Result<()> {
        self.stream.write_all(&encode_frame(m))?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Message> {
        let deadline = timeout.map(|t| (Instant::now() + t, t));
        let mut chunk = vec![0u8; 1 << 16];
        loop {
            if let Some(m) = self.take_frame()? {
                return Ok(m);
            }
            let wait = match deadline {
                Some((d, t)) => {
                    let now = Instant::now();
                    if now >= d {
                        return Err(timed_out(self.peer.clone(), t));
                    }
                    Some((d - now).max(Duration::from_millis(1)))
                }
                None => None,
            };
            self.stream.set_read_timeout(wait)?;
            match self.stream.read(&mut chunk) {
                Ok(0) => {
                    return Err(Error::Protocol(format!(
                        "{} closed the connection",
                        self.peer
                    )))
                }
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e)
                    if matches!(
                        e.kind(),
                        ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted
                    ) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn peer(&self) -> String {
        self.peer.clone()
    }
}

/// One end of an in-process connection. Frames travel as encoded bytes so
/// the codec is exercised exactly as over TCP.
pub struct LoopbackTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    name: String,
}

/// A connected pair `(a, b)`: what `a` sends, `b` receives.
pub fn loopback_pair(a_name: &str, b_name: &str) -> (LoopbackTransport, LoopbackTransport) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (
        LoopbackTransport {
            tx: tx_a,
            rx: rx_a,
            name: b_name.into(),
        },
        LoopbackTransport {
            tx: tx_b,
            rx: rx_b,
            name: a_name.into(),
        },
    )
}

impl Transport for LoopbackTransport {
    fn send(&mut self, m: &Message) -> Result<()> {
        self.tx
            .send(encode_frame(m))
            .map_err(|_| Error::Protocol(format!("{} closed the connection", self.name)))
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Message> {
        let frame = match timeout {
            Some(t) => self.rx.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => timed_out(self.name.clone(), t),
                RecvTimeoutError::Disconnected => {
                    Error::Protocol(format!("{} closed the connection", self.name))
                }
            })?,
            None => self
                .rx
                .recv()
                .map_err(|_| Error::Protocol(format!("{} closed the connection", self.name)))?,
        };
        super::protocol::decode_frame(&frame)
    }

    fn peer(&self) -> String {
        self.name.clone()
    }
}
