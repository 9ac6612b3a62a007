//! Master/worker messages and their framing.
//!
//! A frame is `len u32 LE | type u8 | payload`, where `len` counts the type
//! byte and the payload. Every payload starts with the round number (u32).

use std::io::{Read, Write};

use crate::config::TrainConfig;
use crate::data::EncryptedDataset;
use crate::error::{Error, Result};
use crate::henn::{model_from_bytes, model_to_bytes, EncryptedModel, ModelFile};
use crate::wire::{Reader, Writer};

pub const PROTOCOL_VERSION: u32 = 1;
/// Upper bound on a frame body; larger lengths are treated as corruption.
pub const MAX_FRAME: usize = 1 << 30;

const HELLO: u8 = 1;
const ASSIGN: u8 = 2;
const ROUND_DONE: u8 = 3;
const AGGREGATED: u8 = 4;
const FINISH: u8 = 5;
const ERROR: u8 = 6;

/// Everything a worker needs to take part in training.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// 1-based worker number.
    pub worker: u32,
    pub workers: u32,
    pub config: TrainConfig,
    pub model: EncryptedModel,
    pub data: EncryptedDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello { round: u32, version: u32 },
    Assign(Box<Assignment>),
    RoundDone { round: u32, model: EncryptedModel },
    Aggregated { round: u32, model: EncryptedModel },
    Finish { round: u32 },
    Error { round: u32, message: String },
}

impl Message {
    pub fn round(&self) -> u32 {
        match self {
            Message::Assign(_) => 0,
            Message::Hello { round, .. }
            | Message::RoundDone { round, .. }
            | Message::Aggregated { round, .. }
            | Message::Finish { round }
            | Message::Error { round, .. } => *round,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "HELLO",
            Message::Assign(_) => "ASSIGN",
            Message::RoundDone { .. } => "ROUND_DONE",
            Message::Aggregated { .. } => "AGGREGATED",
            Message::Finish { .. } => "FINISH",
            Message::Error { .. } => "ERROR",
        }
    }
}

fn put_model(out: &mut Vec<u8>, m: &EncryptedModel) {
    out.put_blob(&model_to_bytes(&ModelFile::Encrypted(m.clone())));
}

fn get_model(r: &mut Reader) -> Result<EncryptedModel> {
    match model_from_bytes(r.blob()?)? {
        ModelFile::Encrypted(m) => Ok(m),
        ModelFile::Plain(_) => Err(Error::Protocol("expected an encrypted model".into())),
    }
}

/// Type byte and payload of `m`.
pub fn encode_payload(m: &Message) -> (u8, Vec<u8>) {
    let mut p = Vec::new();
    p.put_u32(m.round());
    let kind = match m {
        Message::Hello { version, .. } => {
            p.put_u32(*version);
            HELLO
        }
        Message::Assign(a) => {
            p.put_u32(a.worker);
            p.put_u32(a.workers);
            p.put_blob(a.config.to_text().as_bytes());
            put_model(&mut p, &a.model);
            p.put_blob(&a.data.to_bytes());
            ASSIGN
        }
        Message::RoundDone { model, .. } => {
            put_model(&mut p, model);
            ROUND_DONE
        }
        Message::Aggregated { model, .. } => {
            put_model(&mut p, model);
            AGGREGATED
        }
        Message::Finish { .. } => FINISH,
        Message::Error { message, .. } => {
            p.put_blob(message.as_bytes());
            ERROR
        }
    };
    (kind, p)
}

pub fn decode_payload(kind: u8, payload: &[u8]) -> Result<Message> {
    let mut r = Reader::new(payload);
    let round = r.u32()?;
    let m = match kind {
        HELLO => Message::Hello {
            round,
            version: r.u32()?,
        },
        ASSIGN => {
            if round != 0 {
                return Err(Error::Protocol(format!("ASSIGN carries round {round}")));
            }
            let worker = r.u32()?;
            let workers = r.u32()?;
            let text = std::str::from_utf8(r.blob()?)
                .map_err(|_| Error::Protocol("config is not UTF-8".into()))?;
            let config = TrainConfig::parse(text)?;
            let model = get_model(&mut r)?;
            let data = EncryptedDataset::from_bytes(r.blob()?)?;
            Message::Assign(Box::new(Assignment {
                worker,
                workers,
                config,
                model,
                data,
            }))
        }
        ROUND_DONE => Message::RoundDone {
            round,
            model: get_model(&mut r)?,
        },
        AGGREGATED => Message::Aggregated {
            round,
            model: get_model(&mut r)?,
        },
        FINISH => Message::Finish { round },
        ERROR => Message::Error {
            round,
            message: String::from_utf8_lossy(r.blob()?).into_owned(),
        },
        k => return Err(Error::Protocol(format!("unknown message type {k}"))),
    };
    r.finish()?;
    Ok(m)
}

pub fn encode_frame(m: &Message) -> Vec<u8> {
    let (kind, payload) = encode_payload(m);
    let mut f = Vec::with_capacity(payload.len() + 5);
    f.put_u32(payload.len() as u32 + 1);
    f.put_u8(kind);
    f.extend_from_slice(&payload);
    f
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Message> {
    let mut r = Reader::new(bytes);
    let len = r.u32()? as usize;
    if len == 0 || len > MAX_FRAME {
        return Err(Error::Protocol(format!("bad frame length {len}")));
    }
    let body = r.take(len)?;
    r.finish()?;
    decode_payload(body[0], &body[1..])
}

pub fn write_frame(w: &mut impl Write, m: &Message) -> Result<()> {
    w.write_all(&encode_frame(m))?;
    w.flush()?;
    Ok(())
}

pub fn read_frame(r: &mut impl Read) -> Result<Message> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len == 0 || len > MAX_FRAME {
        return Err(Error::Protocol(format!("bad frame length {len}")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    decode_payload(body[0], &body[1..])
}
