//! Framed wire format for the three handshake messages.
//!
//! ```text
//! frame   = type:u8 | length:u16be | payload
//! M1      = TK_u:32 | T_u:u32be | R_1:compressed point   (69 bytes on P-256)
//! M2      = T_ms:u32be | Auth_ms:32                       (36 bytes)
//! M3      = Auth_u:32                                     (32 bytes)
//! ```

use std::io::{self, Read};

use thiserror::Error;

use crate::crypto::{CryptoError, Curve, Digest32, Point};

pub const HEADER_LEN: usize = 3;
pub const TYPE_M1: u8 = 0x01;
pub const TYPE_M2: u8 = 0x02;
pub const TYPE_M3: u8 = 0x03;
pub const M2_PAYLOAD_LEN: usize = 36;
pub const M3_PAYLOAD_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("malformed point: {0}")]
    MalformedPoint(CryptoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageType {
    M1,
    M2,
    M3,
}

impl MessageType {
    pub fn code(self) -> u8 {
        match self {
            MessageType::M1 => TYPE_M1,
            MessageType::M2 => TYPE_M2,
            MessageType::M3 => TYPE_M3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, CodecError> {
        match code {
            TYPE_M1 => Ok(MessageType::M1),
            TYPE_M2 => Ok(MessageType::M2),
            TYPE_M3 => Ok(MessageType::M3),
            other => Err(CodecError::UnknownType(other)),
        }
    }
}

/// `<TK_u, T_u, R_1>`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct M1 {
    pub token: Digest32,
    pub t_u: u32,
    pub r1: Point,
}

/// `<T_ms, Auth_ms>`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct M2 {
    pub t_ms: u32,
    pub auth: Digest32,
}

/// `<Auth_u>`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct M3 {
    pub auth: Digest32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    M1(M1),
    M2(M2),
    M3(M3),
}

impl Message {
    pub fn message_type(&self) -> MessageType {
        match self {
            Message::M1(_) => MessageType::M1,
            Message::M2(_) => MessageType::M2,
            Message::M3(_) => MessageType::M3,
        }
    }
}

/// Payload length of an M1 on `curve`.
pub fn m1_payload_len(curve: &Curve) -> usize {
    32 + 4 + curve.point_len()
}

pub fn payload_len(curve: &Curve, ty: MessageType) -> usize {
    match ty {
        MessageType::M1 => m1_payload_len(curve),
        MessageType::M2 => M2_PAYLOAD_LEN,
        MessageType::M3 => M3_PAYLOAD_LEN,
    }
}

/// A parsed but not yet interpreted frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame<'a> {
    pub msg_type: MessageType,
    pub payload: &'a [u8],
}

impl<'a> Frame<'a> {
    pub fn parse(bytes: &'a [u8]) -> Result<Self, CodecError> {
        if bytes.len() < HEADER_LEN {
            return Err(CodecError::Truncated { needed: HEADER_LEN, available: bytes.len() });
        }
        let msg_type = MessageType::from_code(bytes[0])?;
        let length = u16::from_be_bytes([bytes[1], bytes[2]]) as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len() < length {
            return Err(CodecError::Truncated { needed: length, available: body.len() });
        }
        if body.len() > length {
            return Err(CodecError::LengthMismatch { expected: length, found: body.len() });
        }
        Ok(Frame { msg_type, payload: body })
    }
}

fn frame(ty: MessageType, payload: &[u8]) -> Vec<u8> {
    let len = u16::try_from(payload.len()).expect("payload fits a u16 length");
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.push(ty.code());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(payload);
    out
}

pub fn encode_message(curve: &Curve, msg: &Message) -> Vec<u8> {
    let mut payload = Vec::with_capacity(payload_len(curve, msg.message_type()));
    match msg {
        Message::M1(m) => {
            debug_assert!(!m.r1.is_identity(), "R_1 must not be the identity");
            payload.extend_from_slice(m.token.as_bytes());
            payload.extend_from_slice(&m.t_u.to_be_bytes());
            payload.extend_from_slice(&curve.encode_point(&m.r1));
        }
        Message::M2(m) => {
            payload.extend_from_slice(&m.t_ms.to_be_bytes());
            payload.extend_from_slice(m.auth.as_bytes());
        }
        Message::M3(m) => payload.extend_from_slice(m.auth.as_bytes()),
    }
    frame(msg.message_type(), &payload)
}

pub fn decode_message(curve: &Curve, bytes: &[u8]) -> Result<Message, CodecError> {
    let frame = Frame::parse(bytes)?;
    let expected = payload_len(curve, frame.msg_type);
    if frame.payload.len() != expected {
        return Err(CodecError::LengthMismatch { expected, found: frame.payload.len() });
    }
    let p = frame.payload;
    let digest = |b: &[u8]| Digest32::from_slice(b).expect("fixed 32-byte slice");
    let timestamp = |b: &[u8]| u32::from_be_bytes(b.try_into().expect("fixed 4-byte slice"));
    Ok(match frame.msg_type {
        MessageType::M1 => {
            let r1 = curve.decode_point(&p[36..]).map_err(CodecError::MalformedPoint)?;
            if r1.is_identity() {
                return Err(CodecError::MalformedPoint(CryptoError::MalformedPoint("identity R_1")));
            }
            Message::M1(M1 { token: digest(&p[..32]), t_u: timestamp(&p[32..36]), r1 })
        }
        MessageType::M2 => Message::M2(M2 { t_ms: timestamp(&p[..4]), auth: digest(&p[4..]) }),
        MessageType::M3 => Message::M3(M3 { auth: digest(p) }),
    })
}

/// Reads one complete frame (header plus declared payload) from a stream.
pub fn read_frame<R: Read>(reader: &mut R) -> io::Result<Vec<u8>> {
    let mut header = [0u8; HEADER_LEN];
    reader.read_exact(&mut header)?;
    let length = u16::from_be_bytes([header[1], header[2]]) as usize;
    let mut out = Vec::with_capacity(HEADER_LEN + length);
    out.extend_from_slice(&header);
    out.resize(HEADER_LEN + length, 0);
    reader.read_exact(&mut out[HEADER_LEN..])?;
    Ok(out)
}
