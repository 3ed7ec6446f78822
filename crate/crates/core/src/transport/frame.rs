//! Frame layout, all integers big-endian:
//!
//! ```text
//! header_len: u32 | header: JSON {type, task_id, body_len} | body | crc32(body): u32
//! ```

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

pub const MAX_BODY_LEN: u64 = 256 * 1024 * 1024;
const MAX_HEADER_LEN: u32 = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FrameType {
    Assign,
    Result,
    Cancel,
    Redo,
    Ack,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub kind: FrameType,
    pub task_id: Option<String>,
    pub body: Vec<u8>,
}

impl Envelope {
    pub fn new(kind: FrameType, task_id: Option<&str>, body: Vec<u8>) -> Self {
        Self { kind, task_id: task_id.map(str::to_string), body }
    }

    pub fn ack(task_id: Option<&str>) -> Self {
        Self::new(FrameType::Ack, task_id, Vec::new())
    }

    pub fn error(task_id: Option<&str>, message: &str) -> Self {
        Self::new(FrameType::Error, task_id, message.as_bytes().to_vec())
    }

    pub fn body_text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    #[serde(rename = "type")]
    kind: FrameType,
    task_id: Option<String>,
    body_len: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("frame body checksum mismatch")]
    ChecksumMismatch,
    #[error("truncated frame")]
    Truncated,
    #[error("frame body of {0} bytes exceeds limit")]
    OversizeFrame(u64),
    #[error("bad frame header: {0}")]
    BadHeader(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

fn header_bytes(env: &Envelope) -> Result<Vec<u8>, FrameError> {
    if env.body.len() as u64 > MAX_BODY_LEN {
        return Err(FrameError::OversizeFrame(env.body.len() as u64));
    }
    let header = Header { kind: env.kind, task_id: env.task_id.clone(), body_len: env.body.len() as u64 };
    Ok(serde_json::to_vec(&header).expect("header serializes"))
}

pub fn encode_frame(env: &Envelope) -> Result<Vec<u8>, FrameError> {
    let header = header_bytes(env)?;
    let mut out = Vec::with_capacity(header.len() + env.body.len() + 8);
    out.extend_from_slice(&(header.len() as u32).to_be_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&env.body);
    out.extend_from_slice(&crc32fast::hash(&env.body).to_be_bytes());
    Ok(out)
}

fn parse_header(bytes: &[u8]) -> Result<Header, FrameError> {
    let header: Header = serde_json::from_slice(bytes).map_err(|e| FrameError::BadHeader(e.to_string()))?;
    if header.body_len > MAX_BODY_LEN {
        return Err(FrameError::OversizeFrame(header.body_len));
    }
    Ok(header)
}

fn check_header_len(len: u32) -> Result<usize, FrameError> {
    if len > MAX_HEADER_LEN {
        return Err(FrameError::BadHeader(format!("header length {len} exceeds limit")));
    }
    Ok(len as usize)
}

/// Decodes one frame from the front of `buf`, returning it and the bytes consumed.
pub fn decode_frame(buf: &[u8]) -> Result<(Envelope, usize), FrameError> {
    let len_bytes: [u8; 4] = buf.get(..4).ok_or(FrameError::Truncated)?.try_into().expect("4 bytes");
    let header_len = check_header_len(u32::from_be_bytes(len_bytes))?;
    let header = parse_header(buf.get(4..4 + header_len).ok_or(FrameError::Truncated)?)?;
    let body_start = 4 + header_len;
    let body_end = body_start + header.body_len as usize;
    let body = buf.get(body_start..body_end).ok_or(FrameError::Truncated)?;
    let crc: [u8; 4] = buf.get(body_end..body_end + 4).ok_or(FrameError::Truncated)?.try_into().expect("4 bytes");
    if crc32fast::hash(body) != u32::from_be_bytes(crc) {
        return Err(FrameError::ChecksumMismatch);
    }
    Ok((Envelope { kind: header.kind, task_id: header.task_id, body: body.to_vec() }, body_end + 4))
}

pub fn send_frame<W: Write>(conn: &mut W, env: &Envelope) -> Result<(), FrameError> {
    let header = header_bytes(env)?;
    conn.write_all(&(header.len() as u32).to_be_bytes())?;
    conn.write_all(&header)?;
    conn.write_all(&env.body)?;
    conn.write_all(&crc32fast::hash(&env.body).to_be_bytes())?;
    conn.flush()?;
    Ok(())
}

fn read_exact<R: Read>(conn: &mut R, buf: &mut [u8]) -> Result<(), FrameError> {
    conn.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })
}

pub fn recv_frame<R: Read>(conn: &mut R) -> Result<Envelope, FrameError> {
    let mut len = [0u8; 4];
    read_exact(conn, &mut len)?;
    let mut header = vec![0u8; check_header_len(u32::from_be_bytes(len))?];
    read_exact(conn, &mut header)?;
    let header = parse_header(&header)?;
    let mut body = Vec::new();
    let got = conn.by_ref().take(header.body_len).read_to_end(&mut body)?;
    if got as u64 != header.body_len {
        return Err(FrameError::Truncated);
    }
    let mut crc = [0u8; 4];
    read_exact(conn, &mut crc)?;
    if crc32fast::hash(&body) != u32::from_be_bytes(crc) {
        return Err(FrameError::ChecksumMismatch);
    }
    Ok(Envelope { kind: header.kind, task_id: header.task_id, body })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn ack_round_trips() {
        let env = Envelope::ack(Some("t0"));
        let mut wire = Vec::new();
        send_frame(&mut wire, &env).unwrap();
        assert_eq!(wire, encode_frame(&env).unwrap());
        assert_eq!(recv_frame(&mut Cursor::new(&wire)).unwrap(), env);
        assert_eq!(decode_frame(&wire).unwrap(), (env, wire.len()));
    }

    #[test]
    fn header_is_json_with_declared_length() {
        let env = Envelope::new(FrameType::Assign, None, vec![1, 2, 3]);
        let wire = encode_frame(&env).unwrap();
        let hlen = u32::from_be_bytes(wire[..4].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&wire[4..4 + hlen]).unwrap();
        assert_eq!(header["type"], "ASSIGN");
        assert_eq!(header["body_len"], 3);
        assert!(header["task_id"].is_null());
        assert_eq!(&wire[4 + hlen..4 + hlen + 3], &[1, 2, 3]);
        assert_eq!(wire.len(), 4 + hlen + 3 + 4);
    }

    #[test]
    fn corrupted_body_detected() {
        let env = Envelope::new(FrameType::Result, Some("t1"), b"payload".to_vec());
        let mut wire = encode_frame(&env).unwrap();
        let body_at = wire.len() - 4 - 3;
        wire[body_at] ^= 0x40;
        assert!(matches!(recv_frame(&mut Cursor::new(&wire)), Err(FrameError::ChecksumMismatch)));
        assert!(matches!(decode_frame(&wire), Err(FrameError::ChecksumMismatch)));
    }

    #[test]
    fn short_body_is_truncated() {
        let env = Envelope::new(FrameType::Result, Some("t1"), b"payload".to_vec());
        let wire = encode_frame(&env).unwrap();
        let short = &wire[..wire.len() - 6];
        assert!(matches!(recv_frame(&mut Cursor::new(short)), Err(FrameError::Truncated)));
        assert!(matches!(decode_frame(short), Err(FrameError::Truncated)));
    }

    #[test]
    fn oversize_declared_body_rejected() {
        let header = br#"{"type":"ACK","task_id":null,"body_len":268435457}"#;
        let mut wire = (header.len() as u32).to_be_bytes().to_vec();
        wire.extend_from_slice(header);
        assert!(matches!(recv_frame(&mut Cursor::new(&wire)), Err(FrameError::OversizeFrame(_))));
    }

    #[test]
    fn unknown_type_is_bad_header() {
        let header = br#"{"type":"NOPE","task_id":null,"body_len":0}"#;
        let mut wire = (header.len() as u32).to_be_bytes().to_vec();
        wire.extend_from_slice(header);
        wire.extend_from_slice(&crc32fast::hash(&[]).to_be_bytes());
        assert!(matches!(decode_frame(&wire), Err(FrameError::BadHeader(_))));
    }
}
