//! Length-prefixed frames: `[u32 big-endian payload length][payload]`.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::message::Message;

/// Largest accepted payload (16 MiB).
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame of {0} bytes exceeds the {MAX_FRAME_LEN} byte limit")]
    FrameTooLarge(usize),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("unknown message type {0:?}")]
    UnknownMessage(String),
    #[error("peer closed the connection")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_frame(msg: &Message) -> Result<Vec<u8>, FrameError> {
    let payload = msg.encode();
    if payload.len() > MAX_FRAME_LEN {
        return Err(FrameError::FrameTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(4 + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload.as_bytes());
    Ok(out)
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Message, FrameError> {
    let header: [u8; 4] = bytes
        .get(..4)
        .and_then(|h| h.try_into().ok())
        .ok_or_else(|| FrameError::Protocol("truncated frame header".into()))?;
    let len = check_len(header)?;
    let payload = &bytes[4..];
    if payload.len() < len {
        return Err(FrameError::Protocol(format!("truncated payload: {} of {len} bytes", payload.len())));
    }
    if payload.len() > len {
        return Err(FrameError::Protocol(format!("{} trailing bytes after frame", payload.len() - len)));
    }
    Message::decode(payload)
}

fn check_len(header: [u8; 4]) -> Result<usize, FrameError> {
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_LEN {
        return Err(FrameError::FrameTooLarge(len));
    }
    Ok(len)
}

/// Reads one raw payload. A clean end of stream before the header is
/// [`FrameError::Closed`]; the length bound is checked before the payload
/// is read.
pub fn read_payload<R: Read>(reader: &mut R) -> Result<Vec<u8>, FrameError> {
    let mut header = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Err(FrameError::Closed),
            Ok(0) => return Err(FrameError::Protocol("truncated frame header".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = check_len(header)?;
    let mut payload = vec![0u8; len];
    reader.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Protocol("truncated payload".into()),
        _ => e.into(),
    })?;
    Ok(payload)
}

pub fn read_message<R: Read>(reader: &mut R) -> Result<Message, FrameError> {
    Message::decode(&read_payload(reader)?)
}

pub fn write_message<W: Write>(writer: &mut W, msg: &Message) -> Result<(), FrameError> {
    writer.write_all(&encode_frame(msg)?)?;
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_layout() {
        let bytes = encode_frame(&Message::Hello { protocol_version: 1 }).unwrap();
        let payload = br#"{"protocol_version":1,"type":"HELLO"}"#;
        assert_eq!(&bytes[..4], &(payload.len() as u32).to_be_bytes());
        assert_eq!(&bytes[4..], payload);
        assert_eq!(decode_frame(&bytes).unwrap(), Message::Hello { protocol_version: 1 });
    }

    #[test]
    fn empty_payload_is_protocol_error() {
        assert!(matches!(decode_frame(&[0, 0, 0, 0]), Err(FrameError::Protocol(_))));
    }

    #[test]
    fn oversize_rejected_before_payload() {
        let header = (1u32 << 25).to_be_bytes();
        assert!(matches!(decode_frame(&header), Err(FrameError::FrameTooLarge(n)) if n == 1 << 25));
        // The reader must not wait for 32 MiB that never arrives.
        let mut cursor = io::Cursor::new(header.to_vec());
        assert!(matches!(read_payload(&mut cursor), Err(FrameError::FrameTooLarge(_))));
    }

    #[test]
    fn truncation_detected() {
        let bytes = encode_frame(&Message::Hello { protocol_version: 1 }).unwrap();
        for cut in 0..bytes.len() {
            assert!(decode_frame(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut cursor = io::Cursor::new(bytes[..bytes.len() - 1].to_vec());
        assert!(matches!(read_payload(&mut cursor), Err(FrameError::Protocol(_))));
        assert!(matches!(read_payload(&mut io::Cursor::new(Vec::new())), Err(FrameError::Closed)));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_frame(&Message::Hello { protocol_version: 1 }).unwrap();
        bytes.push(b' ');
        assert!(matches!(decode_frame(&bytes), Err(FrameError::Protocol(_))));
    }
}
