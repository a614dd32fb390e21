use std::io::{self, Read};

use bytes::BytesMut;

use super::codec::{decode_frame, parse_header};
use super::{Message, ProtocolError, HEADER_LEN};

const MIN_READ: usize = 64 * 1024;

/// Incremental frame reassembly for one connection.
///
/// Bytes can arrive in arbitrary chunks; complete frames are split off the
/// internal buffer without copying their payload.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: BytesMut,
    state_dim: Option<u32>,
}

impl FrameDecoder {
    pub fn new(state_dim: Option<u32>) -> Self {
        Self {
            buf: BytesMut::new(),
            state_dim,
        }
    }

    pub fn set_state_dim(&mut self, state_dim: Option<u32>) {
        self.state_dim = state_dim;
    }

    pub fn state_dim(&self) -> Option<u32> {
        self.state_dim
    }

    pub fn extend(&mut self, data: &[u8]) {
        self.buf.extend_from_slice(data);
    }

    /// Bytes buffered but not yet returned as messages.
    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Bytes still missing before the next frame is complete (0 if one is ready).
    pub fn needed(&self) -> Result<usize, ProtocolError> {
        match parse_header(&self.buf) {
            Ok((_, len)) => Ok((HEADER_LEN + len).saturating_sub(self.buf.len())),
            Err(ProtocolError::NeedMore(n)) => Ok(n),
            Err(e) => Err(e),
        }
    }

    /// Pops the next complete message with its frame size, or `Ok(None)` if
    /// more bytes are needed.
    pub fn next_message(&mut self) -> Result<Option<(Message, usize)>, ProtocolError> {
        let (msg_type, len) = match parse_header(&self.buf) {
            Ok(h) => h,
            Err(ProtocolError::NeedMore(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let total = HEADER_LEN + len;
        if self.buf.len() < total {
            return Ok(None);
        }
        let frame = self.buf.split_to(total).freeze();
        let msg = decode_frame(msg_type, frame.slice(HEADER_LEN..), self.state_dim)?;
        Ok(Some((msg, total)))
    }

    /// Performs one `read` call into the buffer, sized to the pending frame.
    /// Returns the byte count read; 0 means end of stream.
    pub fn read_from<R: Read + ?Sized>(&mut self, reader: &mut R) -> io::Result<usize> {
        let want = self
            .needed()
            .unwrap_or(MIN_READ)
            .max(MIN_READ);
        let start = self.buf.len();
        self.buf.resize(start + want, 0);
        let res = reader.read(&mut self.buf[start..]);
        let n = *res.as_ref().unwrap_or(&0);
        self.buf.truncate(start + n);
        res
    }
}
