use std::io::{self, Write};

use bytes::{Buf, BufMut, Bytes};

use super::*;

const HELLO_LEN: usize = 17;
const HELLO_ACK_LEN: usize = 25;
const STATS_LEN: usize = StatsSnapshot::FIELD_COUNT * 8;

fn encode_err(msg: impl Into<String>) -> ProtocolError {
    ProtocolError::Encode(msg.into())
}

fn malformed(msg: impl Into<String>) -> ProtocolError {
    ProtocolError::Malformed(msg.into())
}

/// Common state dimension of a record list; `None` for an empty list.
fn records_dim<'a>(mut experiences: impl Iterator<Item = &'a Experience>) -> Result<Option<u32>, ProtocolError> {
    let Some(first) = experiences.next() else {
        return Ok(None);
    };
    let dim = first
        .state_dim()
        .ok_or_else(|| encode_err("state and next_state lengths differ"))?;
    for e in experiences {
        if e.state.len() != dim || e.next_state.len() != dim {
            return Err(encode_err("records in one message must share state_dim"));
        }
    }
    u32::try_from(dim)
        .map(Some)
        .map_err(|_| encode_err("state_dim exceeds u32"))
}

fn count_u32(n: usize) -> Result<u32, ProtocolError> {
    u32::try_from(n).map_err(|_| encode_err(format!("record count {n} exceeds u32")))
}

/// Payload length `msg` encodes to. Fails if the message is not well-formed
/// or exceeds [`MAX_PAYLOAD`].
pub fn payload_len(msg: &Message) -> Result<usize, ProtocolError> {
    let len = match msg {
        Message::Hello(_) => HELLO_LEN,
        Message::HelloAck(_) => HELLO_ACK_LEN,
        Message::PushExperiences(recs) | Message::ExperiencesBlob(recs) => {
            count_u32(recs.len())?;
            match records_dim(recs.iter().map(|r| &r.experience))? {
                Some(d) => 4 + recs.len().saturating_mul(push_record_len(d)),
                None => 4,
            }
        }
        Message::SampleResp(recs) => {
            count_u32(recs.len())?;
            match records_dim(recs.iter().map(|r| &r.experience))? {
                Some(d) => 4 + recs.len().saturating_mul(sampled_record_len(d)),
                None => 4,
            }
        }
        Message::UpdatePriorities(pairs) => {
            count_u32(pairs.len())?;
            4 + pairs.len().saturating_mul(16)
        }
        Message::SetParams { blob, .. } | Message::ParamsBlob { blob, .. } => 12 + blob.len(),
        Message::PushAck { .. } | Message::UpdateAck { .. } => 8,
        Message::SetAck { .. } | Message::PullParams { .. } => 8,
        Message::SampleReq { .. } | Message::PullExperiences { .. } => 4,
        Message::StatsReq => 0,
        Message::StatsResp(_) => STATS_LEN,
        Message::Error { detail, .. } => 2 + detail.len(),
    };
    if len > MAX_PAYLOAD {
        return Err(encode_err(format!("payload of {len} bytes exceeds {MAX_PAYLOAD}")));
    }
    Ok(len)
}

fn put_experience(out: &mut Vec<u8>, e: &Experience) {
    out.put_u32_le(e.action);
    out.put_f32_le(e.reward);
    for &v in &e.state {
        out.put_f32_le(v);
    }
    for &v in &e.next_state {
        out.put_f32_le(v);
    }
}

/// Encodes everything except a trailing parameter blob, which is returned
/// separately so large blobs can be written without copying.
pub fn encode_parts(msg: &Message) -> Result<(Vec<u8>, Option<Bytes>), ProtocolError> {
    let len = payload_len(msg)?;
    let (inline, tail) = match msg {
        Message::SetParams { blob, .. } | Message::ParamsBlob { blob, .. } => {
            (HEADER_LEN + 12, Some(blob.clone()))
        }
        _ => (HEADER_LEN + len, None),
    };
    let mut out = Vec::with_capacity(inline);
    out.put_slice(&MAGIC);
    out.put_u8(VERSION);
    out.put_u8(msg.msg_type());
    out.put_u16_le(0);
    out.put_u32_le(len as u32);
    match msg {
        Message::Hello(h) => {
            out.put_u8(h.role as u8);
            out.put_u32_le(h.client_id);
            out.put_u32_le(h.state_dim);
            out.put_u32_le(h.action_count);
            out.put_u32_le(h.flags);
        }
        Message::HelloAck(a) => {
            out.put_u32_le(a.session_id);
            out.put_u8(a.mode.wire());
            out.put_u32_le(a.state_dim);
            out.put_u32_le(a.action_count);
            out.put_u32_le(a.flags);
            out.put_u64_le(a.replay_capacity);
        }
        Message::PushExperiences(recs) | Message::ExperiencesBlob(recs) => {
            out.put_u32_le(recs.len() as u32);
            for r in recs {
                out.put_f64_le(r.priority);
                put_experience(&mut out, &r.experience);
            }
        }
        Message::PushAck {
            accepted,
            queue_depth,
        } => {
            out.put_u32_le(*accepted);
            out.put_u32_le(*queue_depth);
        }
        Message::SetParams { version, blob } | Message::ParamsBlob { version, blob } => {
            out.put_u64_le(*version);
            out.put_u32_le(blob.len() as u32);
        }
        Message::SetAck { version } => out.put_u64_le(*version),
        Message::PullParams { min_version } => out.put_u64_le(*min_version),
        Message::SampleReq { batch_size } => out.put_u32_le(*batch_size),
        Message::SampleResp(recs) => {
            out.put_u32_le(recs.len() as u32);
            for r in recs {
                out.put_u64_le(r.slot_id);
                out.put_f64_le(r.probability);
                put_experience(&mut out, &r.experience);
            }
        }
        Message::UpdatePriorities(pairs) => {
            out.put_u32_le(pairs.len() as u32);
            for &(slot, p) in pairs {
                out.put_u64_le(slot);
                out.put_f64_le(p);
            }
        }
        Message::UpdateAck { applied, stale } => {
            out.put_u32_le(*applied);
            out.put_u32_le(*stale);
        }
        Message::PullExperiences { max_count } => out.put_u32_le(*max_count),
        Message::StatsReq => {}
        Message::StatsResp(s) => {
            for (_, v) in s.fields() {
                out.put_u64_le(v);
            }
        }
        Message::Error { code, detail } => {
            out.put_u16_le(code.0);
            out.put_slice(detail.as_bytes());
        }
    }
    debug_assert_eq!(out.len(), inline);
    Ok((out, tail))
}

/// Encodes a complete frame.
pub fn encode(msg: &Message) -> Result<Vec<u8>, ProtocolError> {
    let (mut out, tail) = encode_parts(msg)?;
    if let Some(blob) = tail {
        out.extend_from_slice(&blob);
    }
    Ok(out)
}

/// Writes one frame and returns the number of bytes written.
pub fn write_message<W: Write + ?Sized>(w: &mut W, msg: &Message) -> io::Result<usize> {
    let (head, tail) =
        encode_parts(msg).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    w.write_all(&head)?;
    let mut n = head.len();
    if let Some(blob) = tail {
        w.write_all(&blob)?;
        n += blob.len();
    }
    w.flush()?;
    Ok(n)
}

fn known_type(t: u8) -> bool {
    use msg_type::*;
    matches!(
        t,
        HELLO
            | HELLO_ACK
            | PUSH_EXPERIENCES
            | PUSH_ACK
            | SET_PARAMS
            | SET_ACK
            | PULL_PARAMS
            | PARAMS_BLOB
            | SAMPLE_REQ
            | SAMPLE_RESP
            | UPDATE_PRIORITIES
            | UPDATE_ACK
            | PULL_EXPERIENCES
            | EXPERIENCES_BLOB
            | STATS_REQ
            | STATS_RESP
            | ERROR
    )
}

/// Parses and validates a frame header. Returns `(msg_type, payload_len)`.
pub(super) fn parse_header(buf: &[u8]) -> Result<(u8, usize), ProtocolError> {
    let have = buf.len().min(4);
    if buf[..have] != MAGIC[..have] {
        return Err(ProtocolError::Protocol(format!("bad magic {:02x?}", &buf[..have])));
    }
    if buf.len() < HEADER_LEN {
        return Err(ProtocolError::NeedMore(HEADER_LEN - buf.len()));
    }
    if buf[4] != VERSION {
        return Err(ProtocolError::Protocol(format!("unsupported version {}", buf[4])));
    }
    let msg_type = buf[5];
    if !known_type(msg_type) {
        return Err(ProtocolError::Protocol(format!("unknown msg_type {msg_type:#04x}")));
    }
    let len = u32::from_le_bytes([buf[8], buf[9], buf[10], buf[11]]) as usize;
    if len > MAX_PAYLOAD {
        return Err(ProtocolError::Protocol(format!(
            "payload_len {len} exceeds {MAX_PAYLOAD}"
        )));
    }
    Ok((msg_type, len))
}

/// Decodes one frame from the front of `buf`, returning the message and the
/// number of bytes consumed. Incomplete input yields
/// [`ProtocolError::NeedMore`].
pub fn decode(buf: &[u8], state_dim: Option<u32>) -> Result<(Message, usize), ProtocolError> {
    let (msg_type, len) = parse_header(buf)?;
    let total = HEADER_LEN + len;
    if buf.len() < total {
        return Err(ProtocolError::NeedMore(total - buf.len()));
    }
    let payload = Bytes::copy_from_slice(&buf[HEADER_LEN..total]);
    Ok((decode_frame(msg_type, payload, state_dim)?, total))
}

fn expect_len(payload: &Bytes, want: usize, what: &str) -> Result<(), ProtocolError> {
    if payload.len() != want {
        return Err(malformed(format!(
            "{what}: payload is {} bytes, expected {want}",
            payload.len()
        )));
    }
    Ok(())
}

/// Validates `count` records of `record_len` bytes after a 4-byte count.
fn expect_records(payload: &Bytes, record_len: Option<usize>, what: &str) -> Result<usize, ProtocolError> {
    if payload.len() < 4 {
        return Err(malformed(format!("{what}: missing record count")));
    }
    let count = u32::from_le_bytes(payload[..4].try_into().unwrap()) as usize;
    if count == 0 {
        expect_len(payload, 4, what)?;
        return Ok(0);
    }
    let record_len = record_len
        .ok_or_else(|| malformed(format!("{what}: state_dim not negotiated for record decoding")))?;
    let want = (count as u64) * (record_len as u64) + 4;
    if payload.len() as u64 != want {
        return Err(malformed(format!(
            "{what}: {count} records need {want} bytes, payload has {}",
            payload.len()
        )));
    }
    Ok(count)
}

fn get_f32s(buf: &mut Bytes, n: usize) -> Vec<f32> {
    let raw = buf.split_to(n * 4);
    raw.chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn get_experience(buf: &mut Bytes, dim: usize) -> Experience {
    let action = buf.get_u32_le();
    let reward = buf.get_f32_le();
    let state = get_f32s(buf, dim);
    let next_state = get_f32s(buf, dim);
    Experience {
        state,
        action,
        reward,
        next_state,
    }
}

fn get_blob(mut payload: Bytes, what: &str) -> Result<(u64, Bytes), ProtocolError> {
    if payload.len() < 12 {
        return Err(malformed(format!("{what}: payload shorter than 12 bytes")));
    }
    let version = payload.get_u64_le();
    let blob_len = payload.get_u32_le() as usize;
    if blob_len != payload.len() {
        return Err(malformed(format!(
            "{what}: blob_len {blob_len} but {} blob bytes present",
            payload.len()
        )));
    }
    Ok((version, payload))
}

/// Decodes a payload whose header has already been validated.
pub fn decode_frame(msg_type: u8, mut payload: Bytes, state_dim: Option<u32>) -> Result<Message, ProtocolError> {
    use msg_type::*;
    let dim = state_dim.map(|d| d as usize);
    let msg = match msg_type {
        HELLO => {
            expect_len(&payload, HELLO_LEN, "HELLO")?;
            let role = Role::try_from(payload.get_u8())?;
            Message::Hello(Hello {
                role,
                client_id: payload.get_u32_le(),
                state_dim: payload.get_u32_le(),
                action_count: payload.get_u32_le(),
                flags: payload.get_u32_le(),
            })
        }
        HELLO_ACK => {
            expect_len(&payload, HELLO_ACK_LEN, "HELLO_ACK")?;
            let session_id = payload.get_u32_le();
            let mode = ServerMode::from_wire(payload.get_u8())?;
            Message::HelloAck(HelloAck {
                session_id,
                mode,
                state_dim: payload.get_u32_le(),
                action_count: payload.get_u32_le(),
                flags: payload.get_u32_le(),
                replay_capacity: payload.get_u64_le(),
            })
        }
        PUSH_EXPERIENCES | EXPERIENCES_BLOB => {
            let count = expect_records(&payload, state_dim.map(push_record_len), "experience records")?;
            payload.advance(4);
            let mut recs = Vec::with_capacity(count);
            for _ in 0..count {
                let priority = payload.get_f64_le();
                let experience = get_experience(&mut payload, dim.unwrap_or(0));
                recs.push(PushRecord {
                    priority,
                    experience,
                });
            }
            if msg_type == PUSH_EXPERIENCES {
                Message::PushExperiences(recs)
            } else {
                Message::ExperiencesBlob(recs)
            }
        }
        PUSH_ACK => {
            expect_len(&payload, 8, "PUSH_ACK")?;
            Message::PushAck {
                accepted: payload.get_u32_le(),
                queue_depth: payload.get_u32_le(),
            }
        }
        SET_PARAMS => {
            let (version, blob) = get_blob(payload, "SET_PARAMS")?;
            Message::SetParams { version, blob }
        }
        PARAMS_BLOB => {
            let (version, blob) = get_blob(payload, "PARAMS_BLOB")?;
            Message::ParamsBlob { version, blob }
        }
        SET_ACK => {
            expect_len(&payload, 8, "SET_ACK")?;
            Message::SetAck {
                version: payload.get_u64_le(),
            }
        }
        PULL_PARAMS => {
            expect_len(&payload, 8, "PULL_PARAMS")?;
            Message::PullParams {
                min_version: payload.get_u64_le(),
            }
        }
        SAMPLE_REQ => {
            expect_len(&payload, 4, "SAMPLE_REQ")?;
            Message::SampleReq {
                batch_size: payload.get_u32_le(),
            }
        }
        SAMPLE_RESP => {
            let count = expect_records(&payload, state_dim.map(sampled_record_len), "SAMPLE_RESP")?;
            payload.advance(4);
            let mut recs = Vec::with_capacity(count);
            for _ in 0..count {
                let slot_id = payload.get_u64_le();
                let probability = payload.get_f64_le();
                let experience = get_experience(&mut payload, dim.unwrap_or(0));
                recs.push(SampledRecord {
                    slot_id,
                    probability,
                    experience,
                });
            }
            Message::SampleResp(recs)
        }
        UPDATE_PRIORITIES => {
            let count = expect_records(&payload, Some(16), "UPDATE_PRIORITIES")?;
            payload.advance(4);
            let pairs = (0..count)
                .map(|_| (payload.get_u64_le(), payload.get_f64_le()))
                .collect();
            Message::UpdatePriorities(pairs)
        }
        UPDATE_ACK => {
            expect_len(&payload, 8, "UPDATE_ACK")?;
            Message::UpdateAck {
                applied: payload.get_u32_le(),
                stale: payload.get_u32_le(),
            }
        }
        PULL_EXPERIENCES => {
            expect_len(&payload, 4, "PULL_EXPERIENCES")?;
            Message::PullExperiences {
                max_count: payload.get_u32_le(),
            }
        }
        STATS_REQ => {
            expect_len(&payload, 0, "STATS_REQ")?;
            Message::StatsReq
        }
        STATS_RESP => {
            expect_len(&payload, STATS_LEN, "STATS_RESP")?;
            let mut v = [0u64; StatsSnapshot::FIELD_COUNT];
            for x in v.iter_mut() {
                *x = payload.get_u64_le();
            }
            Message::StatsResp(StatsSnapshot::from_values(v))
        }
        ERROR => {
            if payload.len() < 2 {
                return Err(malformed("ERROR: missing code"));
            }
            let code = ErrorCode(payload.get_u16_le());
            let detail = String::from_utf8(payload.to_vec())
                .map_err(|_| malformed("ERROR: detail is not UTF-8"))?;
            Message::Error { code, detail }
        }
        other => return Err(ProtocolError::Protocol(format!("unknown msg_type {other:#04x}"))),
    };
    Ok(msg)
}
