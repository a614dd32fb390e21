#![allow(dead_code)]

use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use bytes::Bytes;
use proptest::collection::vec;
use proptest::prelude::*;
use replaynet::protocol::{
    write_message, ErrorCode, FrameDecoder, Hello, HelloAck, Message, PushRecord, Role, SampledRecord, ServerMode,
    StatsSnapshot,
};
use replaynet::Experience;

pub const DIM: u32 = 4;
pub const ACTIONS: u32 = 4;

pub fn exp(i: u32) -> Experience {
    Experience::new(vec![i as f32; DIM as usize], i % ACTIONS, 0.5, vec![0.0; DIM as usize])
}

pub fn hello(role: Role) -> Hello {
    Hello {
        role,
        client_id: 1,
        state_dim: DIM,
        action_count: ACTIONS,
        flags: 0,
    }
}

// Generators ---------------------------------------------------------------

fn finite_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        Just(0.0f32),
        Just(-0.0f32),
        Just(f32::MIN_POSITIVE),
        Just(f32::MAX),
        -1e6f32..1e6f32,
    ]
}

fn finite_f64() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0f64), Just(1e-6), Just(f64::MAX), 0.0f64..1e9]
}

pub fn arb_experience(dim: u32) -> impl Strategy<Value = Experience> {
    (
        vec(finite_f32(), dim as usize),
        any::<u32>(),
        finite_f32(),
        vec(finite_f32(), dim as usize),
    )
        .prop_map(|(state, action, reward, next_state)| Experience::new(state, action, reward, next_state))
}

pub fn arb_push_records(dim: u32) -> impl Strategy<Value = Vec<PushRecord>> {
    vec(
        (finite_f64(), arb_experience(dim)).prop_map(|(priority, experience)| PushRecord { priority, experience }),
        0..6,
    )
}

fn arb_role() -> impl Strategy<Value = Role> {
    prop_oneof![Just(Role::Actor), Just(Role::Learner), Just(Role::ReplayPuller)]
}

fn arb_mode() -> impl Strategy<Value = ServerMode> {
    prop_oneof![Just(ServerMode::SharedMemory), Just(ServerMode::ColocatedReplay)]
}

fn arb_blob() -> impl Strategy<Value = Bytes> {
    vec(any::<u8>(), 0..64).prop_map(Bytes::from)
}

/// Every message type with finite floats, records sized for `dim`.
pub fn arb_message(dim: u32) -> impl Strategy<Value = Message> {
    prop_oneof![
        (arb_role(), any::<u32>(), any::<u32>(), any::<u32>()).prop_map(move |(role, client_id, action_count, flags)| {
            Message::Hello(Hello {
                role,
                client_id,
                state_dim: dim,
                action_count,
                flags,
            })
        }),
        (any::<u32>(), arb_mode(), any::<u32>(), any::<u32>(), any::<u64>()).prop_map(
            move |(session_id, mode, action_count, flags, replay_capacity)| {
                Message::HelloAck(HelloAck {
                    session_id,
                    mode,
                    state_dim: dim,
                    action_count,
                    flags,
                    replay_capacity,
                })
            }
        ),
        arb_push_records(dim).prop_map(Message::PushExperiences),
        (any::<u32>(), any::<u32>()).prop_map(|(accepted, queue_depth)| Message::PushAck { accepted, queue_depth }),
        (any::<u64>(), arb_blob()).prop_map(|(version, blob)| Message::SetParams { version, blob }),
        any::<u64>().prop_map(|version| Message::SetAck { version }),
        any::<u64>().prop_map(|min_version| Message::PullParams { min_version }),
        (any::<u64>(), arb_blob()).prop_map(|(version, blob)| Message::ParamsBlob { version, blob }),
        any::<u32>().prop_map(|batch_size| Message::SampleReq { batch_size }),
        vec(
            (any::<u64>(), 0.0f64..=1.0, arb_experience(dim)).prop_map(|(slot_id, probability, experience)| {
                SampledRecord {
                    slot_id,
                    probability,
                    experience,
                }
            }),
            0..6
        )
        .prop_map(Message::SampleResp),
        vec((any::<u64>(), finite_f64()), 0..16).prop_map(Message::UpdatePriorities),
        (any::<u32>(), any::<u32>()).prop_map(|(applied, stale)| Message::UpdateAck { applied, stale }),
        any::<u32>().prop_map(|max_count| Message::PullExperiences { max_count }),
        arb_push_records(dim).prop_map(Message::ExperiencesBlob),
        Just(Message::StatsReq),
        any::<[u64; StatsSnapshot::FIELD_COUNT]>().prop_map(|v| Message::StatsResp(StatsSnapshot::from_values(v))),
        (any::<u16>(), "[ -~]{0,40}").prop_map(|(code, detail)| Message::Error {
            code: ErrorCode(code),
            detail,
        }),
    ]
}

// Scripted mock server -----------------------------------------------------

/// Single-connection server that answers HELLO itself and every other
/// request with `respond`. Everything received after HELLO is recorded.
pub struct MockServer {
    pub addr: SocketAddr,
    pub received: Arc<Mutex<Vec<Message>>>,
    handle: Option<JoinHandle<io::Result<()>>>,
}

impl MockServer {
    pub fn start<F>(mode: ServerMode, mut respond: F) -> Self
    where
        F: FnMut(&Message) -> Message + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let received = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&received);
        let handle = thread::spawn(move || {
            let (mut stream, _) = listener.accept()?;
            let mut decoder = FrameDecoder::new(Some(DIM));
            loop {
                let msg = loop {
                    match decoder.next_message() {
                        Ok(Some((m, _))) => break m,
                        Ok(None) => {}
                        Err(e) => return Err(io::Error::new(io::ErrorKind::InvalidData, e)),
                    }
                    if decoder.read_from(&mut stream)? == 0 {
                        return Ok(());
                    }
                };
                let reply = match &msg {
                    Message::Hello(h) => Message::HelloAck(HelloAck {
                        session_id: 1,
                        mode,
                        state_dim: h.state_dim,
                        action_count: h.action_count,
                        flags: h.flags,
                        replay_capacity: 1024,
                    }),
                    other => {
                        log.lock().unwrap().push(other.clone());
                        respond(other)
                    }
                };
                write_message(&mut stream, &reply)?;
                stream.flush()?;
            }
        });
        Self {
            addr,
            received,
            handle: Some(handle),
        }
    }

    pub fn received_names(&self) -> Vec<&'static str> {
        self.received.lock().unwrap().iter().map(Message::name).collect()
    }

    /// Waits for the client to hang up.
    pub fn join(mut self) -> Vec<Message> {
        self.handle.take().unwrap().join().unwrap().unwrap();
        std::mem::take(&mut *self.received.lock().unwrap())
    }
}
