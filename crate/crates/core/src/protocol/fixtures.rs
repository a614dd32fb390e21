//! Golden-frame corpus for cross-implementation conformance.
//!
//! Other clients of the protocol (for example a pure-Python session) check
//! their encoders byte-for-byte against these frames and their decoders
//! against the decoded values. Inputs are deterministic: regenerate with
//! `replaynet-fixtures --out DIR`.

use std::fs;
use std::io;
use std::path::Path;

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub const FIXTURE_STATE_DIM: u32 = 4;
pub const FIXTURE_ACTION_COUNT: u32 = 4;
pub const FIXTURE_SEED: u64 = 42;

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub message: Message,
}

impl Fixture {
    pub fn bytes(&self) -> Vec<u8> {
        encode(&self.message).expect("fixtures are well-formed")
    }
}

fn seeded_experience(rng: &mut ChaCha8Rng) -> Experience {
    let dim = FIXTURE_STATE_DIM as usize;
    // quarter steps are exact in f32, so text renderings of the corpus are lossless
    let mut v = || (rng.gen_range(-8i32..8) as f32) * 0.25;
    let state = (0..dim).map(|_| v()).collect();
    let next_state = (0..dim).map(|_| v()).collect();
    Experience {
        state,
        action: rng.gen_range(0..FIXTURE_ACTION_COUNT),
        reward: (rng.gen_range(-4i32..4) as f32) * 0.5,
        next_state,
    }
}

/// The full corpus: one or more frames for every message type.
pub fn corpus() -> Vec<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(FIXTURE_SEED);
    let pushes: Vec<PushRecord> = (0..3)
        .map(|i| PushRecord {
            priority: 0.5 + i as f64,
            experience: seeded_experience(&mut rng),
        })
        .collect();
    let sampled: Vec<SampledRecord> = (0..3)
        .map(|i| SampledRecord {
            slot_id: [7, 0, 7][i],
            probability: [0.25, 0.5, 0.25][i],
            experience: seeded_experience(&mut rng),
        })
        .collect();
    let stats = StatsSnapshot::from_values(std::array::from_fn(|i| (i as u64 + 1) * 1000 + i as u64));
    let f = |name, message| Fixture { name, message };
    vec![
        f(
            "hello_actor",
            Message::Hello(Hello {
                role: Role::Actor,
                client_id: 7,
                state_dim: FIXTURE_STATE_DIM,
                action_count: FIXTURE_ACTION_COUNT,
                flags: 0,
            }),
        ),
        f(
            "hello_learner",
            Message::Hello(Hello {
                role: Role::Learner,
                client_id: 1,
                state_dim: FIXTURE_STATE_DIM,
                action_count: FIXTURE_ACTION_COUNT,
                flags: FLAG_VERSION_GATED_PULL,
            }),
        ),
        f(
            "hello_ack",
            Message::HelloAck(HelloAck {
                session_id: 3,
                mode: ServerMode::ColocatedReplay,
                state_dim: FIXTURE_STATE_DIM,
                action_count: FIXTURE_ACTION_COUNT,
                flags: 0,
                replay_capacity: 65_536,
            }),
        ),
        f("push_experiences", Message::PushExperiences(pushes.clone())),
        f("push_experiences_empty", Message::PushExperiences(vec![])),
        f(
            "push_ack",
            Message::PushAck {
                accepted: 3,
                queue_depth: 1,
            },
        ),
        f(
            "set_params",
            Message::SetParams {
                version: 2,
                blob: Bytes::from_static(b"\x00\x01\x02\x03theta"),
            },
        ),
        f("set_ack", Message::SetAck { version: 2 }),
        f("pull_params", Message::PullParams { min_version: 0 }),
        f(
            "params_blob",
            Message::ParamsBlob {
                version: 2,
                blob: Bytes::from_static(b"\x00\x01\x02\x03theta"),
            },
        ),
        f(
            "params_blob_not_newer",
            Message::ParamsBlob {
                version: 2,
                blob: Bytes::new(),
            },
        ),
        f("sample_req", Message::SampleReq { batch_size: 512 }),
        f("sample_resp", Message::SampleResp(sampled)),
        f(
            "update_priorities",
            Message::UpdatePriorities(vec![(7, 0.125), (0, 2.0), (7, 1e-6)]),
        ),
        f(
            "update_ack",
            Message::UpdateAck {
                applied: 2,
                stale: 1,
            },
        ),
        f("pull_experiences", Message::PullExperiences { max_count: 1000 }),
        f("experiences_blob", Message::ExperiencesBlob(pushes)),
        f("stats_req", Message::StatsReq),
        f("stats_resp", Message::StatsResp(stats)),
        f("error_not_ready", Message::error(ErrorCode::NOT_READY, "replay is empty")),
    ]
}

/// Writes `<name>.bin` for every fixture plus `manifest.csv`
/// (`name,msg_type,frame_len,state_dim`).
pub fn write_corpus(dir: &Path) -> io::Result<usize> {
    fs::create_dir_all(dir)?;
    let mut manifest = csv::Writer::from_path(dir.join("manifest.csv"))?;
    manifest.write_record(["name", "msg_type", "frame_len", "state_dim"])?;
    let fixtures = corpus();
    for fx in &fixtures {
        let bytes = fx.bytes();
        fs::write(dir.join(format!("{}.bin", fx.name)), &bytes)?;
        manifest.write_record([
            fx.name.to_string(),
            format!("{:#04x}", fx.message.msg_type()),
            bytes.len().to_string(),
            FIXTURE_STATE_DIM.to_string(),
        ])?;
    }
    manifest.flush()?;
    Ok(fixtures.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_covers_every_type_and_round_trips() {
        let fixtures = corpus();
        let mut types: Vec<u8> = fixtures.iter().map(|f| f.message.msg_type()).collect();
        types.sort();
        types.dedup();
        assert_eq!(types.len(), 17);
        for fx in &fixtures {
            let bytes = fx.bytes();
            let (back, used) = decode(&bytes, Some(FIXTURE_STATE_DIM)).unwrap();
            assert_eq!(used, bytes.len(), "{}", fx.name);
            assert_eq!(back, fx.message, "{}", fx.name);
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let a: Vec<Vec<u8>> = corpus().iter().map(Fixture::bytes).collect();
        let b: Vec<Vec<u8>> = corpus().iter().map(Fixture::bytes).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let n = write_corpus(dir.path()).unwrap();
        assert_eq!(n, corpus().len());
        let bin = fs::read(dir.path().join("stats_req.bin")).unwrap();
        assert_eq!(bin.len(), 12);
        let manifest = fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest.lines().count(), n + 1);
    }
}
