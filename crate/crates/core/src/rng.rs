//! Counter-based derivation of independent random streams.
//!
//! Every random quantity in a run is drawn from a stream addressed by
//! `(master seed, frame index, role)`, so results never depend on worker
//! scheduling and any single frame can be reproduced in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Role of a random stream within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    // per-run streams (shared by transmitter and receiver)
    PreambleValues,
    PreambleMap,
    FramePermutation,
    TurboPermutation,
    BufferSymbols,
    PostambleSymbols,
    // per-frame streams
    DataBits,
    ChannelTaps,
    CarrierOffset,
    Noise,
}

impl StreamRole {
    fn tag(self) -> u64 {
        match self {
            StreamRole::PreambleValues => 1,
            StreamRole::PreambleMap => 2,
            StreamRole::FramePermutation => 3,
            StreamRole::TurboPermutation => 4,
            StreamRole::BufferSymbols => 5,
            StreamRole::PostambleSymbols => 6,
            StreamRole::DataBits => 7,
            StreamRole::ChannelTaps => 8,
            StreamRole::CarrierOffset => 9,
            StreamRole::Noise => 10,
        }
    }
}

const RUN_FRAME: u64 = u64::MAX;

fn derive(master_seed: u64, frame: u64, role: StreamRole) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&frame.to_le_bytes());
    seed[16..24].copy_from_slice(&role.tag().to_le_bytes());
    seed[24..32].copy_from_slice(&0x6d69_6d6f_6f66_646du64.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Stream for run-level quantities (preamble, interleavers, pilot symbols).
pub fn run_stream(master_seed: u64, role: StreamRole) -> ChaCha8Rng {
    derive(master_seed, RUN_FRAME, role)
}

/// Stream for frame-level quantities (data, channel, offset, noise).
pub fn frame_stream(master_seed: u64, frame: u64, role: StreamRole) -> ChaCha8Rng {
    assert_ne!(frame, RUN_FRAME);
    derive(master_seed, frame, role)
}
