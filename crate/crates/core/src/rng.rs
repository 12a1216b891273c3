//! Named random substreams.
//!
//! Every consumer of randomness gets its own ChaCha stream keyed by
//! `(master seed, purpose, step, prompt)`. Streams never share state, so the
//! draws a prompt sees do not depend on which other prompts were sampled or
//! on how work was scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    PromptGeneration = 1,
    Rollout = 2,
    Downsample = 3,
    Instance = 4,
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream for one `(purpose, step, prompt)` triple.
pub fn substream(master: u64, purpose: Purpose, step: u64, prompt: u64) -> Stream {
    let mut state = master;
    let mut seed = [0u8; 32];
    let words = [
        splitmix64(&mut state),
        splitmix64(&mut state) ^ (purpose as u64),
        splitmix64(&mut state) ^ step,
        splitmix64(&mut state) ^ prompt,
    ];
    // Second mixing pass so nearby keys do not produce correlated seeds.
    let mut acc = 0u64;
    for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
        acc ^= w;
        let mut s = acc;
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        acc = s;
    }
    ChaCha8Rng::from_seed(seed)
}
