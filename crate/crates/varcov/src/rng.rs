//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every scenario block gets its own ChaCha8 stream keyed by (seed, block
//! index), so blocks can be generated on any thread in any order and still
//! produce identical draws.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// splitmix64 finalizer; a cheap, well-dispersed 64 -> 64 bit mix.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a user seed with a stream index into a full 256-bit ChaCha key.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = splitmix64(seed ^ 0x6a09_e667_f3bc_c908).wrapping_add(splitmix64(stream));
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform draw on the open interval (0, 1): 53 significant bits, offset by
/// half an ulp so 0 and 1 are unreachable and inverse-CDF transforms stay
/// finite.
pub(crate) fn next_open01(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}
