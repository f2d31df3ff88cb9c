//! Named random streams derived from one experiment seed.
//!
//! Every consumer of randomness asks for a stream by purpose string, so adding
//! a new consumer never shifts the numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream id for `(seed, purpose)`; stable across platforms and releases.
pub fn stream_id(seed: u64, purpose: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(purpose.as_bytes())))
}

pub fn stream(seed: u64, purpose: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_id(seed, purpose))
}

pub fn standard_normal<T: Scalar>(rng: &mut StreamRng) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}

pub fn normal_vector<T: Scalar>(rng: &mut StreamRng, d: usize) -> Vec<T> {
    (0..d).map(|_| standard_normal(rng)).collect()
}
