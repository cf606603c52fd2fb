//! Seed derivation so that every random stream in a run is a pure function of
//! one master seed plus a stream/index pair.

/// SplitMix64 finalizer; good avalanche, cheap, stable across platforms.
#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive an independent seed from a master seed, a stream tag, and an index.
pub fn derive(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ stream.wrapping_mul(0x9e3779b97f4a7c15)).wrapping_add(index))
}

pub const STREAM_SCENARIO: u64 = 1;
pub const STREAM_PLANNER: u64 = 2;
pub const STREAM_ROLLOUT: u64 = 3;
pub const STREAM_SHUFFLE: u64 = 4;
pub const STREAM_INIT: u64 = 5;
pub const STREAM_SOLVE: u64 = 6;
