//! Named random sub-streams derived from one run seed.
//!
//! Every consumer of randomness asks for its own stream, indexed by whatever
//! identifies the draw (epoch, sample, trajectory), so components stay
//! reproducible in isolation and independent of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    DataShuffle,
    ForwardNoise,
    Rollout,
    Subset,
    Evaluation,
    Bootstrap,
    Dataset,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Init => 0x696e_6974,
            Stream::DataShuffle => 0x7368_7566,
            Stream::ForwardNoise => 0x6e6f_6973,
            Stream::Rollout => 0x726f_6c6c,
            Stream::Subset => 0x7375_6273,
            Stream::Evaluation => 0x6576_616c,
            Stream::Bootstrap => 0x626f_6f74,
            Stream::Dataset => 0x6461_7461,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Rng for `stream` at position `path` under `seed`.
pub fn stream_rng(seed: u64, stream: Stream, path: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix(seed ^ splitmix(stream.tag()));
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x5851_f42d_4c95_7f2d)));
    }
    ChaCha8Rng::seed_from_u64(h)
}
