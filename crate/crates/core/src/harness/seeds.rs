//! Named random substreams derived from one experiment seed.
//!
//! Every consumer of randomness gets its own ChaCha stream keyed by the
//! experiment seed and selected by a hash of the stream name, so adding a
//! new stream never shifts the numbers drawn by the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const INIT: &str = "init";
pub const ENCODING: &str = "encoding";
pub const SAMPLING: &str = "sampling";
pub const SPLIT: &str = "split";
pub const KMEANS: &str = "kmeans";
pub const EVAL_ENCODING: &str = "eval-encoding";

// 64-bit FNV-1a
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(name_hash(name));
    rng
}

/// Substream for the `index`-th independent item of a named family, e.g. one
/// evaluation tile. Lets items be processed in any order or in parallel.
pub fn indexed_substream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(index)));
    rng.set_stream(name_hash(name));
    rng
}

/// Seed of the `index`-th member of a sweep. The data split stays keyed by
/// the base seed; initialization, sampling and encoding follow the member
/// seed.
pub fn member_seed(seed: u64, index: u64) -> u64 {
    splitmix(splitmix(seed) ^ name_hash("sweep-member").wrapping_add(index))
}
