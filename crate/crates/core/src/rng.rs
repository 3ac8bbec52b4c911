//! Named random streams derived from a single root seed.
//!
//! Every consumer of randomness asks for a stream by name, e.g.
//! `stream(seed, "train.prior")`. The root seed keys a ChaCha8 generator and the
//! FNV-1a hash of the name selects its stream id, so streams are independent
//! and adding a new consumer never perturbs an existing one.
//!
//! Names used by this crate:
//!
//! | name                 | consumer                                  |
//! |----------------------|-------------------------------------------|
//! | `net.init`           | network weight initialization             |
//! | `train.data`         | data batches                              |
//! | `train.prior`        | prior batches                             |
//! | `train.time`         | time samples                              |
//! | `train.pairs`        | pair sampling from a transport plan       |
//! | `train.bridge`       | bridge noise in SFM tuples                |
//! | `infer.prior`        | prior draws at sampling time              |
//! | `infer.noise`        | SDE increments                            |
//! | `eval.target`        | fresh target draws for evaluation         |
//! | `eval.floor`         | second target draw for the noise floor    |
//! | `bridge.pairs`       | endpoint pairs in the bridge study        |
//! | `bridge.sim`         | guided-bridge increments                  |
//! | `bridge.approx`      | simulation-free bridge draws              |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn stream(seed: u64, name: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// The `index`-th member of a family of streams, e.g. one per worker or path.
pub fn substream(seed: u64, name: &str, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}
