//! Deterministic seed fan-out.
//!
//! Every random stream in a run is derived from one master seed:
//!
//! ```text
//! derive(master, tag, index) = splitmix64(master ^ splitmix64(fnv1a64(tag) ^ index))
//! ```
//!
//! A training run uses the tags `env` (episode resets), `init` (network
//! weights), `explore` (behavioral policy), `her` (relabel goal choice),
//! `sample` (minibatches) and `eval` (evaluation seed, indexed by epoch);
//! an evaluation seed fans out to one `episode` seed per evaluation episode.
//! Comparison arms share the training seeds `derive(base, "compare", i)`.
//! A GA campaign uses `breed` (indexed by generation), `init-pop`, and
//! `fitness` (indexed by `generation << 32 | member`, then by training seed
//! slot). Streams are `ChaCha8Rng`, whose output is platform independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a64(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn derive(master: u64, tag: &str, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(fnv1a64(tag) ^ index))
}

pub fn stream(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, tag, index))
}
