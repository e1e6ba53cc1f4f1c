//! Deterministic seed derivation.
//!
//! Every random stream in a run is keyed off one root seed. Child seeds are
//! derived by mixing the parent with a label and an index through SplitMix64,
//! so adding a new consumer never shifts the streams of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01B3)
    })
}

/// Derives a child seed from `parent` for the consumer named `label`.
pub fn derive(parent: u64, label: &str, index: u64) -> u64 {
    let a = splitmix64(parent ^ label_hash(label));
    splitmix64(a ^ splitmix64(index.wrapping_add(GOLDEN)))
}

/// Generator used throughout the crate.
pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(parent: u64, label: &str, index: u64) -> Rng {
    rng(derive(parent, label, index))
}
