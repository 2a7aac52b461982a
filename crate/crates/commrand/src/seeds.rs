//! Deterministic seed derivation.
//!
//! Every randomized stage owns an rng derived from (base seed, tags) so
//! batches can be produced in any order without changing their contents.

/// splitmix64 finalizer; stable across platforms.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a sequence of tags (epoch, batch index, layer, ...).
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &t in tags {
        h = splitmix64(h ^ t);
    }
    h
}

pub fn epoch_seed(base: u64, epoch: usize) -> u64 {
    derive_seed(base, &[0x45504F43, epoch as u64])
}

pub fn batch_seed(base: u64, epoch: usize, batch_index: usize) -> u64 {
    derive_seed(base, &[0x42415443, epoch as u64, batch_index as u64])
}
