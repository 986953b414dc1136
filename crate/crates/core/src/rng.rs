//! Seeded randomness.
//!
//! Every stochastic step in the pipeline takes an explicit 64-bit seed and
//! runs on ChaCha8 ([`PipelineRng`]), so corpora, injections, and training
//! runs replay exactly. Independent streams are derived from a master seed
//! with a splitmix64 mix of (seed, stream index); no wall-clock seeding
//! anywhere.

use rand::SeedableRng;

/// The generator behind every seeded operation in this crate.
pub type PipelineRng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> PipelineRng {
    PipelineRng::seed_from_u64(seed)
}

/// Derive the seed of an independent stream from a master seed.
///
/// Distinct `stream` values give statistically independent generators;
/// the derivation is pure so grid cells can be seeded in parallel.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn same_seed_same_stream() {
        let mut a = rng_from_seed(7);
        let mut b = rng_from_seed(7);
        for _ in 0..32 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_streams_differ() {
        let s0 = derive_seed(7, 0);
        let s1 = derive_seed(7, 1);
        assert_ne!(s0, s1);
        assert_ne!(derive_seed(8, 0), s0);
    }
}
