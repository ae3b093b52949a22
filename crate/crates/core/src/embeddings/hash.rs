//! Deterministic text embeddings derived from a hash of the text.
//!
//! The vector for a text is fully specified, so any implementation can
//! reproduce it bit for bit:
//!
//! 1. Normalize the text (trim, lowercase, collapse whitespace).
//! 2. Hash the UTF-8 bytes with 64-bit FNV-1a.
//! 3. Key ChaCha8 with the hash as the first 8 bytes (little-endian) of a
//!    32-byte seed whose remaining bytes are zero.
//! 4. Draw `dim` standard normals with the Box-Muller transform, consuming two
//!    `u64` outputs per pair: `u1 = 1 - (a >> 11) * 2^-53`,
//!    `u2 = (b >> 11) * 2^-53`, `r = sqrt(-2 ln u1)`, yielding `r cos(2 pi u2)`
//!    then `r sin(2 pi u2)`. Transcendentals come from `libm` so results do
//!    not depend on the platform's math library.
//! 5. Divide by the Euclidean norm (accumulated in `f64`) and round to `f32`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{normalize_text, TextEmbedder};
use crate::embeddings::EmbeddingError;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn unit_interval(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn hash_embedding(text: &str, dim: usize) -> Vec<f32> {
    let normalized = normalize_text(text);
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&fnv1a64(normalized.as_bytes()).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);

    let mut values = Vec::with_capacity(dim + 1);
    while values.len() < dim {
        let u1 = 1.0 - unit_interval(rng.next_u64());
        let u2 = unit_interval(rng.next_u64());
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        values.push(r * libm::cos(theta));
        values.push(r * libm::sin(theta));
    }
    values.truncate(dim);
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    values.into_iter().map(|v| (v / norm) as f32).collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedder;

impl TextEmbedder for HashEmbedder {
    fn embed(&self, texts: &[String], dim: usize) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        Ok(texts.iter().map(|t| hash_embedding(t, dim)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn deterministic_and_unit() {
        let a = hash_embedding("Snowy Forest", 512);
        let b = hash_embedding("  snowy   FOREST ", 512);
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_ne!(a, hash_embedding("ice cave", 512));
    }

    #[test]
    fn odd_dimension() {
        assert_eq!(hash_embedding("x", 7).len(), 7);
    }

    #[test]
    fn pinned_prefix() {
        // Frozen output; a change here breaks cross-run reproducibility.
        let v = hash_embedding("bedroom", 8);
        let bits: Vec<u32> = v.iter().map(|x| x.to_bits()).collect();
        assert_eq!(bits, PINNED_BEDROOM_8);
    }

    const PINNED_BEDROOM_8: [u32; 8] = [
        3187482767, 1057607614, 3203051183, 1048402464, 1046008883, 3196138892, 1052259928,
        3202128508,
    ];
}
