//! Counter-based dropout masks.
//!
//! A mask is a pure function of (run seed, optimizer step, example id, layer),
//! so it does not depend on batch composition, worker scheduling or the order
//! in which examples are visited.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Real;

/// Identifies one training forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropoutKey {
    pub seed: u64,
    pub step: u64,
}

/// Layer slots that receive dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Site {
    QuestionWords = 0,
    PassageWords = 1,
    QuestionForward = 2,
    QuestionBackward = 3,
    PassageForward = 4,
    PassageBackward = 5,
    Matching = 6,
    Aggregation = 7,
}

/// Stable 64-bit FNV-1a hash of an example id.
pub fn id_hash(id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else `1/(1-rate)`.
pub fn mask(key: DropoutKey, example: u64, site: Site, len: usize, rate: f64) -> Vec<Real> {
    let mut seed = [0u8; 32];
    for (chunk, word) in seed
        .chunks_mut(8)
        .zip([key.seed, key.step, example, site as u64])
    {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    let keep = (1.0 / (1.0 - rate)) as Real;
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_are_keyed() {
        let k = DropoutKey { seed: 1, step: 2 };
        let a = mask(k, 9, Site::Matching, 500, 0.2);
        assert_eq!(a, mask(k, 9, Site::Matching, 500, 0.2));
        assert_ne!(a, mask(k, 9, Site::Aggregation, 500, 0.2));
        assert_ne!(
            a,
            mask(DropoutKey { seed: 1, step: 3 }, 9, Site::Matching, 500, 0.2)
        );
        let dropped = a.iter().filter(|&&x| x == 0.0).count();
        assert!((50..150).contains(&dropped), "{dropped}");
        assert!(a.iter().all(|&x| x == 0.0 || (x - 1.25).abs() < 1e-12));
    }

    #[test]
    fn zero_rate_keeps_everything() {
        let m = mask(
            DropoutKey { seed: 0, step: 0 },
            0,
            Site::PassageWords,
            64,
            0.0,
        );
        assert!(m.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn id_hash_is_stable() {
        assert_eq!(id_hash(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(id_hash("a"), 0xaf63_dc4c_8601_ec8c);
    }
}
