//! Counter-based spin source.
//!
//! Each `(seed, stream)` pair selects an independent ChaCha8 keystream; the
//! spin at position `i` of a stream is derived from the 64-bit word at
//! keystream offset `i`. Outputs therefore depend only on
//! `(seed, stream, position)`, never on scheduling.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{BernoulliParam, Spin};

#[derive(Debug, Clone)]
pub struct SpinSource {
    rng: ChaCha8Rng,
    threshold: u64,
    symmetric: bool,
}

impl SpinSource {
    pub fn new(seed: u64, stream: u64, p: BernoulliParam) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        SpinSource {
            rng,
            threshold: threshold(p.p()),
            symmetric: p.is_symmetric(),
        }
    }

    /// Source positioned so that the next draw is spin number `position`.
    pub fn at(seed: u64, stream: u64, p: BernoulliParam, position: u64) -> Self {
        let mut src = SpinSource::new(seed, stream, p);
        // One u64 per spin: two 32-bit keystream words.
        src.rng.set_word_pos(u128::from(position) * 2);
        src
    }

    #[inline]
    pub fn next_spin(&mut self) -> Spin {
        Spin::from_bit(self.next_bit())
    }

    /// Next spin as its bit (`1 ≡ -1`).
    #[inline]
    pub fn next_bit(&mut self) -> u64 {
        let u = self.rng.next_u64();
        if self.symmetric {
            u >> 63
        } else {
            u64::from(u >= self.threshold)
        }
    }

    /// Fills `words` with packed bits; the first `len` bits are spins, the rest zero.
    pub fn fill_bits(&mut self, words: &mut [u64], len: usize) {
        for (w, chunk) in words.iter_mut().enumerate() {
            let lo = w * 64;
            let hi = (lo + 64).min(len);
            let mut acc = 0u64;
            for i in lo..hi {
                acc |= self.next_bit() << (i - lo);
            }
            *chunk = acc;
        }
    }
}

/// Largest `t` with `P(u < t) ≈ p` for `u` uniform on 64 bits.
fn threshold(p: f64) -> u64 {
    let t = p * 18_446_744_073_709_551_616.0;
    if t >= u64::MAX as f64 {
        u64::MAX
    } else {
        t as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_are_addressable() {
        let p = BernoulliParam::new(0.3).unwrap();
        let mut seq = SpinSource::new(9, 4, p);
        let spins: Vec<Spin> = (0..100).map(|_| seq.next_spin()).collect();
        for pos in [0u64, 1, 17, 99] {
            let mut src = SpinSource::at(9, 4, p, pos);
            assert_eq!(src.next_spin(), spins[pos as usize]);
        }
    }

    #[test]
    fn streams_differ() {
        let p = BernoulliParam::new(0.5).unwrap();
        let a: Vec<Spin> = {
            let mut s = SpinSource::new(1, 0, p);
            (0..64).map(|_| s.next_spin()).collect()
        };
        let b: Vec<Spin> = {
            let mut s = SpinSource::new(1, 1, p);
            (0..64).map(|_| s.next_spin()).collect()
        };
        assert_ne!(a, b);
    }

    #[test]
    fn frequency_close_to_p() {
        let p = BernoulliParam::new(0.8).unwrap();
        let mut s = SpinSource::new(3, 0, p);
        let n = 100_000;
        let plus = (0..n).filter(|_| s.next_spin() == Spin::Plus).count() as f64;
        let se = (0.8 * 0.2 / n as f64).sqrt();
        assert!((plus / n as f64 - 0.8).abs() < 5.0 * se);
    }
}
