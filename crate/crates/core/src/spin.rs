use std::fmt;
use std::ops::Mul;

use crate::{Error, Result};

/// An element of `{-1, +1}`. Stored as a bit with `1 ≡ -1`, so that the
/// product of spins is the XOR of their bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    Plus,
    Minus,
}

impl Spin {
    #[inline]
    pub fn from_bit(bit: u64) -> Spin {
        if bit & 1 == 0 {
            Spin::Plus
        } else {
            Spin::Minus
        }
    }

    #[inline]
    pub fn bit(self) -> u64 {
        match self {
            Spin::Plus => 0,
            Spin::Minus => 1,
        }
    }

    #[inline]
    pub fn value(self) -> i64 {
        1 - 2 * self.bit() as i64
    }

    #[inline]
    pub fn as_f64(self) -> f64 {
        self.value() as f64
    }

    pub fn from_value(v: i64) -> Option<Spin> {
        match v {
            1 => Some(Spin::Plus),
            -1 => Some(Spin::Minus),
            _ => None,
        }
    }

    /// Raises the spin to a `{0, 1}` exponent.
    #[inline]
    pub fn pow(self, parity: bool) -> Spin {
        if parity {
            self
        } else {
            Spin::Plus
        }
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Mul for Spin {
    type Output = Spin;

    #[inline]
    fn mul(self, rhs: Spin) -> Spin {
        Spin::from_bit(self.bit() ^ rhs.bit())
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spin::Plus => "+",
            Spin::Minus => "-",
        })
    }
}

/// Success probability `p ∈ (0, 1)` of a `+1` spin.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BernoulliParam(f64);

impl BernoulliParam {
    pub fn new(p: f64) -> Result<Self> {
        if p > 0.0 && p < 1.0 {
            Ok(BernoulliParam(p))
        } else {
            Err(Error::InvalidProbability(p))
        }
    }

    #[inline]
    pub fn p(self) -> f64 {
        self.0
    }

    /// `2p - 1`, the mean of one spin.
    #[inline]
    pub fn drift(self) -> f64 {
        2.0 * self.0 - 1.0
    }

    /// `ρ(x) = p^{(1+x)/2} (1-p)^{(1-x)/2}`.
    #[inline]
    pub fn rho(self, x: Spin) -> f64 {
        match x {
            Spin::Plus => self.0,
            Spin::Minus => 1.0 - self.0,
        }
    }

    pub fn is_symmetric(self) -> bool {
        self.0 == 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_is_xor() {
        for a in [Spin::Plus, Spin::Minus] {
            for b in [Spin::Plus, Spin::Minus] {
                assert_eq!((a * b).value(), a.value() * b.value());
            }
        }
    }

    #[test]
    fn open_interval() {
        assert!(BernoulliParam::new(0.0).is_err());
        assert!(BernoulliParam::new(1.0).is_err());
        assert!(BernoulliParam::new(f64::NAN).is_err());
        let p = BernoulliParam::new(0.3).unwrap();
        assert_eq!(p.rho(Spin::Plus) + p.rho(Spin::Minus), 1.0);
    }
}
