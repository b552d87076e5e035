//! Exact binary combinatorics.
//!
//! Every parity here is a binomial coefficient mod 2, computed with Lucas'
//! criterion: `C(k, l)` is odd iff every binary digit of `l` is at most the
//! corresponding digit of `k`, i.e. `l & k == l`. Nothing is ever expanded
//! through factorials, so the cost is O(1) at any index size.
//!
//! A parity is represented as a `bool` (`true` ≡ 1).

use crate::{Error, Result};

/// θ(k): number of ones in the binary representation of `k`.
#[inline]
pub fn theta(k: u64) -> u32 {
    k.count_ones()
}

/// `2^θ(k)`, the number of odd entries in row `k` of Pascal's triangle.
#[inline]
pub fn pow2_theta(k: u64) -> u128 {
    1u128 << theta(k)
}

/// κ(n): exponent of the largest power of two dividing `n`.
pub fn kappa(n: u64) -> Result<u32> {
    if n == 0 {
        return Err(Error::KappaOfZero);
    }
    Ok(n.trailing_zeros())
}

/// β(k, l) = C(k, l) mod 2, with C(k, l) = 0 for l > k.
#[inline]
pub fn beta(k: u64, l: u64) -> bool {
    l & k == l
}

/// ν(k, n) = C(n+k-2, n-1) mod 2 for k ≥ 1, and ν(0, n) = [n = 1].
pub fn nu(k: u64, n: u64) -> Result<bool> {
    if n == 0 {
        return Err(Error::ZeroColumn);
    }
    if k == 0 {
        return Ok(n == 1);
    }
    let top = (n - 1)
        .checked_add(k - 1)
        .ok_or(Error::IndexOverflow { k, n })?;
    Ok(beta(top, n - 1))
}

/// The same parity through the other side of the binomial symmetry,
/// C(n+k-2, k-1) mod 2. Agrees with [`nu`] wherever both are defined.
pub fn nu_by_row(k: u64, n: u64) -> Result<bool> {
    if n == 0 {
        return Err(Error::ZeroColumn);
    }
    if k == 0 {
        return Ok(n == 1);
    }
    let top = (n - 1)
        .checked_add(k - 1)
        .ok_or(Error::IndexOverflow { k, n })?;
    Ok(beta(top, k - 1))
}

/// α(j, n) = ν(j+1, n).
pub fn alpha(j: u64, n: u64) -> Result<bool> {
    let k = j.checked_add(1).ok_or(Error::IndexOverflow { k: j, n })?;
    nu(k, n)
}

/// ⟨k, l⟩: the number whose binary digits are the digitwise products of `k` and `l`.
#[inline]
pub fn inner(k: u64, l: u64) -> u64 {
    k & l
}

/// B(k, l) by its definition: the number of `j ∈ [1, k ∨ l]` where exactly one
/// of β(k, j), β(l, j) is 1. Linear in `k ∨ l`.
pub fn big_b_count(k: u64, l: u64) -> u64 {
    (1..=k.max(l)).filter(|&j| beta(k, j) != beta(l, j)).count() as u64
}

/// B(k, l) = 2^θ(k) + 2^θ(l) - 2^{θ(⟨k,l⟩)+1}.
pub fn big_b(k: u64, l: u64) -> u128 {
    let b = pow2_theta(k) + pow2_theta(l) - 2 * pow2_theta(inner(k, l));
    debug_assert!(k.max(l) > 4096 || u128::from(big_b_count(k, l)) == b);
    b
}

/// 𝓑(k, l, n) = 2^θ(k) + 2^θ(l) - 2 Σ_{j=0}^{k ∧ (l-n)} β(k, j) β(l, n+j), for `n ≤ l`.
pub fn cal_b(k: u64, l: u64, n: u64) -> Result<u128> {
    if n > l {
        return Err(Error::LagBeyondRow { l, n });
    }
    let upper = k.min(l - n);
    let overlap = (0..=upper)
        .filter(|&j| beta(k, j) && beta(l, n + j))
        .count() as u128;
    Ok(pow2_theta(k) + pow2_theta(l) - 2 * overlap)
}

/// ω(k, n) = #{m ∈ [1, n] : ν(k, m) = 1}, by direct summation.
pub fn omega(k: u64, n: u64) -> Result<u64> {
    let mut count = 0;
    for m in 1..=n {
        if nu(k, m)? {
            count += 1;
        }
    }
    Ok(count)
}

/// Smallest power of two that is at least `k` (with `k = 0` mapped to 1).
pub(crate) fn dyadic_ceiling(k: u64) -> u64 {
    k.max(1).next_power_of_two()
}
