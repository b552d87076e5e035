//! Closed-form limit theory: drift, lagged stationary covariances and the
//! covariance matrix Σ of the limiting Brownian motion.
//!
//! Throughout, `r = 2p - 1` and `r^0 = 1` (including at `p = 1/2`).

use serde::Serialize;

use crate::bincomb::{big_b, cal_b, dyadic_ceiling, kappa, nu, omega, pow2_theta};
use crate::export::{f17_matrix, f17_vec, F17, SCHEMA_VERSION};
use crate::{BernoulliParam, Error, Result};

/// `r^e` for an integer exponent, with `r^0 = 1` and `0^e = 0` for `e ≥ 1`.
/// Assumes `|r| < 1`, so exponents beyond `i32` underflow to zero.
pub fn pow_r(r: f64, e: u128) -> f64 {
    if e == 0 {
        1.0
    } else if r == 0.0 || e > i32::MAX as u128 {
        0.0
    } else {
        r.powi(e as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    tol: f64,
    max_terms: u64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            tol: 1e-12,
            max_terms: 1_000_000,
        }
    }
}

impl TruncationPolicy {
    pub fn new(tol: f64, max_terms: u64) -> Result<Self> {
        if !(tol > 0.0 && tol.is_finite()) || max_terms == 0 {
            return Err(Error::InvalidTolerance(tol));
        }
        Ok(TruncationPolicy { tol, max_terms })
    }

    pub fn with_tol(tol: f64) -> Result<Self> {
        TruncationPolicy::new(tol, TruncationPolicy::default().max_terms)
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn max_terms(&self) -> u64 {
        self.max_terms
    }
}

/// μ(k): `r^{2^θ(-k)}` for `k ≤ 0`, zero for `k ≥ 1`.
pub fn mu(k: i64, p: BernoulliParam) -> f64 {
    if k >= 1 {
        0.0
    } else {
        pow_r(p.drift(), pow2_theta(k.unsigned_abs()))
    }
}

/// The drift vector `(μ(-K), …, μ(K))`.
pub fn mu_vector(k: usize, p: BernoulliParam) -> Vec<f64> {
    let k = k as i64;
    (-k..=k).map(|c| mu(c, p)).collect()
}

/// `Cov_π(X_0(k), X_n(l))` for `n ≥ 1`.
pub fn cov_lag(k: i64, l: i64, n: u64, p: BernoulliParam) -> Result<f64> {
    if n == 0 {
        return Err(Error::ZeroColumn);
    }
    let r = p.drift();
    if k <= 0 && l <= 0 {
        let (a, b) = (k.unsigned_abs(), l.unsigned_abs());
        if n > b {
            return Ok(0.0);
        }
        Ok(pow_r(r, cal_b(a, b, n)?) - pow_r(r, pow2_theta(a) + pow2_theta(b)))
    } else if k == l {
        let k = k as u64;
        if k > 1u64 << kappa(n)? {
            return Ok(0.0);
        }
        Ok(pow_r(r, u128::from(omega(k, n)?)))
    } else {
        Ok(0.0)
    }
}

/// `Cov_π(X_0(k), X_0(l))`.
pub fn cov_zero(k: i64, l: i64, p: BernoulliParam) -> f64 {
    let r = p.drift();
    if k <= 0 && l <= 0 {
        let (a, b) = (k.unsigned_abs(), l.unsigned_abs());
        pow_r(r, big_b(a, b)) - pow_r(r, pow2_theta(a) + pow2_theta(b))
    } else if k == l {
        1.0
    } else {
        0.0
    }
}

/// Streams the contributing terms `(n, ω_{k,n})` of the downward series for
/// row `k ≥ 1`: the lags `n` that are multiples of the smallest power of two
/// at least `k`, paired with the running count of odd `ν(k, m)`, `m ≤ n`.
struct DownSeries {
    k: u64,
    step: u64,
    m: u64,
    omega: u64,
}

impl DownSeries {
    fn new(k: u64) -> Self {
        DownSeries {
            k,
            step: dyadic_ceiling(k),
            m: 0,
            omega: 0,
        }
    }
}

impl Iterator for DownSeries {
    type Item = (u64, u64);

    fn next(&mut self) -> Option<(u64, u64)> {
        loop {
            self.m += 1;
            if nu(self.k, self.m).ok()? {
                self.omega += 1;
            }
            if self.m.is_multiple_of(self.step) {
                return Some((self.m, self.omega));
            }
        }
    }
}

/// Remaining mass of `2 Σ r^{ω}` after a term with exponent `omega`: the
/// later exponents are distinct integers above `omega`.
fn down_tail(abs_r: f64, omega: u64) -> f64 {
    2.0 * pow_r(abs_r, u128::from(omega) + 1) / (1.0 - abs_r)
}

fn down_diagonal(k: u64, p: BernoulliParam, policy: &TruncationPolicy) -> Result<f64> {
    let r = p.drift();
    if r == 0.0 {
        return Ok(1.0);
    }
    let abs_r = r.abs();
    let mut sum = 0.0;
    for (terms, (_, omega)) in DownSeries::new(k).enumerate() {
        if terms as u64 >= policy.max_terms {
            return Err(Error::NonConvergence {
                k: k as i64,
                terms: policy.max_terms,
            });
        }
        sum += pow_r(r, u128::from(omega));
        if down_tail(abs_r, omega) < policy.tol {
            break;
        }
    }
    Ok(1.0 + 2.0 * sum)
}

/// Σ(k, l).
pub fn sigma_entry(k: i64, l: i64, p: BernoulliParam, policy: &TruncationPolicy) -> Result<f64> {
    let r = p.drift();
    if k <= 0 && l <= 0 {
        let (a, b) = (k.unsigned_abs(), l.unsigned_abs());
        let mut total = 0.0;
        for n in 1..=b {
            total += pow_r(r, cal_b(a, b, n)?);
        }
        for n in 1..=a {
            total += pow_r(r, cal_b(b, a, n)?);
        }
        total += pow_r(r, big_b(a, b));
        total -= (a + b + 1) as f64 * pow_r(r, pow2_theta(a) + pow2_theta(b));
        Ok(total)
    } else if k == l {
        down_diagonal(k as u64, p, policy)
    } else {
        Ok(0.0)
    }
}

/// Σ over components `-K..=K`, row-major in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    k: usize,
    entries: Vec<Vec<f64>>,
}

impl CovMatrix {
    pub fn from_entries(k: usize, entries: Vec<Vec<f64>>) -> Result<Self> {
        let dim = 2 * k + 1;
        if entries.len() != dim || entries.iter().any(|row| row.len() != dim) {
            return Err(Error::LengthMismatch {
                expected: dim,
                got: entries.len(),
            });
        }
        Ok(CovMatrix { k, entries })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        2 * self.k + 1
    }

    fn index(&self, c: i64) -> usize {
        assert!(
            c.unsigned_abs() as usize <= self.k,
            "component {c} outside ±{}",
            self.k
        );
        (c + self.k as i64) as usize
    }

    /// Σ(k, l) with component labels.
    pub fn get(&self, k: i64, l: i64) -> f64 {
        self.entries[self.index(k)][self.index(l)]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.entries
    }

    /// `aᵀ Σ a`.
    pub fn quadratic(&self, a: &CoefVector) -> Result<f64> {
        if a.k != self.k {
            return Err(Error::CoefLength {
                expected: self.dim(),
                got: a.values.len(),
            });
        }
        Ok(self
            .entries
            .iter()
            .zip(&a.values)
            .map(|(row, ai)| ai * row.iter().zip(&a.values).map(|(s, aj)| s * aj).sum::<f64>())
            .sum())
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            for j in 0..i {
                worst = worst.max((self.entries[i][j] - self.entries[j][i]).abs());
            }
        }
        worst
    }
}

pub fn sigma_matrix(k: usize, p: BernoulliParam, policy: &TruncationPolicy) -> Result<CovMatrix> {
    let ki = k as i64;
    let entries = (-ki..=ki)
        .map(|a| {
            (-ki..=ki)
                .map(|b| sigma_entry(a, b, p, policy))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    CovMatrix::from_entries(k, entries)
}

/// Coefficients `a(-K), …, a(K)` of the linear functional `f(e) = Σ a(k) e(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefVector {
    k: usize,
    values: Vec<f64>,
}

impl CoefVector {
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != 2 * k + 1 {
            return Err(Error::CoefLength {
                expected: 2 * k + 1,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::CoefLength {
                expected: 2 * k + 1,
                got: values.iter().filter(|v| v.is_finite()).count(),
            });
        }
        Ok(CoefVector { k, values })
    }

    pub fn zero(k: usize) -> Self {
        CoefVector {
            k,
            values: vec![0.0; 2 * k + 1],
        }
    }

    pub fn unit(k: usize, c: i64) -> Self {
        let mut a = CoefVector::zero(k);
        a.values[(c + k as i64) as usize] = 1.0;
        a
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `a(c)`.
    pub fn at(&self, c: i64) -> f64 {
        self.values[(c + self.k as i64) as usize]
    }

    fn support(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let k = self.k as i64;
        (-k..=k).map(|c| (c, self.at(c))).filter(|&(_, v)| v != 0.0)
    }
}

/// `Var_π(f(X_0))`.
pub fn var_f(a: &CoefVector, p: BernoulliParam) -> f64 {
    let mut v = 0.0;
    for (k, ak) in a.support() {
        for (l, al) in a.support() {
            v += ak * al * cov_zero(k, l, p);
        }
    }
    v
}

/// `aᵀ Σ a` from the assembled matrix.
pub fn sigma_quadratic(
    a: &CoefVector,
    p: BernoulliParam,
    policy: &TruncationPolicy,
) -> Result<f64> {
    sigma_matrix(a.k, p, policy)?.quadratic(a)
}

/// `Var_π f(X_0) + 2 Σ_{n≥1} Cov_π(f(X_0), f(X_n))` assembled lag by lag
/// from [`cov_lag`], truncated once every downward tail is below `tol`.
pub fn sigma_quadratic_by_lags(
    a: &CoefVector,
    p: BernoulliParam,
    policy: &TruncationPolicy,
) -> Result<f64> {
    let r = p.drift();
    let abs_r = r.abs();
    let support: Vec<(i64, f64)> = a.support().collect();
    let mut total = var_f(a, p);
    let up_horizon = a.k as u64;

    // Upward block: finitely many nonzero lags.
    for n in 1..=up_horizon {
        for &(k, ak) in support.iter().filter(|(k, _)| *k <= 0) {
            for &(l, al) in support.iter().filter(|(l, _)| *l <= 0) {
                total += 2.0 * ak * al * cov_lag(k, l, n, p)?;
            }
        }
    }

    // Downward diagonal: one geometric-type series per component.
    if r != 0.0 {
        for &(k, ak) in support.iter().filter(|(k, _)| *k >= 1) {
            let weight = ak * ak;
            for (terms, (n, omega)) in DownSeries::new(k as u64).enumerate() {
                if terms as u64 >= policy.max_terms {
                    return Err(Error::NonConvergence {
                        k,
                        terms: policy.max_terms,
                    });
                }
                total += 2.0 * weight * cov_lag(k, k, n, p)?;
                debug_assert_eq!(cov_lag(k, k, n, p)?, pow_r(r, u128::from(omega)));
                if weight * down_tail(abs_r, omega) < policy.tol {
                    break;
                }
            }
        }
    }
    Ok(total)
}

/// The μ/Σ document: `{"schema":1,"K":…,"p":…,"tol":…,"sigma":[[…]],"mu":[…]}`,
/// component order `-K..=K`.
#[derive(Debug, Clone, Serialize)]
pub struct SigmaDoc {
    pub schema: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub p: F17,
    pub tol: F17,
    pub sigma: Vec<Vec<F17>>,
    pub mu: Vec<F17>,
}

impl SigmaDoc {
    pub fn new(sigma: &CovMatrix, p: BernoulliParam, policy: &TruncationPolicy) -> Self {
        SigmaDoc {
            schema: SCHEMA_VERSION,
            k: sigma.k,
            p: F17(p.p()),
            tol: F17(policy.tol),
            sigma: f17_matrix(&sigma.entries),
            mu: f17_vec(&mu_vector(sigma.k, p)),
        }
    }
}

pub fn sigma_json(sigma: &CovMatrix, p: BernoulliParam, policy: &TruncationPolicy) -> String {
    serde_json::to_string(&SigmaDoc::new(sigma, p, policy)).expect("sigma document serializes")
}
