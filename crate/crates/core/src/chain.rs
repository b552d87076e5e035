//! The column Markov chain on `E = {-1,1}^{2K+1}`.
//!
//! Column `n` of the spin array is the chain state `X_n`; the innovation
//! `X_n(0)` is a fresh Bernoulli spin and every other component follows from
//! the three-dot rule. States are encoded as integers: bit `i` holds
//! component `i - K` with bit value `(1 - e)/2`. The projections on
//! components `-K..=0` (upward) and `0..=K` (downward) are Markov chains in
//! their own right; their codes put component `-K` (resp. `0`) at bit 0.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use serde::Serialize;

use crate::bincomb::beta;
use crate::export::{F17, SCHEMA_VERSION};
use crate::rng::SpinSource;
use crate::{BernoulliParam, Error, Result, Spin};

/// Default cap on the number of states for exact matrix work.
pub const DEFAULT_STATE_CAP: usize = 1 << 13;

/// Absolute tolerance for fixed-point and mixing comparisons.
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    /// All components `-K..=K`.
    Full,
    /// Components `-K..=0`.
    Up,
    /// Components `0..=K`.
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChainSpace {
    k: usize,
    projection: Projection,
}

impl ChainSpace {
    pub fn new(k: usize, projection: Projection) -> Result<Self> {
        let space = ChainSpace { k, projection };
        if space.width() > 63 {
            return Err(Error::StateTooWide(k));
        }
        Ok(space)
    }

    pub fn full(k: usize) -> Result<Self> {
        ChainSpace::new(k, Projection::Full)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn projection(&self) -> Projection {
        self.projection
    }

    /// Number of components.
    pub fn width(&self) -> usize {
        match self.projection {
            Projection::Full => 2 * self.k + 1,
            Projection::Up | Projection::Down => self.k + 1,
        }
    }

    pub fn components(&self) -> RangeInclusive<i64> {
        let k = self.k as i64;
        match self.projection {
            Projection::Full => -k..=k,
            Projection::Up => -k..=0,
            Projection::Down => 0..=k,
        }
    }

    /// Number of states, `2^width`.
    pub fn state_count(&self) -> usize {
        1usize << self.width()
    }

    fn center(&self) -> usize {
        match self.projection {
            Projection::Full | Projection::Up => self.k,
            Projection::Down => 0,
        }
    }

    /// Bit position of a component, if the space contains it.
    pub fn bit_of(&self, component: i64) -> Option<usize> {
        self.components()
            .contains(&component)
            .then(|| (component + self.center() as i64) as usize)
    }

    /// Component `c` of an encoded state.
    #[inline]
    pub fn spin_at(&self, code: u64, component: i64) -> Spin {
        let bit = self.bit_of(component).expect("component outside the space");
        Spin::from_bit(code >> bit)
    }

    /// Encoded forward vector `e^s`.
    #[inline]
    pub fn forward_code(&self, code: u64, s: Spin) -> u64 {
        let c = self.center();
        let mut out = s.bit() << c;
        let mut acc = s.bit();
        if matches!(self.projection, Projection::Full | Projection::Down) {
            for j in 1..=self.k {
                acc ^= (code >> (c + j)) & 1;
                out |= acc << (c + j);
            }
        }
        if matches!(self.projection, Projection::Full | Projection::Up) {
            acc = s.bit();
            for j in 1..=self.k {
                acc ^= (code >> (c + 1 - j)) & 1;
                out |= acc << (c - j);
            }
        }
        out
    }

    fn check_cap(&self, cap: usize) -> Result<()> {
        if self.width() >= usize::BITS as usize || self.state_count() > cap {
            return Err(Error::StateCapExceeded {
                states: if self.width() >= usize::BITS as usize {
                    usize::MAX
                } else {
                    self.state_count()
                },
                cap,
            });
        }
        Ok(())
    }
}

/// A state of the full chain: components `e(-K), ..., e(K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChainState {
    k: usize,
    bits: u64,
}

impl ChainState {
    pub fn ones(k: usize) -> Result<Self> {
        ChainSpace::full(k)?;
        Ok(ChainState { k, bits: 0 })
    }

    /// From spins listed in component order `-K..=K`.
    pub fn from_spins(spins: &[Spin]) -> Result<Self> {
        if spins.is_empty() || spins.len().is_multiple_of(2) {
            return Err(Error::LengthMismatch {
                expected: 2 * (spins.len() / 2) + 1,
                got: spins.len(),
            });
        }
        let k = spins.len() / 2;
        ChainSpace::full(k)?;
        let bits = spins
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, s)| acc | (s.bit() << i));
        Ok(ChainState { k, bits })
    }

    pub fn from_code(k: usize, code: u64) -> Result<Self> {
        let space = ChainSpace::full(k)?;
        if code >> space.width() != 0 {
            return Err(Error::LengthMismatch {
                expected: space.width(),
                got: 64 - code.leading_zeros() as usize,
            });
        }
        Ok(ChainState { k, bits: code })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn code(&self) -> u64 {
        self.bits
    }

    pub fn space(&self) -> ChainSpace {
        ChainSpace {
            k: self.k,
            projection: Projection::Full,
        }
    }

    pub fn component(&self, c: i64) -> Result<Spin> {
        if c.unsigned_abs() as usize > self.k {
            return Err(Error::RowOutOfRange { k: c, kmax: self.k });
        }
        Ok(Spin::from_bit(self.bits >> (c + self.k as i64)))
    }

    pub fn spins(&self) -> Vec<Spin> {
        (0..2 * self.k + 1)
            .map(|i| Spin::from_bit(self.bits >> i))
            .collect()
    }

    /// Code of the projection on the given space's components.
    pub fn project(&self, projection: Projection) -> u64 {
        match projection {
            Projection::Full => self.bits,
            Projection::Up => self.bits & ((1u64 << (self.k + 1)) - 1),
            Projection::Down => self.bits >> self.k,
        }
    }

    /// `e^s`: `e^s(0) = s`, `e^s(k) = e^s(k-1) e(k)`, `e^s(-k) = e^s(-k+1) e(-k+1)`.
    pub fn forward(&self, s: Spin) -> ChainState {
        ChainState {
            k: self.k,
            bits: self.space().forward_code(self.bits, s),
        }
    }

    /// `^s e`: `^s e(-K) = s`, `^s e(k) = e(k-1) e(k)` for `k > -K`.
    pub fn backward(&self, s: Spin) -> ChainState {
        let mask = (1u64 << (2 * self.k + 1)) - 1;
        let bits = ((self.bits ^ (self.bits << 1)) & mask & !1) | s.bit();
        ChainState { k: self.k, bits }
    }
}

/// One transition; returns the new state and its innovation `X_n(0)`.
pub fn step(e: &ChainState, source: &mut SpinSource) -> (ChainState, Spin) {
    let s = source.next_spin();
    (e.forward(s), s)
}

/// Transition matrix in successor form: row `i` has mass `p` on
/// `forward(i, +1)` and `1 - p` on `forward(i, -1)`, zero elsewhere.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    space: ChainSpace,
    p: BernoulliParam,
    succ: Vec<[u64; 2]>,
}

/// Builds the transition matrix of a chain (or projection) with at most `cap` states.
pub fn build_matrix(space: ChainSpace, p: BernoulliParam, cap: usize) -> Result<TransitionMatrix> {
    space.check_cap(cap)?;
    let succ = (0..space.state_count() as u64)
        .map(|c| {
            [
                space.forward_code(c, Spin::Plus),
                space.forward_code(c, Spin::Minus),
            ]
        })
        .collect();
    Ok(TransitionMatrix { space, p, succ })
}

impl TransitionMatrix {
    pub fn space(&self) -> ChainSpace {
        self.space
    }

    pub fn p(&self) -> BernoulliParam {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.succ.len()
    }

    pub fn successors(&self, i: usize) -> [u64; 2] {
        self.succ[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let [plus, minus] = self.succ[i];
        let mut v = 0.0;
        if plus == j as u64 {
            v += self.p.p();
        }
        if minus == j as u64 {
            v += 1.0 - self.p.p();
        }
        v
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        (0..self.dim()).map(|j| self.entry(i, j)).sum()
    }

    /// Row vector times matrix: `(μP)(j) = Σ_i μ(i) P(i, j)`.
    pub fn push(&self, dist: &[f64]) -> Vec<f64> {
        let p = self.p.p();
        let mut out = vec![0.0; self.dim()];
        for (w, &[plus, minus]) in dist.iter().zip(&self.succ) {
            out[plus as usize] += w * p;
            out[minus as usize] += w * (1.0 - p);
        }
        out
    }

    /// Matrix times column vector: `(Pf)(i) = Σ_j P(i, j) f(j)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let p = self.p.p();
        self.succ
            .iter()
            .map(|&[plus, minus]| p * f[plus as usize] + (1.0 - p) * f[minus as usize])
            .collect()
    }

    /// Row `start` of `P^steps`.
    pub fn kernel_row(&self, start: usize, steps: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.dim()];
        row[start] = 1.0;
        for _ in 0..steps {
            row = self.push(&row);
        }
        row
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.entry(i, j)).collect())
            .collect()
    }

    /// Dense CSV: a header of column codes, then one line per row code.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state");
        for j in 0..self.dim() {
            let _ = write!(out, ",{j}");
        }
        out.push('\n');
        for i in 0..self.dim() {
            let _ = write!(out, "{i}");
            for j in 0..self.dim() {
                let _ = write!(out, ",{}", crate::export::fmt17(self.entry(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    space: ChainSpace,
    p: BernoulliParam,
    weights: Vec<f64>,
}

#[derive(Serialize)]
struct WeightRecord {
    state: u64,
    weight: F17,
}

#[derive(Serialize)]
struct DistributionJson {
    schema: u32,
    #[serde(rename = "K")]
    k: usize,
    p: F17,
    projection: Projection,
    weights: Vec<WeightRecord>,
}

impl StateDistribution {
    pub fn space(&self) -> ChainSpace {
        self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, code: u64) -> f64 {
        self.weights[code as usize]
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `E[g(Ξ)]` over the encoded states.
    pub fn expectation(&self, g: impl Fn(u64) -> f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(c, w)| w * g(c as u64))
            .sum()
    }

    /// `E[Ξ(c)]` by enumeration.
    pub fn mean(&self, c: i64) -> f64 {
        self.expectation(|code| self.space.spin_at(code, c).as_f64())
    }

    /// `E[Ξ(a) Ξ(b)]` by enumeration.
    pub fn product_mean(&self, a: i64, b: i64) -> f64 {
        self.expectation(|code| {
            (self.space.spin_at(code, a) * self.space.spin_at(code, b)).as_f64()
        })
    }

    /// `max_j |(πP)(j) - π(j)|`.
    pub fn fixed_point_residual(&self, matrix: &TransitionMatrix) -> f64 {
        matrix
            .push(&self.weights)
            .iter()
            .zip(&self.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        let doc = DistributionJson {
            schema: SCHEMA_VERSION,
            k: self.space.k,
            p: F17(self.p.p()),
            projection: self.space.projection,
            weights: self
                .weights
                .iter()
                .enumerate()
                .map(|(c, &w)| WeightRecord {
                    state: c as u64,
                    weight: F17(w),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("distribution serializes")
    }
}

/// `∏_{k=0}^{K} ρ(∏_{ℓ=0}^{k} e(-ℓ)^{β(k,ℓ)})` where `up_bit(ℓ)` is the bit of `e(-ℓ)`.
fn upward_product(k: usize, p: BernoulliParam, up_bit: impl Fn(usize) -> u64) -> f64 {
    (0..=k)
        .map(|row| {
            let parity = (0..=row)
                .filter(|&l| beta(row as u64, l as u64))
                .fold(0, |acc, l| acc ^ up_bit(l));
            p.rho(Spin::from_bit(parity))
        })
        .product()
}

/// `π(e)` for a single state, without enumerating the space.
pub fn pi_weight(e: &ChainState, p: BernoulliParam) -> f64 {
    let k = e.k;
    let prod = upward_product(k, p, |l| (e.bits >> (k - l)) & 1);
    prod * 0.5f64.powi(k as i32)
}

/// Closed-form stationary law of the chain or one of its projections.
pub fn stationary(space: ChainSpace, p: BernoulliParam, cap: usize) -> Result<StateDistribution> {
    space.check_cap(cap)?;
    let k = space.k;
    let scale = 0.5f64.powi(k as i32);
    let weights = (0..space.state_count() as u64)
        .map(|code| match space.projection {
            // Components -K..=0 sit at bits 0..=K in both codes, so e(-ℓ) is bit K - ℓ.
            Projection::Full => scale * upward_product(k, p, |l| (code >> (k - l)) & 1),
            Projection::Up => upward_product(k, p, |l| (code >> (k - l)) & 1),
            Projection::Down => scale * p.rho(Spin::from_bit(code)),
        })
        .collect();
    Ok(StateDistribution { space, p, weights })
}

/// π on `{-1,1}^{2K+1}`.
pub fn stationary_pi(k: usize, p: BernoulliParam) -> Result<StateDistribution> {
    stationary(ChainSpace::new(k, Projection::Full)?, p, DEFAULT_STATE_CAP)
}

/// π̂ on the upward components `-K..=0`.
pub fn stationary_pi_hat(k: usize, p: BernoulliParam) -> Result<StateDistribution> {
    stationary(ChainSpace::new(k, Projection::Up)?, p, DEFAULT_STATE_CAP)
}

/// π̌ on the downward components `0..=K`.
pub fn stationary_pi_check(k: usize, p: BernoulliParam) -> Result<StateDistribution> {
    stationary(ChainSpace::new(k, Projection::Down)?, p, DEFAULT_STATE_CAP)
}

/// The unique path `e_0 → e_1 → … → e_{2K+1}` between two states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reconstruction {
    /// Intermediate states `e_1, …, e_{2K}`.
    pub states: Vec<ChainState>,
    /// Innovations `e_1(0), …, e_{2K+1}(0)`.
    pub innovations: Vec<Spin>,
}

impl Reconstruction {
    /// `∏ ρ(e_n(0))`, which equals `P(X_{2K+1} = e_T | X_0 = e_0)`.
    pub fn probability(&self, p: BernoulliParam) -> f64 {
        self.innovations.iter().map(|&s| p.rho(s)).product()
    }
}

/// Completes the three-dot half array between `e0` and `e_{2K+1} = et`.
///
/// Walking back from `et`, each backward step pins one more component: the
/// cells `e_n(K+1-n)` on the anti-diagonal are determined by `et` alone.
/// Walking forward from `e0`, the innovation of step `n` is the unique spin
/// that makes `e_n(K+1-n)` match that anti-diagonal cell.
pub fn reconstruct_chain(e0: &ChainState, et: &ChainState) -> Result<Reconstruction> {
    if e0.k != et.k {
        return Err(Error::LengthMismatch {
            expected: 2 * e0.k + 1,
            got: 2 * et.k + 1,
        });
    }
    let k = e0.k as i64;
    let t = 2 * e0.k + 1;
    // diagonal[n] = e_n(K + 1 - n) for n = 1..=T.
    let mut diagonal = vec![Spin::Plus; t + 1];
    let mut col = *et;
    for n in (1..=t).rev() {
        diagonal[n] = col.component(k + 1 - n as i64)?;
        col = col.backward(Spin::Plus);
    }
    let mut cur = *e0;
    let mut states = Vec::with_capacity(t - 1);
    let mut innovations = Vec::with_capacity(t);
    for (n, &target) in diagonal.iter().enumerate().skip(1) {
        let plus = cur.forward(Spin::Plus);
        let s = if plus.component(k + 1 - n as i64)? == target {
            Spin::Plus
        } else {
            Spin::Minus
        };
        cur = cur.forward(s);
        innovations.push(s);
        if n < t {
            states.push(cur);
        }
    }
    debug_assert_eq!(cur, *et);
    Ok(Reconstruction {
        states,
        innovations,
    })
}

/// Closed-form moments of the stationary vector Ξ.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryMoments {
    k: usize,
    p: BernoulliParam,
    /// `up_means[k] = E[Ξ(-k)] = (2p-1)^{2^θ(k)}`.
    up_means: Vec<f64>,
    /// `up_pairs[k][l] = E[Ξ(-k) Ξ(-l)] = (2p-1)^{B(k,l)}`.
    up_pairs: Vec<Vec<f64>>,
}

pub fn stationary_moments(k: usize, p: BernoulliParam) -> StationaryMoments {
    let r = p.drift();
    let up_means = (0..=k as u64)
        .map(|j| crate::limits::pow_r(r, crate::bincomb::pow2_theta(j)))
        .collect();
    let up_pairs = (0..=k as u64)
        .map(|a| {
            (0..=k as u64)
                .map(|b| crate::limits::pow_r(r, crate::bincomb::big_b(a, b)))
                .collect()
        })
        .collect();
    StationaryMoments {
        k,
        p,
        up_means,
        up_pairs,
    }
}

impl StationaryMoments {
    fn check(&self, c: i64) -> Result<()> {
        if c.unsigned_abs() as usize > self.k {
            return Err(Error::RowOutOfRange { k: c, kmax: self.k });
        }
        Ok(())
    }

    /// `E[Ξ(c)]`: `(2p-1)^{2^θ(-c)}` for `c ≤ 0`, zero for `c ≥ 1`.
    pub fn mean(&self, c: i64) -> Result<f64> {
        self.check(c)?;
        Ok(if c <= 0 {
            self.up_means[c.unsigned_abs() as usize]
        } else {
            0.0
        })
    }

    /// `E[Ξ(a) Ξ(b)]` for any pair of components.
    ///
    /// Upward pairs use `(2p-1)^{B}`; a downward component is symmetric and
    /// independent of every other component, so mixed and distinct downward
    /// pairs vanish and `E[Ξ(c)²] = 1`.
    pub fn pair(&self, a: i64, b: i64) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(match (a <= 0, b <= 0) {
            (true, true) => self.up_pairs[a.unsigned_abs() as usize][b.unsigned_abs() as usize],
            _ if a == b => 1.0,
            _ => 0.0,
        })
    }

    /// `P(Ξ(-k) = 1 | Ξ(-ℓ) = x_ℓ, ℓ < k) = ρ(∏_{ℓ<k} x_ℓ^{β(k,ℓ)})`; `lower[ℓ]` is `x_ℓ`.
    pub fn conditional_plus(&self, k: usize, lower: &[Spin]) -> Result<f64> {
        if k > self.k || lower.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                got: lower.len(),
            });
        }
        let s = lower.iter().enumerate().fold(Spin::Plus, |acc, (l, &x)| {
            acc * x.pow(beta(k as u64, l as u64))
        });
        Ok(self.p.rho(s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    pub k: usize,
    pub p: f64,
    /// `max |P̂^{K+1}(ê, ·) - π̂|` over all starting states.
    pub upward_deviation: f64,
    /// `max |P^{2K+1}(e, ·) - P^{2K+1}(e', ·)|` over all pairs of rows.
    pub full_row_spread: f64,
}

impl MixingReport {
    pub fn upward_mixed(&self) -> bool {
        self.upward_deviation <= EXACT_TOL
    }

    pub fn full_mixed(&self) -> bool {
        self.full_row_spread <= EXACT_TOL
    }

    /// Upward projection stationary after `K+1` steps, and (for `p = 1/2`)
    /// the full chain after `2K+1` steps.
    pub fn passed(&self) -> bool {
        self.upward_mixed() && (self.p != 0.5 || self.full_mixed())
    }
}

pub fn mixing_check(k: usize, p: BernoulliParam, cap: usize) -> Result<MixingReport> {
    let up_space = ChainSpace::new(k, Projection::Up)?;
    let full_space = ChainSpace::new(k, Projection::Full)?;
    let up = build_matrix(up_space, p, cap)?;
    let full = build_matrix(full_space, p, cap)?;
    let pi_hat = stationary(up_space, p, cap)?;

    let mut upward_deviation: f64 = 0.0;
    for start in 0..up.dim() {
        let row = up.kernel_row(start, k + 1);
        for (a, b) in row.iter().zip(pi_hat.weights()) {
            upward_deviation = upward_deviation.max((a - b).abs());
        }
    }

    let steps = 2 * k + 1;
    let reference = full.kernel_row(0, steps);
    let mut full_row_spread: f64 = 0.0;
    for start in 1..full.dim() {
        let row = full.kernel_row(start, steps);
        for (a, b) in row.iter().zip(&reference) {
            full_row_spread = full_row_spread.max((a - b).abs());
        }
    }

    Ok(MixingReport {
        k,
        p: p.p(),
        upward_deviation,
        full_row_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{build_array_stream, GenConfig};

    fn bp(p: f64) -> BernoulliParam {
        BernoulliParam::new(p).unwrap()
    }

    fn all_states(k: usize) -> impl Iterator<Item = ChainState> {
        (0..1u64 << (2 * k + 1)).map(move |c| ChainState::from_code(k, c).unwrap())
    }

    #[test]
    fn encoding_round_trip() {
        for e in all_states(2) {
            assert_eq!(ChainState::from_spins(&e.spins()).unwrap(), e);
        }
        let e = ChainState::from_spins(&[Spin::Minus, Spin::Plus, Spin::Plus]).unwrap();
        assert_eq!(e.code(), 1);
        assert_eq!(e.component(-1).unwrap(), Spin::Minus);
        assert!(ChainState::from_spins(&[Spin::Plus, Spin::Plus]).is_err());
        assert!(ChainState::from_code(1, 8).is_err());
    }

    #[test]
    fn forward_examples() {
        let ones = ChainState::ones(3).unwrap();
        assert_eq!(ones.forward(Spin::Plus), ones);

        let e = ChainState::from_spins(&[Spin::Minus, Spin::Plus, Spin::Minus]).unwrap();
        let f = e.forward(Spin::Plus);
        assert_eq!(f.spins(), vec![Spin::Plus, Spin::Plus, Spin::Minus]);

        for k in 0..=3 {
            for e in all_states(k) {
                let a = e.forward(Spin::Plus).code();
                let b = e.forward(Spin::Minus).code();
                assert_eq!(a ^ b, (1u64 << (2 * k + 1)) - 1);
            }
        }
    }

    #[test]
    fn forward_matches_component_rules() {
        for e in all_states(3) {
            for s in [Spin::Plus, Spin::Minus] {
                let f = e.forward(s);
                assert_eq!(f.component(0).unwrap(), s);
                for j in 1..=3 {
                    assert_eq!(
                        f.component(j).unwrap(),
                        f.component(j - 1).unwrap() * e.component(j).unwrap()
                    );
                    assert_eq!(
                        f.component(-j).unwrap(),
                        f.component(-j + 1).unwrap() * e.component(-j + 1).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn backward_examples() {
        let ones = ChainState::ones(2).unwrap();
        assert_eq!(ones.backward(Spin::Plus), ones);
        for e in all_states(2) {
            let a = e.backward(Spin::Plus);
            let b = e.backward(Spin::Minus);
            assert_eq!(a.code() ^ b.code(), 1);
            for j in -1..=2 {
                assert_eq!(
                    a.component(j).unwrap(),
                    e.component(j - 1).unwrap() * e.component(j).unwrap()
                );
            }
        }
    }

    #[test]
    fn exactly_two_predecessors() {
        let p = bp(0.3);
        for k in 0..=3 {
            let m = build_matrix(ChainSpace::full(k).unwrap(), p, DEFAULT_STATE_CAP).unwrap();
            for e in all_states(k) {
                let mut preds: Vec<u64> = (0..m.dim())
                    .filter(|&i| m.entry(i, e.code() as usize) > 0.0)
                    .map(|i| i as u64)
                    .collect();
                preds.sort();
                let mut expected = vec![
                    e.backward(Spin::Plus).code(),
                    e.backward(Spin::Minus).code(),
                ];
                expected.sort();
                assert_eq!(preds, expected);
            }
        }
    }

    #[test]
    fn matrix_shape() {
        let p = bp(0.7);
        let m0 = build_matrix(ChainSpace::full(0).unwrap(), p, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(
            m0.to_dense(),
            vec![vec![0.7, 1.0 - 0.7], vec![0.7, 1.0 - 0.7]]
        );
        for k in 0..=3 {
            for proj in [Projection::Full, Projection::Up, Projection::Down] {
                let m =
                    build_matrix(ChainSpace::new(k, proj).unwrap(), p, DEFAULT_STATE_CAP).unwrap();
                for i in 0..m.dim() {
                    assert!((m.row_sum(i) - 1.0).abs() < 1e-12);
                    let nz: Vec<f64> = (0..m.dim())
                        .map(|j| m.entry(i, j))
                        .filter(|&v| v > 0.0)
                        .collect();
                    assert_eq!(nz.len(), 2);
                }
            }
        }
        assert!(matches!(
            build_matrix(ChainSpace::full(7).unwrap(), p, DEFAULT_STATE_CAP),
            Err(Error::StateCapExceeded { .. })
        ));
    }

    #[test]
    fn power_is_positive_after_2k_plus_2() {
        let p = bp(0.8);
        for k in 0..=2 {
            let m = build_matrix(ChainSpace::full(k).unwrap(), p, DEFAULT_STATE_CAP).unwrap();
            for i in 0..m.dim() {
                assert!(m.kernel_row(i, 2 * k + 2).iter().all(|&v| v > 0.0));
            }
        }
    }

    #[test]
    fn pi_examples() {
        let p = bp(0.7);
        let pi = stationary_pi(1, p).unwrap();
        for e1 in [Spin::Plus, Spin::Minus] {
            let e = ChainState::from_spins(&[Spin::Plus, Spin::Plus, e1]).unwrap();
            assert!((pi.weight(e.code()) - 0.49 / 2.0).abs() < 1e-15);
            assert!((pi_weight(&e, p) - 0.49 / 2.0).abs() < 1e-15);
        }
        let uniform = stationary_pi(2, bp(0.5)).unwrap();
        assert!(uniform
            .weights()
            .iter()
            .all(|&w| (w - 1.0 / 32.0).abs() < 1e-15));

        let check = stationary_pi_check(3, p).unwrap();
        assert!((check.mean(0) - 0.4).abs() < 1e-12);
        for c in 1..=3 {
            assert!(check.mean(c).abs() < 1e-12);
            for d in 1..c {
                assert!(check.product_mean(c, d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stationary_laws_are_fixed_points() {
        for k in 1..=3 {
            for p in [0.2, 0.5, 0.8] {
                let p = bp(p);
                for proj in [Projection::Full, Projection::Up, Projection::Down] {
                    let space = ChainSpace::new(k, proj).unwrap();
                    let m = build_matrix(space, p, DEFAULT_STATE_CAP).unwrap();
                    let d = stationary(space, p, DEFAULT_STATE_CAP).unwrap();
                    assert!((d.total() - 1.0).abs() < 1e-12);
                    assert!(d.fixed_point_residual(&m) < 1e-12, "{proj:?} k={k}");
                }
            }
        }
    }

    #[test]
    fn innovation_is_independent_of_predecessor() {
        let p = bp(0.3);
        let space = ChainSpace::full(2).unwrap();
        let m = build_matrix(space, p, DEFAULT_STATE_CAP).unwrap();
        for i in 0..m.dim() {
            let plus: f64 = (0..m.dim())
                .filter(|&j| space.spin_at(j as u64, 0) == Spin::Plus)
                .map(|j| m.entry(i, j))
                .sum();
            assert!((plus - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn reconstruction_examples() {
        let p = bp(0.6);
        for k in 0..=2 {
            let ones = ChainState::ones(k).unwrap();
            let r = reconstruct_chain(&ones, &ones).unwrap();
            assert!(r.states.iter().all(|s| *s == ones));
            assert!((r.probability(p) - 0.6f64.powi(2 * k as i32 + 1)).abs() < 1e-15);
        }
        for k in 0..=2 {
            let m = build_matrix(ChainSpace::full(k).unwrap(), p, DEFAULT_STATE_CAP).unwrap();
            for e0 in all_states(k) {
                let kernel = m.kernel_row(e0.code() as usize, 2 * k + 1);
                let mut total = 0.0;
                for et in all_states(k) {
                    let r = reconstruct_chain(&e0, &et).unwrap();
                    assert_eq!(r.states.len(), 2 * k);
                    let mut cur = e0;
                    for (i, &s) in r.innovations.iter().enumerate() {
                        cur = cur.forward(s);
                        if i < 2 * k {
                            assert_eq!(cur, r.states[i]);
                        }
                    }
                    assert_eq!(cur, et);
                    let prob = r.probability(p);
                    assert!((prob - kernel[et.code() as usize]).abs() < 1e-15);
                    total += prob;
                }
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn moments_match_enumeration() {
        for k in 0..=3 {
            for p in [0.3, 0.5, 0.7] {
                let p = bp(p);
                let pi = stationary_pi(k, p).unwrap();
                let mom = stationary_moments(k, p);
                let ki = k as i64;
                for a in -ki..=ki {
                    assert!((mom.mean(a).unwrap() - pi.mean(a)).abs() < 1e-12);
                    for b in -ki..=ki {
                        assert!((mom.pair(a, b).unwrap() - pi.product_mean(a, b)).abs() < 1e-12);
                    }
                }
                assert!(mom.mean(ki + 1).is_err());
            }
        }
        let p = bp(0.7);
        let mom = stationary_moments(4, p);
        assert!((mom.mean(0).unwrap() - 0.4).abs() < 1e-15);
        for j in [1, 2, 4] {
            assert!((mom.mean(-j).unwrap() - 0.16).abs() < 1e-15);
        }
        for j in 0..=4 {
            assert_eq!(mom.pair(-j, -j).unwrap(), 1.0);
        }
    }

    #[test]
    fn conditional_law_matches_enumeration() {
        let p = bp(0.3);
        let k = 3;
        let pi = stationary_pi_hat(k, p).unwrap();
        let mom = stationary_moments(k, p);
        let space = pi.space();
        for level in 1..=k {
            for lower_bits in 0..1u64 << level {
                let lower: Vec<Spin> = (0..level)
                    .map(|l| Spin::from_bit(lower_bits >> l))
                    .collect();
                let matches =
                    |code: u64| (0..level).all(|l| space.spin_at(code, -(l as i64)) == lower[l]);
                let joint = pi.expectation(|c| {
                    f64::from(u8::from(
                        matches(c) && space.spin_at(c, -(level as i64)) == Spin::Plus,
                    ))
                });
                let marginal = pi.expectation(|c| f64::from(u8::from(matches(c))));
                let cond = mom.conditional_plus(level, &lower).unwrap();
                assert!((joint / marginal - cond).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn downward_components_independent_of_upward_block() {
        let p = bp(0.7);
        let pi = stationary_pi(2, p).unwrap();
        let hat = stationary_pi_hat(2, p).unwrap();
        let space = pi.space();
        for code in 0..space.state_count() as u64 {
            let e = ChainState::from_code(2, code).unwrap();
            let expected = hat.weight(e.project(Projection::Up)) * 0.25;
            assert!((pi.weight(code) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn covariance_lower_bound() {
        for p in [0.3, 0.7] {
            let p = bp(p);
            let r = p.drift();
            for k in 0..=3i64 {
                let pi = stationary_pi(k as usize, p).unwrap();
                for a in 0..=k {
                    for b in a + 1..=k {
                        let cov = pi.product_mean(-a, -b) - pi.mean(-a) * pi.mean(-b);
                        let b_ab = crate::bincomb::big_b(a as u64, b as u64);
                        let bound = 4.0 * p.p() * (1.0 - p.p()) * crate::limits::pow_r(r, b_ab);
                        assert!(cov >= bound - 1e-15, "p={} a={a} b={b}", p.p());
                        // The bound is positive unless r < 0 and B is odd, which happens exactly for a = 0.
                        assert_eq!(bound > 0.0, r > 0.0 || a > 0);
                        assert_eq!(b_ab % 2 == 1, a == 0);
                    }
                }
            }
        }
    }

    #[test]
    fn mixing_examples() {
        for k in 0..=3 {
            for p in [0.3, 0.5, 0.7] {
                let r = mixing_check(k, bp(p), DEFAULT_STATE_CAP).unwrap();
                assert!(r.upward_mixed(), "k={k} p={p}");
                assert!(r.passed());
                if k >= 1 {
                    assert_eq!(r.full_mixed(), p == 0.5, "k={k} p={p}");
                }
            }
        }
    }

    #[test]
    fn chain_replays_array_columns() {
        let cfg = GenConfig::new(0.65, 4, 300, 13).unwrap();
        let a = build_array_stream(&cfg, 2).unwrap();
        let mut src = SpinSource::new(13, 2, cfg.p);
        let mut x = ChainState::ones(4).unwrap();
        for m in 1..=301 {
            let (next, s) = step(&x, &mut src);
            x = next;
            assert_eq!(s, a.cell(0, m).unwrap());
            for k in -4..=4 {
                assert_eq!(x.component(k).unwrap(), a.cell(k, m).unwrap());
            }
        }
    }

    #[test]
    fn step_frequencies() {
        let p = bp(0.5);
        let mut src = SpinSource::new(5, 0, p);
        let e = ChainState::from_code(1, 5).unwrap();
        let n = 40_000;
        let plus = (0..n)
            .filter(|_| step(&e, &mut src).0 == e.forward(Spin::Plus))
            .count();
        let frac = plus as f64 / n as f64;
        assert!((frac - 0.5).abs() < 5.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn json_export_parses() {
        let d = stationary_pi(1, bp(0.7)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&d.to_json()).unwrap();
        assert_eq!(v["K"], 1);
        assert_eq!(v["schema"], 1);
        let weights = v["weights"].as_array().unwrap();
        assert_eq!(weights.len(), 8);
        let total: f64 = weights.iter().map(|w| w["weight"].as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
