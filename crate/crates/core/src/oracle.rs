//! Brute-force references.
//!
//! Everything here is computed the slow way: laws of partial sums by
//! enumerating all `2^n` input sequences through a naive unpacked CA, the
//! stationary law by power iteration on the transition matrix, lagged
//! covariances by repeated matrix-vector products, and the regeneration law
//! of large numbers by simulating return blocks.

use std::collections::BTreeMap;

use crate::chain::{build_matrix, ChainSpace, ChainState, TransitionMatrix, DEFAULT_STATE_CAP};
use crate::limits::pow_r;
use crate::rng::SpinSource;
use crate::{BernoulliParam, Error, Result, Spin};

/// Largest `n` for exhaustive enumeration.
pub const MAX_ENUM_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumConfig {
    n: usize,
    p: BernoulliParam,
    k: usize,
}

impl EnumConfig {
    pub fn new(n: usize, p: BernoulliParam, k: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyRow);
        }
        if n > MAX_ENUM_N {
            return Err(Error::EnumerationTooLarge(n));
        }
        Ok(EnumConfig { n, p, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> BernoulliParam {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Compensated summation for many terms of mixed magnitude.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Row `k` of the array built from `row0` with the unpacked CA rules.
fn naive_row(k: i64, row0: &[i8]) -> Vec<i8> {
    let mut row = row0.to_vec();
    for _ in 0..k.unsigned_abs() {
        if k > 0 {
            let mut acc = 1;
            for x in row.iter_mut() {
                acc *= *x;
                *x = acc;
            }
        } else {
            let mut prev = 1;
            for x in row.iter_mut() {
                let cur = *x;
                *x = prev * cur;
                prev = cur;
            }
            // The first column keeps its row-0 value.
            row[0] = row0[0];
        }
    }
    row
}

/// Exact law of `S^{(k)}_n` and the exact means `E[η_{k,m}]`, `m = 1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowLaw {
    pub dist: BTreeMap<i64, f64>,
    pub eta_means: Vec<f64>,
}

pub fn exact_row_law(k: i64, cfg: &EnumConfig) -> Result<RowLaw> {
    if k.unsigned_abs() as usize > cfg.k {
        return Err(Error::RowOutOfRange { k, kmax: cfg.k });
    }
    let n = cfg.n;
    let p = cfg.p.p();
    let plus_pow: Vec<f64> = (0..=n).map(|j| p.powi(j as i32)).collect();
    let minus_pow: Vec<f64> = (0..=n).map(|j| (1.0 - p).powi(j as i32)).collect();
    let mut dist: BTreeMap<i64, Kahan> = BTreeMap::new();
    let mut means = vec![Kahan::default(); n];
    let mut row0 = vec![1i8; n];
    for mask in 0u32..1 << n {
        for (m, x) in row0.iter_mut().enumerate() {
            *x = if mask >> m & 1 == 1 { -1 } else { 1 };
        }
        let minus = mask.count_ones() as usize;
        let weight = plus_pow[n - minus] * minus_pow[minus];
        let row = naive_row(k, &row0);
        let s: i64 = row.iter().map(|&x| i64::from(x)).sum();
        dist.entry(s).or_default().add(weight);
        for (acc, &x) in means.iter_mut().zip(&row) {
            acc.add(weight * f64::from(x));
        }
    }
    Ok(RowLaw {
        dist: dist.into_iter().map(|(s, w)| (s, w.sum)).collect(),
        eta_means: means.into_iter().map(|m| m.sum).collect(),
    })
}

/// Exact law of `S^{(k)}_n` by enumeration over all inputs.
pub fn exact_dist_s(k: i64, cfg: &EnumConfig) -> Result<BTreeMap<i64, f64>> {
    Ok(exact_row_law(k, cfg)?.dist)
}

/// Stationary law of the full chain by power iteration, independent of any
/// closed form.
pub fn power_stationary(matrix: &TransitionMatrix) -> Result<Vec<f64>> {
    const MAX_ITERATIONS: u64 = 1_000_000;
    let dim = matrix.dim();
    let mut pi = vec![1.0 / dim as f64; dim];
    for _ in 0..MAX_ITERATIONS {
        let next = matrix.push(&pi);
        let change = next
            .iter()
            .zip(&pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pi = next;
        if change < 1e-17 {
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|w| *w /= total);
            return Ok(pi);
        }
    }
    Err(Error::NonConvergence {
        k: matrix.space().k() as i64,
        terms: MAX_ITERATIONS,
    })
}

/// Exact second-order structure of the full chain at one `(K, p)`.
pub struct ExactChain {
    k: usize,
    p: BernoulliParam,
    space: ChainSpace,
    matrix: TransitionMatrix,
    pi: Vec<f64>,
    /// `coords[i][e] = e(i - K)`.
    coords: Vec<Vec<f64>>,
}

impl ExactChain {
    pub fn new(k: usize, p: BernoulliParam) -> Result<Self> {
        let space = ChainSpace::full(k)?;
        let matrix = build_matrix(space, p, DEFAULT_STATE_CAP)?;
        let pi = power_stationary(&matrix)?;
        let coords = space
            .components()
            .map(|c| {
                (0..space.state_count() as u64)
                    .map(|code| space.spin_at(code, c).as_f64())
                    .collect()
            })
            .collect();
        Ok(ExactChain {
            k,
            p,
            space,
            matrix,
            pi,
            coords,
        })
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }

    fn idx(&self, c: i64) -> Result<usize> {
        if c.unsigned_abs() as usize > self.k {
            return Err(Error::RowOutOfRange { k: c, kmax: self.k });
        }
        Ok((c + self.k as i64) as usize)
    }

    fn pi_dot(&self, f: &[f64], g: &[f64]) -> f64 {
        self.pi
            .iter()
            .zip(f)
            .zip(g)
            .map(|((w, a), b)| w * a * b)
            .sum()
    }

    /// `E_π[X_0(c)]`.
    pub fn mean(&self, c: i64) -> Result<f64> {
        let i = self.idx(c)?;
        Ok(self
            .pi
            .iter()
            .zip(&self.coords[i])
            .map(|(w, x)| w * x)
            .sum())
    }

    /// `Cov_π(X_0(k), X_n(l))`, with `n = 0` allowed.
    pub fn lag_cov(&self, k: i64, l: i64, n: u64) -> Result<f64> {
        let (i, j) = (self.idx(k)?, self.idx(l)?);
        let mut h = self.coords[j].clone();
        for _ in 0..n {
            h = self.matrix.apply(&h);
        }
        Ok(self.pi_dot(&self.coords[i], &h) - self.mean(k)? * self.mean(l)?)
    }

    /// `table[n][i][j] = Cov_π(X_0(i - K), X_n(j - K))` for `n = 0..=max_lag`.
    pub fn lag_cov_table(&self, max_lag: u64) -> Vec<Vec<Vec<f64>>> {
        let dim = 2 * self.k + 1;
        let means: Vec<f64> = self
            .space
            .components()
            .map(|c| self.mean(c).expect("in range"))
            .collect();
        let mut h = self.coords.clone();
        let mut table = Vec::with_capacity(max_lag as usize + 1);
        for n in 0..=max_lag {
            if n > 0 {
                h = h.iter().map(|hj| self.matrix.apply(hj)).collect();
            }
            table.push(
                (0..dim)
                    .map(|i| {
                        (0..dim)
                            .map(|j| self.pi_dot(&self.coords[i], &h[j]) - means[i] * means[j])
                            .collect()
                    })
                    .collect(),
            );
        }
        table
    }

    /// Number of lags after which every remaining covariance term sums below `tol`.
    fn horizon(&self, tol: f64) -> u64 {
        let abs_r = self.p.drift().abs();
        let block = crate::bincomb::dyadic_ceiling(self.k as u64);
        // |Cov(X_0(k), X_n(l))| ≤ 2|r|^{⌈n/block⌉} for lags past 2K, and the
        // tail of both orderings is at most 4·block·|r|^{⌈(N+1)/block⌉}/(1-|r|).
        let mut n = 2 * self.k as u64 + 1;
        while 4.0 * block as f64 * pow_r(abs_r, u128::from((n + 1).div_ceil(block))) / (1.0 - abs_r)
            >= tol
        {
            n += 1;
        }
        n
    }

    /// The full matrix `Cov_π(X_0(k), X_0(l)) + Σ_{n=1}^{N} [Cov(X_0(k), X_n(l)) + Cov(X_0(l), X_n(k))]`.
    pub fn sigma_matrix(&self, tol: f64) -> Result<Vec<Vec<f64>>> {
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::InvalidTolerance(tol));
        }
        let dim = 2 * self.k + 1;
        let means: Vec<f64> = self
            .space
            .components()
            .map(|c| self.mean(c))
            .collect::<Result<_>>()?;
        // lagged[i][j] accumulates Σ_n E_π[X_0(i) (P^n h_j)].
        let mut sigma = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                sigma[i][j] = self.pi_dot(&self.coords[i], &self.coords[j]) - means[i] * means[j];
            }
        }
        let horizon = self.horizon(tol);
        let mut h: Vec<Vec<f64>> = self.coords.clone();
        for _ in 1..=horizon {
            h = h.iter().map(|hj| self.matrix.apply(hj)).collect();
            for i in 0..dim {
                for j in 0..dim {
                    let c = self.pi_dot(&self.coords[i], &h[j]) - means[i] * means[j];
                    sigma[i][j] += c;
                    sigma[j][i] += c;
                }
            }
        }
        Ok(sigma)
    }
}

/// `Cov_π(X_0(k), X_n(l))` by enumeration of π and `n` applications of `P`.
pub fn exact_lag_cov(k: i64, l: i64, n: u64, kk: usize, p: BernoulliParam) -> Result<f64> {
    ExactChain::new(kk, p)?.lag_cov(k, l, n)
}

/// Σ(k, l) from the lag series, truncated once the geometric tail is below `tol`.
pub fn exact_sigma(k: i64, l: i64, kk: usize, p: BernoulliParam, tol: f64) -> Result<f64> {
    let chain = ExactChain::new(kk, p)?;
    let (i, j) = (chain.idx(k)?, chain.idx(l)?);
    Ok(chain.sigma_matrix(tol)?[i][j])
}

/// All entries of Σ from the lag series.
pub fn exact_sigma_matrix(kk: usize, p: BernoulliParam, tol: f64) -> Result<Vec<Vec<f64>>> {
    ExactChain::new(kk, p)?.sigma_matrix(tol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegenConfig {
    pub p: BernoulliParam,
    pub seed: u64,
    pub stream: u64,
    /// Number of completed return blocks.
    pub blocks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegenReport {
    /// `(1/n) Σ_{j ≤ τ_n(e)} g(X_j)`.
    pub mean: f64,
    /// Standard error from the spread of the i.i.d. block sums.
    pub stderr: f64,
    pub blocks: usize,
    /// `τ_n(e) / n`.
    pub mean_block_length: f64,
}

/// Runs the chain from `e` until it has returned to `e` `cfg.blocks` times and
/// averages the per-block sums of `g`.
pub fn regeneration_lln(
    g: &dyn Fn(&ChainState) -> f64,
    e: &ChainState,
    cfg: &RegenConfig,
) -> Result<RegenReport> {
    if cfg.blocks < 2 {
        return Err(Error::TooFewTrials {
            needed: 2,
            got: cfg.blocks,
        });
    }
    let mut src = SpinSource::new(cfg.seed, cfg.stream, cfg.p);
    let mut x = *e;
    let mut sums = Vec::with_capacity(cfg.blocks);
    let mut steps = 0u64;
    let mut block = 0.0;
    while sums.len() < cfg.blocks {
        let s: Spin = src.next_spin();
        x = x.forward(s);
        steps += 1;
        block += g(&x);
        if x == *e {
            sums.push(block);
            block = 0.0;
        }
    }
    let n = sums.len() as f64;
    let mean = sums.iter().sum::<f64>() / n;
    let var = sums.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(RegenReport {
        mean,
        stderr: (var / n).sqrt(),
        blocks: sums.len(),
        mean_block_length: steps as f64 / n,
    })
}

/// The regeneration limit `E_e[τ_1(e)] · E_π[g] = E_π[g] / π(e)`, from the
/// power-iteration stationary law.
pub fn regeneration_target(
    g: &dyn Fn(&ChainState) -> f64,
    e: &ChainState,
    p: BernoulliParam,
) -> Result<f64> {
    let chain = ExactChain::new(e.k(), p)?;
    let k = e.k();
    let eg: f64 = chain
        .pi()
        .iter()
        .enumerate()
        .map(|(code, w)| w * g(&ChainState::from_code(k, code as u64).expect("code in range")))
        .sum();
    Ok(eg / chain.pi()[e.code() as usize])
}
