//! Seeded Monte Carlo: partial-sum trajectories, the centered and rescaled
//! processes, empirical covariance of `U_n(1)` and origin-visit statistics.
//!
//! Trial `i` draws its input spins from RNG stream `i` of the configured
//! seed, so every trial is reproducible on its own and batches are merged in
//! trial order regardless of scheduling.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::array::{build_array_stream, GenConfig, SpinArray};
use crate::chain::{ChainSpace, ChainState};
use crate::export::{f17_matrix, f17_vec, fmt17, F17};
use crate::limits::{mu, CovMatrix, SigmaDoc, TruncationPolicy};
use crate::rng::SpinSource;
use crate::{BernoulliParam, Error, Result, Spin};

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub gen: GenConfig,
    pub trials: usize,
    pub t_grid: Vec<f64>,
}

impl PathConfig {
    /// Validates the grid (sorted, within `[0, 1]`) and the trial count.
    pub fn new(gen: GenConfig, trials: usize, t_grid: Vec<f64>) -> Result<Self> {
        if trials == 0 {
            return Err(Error::TooFewTrials { needed: 1, got: 0 });
        }
        if let Some(&t) = t_grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::GridOutOfRange(t));
        }
        if t_grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::UnsortedGrid);
        }
        Ok(PathConfig {
            gen,
            trials,
            t_grid,
        })
    }

    /// The default grid `{1.0}`.
    pub fn at_one(gen: GenConfig, trials: usize) -> Result<Self> {
        PathConfig::new(gen, trials, vec![1.0])
    }
}

/// Row values at one grid time `t`: `S^{(k)}(⌊nt⌋)` and `η_{k,⌊nt⌋+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub m: usize,
    /// Indexed by component `-K..=K`.
    pub sums: Vec<i64>,
    /// Indexed by component `-K..=K`.
    pub next: Vec<Spin>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub k: usize,
    pub n: usize,
    pub p: BernoulliParam,
    pub trial: u64,
    pub snapshots: Vec<Snapshot>,
}

/// Simulates one trial and records grid snapshots of every row.
pub fn simulate_s(gen: &GenConfig, t_grid: &[f64], trial: u64) -> Result<Trajectory> {
    let array = build_array_stream(gen, trial)?;
    trajectory_from_array(&array, gen.p, t_grid, trial)
}

/// Grid snapshots of a given array (which must carry its spare column).
pub fn trajectory_from_array(
    array: &SpinArray,
    p: BernoulliParam,
    t_grid: &[f64],
    trial: u64,
) -> Result<Trajectory> {
    let (k, n) = (array.k(), array.n());
    if array.stored_columns() <= n {
        return Err(Error::ColumnOutOfRange {
            col: n + 1,
            len: array.stored_columns(),
        });
    }
    let ki = k as i64;
    let snapshots = t_grid
        .iter()
        .map(|&t| {
            let m = ((t * n as f64).floor() as usize).min(n);
            let mut sums = Vec::with_capacity(2 * k + 1);
            let mut next = Vec::with_capacity(2 * k + 1);
            for c in -ki..=ki {
                let row = array.row(c)?;
                sums.push(row.partial_sum(m));
                next.push(row.spin(m));
            }
            Ok(Snapshot { t, m, sums, next })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        k,
        n,
        p,
        trial,
        snapshots,
    })
}

/// All trials of a configuration, in trial order.
pub fn simulate_batch(config: &PathConfig) -> Result<Vec<Trajectory>> {
    (0..config.trials as u64)
        .into_par_iter()
        .map(|trial| simulate_s(&config.gen, &config.t_grid, trial))
        .collect()
}

impl Trajectory {
    pub fn snapshot(&self, t: f64) -> Result<&Snapshot> {
        self.snapshots
            .iter()
            .find(|s| s.t == t)
            .ok_or(Error::MissingSnapshot(t))
    }

    /// `S^{(c)}` at the grid time `t`.
    pub fn sum(&self, c: i64, t: f64) -> Result<i64> {
        Ok(self.snapshot(t)?.sums[(c + self.k as i64) as usize])
    }
}

/// `S̄^{(k)}_n(t) = (S(⌊nt⌋) - μ(k)⌊nt⌋) + (nt - ⌊nt⌋)(η_{k,⌊nt⌋+1} - μ(k))` for each `k`.
pub fn interpolate_centered(traj: &Trajectory, t: f64) -> Result<Vec<f64>> {
    let snap = traj.snapshot(t)?;
    let frac = t * traj.n as f64 - snap.m as f64;
    let k = traj.k as i64;
    Ok((-k..=k)
        .zip(snap.sums.iter().zip(&snap.next))
        .map(|(c, (&s, &eta))| {
            let mu = mu(c, traj.p);
            (s as f64 - mu * snap.m as f64) + frac * (eta.as_f64() - mu)
        })
        .collect())
}

/// `U_n(t) = S̄_n(t) / √n`.
pub fn rescale_u(traj: &Trajectory, t: f64) -> Result<Vec<f64>> {
    let scale = (traj.n as f64).sqrt();
    Ok(interpolate_centered(traj, t)?
        .into_iter()
        .map(|v| v / scale)
        .collect())
}

/// The downward block `Ǔ_n(t)`: components `0..=K` of `U_n(t)`.
pub fn project_u_check(traj: &Trajectory, t: f64) -> Result<Vec<f64>> {
    let mut u = rescale_u(traj, t)?;
    Ok(u.split_off(traj.k))
}

/// Sample moments of `U_n(1)` with jackknife errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCov {
    pub k: usize,
    pub trials: usize,
    pub mean: Vec<f64>,
    pub mean_stderr: Vec<f64>,
    /// Unbiased sample covariance.
    pub cov: Vec<Vec<f64>>,
    /// Jackknife standard errors of `cov`; infinite for fewer than three trials.
    pub stderr: Vec<Vec<f64>>,
}

impl EmpiricalCov {
    /// Entrywise `(cov - Σ) / stderr`.
    pub fn z_scores(&self, sigma: &CovMatrix) -> Vec<Vec<f64>> {
        self.cov
            .iter()
            .zip(&self.stderr)
            .zip(sigma.rows())
            .map(|((row, se), srow)| {
                row.iter()
                    .zip(se)
                    .zip(srow)
                    .map(|((c, e), s)| (c - s) / e)
                    .collect()
            })
            .collect()
    }

    /// `mean / mean_stderr` per component.
    pub fn mean_z_scores(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.mean_stderr)
            .map(|(m, e)| m / e)
            .collect()
    }
}

/// Moments of a sample of equal-length vectors, one per trial.
pub fn covariance_of(k: usize, samples: &[Vec<f64>]) -> Result<EmpiricalCov> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::TooFewTrials { needed: 2, got: m });
    }
    let dim = 2 * k + 1;
    if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let mf = m as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / mf)
        .collect();
    let centered: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(x, mu)| x - mu).collect())
        .collect();

    let mut cov = vec![vec![0.0; dim]; dim];
    let mut stderr = vec![vec![f64::INFINITY; dim]; dim];
    for i in 0..dim {
        for j in i..dim {
            let sxy: f64 = centered.iter().map(|x| x[i] * x[j]).sum();
            let c = sxy / (mf - 1.0);
            cov[i][j] = c;
            cov[j][i] = c;
            if m >= 3 {
                // Leave-one-out covariances, from centered data in closed form.
                let loo = |x: &Vec<f64>| (sxy - x[i] * x[j] * mf / (mf - 1.0)) / (mf - 2.0);
                let loo_mean = centered.iter().map(loo).sum::<f64>() / mf;
                let spread: f64 = centered.iter().map(|x| (loo(x) - loo_mean).powi(2)).sum();
                let se = ((mf - 1.0) / mf * spread).sqrt();
                stderr[i][j] = se;
                stderr[j][i] = se;
            }
        }
    }
    let mean_stderr = (0..dim).map(|i| (cov[i][i] / mf).sqrt()).collect();
    Ok(EmpiricalCov {
        k,
        trials: m,
        mean,
        mean_stderr,
        cov,
        stderr,
    })
}

/// Empirical moments of `U_n(1)` over the configured trials.
pub fn empirical_covariance(config: &PathConfig) -> Result<EmpiricalCov> {
    if config.trials < 2 {
        return Err(Error::TooFewTrials {
            needed: 2,
            got: config.trials,
        });
    }
    let samples = (0..config.trials as u64)
        .into_par_iter()
        .map(|trial| rescale_u(&simulate_s(&config.gen, &[1.0], trial)?, 1.0))
        .collect::<Result<Vec<_>>>()?;
    covariance_of(config.gen.k, &samples)
}

/// The μ/Σ document extended with the empirical estimate.
#[derive(Debug, Clone, Serialize)]
pub struct CovarianceDoc {
    #[serde(flatten)]
    pub theory: SigmaDoc,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub empirical: Vec<Vec<F17>>,
    pub stderr: Vec<Vec<F17>>,
    pub mean: Vec<F17>,
    pub mean_stderr: Vec<F17>,
}

impl CovarianceDoc {
    pub fn new(
        emp: &EmpiricalCov,
        sigma: &CovMatrix,
        gen: &GenConfig,
        policy: &TruncationPolicy,
    ) -> Self {
        CovarianceDoc {
            theory: SigmaDoc::new(sigma, gen.p, policy),
            n: gen.n,
            trials: emp.trials,
            seed: gen.seed,
            empirical: f17_matrix(&emp.cov),
            stderr: f17_matrix(&emp.stderr),
            mean: f17_vec(&emp.mean),
            mean_stderr: f17_vec(&emp.mean_stderr),
        }
    }
}

/// CSV rows `trial,k,t,S,Sbar,U` after a comment header.
pub fn trajectories_csv(trajs: &[Trajectory]) -> Result<String> {
    let mut out = String::new();
    if let Some(first) = trajs.first() {
        let _ = writeln!(
            out,
            "# schema=1 K={} n={} p={} trials={}",
            first.k,
            first.n,
            fmt17(first.p.p()),
            trajs.len()
        );
    }
    out.push_str("trial,k,t,S,Sbar,U\n");
    for traj in trajs {
        let k = traj.k as i64;
        for snap in &traj.snapshots {
            let sbar = interpolate_centered(traj, snap.t)?;
            let u = rescale_u(traj, snap.t)?;
            for (i, c) in (-k..=k).enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    traj.trial,
                    c,
                    fmt17(snap.t),
                    snap.sums[i],
                    fmt17(sbar[i]),
                    fmt17(u[i])
                );
            }
        }
    }
    Ok(out)
}

/// Origin visits of the walk `(S^{(c)})_{c ∈ D}` for one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecurrenceStats {
    pub components: Vec<i64>,
    pub n: u64,
    /// Visit times, strictly increasing.
    pub visits: Vec<u64>,
    /// Visits at times `m ≤ discard` are not recorded.
    pub discard: u64,
}

impl RecurrenceStats {
    pub fn count(&self) -> usize {
        self.visits.len()
    }

    pub fn last_visit(&self) -> Option<u64> {
        self.visits.last().copied()
    }

    /// Visits at times `≤ m`.
    pub fn count_up_to(&self, m: u64) -> usize {
        self.visits.partition_point(|&v| v <= m)
    }

    pub fn last_visit_up_to(&self, m: u64) -> Option<u64> {
        let c = self.count_up_to(m);
        (c > 0).then(|| self.visits[c - 1])
    }
}

fn validate_components(k: usize, components: &[i64]) -> Result<()> {
    if components.is_empty() {
        return Err(Error::EmptyComponents);
    }
    if let Some(&c) = components.iter().find(|c| c.unsigned_abs() as usize > k) {
        return Err(Error::RowOutOfRange { k: c, kmax: k });
    }
    Ok(())
}

/// Streams one trial of `n` chain steps from the all-ones state and records
/// origin visits for every component set. Sets that include an upward
/// component skip times `m ≤ K + 1`.
pub fn recurrence_trial(
    sets: &[Vec<i64>],
    gen: &GenConfig,
    trial: u64,
) -> Result<Vec<RecurrenceStats>> {
    for set in sets {
        validate_components(gen.k, set)?;
    }
    let k = gen.k as i64;
    let space = ChainSpace::full(gen.k)?;
    let mut state = ChainState::ones(gen.k)?.code();
    let mut src = SpinSource::new(gen.seed, trial, gen.p);
    let mut sums = vec![0i64; 2 * gen.k + 1];
    let mut stats: Vec<RecurrenceStats> = sets
        .iter()
        .map(|set| RecurrenceStats {
            components: set.clone(),
            n: gen.n as u64,
            visits: Vec::new(),
            discard: if set.iter().any(|&c| c <= 0) {
                gen.k as u64 + 1
            } else {
                0
            },
        })
        .collect();
    let bit_sets: Vec<Vec<usize>> = sets
        .iter()
        .map(|set| set.iter().map(|&c| (c + k) as usize).collect())
        .collect();
    for m in 1..=gen.n as u64 {
        state = space.forward_code(state, src.next_spin());
        for (i, s) in sums.iter_mut().enumerate() {
            *s += 1 - 2 * ((state >> i) & 1) as i64;
        }
        for (st, bits) in stats.iter_mut().zip(&bit_sets) {
            if m > st.discard && bits.iter().all(|&b| sums[b] == 0) {
                st.visits.push(m);
            }
        }
    }
    Ok(stats)
}

/// Single-set form of [`recurrence_trial`].
pub fn recurrence_stats(
    components: &[i64],
    gen: &GenConfig,
    trial: u64,
) -> Result<RecurrenceStats> {
    Ok(recurrence_trial(&[components.to_vec()], gen, trial)?.remove(0))
}

/// Visit totals over a batch of trials at one checkpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitCount {
    pub components: Vec<i64>,
    pub n: u64,
    /// Total visits at times `≤ n`, summed over trials.
    pub visits: u64,
    /// Largest visit time `≤ n` over all trials.
    pub last_visit: Option<u64>,
}

/// Runs `trials` independent trials of length `gen.n` and reads the visit
/// totals at each checkpoint (all `≤ gen.n`), per component set.
pub fn recurrence_batch(
    sets: &[Vec<i64>],
    gen: &GenConfig,
    trials: usize,
    checkpoints: &[u64],
) -> Result<Vec<Vec<VisitCount>>> {
    if trials == 0 {
        return Err(Error::TooFewTrials { needed: 1, got: 0 });
    }
    if let Some(&c) = checkpoints.iter().find(|&&c| c == 0 || c > gen.n as u64) {
        return Err(Error::ColumnOutOfRange {
            col: c as usize,
            len: gen.n,
        });
    }
    let per_trial = (0..trials as u64)
        .into_par_iter()
        .map(|trial| recurrence_trial(sets, gen, trial))
        .collect::<Result<Vec<_>>>()?;
    Ok(sets
        .iter()
        .enumerate()
        .map(|(s, set)| {
            checkpoints
                .iter()
                .map(|&n| VisitCount {
                    components: set.clone(),
                    n,
                    visits: per_trial.iter().map(|t| t[s].count_up_to(n) as u64).sum(),
                    last_visit: per_trial
                        .iter()
                        .filter_map(|t| t[s].last_visit_up_to(n))
                        .max(),
                })
                .collect()
        })
        .collect())
}

/// CSV rows `component_set,n,visits,last_visit` after a comment header;
/// sets are written `1;2;3` and a missing last visit as an empty field.
pub fn visits_csv(rows: &[Vec<VisitCount>], gen: &GenConfig, trials: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# schema=1 K={} p={} seed={} trials={}",
        gen.k,
        fmt17(gen.p.p()),
        gen.seed,
        trials
    );
    out.push_str("component_set,n,visits,last_visit\n");
    for row in rows.iter().flatten() {
        let set: Vec<String> = row.components.iter().map(i64::to_string).collect();
        let last = row.last_visit.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", set.join(";"), row.n, row.visits, last);
    }
    out
}
