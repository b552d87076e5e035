//! `brw`: generation, exact analytics and Monte Carlo checks for the
//! bootstrap random walk.
//!
//! Exit status: 0 on success, 1 when a verification fails, 2 on a usage or
//! configuration error.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use brw_core::array::{build_array, render, GenConfig, RenderFormat};
use brw_core::chain::{
    build_matrix, mixing_check, stationary, ChainSpace, Projection, DEFAULT_STATE_CAP, EXACT_TOL,
};
use brw_core::export::{f17_matrix, fmt17, F17, SCHEMA_VERSION};
use brw_core::limits::{cov_lag, sigma_matrix, SigmaDoc, TruncationPolicy};
use brw_core::montecarlo::{
    empirical_covariance, recurrence_batch, visits_csv, CovarianceDoc, PathConfig,
};
use brw_core::oracle::ExactChain;
use brw_core::{BernoulliParam, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Largest |z| accepted by `clt`.
const Z_LIMIT: f64 = 4.0;

/// Agreement required between closed-form Σ and the lag-series oracle.
const SIGMA_TOL: f64 = 1e-8;

#[derive(Parser, Debug)]
#[command(name = "brw", version, about = "Bootstrap random walk toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate and render the spin array.
    Array(Common),
    /// Emit the drift vector and the limiting covariance matrix.
    Sigma(Common),
    /// Cross-check closed forms against exact enumeration.
    Verify(Common),
    /// Compare the empirical covariance of U_n(1) with Σ.
    Clt(Common),
    /// Count origin visits of projections of the walk.
    Recurrence(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Probability of a +1 input spin, in (0, 1).
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    p: f64,
    /// Half-width K: rows -K..=K.
    #[arg(long = "K", default_value_t = 2)]
    k: usize,
    /// Number of columns (walk length).
    #[arg(long, default_value_t = 4096)]
    n: usize,
    /// Number of independent trials.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Truncation tolerance for infinite series.
    #[arg(long, default_value_t = 1e-12, allow_hyphen_values = true)]
    tol: f64,
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write output to this file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Component set such as `1,2,3`; repeat for several sets.
    #[arg(long, allow_hyphen_values = true)]
    components: Vec<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
    Signs,
    Bits,
}

/// A failure with its exit status.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<String, (Failure, Option<String>)>;

impl Common {
    fn validate(&self) -> Result<BernoulliParam, Failure> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Failure::Usage(format!(
                "--p must lie in the open interval (0, 1), got {}",
                self.p
            )));
        }
        if self.n == 0 {
            return Err(Failure::Usage("--n must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Failure::Usage("--trials must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Failure::Usage(format!(
                "--tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(BernoulliParam::new(self.p)?)
    }

    fn format_or(&self, default: Format, allowed: &[Format]) -> Result<Format, Failure> {
        let f = self.format.unwrap_or(default);
        if !allowed.contains(&f) {
            let names: Vec<String> = allowed
                .iter()
                .map(|a| format!("{a:?}").to_lowercase())
                .collect();
            return Err(Failure::Usage(format!(
                "--format {} is not supported here; use one of: {}",
                format!("{f:?}").to_lowercase(),
                names.join(", ")
            )));
        }
        Ok(f)
    }

    fn gen(&self) -> Result<GenConfig, Failure> {
        Ok(GenConfig::new(self.p, self.k, self.n, self.seed)?)
    }

    fn policy(&self) -> Result<TruncationPolicy, Failure> {
        Ok(TruncationPolicy::with_tol(self.tol)?)
    }

    fn check_chain_cap(&self) -> Result<(), Failure> {
        let states = 1u128 << (2 * self.k + 1).min(127);
        if states > DEFAULT_STATE_CAP as u128 {
            return Err(Failure::Usage(format!(
                "--K {} needs {} chain states, above the exact-analysis cap of {}",
                self.k, states, DEFAULT_STATE_CAP
            )));
        }
        Ok(())
    }
}

fn json_text(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("document serializes");
    s.push('\n');
    s
}

fn cmd_array(c: &Common) -> Result<String, Failure> {
    c.validate()?;
    let format = c.format_or(Format::Signs, &[Format::Signs, Format::Bits, Format::Csv])?;
    let array = build_array(&c.gen()?)?;
    Ok(match format {
        Format::Signs => render(&array, RenderFormat::Signs),
        Format::Bits => render(&array, RenderFormat::Bits),
        _ => format!(
            "# schema={SCHEMA_VERSION} K={} n={} p={} seed={}\n{}",
            c.k,
            c.n,
            fmt17(c.p),
            c.seed,
            render(&array, RenderFormat::Csv)
        ),
    })
}

fn cmd_sigma(c: &Common) -> Result<String, Failure> {
    let p = c.validate()?;
    let format = c.format_or(Format::Json, &[Format::Json, Format::Csv])?;
    let policy = c.policy()?;
    let sigma = sigma_matrix(c.k, p, &policy)?;
    Ok(match format {
        Format::Json => json_text(&SigmaDoc::new(&sigma, p, &policy)),
        _ => {
            let mut out = format!(
                "# schema={SCHEMA_VERSION} K={} p={} tol={}\nk,l,sigma\n",
                c.k,
                fmt17(c.p),
                fmt17(c.tol)
            );
            let k = c.k as i64;
            for a in -k..=k {
                for b in -k..=k {
                    let _ = writeln!(out, "{a},{b},{}", fmt17(sigma.get(a, b)));
                }
            }
            out
        }
    })
}

#[derive(Serialize)]
struct CheckDoc {
    name: &'static str,
    passed: bool,
    max_error: F17,
    tol: F17,
}

#[derive(Serialize)]
struct VerifyDoc {
    schema: u32,
    #[serde(rename = "K")]
    k: usize,
    p: F17,
    perfect_mixing: bool,
    perfect_mixing_steps: usize,
    checks: Vec<CheckDoc>,
    passed: bool,
}

#[derive(Serialize)]
struct CltDoc {
    #[serde(flatten)]
    covariance: CovarianceDoc,
    z: Vec<Vec<F17>>,
    max_abs_z: F17,
    z_limit: F17,
    passed: bool,
}

struct Check {
    name: &'static str,
    max_error: f64,
    tol: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.max_error <= self.tol
    }
}

fn cmd_verify(c: &Common) -> Outcome {
    let run = || -> Result<(VerifyDoc, Vec<String>), Failure> {
        let p = c.validate()?;
        c.format_or(Format::Json, &[Format::Json])?;
        c.check_chain_cap()?;
        let policy = c.policy()?;
        let k = c.k;
        let ki = k as i64;
        let mut checks = Vec::new();

        let mut residual: f64 = 0.0;
        for proj in [Projection::Full, Projection::Up, Projection::Down] {
            let space = ChainSpace::new(k, proj)?;
            let m = build_matrix(space, p, DEFAULT_STATE_CAP)?;
            let d = stationary(space, p, DEFAULT_STATE_CAP)?;
            residual = residual
                .max(d.fixed_point_residual(&m))
                .max((d.total() - 1.0).abs());
        }
        checks.push(Check {
            name: "stationarity",
            max_error: residual,
            tol: EXACT_TOL,
        });

        let mixing = mixing_check(k, p, DEFAULT_STATE_CAP)?;
        checks.push(Check {
            name: "upward_mixing",
            max_error: mixing.upward_deviation,
            tol: EXACT_TOL,
        });
        if p.is_symmetric() {
            checks.push(Check {
                name: "perfect_mixing",
                max_error: mixing.full_row_spread,
                tol: EXACT_TOL,
            });
        }

        let exact = ExactChain::new(k, p)?;
        let closed = brw_core::chain::stationary_moments(k, p);
        let mut moment_err: f64 = 0.0;
        for a in -ki..=ki {
            moment_err = moment_err.max((closed.mean(a)? - exact.mean(a)?).abs());
            for b in -ki..=ki {
                let pair = exact.lag_cov(a, b, 0)? + exact.mean(a)? * exact.mean(b)?;
                moment_err = moment_err.max((closed.pair(a, b)? - pair).abs());
            }
        }
        checks.push(Check {
            name: "moments",
            max_error: moment_err,
            tol: EXACT_TOL,
        });

        let max_lag = 2 * k as u64 + 2;
        let table = exact.lag_cov_table(max_lag);
        let mut lag_err: f64 = 0.0;
        for (n, block) in table.iter().enumerate().skip(1) {
            for (i, a) in (-ki..=ki).enumerate() {
                for (j, b) in (-ki..=ki).enumerate() {
                    lag_err = lag_err.max((cov_lag(a, b, n as u64, p)? - block[i][j]).abs());
                }
            }
        }
        checks.push(Check {
            name: "lag_covariance",
            max_error: lag_err,
            tol: EXACT_TOL,
        });

        let sigma = sigma_matrix(k, p, &policy)?;
        let oracle = exact.sigma_matrix(c.tol)?;
        let sigma_err = sigma
            .rows()
            .iter()
            .flatten()
            .zip(oracle.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        checks.push(Check {
            name: "sigma",
            max_error: sigma_err,
            tol: SIGMA_TOL.max(c.tol),
        });

        let failed: Vec<String> = checks
            .iter()
            .filter(|c| !c.passed())
            .map(|c| c.name.to_string())
            .collect();
        let doc = VerifyDoc {
            schema: SCHEMA_VERSION,
            k,
            p: F17(c.p),
            perfect_mixing: mixing.full_mixed(),
            perfect_mixing_steps: 2 * k + 1,
            checks: checks
                .iter()
                .map(|ch| CheckDoc {
                    name: ch.name,
                    passed: ch.passed(),
                    max_error: F17(ch.max_error),
                    tol: F17(ch.tol),
                })
                .collect(),
            passed: failed.is_empty(),
        };
        Ok((doc, failed))
    };
    match run() {
        Err(f) => Err((f, None)),
        Ok((doc, failed)) if failed.is_empty() => Ok(json_text(&doc)),
        Ok((doc, failed)) => Err((
            Failure::Verification(format!("failed checks: {}", failed.join(", "))),
            Some(json_text(&doc)),
        )),
    }
}

fn cmd_clt(c: &Common) -> Outcome {
    let run = || -> Result<(String, f64), Failure> {
        let p = c.validate()?;
        let format = c.format_or(Format::Json, &[Format::Json, Format::Csv])?;
        if c.trials < 2 {
            return Err(Failure::Usage(
                "--trials must be at least 2 for a covariance estimate".into(),
            ));
        }
        let gen = c.gen()?;
        let policy = c.policy()?;
        let emp = empirical_covariance(&PathConfig::at_one(gen, c.trials)?)?;
        let sigma = sigma_matrix(c.k, p, &policy)?;
        let z = emp.z_scores(&sigma);
        // With fewer than three trials the errors are infinite and every z is zero.
        let max_z = z
            .iter()
            .flatten()
            .map(|v| if v.is_nan() { 0.0 } else { v.abs() })
            .fold(0.0, f64::max);
        let text = match format {
            Format::Json => json_text(&CltDoc {
                covariance: CovarianceDoc::new(&emp, &sigma, &gen, &policy),
                z: f17_matrix(&z),
                max_abs_z: F17(max_z),
                z_limit: F17(Z_LIMIT),
                passed: max_z <= Z_LIMIT,
            }),
            _ => {
                let mut out = format!(
                    "# schema={SCHEMA_VERSION} K={} p={} n={} trials={} seed={}\nk,l,sigma,empirical,stderr,z\n",
                    c.k,
                    fmt17(c.p),
                    c.n,
                    c.trials,
                    c.seed
                );
                let k = c.k as i64;
                for (i, a) in (-k..=k).enumerate() {
                    for (j, b) in (-k..=k).enumerate() {
                        let _ = writeln!(
                            out,
                            "{a},{b},{},{},{},{}",
                            fmt17(sigma.get(a, b)),
                            fmt17(emp.cov[i][j]),
                            fmt17(emp.stderr[i][j]),
                            fmt17(z[i][j])
                        );
                    }
                }
                out
            }
        };
        Ok((text, max_z))
    };
    match run() {
        Err(f) => Err((f, None)),
        Ok((text, max_z)) if max_z <= Z_LIMIT => Ok(text),
        Ok((text, max_z)) => Err((
            Failure::Verification(format!("max |z| = {max_z:.3} exceeds {Z_LIMIT}")),
            Some(text),
        )),
    }
}

fn parse_components(text: &str, k: usize) -> Result<Vec<i64>, Failure> {
    let bad = || {
        Failure::Usage(format!(
            "--components {text:?}: expected comma-separated integers in [-{k}, {k}]"
        ))
    };
    let set: Vec<i64> = text
        .split(',')
        .map(|t| t.trim().parse::<i64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    if set.is_empty() || set.iter().any(|c| c.unsigned_abs() as usize > k) {
        return Err(bad());
    }
    let mut sorted = set.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != set.len() {
        return Err(bad());
    }
    Ok(set)
}

/// Powers of ten below `n`, then `n`.
fn checkpoints(n: u64) -> Vec<u64> {
    let mut out: Vec<u64> = std::iter::successors(Some(10u64), |&c| c.checked_mul(10))
        .take_while(|&c| c < n)
        .collect();
    out.push(n);
    out
}

fn cmd_recurrence(c: &Common) -> Result<String, Failure> {
    c.validate()?;
    c.format_or(Format::Csv, &[Format::Csv])?;
    if c.components.is_empty() {
        return Err(Failure::Usage(
            "--components is required, e.g. --components 1,2".into(),
        ));
    }
    let sets = c
        .components
        .iter()
        .map(|s| parse_components(s, c.k))
        .collect::<Result<Vec<_>, _>>()?;
    let gen = c.gen()?;
    let rows = recurrence_batch(&sets, &gen, c.trials, &checkpoints(c.n as u64))?;
    Ok(visits_csv(&rows, &gen, c.trials))
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Usage(format!("--out {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, outcome): (&Common, Outcome) = match &cli.command {
        Command::Array(c) => (c, cmd_array(c).map_err(|f| (f, None))),
        Command::Sigma(c) => (c, cmd_sigma(c).map_err(|f| (f, None))),
        Command::Verify(c) => (c, cmd_verify(c)),
        Command::Clt(c) => (c, cmd_clt(c)),
        Command::Recurrence(c) => (c, cmd_recurrence(c).map_err(|f| (f, None))),
    };
    match outcome {
        Ok(text) => match emit(&text, &common.out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(Failure::Usage(msg) | Failure::Verification(msg)) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
        },
        Err((Failure::Usage(msg), _)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err((Failure::Verification(msg), report)) => {
            if let Some(text) = report {
                if let Err(Failure::Usage(e) | Failure::Verification(e)) = emit(&text, &common.out)
                {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
    }
}
