//! Bit-packed spin rows and the cellular-automaton array.
//!
//! Bit 1 encodes spin −1, so a product of spins is an XOR of bits. The
//! downward rule (row k+1 holds the prefix products of row k) becomes a
//! prefix-XOR scan, and the upward rule (row −k holds adjacent products of
//! row −k+1) becomes `x ^ (x << 1)`. Both run a 64-bit word at a time.
//!
//! Columns are numbered from 1 in [`SpinArray`]; [`SpinRow`] indexes from 0.

use std::fmt::Write as _;

use crate::bincomb::{beta, nu};
use crate::rng::SpinSource;
use crate::{BernoulliParam, Error, Result, Spin};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinRow {
    len: usize,
    words: Vec<u64>,
}

impl SpinRow {
    /// A row of `len` spins, all `+1`.
    pub fn plus(len: usize) -> Self {
        SpinRow {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_spins(spins: &[Spin]) -> Self {
        let mut row = SpinRow::plus(spins.len());
        for (i, s) in spins.iter().enumerate() {
            row.set(i, *s);
        }
        row
    }

    /// Wraps packed words; bits past `len` are cleared.
    pub fn from_words(len: usize, mut words: Vec<u64>) -> Result<Self> {
        let need = len.div_ceil(64);
        if words.len() != need {
            return Err(Error::LengthMismatch {
                expected: need,
                got: words.len(),
            });
        }
        mask_tail(&mut words, len);
        Ok(SpinRow { len, words })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn bit(&self, i: usize) -> u64 {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1
    }

    #[inline]
    pub fn spin(&self, i: usize) -> Spin {
        Spin::from_bit(self.bit(i))
    }

    pub fn set(&mut self, i: usize, s: Spin) {
        assert!(
            i < self.len,
            "index {i} out of range for row of length {}",
            self.len
        );
        let mask = 1u64 << (i % 64);
        if s == Spin::Minus {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn spins(&self) -> impl Iterator<Item = Spin> + '_ {
        (0..self.len).map(move |i| self.spin(i))
    }

    /// Number of −1 spins among the first `m` positions.
    pub fn minus_count(&self, m: usize) -> u64 {
        assert!(m <= self.len);
        let full = m / 64;
        let mut count: u64 = self.words[..full]
            .iter()
            .map(|w| u64::from(w.count_ones()))
            .sum();
        let rem = m % 64;
        if rem > 0 {
            count += u64::from((self.words[full] & ((1u64 << rem) - 1)).count_ones());
        }
        count
    }

    /// Sum of the first `m` spins.
    pub fn partial_sum(&self, m: usize) -> i64 {
        m as i64 - 2 * self.minus_count(m) as i64
    }
}

fn mask_tail(words: &mut [u64], len: usize) {
    let rem = len % 64;
    if rem != 0 {
        if let Some(last) = words.last_mut() {
            *last &= (1u64 << rem) - 1;
        }
    }
}

/// Cumulative XOR within one word: bit i of the result is the parity of bits 0..=i.
#[inline]
pub fn prefix_xor_word(mut x: u64) -> u64 {
    x ^= x << 1;
    x ^= x << 2;
    x ^= x << 4;
    x ^= x << 8;
    x ^= x << 16;
    x ^= x << 32;
    x
}

/// One downward step: position `n` of the output is the product of input positions `1..=n`.
pub fn downward(row: &SpinRow) -> Result<SpinRow> {
    if row.is_empty() {
        return Err(Error::EmptyRow);
    }
    let mut carry = 0u64;
    let mut words = Vec::with_capacity(row.words.len());
    for &w in &row.words {
        let x = prefix_xor_word(w) ^ carry.wrapping_neg();
        carry = x >> 63;
        words.push(x);
    }
    mask_tail(&mut words, row.len);
    Ok(SpinRow {
        len: row.len,
        words,
    })
}

/// One upward step: position 1 is copied, position `n ≥ 2` is the product of input positions `n-1` and `n`.
pub fn upward(row: &SpinRow) -> Result<SpinRow> {
    if row.is_empty() {
        return Err(Error::EmptyRow);
    }
    let mut carry = 0u64;
    let mut words = Vec::with_capacity(row.words.len());
    for &w in &row.words {
        words.push(w ^ (w << 1) ^ carry);
        carry = w >> 63;
    }
    mask_tail(&mut words, row.len);
    Ok(SpinRow {
        len: row.len,
        words,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub p: BernoulliParam,
    pub k: usize,
    pub n: usize,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(p: f64, k: usize, n: usize, seed: u64) -> Result<Self> {
        let p = BernoulliParam::new(p)?;
        if n == 0 {
            return Err(Error::EmptyRow);
        }
        Ok(GenConfig { p, k, n, seed })
    }
}

/// `len` i.i.d. spins from stream `stream` of the configured seed.
pub fn sample_spins(config: &GenConfig, stream: u64, len: usize) -> SpinRow {
    let mut src = SpinSource::new(config.seed, stream, config.p);
    let mut words = vec![0; len.div_ceil(64)];
    src.fill_bits(&mut words, len);
    SpinRow { len, words }
}

/// Row 0: `n` i.i.d. spins with `P(+1) = p`.
pub fn sample_row0(config: &GenConfig, stream: u64) -> SpinRow {
    sample_spins(config, stream, config.n)
}

/// Rows `k ∈ [-K, K]` over columns `1..=n`, plus one spare column `n+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinArray {
    k: usize,
    n: usize,
    rows: Vec<SpinRow>,
}

impl SpinArray {
    /// Assembles an array from rows listed top (`-K`) to bottom (`K`).
    /// Every row must hold at least `n` spins and all rows the same number.
    pub fn from_rows(k: usize, n: usize, rows: Vec<SpinRow>) -> Result<Self> {
        if rows.len() != 2 * k + 1 {
            return Err(Error::LengthMismatch {
                expected: 2 * k + 1,
                got: rows.len(),
            });
        }
        if n == 0 {
            return Err(Error::EmptyRow);
        }
        let stored = rows[0].len();
        for r in &rows {
            if r.len() != stored || r.len() < n {
                return Err(Error::LengthMismatch {
                    expected: stored.max(n),
                    got: r.len(),
                });
            }
        }
        Ok(SpinArray { k, n, rows })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Declared number of columns (excluding any spare column).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of materialized columns.
    pub fn stored_columns(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, k: i64) -> Result<&SpinRow> {
        let idx = self.row_index(k)?;
        Ok(&self.rows[idx])
    }

    pub(crate) fn row_mut(&mut self, k: i64) -> Result<&mut SpinRow> {
        let idx = self.row_index(k)?;
        Ok(&mut self.rows[idx])
    }

    fn row_index(&self, k: i64) -> Result<usize> {
        if k.unsigned_abs() as usize > self.k {
            return Err(Error::RowOutOfRange { k, kmax: self.k });
        }
        Ok((k + self.k as i64) as usize)
    }

    /// η_{k,col} with `col` counted from 1.
    pub fn cell(&self, k: i64, col: usize) -> Result<Spin> {
        let row = self.row(k)?;
        if col == 0 || col > row.len() {
            return Err(Error::ColumnOutOfRange {
                col,
                len: row.len(),
            });
        }
        Ok(row.spin(col - 1))
    }

    /// Flips one cell; used to build counterexamples.
    pub fn flip(&mut self, k: i64, col: usize) -> Result<()> {
        let row = self.row_mut(k)?;
        if col == 0 || col > row.len() {
            return Err(Error::ColumnOutOfRange {
                col,
                len: row.len(),
            });
        }
        row.flip(col - 1);
        Ok(())
    }

    pub fn rows(&self) -> impl Iterator<Item = (i64, &SpinRow)> {
        let k = self.k as i64;
        self.rows
            .iter()
            .enumerate()
            .map(move |(i, r)| (i as i64 - k, r))
    }
}

/// Builds the array from stream 0 of the configured seed.
pub fn build_array(config: &GenConfig) -> Result<SpinArray> {
    build_array_stream(config, 0)
}

/// Builds the array whose row 0 is drawn from the given stream (one stream per trial).
pub fn build_array_stream(config: &GenConfig, stream: u64) -> Result<SpinArray> {
    let row0 = sample_spins(config, stream, config.n + 1);
    array_from_row0(config.k, config.n, row0)
}

/// Grows rows `1..=K` by [`downward`] and rows `-1..=-K` by [`upward`].
pub fn array_from_row0(k: usize, n: usize, row0: SpinRow) -> Result<SpinArray> {
    let mut up = Vec::with_capacity(k);
    let mut down = Vec::with_capacity(k);
    let mut cur = row0.clone();
    for _ in 0..k {
        cur = upward(&cur)?;
        up.push(cur.clone());
    }
    cur = row0.clone();
    for _ in 0..k {
        cur = downward(&cur)?;
        down.push(cur.clone());
    }
    let mut rows = Vec::with_capacity(2 * k + 1);
    rows.extend(up.into_iter().rev());
    rows.push(row0);
    rows.extend(down);
    SpinArray::from_rows(k, n, rows)
}

/// η_{k,n} expressed directly through row 0 (`row0[0]` is ξ_1).
///
/// For `k ≥ 0` this is `∏_{m=1}^{n} ξ_{n-m+1}^{ν(k,m)}`; for `k < 0` it is
/// `∏_{j=0}^{|k| ∧ (n-1)} ξ_{n-j}^{β(|k|,j)}`, where the cut at `n-1` encodes
/// the constant first column.
pub fn eta_direct(k: i64, n: usize, row0: &SpinRow) -> Result<Spin> {
    if n == 0 || n > row0.len() {
        return Err(Error::ColumnOutOfRange {
            col: n,
            len: row0.len(),
        });
    }
    let xi = |i: usize| row0.spin(i - 1);
    let mut acc = Spin::Plus;
    if k >= 0 {
        for m in 1..=n {
            acc = acc * xi(n - m + 1).pow(nu(k as u64, m as u64)?);
        }
    } else {
        let a = k.unsigned_abs();
        let top = a.min(n as u64 - 1);
        for j in 0..=top {
            acc = acc * xi(n - j as usize).pow(beta(a, j));
        }
    }
    Ok(acc)
}

/// True iff `η_{k,n} η_{k,n-1} η_{k-1,n} = 1` at every cell with `k ∈ [-K+1, K]`,
/// `n ≥ 2`, and the first column is constant.
pub fn check_three_dot(array: &SpinArray) -> bool {
    let first = array.rows[array.k].bit(0);
    if array.rows.iter().any(|r| r.bit(0) != first) {
        return false;
    }
    for pair in array.rows.windows(2) {
        let (above, row) = (&pair[0], &pair[1]);
        let mut carry = 0u64;
        for (w, (&x, &y)) in row.words.iter().zip(&above.words).enumerate() {
            let shifted = (x << 1) | carry;
            carry = x >> 63;
            let mut bad = x ^ y ^ shifted;
            if w == 0 {
                bad &= !1;
            }
            let tail = row.len - 64 * w;
            if tail < 64 {
                bad &= (1u64 << tail) - 1;
            }
            if bad != 0 {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    /// `+` / `-` characters.
    Signs,
    /// `0` / `1` with `1 ≡ -1`.
    Bits,
    /// `k,n,spin` records.
    Csv,
}

/// Renders columns `1..=n`, rows from `k = -K` down to `k = K`.
pub fn render(array: &SpinArray, format: RenderFormat) -> String {
    let n = array.n;
    let mut out = String::new();
    match format {
        RenderFormat::Signs | RenderFormat::Bits => {
            for (_, row) in array.rows() {
                for i in 0..n {
                    let c = match (format, row.spin(i)) {
                        (RenderFormat::Signs, Spin::Plus) => '+',
                        (RenderFormat::Signs, Spin::Minus) => '-',
                        (_, s) => char::from(b'0' + s.bit() as u8),
                    };
                    out.push(c);
                }
                out.push('\n');
            }
        }
        RenderFormat::Csv => {
            out.push_str("k,n,spin\n");
            for (k, row) in array.rows() {
                for i in 0..n {
                    let _ = writeln!(out, "{},{},{}", k, i + 1, row.spin(i).value());
                }
            }
        }
    }
    out
}

/// Parses the `k,n,spin` CSV produced by [`render`]. Lines starting with `#` are skipped.
pub fn parse_csv(text: &str) -> Result<SpinArray> {
    let mut cells: Vec<(i64, usize, Spin)> = Vec::new();
    let mut seen_header = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            if line != "k,n,spin" {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected header `k,n,spin`, found `{line}`"),
                });
            }
            seen_header = true;
            continue;
        }
        let err = |msg: &str| Error::Parse {
            line: lineno + 1,
            msg: msg.to_string(),
        };
        let mut fields = line.split(',');
        let k: i64 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| err("bad k"))?;
        let n: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| err("bad n"))?;
        let s = fields
            .next()
            .and_then(|f| f.parse().ok())
            .and_then(Spin::from_value)
            .ok_or_else(|| err("spin must be -1 or 1"))?;
        if fields.next().is_some() || n == 0 {
            return Err(err("malformed record"));
        }
        cells.push((k, n, s));
    }
    let kmax = cells
        .iter()
        .map(|c| c.0.unsigned_abs() as usize)
        .max()
        .unwrap_or(0);
    let n = cells.iter().map(|c| c.1).max().ok_or(Error::EmptyRow)?;
    let rows_count = 2 * kmax + 1;
    if cells.len() != rows_count * n {
        return Err(Error::LengthMismatch {
            expected: rows_count * n,
            got: cells.len(),
        });
    }
    let mut rows = vec![SpinRow::plus(n); rows_count];
    for (k, col, s) in cells {
        rows[(k + kmax as i64) as usize].set(col - 1, s);
    }
    SpinArray::from_rows(kmax, n, rows)
}
