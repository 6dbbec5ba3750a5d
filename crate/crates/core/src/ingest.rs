//! Price series to ±1 ticks, and empirical statistics of tick data.
//!
//! Prices are parsed as decimals and mapped onto the integer tick grid before
//! differencing, so decomposition and reconstruction are exact. A move of
//! `k` ticks becomes `k` copies of `sign(move)`; flat moves emit nothing.

use std::io::Read;
use std::str::FromStr;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::mean_sd;

/// Relative tolerance for a price to count as lying on the tick grid.
pub const GRID_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    prices: Vec<Decimal>,
    tick_size: Decimal,
    /// 1-based source line of each price, for error messages.
    lines: Vec<usize>,
}

impl PriceSeries {
    pub fn new(prices: Vec<Decimal>, tick_size: Decimal) -> Result<Self> {
        let lines = (1..=prices.len()).collect();
        Self::with_lines(prices, tick_size, lines)
    }

    fn with_lines(prices: Vec<Decimal>, tick_size: Decimal, lines: Vec<usize>) -> Result<Self> {
        if tick_size <= Decimal::ZERO {
            return Err(Error::InvalidParam(format!(
                "tick size must be positive, got {tick_size}"
            )));
        }
        Ok(Self {
            prices,
            tick_size,
            lines,
        })
    }

    /// Parses decimal strings such as `"1463.7"`.
    pub fn from_strs<S: AsRef<str>>(prices: &[S], tick_size: &str) -> Result<Self> {
        let tick = parse_decimal(tick_size, 0)?;
        let prices = prices
            .iter()
            .enumerate()
            .map(|(i, s)| parse_decimal(s.as_ref(), i + 1))
            .collect::<Result<Vec<_>>>()?;
        Self::new(prices, tick)
    }

    /// Reads a CSV with the price in the first column. A header row is
    /// detected when its first field is not a number; further columns
    /// (e.g. a timestamp) are ignored.
    pub fn read_csv<R: Read>(mut reader: R, tick_size: Decimal) -> Result<Self> {
        let mut text = String::new();
        reader
            .read_to_string(&mut text)
            .map_err(|e| Error::Data(format!("cannot read price file: {e}")))?;
        let mut prices = Vec::new();
        let mut lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let field = raw.split(',').next().unwrap_or("").trim().trim_matches('"');
            if field.is_empty() {
                continue;
            }
            match Decimal::from_str(field).or_else(|_| Decimal::from_scientific(field)) {
                Ok(d) => {
                    prices.push(d);
                    lines.push(line);
                }
                Err(_) if prices.is_empty() && line == 1 => continue,
                Err(_) => {
                    return Err(Error::Data(format!(
                        "row {line}: cannot parse price {field:?}"
                    )))
                }
            }
        }
        Self::with_lines(prices, tick_size, lines)
    }

    pub fn prices(&self) -> &[Decimal] {
        &self.prices
    }

    pub fn tick_size(&self) -> Decimal {
        self.tick_size
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Price levels in whole ticks.
    fn grid_levels(&self) -> Result<Vec<i64>> {
        let tol = Decimal::from_f64_retain(GRID_TOLERANCE).unwrap();
        self.prices
            .iter()
            .enumerate()
            .map(|(i, &price)| {
                let off_grid = || Error::OffGrid {
                    row: self.lines[i],
                    price: price.to_string(),
                    tick: self.tick_size.to_string(),
                };
                let ratio = price.checked_div(self.tick_size).ok_or_else(off_grid)?;
                let level = ratio.round();
                let scale = level.abs().max(Decimal::ONE);
                if (ratio - level).abs() > tol * scale {
                    return Err(off_grid());
                }
                level.to_i64().ok_or_else(off_grid)
            })
            .collect()
    }
}

pub fn parse_decimal(s: &str, row: usize) -> Result<Decimal> {
    let s = s.trim();
    Decimal::from_str(s)
        .or_else(|_| Decimal::from_scientific(s))
        .map_err(|_| Error::Data(format!("row {row}: cannot parse decimal {s:?}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct TickSeries {
    pub ticks: Vec<i8>,
}

impl TickSeries {
    pub fn new(ticks: Vec<i8>) -> Result<Self> {
        if let Some(i) = ticks.iter().position(|&t| t != 1 && t != -1) {
            return Err(Error::Data(format!(
                "tick {i} is {}, expected +1 or -1",
                ticks[i]
            )));
        }
        Ok(Self { ticks })
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    /// Price path `first + tick_size · Σ ticks`, one entry per tick plus the
    /// starting price. Flat stretches of the original series do not appear.
    pub fn reconstruct(&self, first: Decimal, tick_size: Decimal) -> Vec<Decimal> {
        let mut out = Vec::with_capacity(self.ticks.len() + 1);
        let mut level: i64 = 0;
        out.push(first);
        for &t in &self.ticks {
            level += t as i64;
            out.push(first + tick_size * Decimal::from(level));
        }
        out
    }

    /// One tick per line under a `tick` header.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.ticks.len() * 3 + 5);
        s.push_str("tick\n");
        for &t in &self.ticks {
            s.push_str(if t > 0 { "1\n" } else { "-1\n" });
        }
        s
    }

    /// Inverse of [`TickSeries::to_csv`]; the header is optional.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut ticks = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let field = line.split(',').next().unwrap_or("").trim();
            match field {
                "" => continue,
                "1" | "+1" => ticks.push(1),
                "-1" => ticks.push(-1),
                _ if i == 0 => continue,
                other => {
                    return Err(Error::Data(format!(
                        "row {}: expected +1 or -1, got {other:?}",
                        i + 1
                    )))
                }
            }
        }
        Ok(Self { ticks })
    }
}

/// Splits every price move into unit ticks.
pub fn decompose(series: &PriceSeries) -> Result<TickSeries> {
    let levels = series.grid_levels()?;
    let mut ticks = Vec::new();
    for w in levels.windows(2) {
        let d = w[1] - w[0];
        let sign = if d > 0 { 1 } else { -1 };
        ticks.extend(std::iter::repeat_n(sign, d.unsigned_abs() as usize));
    }
    Ok(TickSeries { ticks })
}

/// Frequencies of block sums `x_N` over non-overlapping blocks of `N` ticks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalHist {
    pub n_block: usize,
    /// `-N, -N+2, ..., N`
    pub support: Vec<i64>,
    pub p_mean: Vec<f64>,
    pub p_err: Vec<f64>,
    pub n_samples: usize,
}

impl EmpiricalHist {
    pub fn p_at(&self, x: i64) -> Option<(f64, f64)> {
        let idx = self.support.iter().position(|&s| s == x)?;
        Some((self.p_mean[idx], self.p_err[idx]))
    }

    /// CSV with columns `x,mean,err,n_samples` over the full support.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,mean,err,n_samples\n");
        for i in 0..self.support.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.support[i], self.p_mean[i], self.p_err[i], self.n_samples
            ));
        }
        s
    }

    /// Reads [`EmpiricalHist::to_csv`] output. The block length is the
    /// largest `|x|`, so the full support must be present.
    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = read_stat_rows(text)?;
        let n_block = rows
            .iter()
            .map(|r| r.0.unsigned_abs() as usize)
            .max()
            .ok_or_else(|| Error::Data("empty histogram".into()))?;
        let support: Vec<i64> = (0..=n_block).map(|j| 2 * j as i64 - n_block as i64).collect();
        let mut p_mean = vec![0.0; support.len()];
        let mut p_err = vec![0.0; support.len()];
        let mut n_samples = 0;
        for (x, mean, err, n) in rows {
            if (x + n_block as i64) % 2 != 0 {
                return Err(Error::Data(format!(
                    "position {x} has the wrong parity for block length {n_block}"
                )));
            }
            let j = ((x + n_block as i64) / 2) as usize;
            p_mean[j] = mean;
            p_err[j] = err;
            n_samples = n;
        }
        Ok(Self {
            n_block,
            support,
            p_mean,
            p_err,
            n_samples,
        })
    }
}

/// Normalised position auto-correlation `C(n, l)` of tick windows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalAcf {
    pub n_base: usize,
    /// `1..=L`
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub n_samples: usize,
}

impl EmpiricalAcf {
    pub fn max_lag(&self) -> usize {
        self.lags.iter().copied().max().unwrap_or(0)
    }

    /// CSV with columns `lag,mean,err,n_samples`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lag,mean,err,n_samples\n");
        for i in 0..self.lags.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.lags[i], self.values[i], self.errors[i], self.n_samples
            ));
        }
        s
    }

    /// Reads [`EmpiricalAcf::to_csv`] output; the base step is not stored
    /// in the file and must be supplied.
    pub fn from_csv(text: &str, n_base: usize) -> Result<Self> {
        let rows = read_stat_rows(text)?;
        if rows.is_empty() {
            return Err(Error::Data("empty auto-correlation table".into()));
        }
        let mut acf = Self {
            n_base,
            lags: Vec::new(),
            values: Vec::new(),
            errors: Vec::new(),
            n_samples: 0,
        };
        for (lag, mean, err, n) in rows {
            if lag < 1 {
                return Err(Error::Data(format!("lag {lag} must be positive")));
            }
            acf.lags.push(lag as usize);
            acf.values.push(mean);
            acf.errors.push(err);
            acf.n_samples = n;
        }
        Ok(acf)
    }
}

fn read_stat_rows(text: &str) -> Result<Vec<(i64, f64, f64, usize)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with(|c: char| c.is_ascii_alphabetic())) {
            continue;
        }
        let bad = || Error::Data(format!("row {}: malformed statistics line {line:?}", i + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() < 4 {
            return Err(bad());
        }
        rows.push((
            f[0].parse().map_err(|_| bad())?,
            f[1].parse().map_err(|_| bad())?,
            f[2].parse().map_err(|_| bad())?,
            f[3].parse().map_err(|_| bad())?,
        ));
    }
    Ok(rows)
}

fn check_length(available: usize, window: usize, n_subensembles: usize) -> Result<()> {
    if window == 0 || n_subensembles == 0 {
        return Err(Error::InvalidParam(
            "window length and sub-ensemble count must be positive".into(),
        ));
    }
    let required = window * n_subensembles * 2;
    if available < required {
        return Err(Error::InsufficientData {
            required,
            available,
        });
    }
    Ok(())
}

/// Histogram of non-overlapping block sums.
///
/// Block `b` goes to sub-ensemble `b mod K`; `p_err` is the spread of the
/// per-sub-ensemble frequencies over `sqrt(K)`. Trailing ticks that do not
/// fill a block are dropped.
pub fn build_histogram(
    ticks: &TickSeries,
    n_block: usize,
    n_subensembles: usize,
) -> Result<EmpiricalHist> {
    check_length(ticks.len(), n_block, n_subensembles)?;
    let k = n_subensembles;
    let width = n_block + 1;
    let mut counts = vec![vec![0u64; width]; k];
    let mut blocks_per_sub = vec![0u64; k];
    let mut n_samples = 0;
    for (b, block) in ticks.ticks.chunks_exact(n_block).enumerate() {
        let x: i64 = block.iter().map(|&t| t as i64).sum();
        let j = ((x + n_block as i64) / 2) as usize;
        counts[b % k][j] += 1;
        blocks_per_sub[b % k] += 1;
        n_samples += 1;
    }

    let support = (0..width).map(|j| 2 * j as i64 - n_block as i64).collect();
    let mut p_mean = Vec::with_capacity(width);
    let mut p_err = Vec::with_capacity(width);
    for j in 0..width {
        let total: u64 = counts.iter().map(|c| c[j]).sum();
        p_mean.push(total as f64 / n_samples as f64);
        let freqs: Vec<f64> = (0..k)
            .map(|s| counts[s][j] as f64 / blocks_per_sub[s] as f64)
            .collect();
        let (_, sd) = mean_sd(&freqs);
        p_err.push(sd / (k as f64).sqrt());
    }
    Ok(EmpiricalHist {
        n_block,
        support,
        p_mean,
        p_err,
        n_samples,
    })
}

#[derive(Debug, Clone, Default)]
struct AcfTotals {
    base_sq: i64,
    lag_sq: Vec<i64>,
    cross: Vec<i64>,
}

impl AcfTotals {
    fn corr(&self, l: usize) -> f64 {
        self.cross[l] as f64 / ((self.base_sq as f64) * (self.lag_sq[l] as f64)).sqrt()
    }
}

/// `C(n, l) = <x_n x_{n+l}> / sqrt(<x²_n><x²_{n+l}>)` over non-overlapping
/// windows of `n + L` ticks, each window restarting its position at zero.
pub fn build_acf(
    ticks: &TickSeries,
    n_base: usize,
    max_lag: usize,
    n_subensembles: usize,
) -> Result<EmpiricalAcf> {
    if n_base == 0 || max_lag == 0 {
        return Err(Error::InvalidParam("n and max_lag must be positive".into()));
    }
    let window = n_base + max_lag;
    check_length(ticks.len(), window, n_subensembles)?;
    let k = n_subensembles;
    let empty = AcfTotals {
        lag_sq: vec![0; max_lag],
        cross: vec![0; max_lag],
        ..Default::default()
    };
    let mut subs = vec![empty.clone(); k];
    let mut all = empty;
    let mut n_samples = 0;
    for (w, chunk) in ticks.ticks.chunks_exact(window).enumerate() {
        let xn: i64 = chunk[..n_base].iter().map(|&t| t as i64).sum();
        let s = &mut subs[w % k];
        s.base_sq += xn * xn;
        all.base_sq += xn * xn;
        let mut xl = xn;
        for l in 0..max_lag {
            xl += chunk[n_base + l] as i64;
            s.lag_sq[l] += xl * xl;
            s.cross[l] += xn * xl;
            all.lag_sq[l] += xl * xl;
            all.cross[l] += xn * xl;
        }
        n_samples += 1;
    }

    let mut values = Vec::with_capacity(max_lag);
    let mut errors = Vec::with_capacity(max_lag);
    for l in 0..max_lag {
        let c = all.corr(l);
        if !c.is_finite() {
            return Err(Error::Data(format!(
                "auto-correlation at lag {} is undefined: positions have zero second moment",
                l + 1
            )));
        }
        let per_sub: Vec<f64> = subs.iter().map(|s| s.corr(l)).filter(|v| v.is_finite()).collect();
        let err = if per_sub.len() >= 2 {
            mean_sd(&per_sub).1 / (per_sub.len() as f64).sqrt()
        } else {
            0.0
        };
        values.push(c);
        errors.push(err);
    }
    Ok(EmpiricalAcf {
        n_base,
        lags: (1..=max_lag).collect(),
        values,
        errors,
        n_samples,
    })
}
