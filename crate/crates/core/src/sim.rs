//! Seeded Monte Carlo sampling of walk paths and ensemble statistics.
//!
//! Every path draws from its own generator, keyed by `(seed, path_index)`,
//! and per-path results are reduced in path-index order. Output is therefore
//! independent of how many threads rayon uses.
//!
//! Standard errors come from sub-ensembles: path `i` belongs to sub-ensemble
//! `i mod K` with `K = 100` (or 10 below 200 paths). Each statistic is computed
//! per sub-ensemble; the reported value is their mean and the error is their
//! standard deviation over `sqrt(K)`.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{subensemble_count, Estimate};
use crate::urn::ProcessParams;

type Params = ProcessParams<f64>;

const UNIT: f64 = 1.0 / (1u64 << 53) as f64;

/// Generator for path `index` of the run keyed by `seed`.
pub fn path_rng(seed: u64, index: u64) -> Xoshiro256PlusPlus {
    let mut mixer = SplitMix64::seed_from_u64(seed);
    let key = mixer.next_u64() ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut sm = SplitMix64::seed_from_u64(key);
    Xoshiro256PlusPlus::from_rng(&mut sm)
}

/// Derived seed for a sub-run (e.g. one row of a sweep).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut sm = SplitMix64::seed_from_u64(seed ^ salt.rotate_left(32));
    sm.next_u64()
}

#[inline]
fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * UNIT
}

/// Runs one path of `n_total` steps, calling `visit(step, displacement, position)`
/// after every step (`step` is 1-based).
#[inline]
fn walk(params: &Params, rng: &mut impl RngCore, mut visit: impl FnMut(usize, i64, i64)) {
    let eps = params.epsilon();
    let mut x: i64 = 0;
    for m in 1..=params.n_total() {
        let d = if uniform(rng) < 0.5 + x as f64 * eps { 1 } else { -1 };
        x += d;
        visit(m, d, x);
    }
}

/// One realisation: displacements `δx_1..δx_N` and positions `x_1..x_N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathSample {
    pub displacements: Vec<i8>,
    pub positions: Vec<i64>,
}

pub fn sample_path(params: &Params, seed: u64) -> PathSample {
    sample_path_indexed(params, seed, 0)
}

/// Path `index` of the run keyed by `seed`, as used inside ensembles.
pub fn sample_path_indexed(params: &Params, seed: u64, index: u64) -> PathSample {
    let n = params.n_total();
    let mut displacements = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let mut rng = path_rng(seed, index);
    walk(params, &mut rng, |_, d, x| {
        displacements.push(d as i8);
        positions.push(x);
    });
    PathSample {
        displacements,
        positions,
    }
}

/// Base step `n` and maximal lag for auto-correlation estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AcfSpec {
    pub n: usize,
    pub max_lag: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub n_total: usize,
    pub kappa: f64,
    pub n_paths: usize,
    pub n_subensembles: usize,
    /// `<x²_N>`.
    pub variance: Estimate,
    pub fourth_moment: Estimate,
    /// Per-sub-ensemble `<x⁴>/<x²>²`, averaged.
    pub kurtosis: Estimate,
    pub acf_base: Option<usize>,
    /// `<δx_n δx_{n+l}>` keyed by lag.
    pub displacement_acf: BTreeMap<usize, Estimate>,
    /// `<x_n x_{n+l}> / sqrt(<x²_n><x²_{n+l}>)` keyed by lag.
    pub position_acf: BTreeMap<usize, Estimate>,
}

impl EnsembleStats {
    /// `<x²_N> / N`, the squared diffusion speed estimate.
    pub fn variance_per_step(&self) -> Estimate {
        let n = self.n_total as f64;
        Estimate::new(self.variance.value / n, self.variance.stderr / n)
    }
}

#[derive(Debug, Clone)]
struct PathRecord {
    final_pos: i64,
    /// positions x_{n-1}, x_n, ..., x_{n+L}
    window: Vec<i64>,
}

#[derive(Debug, Clone, Default)]
struct SubTotals {
    count: u64,
    sum_x2: i128,
    sum_x4: i128,
    base_sq: i128,
    lag_sq: Vec<i128>,
    cross: Vec<i128>,
    disp: Vec<i128>,
}

/// Moments of `x_N` and optional auto-correlations over `n_paths` paths.
pub fn run_ensemble(
    params: &Params,
    n_paths: usize,
    seed: u64,
    acf: Option<AcfSpec>,
) -> Result<EnsembleStats> {
    if n_paths < 2 {
        return Err(Error::InvalidParam(
            "at least two paths are needed to estimate uncertainties".into(),
        ));
    }
    if let Some(spec) = acf {
        if spec.n == 0 || spec.max_lag == 0 || spec.n + spec.max_lag > params.n_total() {
            return Err(Error::InvalidParam(format!(
                "acf window n = {}, max_lag = {} must satisfy n, max_lag >= 1 and n + max_lag <= N = {}",
                spec.n,
                spec.max_lag,
                params.n_total()
            )));
        }
    }

    let records: Vec<PathRecord> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let mut final_pos = 0;
            let mut window = Vec::new();
            let (lo, hi) = match acf {
                Some(s) => (s.n - 1, s.n + s.max_lag),
                None => (1, 0),
            };
            if lo == 0 && hi >= lo {
                window.push(0);
            }
            walk(params, &mut rng, |m, _, x| {
                if m >= lo && m <= hi {
                    window.push(x);
                }
                final_pos = x;
            });
            PathRecord { final_pos, window }
        })
        .collect();

    let k = subensemble_count(n_paths);
    let lags = acf.map_or(0, |s| s.max_lag);
    let mut subs = vec![
        SubTotals {
            lag_sq: vec![0; lags],
            cross: vec![0; lags],
            disp: vec![0; lags],
            ..Default::default()
        };
        k
    ];
    for (i, rec) in records.iter().enumerate() {
        let s = &mut subs[i % k];
        let x = rec.final_pos as i128;
        s.count += 1;
        s.sum_x2 += x * x;
        s.sum_x4 += x * x * x * x;
        if lags > 0 {
            let w = &rec.window;
            let xn = w[1] as i128;
            let dn = (w[1] - w[0]) as i128;
            s.base_sq += xn * xn;
            for l in 1..=lags {
                let xl = w[1 + l] as i128;
                let dl = (w[1 + l] - w[l]) as i128;
                s.lag_sq[l - 1] += xl * xl;
                s.cross[l - 1] += xn * xl;
                s.disp[l - 1] += dn * dl;
            }
        }
    }

    let per_sub = |f: &dyn Fn(&SubTotals) -> f64| -> Result<Estimate> {
        let vals: Vec<f64> = subs.iter().map(f).filter(|v| v.is_finite()).collect();
        if vals.is_empty() {
            return Err(Error::Numerical(
                "statistic undefined in every sub-ensemble".into(),
            ));
        }
        Ok(Estimate::from_subensembles(&vals))
    };

    let variance = per_sub(&|s| s.sum_x2 as f64 / s.count as f64)?;
    let fourth_moment = per_sub(&|s| s.sum_x4 as f64 / s.count as f64)?;
    let kurtosis = per_sub(&|s| {
        let c = s.count as f64;
        let v = s.sum_x2 as f64 / c;
        (s.sum_x4 as f64 / c) / (v * v)
    })?;

    let mut displacement_acf = BTreeMap::new();
    let mut position_acf = BTreeMap::new();
    for l in 1..=lags {
        displacement_acf.insert(l, per_sub(&|s| s.disp[l - 1] as f64 / s.count as f64)?);
        position_acf.insert(
            l,
            per_sub(&|s| {
                s.cross[l - 1] as f64 / ((s.base_sq as f64) * (s.lag_sq[l - 1] as f64)).sqrt()
            })?,
        );
    }

    Ok(EnsembleStats {
        n_total: params.n_total(),
        kappa: params.kappa(),
        n_paths,
        n_subensembles: k,
        variance,
        fourth_moment,
        kurtosis,
        acf_base: acf.map(|s| s.n),
        displacement_acf,
        position_acf,
    })
}

/// One ensemble per horizon `N` at fixed `κ`; row seeds are derived from
/// `seed` and `N`.
pub fn sweep_moments(
    kappa: f64,
    n_values: &[usize],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<EnsembleStats>> {
    n_values
        .iter()
        .map(|&n| {
            let params = Params::new(n, kappa)?;
            run_ensemble(&params, n_paths, derive_seed(seed, n as u64), None)
        })
        .collect()
}

/// `<δx_n δx_{n+lag}>` at several base steps `n`, measured on one ensemble.
pub fn displacement_acf_profile(
    params: &Params,
    bases: &[usize],
    lag: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<(usize, Estimate)>> {
    if n_paths < 2 {
        return Err(Error::InvalidParam(
            "at least two paths are needed to estimate uncertainties".into(),
        ));
    }
    if lag == 0 || bases.iter().any(|&n| n == 0 || n + lag > params.n_total()) {
        return Err(Error::InvalidParam(format!(
            "every base n needs 1 <= n and n + {lag} <= {}",
            params.n_total()
        )));
    }
    let products: Vec<Vec<i8>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let mut disp = vec![0i8; params.n_total() + 1];
            walk(params, &mut rng, |m, d, _| disp[m] = d as i8);
            bases.iter().map(|&n| disp[n] * disp[n + lag]).collect()
        })
        .collect();

    let k = subensemble_count(n_paths);
    let mut sums = vec![vec![0i64; bases.len()]; k];
    let mut counts = vec![0u64; k];
    for (i, p) in products.iter().enumerate() {
        counts[i % k] += 1;
        for (b, &v) in p.iter().enumerate() {
            sums[i % k][b] += v as i64;
        }
    }
    Ok(bases
        .iter()
        .enumerate()
        .map(|(b, &n)| {
            let vals: Vec<f64> = (0..k)
                .map(|s| sums[s][b] as f64 / counts[s] as f64)
                .collect();
            (n, Estimate::from_subensembles(&vals))
        })
        .collect())
}

/// Concatenated displacements of `n_blocks` independent paths, each of
/// length `N` and restarted at the origin. Synthetic stand-in for tick data.
pub fn synthetic_ticks(params: &Params, n_blocks: usize, seed: u64) -> Vec<i8> {
    let blocks: Vec<Vec<i8>> = (0..n_blocks as u64)
        .into_par_iter()
        .map(|i| sample_path_indexed(params, seed, i).displacements)
        .collect();
    blocks.concat()
}
