//! Fitting `ε` to empirical statistics and comparing against the Bernoulli walk.
//!
//! Data enter through a discrepancy `E(ε)`, a half chi-square between the
//! empirical statistic and the model prediction. The likelihood is taken as
//! `exp[-E(ε)]` and the prior is uniform on `ε ∈ [-1/(2N), 1/(2N)]`.
//!
//! The posterior is sampled with random-walk Metropolis (reflecting walls at
//! the prior bounds). Because `ε` is one-dimensional, the evidence is computed
//! by trapezoidal quadrature on a fixed 2001-point grid instead of from the
//! chain.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::mean_sd;
use crate::ingest::{EmpiricalAcf, EmpiricalHist};
use crate::urn::{evolve_pmf, position_acf_model, ProcessParams};

type Params = ProcessParams<f64>;

/// Points of the evidence grid, endpoints included.
pub const GRID_POINTS: usize = 2001;

/// Resolution of the likelihood memo: the prior interval is split into this
/// many cells and `E` is evaluated at the nearest cell boundary.
const MEMO_CELLS: i64 = 1_000_000;

/// Anything that scores model parameters against data.
pub trait Discrepancy: Sync {
    /// Horizon `N` the data were built for.
    fn n_total(&self) -> usize;

    /// `E(ε) >= 0`; the likelihood is `exp[-E]`.
    fn energy(&self, params: &Params) -> Result<f64>;
}

/// Histogram likelihood. Bins with zero uncertainty are left out.
#[derive(Debug, Clone)]
pub struct HistFit {
    hist: EmpiricalHist,
    included: Vec<usize>,
}

impl HistFit {
    pub fn new(hist: EmpiricalHist) -> Result<Self> {
        let mut included = Vec::new();
        for i in 0..hist.support.len() {
            if hist.p_err[i] > 0.0 {
                included.push(i);
            } else if hist.p_mean[i] > 0.0 {
                log::warn!(
                    "excluding bin x = {} (frequency {} with zero uncertainty)",
                    hist.support[i],
                    hist.p_mean[i]
                );
            }
        }
        if included.is_empty() {
            return Err(Error::Data(
                "every histogram bin has zero uncertainty".into(),
            ));
        }
        Ok(Self { hist, included })
    }

    pub fn hist(&self) -> &EmpiricalHist {
        &self.hist
    }

    pub fn included_bins(&self) -> usize {
        self.included.len()
    }
}

impl Discrepancy for HistFit {
    fn n_total(&self) -> usize {
        self.hist.n_block
    }

    fn energy(&self, params: &Params) -> Result<f64> {
        if params.n_total() != self.hist.n_block {
            return Err(Error::InvalidParam(format!(
                "histogram block length {} differs from N = {}",
                self.hist.n_block,
                params.n_total()
            )));
        }
        let pmf = evolve_pmf(params, params.n_total())?;
        Ok(self
            .included
            .iter()
            .map(|&i| {
                let d = self.hist.p_mean[i] - pmf.prob_at(self.hist.support[i]);
                let s = self.hist.p_err[i];
                d * d / (2.0 * s * s)
            })
            .sum())
    }
}

/// `E(ε) = Σ_x [P(x) - P(x|ε)]² / (2 δP(x)²)` over bins with `δP > 0`.
pub fn discrepancy_hist(hist: &EmpiricalHist, params: &Params) -> Result<f64> {
    HistFit::new(hist.clone())?.energy(params)
}

/// Auto-correlation likelihood over lags `1..=L` at base `n`, with `N = n + L`.
#[derive(Debug, Clone)]
pub struct AcfFit {
    acf: EmpiricalAcf,
    n_base: usize,
    max_lag: usize,
    /// row of lag l is rows[l - 1]
    rows: Vec<usize>,
}

impl AcfFit {
    pub fn new(acf: EmpiricalAcf, n_base: usize, max_lag: usize) -> Result<Self> {
        if acf.n_base != n_base {
            return Err(Error::InvalidParam(format!(
                "auto-correlation was measured at n = {}, not {n_base}",
                acf.n_base
            )));
        }
        if n_base == 0 || max_lag == 0 {
            return Err(Error::InvalidParam("n and L must be positive".into()));
        }
        let mut rows = Vec::with_capacity(max_lag);
        for lag in 1..=max_lag {
            let row = acf.lags.iter().position(|&l| l == lag).ok_or_else(|| {
                Error::Data(format!("auto-correlation has no value at lag {lag}"))
            })?;
            if !(acf.errors[row] > 0.0) {
                return Err(Error::Data(format!(
                    "auto-correlation at lag {lag} has zero uncertainty"
                )));
            }
            rows.push(row);
        }
        Ok(Self {
            acf,
            n_base,
            max_lag,
            rows,
        })
    }

    pub fn acf(&self) -> &EmpiricalAcf {
        &self.acf
    }
}

impl Discrepancy for AcfFit {
    fn n_total(&self) -> usize {
        self.n_base + self.max_lag
    }

    fn energy(&self, params: &Params) -> Result<f64> {
        if self.n_base + self.max_lag != params.n_total() {
            return Err(Error::InvalidParam(format!(
                "n + L = {} + {} must equal N = {}",
                self.n_base,
                self.max_lag,
                params.n_total()
            )));
        }
        let mut e = 0.0;
        for (l, &row) in self.rows.iter().enumerate() {
            let model = position_acf_model(params, self.n_base, l + 1)?;
            let d = self.acf.values[row] - model;
            let s = self.acf.errors[row];
            e += d * d / (2.0 * s * s);
        }
        Ok(e)
    }
}

/// `E'(ε, n) = Σ_{l=1}^{L} [C(n,l) - C(n,l|ε)]² / (2 δC(n,l)²)`, requiring `n + L = N`.
pub fn discrepancy_acf(acf: &EmpiricalAcf, params: &Params, n: usize, max_lag: usize) -> Result<f64> {
    AcfFit::new(acf.clone(), n, max_lag)?.energy(params)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McmcConfig {
    /// Retained steps after burn-in.
    pub n_steps: usize,
    pub n_burnin: usize,
    /// Initial proposal width in `ε`; defaults to a twentieth of the prior width.
    pub proposal_std: Option<f64>,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_steps: 100_000,
            n_burnin: 10_000,
            proposal_std: None,
            seed: 0,
        }
    }
}

impl McmcConfig {
    fn validate(&self) -> Result<()> {
        if self.n_steps < 100 {
            return Err(Error::InvalidParam("n_steps must be at least 100".into()));
        }
        if let Some(s) = self.proposal_std {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParam(format!(
                    "proposal_std must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSummary {
    pub n_total: usize,
    pub eps_mean: f64,
    pub eps_std: f64,
    /// Batch-means standard error of `eps_mean`.
    pub eps_mcse: f64,
    pub kappa_mean: f64,
    pub kappa_std: f64,
    #[serde(skip)]
    pub samples: Vec<f64>,
    pub acceptance_rate: f64,
    /// Acceptance outside [0.05, 0.95] after adaptation.
    pub acceptance_warning: bool,
    /// Proposal width after burn-in adaptation.
    pub proposal_std: f64,
    /// `ln ∫ dε prior(ε) exp[-E(ε)]`.
    pub log_evidence: f64,
}

/// Posterior on the evidence grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPosterior {
    pub eps: Vec<f64>,
    /// `-E(ε)` at each grid point.
    pub log_likelihood: Vec<f64>,
    pub log_evidence: f64,
    pub eps_mean: f64,
    pub eps_std: f64,
}

impl GridPosterior {
    pub fn map_eps(&self) -> f64 {
        let i = self
            .log_likelihood
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.eps[i]
    }
}

fn prior_bound(n_total: usize) -> f64 {
    0.5 / n_total as f64
}

/// Trapezoidal quadrature of the posterior on `GRID_POINTS` uniform points.
pub fn grid_posterior<D: Discrepancy + ?Sized>(data: &D) -> Result<GridPosterior> {
    let n = data.n_total();
    let b = prior_bound(n);
    let h = 2.0 * b / (GRID_POINTS - 1) as f64;
    let eps: Vec<f64> = (0..GRID_POINTS).map(|i| -b + i as f64 * h).collect();
    let log_likelihood = eps
        .iter()
        .map(|&e| Ok(-data.energy(&Params::from_epsilon(n, e.clamp(-b, b))?)?))
        .collect::<Result<Vec<f64>>>()?;

    let peak = log_likelihood
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::Numerical(
            "likelihood vanishes everywhere on the prior".into(),
        ));
    }
    let weights: Vec<f64> = log_likelihood
        .iter()
        .enumerate()
        .map(|(i, &ll)| {
            let w = if i == 0 || i == GRID_POINTS - 1 { 0.5 } else { 1.0 };
            if ll.is_finite() {
                w * (ll - peak).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    // prior density 1/(2b) times trapezoid spacing h
    let log_evidence = peak + (total * h / (2.0 * b)).ln();
    let eps_mean = weights.iter().zip(&eps).map(|(w, e)| w * e).sum::<f64>() / total;
    let second = weights.iter().zip(&eps).map(|(w, e)| w * e * e).sum::<f64>() / total;
    let eps_std = (second - eps_mean * eps_mean).max(0.0).sqrt();
    Ok(GridPosterior {
        eps,
        log_likelihood,
        log_evidence,
        eps_mean,
        eps_std,
    })
}

/// `E(ε)` evaluated on a fixed lattice of the prior interval, memoised.
struct MemoEnergy<'a, D: ?Sized> {
    data: &'a D,
    n_total: usize,
    bound: f64,
    cache: RefCell<HashMap<i64, f64>>,
}

impl<'a, D: Discrepancy + ?Sized> MemoEnergy<'a, D> {
    fn new(data: &'a D) -> Self {
        let n_total = data.n_total();
        Self {
            data,
            n_total,
            bound: prior_bound(n_total),
            cache: RefCell::new(HashMap::new()),
        }
    }

    fn eval(&self, eps: f64) -> Result<f64> {
        let cell_width = 2.0 * self.bound / MEMO_CELLS as f64;
        let cell = ((eps + self.bound) / cell_width).round() as i64;
        if let Some(&e) = self.cache.borrow().get(&cell) {
            return Ok(e);
        }
        let at = (-self.bound + cell as f64 * cell_width).clamp(-self.bound, self.bound);
        let e = self
            .data
            .energy(&Params::from_epsilon(self.n_total, at)?)?;
        self.cache.borrow_mut().insert(cell, e);
        Ok(e)
    }
}

/// Folds a proposal back into `(-b, b)`; `None` if it lands on a wall.
fn reflect(mut eps: f64, b: f64) -> Option<f64> {
    loop {
        if eps > b {
            eps = 2.0 * b - eps;
        } else if eps < -b {
            eps = -2.0 * b - eps;
        } else if eps == b || eps == -b {
            return None;
        } else {
            return Some(eps);
        }
    }
}

/// Random-walk Metropolis over `ε` with likelihood `exp[-E(ε)]`.
///
/// The chain starts at the grid maximum. During burn-in the proposal width is
/// rescaled every 100 steps to keep acceptance within 20-50%, then frozen.
pub fn posterior_mcmc<D: Discrepancy + ?Sized>(data: &D, cfg: &McmcConfig) -> Result<PosteriorSummary> {
    cfg.validate()?;
    let n = data.n_total();
    let b = prior_bound(n);
    let grid = grid_posterior(data)?;
    let energy = MemoEnergy::new(data);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);

    let inner = b * (1.0 - 2.0 / (GRID_POINTS - 1) as f64);
    let mut eps = grid.map_eps().clamp(-inner, inner);
    let mut e_cur = energy.eval(eps)?;
    let mut sigma = cfg.proposal_std.unwrap_or(2.0 * b / 20.0);
    let (sigma_min, sigma_max) = (b * 1e-9, 2.0 * b);

    let step = |eps: &mut f64, e_cur: &mut f64, sigma: f64, rng: &mut Xoshiro256PlusPlus| -> Result<bool> {
        let z: f64 = rng.sample(StandardNormal);
        let Some(prop) = reflect(*eps + sigma * z, b) else {
            return Ok(false);
        };
        let e_prop = energy.eval(prop)?;
        let log_ratio = *e_cur - e_prop;
        let u: f64 = rng.random();
        if log_ratio >= 0.0 || u.ln() < log_ratio {
            *eps = prop;
            *e_cur = e_prop;
            Ok(true)
        } else {
            Ok(false)
        }
    };

    const WINDOW: usize = 100;
    let mut window_accepts = 0;
    for i in 0..cfg.n_burnin {
        window_accepts += step(&mut eps, &mut e_cur, sigma, &mut rng)? as usize;
        if (i + 1) % WINDOW == 0 {
            let rate = window_accepts as f64 / WINDOW as f64;
            if rate < 0.2 {
                sigma *= 0.6;
            } else if rate > 0.5 {
                sigma *= 1.6;
            }
            sigma = sigma.clamp(sigma_min, sigma_max);
            window_accepts = 0;
        }
    }

    let mut samples = Vec::with_capacity(cfg.n_steps);
    let mut accepted = 0usize;
    for _ in 0..cfg.n_steps {
        accepted += step(&mut eps, &mut e_cur, sigma, &mut rng)? as usize;
        samples.push(eps);
    }

    let acceptance_rate = accepted as f64 / cfg.n_steps as f64;
    let acceptance_warning = !(0.05..=0.95).contains(&acceptance_rate);
    if acceptance_warning {
        log::warn!("MCMC acceptance rate {acceptance_rate:.3} outside [0.05, 0.95]");
    }
    let (eps_mean, eps_std) = mean_sd(&samples);
    let eps_mcse = batch_means_stderr(&samples, 50);
    let nf = n as f64;
    Ok(PosteriorSummary {
        n_total: n,
        eps_mean,
        eps_std,
        eps_mcse,
        kappa_mean: eps_mean * nf,
        kappa_std: eps_std * nf,
        samples,
        acceptance_rate,
        acceptance_warning,
        proposal_std: sigma,
        log_evidence: grid.log_evidence,
    })
}

/// Standard error of the chain mean from `batches` contiguous batch means.
pub fn batch_means_stderr(samples: &[f64], batches: usize) -> f64 {
    let size = samples.len() / batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = samples
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    mean_sd(&means).1 / (means.len() as f64).sqrt()
}

/// `ln[P(D|M) / P(D|B)] = ln ∫ dε prior(ε) exp[-E(ε)] + E(0)`.
pub fn bayes_factor<D: Discrepancy + ?Sized>(data: &D) -> Result<f64> {
    let grid = grid_posterior(data)?;
    let e0 = data.energy(&Params::new(data.n_total(), 0.0)?)?;
    Ok(grid.log_evidence + e0)
}
