use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rust_decimal::Decimal;
use serde::Serialize;
use serde_json::{json, Value};

use urnwalk::inference::{bayes_factor, posterior_mcmc, AcfFit, Discrepancy, HistFit, McmcConfig};
use urnwalk::ingest::{build_acf, build_histogram, decompose, EmpiricalAcf, EmpiricalHist, PriceSeries, TickSeries};
use urnwalk::sim::{derive_seed, run_ensemble, synthetic_ticks, AcfSpec};
use urnwalk::urn::{evolve_pmf, moments_exact};
use urnwalk::ProcessParams64;

use crate::output::{digest, read_input, sibling, write_atomic, InputFile, RunManifest, TOOL_NAME, TOOL_VERSION};
use crate::{CliError, EvolveArgs, FitArgs, IngestArgs, Mode, SimulateArgs, StatsArgs, SynthArgs};

/// Collects what a command read and wrote, then writes its manifest.
struct Run {
    command: &'static str,
    args: Vec<String>,
    seeds: Vec<u64>,
    inputs: Vec<InputFile>,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn new(command: &'static str, args: Vec<String>) -> Self {
        Self {
            command,
            args,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = read_input(path, &mut self.inputs)?;
        String::from_utf8(bytes)
            .map_err(|_| CliError::Data(format!("{} is not UTF-8 text", path.display())))
    }

    fn write(&mut self, path: &Path, text: &str) -> Result<(), CliError> {
        write_atomic(path, text.as_bytes())?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn finish<P: Serialize>(self, params: &P, primary: &Path) -> Result<(), CliError> {
        let manifest = RunManifest {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            command: self.command.to_string(),
            args: self.args,
            params: serde_json::to_value(params)
                .map_err(|e| CliError::Io(format!("serializing parameters: {e}")))?,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        manifest.write(primary)?;
        Ok(())
    }
}

fn print_json(v: &impl Serialize) -> Result<String, CliError> {
    let mut text =
        serde_json::to_string_pretty(v).map_err(|e| CliError::Io(format!("serializing: {e}")))?;
    text.push('\n');
    print!("{text}");
    Ok(text)
}

/// Every recorded input must still hash to its recorded digest.
pub fn check_replay(manifest: &RunManifest) -> Result<(), CliError> {
    for input in &manifest.inputs {
        let bytes = std::fs::read(&input.path)
            .map_err(|e| CliError::Data(format!("reading {}: {e}", input.path.display())))?;
        let now = digest(&bytes);
        if now != input.fnv64 {
            return Err(CliError::Data(format!(
                "{} changed since the run (digest {now}, recorded {})",
                input.path.display(),
                input.fnv64
            )));
        }
    }
    Ok(())
}

pub fn evolve(a: &EvolveArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("evolve", args);
    let params = ProcessParams64::new(a.n, a.kappa)?;
    let pmf = evolve_pmf(&params, a.n)?;
    let mut csv = String::from("x,p\n");
    for (x, p) in pmf.iter() {
        writeln!(csv, "{x},{p}").unwrap();
    }
    run.write(&a.out, &csv)?;
    let m = moments_exact(&params, a.n)?;
    print_json(&json!({
        "n": a.n,
        "kappa": a.kappa,
        "mean": m.mean,
        "variance": m.variance,
        "fourth_moment": m.fourth_moment,
        "kurtosis": m.kurtosis,
    }))?;
    run.finish(a, &a.out)
}

pub fn simulate(a: &SimulateArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("simulate", args);
    run.seeds.push(a.seed);
    let acf = a.acf.map(|(n, max_lag)| AcfSpec { n, max_lag });
    let mut rows = Vec::with_capacity(a.n.len());
    for &n in &a.n {
        let params = ProcessParams64::new(n, a.kappa)?;
        let seed = derive_seed(a.seed, n as u64);
        run.seeds.push(seed);
        rows.push(run_ensemble(&params, a.paths, seed, acf)?);
    }

    let mut csv = String::from(
        "n,kappa,paths,subensembles,variance,variance_err,variance_per_step,variance_per_step_err,\
         fourth_moment,fourth_moment_err,kurtosis,kurtosis_err\n",
    );
    for r in &rows {
        let v = r.variance_per_step();
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.n_total,
            r.kappa,
            r.n_paths,
            r.n_subensembles,
            r.variance.value,
            r.variance.stderr,
            v.value,
            v.stderr,
            r.fourth_moment.value,
            r.fourth_moment.stderr,
            r.kurtosis.value,
            r.kurtosis.stderr
        )
        .unwrap();
    }
    run.write(&a.out, &csv)?;

    if let Some(spec) = acf {
        let mut acf_csv = String::from("n_total,n,lag,displacement,displacement_err,position,position_err\n");
        for r in &rows {
            for (lag, d) in &r.displacement_acf {
                let p = &r.position_acf[lag];
                writeln!(
                    acf_csv,
                    "{},{},{lag},{},{},{},{}",
                    r.n_total, spec.n, d.value, d.stderr, p.value, p.stderr
                )
                .unwrap();
            }
        }
        run.write(&sibling(&a.out, "acf.csv"), &acf_csv)?;
    }
    print_json(&rows)?;
    run.finish(a, &a.out)
}

fn parse_tick(s: &str) -> Result<Decimal, CliError> {
    let d: Decimal = s
        .trim()
        .parse()
        .map_err(|e| CliError::Usage(format!("bad tick size `{s}`: {e}")))?;
    if d <= Decimal::ZERO {
        return Err(CliError::Usage(format!("tick size must be positive, got {s}")));
    }
    Ok(d)
}

pub fn ingest(a: &IngestArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("ingest", args);
    let tick = parse_tick(&a.tick)?;
    let text = run.read(&a.prices)?;
    let series = PriceSeries::read_csv(text.as_bytes(), tick)?;
    let ticks = decompose(&series)?;
    if ticks.is_empty() {
        log::warn!("{} produced no tick movements", a.prices.display());
    }
    run.write(&a.out, &ticks.to_csv())?;
    run.finish(a, &a.out)
}

fn required(v: Option<usize>, flag: &str) -> Result<usize, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("{flag} is required in this mode")))
}

pub fn stats(a: &StatsArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("stats", args);
    let ticks = TickSeries::from_csv(&run.read(&a.ticks)?)?;
    let csv = match a.mode {
        Mode::Hist => build_histogram(&ticks, required(a.n, "--n")?, a.subensembles)?.to_csv(),
        Mode::Acf => build_acf(
            &ticks,
            required(a.acf_n, "--acf-n")?,
            required(a.acf_lags, "--acf-lags")?,
            a.subensembles,
        )?
        .to_csv(),
    };
    run.write(&a.out, &csv)?;
    run.finish(a, &a.out)
}

pub fn synth(a: &SynthArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("synth", args);
    run.seeds.push(a.seed);
    let params = ProcessParams64::new(a.n, a.kappa)?;
    let ticks = TickSeries::new(synthetic_ticks(&params, a.blocks, a.seed))?;
    run.write(&a.out, &ticks.to_csv())?;
    run.finish(a, &a.out)
}

fn build_fit(a: &FitArgs, run: &mut Run) -> Result<Box<dyn Discrepancy>, CliError> {
    match a.mode {
        Mode::Hist => {
            let hist = if let Some(p) = &a.ticks {
                build_histogram(&TickSeries::from_csv(&run.read(p)?)?, a.n, a.subensembles)?
            } else if let Some(p) = &a.hist {
                EmpiricalHist::from_csv(&run.read(p)?)?
            } else {
                return Err(CliError::Usage("hist mode needs --ticks or --hist".into()));
            };
            if hist.n_block != a.n {
                return Err(CliError::Usage(format!(
                    "histogram has block length {}, but --n is {}",
                    hist.n_block, a.n
                )));
            }
            Ok(Box::new(HistFit::new(hist)?))
        }
        Mode::Acf => {
            let n_base = required(a.acf_n, "--acf-n")?;
            if n_base >= a.n {
                return Err(CliError::Usage(format!("--acf-n must be below --n = {}", a.n)));
            }
            let lags = a.acf_lags.unwrap_or(a.n - n_base);
            if n_base + lags != a.n {
                return Err(CliError::Usage(format!(
                    "--acf-n + --acf-lags = {n_base} + {lags} must equal --n = {}",
                    a.n
                )));
            }
            let acf = if let Some(p) = &a.ticks {
                build_acf(&TickSeries::from_csv(&run.read(p)?)?, n_base, lags, a.subensembles)?
            } else if let Some(p) = &a.acf_data {
                EmpiricalAcf::from_csv(&run.read(p)?, n_base)?
            } else {
                return Err(CliError::Usage("acf mode needs --ticks or --acf-data".into()));
            };
            Ok(Box::new(AcfFit::new(acf, n_base, lags)?))
        }
    }
}

pub fn fit(a: &FitArgs, args: Vec<String>) -> Result<(), CliError> {
    let mut run = Run::new("fit", args);
    run.seeds.push(a.seed);
    let data = build_fit(a, &mut run)?;
    let cfg = McmcConfig {
        n_steps: a.mcmc_steps,
        n_burnin: a.burnin,
        proposal_std: None,
        seed: a.seed,
    };
    let summary = posterior_mcmc(data.as_ref(), &cfg)?;
    let ln_bf = bayes_factor(data.as_ref())?;

    let samples_path = sibling(&a.out, "samples.csv");
    let mut samples = String::from("eps,kappa\n");
    for &e in &summary.samples {
        writeln!(samples, "{e},{}", e * a.n as f64).unwrap();
    }

    let mut doc = serde_json::to_value(&summary)
        .map_err(|e| CliError::Io(format!("serializing summary: {e}")))?;
    if let Value::Object(map) = &mut doc {
        map.insert("mode".into(), json!(a.mode));
        map.insert("ln_bayes_factor".into(), json!(ln_bf));
        map.insert("seed".into(), json!(a.seed));
    }
    let text = print_json(&doc)?;
    run.write(&a.out, &text)?;
    run.write(&samples_path, &samples)?;
    run.finish(a, &a.out)
}
