//! Experiment harness: sample-availability regimes x methods x runs, SHD
//! against the known truth, and percentile summaries.

use std::io::{BufRead, Write};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cf::{cf_learn, SparsityBudget};
use crate::error::{Error, Result};
use crate::graph::{extract_kpcg, shd, Kpcg, Normalization};
use crate::ia::{ia_learn, IAConfig, Init, StepsizeRule};
use crate::spectral::{auto_half_width, estimate_csd, naive_inverse};
use crate::synth::{derive_seed, generate, ground_truth_kpcg, BandStructure};
use crate::tensor::{num_frequencies, CsdTensor, FrequencyPartition, FrequencyTensor, InverseCsdTensor};

pub const LAMBDA_GRID: [f64; 8] = [0.001, 0.01, 0.05, 0.1, 0.3, 0.5, 0.7, 1.0];
pub const DEFAULT_REGIMES: [usize; 4] = [5, 20, 100, 1000];
pub const FULL_REGIMES: [usize; 6] = [5, 10, 20, 50, 100, 1000];
pub const DEFAULT_RUNS: usize = 10;

/// Replicates generated and smoothed together before being folded into the
/// running sum; bounds memory without making the sum order depend on threads.
const CHUNK: usize = 50;

/// Run index reserved for the data set used to pick lambda.
const TUNING_RUN: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    Naive,
    /// The same number of edges in every block.
    CfNz { s: usize },
    /// Per-block budgets equal to the true cardinalities.
    CfFk,
    /// One block over all frequencies.
    IaGs { config: IAConfig, lambdas: Vec<f64> },
    /// Learning partition given by its block starts.
    IaBs { config: IAConfig, starts: Vec<usize>, lambdas: Vec<f64> },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::CfNz { .. } => "cf-nz",
            Method::CfFk => "cf-fk",
            Method::IaGs { .. } => "ia-gs",
            Method::IaBs { .. } => "ia-bs",
        }
    }

    fn lambdas(&self) -> &[f64] {
        match self {
            Method::IaGs { lambdas, .. } | Method::IaBs { lambdas, .. } => lambdas,
            _ => &[],
        }
    }

    fn with_lambda(&self, lambda: f64) -> Method {
        match self {
            Method::IaGs { config, .. } => Method::IaGs { config: IAConfig { lambda, ..config.clone() }, lambdas: vec![] },
            Method::IaBs { config, starts, .. } => Method::IaBs {
                config: IAConfig { lambda, ..config.clone() },
                starts: starts.clone(),
                lambdas: vec![],
            },
            other => other.clone(),
        }
    }
}

/// Tuned IA settings by regime (nearest tabulated regime at or below `regime`).
///
/// | regime | ia-bs                            | ia-gs                      |
/// |--------|----------------------------------|----------------------------|
/// | 5      | 0.5, identity, (ln t, t), 0.5    | 0.7, identity, (ln t, t)   |
/// | 10     | 0.5                              | 0.5                        |
/// | 20     | 0.3                              | 0.3                        |
/// | 50     | 0.5, c1 0.99                     | 0.5, c1 0.99               |
/// | 100    | 0.3, inverse, c1 0.9             | 0.5, identity, c1 0.99     |
/// | 1000   | 0.01, inverse, (ln t, sqrt t), 0.5 | 0.05, inverse, (ln t, sqrt t) |
///
/// `c2 = 0.99` throughout.
pub fn tuned_config(bs: bool, regime: usize) -> IAConfig {
    let row = [5, 10, 20, 50, 100, 1000].iter().rposition(|&r| r <= regime).unwrap_or(0);
    let base = IAConfig::default();
    let (lambda, init, stepsize, c1) = match (bs, row) {
        (true, 0) => (0.5, Init::Identity, StepsizeRule::LogLinear, 0.5),
        (false, 0) => (0.7, Init::Identity, StepsizeRule::LogLinear, 0.5),
        (_, 1) => (0.5, Init::Identity, StepsizeRule::LogLinear, 0.5),
        (_, 2) => (0.3, Init::Identity, StepsizeRule::LogLinear, 0.5),
        (_, 3) => (0.5, Init::Identity, StepsizeRule::LogLinear, 0.99),
        (true, 4) => (0.3, Init::Inverse, StepsizeRule::LogLinear, 0.9),
        (false, 4) => (0.5, Init::Identity, StepsizeRule::LogLinear, 0.99),
        (true, _) => (0.01, Init::Inverse, StepsizeRule::LogSqrt, 0.5),
        (false, _) => (0.05, Init::Inverse, StepsizeRule::LogSqrt, 0.5),
    };
    IAConfig { lambda, init, stepsize, c1, c2: 0.99, ..base }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub structure: BandStructure,
    pub t: usize,
    /// Smoothing half-width; `floor(sqrt T)` when `None`.
    pub half_width: Option<usize>,
    /// Partition used for extraction and the truth.
    pub partition: FrequencyPartition,
    pub threshold: f64,
    pub normalization: Normalization,
    pub regimes: Vec<usize>,
    pub runs: usize,
    pub seed: u64,
    /// Methods; IA entries are resolved per regime by `methods_for`.
    pub methods: Vec<MethodSpec>,
}

/// A method as requested by the user; IA settings may follow the regime.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    Fixed(Method),
    /// IA with the tuned settings of each regime, optionally re-tuning lambda
    /// over a grid.
    IaTuned { block_sparse: bool, starts: Vec<usize>, lambdas: Vec<f64>, max_iters: Option<usize> },
}

impl MethodSpec {
    fn resolve(&self, regime: usize) -> Method {
        match self {
            MethodSpec::Fixed(m) => m.clone(),
            MethodSpec::IaTuned { block_sparse, starts, lambdas, max_iters } => {
                let mut config = tuned_config(*block_sparse, regime);
                if let Some(it) = max_iters {
                    config.max_iters = *it;
                }
                if *block_sparse {
                    Method::IaBs { config, starts: starts.clone(), lambdas: lambdas.clone() }
                } else {
                    Method::IaGs { config, lambdas: lambdas.clone() }
                }
            }
        }
    }
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        self.structure.validate()?;
        if self.partition.m() != num_frequencies(self.t) {
            return Err(Error::param("extraction partition does not match T"));
        }
        if self.regimes.is_empty() || self.regimes.contains(&0) {
            return Err(Error::param("regimes must be a nonempty list of positive replicate counts"));
        }
        if self.runs == 0 {
            return Err(Error::param("runs must be positive"));
        }
        if self.methods.is_empty() {
            return Err(Error::param("no methods requested"));
        }
        Ok(())
    }

    fn half(&self) -> usize {
        self.half_width.unwrap_or_else(|| auto_half_width(self.t))
    }

    pub fn methods_for(&self, regime: usize) -> Vec<Method> {
        self.methods.iter().map(|m| m.resolve(regime)).collect()
    }
}

/// Mean smoothed periodogram of `count` simulated replicates; replicate `r`
/// uses `derive_seed(seed, r)`.
pub fn simulate_csd(structure: &BandStructure, t: usize, seed: u64, count: usize, half: usize) -> Result<CsdTensor> {
    if count == 0 {
        return Err(Error::param("need at least one replicate"));
    }
    let mut acc: Option<Vec<crate::tensor::CMatrix>> = None;
    for start in (0..count).step_by(CHUNK) {
        let end = (start + CHUNK).min(count);
        let chunk = (start..end)
            .into_par_iter()
            .map(|r| estimate_csd(&generate(structure, t, derive_seed(seed, r as u64))?, half))
            .collect::<Result<Vec<_>>>()?;
        for est in chunk {
            match acc.as_mut() {
                None => acc = Some(est.0.into_slices()),
                Some(a) => a.iter_mut().zip(est.slices()).for_each(|(x, s)| *x += s),
            }
        }
    }
    let scale = Complex64::new(count as f64, 0.0);
    let slices = acc.expect("count > 0").into_iter().map(|s| s / scale).collect();
    Ok(CsdTensor(FrequencyTensor::new(t, slices)?))
}

/// What one method produced on one data set.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub inverse: InverseCsdTensor,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

pub fn run_method(method: &Method, csd: &CsdTensor, truth: &Kpcg, partition: &FrequencyPartition) -> Result<MethodOutcome> {
    let m = csd.m();
    let n = csd.n();
    let plain = |inverse| MethodOutcome { inverse, iterations: None, converged: None };
    match method {
        Method::Naive => naive_inverse(csd).map(plain),
        Method::CfNz { s } => {
            let budget = SparsityBudget::uniform(*s, partition.k(), n)?;
            cf_learn(&naive_inverse(csd)?, partition, &budget).map(plain)
        }
        Method::CfFk => {
            let budget = SparsityBudget::new(truth.cardinalities(), n)?;
            cf_learn(&naive_inverse(csd)?, partition, &budget).map(plain)
        }
        Method::IaGs { config, .. } | Method::IaBs { config, .. } => {
            let learn_partition = match method {
                Method::IaBs { starts, .. } => FrequencyPartition::new(starts.clone(), m)?,
                _ => FrequencyPartition::new(vec![0], m)?,
            };
            let out = ia_learn(csd, &learn_partition, config)?;
            Ok(MethodOutcome { inverse: out.inverse, iterations: Some(out.iterations), converged: Some(out.converged) })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub regime: usize,
    pub run: usize,
    pub lambda: Option<f64>,
    pub shd: Option<usize>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn method_lambda(method: &Method) -> Option<f64> {
    match method {
        Method::IaGs { config, .. } | Method::IaBs { config, .. } => Some(config.lambda),
        _ => None,
    }
}

fn score(method: &Method, csd: &CsdTensor, truth: &Kpcg, exp: &Experiment) -> (Result<(usize, MethodOutcome)>, f64) {
    let clock = Instant::now();
    let result = run_method(method, csd, truth, &exp.partition).and_then(|out| {
        let g = extract_kpcg(&out.inverse, &exp.partition, exp.threshold, exp.normalization)?;
        Ok((shd(&g.graph, truth)?, out))
    });
    (result, clock.elapsed().as_secs_f64())
}

fn regime_seed(seed: u64, regime: usize) -> u64 {
    derive_seed(seed, regime as u64)
}

/// Picks lambda from the method's grid by SHD on a held-out data set of the
/// regime; ties go to the earlier grid value.
pub fn tune_lambda(method: &Method, exp: &Experiment, regime: usize, truth: &Kpcg) -> Result<Method> {
    let grid = method.lambdas();
    if grid.is_empty() {
        return Ok(method.clone());
    }
    let csd = simulate_csd(&exp.structure, exp.t, derive_seed(regime_seed(exp.seed, regime), TUNING_RUN), regime, exp.half())?;
    let scores: Vec<Option<usize>> = grid
        .par_iter()
        .map(|&l| score(&method.with_lambda(l), &csd, truth, exp).0.ok().map(|(s, _)| s))
        .collect();
    let best = scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|s| (s, i)))
        .min()
        .ok_or_else(|| Error::param(format!("{}: every lambda on the grid failed", method.name())))?;
    log::info!("{} at regime {regime}: lambda {} (SHD {})", method.name(), grid[best.1], best.0);
    Ok(method.with_lambda(grid[best.1]))
}

pub fn run_experiment(exp: &Experiment) -> Result<Vec<ResultRow>> {
    exp.validate()?;
    let truth = ground_truth_kpcg(&exp.structure, &exp.partition)?;
    let mut rows = Vec::new();
    for &regime in &exp.regimes {
        let methods: Vec<std::result::Result<Method, String>> = exp
            .methods_for(regime)
            .iter()
            .map(|m| tune_lambda(m, exp, regime, &truth).map_err(|e| e.to_string()))
            .collect();
        let cells: Vec<Vec<ResultRow>> = (0..exp.runs)
            .into_par_iter()
            .map(|run| {
                let seed = derive_seed(regime_seed(exp.seed, regime), run as u64);
                let csd = simulate_csd(&exp.structure, exp.t, seed, regime, exp.half());
                let names = exp.methods_for(regime);
                methods
                    .iter()
                    .zip(&names)
                    .map(|(method, requested)| {
                        let base = ResultRow {
                            method: requested.name().to_string(),
                            regime,
                            run,
                            lambda: None,
                            shd: None,
                            iterations: None,
                            converged: None,
                            wall_time_s: 0.0,
                            error: None,
                        };
                        let method = match method {
                            Ok(m) => m,
                            Err(e) => return ResultRow { error: Some(e.clone()), ..base },
                        };
                        let csd = match &csd {
                            Ok(c) => c,
                            Err(e) => return ResultRow { error: Some(e.to_string()), ..base },
                        };
                        let (result, wall) = score(method, csd, &truth, exp);
                        let base = ResultRow { lambda: method_lambda(method), wall_time_s: wall, ..base };
                        match result {
                            Ok((s, out)) => ResultRow {
                                shd: Some(s),
                                iterations: out.iterations,
                                converged: out.converged,
                                ..base
                            },
                            Err(e) => {
                                log::warn!("{} regime {regime} run {run}: {e}", method.name());
                                ResultRow { error: Some(e.to_string()), ..base }
                            }
                        }
                    })
                    .collect()
            })
            .collect();
        rows.extend(cells.into_iter().flatten());
    }
    Ok(rows)
}

pub const RESULTS_HEADER: &str = "method,regime,run,lambda,shd,iterations,converged,wall_time_s";

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn write_results_csv(mut out: impl Write, rows: &[ResultRow]) -> Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.regime,
            r.run,
            opt(&r.lambda),
            opt(&r.shd),
            opt(&r.iterations),
            opt(&r.converged),
            r.wall_time_s
        )?;
    }
    Ok(())
}

pub fn read_results_csv(input: impl BufRead) -> Result<Vec<ResultRow>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != RESULTS_HEADER {
        return Err(Error::Format(format!("unexpected results header `{header}`")));
    }
    fn field<T: std::str::FromStr>(s: &str, name: &str, line: usize) -> Result<Option<T>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|_| Error::Format(format!("line {line}: bad {name} `{s}`")))
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let no = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Format(format!("line {no}: expected 8 fields, found {}", f.len())));
        }
        let required = |v: Option<usize>, name: &str| v.ok_or_else(|| Error::Format(format!("line {no}: missing {name}")));
        rows.push(ResultRow {
            method: f[0].to_string(),
            regime: required(field(f[1], "regime", no)?, "regime")?,
            run: required(field(f[2], "run", no)?, "run")?,
            lambda: field(f[3], "lambda", no)?,
            shd: field(f[4], "shd", no)?,
            iterations: field(f[5], "iterations", no)?,
            converged: field(f[6], "converged", no)?,
            wall_time_s: field(f[7], "wall_time_s", no)?.unwrap_or(0.0),
            error: None,
        });
    }
    Ok(rows)
}

/// Linear interpolation between closest ranks, `p` in `[0, 100]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self { median: percentile(&v, 50.0), lo: percentile(&v, 2.5), hi: percentile(&v, 97.5) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    pub regime: usize,
    pub runs: usize,
    pub failures: usize,
    pub shd: Option<Interval>,
}

/// `ia-bs` minus `baseline`, paired by run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceSummary {
    pub baseline: String,
    pub regime: usize,
    pub pairs: usize,
    pub difference: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
    pub differences: Vec<DifferenceSummary>,
}

pub fn summarize(rows: &[ResultRow]) -> Result<Summary> {
    if rows.is_empty() {
        return Err(Error::param("no results to summarize"));
    }
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.method.clone(), r.regime)) {
            keys.push((r.method.clone(), r.regime));
        }
    }
    let cells = keys
        .iter()
        .map(|(method, regime)| {
            let of: Vec<&ResultRow> = rows.iter().filter(|r| &r.method == method && r.regime == *regime).collect();
            let shds: Vec<f64> = of.iter().filter_map(|r| r.shd.map(|s| s as f64)).collect();
            CellSummary {
                method: method.clone(),
                regime: *regime,
                runs: of.len(),
                failures: of.len() - shds.len(),
                shd: Interval::of(&shds),
            }
        })
        .collect();

    let mut differences = Vec::new();
    for (method, regime) in keys.iter().filter(|(m, _)| m != "ia-bs") {
        let diffs: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == "ia-bs" && r.regime == *regime)
            .filter_map(|a| {
                let b = rows.iter().find(|b| &b.method == method && b.regime == *regime && b.run == a.run)?;
                Some(a.shd? as f64 - b.shd? as f64)
            })
            .collect();
        if rows.iter().any(|r| r.method == "ia-bs" && r.regime == *regime) {
            differences.push(DifferenceSummary {
                baseline: method.clone(),
                regime: *regime,
                pairs: diffs.len(),
                difference: Interval::of(&diffs),
            });
        }
    }
    Ok(Summary { cells, differences })
}

pub const SUMMARY_HEADER: &str = "method,regime,runs,failures,median_shd,p2_5,p97_5";
pub const DIFFERENCE_HEADER: &str = "baseline,regime,pairs,median_diff,p2_5,p97_5";

fn interval_fields(i: &Option<Interval>) -> String {
    match i {
        Some(i) => format!("{},{},{}", i.median, i.lo, i.hi),
        None => ",,".into(),
    }
}

pub fn write_summary_csv(mut out: impl Write, summary: &Summary) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for c in &summary.cells {
        writeln!(out, "{},{},{},{},{}", c.method, c.regime, c.runs, c.failures, interval_fields(&c.shd))?;
    }
    Ok(())
}

pub fn write_differences_csv(mut out: impl Write, summary: &Summary) -> Result<()> {
    writeln!(out, "{DIFFERENCE_HEADER}")?;
    for d in &summary.differences {
        writeln!(out, "{},{},{},{}", d.baseline, d.regime, d.pairs, interval_fields(&d.difference))?;
    }
    Ok(())
}

/// Default method list: naive, cf-nz with the largest true cardinality,
/// cf-fk, and both IA variants with regime-tuned settings.
pub fn default_methods(truth: &Kpcg, ia_starts: &[usize], lambdas: &[f64], max_iters: Option<usize>) -> Vec<MethodSpec> {
    let s = truth.cardinalities().into_iter().max().unwrap_or(0);
    vec![
        MethodSpec::Fixed(Method::Naive),
        MethodSpec::Fixed(Method::CfNz { s }),
        MethodSpec::Fixed(Method::CfFk),
        MethodSpec::IaTuned { block_sparse: false, starts: vec![0], lambdas: lambdas.to_vec(), max_iters },
        MethodSpec::IaTuned { block_sparse: true, starts: ia_starts.to_vec(), lambdas: lambdas.to_vec(), max_iters },
    ]
}
