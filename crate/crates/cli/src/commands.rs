use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use specgraph::cf::{cf_learn, SparsityBudget};
use specgraph::eval::{self, Method, MethodSpec};
use specgraph::graph::{extract_kpcg, shd, Kpcg};
use specgraph::ia::{ia_learn, write_trace_csv, IAConfig, ResidualReport};
use specgraph::io::{read_panel_file, read_tensor, write_panel_file, write_tensor};
use specgraph::spectral::{auto_half_width, estimate_csd_replicates, naive_inverse};
use specgraph::synth::{self, BandStructure};
use specgraph::{CsdTensor, FrequencyPartition, InverseCsdTensor};

use crate::{EstimateArgs, EvaluateArgs, ExtractArgs, GenerateArgs, IaFlags, LearnArgs, LearnMethod, PartitionArgs, PipelineArgs, UsageError};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_structure(spec: &str) -> Result<BandStructure> {
    if spec == "reference" {
        return Ok(synth::reference_structure());
    }
    let text = fs::read_to_string(spec).with_context(|| format!("reading structure {spec}"))?;
    let s = BandStructure::from_json(&text).with_context(|| format!("parsing structure {spec}"))?;
    s.validate().with_context(|| format!("structure {spec}"))?;
    Ok(s)
}

/// SHA-256 of the canonical JSON form, so formatting of the input file does not matter.
fn structure_hash(s: &BandStructure) -> Result<String> {
    Ok(format!("{:x}", Sha256::digest(s.to_json()?.as_bytes())))
}

fn partition(args: &PartitionArgs, m: usize) -> Result<FrequencyPartition> {
    Ok(match (&args.blocks, args.equal_blocks) {
        (Some(starts), _) => FrequencyPartition::new(starts.clone(), m)?,
        (None, Some(k)) => FrequencyPartition::equal(k, m)?,
        (None, None) => return Err(usage("one of --blocks or --equal-blocks is required")),
    })
}

fn half_width(spec: &str, t: usize) -> Result<usize> {
    if spec == "auto" {
        return Ok(auto_half_width(t));
    }
    spec.parse().map_err(|_| usage(format!("--half must be `auto` or a nonnegative integer, got `{spec}`")))
}

fn ia_config(flags: &IaFlags) -> Result<IAConfig> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => IAConfig::default(),
    };
    if let Some(v) = flags.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = flags.eta {
        cfg.eta = v;
    }
    if let Some(v) = flags.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = flags.init {
        cfg.init = v;
    }
    if let Some(v) = flags.stepsize {
        cfg.stepsize = v;
    }
    if let Some(v) = flags.c1 {
        cfg.c1 = v;
    }
    if let Some(v) = flags.c2 {
        cfg.c2 = v;
    }
    if let Some(v) = flags.tol {
        cfg.tol_abs_primal = v;
        cfg.tol_rel_primal = v;
        cfg.tol_abs_dual = v;
        cfg.tol_rel_dual = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `out` with its extension replaced by `suffix`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let structure = load_structure(&a.structure)?;
    if a.replicates == 0 {
        return Err(usage("--replicates must be positive"));
    }
    let panels = synth::generate_replicates(&structure, a.length, a.seed, a.replicates)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut files = Vec::with_capacity(panels.len());
    for (r, panel) in panels.iter().enumerate() {
        let name = format!("panel_{r:04}.csv");
        write_panel_file(&a.out.join(&name), panel)?;
        files.push(name);
    }
    let seeds: Vec<u64> = (0..a.replicates as u64).map(|r| synth::derive_seed(a.seed, r)).collect();
    write_json(
        &a.out.join("manifest.json"),
        &json!({
            "seed": a.seed,
            "length": a.length,
            "replicates": a.replicates,
            "structure_sha256": structure_hash(&structure)?,
            "structure": structure,
            "replicate_seeds": seeds,
            "files": files,
        }),
    )?;
    println!("wrote {} panels to {}", files.len(), a.out.display());
    Ok(())
}

fn expand_inputs(inputs: &[String]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for input in inputs {
        if input.contains(['*', '?', '[']) {
            let mut matched: Vec<PathBuf> = glob::glob(input)
                .map_err(|e| usage(format!("bad pattern `{input}`: {e}")))?
                .collect::<std::result::Result<_, _>>()?;
            if matched.is_empty() {
                return Err(usage(format!("`{input}` matches no files")));
            }
            matched.sort();
            paths.extend(matched);
        } else {
            paths.push(PathBuf::from(input));
        }
    }
    Ok(paths)
}

pub fn estimate(a: &EstimateArgs) -> Result<()> {
    let paths = expand_inputs(&a.inputs)?;
    let panels = paths
        .iter()
        .map(|p| read_panel_file(p, a.header).with_context(|| format!("reading panel {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let (n, t) = (panels[0].n(), panels[0].t());
    if let Some((p, bad)) = paths.iter().zip(&panels).find(|(_, q)| q.n() != n || q.t() != t) {
        return Err(usage(format!(
            "{} has N = {}, T = {} but {} has N = {n}, T = {t}",
            p.display(),
            bad.n(),
            bad.t(),
            paths[0].display()
        )));
    }
    let half = half_width(&a.half, t)?;
    let csd = estimate_csd_replicates(&panels, half)?;
    write_tensor(&a.out, &csd)?;
    println!("averaged {} panels (N = {n}, T = {t}, half-width {half}) into {}", panels.len(), a.out.display());
    Ok(())
}

struct Learned {
    inverse: InverseCsdTensor,
    meta: serde_json::Value,
    trace: Option<Vec<ResidualReport>>,
}

fn learn_inverse(
    method: LearnMethod,
    csd: &CsdTensor,
    part: &FrequencyPartition,
    budget: Option<&[usize]>,
    flags: &IaFlags,
) -> Result<Learned> {
    let clock = Instant::now();
    let mut meta = json!({ "method": method, "partition": part.starts() });
    let (inverse, trace) = match method {
        LearnMethod::Naive => (naive_inverse(csd)?, None),
        LearnMethod::Cf => {
            let b = budget.ok_or_else(|| usage("cf needs --budget"))?;
            let budget = match b {
                [s] => SparsityBudget::uniform(*s, part.k(), csd.n())?,
                many => SparsityBudget::new(many.to_vec(), csd.n())?,
            };
            meta["budget"] = json!(budget.values());
            (cf_learn(&naive_inverse(csd)?, part, &budget)?, None)
        }
        LearnMethod::Ia => {
            let cfg = ia_config(flags)?;
            let out = ia_learn(csd, part, &cfg)?;
            meta["config"] = serde_json::to_value(&cfg)?;
            meta["iterations"] = json!(out.iterations);
            meta["converged"] = json!(out.converged);
            if !out.converged {
                log::warn!("ia stopped at the iteration cap ({}) without meeting the tolerances", out.iterations);
            }
            (out.inverse, Some(out.trace))
        }
    };
    meta["wall_time_s"] = json!(clock.elapsed().as_secs_f64());
    Ok(Learned { inverse, meta, trace })
}

pub fn learn(a: &LearnArgs) -> Result<()> {
    let csd = CsdTensor(read_tensor(&a.input).with_context(|| format!("reading {}", a.input.display()))?);
    let part = partition(&a.partition, csd.m())?;
    let mut learned = learn_inverse(a.method, &csd, &part, a.budget.as_deref(), &a.ia)?;
    write_tensor(&a.out, &learned.inverse)?;
    if let Some(trace) = &learned.trace {
        let path = a.trace.clone().unwrap_or_else(|| sibling(&a.out, ".trace.csv"));
        let mut f = create(&path)?;
        write_trace_csv(&mut f, trace)?;
        f.flush()?;
    }
    learned.meta["input"] = json!(a.input);
    learned.meta["output"] = json!(a.out);
    write_json(&a.meta.clone().unwrap_or_else(|| sibling(&a.out, ".meta.json")), &learned.meta)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn read_kpcg(path: &Path) -> Result<Kpcg> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Kpcg::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn extract(a: &ExtractArgs) -> Result<()> {
    let inv = InverseCsdTensor::new(read_tensor(&a.input).with_context(|| format!("reading {}", a.input.display()))?, None);
    let part = partition(&a.partition, inv.m())?;
    let ex = extract_kpcg(&inv, &part, a.threshold, a.normalization)?;
    fs::write(&a.out, ex.graph.to_json()? + "\n").with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(dir) = &a.edges {
        fs::create_dir_all(dir)?;
        for m in 0..ex.graph.k() {
            let mut f = create(&dir.join(format!("layer_{}.csv", m + 1)))?;
            ex.graph.write_layer_csv(m, &mut f)?;
            f.flush()?;
        }
    }
    println!("edges per layer: {:?}", ex.graph.cardinalities());
    if let Some(truth) = &a.truth {
        println!("shd {}", shd(&ex.graph, &read_kpcg(truth)?)?);
    }
    Ok(())
}

fn method_specs(a: &EvaluateArgs, truth: &Kpcg) -> Result<Vec<MethodSpec>> {
    let lambdas = if a.tune { eval::LAMBDA_GRID.to_vec() } else { vec![] };
    let s = truth.cardinalities().into_iter().max().unwrap_or(0);
    a.methods
        .iter()
        .map(|name| {
            Ok(match name.as_str() {
                "naive" => MethodSpec::Fixed(Method::Naive),
                "cf-nz" => MethodSpec::Fixed(Method::CfNz { s }),
                "cf-fk" => MethodSpec::Fixed(Method::CfFk),
                "ia-gs" => MethodSpec::IaTuned { block_sparse: false, starts: vec![0], lambdas: lambdas.clone(), max_iters: a.max_iters },
                "ia-bs" => MethodSpec::IaTuned {
                    block_sparse: true,
                    starts: a.ia_blocks.clone(),
                    lambdas: lambdas.clone(),
                    max_iters: a.max_iters,
                },
                other => return Err(usage(format!("unknown method `{other}`"))),
            })
        })
        .collect()
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    if let (Some(est), Some(truth)) = (&a.estimate, &a.truth) {
        println!("shd {}", shd(&read_kpcg(est)?, &read_kpcg(truth)?)?);
        return Ok(());
    }
    let out = a.out.as_ref().ok_or_else(|| usage("--out is required"))?;
    let structure = load_structure(&a.structure)?;
    let m = specgraph::tensor::num_frequencies(a.length);
    let part = match (&a.blocks, a.equal_blocks) {
        (Some(starts), _) => FrequencyPartition::new(starts.clone(), m)?,
        (None, Some(k)) => FrequencyPartition::equal(k, m)?,
        (None, None) => FrequencyPartition::equal(synth::REFERENCE_BLOCKS, m)?,
    };
    let truth = synth::ground_truth_kpcg(&structure, &part)?;
    let regimes = if a.full {
        eval::FULL_REGIMES.to_vec()
    } else {
        a.regimes.clone().unwrap_or_else(|| eval::DEFAULT_REGIMES.to_vec())
    };
    let exp = eval::Experiment {
        structure: structure.clone(),
        t: a.length,
        half_width: Some(half_width(&a.half, a.length)?),
        partition: part.clone(),
        threshold: a.threshold,
        normalization: a.normalization,
        regimes: regimes.clone(),
        runs: a.runs,
        seed: a.seed,
        methods: method_specs(a, &truth)?,
    };
    let clock = Instant::now();
    let rows = eval::run_experiment(&exp)?;
    let summary = eval::summarize(&rows)?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut f = create(&out.join("results.csv"))?;
    eval::write_results_csv(&mut f, &rows)?;
    f.flush()?;
    write_json(&out.join("results.json"), &rows)?;
    let mut f = create(&out.join("summary.csv"))?;
    eval::write_summary_csv(&mut f, &summary)?;
    f.flush()?;
    let mut f = create(&out.join("differences.csv"))?;
    eval::write_differences_csv(&mut f, &summary)?;
    f.flush()?;
    write_json(&out.join("summary.json"), &summary)?;
    fs::write(out.join("truth.json"), truth.to_json()? + "\n")?;
    write_json(
        &out.join("experiment.json"),
        &json!({
            "seed": a.seed,
            "structure_sha256": structure_hash(&structure)?,
            "length": a.length,
            "half_width": exp.half_width,
            "partition": part.starts(),
            "ia_blocks": a.ia_blocks,
            "regimes": regimes,
            "runs": a.runs,
            "methods": a.methods,
            "tune": a.tune,
            "threshold": a.threshold,
            "normalization": a.normalization,
            "wall_time_s": clock.elapsed().as_secs_f64(),
        }),
    )?;

    println!("{:<8} {:>7} {:>8} {:>8} {:>8}", "method", "regime", "median", "p2.5", "p97.5");
    for c in &summary.cells {
        match &c.shd {
            Some(i) => println!("{:<8} {:>7} {:>8} {:>8} {:>8}", c.method, c.regime, i.median, i.lo, i.hi),
            None => println!("{:<8} {:>7} {:>8}", c.method, c.regime, "failed"),
        }
    }
    Ok(())
}

pub fn pipeline(a: &PipelineArgs) -> Result<()> {
    let structure = load_structure(&a.structure)?;
    let half = half_width(&a.half, a.length)?;
    let csd = eval::simulate_csd(&structure, a.length, a.seed, a.replicates, half)?;
    let part = partition(&a.partition, csd.m())?;
    let learn_part = match &a.learn_blocks {
        Some(starts) => FrequencyPartition::new(starts.clone(), csd.m())?,
        None => part.clone(),
    };
    let learned = learn_inverse(a.method, &csd, &learn_part, a.budget.as_deref(), &a.ia)?;
    let ex = extract_kpcg(&learned.inverse, &part, a.threshold, a.normalization)?;
    let truth = synth::ground_truth_kpcg(&structure, &part)?;
    let distance = shd(&ex.graph, &truth)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_tensor(&a.out.join("csd.bin"), &csd)?;
    write_tensor(&a.out.join("inverse.bin"), &learned.inverse)?;
    fs::write(a.out.join("kpcg.json"), ex.graph.to_json()? + "\n")?;
    fs::write(a.out.join("truth.json"), truth.to_json()? + "\n")?;
    if let Some(trace) = &learned.trace {
        let mut f = create(&a.out.join("trace.csv"))?;
        write_trace_csv(&mut f, trace)?;
        f.flush()?;
    }
    let mut meta = learned.meta;
    meta["seed"] = json!(a.seed);
    meta["structure_sha256"] = json!(structure_hash(&structure)?);
    meta["length"] = json!(a.length);
    meta["replicates"] = json!(a.replicates);
    meta["half_width"] = json!(half);
    meta["extraction_partition"] = json!(part.starts());
    meta["threshold"] = json!(a.threshold);
    meta["shd"] = json!(distance);
    write_json(&a.out.join("meta.json"), &meta)?;
    println!("edges per layer: {:?}", ex.graph.cardinalities());
    println!("truth per layer: {:?}", truth.cardinalities());
    println!("shd {distance}");
    Ok(())
}
