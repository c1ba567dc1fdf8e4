//! Layered partial coherence graphs: extraction from an inverse CSD tensor
//! and the structural Hamming distance.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::partial_coherence;
use crate::tensor::{FrequencyPartition, InverseCsdTensor};

pub const DEFAULT_THRESHOLD: f64 = 0.05;

/// Undirected edge, stored with `i > j` (0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kpcg {
    n: usize,
    layers: Vec<Vec<Edge>>,
}

#[derive(Serialize, Deserialize)]
struct KpcgJson {
    n: usize,
    k: usize,
    layers: Vec<Vec<(usize, usize, f64)>>,
}

impl Kpcg {
    /// Builds a graph from per-layer edges; pairs may come in either order.
    pub fn new(n: usize, layers: Vec<Vec<Edge>>) -> Result<Self> {
        let mut out = Vec::with_capacity(layers.len());
        for (m, layer) in layers.into_iter().enumerate() {
            let mut seen = BTreeSet::new();
            let mut edges = Vec::with_capacity(layer.len());
            for e in layer {
                if e.i == e.j {
                    return Err(Error::Format(format!("self-loop on node {} in layer {m}", e.i)));
                }
                if e.i >= n || e.j >= n {
                    return Err(Error::Format(format!("edge ({}, {}) out of range for n = {n}", e.i, e.j)));
                }
                let (i, j) = (e.i.max(e.j), e.i.min(e.j));
                if !seen.insert((i, j)) {
                    return Err(Error::Format(format!("duplicate edge ({i}, {j}) in layer {m}")));
                }
                edges.push(Edge { i, j, weight: e.weight });
            }
            edges.sort_by_key(|e| (e.j, e.i));
            out.push(edges);
        }
        Ok(Self { n, layers: out })
    }

    /// Unweighted layers (weight 1 on every edge).
    pub fn from_pairs(n: usize, layers: &[Vec<(usize, usize)>]) -> Result<Self> {
        Self::new(
            n,
            layers
                .iter()
                .map(|l| l.iter().map(|&(i, j)| Edge { i, j, weight: 1.0 }).collect())
                .collect(),
        )
    }

    pub fn empty(n: usize, k: usize) -> Self {
        Self { n, layers: vec![Vec::new(); k] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<Edge>] {
        &self.layers
    }

    pub fn edge_set(&self, m: usize) -> BTreeSet<(usize, usize)> {
        self.layers[m].iter().map(|e| (e.i, e.j)).collect()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = KpcgJson {
            n: self.n,
            k: self.k(),
            layers: self
                .layers
                .iter()
                .map(|l| l.iter().map(|e| (e.i + 1, e.j + 1, e.weight)).collect())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: KpcgJson = serde_json::from_str(text)?;
        if doc.layers.len() != doc.k {
            return Err(Error::Format(format!("k = {} but {} layers given", doc.k, doc.layers.len())));
        }
        let mut layers = Vec::with_capacity(doc.k);
        for layer in doc.layers {
            let mut edges = Vec::with_capacity(layer.len());
            for (i, j, weight) in layer {
                if i == 0 || j == 0 {
                    return Err(Error::Format("node indices are 1-based".into()));
                }
                if i <= j {
                    return Err(Error::Format(format!("edge [{i}, {j}] must have i > j")));
                }
                edges.push(Edge { i: i - 1, j: j - 1, weight });
            }
            layers.push(edges);
        }
        Self::new(doc.n, layers)
    }

    /// Edge list of one layer: `source,target,weight`, 1-based.
    pub fn write_layer_csv(&self, m: usize, mut out: impl Write) -> Result<()> {
        writeln!(out, "source,target,weight")?;
        for e in &self.layers[m] {
            writeln!(out, "{},{},{}", e.i + 1, e.j + 1, e.weight)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Min-max over the pair scores of each block.
    #[default]
    PerBlock,
    /// Min-max over all blocks at once.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractionWarning {
    pub block: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub graph: Kpcg,
    /// Normalized score of every strictly-lower pair, per block, in `(i, j)` order
    /// with `j` outer.
    pub scores: Vec<Vec<f64>>,
    pub warnings: Vec<ExtractionWarning>,
}

fn lower_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|j| (j + 1..n).map(move |i| (i, j))).collect()
}

/// Fiber norms of the partial coherence over each block.
pub fn block_scores(inv: &InverseCsdTensor, partition: &FrequencyPartition) -> Result<Vec<Vec<f64>>> {
    if partition.m() != inv.m() {
        return Err(Error::shape("partition and tensor disagree on the number of frequencies"));
    }
    let coh = partial_coherence(inv)?;
    let pairs = lower_pairs(inv.n());
    Ok(partition
        .blocks()
        .map(|range| {
            pairs
                .iter()
                .map(|&(i, j)| range.clone().map(|k| coh.slice(k)[(i, j)].norm_sqr()).sum::<f64>().sqrt())
                .collect()
        })
        .collect())
}

pub fn extract_kpcg(
    inv: &InverseCsdTensor,
    partition: &FrequencyPartition,
    threshold: f64,
    normalization: Normalization,
) -> Result<Extraction> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::param(format!("threshold must lie in [0, 1), got {threshold}")));
    }
    let raw = block_scores(inv, partition)?;
    let n = inv.n();
    let pairs = lower_pairs(n);
    let mut warnings = Vec::new();

    let range_of = |s: &[f64]| {
        s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    };
    let global = range_of(&raw.concat());
    let mut scores = Vec::with_capacity(raw.len());
    for (m, block) in raw.iter().enumerate() {
        let (lo, hi) = match normalization {
            Normalization::PerBlock => range_of(block),
            Normalization::Global => global,
        };
        if !(hi > lo) {
            warnings.push(ExtractionWarning {
                block: m,
                message: format!("all pair scores equal ({lo:e}); normalization undefined, layer left empty"),
            });
            scores.push(vec![0.0; block.len()]);
            continue;
        }
        scores.push(block.iter().map(|&s| (s - lo) / (hi - lo)).collect());
    }
    for w in &warnings {
        log::warn!("block {}: {}", w.block, w.message);
    }

    let layers = scores
        .iter()
        .map(|block| {
            pairs
                .iter()
                .zip(block)
                .filter(|(_, &s)| s > threshold)
                .map(|(&(i, j), &weight)| Edge { i, j, weight })
                .collect()
        })
        .collect();
    Ok(Extraction { graph: Kpcg::new(n, layers)?, scores, warnings })
}

/// Summed symmetric difference of the layer edge sets.
pub fn shd(estimated: &Kpcg, truth: &Kpcg) -> Result<usize> {
    if estimated.n() != truth.n() || estimated.k() != truth.k() {
        return Err(Error::shape(format!(
            "graphs differ in shape: (n, k) = ({}, {}) vs ({}, {})",
            estimated.n(),
            estimated.k(),
            truth.n(),
            truth.k()
        )));
    }
    Ok((0..truth.k())
        .map(|m| estimated.edge_set(m).symmetric_difference(&truth.edge_set(m)).count())
        .sum())
}
