//! Band-limited synthetic data with a known layered graph.
//!
//! Each node is its own unit-variance white innovation plus, for every band
//! edge `parent -> child`, the parent's output passed through a zero-phase
//! bandpass filter for that band, delayed by `lag` samples and scaled by
//! `coef`. Nodes are computed in topological order of the union of all band
//! edges, so within a band the inverse spectral density is supported on the
//! moral graph of that band's edges.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Kpcg;
use crate::tensor::{num_frequencies, FrequencyPartition, TimeSeriesPanel};

/// Odd length of the bandpass filters.
pub const FIR_TAPS: usize = 129;

/// Bins by which interior band edges are pulled inward, so that the bulk of
/// the transition band lies inside the designated band.
pub const EDGE_INSET_BINS: usize = 13;

pub const REFERENCE_T: usize = 1024;
pub const REFERENCE_BLOCKS: usize = 8;
pub const REFERENCE_IA_STARTS: [usize; 3] = [0, 64, 448];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemEdge {
    pub from: usize,
    pub to: usize,
    pub coef: f64,
    pub lag: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub start_k: usize,
    /// Inclusive.
    pub end_k: usize,
    pub edges: Vec<SemEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub n: usize,
    pub bands: Vec<Band>,
}

impl BandStructure {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks everything that does not depend on the series length.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("structure needs at least one node"));
        }
        for (b, band) in self.bands.iter().enumerate() {
            if band.start_k > band.end_k {
                return Err(Error::param(format!("band {b}: start_k {} > end_k {}", band.start_k, band.end_k)));
            }
            for e in &band.edges {
                if e.from >= self.n || e.to >= self.n {
                    return Err(Error::param(format!(
                        "band {b}: edge {} -> {} out of range for n = {}",
                        e.from, e.to, self.n
                    )));
                }
                if e.from == e.to {
                    return Err(Error::UnstableStructure(format!("band {b}: self-loop on node {}", e.from)));
                }
                if !e.coef.is_finite() {
                    return Err(Error::param(format!("band {b}: non-finite coefficient")));
                }
            }
        }
        self.topological_order().map(|_| ())
    }

    fn validate_for_length(&self, t: usize) -> Result<()> {
        self.validate()?;
        let m = num_frequencies(t);
        for (b, band) in self.bands.iter().enumerate() {
            if band.end_k >= m {
                return Err(Error::param(format!("band {b}: end_k {} beyond the last frequency {}", band.end_k, m - 1)));
            }
            let width = band.end_k - band.start_k + 1;
            let insets = usize::from(band.start_k > 0) + usize::from(band.end_k + 1 < m);
            if !band.edges.is_empty() && width <= insets * EDGE_INSET_BINS {
                return Err(Error::param(format!("band {b} is too narrow for the bandpass design")));
            }
        }
        Ok(())
    }

    /// Kahn's algorithm on the union of all band edges; a cycle makes the
    /// recursion ill-posed and is reported as instability.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.n;
        let mut indegree = vec![0usize; n];
        let mut children = vec![Vec::new(); n];
        for e in self.bands.iter().flat_map(|b| &b.edges) {
            if !children[e.from].contains(&e.to) {
                children[e.from].push(e.to);
                indegree[e.to] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop() {
            order.push(i);
            for &c in &children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if order.len() < n {
            return Err(Error::UnstableStructure("edges across bands form a directed cycle".into()));
        }
        Ok(order)
    }
}

/// Hamming-windowed sinc bandpass for DFT bins `[start_k, end_k]` of a
/// length-`t` series. Symmetric (zero phase when applied centered).
pub fn bandpass_fir(start_k: usize, end_k: usize, t: usize) -> Vec<f64> {
    let m = num_frequencies(t);
    let tf = t as f64;
    let lo = if start_k == 0 { 0.0 } else { (start_k + EDGE_INSET_BINS) as f64 / tf };
    let hi = if end_k + 1 >= m { 0.5 } else { (end_k - EDGE_INSET_BINS) as f64 / tf };
    let half = (FIR_TAPS / 2) as isize;
    let lowpass = |fc: f64, n: isize| {
        if n == 0 {
            2.0 * fc
        } else {
            let x = PI * n as f64;
            (2.0 * fc * x).sin() / x
        }
    };
    (-half..=half)
        .map(|n| {
            let window = 0.54 + 0.46 * (PI * n as f64 / half as f64).cos();
            (lowpass(hi, n) - lowpass(lo, n)) * window
        })
        .collect()
}

/// Centered convolution with zero extension.
fn filter_centered(x: &[f64], h: &[f64]) -> Vec<f64> {
    let half = h.len() / 2;
    let len = x.len();
    (0..len)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(len - 1);
            (lo..=hi).map(|s| h[s + half - t] * x[s]).sum()
        })
        .collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `r`: two splitmix64 rounds over `(seed, r)`.
pub fn derive_seed(seed: u64, replicate: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ replicate)
}

pub fn generate(structure: &BandStructure, t: usize, seed: u64) -> Result<TimeSeriesPanel> {
    structure.validate_for_length(t)?;
    let order = structure.topological_order()?;
    let n = structure.n;

    // Every level of the DAG adds at most one filter half-length plus a lag
    // of memory; the margin covers the deepest possible chain.
    let max_lag = structure.bands.iter().flat_map(|b| &b.edges).map(|e| e.lag).max().unwrap_or(0);
    let margin = n * (FIR_TAPS / 2 + max_lag) + FIR_TAPS;
    let len = t + 2 * margin;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); n];
    let innovations: Vec<Vec<f64>> =
        (0..n).map(|_| (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let filters: Vec<Vec<f64>> = structure.bands.iter().map(|b| bandpass_fir(b.start_k, b.end_k, t)).collect();

    for &node in &order {
        let mut y = innovations[node].clone();
        for (band, h) in structure.bands.iter().zip(&filters) {
            for e in band.edges.iter().filter(|e| e.to == node) {
                let filtered = filter_centered(&out[e.from], h);
                for s in e.lag..len {
                    y[s] += e.coef * filtered[s - e.lag];
                }
            }
        }
        out[node] = y;
    }
    let data = DMatrix::from_fn(n, t, |i, s| out[i][margin + s]);
    TimeSeriesPanel::new(data)
}

/// `count` independent panels; replicate `r` uses `derive_seed(seed, r)`.
pub fn generate_replicates(structure: &BandStructure, t: usize, seed: u64, count: usize) -> Result<Vec<TimeSeriesPanel>> {
    structure.validate_for_length(t)?;
    (0..count as u64)
        .into_par_iter()
        .map(|r| generate(structure, t, derive_seed(seed, r)))
        .collect()
}

/// Parent-child pairs plus co-parent pairs of one band.
pub fn moral_edges(n: usize, edges: &[SemEdge]) -> Vec<(usize, usize)> {
    let mut set = std::collections::BTreeSet::new();
    let mut parents = vec![Vec::new(); n];
    for e in edges {
        set.insert((e.from.max(e.to), e.from.min(e.to)));
        if !parents[e.to].contains(&e.from) {
            parents[e.to].push(e.from);
        }
    }
    for ps in &parents {
        for (a, &p) in ps.iter().enumerate() {
            for &q in &ps[a + 1..] {
                set.insert((p.max(q), p.min(q)));
            }
        }
    }
    set.into_iter().collect()
}

pub fn ground_truth_kpcg(structure: &BandStructure, partition: &FrequencyPartition) -> Result<Kpcg> {
    structure.validate()?;
    let n = structure.n;
    let layers: Vec<Vec<(usize, usize)>> = partition
        .blocks()
        .map(|block| {
            let mut set = std::collections::BTreeSet::new();
            for band in &structure.bands {
                if band.start_k < block.end && block.start <= band.end_k {
                    set.extend(moral_edges(n, &band.edges));
                }
            }
            set.into_iter().collect()
        })
        .collect();
    Kpcg::from_pairs(n, &layers)
}

/// Six nodes, two disjoint bands splitting the spectrum at bin 256 of 513
/// (`T = 1024`). Both bands share most of their skeleton: the slow band has
/// a collider at node 1, the fast band one at node 3, and the union of the
/// two moral graphs covers 7 of the 15 pairs.
pub fn reference_structure() -> BandStructure {
    let edge = |from, to, coef, lag| SemEdge { from, to, coef, lag };
    BandStructure {
        n: 6,
        bands: vec![
            Band {
                start_k: 0,
                end_k: 255,
                edges: vec![edge(0, 1, 0.8, 1), edge(4, 1, 0.7, 2), edge(1, 2, 0.8, 1), edge(2, 3, 0.7, 1)],
            },
            Band {
                start_k: 256,
                end_k: 512,
                edges: vec![
                    edge(0, 4, 0.8, 1),
                    edge(4, 1, 0.7, 1),
                    edge(1, 2, 0.7, 2),
                    edge(2, 3, 0.8, 1),
                    edge(5, 3, 0.7, 2),
                ],
            },
        ],
    }
}

pub fn reference_partition() -> FrequencyPartition {
    FrequencyPartition::equal(REFERENCE_BLOCKS, num_frequencies(REFERENCE_T)).expect("valid reference partition")
}

pub fn reference_ia_partition() -> FrequencyPartition {
    FrequencyPartition::new(REFERENCE_IA_STARTS.to_vec(), num_frequencies(REFERENCE_T))
        .expect("valid reference partition")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn edge(from: usize, to: usize) -> SemEdge {
        SemEdge { from, to, coef: 0.5, lag: 1 }
    }

    fn one_band(n: usize, edges: Vec<SemEdge>) -> BandStructure {
        BandStructure { n, bands: vec![Band { start_k: 0, end_k: 512, edges }] }
    }

    fn response(h: &[f64], k: usize, t: usize) -> f64 {
        let half = (h.len() / 2) as f64;
        h.iter()
            .enumerate()
            .map(|(i, &c)| Complex64::from_polar(c, -2.0 * PI * k as f64 * (i as f64 - half) / t as f64))
            .sum::<Complex64>()
            .norm()
    }

    #[test]
    fn bandpass_shape() {
        let t = 1024;
        for (lo, hi) in [(0usize, 255usize), (256, 512), (128, 383)] {
            let h = bandpass_fir(lo, hi, t);
            assert_eq!(h.len(), FIR_TAPS);
            for i in 0..FIR_TAPS {
                assert_eq!(h[i], h[FIR_TAPS - 1 - i]);
            }
            let inside = |k: usize| (lo..=hi).contains(&k);
            // the transition may occupy up to 10% of the band at interior edges
            let transition = (hi - lo + 1) / 10;
            let in_transition =
                |k: usize| (lo > 0 && k - lo < transition) || (hi < 512 && hi - k < transition);
            let mut worst_pass: f64 = 0.0;
            let mut worst_stop: f64 = 0.0;
            for k in 0..=512 {
                let g = response(&h, k, t);
                if !inside(k) {
                    worst_stop = worst_stop.max(g);
                } else if !in_transition(k) {
                    worst_pass = worst_pass.max((g - 1.0).abs());
                }
            }
            assert!(worst_pass < 0.05, "{lo}..{hi}: passband ripple {worst_pass}");
            assert!(worst_stop < 0.05, "{lo}..{hi}: stopband {worst_stop}");
        }
    }

    #[test]
    fn same_seed_same_panel() {
        let s = reference_structure();
        let a = generate(&s, 1024, 7).unwrap();
        let b = generate(&s, 1024, 7).unwrap();
        let c = generate(&s, 1024, 8).unwrap();
        assert_eq!(a.data(), b.data());
        assert_ne!(a.data(), c.data());
        let reps = generate_replicates(&s, 1024, 7, 3).unwrap();
        assert_eq!(reps.len(), 3);
        assert_eq!(reps[1].data(), generate(&s, 1024, derive_seed(7, 1)).unwrap().data());
        assert_ne!(reps[0].data(), reps[1].data());
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for seed in 0..20 {
            for r in 0..200 {
                assert!(seen.insert(derive_seed(seed, r)));
            }
        }
    }

    #[test]
    fn empty_structure_is_white_noise() {
        let s = BandStructure { n: 3, bands: vec![] };
        let panel = generate(&s, 4096, 1).unwrap();
        for i in 0..3 {
            let row = panel.row(i);
            let var = row.iter().map(|x| x * x).sum::<f64>() / row.len() as f64;
            assert!((var - 1.0).abs() < 0.1, "{var}");
        }
        let r01: f64 = panel.row(0).iter().zip(panel.row(1)).map(|(a, b)| a * b).sum::<f64>() / 4096.0;
        assert!(r01.abs() < 0.1);
    }

    #[test]
    fn single_edge_adds_the_filtered_parent() {
        // full band: the filter is the identity, so y1[t] = e1[t] + coef y0[t - lag]
        let s = BandStructure {
            n: 2,
            bands: vec![Band { start_k: 0, end_k: 32, edges: vec![SemEdge { from: 0, to: 1, coef: 2.0, lag: 3 }] }],
        };
        let h = bandpass_fir(0, 32, 64);
        assert!((h[FIR_TAPS / 2] - 1.0).abs() < 1e-15);
        assert!(h.iter().enumerate().all(|(i, &c)| i == FIR_TAPS / 2 || c.abs() < 1e-15));
        let p = generate(&s, 64, 3).unwrap();
        let cov: f64 = (3..64).map(|t| p.data()[(1, t)] * p.data()[(0, t - 3)]).sum::<f64>() / 61.0;
        assert!((cov - 2.0).abs() < 1.0, "{cov}");
    }

    #[test]
    fn invalid_structures() {
        let cyclic = BandStructure {
            n: 3,
            bands: vec![
                Band { start_k: 0, end_k: 100, edges: vec![edge(0, 1), edge(1, 2)] },
                Band { start_k: 101, end_k: 512, edges: vec![edge(2, 0)] },
            ],
        };
        assert!(matches!(generate(&cyclic, 1024, 0), Err(Error::UnstableStructure(_))));
        assert!(matches!(one_band(2, vec![edge(1, 1)]).validate(), Err(Error::UnstableStructure(_))));
        assert!(one_band(2, vec![edge(0, 2)]).validate().is_err());
        // band beyond the Nyquist index for T = 512
        assert!(generate(&one_band(2, vec![edge(0, 1)]), 512, 0).is_err());
        let narrow = BandStructure { n: 2, bands: vec![Band { start_k: 100, end_k: 120, edges: vec![edge(0, 1)] }] };
        assert!(generate(&narrow, 1024, 0).is_err());
        let reversed = BandStructure { n: 2, bands: vec![Band { start_k: 5, end_k: 4, edges: vec![] }] };
        assert!(reversed.validate().is_err());
    }

    #[test]
    fn moralization_examples() {
        assert_eq!(moral_edges(3, &[edge(0, 1), edge(1, 2)]), vec![(1, 0), (2, 1)]);
        assert_eq!(moral_edges(3, &[edge(0, 1), edge(2, 1)]), vec![(1, 0), (2, 0), (2, 1)]);
        assert!(moral_edges(3, &[]).is_empty());
    }

    #[test]
    fn truth_follows_overlapping_blocks() {
        let s = BandStructure {
            n: 3,
            bands: vec![Band { start_k: 100, end_k: 300, edges: vec![edge(0, 1), edge(2, 1)] }],
        };
        let part = FrequencyPartition::equal(8, 513).unwrap();
        let g = ground_truth_kpcg(&s, &part).unwrap();
        assert_eq!(g.cardinalities(), vec![0, 3, 3, 3, 3, 0, 0, 0]);
        let empty = ground_truth_kpcg(&BandStructure { n: 3, bands: vec![] }, &part).unwrap();
        assert_eq!(empty.cardinalities(), vec![0; 8]);
    }

    #[test]
    fn reference_truth() {
        let s = reference_structure();
        s.validate().unwrap();
        let g = ground_truth_kpcg(&s, &reference_partition()).unwrap();
        assert_eq!(g.cardinalities(), vec![5, 5, 5, 5, 6, 6, 6, 6]);
        // the collider at node 1 links its parents 0 and 4 in the slow band,
        // the one at node 3 links 2 and 5 in the fast band
        assert!(g.edge_set(0).contains(&(4, 0)));
        assert!(!g.edge_set(0).contains(&(2, 0)));
        assert!(g.edge_set(7).contains(&(5, 2)));
        let union: std::collections::BTreeSet<_> = (0..8).flat_map(|m| g.edge_set(m)).collect();
        assert_eq!(union.len(), 7);
        assert_eq!(reference_ia_partition().k(), 3);
    }

    #[test]
    fn structure_json_round_trip() {
        let s = reference_structure();
        let text = s.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["bands"][0]["end_k"], 255);
        assert_eq!(v["bands"][1]["edges"][0]["to"], 4);
        assert_eq!(BandStructure::from_json(&text).unwrap(), s);
    }
}
