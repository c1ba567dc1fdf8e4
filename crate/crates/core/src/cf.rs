//! Closed-form learner: best `s_m`-sparse approximation of the naive inverse
//! within each frequency block.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{
    flatten_block, pair_index, BlockFlattening, CMatrix, FrequencyPartition, FrequencyTensor,
    InverseCsdTensor, SelectionMask,
};

/// Number of retained strictly-lower fibers per block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityBudget {
    s: Vec<usize>,
}

impl SparsityBudget {
    pub fn new(s: Vec<usize>, n: usize) -> Result<Self> {
        let max = n * (n - 1) / 2;
        if let Some(bad) = s.iter().find(|&&v| v > max) {
            return Err(Error::param(format!("budget {bad} exceeds N(N-1)/2 = {max}")));
        }
        Ok(Self { s })
    }

    /// The same budget for every block.
    pub fn uniform(s: usize, k: usize, n: usize) -> Result<Self> {
        Self::new(vec![s; k], n)
    }

    pub fn values(&self) -> &[usize] {
        &self.s
    }
}

/// Strictly-lower pairs `(i, j)` of block `flat` ranked by fiber norm,
/// largest first; equal norms keep the lexicographically smaller pair first.
fn ranked_pairs(flat: &BlockFlattening) -> Vec<(usize, usize)> {
    let n = flat.n();
    let mut pairs: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| (flat.column_norm(pair_index(n, i, j)), i, j))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    pairs.into_iter().map(|(_, i, j)| (i, j)).collect()
}

/// Strictly-lower pairs kept for each block, in rank order.
pub fn cf_support(
    naive: &FrequencyTensor,
    partition: &FrequencyPartition,
    budget: &SparsityBudget,
) -> Result<Vec<Vec<(usize, usize)>>> {
    if budget.values().len() != partition.k() {
        return Err(Error::shape(format!(
            "budget has {} entries for {} blocks",
            budget.values().len(),
            partition.k()
        )));
    }
    if partition.m() != naive.m() {
        return Err(Error::shape("partition and tensor disagree on the number of frequencies"));
    }
    (0..partition.k())
        .into_par_iter()
        .map(|b| {
            let flat = flatten_block(naive, partition, b)?;
            let mut ranked = ranked_pairs(&flat);
            ranked.truncate(budget.values()[b]);
            Ok(ranked)
        })
        .collect()
}

pub fn cf_learn(
    naive: &InverseCsdTensor,
    partition: &FrequencyPartition,
    budget: &SparsityBudget,
) -> Result<InverseCsdTensor> {
    let support = cf_support(naive, partition, budget)?;
    let n = naive.n();
    let mut slices = Vec::with_capacity(naive.m());
    for (b, block) in partition.blocks().enumerate() {
        for k in block {
            let src = naive.slice(k);
            let mut out = CMatrix::zeros(n, n);
            for i in 0..n {
                out[(i, i)] = Complex64::new(src[(i, i)].re, 0.0);
            }
            for &(i, j) in &support[b] {
                out[(i, j)] = src[(i, j)];
                out[(j, i)] = src[(i, j)].conj();
            }
            slices.push(out);
        }
    }
    Ok(InverseCsdTensor::new(FrequencyTensor::new(naive.t(), slices)?, None))
}

/// `||(A - B) S||_F^2` over the masked columns.
pub fn cf_objective(
    naive_flat: &BlockFlattening,
    estimate_flat: &BlockFlattening,
    mask: &SelectionMask,
) -> Result<f64> {
    let (a, b) = (naive_flat.matrix(), estimate_flat.matrix());
    if a.shape() != b.shape() || mask.len() != a.ncols() {
        return Err(Error::shape("flattenings and mask must have matching shapes"));
    }
    Ok(mask
        .columns()
        .map(|c| a.column(c).iter().zip(b.column(c).iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>())
        .sum())
}
