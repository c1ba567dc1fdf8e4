//! Frequency-indexed Hermitian tensors and the views built on top of them.
//!
//! Tensors are stored frequency-major: one `N x N` complex slice per
//! frequency index `k = 0..M`, with `M = floor(T/2) + 1`. Fibers (the values
//! of one `(i, j)` entry across frequencies) are materialized on demand by
//! [`flatten_block`].
//!
//! Pairs `(i, j)` are vectorized column-major everywhere in the crate: the
//! entry `(i, j)` of an `N x N` slice lives at position `i + N * j` of its
//! vectorization, which is also the storage order of [`nalgebra::DMatrix`].

use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Column-major position of entry `(i, j)` in the vectorization of an `n x n` matrix.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    i + n * j
}

/// Number of retained frequencies for `t` samples.
#[inline]
pub fn num_frequencies(t: usize) -> usize {
    t / 2 + 1
}

/// Largest absolute entry.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `max |a - a^H|`, the quantity bounded by the Hermitian invariants.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(a: &CMatrix, rel_tol: f64) -> bool {
    hermitian_defect(a) <= rel_tol * max_abs(a).max(f64::MIN_POSITIVE)
}

/// `(A + A^H) / 2`.
pub fn hermitianize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// `N x T` real-valued samples of a multivariate time series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    data: DMatrix<f64>,
    sample_rate: Option<f64>,
}

impl TimeSeriesPanel {
    pub const MIN_SERIES: usize = 2;
    pub const MIN_SAMPLES: usize = 4;

    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < Self::MIN_SERIES || data.ncols() < Self::MIN_SAMPLES {
            return Err(Error::shape(format!(
                "a panel needs at least {} series and {} samples, got {}x{}",
                Self::MIN_SERIES,
                Self::MIN_SAMPLES,
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::shape("panel contains non-finite samples"));
        }
        Ok(Self { data, sample_rate: None })
    }

    /// Builds a panel from one `Vec` per series.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != t) {
            return Err(Error::shape("series have different lengths"));
        }
        Self::new(DMatrix::from_fn(n, t, |i, s| rows[i][s]))
    }

    pub fn with_sample_rate(mut self, hz: f64) -> Result<Self> {
        if !(hz > 0.0 && hz.is_finite()) {
            return Err(Error::param("sample rate must be positive"));
        }
        self.sample_rate = Some(hz);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn t(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn sample_rate(&self) -> Option<f64> {
        self.sample_rate
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    /// Subtracts the sample mean of every series.
    pub fn center(&self) -> TimeSeriesPanel {
        let mut data = self.data.clone();
        let t = data.ncols() as f64;
        for mut row in data.row_iter_mut() {
            let mean = row.iter().sum::<f64>() / t;
            row.iter_mut().for_each(|v| *v -= mean);
        }
        TimeSeriesPanel { data, sample_rate: self.sample_rate }
    }
}

/// `M` complex `N x N` slices indexed by the frequencies `nu_k = k / T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTensor {
    n: usize,
    t: usize,
    slices: Vec<CMatrix>,
}

impl FrequencyTensor {
    pub fn new(t: usize, slices: Vec<CMatrix>) -> Result<Self> {
        let m = num_frequencies(t);
        if slices.len() != m {
            return Err(Error::shape(format!(
                "T = {t} implies {m} slices, got {}",
                slices.len()
            )));
        }
        let n = slices[0].nrows();
        if n == 0 || slices.iter().any(|s| s.nrows() != n || s.ncols() != n) {
            return Err(Error::shape("slices must all be square with the same size"));
        }
        Ok(Self { n, t, slices })
    }

    /// Every slice set to the `n x n` identity.
    pub fn identity(n: usize, t: usize) -> Self {
        let m = num_frequencies(t);
        Self { n, t, slices: vec![CMatrix::identity(n, n); m] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn m(&self) -> usize {
        self.slices.len()
    }

    pub fn slices(&self) -> &[CMatrix] {
        &self.slices
    }

    pub fn slice(&self, k: usize) -> &CMatrix {
        &self.slices[k]
    }

    pub fn into_slices(self) -> Vec<CMatrix> {
        self.slices
    }

    pub fn map_slices(&self, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        Self { n: self.n, t: self.t, slices: self.slices.iter().map(f).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().all(|s| s.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    /// Largest relative Hermitian defect over all slices.
    pub fn max_hermitian_defect(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| hermitian_defect(s) / max_abs(s).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Estimated cross-spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct CsdTensor(pub FrequencyTensor);

impl std::ops::Deref for CsdTensor {
    type Target = FrequencyTensor;
    fn deref(&self) -> &FrequencyTensor {
        &self.0
    }
}

/// Inverse cross-spectral density.
///
/// `pd_floor` is `Some(eps)` when every slice is known to have minimum
/// eigenvalue at least `eps` (learned estimates); the naive inverse carries
/// `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseCsdTensor {
    pub tensor: FrequencyTensor,
    pub pd_floor: Option<f64>,
}

impl InverseCsdTensor {
    pub fn new(tensor: FrequencyTensor, pd_floor: Option<f64>) -> Self {
        Self { tensor, pd_floor }
    }
}

impl std::ops::Deref for InverseCsdTensor {
    type Target = FrequencyTensor;
    fn deref(&self) -> &FrequencyTensor {
        &self.tensor
    }
}

/// `K` contiguous frequency blocks covering `0..M`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyPartition {
    starts: Vec<usize>,
    m: usize,
}

impl FrequencyPartition {
    pub fn new(starts: Vec<usize>, m: usize) -> Result<Self> {
        if starts.first() != Some(&0) {
            return Err(Error::param("the first block must start at frequency 0"));
        }
        if starts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("block starts must be strictly increasing"));
        }
        if *starts.last().unwrap() > m.saturating_sub(1) {
            return Err(Error::param(format!("block start beyond the last frequency {}", m - 1)));
        }
        if starts.len() >= m {
            return Err(Error::param(format!(
                "need 0 < K < M, got K = {} with M = {m}",
                starts.len()
            )));
        }
        Ok(Self { starts, m })
    }

    /// `k` blocks of (almost) equal size; the remainder goes to the last block.
    pub fn equal(k: usize, m: usize) -> Result<Self> {
        if k == 0 || k >= m {
            return Err(Error::param(format!("need 0 < K < M, got K = {k} with M = {m}")));
        }
        let width = (m - 1) / k;
        Self::new((0..k).map(|b| b * width).collect(), m)
    }

    pub fn k(&self) -> usize {
        self.starts.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn block(&self, index: usize) -> Range<usize> {
        let end = self.starts.get(index + 1).copied().unwrap_or(self.m);
        self.starts[index]..end
    }

    pub fn blocks(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.k()).map(|b| self.block(b))
    }

    /// Index of the block that contains frequency `k`.
    pub fn block_of(&self, k: usize) -> usize {
        self.starts.partition_point(|&s| s <= k) - 1
    }

    pub fn check_block(&self, index: usize) -> Result<()> {
        if index < self.k() {
            Ok(())
        } else {
            Err(Error::BlockIndex { index, blocks: self.k() })
        }
    }
}

/// `|K_m| x N^2` matricization of one frequency block: column `i + N j` holds
/// the fiber of entry `(i, j)` restricted to the block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFlattening {
    n: usize,
    first_k: usize,
    data: CMatrix,
}

impl BlockFlattening {
    pub fn from_matrix(n: usize, first_k: usize, data: CMatrix) -> Result<Self> {
        if data.ncols() != n * n {
            return Err(Error::shape(format!("expected {} columns, got {}", n * n, data.ncols())));
        }
        Ok(Self { n, first_k, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn first_frequency(&self) -> usize {
        self.first_k
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn column_norm(&self, col: usize) -> f64 {
        self.data.column(col).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// The slices this flattening was built from, in frequency order.
    pub fn unflatten(&self) -> Vec<CMatrix> {
        let n = self.n;
        (0..self.rows())
            .map(|r| CMatrix::from_fn(n, n, |i, j| self.data[(r, pair_index(n, i, j))]))
            .collect()
    }
}

pub fn flatten_block(
    tensor: &FrequencyTensor,
    partition: &FrequencyPartition,
    index: usize,
) -> Result<BlockFlattening> {
    partition.check_block(index)?;
    if partition.m() != tensor.m() {
        return Err(Error::shape("partition and tensor disagree on the number of frequencies"));
    }
    let n = tensor.n();
    let block = partition.block(index);
    let data = CMatrix::from_fn(block.len(), n * n, |r, col| {
        tensor.slice(block.start + r)[(col % n, col / n)]
    });
    Ok(BlockFlattening { n, first_k: block.start, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Strictly lower-triangular pairs `i > j`.
    StrictLower,
    /// All pairs with `i != j`.
    OffDiagonal,
}

/// Boolean selector over the `N^2` column-major pair positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMask {
    kind: MaskKind,
    bits: Vec<bool>,
}

impl SelectionMask {
    pub fn new(kind: MaskKind, n: usize) -> Self {
        let bits = (0..n * n)
            .map(|col| {
                let (i, j) = (col % n, col / n);
                match kind {
                    MaskKind::StrictLower => i > j,
                    MaskKind::OffDiagonal => i != j,
                }
            })
            .collect();
        Self { kind, bits }
    }

    pub fn strict_lower(n: usize) -> Self {
        Self::new(MaskKind::StrictLower, n)
    }

    pub fn off_diagonal(n: usize) -> Self {
        Self::new(MaskKind::OffDiagonal, n)
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn contains(&self, col: usize) -> bool {
        self.bits[col]
    }

    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter_map(|(c, &b)| b.then_some(c))
    }
}

/// Zeroes every column outside the mask.
pub fn apply_mask(flat: &BlockFlattening, mask: &SelectionMask) -> Result<BlockFlattening> {
    if mask.len() != flat.data.ncols() {
        return Err(Error::shape(format!(
            "mask has {} positions but the flattening has {} columns",
            mask.len(),
            flat.data.ncols()
        )));
    }
    let mut data = flat.data.clone();
    for col in 0..mask.len() {
        if !mask.contains(col) {
            data.column_mut(col).fill(Complex64::new(0.0, 0.0));
        }
    }
    Ok(BlockFlattening { n: flat.n, first_k: flat.first_k, data })
}
