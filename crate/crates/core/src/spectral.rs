//! Cross-spectral density estimation and the quantities derived from it.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::{
    hermitianize, num_frequencies, CMatrix, CsdTensor, FrequencyTensor, InverseCsdTensor,
    TimeSeriesPanel,
};

/// Slices with a reciprocal condition number below this are refused by [`naive_inverse`].
pub const RCOND_GUARD: f64 = 1e-13;

pub fn center(panel: &TimeSeriesPanel) -> TimeSeriesPanel {
    panel.center()
}

/// Sample autocovariances `C_l` for `l = 0..T`; negative lags are transposes.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocovarianceSequence {
    t: usize,
    lags: Vec<DMatrix<f64>>,
}

impl AutocovarianceSequence {
    pub fn n(&self) -> usize {
        self.lags[0].nrows()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// `C_l` for any `|l| < T`.
    pub fn lag(&self, l: isize) -> DMatrix<f64> {
        if l >= 0 {
            self.lags[l as usize].clone()
        } else {
            self.lags[(-l) as usize].transpose()
        }
    }

    pub fn nonnegative_lags(&self) -> &[DMatrix<f64>] {
        &self.lags
    }
}

pub fn sample_autocovariance(panel: &TimeSeriesPanel) -> AutocovarianceSequence {
    autocovariance_of(panel.data()).expect("panels always have T >= 4")
}

/// Autocovariance of a raw `N x T` sample matrix, centered internally.
///
/// Cross-correlations are evaluated with a zero-padded FFT of length at
/// least `2T - 1`, so there is no wrap-around.
pub fn autocovariance_of(data: &DMatrix<f64>) -> Result<AutocovarianceSequence> {
    let (n, t) = data.shape();
    if t < 2 || n == 0 {
        return Err(Error::shape(format!("autocovariance needs T >= 2 and N >= 1, got N = {n}, T = {t}")));
    }
    let len = (2 * t - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);

    let spectra: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            let mean = data.row(i).sum() / t as f64;
            let mut buf = vec![Complex64::new(0.0, 0.0); len];
            for (s, b) in buf.iter_mut().take(t).enumerate() {
                b.re = data[(i, s)] - mean;
            }
            fwd.process(&mut buf);
            buf
        })
        .collect();

    let mut lags = vec![DMatrix::zeros(n, n); t];
    let scale = 1.0 / (len as f64 * t as f64);
    for i in 0..n {
        for j in 0..n {
            // sum_s y_i[s + l] y_j[s] is the inverse transform of Y_i conj(Y_j)
            let mut buf: Vec<Complex64> =
                spectra[i].iter().zip(&spectra[j]).map(|(a, b)| a * b.conj()).collect();
            inv.process(&mut buf);
            for (l, lag) in lags.iter_mut().enumerate() {
                lag[(i, j)] = buf[l].re * scale;
            }
        }
    }
    Ok(AutocovarianceSequence { t, lags })
}

/// `F_k = sum_{|l| < T} C_l e^{-i 2 pi k l / T}` for `k = 0..M`.
///
/// Lags are folded modulo `T` (`C_l + C_{l-T}`) so a single length-`T` FFT
/// per entry evaluates the sum exactly.
pub fn periodogram(acov: &AutocovarianceSequence) -> CsdTensor {
    let n = acov.n();
    let t = acov.t();
    let m = num_frequencies(t);
    let fft = FftPlanner::new().plan_fft_forward(t);
    let mut slices = vec![CMatrix::zeros(n, n); m];
    let lags = acov.nonnegative_lags();
    for i in 0..n {
        for j in 0..n {
            let mut buf: Vec<Complex64> = (0..t)
                .map(|l| {
                    let neg = if l == 0 { 0.0 } else { lags[t - l][(j, i)] };
                    Complex64::new(lags[l][(i, j)] + neg, 0.0)
                })
                .collect();
            fft.process(&mut buf);
            for (k, s) in slices.iter_mut().enumerate() {
                s[(i, j)] = buf[k];
            }
        }
    }
    CsdTensor(FrequencyTensor::new(t, slices).expect("slice count matches T"))
}

/// Periodogram straight from the samples: `F_k = Y(k) Y(k)^H / T` with `Y`
/// the DFT of the centered series. Equal to `periodogram(sample_autocovariance(panel))`.
pub fn panel_periodogram(panel: &TimeSeriesPanel) -> CsdTensor {
    let fft = FftPlanner::new().plan_fft_forward(panel.t());
    panel_periodogram_with(panel, &fft)
}

fn panel_periodogram_with(panel: &TimeSeriesPanel, fft: &Arc<dyn Fft<f64>>) -> CsdTensor {
    let (n, t) = (panel.n(), panel.t());
    let m = num_frequencies(t);
    let centered = panel.center();
    let y: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            let mut buf: Vec<Complex64> =
                centered.data().row(i).iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft.process(&mut buf);
            buf
        })
        .collect();
    let slices = (0..m)
        .map(|k| {
            let mut s = CMatrix::from_fn(n, n, |i, j| y[i][k] * y[j][k].conj() / t as f64);
            for i in 0..n {
                s[(i, i)].im = 0.0;
            }
            s
        })
        .collect();
    CsdTensor(FrequencyTensor::new(t, slices).expect("slice count matches T"))
}

/// Symmetric, nonnegative smoothing weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingWindow {
    half: usize,
    weights: Vec<f64>,
}

impl SmoothingWindow {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() % 2 == 0 {
            return Err(Error::param("window length must be odd"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param("window weights must be finite and nonnegative"));
        }
        let half = weights.len() / 2;
        if (0..half).any(|j| weights[j] != weights[weights.len() - 1 - j]) {
            return Err(Error::param("window weights must be symmetric"));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::param("window weights must sum to one"));
        }
        Ok(Self { half, weights })
    }

    pub fn half_size(&self) -> usize {
        self.half
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `w_j ∝ cos^2(pi j / (2 half + 2))` for `j = -half..=half`.
pub fn hanning_window(half: usize) -> SmoothingWindow {
    let raw: Vec<f64> = (-(half as isize)..=half as isize)
        .map(|j| (PI * j as f64 / (2.0 * half as f64 + 2.0)).cos().powi(2))
        .collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    // exact symmetry despite rounding in cos
    for j in 0..half {
        let avg = 0.5 * (weights[j] + weights[2 * half - j]);
        weights[j] = avg;
        weights[2 * half - j] = avg;
    }
    SmoothingWindow { half, weights }
}

/// Default half-width `floor(sqrt(T))`.
pub fn auto_half_width(t: usize) -> usize {
    (t as f64).sqrt().floor() as usize
}

/// Convolves every entry along the frequency axis.
///
/// Indices past either end are reflected about `k = 0` and `k = M - 1`; the
/// reflected slices are conjugated, since a real process has
/// `F_{-k} = conj(F_k)`.
pub fn smooth_periodogram(raw: &CsdTensor, window: &SmoothingWindow) -> Result<CsdTensor> {
    let m = raw.m();
    let half = window.half_size();
    if 2 * half + 1 > m {
        return Err(Error::param(format!(
            "window of length {} is longer than the {m} available frequencies",
            2 * half + 1
        )));
    }
    let last = (m - 1) as isize;
    let slices: Vec<CMatrix> = (0..m)
        .into_par_iter()
        .map(|k| {
            let mut acc = CMatrix::zeros(raw.n(), raw.n());
            for (offset, &w) in window.weights().iter().enumerate() {
                let idx = k as isize + offset as isize - half as isize;
                let (src, reflected) = if idx < 0 {
                    (-idx, true)
                } else if idx > last {
                    (2 * last - idx, true)
                } else {
                    (idx, false)
                };
                let s = raw.slice(src as usize);
                if reflected {
                    acc.zip_apply(s, |a, b| *a += b.conj() * w);
                } else {
                    acc.zip_apply(s, |a, b| *a += b * w);
                }
            }
            acc
        })
        .collect();
    Ok(CsdTensor(FrequencyTensor::new(raw.t(), slices)?))
}

/// Smoothed periodogram of a panel with a Hanning window of the given half-width.
pub fn estimate_csd(panel: &TimeSeriesPanel, half: usize) -> Result<CsdTensor> {
    smooth_periodogram(&panel_periodogram(panel), &hanning_window(half))
}

/// Mean of the smoothed periodograms of independent replicates.
pub fn estimate_csd_replicates(panels: &[TimeSeriesPanel], half: usize) -> Result<CsdTensor> {
    let first = panels.first().ok_or_else(|| Error::param("no panels supplied"))?;
    let (n, t) = (first.n(), first.t());
    if panels.iter().any(|p| p.n() != n || p.t() != t) {
        return Err(Error::shape("all replicates must share N and T"));
    }
    let fft = FftPlanner::new().plan_fft_forward(t);
    let window = hanning_window(half);
    let estimates = panels
        .par_iter()
        .map(|p| smooth_periodogram(&panel_periodogram_with(p, &fft), &window))
        .collect::<Result<Vec<_>>>()?;
    average(estimates.iter().map(|c| &c.0)).map(CsdTensor)
}

/// Slice-wise arithmetic mean of tensors with matching shapes.
pub fn average<'a>(tensors: impl IntoIterator<Item = &'a FrequencyTensor>) -> Result<FrequencyTensor> {
    let mut iter = tensors.into_iter();
    let first = iter.next().ok_or_else(|| Error::param("nothing to average"))?;
    let mut acc = first.slices().to_vec();
    let mut count = 1.0;
    for t in iter {
        if t.n() != first.n() || t.t() != first.t() {
            return Err(Error::shape("tensors to average must share N and T"));
        }
        for (a, s) in acc.iter_mut().zip(t.slices()) {
            *a += s;
        }
        count += 1.0;
    }
    acc.iter_mut().for_each(|a| *a /= Complex64::new(count, 0.0));
    FrequencyTensor::new(first.t(), acc)
}

fn inverse_with_rcond(a: &CMatrix) -> Option<(CMatrix, f64)> {
    let inv = a.clone().lu().try_inverse()?;
    let norm1 = |m: &CMatrix| {
        m.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
    };
    let rcond = 1.0 / (norm1(a) * norm1(&inv));
    Some((inv, rcond))
}

/// Slice-wise inverse, Hermitianized. Refuses near-singular slices.
pub fn naive_inverse(smoothed: &CsdTensor) -> Result<InverseCsdTensor> {
    let results: Vec<Result<CMatrix>> = smoothed
        .slices()
        .par_iter()
        .enumerate()
        .map(|(k, s)| match inverse_with_rcond(s) {
            Some((inv, rcond)) if rcond.is_finite() && rcond >= RCOND_GUARD => {
                Ok(hermitianize(&inv))
            }
            Some((_, rcond)) => Err(Error::SingularSlice { k, rcond: if rcond.is_finite() { rcond } else { 0.0 } }),
            None => Err(Error::SingularSlice { k, rcond: 0.0 }),
        })
        .collect();
    let slices = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(InverseCsdTensor::new(FrequencyTensor::new(smoothed.t(), slices)?, None))
}

/// `R_k = -D_k P_k D_k` with `D_k = diag(Re([P_k]_ii)^{-1/2})`.
pub fn partial_coherence(inv: &FrequencyTensor) -> Result<FrequencyTensor> {
    let n = inv.n();
    let mut slices = Vec::with_capacity(inv.m());
    for (k, p) in inv.slices().iter().enumerate() {
        let mut d = vec![0.0; n];
        for (i, di) in d.iter_mut().enumerate() {
            let value = p[(i, i)].re;
            if !(value > 0.0) {
                return Err(Error::NonPositiveDiagonal { i, k, value });
            }
            *di = value.sqrt().recip();
        }
        slices.push(CMatrix::from_fn(n, n, |i, j| -p[(i, j)] * (d[i] * d[j])));
    }
    FrequencyTensor::new(inv.t(), slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_hermitian, random_hpd};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_data(seed: u64, n: usize, t: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, t, |_, _| rng.sample::<f64, _>(StandardNormal) + 0.3)
    }

    /// The defining sums, evaluated term by term.
    fn direct_acov(data: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
        let (n, t) = data.shape();
        let means: Vec<f64> = (0..n).map(|i| data.row(i).sum() / t as f64).collect();
        DMatrix::from_fn(n, n, |i, j| {
            (0..t - l)
                .map(|s| (data[(i, s + l)] - means[i]) * (data[(j, s)] - means[j]))
                .sum::<f64>()
                / t as f64
        })
    }

    fn direct_periodogram(data: &DMatrix<f64>) -> Vec<CMatrix> {
        let (n, t) = data.shape();
        let acov: Vec<DMatrix<f64>> = (0..t).map(|l| direct_acov(data, l)).collect();
        (0..t / 2 + 1)
            .map(|k| {
                let mut s = CMatrix::zeros(n, n);
                for l in -(t as isize - 1)..t as isize {
                    let cl = if l >= 0 { acov[l as usize].clone() } else { acov[(-l) as usize].transpose() };
                    let phase = Complex64::from_polar(1.0, -2.0 * PI * k as f64 * l as f64 / t as f64);
                    s += cl.map(|v| c(v, 0.0)) * phase;
                }
                s
            })
            .collect()
    }

    #[test]
    fn two_sample_autocovariance() {
        let data = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let acov = autocovariance_of(&data).unwrap();
        assert!((acov.lag(0)[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((acov.lag(1)[(0, 0)] + 0.5).abs() < 1e-15);
        assert!((acov.lag(-1)[(0, 0)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn too_short_for_autocovariance() {
        assert!(autocovariance_of(&DMatrix::from_row_slice(1, 1, &[1.0])).is_err());
    }

    #[test]
    fn autocovariance_matches_direct_sum() {
        for (seed, n, t) in [(1, 2, 4), (2, 3, 17), (3, 4, 64)] {
            let data = random_data(seed, n, t);
            let acov = autocovariance_of(&data).unwrap();
            for l in 0..t {
                let want = direct_acov(&data, l);
                assert!((acov.lag(l as isize) - &want).camax() < 1e-12, "lag {l}");
                assert_eq!(acov.lag(-(l as isize)), acov.lag(l as isize).transpose());
            }
        }
    }

    #[test]
    fn white_noise_autocovariance_decays() {
        let data = random_data(9, 3, 4096);
        let acov = autocovariance_of(&data).unwrap();
        let c0 = acov.lag(0).camax();
        for l in 1..10 {
            assert!(acov.lag(l).camax() < 0.1 * c0);
        }
    }

    #[test]
    fn delta_autocovariance_gives_flat_spectrum() {
        let acov = AutocovarianceSequence {
            t: 2,
            lags: vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 0.0)],
        };
        let f = periodogram(&acov);
        assert_eq!(f.m(), 2);
        for k in 0..2 {
            assert!((f.slice(k)[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn cosine_concentrates_at_its_frequency() {
        let t = 64;
        let data = DMatrix::from_fn(1, t, |_, s| (2.0 * PI * s as f64 / 4.0).cos());
        let f = periodogram(&autocovariance_of(&data).unwrap());
        // |Y(T/4)|^2 / T = (T/2)^2 / T
        assert!((f.slice(t / 4)[(0, 0)].re - t as f64 / 4.0).abs() < 1e-9);
        for k in (0..f.m()).filter(|&k| k != t / 4) {
            assert!(f.slice(k)[(0, 0)].norm() < 1e-9, "leak at {k}");
        }
    }

    #[test]
    fn periodogram_matches_direct_dft_of_autocovariance() {
        for (seed, n, t) in [(4, 2, 8), (5, 3, 31), (6, 3, 64)] {
            let data = random_data(seed, n, t);
            let want = direct_periodogram(&data);
            let via_acov = periodogram(&autocovariance_of(&data).unwrap());
            let panel = TimeSeriesPanel::new(data.clone()).unwrap();
            let via_panel = panel_periodogram(&panel);
            for k in 0..want.len() {
                assert!((via_acov.slice(k) - &want[k]).camax() < 1e-9, "acov route, k = {k}");
                assert!((via_panel.slice(k) - &want[k]).camax() < 1e-9, "panel route, k = {k}");
            }
            assert!(via_acov.max_hermitian_defect() <= 1e-10);
            assert!(via_panel.max_hermitian_defect() <= 1e-10);
        }
    }

    #[test]
    fn centering_examples() {
        let data = DMatrix::from_row_slice(2, 4, &[5.0, 5.0, 5.0, 5.0, 1.0, 2.0, 3.0, 6.0]);
        let centered = center(&TimeSeriesPanel::new(data).unwrap());
        assert_eq!(centered.row(0), vec![0.0; 4]);
        assert_eq!(centered.row(1), vec![-2.0, -1.0, 0.0, 3.0]);
        let again = center(&centered);
        assert!((again.data() - centered.data()).camax() <= 1e-15);
    }

    fn scalar_tensor(values: &[f64]) -> CsdTensor {
        let t = 2 * (values.len() - 1);
        let slices = values.iter().map(|&v| CMatrix::from_element(1, 1, c(v, 0.0))).collect();
        CsdTensor(FrequencyTensor::new(t, slices).unwrap())
    }

    #[test]
    fn hand_convolution_of_impulse() {
        let raw = scalar_tensor(&[0.0, 0.0, 1.0, 0.0, 0.0]);
        let w = SmoothingWindow::new(vec![0.25, 0.5, 0.25]).unwrap();
        let out = smooth_periodogram(&raw, &w).unwrap();
        let got: Vec<f64> = out.slices().iter().map(|s| s[(0, 0)].re).collect();
        assert_eq!(got, vec![0.0, 0.25, 0.5, 0.25, 0.0]);
    }

    #[test]
    fn reflection_at_the_ends() {
        let raw = scalar_tensor(&[1.0, 0.0, 0.0, 0.0, 2.0]);
        let w = SmoothingWindow::new(vec![0.25, 0.5, 0.25]).unwrap();
        let out = smooth_periodogram(&raw, &w).unwrap();
        let got: Vec<f64> = out.slices().iter().map(|s| s[(0, 0)].re).collect();
        assert_eq!(got, vec![0.5, 0.25, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn zero_half_width_and_constants_are_fixed_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let slices: Vec<CMatrix> = (0..9).map(|_| random_hermitian(&mut rng, 3)).collect();
        let raw = CsdTensor(FrequencyTensor::new(16, slices).unwrap());
        assert_eq!(smooth_periodogram(&raw, &hanning_window(0)).unwrap(), raw);

        let s = random_hpd(&mut rng, 3).map(|z| c(z.re, 0.0));
        let constant = CsdTensor(FrequencyTensor::new(16, vec![s.clone(); 9]).unwrap());
        let out = smooth_periodogram(&constant, &hanning_window(3)).unwrap();
        for k in 0..9 {
            assert!((out.slice(k) - &s).camax() < 1e-12);
        }
    }

    #[test]
    fn oversized_window_is_rejected() {
        let raw = scalar_tensor(&[1.0, 2.0, 3.0]);
        assert!(smooth_periodogram(&raw, &hanning_window(2)).is_err());
        assert!(smooth_periodogram(&raw, &hanning_window(1)).is_ok());
    }

    #[test]
    fn hanning_examples() {
        assert_eq!(hanning_window(0).weights(), &[1.0]);
        let w = hanning_window(1);
        assert_eq!(w.weights().len(), 3);
        assert!(w.weights().iter().all(|&v| v > 0.0));
        assert!(w.weights()[1] > w.weights()[0]);
        // cos^2(pi/4) = 1/2 against 1 at the centre
        assert!((w.weights()[0] - 0.25).abs() < 1e-15);
        assert_eq!(auto_half_width(1024), 32);
        assert_eq!(auto_half_width(1023), 31);
    }

    proptest! {
        #[test]
        fn hanning_is_a_valid_window(half in 0usize..200) {
            let w = hanning_window(half);
            prop_assert_eq!(w.weights().len(), 2 * half + 1);
            prop_assert!((w.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(SmoothingWindow::new(w.weights().to_vec()).is_ok());
        }

        #[test]
        fn smoothing_keeps_slices_hermitian(seed in 0u64..500, half in 0usize..4) {
            let data = random_data(seed, 3, 32);
            let raw = panel_periodogram(&TimeSeriesPanel::new(data).unwrap());
            let out = smooth_periodogram(&raw, &hanning_window(half)).unwrap();
            prop_assert!(out.max_hermitian_defect() <= 1e-10);
        }

        #[test]
        fn coherence_ignores_diagonal_rescaling(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_hpd(&mut rng, 4);
            let d: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..10.0)).collect();
            let scaled = CMatrix::from_fn(4, 4, |i, j| p[(i, j)] * (d[i] * d[j]));
            let a = partial_coherence(&FrequencyTensor::new(0, vec![p]).unwrap()).unwrap();
            let b = partial_coherence(&FrequencyTensor::new(0, vec![scaled]).unwrap()).unwrap();
            prop_assert!((a.slice(0) - b.slice(0)).camax() <= 1e-12);
            for i in 0..4 {
                for j in 0..4 {
                    prop_assert!(a.slice(0)[(i, j)].norm() <= 1.0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn inverse_examples() {
        let id = CsdTensor(FrequencyTensor::identity(3, 6));
        assert_eq!(naive_inverse(&id).unwrap().slices(), id.slices());

        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(2.0, 0.0), c(4.0, 0.0)]));
        let inv = naive_inverse(&CsdTensor(FrequencyTensor::new(0, vec![d]).unwrap())).unwrap();
        assert!((inv.slice(0)[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((inv.slice(0)[(1, 1)] - c(0.25, 0.0)).norm() < 1e-15);
        assert!(inv.pd_floor.is_none());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let slices: Vec<CMatrix> = (0..5).map(|_| random_hpd(&mut rng, 5)).collect();
        let f = CsdTensor(FrequencyTensor::new(8, slices).unwrap());
        let inv = naive_inverse(&f).unwrap();
        for k in 0..5 {
            let resid = f.slice(k) * inv.slice(k) - CMatrix::identity(5, 5);
            assert!(resid.camax() <= 1e-8);
            assert_eq!(crate::tensor::hermitian_defect(inv.slice(k)), 0.0);
        }
    }

    #[test]
    fn singular_slice_is_named() {
        let good = CMatrix::identity(2, 2);
        let bad = CMatrix::from_element(2, 2, c(1.0, 0.0));
        let f = CsdTensor(FrequencyTensor::new(4, vec![good.clone(), bad, good]).unwrap());
        match naive_inverse(&f) {
            Err(Error::SingularSlice { k, .. }) => assert_eq!(k, 1),
            other => panic!("expected a singular slice error, got {other:?}"),
        }
    }

    #[test]
    fn coherence_examples() {
        let id = FrequencyTensor::identity(3, 4);
        for s in partial_coherence(&id).unwrap().slices() {
            assert_eq!(s, &(-CMatrix::identity(3, 3)));
        }
        for (diag, off) in [(1.0, 0.5), (4.0, 2.0)] {
            let p = CMatrix::from_row_slice(2, 2, &[c(diag, 0.0), c(off, 0.0), c(off, 0.0), c(diag, 0.0)]);
            let r = partial_coherence(&FrequencyTensor::new(0, vec![p]).unwrap()).unwrap();
            assert!((r.slice(0)[(0, 1)] - c(-0.5, 0.0)).norm() < 1e-15);
            assert!((r.slice(0)[(1, 1)] - c(-1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn nonpositive_diagonal_is_named() {
        let ok = CMatrix::identity(2, 2);
        let mut bad = CMatrix::identity(2, 2);
        bad[(1, 1)] = c(-0.5, 0.0);
        let inv = FrequencyTensor::new(2, vec![ok, bad]).unwrap();
        match partial_coherence(&inv) {
            Err(Error::NonPositiveDiagonal { i, k, .. }) => assert_eq!((i, k), (1, 1)),
            other => panic!("expected a diagonal error, got {other:?}"),
        }
    }

    #[test]
    fn replicate_average_is_the_mean() {
        let panels: Vec<TimeSeriesPanel> =
            (0..3).map(|s| TimeSeriesPanel::new(random_data(s, 2, 32)).unwrap()).collect();
        let avg = estimate_csd_replicates(&panels, 2).unwrap();
        let mut want = estimate_csd(&panels[0], 2).unwrap().0.into_slices();
        for p in &panels[1..] {
            for (w, s) in want.iter_mut().zip(estimate_csd(p, 2).unwrap().slices()) {
                *w += s;
            }
        }
        for (k, w) in want.iter().enumerate() {
            assert!((avg.slice(k) - w / c(3.0, 0.0)).camax() < 1e-12);
        }
    }
}
