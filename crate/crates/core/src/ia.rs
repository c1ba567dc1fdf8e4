//! Iterative learner: inexact successive convex approximation where every
//! surrogate gets a single ADMM sweep.
//!
//! Every per-frequency vector of length `N^2` is kept as an `N x N` matrix,
//! whose column-major storage is exactly its vectorization. In that form
//! `(I ⊗ F) vec(P) = vec(F P)`, `(P^T ⊗ I) vec(F) = vec(F P)`, and
//! `S2` zeroes the diagonal.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::prox::{
    block_soft_threshold, project_hermitian_pd, prox_linf, Gamma1Factor, Gamma1Params,
    Gamma2Spectral,
};
use crate::tensor::{hermitianize, CMatrix, CsdTensor, FrequencyPartition, FrequencyTensor, InverseCsdTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepsizeRule {
    /// `(xi1, xi2) = (ln t, t)`
    LogLinear,
    /// `(xi1, xi2) = (ln t, sqrt t)`
    LogSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    Identity,
    Inverse,
}

/// Order in which frequencies are visited inside a phase. Results do not
/// depend on it; the option exists so that this can be checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepOrder {
    Forward,
    Reverse,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IAConfig {
    pub lambda: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub sigma: f64,
    pub omega: f64,
    pub theta: f64,
    pub rho: f64,
    pub delta: f64,
    pub stepsize: StepsizeRule,
    pub c1: f64,
    pub c2: f64,
    pub tol_abs_primal: f64,
    pub tol_rel_primal: f64,
    pub tol_abs_dual: f64,
    pub tol_rel_dual: f64,
    pub max_iters: usize,
    pub init: Init,
    pub order: SweepOrder,
}

impl Default for IAConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            eta: 0.01,
            epsilon: 1e-8,
            tau: 1.0,
            sigma: 1.0,
            omega: 1.0,
            theta: 1.0,
            rho: 1.0,
            delta: 1.0,
            stepsize: StepsizeRule::LogLinear,
            c1: 0.5,
            c2: 0.99,
            tol_abs_primal: 5e-4,
            tol_rel_primal: 5e-4,
            tol_abs_dual: 5e-4,
            tol_rel_dual: 5e-4,
            max_iters: 2000,
            init: Init::Identity,
            order: SweepOrder::Parallel,
        }
    }
}

impl IAConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta", self.eta),
            ("epsilon", self.epsilon),
            ("tau", self.tau),
            ("sigma", self.sigma),
            ("omega", self.omega),
            ("theta", self.theta),
            ("rho", self.rho),
            ("delta", self.delta),
            ("tol_abs_primal", self.tol_abs_primal),
            ("tol_rel_primal", self.tol_rel_primal),
            ("tol_abs_dual", self.tol_abs_dual),
            ("tol_rel_dual", self.tol_rel_dual),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(0.0 < self.c1 && self.c1 <= self.c2 && self.c2 < 1.0) {
            return Err(Error::param(format!(
                "need 0 < c1 <= c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// `xi^t = (xi^{t-1} + xi1(t)^c1) / (1 + c2 xi2(t))`, natural log in `xi1`.
pub fn stepsize(t: usize, prev: f64, rule: StepsizeRule, c1: f64, c2: f64) -> f64 {
    assert!(t >= 1, "the stepsize recursion starts at t = 1");
    let tf = t as f64;
    let xi1 = tf.ln();
    let xi2 = match rule {
        StepsizeRule::LogLinear => tf,
        StepsizeRule::LogSqrt => tf.sqrt(),
    };
    // With the sqrt schedule and a small c2 the recursion can overshoot 1;
    // a step past 1 would extrapolate, so it is capped.
    ((prev + xi1.powf(c1)) / (1.0 + c2 * xi2)).min(1.0)
}

/// Variables attached to one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVars {
    pub f: CMatrix,
    pub p: CMatrix,
    pub x: CMatrix,
    pub w: CMatrix,
    pub u: CMatrix,
    pub l: CMatrix,
    pub mu: CMatrix,
    pub om: CMatrix,
    pub al: CMatrix,
    pub de: CMatrix,
    /// Frequency-`k` rows of the block variables `v` and `phi`.
    pub v: CMatrix,
    pub phi: CMatrix,
    pub beta: f64,
}

impl FrequencyVars {
    fn is_finite(&self) -> Option<&'static str> {
        let fields: [(&'static str, &CMatrix); 12] = [
            ("f", &self.f),
            ("p", &self.p),
            ("x", &self.x),
            ("w", &self.w),
            ("u", &self.u),
            ("l", &self.l),
            ("mu", &self.mu),
            ("omega_bar", &self.om),
            ("alpha_bar", &self.al),
            ("delta_bar", &self.de),
            ("v", &self.v),
            ("phi", &self.phi),
        ];
        for (name, m) in fields {
            if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Some(name);
            }
        }
        if !self.beta.is_finite() {
            return Some("beta");
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IAState {
    /// Completed sweeps.
    pub t: usize,
    /// Stepsize used by the next sweep.
    pub xi: f64,
    pub vars: Vec<FrequencyVars>,
}

/// Residual norms, their thresholds, and the verdict for one sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ResidualReport {
    pub t: usize,
    pub xi: f64,
    /// `||Pi_1||, ||Pi_2||, ||p_3||, ||Pi_4||, ||Pi_5||, ||Pi_6||`
    pub primal: [f64; 6],
    /// `||Delta_1||, ||Delta_2||`
    pub dual: [f64; 2],
    /// Right-hand sides, in the same order as `primal` then `dual`.
    pub thresholds: [f64; 8],
    pub converged: bool,
    /// `max_k ||f_k - f~_k||^2 - eta`; nonpositive when the trust constraint holds.
    pub max_trust_gap: f64,
}

impl ResidualReport {
    pub fn residuals(&self) -> [f64; 8] {
        let [a, b, c, d, e, f] = self.primal;
        let [g, h] = self.dual;
        [a, b, c, d, e, f, g, h]
    }

    pub fn satisfied(&self) -> [bool; 8] {
        let r = self.residuals();
        std::array::from_fn(|i| r[i] < self.thresholds[i])
    }
}

/// Aggregate norms entering the stopping rules (the `T` quantities).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualNorms {
    pub primal: [f64; 6],
    pub dual: [f64; 2],
    /// `||T_1||..||T_4||`, `||t_5||`, `||T_6||..||T_16||`
    pub t: [f64; 16],
}

/// Applies the eight threshold formulas.
pub fn thresholds(norms: &ResidualNorms, n: usize, m: usize, cfg: &IAConfig) -> [f64; 8] {
    let nf = n as f64;
    let mf = m as f64;
    let abs_p = nf * mf.sqrt() * cfg.tol_abs_primal;
    let abs_d = nf * mf.sqrt() * cfg.tol_abs_dual;
    let rp = cfg.tol_rel_primal;
    let rd = cfg.tol_rel_dual;
    let t = |i: usize| norms.t[i - 1];
    let floor = (mf * nf).sqrt();
    [
        abs_p + rp * t(1).max(t(2)).max(floor),
        abs_p + rp * t(3).max(t(4)).max(floor),
        abs_p + rp * t(5).max(cfg.eta * mf.sqrt()),
        abs_p + rp * t(6).max(t(7)),
        abs_p + rp * t(8).max(t(9)),
        abs_p + rp * t(10).max(t(11)),
        abs_d + rd * (cfg.omega * t(12)).max(cfg.sigma * t(13)).max(cfg.theta * t(14)),
        abs_d + 0.5 * rd * (cfg.delta * t(15)).max(cfg.rho * t(16)),
    ]
}

pub fn report_from_norms(
    norms: &ResidualNorms,
    n: usize,
    m: usize,
    cfg: &IAConfig,
    t: usize,
    xi: f64,
    max_trust_gap: f64,
) -> ResidualReport {
    let thresholds = thresholds(norms, n, m, cfg);
    let mut report = ResidualReport {
        t,
        xi,
        primal: norms.primal,
        dual: norms.dual,
        thresholds,
        converged: false,
        max_trust_gap,
    };
    report.converged = report.satisfied().iter().all(|&b| b);
    report
}

fn zero_diag(a: &CMatrix) -> CMatrix {
    let mut out = a.clone();
    out.fill_diagonal(Complex64::new(0.0, 0.0));
    out
}

fn sq(a: &CMatrix) -> f64 {
    a.norm_squared()
}

/// The fixed data of one learning problem.
pub struct IAProblem {
    ftilde: Vec<CMatrix>,
    partition: FrequencyPartition,
    config: IAConfig,
    n: usize,
    t: usize,
}

impl IAProblem {
    pub fn new(smoothed: &CsdTensor, partition: &FrequencyPartition, config: &IAConfig) -> Result<Self> {
        config.validate()?;
        if !smoothed.is_finite() {
            return Err(Error::NonFinite);
        }
        if partition.m() != smoothed.m() {
            return Err(Error::shape("partition and tensor disagree on the number of frequencies"));
        }
        Ok(Self {
            ftilde: smoothed.slices().to_vec(),
            partition: partition.clone(),
            config: config.clone(),
            n: smoothed.n(),
            t: smoothed.t(),
        })
    }

    pub fn config(&self) -> &IAConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.ftilde.len()
    }

    pub fn ftilde(&self, k: usize) -> &CMatrix {
        &self.ftilde[k]
    }

    fn identity(&self) -> CMatrix {
        CMatrix::identity(self.n, self.n)
    }

    pub fn init(&self) -> Result<IAState> {
        let n = self.n;
        let id = self.identity();
        let zero = CMatrix::zeros(n, n);
        let vars = self
            .ftilde
            .iter()
            .enumerate()
            .map(|(k, ft)| {
                let p = match self.config.init {
                    Init::Identity => id.clone(),
                    Init::Inverse => {
                        let inv = ft
                            .clone()
                            .try_inverse()
                            .ok_or(Error::SingularSlice { k, rcond: 0.0 })?;
                        hermitianize(&inv)
                    }
                };
                let x = ft * &p - &id;
                Ok(FrequencyVars {
                    f: ft.clone(),
                    x: x.clone(),
                    u: x,
                    w: p.clone(),
                    l: ft.clone(),
                    v: zero_diag(&p),
                    p,
                    mu: zero.clone(),
                    om: zero.clone(),
                    al: zero.clone(),
                    de: zero.clone(),
                    phi: zero.clone(),
                    beta: 0.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IAState { t: 0, xi: 1.0, vars })
    }

    /// Smoothed p-update for frequency `k`.
    pub fn update_p(&self, state: &IAState, k: usize) -> Result<CMatrix> {
        let c = &self.config;
        let s = &state.vars[k];
        let factor = Gamma1Factor::new(
            &s.f,
            Gamma1Params { tau: c.tau, omega: c.omega, sigma: c.sigma, theta: c.theta },
        )?;
        let rhs = s.p.scale(c.tau)
            + (&s.w - &s.om).scale(c.omega)
            + (s.f.adjoint() * (self.identity() + &s.x - &s.mu)).scale(c.sigma)
            + zero_diag(&(&s.v - &s.phi)).scale(c.theta);
        let solved = factor.solve(rhs.as_slice());
        let p_new = CMatrix::from_column_slice(self.n, self.n, &solved);
        Ok(&s.p + (p_new - &s.p).scale(state.xi))
    }

    pub fn update_x(&self, state: &IAState, k: usize, p_next: &CMatrix) -> CMatrix {
        let s = &state.vars[k];
        let arg = &s.f * p_next - self.identity() + &s.mu;
        let out = prox_linf(arg.as_slice(), 1.0 / self.config.sigma);
        CMatrix::from_column_slice(self.n, self.n, &out)
    }

    pub fn update_w(&self, state: &IAState, k: usize, p_next: &CMatrix) -> Result<CMatrix> {
        project_hermitian_pd(&(p_next + &state.vars[k].om), self.config.epsilon)
    }

    /// Smoothed f-update for frequency `k` and the multiplier of the trust constraint.
    pub fn update_f(&self, state: &IAState, k: usize) -> (CMatrix, f64) {
        let c = &self.config;
        let s = &state.vars[k];
        let ft = &self.ftilde[k];
        let gamma = Gamma2Spectral::new(&s.p, c.rho);
        let base = s.f.scale(0.5 * c.tau)
            + (&s.l - &s.de).scale(0.5 * c.delta)
            + ((self.identity() + &s.u - &s.al) * s.p.adjoint()).scale(0.5 * c.rho);
        // Work in the eigenbasis of P P^H, where Gamma2 is diagonal and the
        // trust distance is preserved.
        let a = gamma.rotate(base.as_slice());
        let b = gamma.rotate(ft.as_slice());
        let shift0 = 0.5 * c.tau + 0.5 * c.delta;
        let solve = |beta: f64| -> CMatrix {
            gamma.solve_rotated_raw(&(&a + b.scale(beta)), shift0 + beta)
        };
        let gap = |y: &CMatrix| (y - &b).norm_squared();
        let eta = c.eta;

        let y0 = solve(0.0);
        let (y, beta) = if gap(&y0) <= eta {
            (y0, 0.0)
        } else {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut y_hi = solve(hi);
            let mut doublings = 0;
            while gap(&y_hi) > eta {
                lo = hi;
                hi *= 2.0;
                y_hi = solve(hi);
                doublings += 1;
                assert!(doublings < 2000, "trust multiplier bracket did not close");
            }
            loop {
                let mid = 0.5 * (lo + hi);
                if hi - lo < 1e-12 || mid <= lo || mid >= hi {
                    break (y_hi, hi);
                }
                let y_mid = solve(mid);
                let g = gap(&y_mid);
                if (g - eta).abs() <= 1e-8 * eta {
                    if g <= eta {
                        break (y_mid, mid);
                    }
                    // within tolerance but on the infeasible side; keep bisecting toward hi
                }
                if g > eta {
                    lo = mid;
                } else {
                    hi = mid;
                    y_hi = y_mid;
                }
            }
        };
        let f_new = gamma.unrotate(&y);
        (&s.f + (f_new - &s.f).scale(state.xi), beta)
    }

    pub fn update_u(&self, state: &IAState, k: usize, f_next: &CMatrix) -> CMatrix {
        let s = &state.vars[k];
        let arg = f_next * &s.p - self.identity() + &s.al;
        let out = prox_linf(arg.as_slice(), 1.0 / self.config.rho);
        CMatrix::from_column_slice(self.n, self.n, &out)
    }

    pub fn update_l(&self, state: &IAState, k: usize, f_next: &CMatrix) -> Result<CMatrix> {
        project_hermitian_pd(&(f_next + &state.vars[k].de), self.config.epsilon)
    }

    /// Block soft-thresholding of every off-diagonal fiber of block `m`;
    /// returns the frequency-`k` rows of the new `v` for `k` in the block.
    pub fn update_v(&self, state: &IAState, block: usize, p_next: &[CMatrix]) -> Vec<CMatrix> {
        let n = self.n;
        let range = self.partition.block(block);
        let lam = self.config.lambda / self.config.theta;
        let mut out = vec![CMatrix::zeros(n, n); range.len()];
        for j in 0..n {
            for i in (0..n).filter(|&i| i != j) {
                let z: Vec<Complex64> =
                    range.clone().map(|k| p_next[k][(i, j)] + state.vars[k].phi[(i, j)]).collect();
                let shrunk = if lam > 0.0 { block_soft_threshold(&z, lam) } else { z };
                for (r, val) in shrunk.into_iter().enumerate() {
                    out[r][(i, j)] = val;
                }
            }
        }
        out
    }

    /// Scaled dual ascent for one frequency given its new primal and
    /// splitting values. `phi` is left alone; it waits for the block step.
    pub fn update_duals(&self, old: &FrequencyVars, new: &mut FrequencyVars) {
        let id = self.identity();
        new.mu = &old.mu + (&old.f * &new.p - &id - &new.x);
        new.om = &old.om + (&new.p - &new.w);
        new.al = &old.al + (&new.f * &old.p - &id - &new.u);
        new.de = &old.de + (&new.f - &new.l);
    }

    /// Everything except the block variables, for one frequency.
    fn frequency_step(&self, state: &IAState, k: usize) -> Result<FrequencyVars> {
        let old = &state.vars[k];
        let p = self.update_p(state, k)?;
        let x = self.update_x(state, k, &p);
        let w = self.update_w(state, k, &p)?;
        let (f, beta) = self.update_f(state, k);
        let u = self.update_u(state, k, &f);
        let l = self.update_l(state, k, &f)?;
        let mut new = FrequencyVars { f, p, x, w, u, l, beta, ..old.clone() };
        self.update_duals(old, &mut new);
        Ok(new)
    }

    /// One full sweep; does not touch `t` or `xi`.
    pub fn sweep(&self, state: &IAState) -> Result<IAState> {
        let m = self.m();
        let step = |k: usize| self.frequency_step(state, k);
        let mut vars: Vec<FrequencyVars> = match self.config.order {
            SweepOrder::Forward => (0..m).map(step).collect::<Result<_>>()?,
            SweepOrder::Reverse => {
                let mut out = (0..m).rev().map(step).collect::<Result<Vec<_>>>()?;
                out.reverse();
                out
            }
            SweepOrder::Parallel => (0..m).into_par_iter().map(step).collect::<Result<_>>()?,
        };

        let p_next: Vec<CMatrix> = vars.iter().map(|v| v.p.clone()).collect();
        let blocks: Vec<usize> = match self.config.order {
            SweepOrder::Reverse => (0..self.partition.k()).rev().collect(),
            _ => (0..self.partition.k()).collect(),
        };
        let new_v: Vec<(usize, Vec<CMatrix>)> = match self.config.order {
            SweepOrder::Parallel => blocks
                .par_iter()
                .map(|&b| (b, self.update_v(state, b, &p_next)))
                .collect(),
            _ => blocks.iter().map(|&b| (b, self.update_v(state, b, &p_next))).collect(),
        };
        for (b, rows) in new_v {
            let start = self.partition.block(b).start;
            for (r, v) in rows.into_iter().enumerate() {
                vars[start + r].v = v;
            }
        }
        for (k, var) in vars.iter_mut().enumerate() {
            var.phi = &state.vars[k].phi + (zero_diag(&var.p) - &var.v);
        }
        Ok(IAState { t: state.t, xi: state.xi, vars })
    }

    /// Residuals of the sweep that took `prev` to `next`.
    pub fn residual_norms(&self, prev: &IAState, next: &IAState) -> (ResidualNorms, f64) {
        let c = &self.config;
        let id = self.identity();
        let mut acc = ResidualNorms::default();
        let mut primal_sq = [0.0; 6];
        let mut dual_sq = [0.0; 2];
        let mut t_sq = [0.0; 16];
        let mut worst = f64::NEG_INFINITY;
        for (k, (o, s)) in prev.vars.iter().zip(&next.vars).enumerate() {
            let fp = &o.f * &s.p;
            let pf = &s.f * &o.p;
            let trust = sq(&(&s.f - &self.ftilde[k]));
            worst = worst.max(trust - c.eta);
            let sp = zero_diag(&s.p);
            primal_sq[0] += sq(&(&fp - &id - &s.x));
            primal_sq[1] += sq(&(&pf - &id - &s.u));
            primal_sq[2] += (trust - c.eta).max(0.0).powi(2);
            primal_sq[3] += sq(&(&sp - &s.v));
            primal_sq[4] += sq(&(&s.p - &s.w));
            primal_sq[5] += sq(&(&s.f - &s.l));

            let d1 = (&s.w - &o.w).scale(c.omega)
                + (o.f.adjoint() * (&s.x - &o.x)).scale(c.sigma)
                + zero_diag(&(&s.v - &o.v)).scale(c.theta);
            let d2 = (&s.l - &o.l).scale(0.5 * c.delta)
                + ((&s.u - &o.u) * o.p.adjoint()).scale(0.5 * c.rho);
            dual_sq[0] += sq(&d1);
            dual_sq[1] += sq(&d2);

            let terms = [
                sq(&fp),
                sq(&s.x),
                sq(&pf),
                sq(&s.u),
                trust,
                sq(&sp),
                sq(&s.v),
                sq(&s.p),
                sq(&s.w),
                sq(&s.f),
                sq(&s.l),
                sq(&s.om),
                sq(&(o.f.adjoint() * &s.mu)),
                sq(&zero_diag(&s.phi)),
                sq(&s.de),
                sq(&(&s.al * o.p.adjoint())),
            ];
            for (a, b) in t_sq.iter_mut().zip(terms) {
                *a += b;
            }
        }
        acc.primal = primal_sq.map(f64::sqrt);
        acc.dual = dual_sq.map(f64::sqrt);
        acc.t = t_sq.map(f64::sqrt);
        (acc, worst)
    }

    pub fn residual_report(&self, prev: &IAState, next: &IAState) -> ResidualReport {
        let (norms, worst) = self.residual_norms(prev, next);
        report_from_norms(&norms, self.n, self.m(), &self.config, prev.t + 1, prev.xi, worst)
    }

    /// One sweep, its report, and the stepsize advance.
    pub fn step(&self, state: &IAState) -> Result<(IAState, ResidualReport)> {
        let mut next = self.sweep(state)?;
        let t = state.t + 1;
        for v in &next.vars {
            if let Some(name) = v.is_finite() {
                return Err(Error::Diverged { variable: name, iteration: t });
            }
        }
        let report = self.residual_report(state, &next);
        next.t = t;
        next.xi = stepsize(t, state.xi, self.config.stepsize, self.config.c1, self.config.c2);
        Ok((next, report))
    }

    /// `sum_k ||F_k P_k - I||_inf + lambda sum_m sum_(i,j) ||fiber||_2` at the current iterate.
    pub fn objective(&self, state: &IAState) -> f64 {
        let id = self.identity();
        let fit: f64 = state
            .vars
            .iter()
            .map(|v| (&v.f * &v.p - &id).iter().fold(0.0f64, |a, z| a.max(z.norm())))
            .sum();
        let n = self.n;
        let mut penalty = 0.0;
        for range in self.partition.blocks() {
            for j in 0..n {
                for i in (0..n).filter(|&i| i != j) {
                    penalty += range
                        .clone()
                        .map(|k| state.vars[k].p[(i, j)].norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                }
            }
        }
        fit + self.config.lambda * penalty
    }

    pub fn read_out(&self, state: &IAState) -> (InverseCsdTensor, CsdTensor) {
        let p: Vec<CMatrix> = state.vars.iter().map(|v| hermitianize(&v.w)).collect();
        let f: Vec<CMatrix> = state.vars.iter().map(|v| v.f.clone()).collect();
        (
            InverseCsdTensor::new(
                FrequencyTensor::new(self.t, p).expect("shape preserved"),
                Some(self.config.epsilon),
            ),
            CsdTensor(FrequencyTensor::new(self.t, f).expect("shape preserved")),
        )
    }
}

/// Outcome of a full run.
#[derive(Debug, Clone)]
pub struct IAOutput {
    pub inverse: InverseCsdTensor,
    pub csd: CsdTensor,
    pub trace: Vec<ResidualReport>,
    pub converged: bool,
    pub iterations: usize,
}

pub fn ia_learn(smoothed: &CsdTensor, partition: &FrequencyPartition, config: &IAConfig) -> Result<IAOutput> {
    let problem = IAProblem::new(smoothed, partition, config)?;
    let mut state = problem.init()?;
    let mut trace = Vec::new();
    let mut converged = false;
    while state.t < config.max_iters {
        let (next, report) = problem.step(&state)?;
        converged = report.converged;
        trace.push(report);
        state = next;
        if converged {
            break;
        }
    }
    let (inverse, csd) = problem.read_out(&state);
    Ok(IAOutput { inverse, csd, iterations: state.t, converged, trace })
}

pub const TRACE_HEADER: &str = "t,xi,pi1,pi2,pi4,pi5,pi6,p3,delta1,delta2,converged";

/// Residual trace as CSV. The trust residual is scalar per frequency and is
/// written last among the primal columns as `p3`.
pub fn write_trace_csv(mut out: impl Write, trace: &[ResidualReport]) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in trace {
        let [p1, p2, p3, p4, p5, p6] = r.primal;
        let [d1, d2] = r.dual;
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            r.t, r.xi, p1, p2, p4, p5, p6, p3, d1, d2, r.converged
        )?;
    }
    Ok(())
}
