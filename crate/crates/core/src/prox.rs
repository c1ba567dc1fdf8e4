//! Proximal maps, projections and the structured linear solves of the IA learner.

use nalgebra::{Cholesky, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{hermitianize, CMatrix};

/// Which ADMM penalty a prox radius was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxTag {
    /// `1 / sigma`, the x-update.
    InvSigma,
    /// `1 / rho`, the u-update.
    InvRho,
    /// `lambda / theta`, the v-update.
    LambdaOverTheta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxScalarParams {
    value: f64,
    tag: ProxTag,
}

impl ProxScalarParams {
    pub fn new(value: f64, tag: ProxTag) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::param(format!("prox parameter must be positive, got {value}")));
        }
        Ok(Self { value, tag })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn tag(&self) -> ProxTag {
        self.tag
    }
}

/// Euclidean projection of a nonnegative vector onto `{x : ||x||_1 <= radius}`.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    if v.iter().sum::<f64>() <= radius {
        return v.to_vec();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (idx, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let candidate = (cumsum - radius) / (idx + 1) as f64;
        if s > candidate {
            shift = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - shift).max(0.0)).collect()
}

/// Complex signum with `sign(0) = 0`.
#[inline]
pub fn csign(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        z / r
    }
}

/// `prox_{lam ||.||_inf}(z) = sign(z) (|z| - P(|z|))`, `P` the projection onto
/// the l1 ball of radius `lam`.
pub fn prox_linf(z: &[Complex64], lam: f64) -> Vec<Complex64> {
    let mags: Vec<f64> = z.iter().map(|v| v.norm()).collect();
    let proj = project_l1_ball(&mags, lam);
    z.iter()
        .zip(mags.iter().zip(&proj))
        .map(|(&zi, (&a, &p))| csign(zi) * (a - p))
        .collect()
}

/// `max(0, 1 - lam / ||z||) z`.
pub fn block_soft_threshold(z: &[Complex64], lam: f64) -> Vec<Complex64> {
    let norm = z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm <= lam {
        return vec![Complex64::new(0.0, 0.0); z.len()];
    }
    let scale = 1.0 - lam / norm;
    z.iter().map(|v| v * scale).collect()
}

/// Hermitian part of `w` with its eigenvalues clamped from below at `eps`.
pub fn project_hermitian_pd(w: &CMatrix, eps: f64) -> Result<CMatrix> {
    if w.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite);
    }
    let eig = SymmetricEigen::new(hermitianize(w));
    let clamped = eig.eigenvalues.map(|l| Complex64::new(l.max(eps), 0.0));
    let v = &eig.eigenvectors;
    let out = v * CMatrix::from_diagonal(&clamped) * v.adjoint();
    Ok(hermitianize(&out))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gamma1Params {
    pub tau: f64,
    pub omega: f64,
    pub sigma: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gamma2Params {
    pub tau: f64,
    pub delta: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Gamma2Params {
    /// Coefficient of the identity, `tau/2 + beta + delta/2`.
    pub fn shift(&self) -> f64 {
        0.5 * self.tau + self.beta + 0.5 * self.delta
    }
}

fn not_pd() -> Error {
    Error::param("linear system matrix is not positive definite")
}

/// Factored `(tau+omega) I + sigma (I ⊗ F)^H (I ⊗ F) + theta S2`.
///
/// The matrix is block diagonal over the columns of the unvectorized
/// argument; block `j` is `(tau+omega) I + sigma F^H F + theta E_j` with
/// `E_j` the identity with entry `j` zeroed.
pub struct Gamma1Factor {
    n: usize,
    blocks: Vec<Cholesky<Complex64, nalgebra::Dyn>>,
}

impl Gamma1Factor {
    pub fn new(f: &CMatrix, params: Gamma1Params) -> Result<Self> {
        let n = f.nrows();
        if params.tau + params.omega <= 0.0 {
            return Err(Error::param("tau + omega must be positive"));
        }
        let base = hermitianize(&(f.adjoint() * f).scale(params.sigma))
            + CMatrix::identity(n, n).scale(params.tau + params.omega);
        let blocks = (0..n)
            .map(|j| {
                let mut b = base.clone();
                for i in (0..n).filter(|&i| i != j) {
                    b[(i, i)] += params.theta;
                }
                Cholesky::new(b).ok_or_else(not_pd)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n, blocks })
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(rhs.len(), n * n, "rhs length must be N^2");
        let mut out = Vec::with_capacity(n * n);
        for (j, chol) in self.blocks.iter().enumerate() {
            let b = DVector::from_column_slice(&rhs[j * n..(j + 1) * n]);
            out.extend(chol.solve(&b).iter());
        }
        out
    }
}

pub fn solve_gamma1(f: &CMatrix, params: Gamma1Params, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    Ok(Gamma1Factor::new(f, params)?.solve(rhs))
}

/// `Gamma2 = c I + (rho/2) (P^T ⊗ I)^H (P^T ⊗ I)` with `c = tau/2 + beta + delta/2`.
///
/// Since `(P^T ⊗ I) vec(X) = vec(X P)`, this is `vec(X) -> vec(X H)` with
/// `H = c I + (rho/2) P P^H`, so `Gamma2^{-1} vec(R) = vec(R H^{-1})`.
pub fn solve_gamma2(p: &CMatrix, params: Gamma2Params, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = p.nrows();
    assert_eq!(rhs.len(), n * n, "rhs length must be N^2");
    if params.shift() <= 0.0 || params.beta < 0.0 {
        return Err(Error::param("tau/2 + beta + delta/2 must be positive and beta nonnegative"));
    }
    let h = hermitianize(&(p * p.adjoint()).scale(0.5 * params.rho))
        + CMatrix::identity(n, n).scale(params.shift());
    let chol = Cholesky::new(h).ok_or_else(not_pd)?;
    let r = CMatrix::from_column_slice(n, n, rhs);
    // X H = R  <=>  H X^H = R^H for Hermitian H
    let x = chol.solve(&r.adjoint()).adjoint();
    Ok(x.as_slice().to_vec())
}

/// `Gamma2` for fixed `P` and `rho`, solvable for any shift `c` without
/// refactoring: `H = V diag(c + (rho/2) mu) V^H` with `P P^H = V diag(mu) V^H`.
pub struct Gamma2Spectral {
    n: usize,
    vecs: CMatrix,
    mu: Vec<f64>,
}

impl Gamma2Spectral {
    pub fn new(p: &CMatrix, rho: f64) -> Self {
        let eig = SymmetricEigen::new(hermitianize(&(p * p.adjoint()).scale(0.5 * rho)));
        Self { n: p.nrows(), vecs: eig.eigenvectors, mu: eig.eigenvalues.iter().map(|m| m.max(0.0)).collect() }
    }

    /// Rotates a right-hand side into the eigenbasis: `R V`.
    pub fn rotate(&self, rhs: &[Complex64]) -> CMatrix {
        CMatrix::from_column_slice(self.n, self.n, rhs) * &self.vecs
    }

    /// `X V` where `X = Gamma2^{-1}(R)`, given `R V`. Since `V` is unitary,
    /// distances in this basis equal distances of the unrotated solutions.
    pub fn solve_rotated_raw(&self, rotated: &CMatrix, shift: f64) -> CMatrix {
        let mut y = rotated.clone();
        for (j, mut col) in y.column_iter_mut().enumerate() {
            col /= Complex64::new(shift + self.mu[j], 0.0);
        }
        y
    }

    pub fn unrotate(&self, y: &CMatrix) -> CMatrix {
        y * self.vecs.adjoint()
    }

    /// `Gamma2^{-1} vec(R)` given the rotated right-hand side `R V`.
    pub fn solve_rotated(&self, rotated: &CMatrix, shift: f64) -> Vec<Complex64> {
        self.unrotate(&self.solve_rotated_raw(rotated, shift)).as_slice().to_vec()
    }

    pub fn solve(&self, rhs: &[Complex64], shift: f64) -> Vec<Complex64> {
        self.solve_rotated(&self.rotate(rhs), shift)
    }
}
