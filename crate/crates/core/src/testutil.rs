use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::tensor::CMatrix;

pub fn random_complex<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_cvec<R: Rng>(rng: &mut R, len: usize) -> Vec<Complex64> {
    (0..len).map(|_| random_complex(rng)).collect()
}

pub fn random_cmatrix<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    DMatrix::from_fn(n, n, |_, _| random_complex(rng))
}

pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let a = random_cmatrix(rng, n);
    (&a + a.adjoint()).scale(0.5)
}

/// `A A^H + n I`, comfortably positive definite.
pub fn random_hpd<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let a = random_cmatrix(rng, n);
    &a * a.adjoint() + CMatrix::identity(n, n).scale(n as f64)
}
