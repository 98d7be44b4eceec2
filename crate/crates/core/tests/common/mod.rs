//! Shared generators for the integration suites. Everything is seeded, so
//! every run sees the same inputs.
#![allow(dead_code)] // each test target uses its own subset

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use cxstruct::structures::ComplexStructure;
use cxstruct::{ComplexOperator, RealOperator};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut StdRng) -> f64 {
    rng.random_range(-1.0..1.0)
}

pub fn random_matrix(n: usize, rng: &mut StdRng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| uniform(rng))
}

pub fn random_complex_matrix(n: usize, rng: &mut StdRng) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |_, _| Complex64::new(uniform(rng), uniform(rng)))
}

pub fn random_orthogonal(n: usize, rng: &mut StdRng) -> DMatrix<f64> {
    random_matrix(n, rng).qr().q()
}

pub fn random_unitary(n: usize, rng: &mut StdRng) -> DMatrix<Complex64> {
    random_complex_matrix(n, rng).qr().q()
}

/// Invertible R with condition number exactly `cond`: two random orthogonal
/// factors around a log-spaced singular spectrum.
pub fn random_conditioned(n: usize, cond: f64, rng: &mut StdRng) -> DMatrix<f64> {
    let q1 = random_orthogonal(n, rng);
    let q2 = random_orthogonal(n, rng);
    let sing = DVector::from_fn(n, |i, _| {
        if n == 1 {
            1.0
        } else {
            cond.powf(-(i as f64) / (n as f64 - 1.0))
        }
    });
    &q1 * DMatrix::from_diagonal(&sing) * &q2
}

/// A random exact complex structure R J_can R^{-1} with cond(R) <= cond.
pub fn random_structure(n: usize, cond: f64, tol: f64, rng: &mut StdRng) -> ComplexStructure {
    assert!(n.is_multiple_of(2));
    let j = ComplexStructure::canonical(n).unwrap();
    let r = random_conditioned(n, cond, rng);
    let r_inv = r.clone().lu().try_inverse().unwrap();
    let m = &r * j.operator().matrix() * &r_inv;
    ComplexStructure::new(RealOperator::new(m).unwrap(), tol).unwrap()
}

/// Random rank-`r` perturbation with operator norm exactly `norm`
/// (norm 0 gives the zero matrix).
pub fn random_low_rank(n: usize, r: usize, norm: f64, rng: &mut StdRng) -> RealOperator {
    let mut m = DMatrix::<f64>::zeros(n, n);
    for _ in 0..r {
        let u = DVector::from_fn(n, |_, _| uniform(rng));
        let v = DVector::from_fn(n, |_, _| uniform(rng));
        m += u * v.transpose();
    }
    let op = RealOperator::new(m.clone()).unwrap();
    let actual = op.opnorm();
    if actual == 0.0 || norm == 0.0 {
        return RealOperator::zeros(n);
    }
    RealOperator::new(m * (norm / actual)).unwrap()
}

/// A random exact square root of -Id over C: a unitary conjugate of
/// diag(i .. i, -i .. -i) with `p` copies of i.
pub fn random_complex_root(n: usize, p: usize, rng: &mut StdRng) -> ComplexOperator {
    let u = random_unitary(n, rng);
    let d = DMatrix::from_fn(n, n, |i, j| {
        if i != j {
            Complex64::new(0.0, 0.0)
        } else if i < p {
            Complex64::new(0.0, 1.0)
        } else {
            Complex64::new(0.0, -1.0)
        }
    });
    ComplexOperator::new(&u * d * u.adjoint()).unwrap()
}

pub fn frob_c(m: &DMatrix<Complex64>) -> f64 {
    m.norm()
}
