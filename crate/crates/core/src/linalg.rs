//! Dense real and complex operators, eigenstructure with multiplicity
//! clustering, and rank decisions.
//!
//! Everything here is immutable after construction and deterministic:
//! fixed summation order, no internal threading.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Iteration budget for the QR eigensolver, scaled by dimension.
fn eig_iter_budget(dim: usize) -> usize {
    1_000 + 75 * dim
}

/// Deflation threshold for the Schur iteration. Machine epsilon exactly can
/// stall on matrices whose subdiagonal is already at noise level (equal
/// eigenvalues); the relaxation perturbs eigenvalues by at most ~1e-14
/// relative, far below every clustering radius used here.
pub(crate) const SCHUR_EPS: f64 = 64.0 * f64::EPSILON;

/// A square operator on R^n, stored dense row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealOperator {
    pub(crate) mat: DMatrix<f64>,
}

/// A square operator on C^n, stored dense row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexOperator {
    pub(crate) mat: DMatrix<Complex64>,
}

impl RealOperator {
    /// Wraps a square matrix, rejecting non-square shapes and non-finite entries.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                context: "RealOperator must be square",
                expected: mat.nrows(),
                got: mat.ncols(),
            });
        }
        if mat.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEntry {
                context: "RealOperator entries",
            });
        }
        Ok(Self { mat })
    }

    /// Row-major construction from a flat slice of length `dim * dim`.
    pub fn from_rows(dim: usize, data: &[f64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                context: "row-major data length",
                expected: dim * dim,
                got: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// Operator (spectral) norm: the largest singular value.
    pub fn opnorm(&self) -> f64 {
        opnorm_r(&self.mat)
    }

    /// Frobenius norm; cheap upper bound used for residual certificates.
    pub fn frobenius(&self) -> f64 {
        self.mat.norm()
    }

    /// Number of singular values above `tau` times the largest one.
    pub fn rank_tol(&self, tau: f64) -> usize {
        assert!(tau >= 0.0, "rank threshold must be nonnegative");
        rank_from_singular_values(&singular_values_r(&self.mat), tau)
    }

    /// Inverse, rejected when the smallest singular value falls at or below
    /// `floor` times the largest singular value.
    pub fn inverse(&self, floor: f64) -> Result<Self> {
        if self.dim() == 0 {
            return Ok(self.clone());
        }
        let sv = singular_values_r(&self.mat);
        let smax = sv[0];
        let smin = sv[sv.len() - 1];
        if smax == 0.0 || smin <= floor * smax {
            return Err(Error::NotInvertible { sigma_min: smin });
        }
        let inv = self
            .mat
            .clone()
            .lu()
            .try_inverse()
            .ok_or(Error::NotInvertible { sigma_min: smin })?;
        Ok(Self { mat: inv })
    }

    /// Ratio of largest to smallest singular value.
    pub fn condition_number(&self) -> f64 {
        if self.dim() == 0 {
            return 1.0;
        }
        let sv = singular_values_r(&self.mat);
        let smin = sv[sv.len() - 1];
        if smin == 0.0 {
            f64::INFINITY
        } else {
            sv[0] / smin
        }
    }

    pub fn determinant(&self) -> f64 {
        self.mat.determinant()
    }

    /// Spectrum as a complex operator (exact conjugate symmetry guaranteed
    /// by the real Schur path).
    pub fn eig(&self, cluster_radius: f64) -> Result<Spectrum> {
        eig_real(&self.mat, cluster_radius)
    }
}

impl ComplexOperator {
    pub fn new(mat: DMatrix<Complex64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                context: "ComplexOperator must be square",
                expected: mat.nrows(),
                got: mat.ncols(),
            });
        }
        if mat.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::NonFiniteEntry {
                context: "ComplexOperator entries",
            });
        }
        Ok(Self { mat })
    }

    pub fn from_rows(dim: usize, data: &[Complex64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                context: "row-major data length",
                expected: dim * dim,
                got: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.mat
    }

    /// Real part, entrywise.
    pub fn real_part(&self) -> RealOperator {
        RealOperator {
            mat: self.mat.map(|z| z.re),
        }
    }

    /// Imaginary part, entrywise.
    pub fn imag_part(&self) -> RealOperator {
        RealOperator {
            mat: self.mat.map(|z| z.im),
        }
    }

    pub fn opnorm(&self) -> f64 {
        opnorm_c(&self.mat)
    }

    pub fn frobenius(&self) -> f64 {
        self.mat.norm()
    }

    pub fn rank_tol(&self, tau: f64) -> usize {
        assert!(tau >= 0.0, "rank threshold must be nonnegative");
        rank_from_singular_values(&singular_values_c(&self.mat), tau)
    }

    pub fn inverse(&self, floor: f64) -> Result<Self> {
        if self.dim() == 0 {
            return Ok(self.clone());
        }
        let sv = singular_values_c(&self.mat);
        let smax = sv[0];
        let smin = sv[sv.len() - 1];
        if smax == 0.0 || smin <= floor * smax {
            return Err(Error::NotInvertible { sigma_min: smin });
        }
        let inv = self
            .mat
            .clone()
            .lu()
            .try_inverse()
            .ok_or(Error::NotInvertible { sigma_min: smin })?;
        Ok(Self { mat: inv })
    }

    /// Eigenvalues clustered into multiplicities at the given radius.
    ///
    /// Matrices whose entries are exactly real are routed through the real
    /// Schur form so their spectra come out exactly conjugate-symmetric.
    pub fn eig(&self, cluster_radius: f64) -> Result<Spectrum> {
        if self.mat.iter().all(|z| z.im == 0.0) {
            return eig_real(&self.mat.map(|z| z.re), cluster_radius);
        }
        let dim = self.dim();
        if dim == 0 {
            return Ok(Spectrum {
                clusters: Vec::new(),
                cluster_radius,
                dim,
            });
        }
        let max_iter = eig_iter_budget(dim);
        let schur = self
            .mat
            .clone()
            .try_schur(SCHUR_EPS, max_iter)
            .ok_or(Error::EigNonConvergence { dim, max_iter })?;
        let (_, t) = schur.unpack();
        let vals = eigenvalues_from_complex_schur(&t);
        Ok(Spectrum::cluster(vals, cluster_radius))
    }
}

impl From<RealOperator> for ComplexOperator {
    fn from(a: RealOperator) -> Self {
        ComplexOperator {
            mat: a.mat.map(|x| Complex64::new(x, 0.0)),
        }
    }
}

impl From<&RealOperator> for ComplexOperator {
    fn from(a: &RealOperator) -> Self {
        ComplexOperator {
            mat: a.mat.map(|x| Complex64::new(x, 0.0)),
        }
    }
}

fn eig_real(mat: &DMatrix<f64>, cluster_radius: f64) -> Result<Spectrum> {
    let dim = mat.nrows();
    if dim == 0 {
        return Ok(Spectrum {
            clusters: Vec::new(),
            cluster_radius,
            dim,
        });
    }
    let max_iter = eig_iter_budget(dim);
    let schur = mat
        .clone()
        .try_schur(SCHUR_EPS, max_iter)
        .ok_or(Error::EigNonConvergence { dim, max_iter })?;
    let vals: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    Ok(Spectrum::cluster(vals, cluster_radius))
}

/// Eigenvalues of a (quasi-)triangular complex Schur factor. Unreduced 2x2
/// diagonal blocks are resolved by the quadratic formula over C.
fn eigenvalues_from_complex_schur(t: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = t.nrows();
    let scale = t.norm().max(1.0);
    let mut vals = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let subdiag = if i + 1 < n { t[(i + 1, i)].norm() } else { 0.0 };
        if i + 1 < n && subdiag > f64::EPSILON * scale {
            let a = t[(i, i)];
            let b = t[(i, i + 1)];
            let c = t[(i + 1, i)];
            let d = t[(i + 1, i + 1)];
            let half_tr = (a + d) * 0.5;
            let disc = ((a - d) * 0.5).powu(2) + b * c;
            let root = disc.sqrt();
            vals.push(half_tr + root);
            vals.push(half_tr - root);
            i += 2;
        } else {
            vals.push(t[(i, i)]);
            i += 1;
        }
    }
    vals
}

/// One multiplicity cluster of a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCluster {
    /// Centroid of the merged eigenvalues.
    pub value: Complex64,
    pub multiplicity: usize,
}

/// Eigenvalues with algebraic multiplicities, merged at a clustering radius.
#[derive(Debug, Clone)]
pub struct Spectrum {
    clusters: Vec<SpectralCluster>,
    cluster_radius: f64,
    dim: usize,
}

impl Spectrum {
    /// Complete-linkage greedy clustering over the lexicographically sorted
    /// eigenvalue list: a value joins a cluster only if it is within the
    /// radius of every current member, so members never drift further apart
    /// than the radius.
    pub fn cluster(mut vals: Vec<Complex64>, radius: f64) -> Self {
        assert!(radius >= 0.0, "clustering radius must be nonnegative");
        let dim = vals.len();
        vals.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let mut groups: Vec<Vec<Complex64>> = Vec::new();
        'outer: for v in vals {
            for g in groups.iter_mut() {
                if g.iter().all(|w| (v - w).norm() <= radius) {
                    g.push(v);
                    continue 'outer;
                }
            }
            groups.push(vec![v]);
        }
        let clusters = groups
            .into_iter()
            .map(|g| {
                let m = g.len();
                let sum: Complex64 = g.iter().sum();
                SpectralCluster {
                    value: sum / m as f64,
                    multiplicity: m,
                }
            })
            .collect();
        Self {
            clusters,
            cluster_radius: radius,
            dim,
        }
    }

    pub fn clusters(&self) -> &[SpectralCluster] {
        &self.clusters
    }

    pub fn cluster_radius(&self) -> f64 {
        self.cluster_radius
    }

    /// Total multiplicity; always equals the matrix dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_multiplicity(&self) -> usize {
        self.clusters.iter().map(|c| c.multiplicity).sum()
    }

    /// Largest eigenvalue modulus, zero for an empty spectrum.
    pub fn spectral_radius(&self) -> f64 {
        self.clusters
            .iter()
            .map(|c| c.value.norm())
            .fold(0.0, f64::max)
    }

    /// True when the multiset of eigenvalues is invariant under complex
    /// conjugation, up to the clustering radius.
    pub fn is_conjugation_symmetric(&self) -> bool {
        let mut unmatched: Vec<(Complex64, usize)> = self
            .clusters
            .iter()
            .map(|c| (c.value, c.multiplicity))
            .collect();
        for c in &self.clusters {
            let target = c.value.conj();
            match unmatched.iter_mut().find(|(v, m)| {
                *m == c.multiplicity && (*v - target).norm() <= 2.0 * self.cluster_radius
            }) {
                Some(entry) => entry.1 = 0,
                None => return false,
            }
        }
        true
    }
}

/// Default clustering radius: 1e-8 times the operator norm (or 1e-8 for a
/// zero operator).
pub fn default_cluster_radius(opnorm: f64) -> f64 {
    1e-8 * opnorm.max(1.0)
}

fn rank_from_singular_values(sv: &[f64], tau: f64) -> usize {
    if sv.is_empty() {
        return 0;
    }
    let smax = sv[0];
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tau * smax).count()
}

pub(crate) fn singular_values_r(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

pub(crate) fn singular_values_c(m: &DMatrix<Complex64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

pub(crate) fn opnorm_r(m: &DMatrix<f64>) -> f64 {
    singular_values_r(m).first().copied().unwrap_or(0.0)
}

pub(crate) fn opnorm_c(m: &DMatrix<Complex64>) -> f64 {
    singular_values_c(m).first().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eig_diagonal_radius_zero() {
        let a = ComplexOperator::from_rows(
            3,
            &[
                c(1.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 1.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.0, -1.0),
            ],
        )
        .unwrap();
        let spec = a.eig(0.0).unwrap();
        assert_eq!(spec.total_multiplicity(), 3);
        assert_eq!(spec.clusters().len(), 3);
        for cl in spec.clusters() {
            assert_eq!(cl.multiplicity, 1);
        }
        assert!(spec
            .clusters()
            .iter()
            .any(|cl| (cl.value - c(1.0, 0.0)).norm() < 1e-12));
        assert!(spec
            .clusters()
            .iter()
            .any(|cl| (cl.value - c(0.0, 1.0)).norm() < 1e-12));
        assert!(spec
            .clusters()
            .iter()
            .any(|cl| (cl.value - c(0.0, -1.0)).norm() < 1e-12));
    }

    #[test]
    fn eig_rotation_block() {
        // characteristic polynomial lambda^2 + 1
        let a = RealOperator::from_rows(2, &[0.0, 1.0, -1.0, 0.0]).unwrap();
        let spec = a.eig(1e-12).unwrap();
        assert_eq!(spec.clusters().len(), 2);
        assert!(spec
            .clusters()
            .iter()
            .any(|cl| (cl.value - c(0.0, 1.0)).norm() < 1e-14));
        assert!(spec.is_conjugation_symmetric());
    }

    #[test]
    fn eig_jordan_block_multiplicity() {
        // [[i,1],[0,i]] is upper triangular with double eigenvalue i; the
        // characteristic polynomial is (lambda - i)^2, so both roots are i.
        let a =
            ComplexOperator::from_rows(2, &[c(0.0, 1.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)])
                .unwrap();
        let spec = a.eig(1e-6).unwrap();
        assert_eq!(spec.clusters().len(), 1);
        assert_eq!(spec.clusters()[0].multiplicity, 2);
        assert!((spec.clusters()[0].value - c(0.0, 1.0)).norm() < 1e-6);
    }

    #[test]
    fn rank_zero_matrix() {
        let z = RealOperator::zeros(4);
        assert_eq!(z.rank_tol(0.0), 0);
        assert_eq!(z.rank_tol(1e-3), 0);
    }

    #[test]
    fn rank_diag() {
        let a = RealOperator::from_rows(3, &[2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(a.rank_tol(1e-12), 1);
    }

    #[test]
    fn rank_noisy_outer_product() {
        // outer product of two unit vectors plus 1e-15 noise has rank 1 at 1e-10
        let u = nalgebra::DVector::from_vec(vec![0.6, 0.8, 0.0]);
        let v = nalgebra::DVector::from_vec(vec![0.0, 0.6, 0.8]);
        let mut m = &u * v.transpose();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] += 1e-15 * ((i * 3 + j) as f64 - 4.0);
            }
        }
        let a = RealOperator::new(m).unwrap();
        assert_eq!(a.rank_tol(1e-10), 1);
    }

    #[test]
    fn rank_monotone_in_tau() {
        let a =
            RealOperator::from_rows(3, &[1.0, 0.2, 0.0, 0.0, 1e-4, 0.0, 0.3, 0.0, 1e-9]).unwrap();
        let taus = [0.0, 1e-12, 1e-8, 1e-5, 1e-2, 0.5];
        let ranks: Vec<usize> = taus.iter().map(|&t| a.rank_tol(t)).collect();
        for w in ranks.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn opnorm_identity_and_nilpotent() {
        assert!((RealOperator::identity(3).opnorm() - 1.0).abs() < 1e-14);
        // [[0,2],[0,0]] has singular values {2, 0}
        let n = RealOperator::from_rows(2, &[0.0, 2.0, 0.0, 0.0]).unwrap();
        assert!((n.opnorm() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_diag() {
        let a = RealOperator::from_rows(2, &[2.0, 0.0, 0.0, 4.0]).unwrap();
        let inv = a.inverse(1e-12).unwrap();
        let expect = RealOperator::from_rows(2, &[0.5, 0.0, 0.0, 0.25]).unwrap();
        assert!((inv.matrix() - expect.matrix()).norm() < 1e-15);
        let residual = (a.matrix() * inv.matrix() - DMatrix::<f64>::identity(2, 2)).norm();
        assert!(residual <= 1e-11);
    }

    #[test]
    fn inverse_rejects_singular() {
        let a = RealOperator::from_rows(2, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        match a.inverse(1e-12) {
            Err(Error::NotInvertible { sigma_min }) => assert!(sigma_min < 1e-14),
            other => panic!("expected NotInvertible, got {other:?}"),
        }
    }

    #[test]
    fn eig_multiplicities_sum_to_dim() {
        let a = RealOperator::from_rows(
            4,
            &[
                0.0, 1.0, 0.0, 0.0, //
                -1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 3.0, 1.0, //
                0.0, 0.0, 0.0, 3.0,
            ],
        )
        .unwrap();
        let spec = a.eig(1e-6).unwrap();
        assert_eq!(spec.total_multiplicity(), 4);
    }

    #[test]
    fn non_square_rejected() {
        let m = DMatrix::<f64>::zeros(2, 3);
        assert!(RealOperator::new(m).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 0.0, 1.0]);
        assert!(RealOperator::new(m).is_err());
    }
}
