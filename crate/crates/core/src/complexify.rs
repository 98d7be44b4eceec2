//! The complexification functor: X -> X^ = X (+) X with i acting as
//! (x, y) -> (-y, x), and operators encoded as pairs A + iB of real
//! operators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{default_cluster_radius, ComplexOperator, RealOperator};

/// An operator A + iB on the complexification, stored as the pair (A, B).
///
/// The pair acts on x + iy by (A + iB)(x + iy) = (Ax - By) + i(Ay + Bx).
#[derive(Debug, Clone)]
pub struct Complexified {
    real_part: RealOperator,
    imag_part: RealOperator,
}

impl Complexified {
    pub fn new(real_part: RealOperator, imag_part: RealOperator) -> Result<Self> {
        if real_part.dim() != imag_part.dim() {
            return Err(Error::DimensionMismatch {
                context: "real and imaginary parts of a complexified operator",
                expected: real_part.dim(),
                got: imag_part.dim(),
            });
        }
        Ok(Self {
            real_part,
            imag_part,
        })
    }

    /// T^ = T + i0: the complex operator induced by a real one.
    pub fn complexify(a: RealOperator) -> Self {
        let dim = a.dim();
        Self {
            real_part: a,
            imag_part: RealOperator::zeros(dim),
        }
    }

    /// Underlying real dimension n; the pair acts on C^n, i.e. on R^{2n}.
    pub fn dim(&self) -> usize {
        self.real_part.dim()
    }

    pub fn real_part(&self) -> &RealOperator {
        &self.real_part
    }

    pub fn imag_part(&self) -> &RealOperator {
        &self.imag_part
    }

    /// Applies A + iB to x + iy, returning (Ax - By, Ay + Bx).
    pub fn apply(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.dim();
        if x.len() != n || y.len() != n {
            return Err(Error::DimensionMismatch {
                context: "vector length in Complexified::apply",
                expected: n,
                got: if x.len() != n { x.len() } else { y.len() },
            });
        }
        let a = self.real_part.matrix();
        let b = self.imag_part.matrix();
        Ok((a * x - b * y, a * y + b * x))
    }

    /// The n x n complex matrix A + iB.
    pub fn to_complex(&self) -> ComplexOperator {
        let n = self.dim();
        let a = self.real_part.matrix();
        let b = self.imag_part.matrix();
        let mat = DMatrix::from_fn(n, n, |i, j| Complex64::new(a[(i, j)], b[(i, j)]));
        ComplexOperator::new(mat).expect("finite parts produce a finite complex matrix")
    }

    /// The 2n x 2n real block model [[A, -B], [B, A]], used for cross-checks.
    pub fn to_real_block(&self) -> RealOperator {
        let n = self.dim();
        let a = self.real_part.matrix();
        let b = self.imag_part.matrix();
        let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(a);
        m.view_mut((0, n), (n, n)).copy_from(&(-b));
        m.view_mut((n, 0), (n, n)).copy_from(b);
        m.view_mut((n, n), (n, n)).copy_from(a);
        RealOperator::new(m).expect("block assembly preserves finiteness")
    }

    /// Checks max{|A|, |B|} <= |A + iB| <= sqrt(2)(|A| + |B|) in the
    /// spectral gauge, with a relative slack of a few ulps.
    pub fn norm_bounds_check(&self) -> (bool, bool) {
        let na = self.real_part.opnorm();
        let nb = self.imag_part.opnorm();
        let nt = self.to_complex().opnorm();
        let slack = 1.0 + 1e-12;
        let lower_ok = na.max(nb) <= nt * slack;
        let upper_ok = nt <= 2.0f64.sqrt() * (na + nb) * slack;
        (lower_ok, upper_ok)
    }

    /// True when the imaginary part is negligible: |B| <= tau * max(1, |A|).
    pub fn is_real_induced(&self, tau: f64) -> bool {
        assert!(tau >= 0.0, "tolerance must be nonnegative");
        self.imag_part.opnorm() <= tau * self.real_part.opnorm().max(1.0)
    }

    /// For a real-induced operator, checks that the spectrum is symmetric
    /// with respect to the real line (as a multiset, up to the clustering
    /// radius).
    pub fn spectrum_symmetry_check(&self, tau: f64) -> Result<bool> {
        if !self.is_real_induced(tau) {
            return Err(Error::Precondition {
                msg: format!(
                    "spectrum_symmetry_check requires a real-induced operator; |Im| = {:.3e}",
                    self.imag_part.opnorm()
                ),
            });
        }
        let t = self.to_complex();
        let spec = t.eig(default_cluster_radius(t.opnorm()))?;
        Ok(spec.is_conjugation_symmetric())
    }
}
