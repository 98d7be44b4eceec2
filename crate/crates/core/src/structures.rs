//! The algebra of complex structures: operators J with J^2 = -Id, the
//! scalar action and equivalent norm they induce, canonical forms,
//! conjugator synthesis, intertwiners, and the incomparability identities.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::RealOperator;

/// Base norm selector for the equivalent norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseNorm {
    L1,
    L2,
    LInf,
}

impl BaseNorm {
    pub fn eval(&self, v: &DVector<f64>) -> f64 {
        match self {
            BaseNorm::L1 => v.iter().map(|x| x.abs()).sum(),
            BaseNorm::L2 => v.norm(),
            BaseNorm::LInf => v.iter().map(|x| x.abs()).fold(0.0, f64::max),
        }
    }

    /// Operator norm of `a` induced by this vector norm: max column sum for
    /// l1, spectral for l2, max row sum for l-infinity.
    pub fn induced_opnorm(&self, a: &RealOperator) -> f64 {
        let m = a.matrix();
        match self {
            BaseNorm::L1 => (0..m.ncols())
                .map(|j| m.column(j).iter().map(|x| x.abs()).sum())
                .fold(0.0, f64::max),
            BaseNorm::L2 => a.opnorm(),
            BaseNorm::LInf => (0..m.nrows())
                .map(|i| m.row(i).iter().map(|x| x.abs()).sum())
                .fold(0.0, f64::max),
        }
    }
}

/// A certified complex structure: a real operator J on an even-dimensional
/// space with defect |J^2 + Id| at most the construction tolerance.
///
/// The defect is stored in the Frobenius gauge, an upper bound for the
/// operator norm.
#[derive(Debug, Clone)]
pub struct ComplexStructure {
    j: RealOperator,
    defect: f64,
}

impl ComplexStructure {
    pub fn new(j: RealOperator, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::Precondition {
                msg: format!("structure tolerance must lie in (0, 1), got {tol}"),
            });
        }
        let dim = j.dim();
        if !dim.is_multiple_of(2) {
            return Err(Error::OddDimension { dim });
        }
        let m = j.matrix();
        let defect = (m * m + DMatrix::<f64>::identity(dim, dim)).norm();
        if defect > tol {
            return Err(Error::DefectTooLarge { defect, tol });
        }
        Ok(Self { j, defect })
    }

    /// Block-diagonal copies of the canonical 2x2 rotation
    /// [[0, 1], [-1, 0]]; defect exactly zero.
    pub fn canonical(dim: usize) -> Result<Self> {
        if !dim.is_multiple_of(2) {
            return Err(Error::OddDimension { dim });
        }
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for b in 0..dim / 2 {
            m[(2 * b, 2 * b + 1)] = 1.0;
            m[(2 * b + 1, 2 * b)] = -1.0;
        }
        Ok(Self {
            j: RealOperator::new(m).expect("canonical block matrix is finite"),
            defect: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.j.dim()
    }

    pub fn operator(&self) -> &RealOperator {
        &self.j
    }

    pub fn defect(&self) -> f64 {
        self.defect
    }

    /// The scalar action (lambda + i mu).x = lambda x + mu Jx.
    pub fn scalar_action(&self, lambda: f64, mu: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "scalar_action vector",
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x * lambda + self.j.matrix() * x * mu)
    }

    /// The equivalent norm |||x||| = sup over theta of
    /// |cos(theta) x + sin(theta) Jx| in the chosen base norm.
    ///
    /// A 1024-point grid locates the maximum and golden-section refinement
    /// sharpens it; the objective is smooth and 2 pi periodic, so this
    /// reaches relative accuracy well below 1e-9.
    pub fn equivalent_norm(&self, x: &DVector<f64>, base: BaseNorm) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "equivalent_norm vector",
                expected: self.dim(),
                got: x.len(),
            });
        }
        let jx = self.j.matrix() * x;
        let g = |theta: f64| base.eval(&(x * theta.cos() + &jx * theta.sin()));

        let grid = 1024usize;
        let step = 2.0 * std::f64::consts::PI / grid as f64;
        let mut best_k = 0;
        let mut best = f64::NEG_INFINITY;
        for k in 0..grid {
            let v = g(step * k as f64);
            if v > best {
                best = v;
                best_k = k;
            }
        }
        let lo = step * (best_k as f64 - 1.0);
        let hi = step * (best_k as f64 + 1.0);
        Ok(golden_section_max(g, lo, hi).max(best))
    }

    /// diag(1, J): the hyperplane embedding, whose square is -Id plus a
    /// rank-1 operator.
    pub fn hyperplane_embed(&self) -> RealOperator {
        let n = self.dim();
        let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
        m[(0, 0)] = 1.0;
        m.view_mut((1, 1), (n, n)).copy_from(self.j.matrix());
        RealOperator::new(m).expect("embedding preserves finiteness")
    }
}

fn golden_section_max<F: Fn(f64) -> f64>(g: F, mut a: f64, mut b: f64) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = g(c);
    let mut fd = g(d);
    for _ in 0..90 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = g(d);
        }
    }
    fc.max(fd)
}

/// Result of conjugator synthesis: an invertible P with P K P^{-1} = J up
/// to the reported residual.
#[derive(Debug, Clone)]
pub struct Conjugator {
    pub p: RealOperator,
    pub cond: f64,
    /// Frobenius norm of P K P^{-1} - J.
    pub residual: f64,
    /// Which pivot-order attempt succeeded (0 = forward, 1 = reversed,
    /// 2 = seeded shuffle).
    pub pivot_order_used: usize,
    pub seed: u64,
}

/// Synthesizes P with J = P K P^{-1} by building C-bases
/// (v1, K v1, v2, K v2, ...) and (w1, J w1, ...) with greedy pivoting and
/// mapping one onto the other.
///
/// Pivoting picks the standard basis vector with the largest component
/// orthogonal to the span built so far, which keeps the bases well
/// conditioned and the algorithm deterministic. Degenerate pivots trigger a
/// reversed order and then a seeded-shuffle retry.
pub fn conjugator(j: &ComplexStructure, k: &ComplexStructure, seed: u64) -> Result<Conjugator> {
    let n = j.dim();
    if k.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "conjugator operands",
            expected: n,
            got: k.dim(),
        });
    }
    if n == 0 {
        return Ok(Conjugator {
            p: RealOperator::zeros(0),
            cond: 1.0,
            residual: 0.0,
            pivot_order_used: 0,
            seed,
        });
    }

    let forward: Vec<usize> = (0..n).collect();
    let reversed: Vec<usize> = (0..n).rev().collect();
    let shuffled = seeded_permutation(n, seed);
    let orders = [forward, reversed, shuffled];

    let mut last_pivot = 0.0;
    for (attempt, order) in orders.iter().enumerate() {
        let vb = match complex_basis(k.operator().matrix(), order) {
            Ok(vb) => vb,
            Err(p) => {
                last_pivot = p;
                continue;
            }
        };
        let wb = match complex_basis(j.operator().matrix(), order) {
            Ok(wb) => wb,
            Err(p) => {
                last_pivot = p;
                continue;
            }
        };
        let v_inv = match vb.clone().lu().try_inverse() {
            Some(inv) => inv,
            None => continue,
        };
        let p = &wb * v_inv;
        let p_op = RealOperator::new(p.clone())?;
        let p_inv = match p.clone().lu().try_inverse() {
            Some(inv) => inv,
            None => continue,
        };
        let residual = (&p * k.operator().matrix() * &p_inv - j.operator().matrix()).norm();
        let cond = p_op.condition_number();
        return Ok(Conjugator {
            p: p_op,
            cond,
            residual,
            pivot_order_used: attempt,
            seed,
        });
    }
    Err(Error::BasisDegeneration {
        pivot: last_pivot,
        retries: orders.len(),
    })
}

/// Builds the column matrix (v1, K v1, v2, K v2, ...); on failure returns
/// the best pivot magnitude seen at the failing step.
fn complex_basis(k: &DMatrix<f64>, order: &[usize]) -> std::result::Result<DMatrix<f64>, f64> {
    let n = k.nrows();
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut span: Vec<DVector<f64>> = Vec::with_capacity(n);
    const PIVOT_FLOOR: f64 = 1e-8;

    while columns.len() < n {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for &idx in order {
            let mut e = DVector::<f64>::zeros(n);
            e[idx] = 1.0;
            let r = orthogonal_residual(&e, &span);
            let rn = r.norm();
            if best.as_ref().is_none_or(|(b, _)| rn > *b) {
                best = Some((rn, r));
            }
        }
        let (pivot, residual) = best.expect("order is nonempty");
        if pivot < PIVOT_FLOOR {
            return Err(pivot);
        }
        let v = residual / pivot;
        let w = k * &v;

        columns.push(v.clone());
        columns.push(w.clone());
        span.push(v);
        let wr = orthogonal_residual(&w, &span);
        let wn = wr.norm();
        if wn < PIVOT_FLOOR * w.norm().max(1.0) {
            return Err(wn);
        }
        span.push(wr / wn);
    }
    Ok(DMatrix::from_columns(&columns))
}

fn orthogonal_residual(v: &DVector<f64>, span: &[DVector<f64>]) -> DVector<f64> {
    let mut r = v.clone();
    // two Gram-Schmidt sweeps keep the span numerically orthonormal
    for _ in 0..2 {
        for q in span {
            let c = q.dot(&r);
            r -= q * c;
        }
    }
    r
}

fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    let mut next = move || {
        // splitmix64 step
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (next() % (i as u64 + 1)) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Report on T + U as an intertwiner between the structures T and U.
#[derive(Debug, Clone)]
pub struct IntertwinerReport {
    pub sum: RealOperator,
    /// Frobenius norm of (T+U)T - U(T+U).
    pub residual: f64,
    pub invertible: bool,
    pub smallest_singular_value: f64,
}

/// Forms T + U, certifies the intertwining relation (T+U)T = U(T+U), and
/// reports invertibility. Passing -U for `u` yields the T - U variant
/// intertwining T with -U.
pub fn intertwiner_sum(t: &ComplexStructure, u: &ComplexStructure) -> Result<IntertwinerReport> {
    let n = t.dim();
    if u.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "intertwiner operands",
            expected: n,
            got: u.dim(),
        });
    }
    let tm = t.operator().matrix();
    let um = u.operator().matrix();
    let sum = tm + um;
    let residual = (&sum * tm - um * &sum).norm();
    let sv = crate::linalg::singular_values_r(&sum);
    let smin = sv.last().copied().unwrap_or(0.0);
    let smax = sv.first().copied().unwrap_or(0.0);
    let invertible = smax > 0.0 && smin > 1e-12 * smax;
    Ok(IntertwinerReport {
        sum: RealOperator::new(sum)?,
        residual,
        invertible,
        smallest_singular_value: smin,
    })
}

/// Residuals of the two incomparability identities:
/// r1 = |(T+U)^2 + (T-U)^2 + 4 Id| and r2 = |2 Id + TU + UT + (T-U)^2|.
///
/// Expanding shows r1 = |2(T^2+Id) + 2(U^2+Id)| and r2 = |(T^2+Id) +
/// (U^2+Id)|, so both are bounded by 2 (defect(T) + defect(U)).
pub fn incomparability_identities(
    t: &ComplexStructure,
    u: &ComplexStructure,
) -> Result<(f64, f64)> {
    let n = t.dim();
    if u.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "identity operands",
            expected: n,
            got: u.dim(),
        });
    }
    let tm = t.operator().matrix();
    let um = u.operator().matrix();
    let eye = DMatrix::<f64>::identity(n, n);
    let sum = tm + um;
    let diff = tm - um;
    let r1 = (&sum * &sum + &diff * &diff + &eye * 4.0).norm();
    let r2 = (&eye * 2.0 + tm * um + um * tm + &diff * &diff).norm();
    Ok((r1, r2))
}

/// The map 2I + S intertwining I with I + S, certified and checked for
/// invertibility (finite dimension: Fredholm index 0 reduces to square
/// invertibility).
#[derive(Debug, Clone)]
pub struct PerturbationIso {
    pub map: RealOperator,
    /// Frobenius norm of (2I+S)I - (I+S)(2I+S).
    pub intertwining_residual: f64,
    pub invertible: bool,
    pub smallest_singular_value: f64,
}

pub fn perturbation_isomorphism(
    i: &ComplexStructure,
    s: &RealOperator,
    tau: f64,
) -> Result<PerturbationIso> {
    let n = i.dim();
    if s.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "perturbation operand",
            expected: n,
            got: s.dim(),
        });
    }
    let im = i.operator().matrix();
    let eye = DMatrix::<f64>::identity(n, n);
    let perturbed = im + s.matrix();
    let defect = (&perturbed * &perturbed + &eye).norm();
    if defect > tau {
        return Err(Error::Precondition {
            msg: format!("(I+S)^2 = -Id fails: defect {defect:.3e} > {tau:.3e}"),
        });
    }
    let map = im * 2.0 + s.matrix();
    let intertwining_residual = (&map * im - &perturbed * &map).norm();
    let sv = crate::linalg::singular_values_r(&map);
    let smin = sv.last().copied().unwrap_or(0.0);
    let smax = sv.first().copied().unwrap_or(0.0);
    let invertible = smax > 0.0 && smin > 1e-12 * smax;
    Ok(PerturbationIso {
        map: RealOperator::new(map)?,
        intertwining_residual,
        invertible,
        smallest_singular_value: smin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j0() -> ComplexStructure {
        ComplexStructure::canonical(2).unwrap()
    }

    #[test]
    fn canonical_blocks() {
        let j = ComplexStructure::canonical(2).unwrap();
        assert_eq!(
            j.operator().matrix(),
            &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
        );
        assert_eq!(j.defect(), 0.0);

        let j4 = ComplexStructure::canonical(4).unwrap();
        let m = j4.operator().matrix();
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(2, 3)], 1.0);
        assert_eq!(m[(3, 2)], -1.0);
        assert_eq!(m[(0, 2)], 0.0);
        let sq = m * m;
        assert_eq!(sq, -DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn odd_dimension_is_obstructed() {
        assert!(matches!(
            ComplexStructure::canonical(3),
            Err(Error::OddDimension { dim: 3 })
        ));
    }

    #[test]
    fn scalar_action_basics() {
        let j = j0();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        // (1, 0) acts as the identity
        assert_eq!(j.scalar_action(1.0, 0.0, &x).unwrap(), x);
        // acting by i twice is acting by -1
        let ix = j.scalar_action(0.0, 1.0, &x).unwrap();
        assert_eq!(ix, DVector::from_vec(vec![0.0, -1.0]));
        let iix = j.scalar_action(0.0, 1.0, &ix).unwrap();
        assert_eq!(iix, -&x);
    }

    #[test]
    fn equivalent_norm_l2_is_euclidean_for_canonical() {
        let j = j0();
        for x in [
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.3, -2.5]),
            DVector::from_vec(vec![-0.7, 0.7]),
        ] {
            let nn = j.equivalent_norm(&x, BaseNorm::L2).unwrap();
            assert!((nn - x.norm()).abs() <= 1e-12 * x.norm());
        }
    }

    #[test]
    fn equivalent_norm_linf_example() {
        // sup over theta of max(|cos|, |sin|) = 1
        let j = j0();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let nn = j.equivalent_norm(&x, BaseNorm::LInf).unwrap();
        assert!((nn - 1.0).abs() < 1e-11);
    }

    #[test]
    fn equivalent_norm_j_isometry() {
        let j = j0();
        let x = DVector::from_vec(vec![0.9, -1.3]);
        let jx = j.operator().matrix() * &x;
        for base in [BaseNorm::L1, BaseNorm::L2, BaseNorm::LInf] {
            let a = j.equivalent_norm(&x, base).unwrap();
            let b = j.equivalent_norm(&jx, base).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{base:?}");
        }
    }

    #[test]
    fn conjugator_identity_pair() {
        let j = ComplexStructure::canonical(4).unwrap();
        let c = conjugator(&j, &j, 0).unwrap();
        assert!((c.p.matrix() - DMatrix::<f64>::identity(4, 4)).norm() < 1e-12);
        assert!(c.residual < 1e-12);
    }

    #[test]
    fn conjugator_interleaved_structure() {
        // K maps e1 -> e3, e2 -> e4, e3 -> -e1, e4 -> -e2
        let k_mat = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, -1.0, 0.0, //
                0.0, 0.0, 0.0, -1.0, //
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0,
            ],
        );
        let k = ComplexStructure::new(RealOperator::new(k_mat).unwrap(), 1e-10).unwrap();
        let j = ComplexStructure::canonical(4).unwrap();
        let c = conjugator(&j, &k, 0).unwrap();
        assert!(c.residual < 1e-10, "residual {}", c.residual);
    }

    #[test]
    fn conjugator_recovers_random_conjugate() {
        // well-conditioned R, K = R J R^{-1}
        let r = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.2, -0.1, 0.0, //
                0.0, 1.1, 0.3, -0.2, //
                0.2, 0.0, 0.9, 0.1, //
                -0.1, 0.1, 0.0, 1.2,
            ],
        );
        let j = ComplexStructure::canonical(4).unwrap();
        let r_inv = r.clone().lu().try_inverse().unwrap();
        let k_mat = &r * j.operator().matrix() * &r_inv;
        let k = ComplexStructure::new(RealOperator::new(k_mat).unwrap(), 1e-10).unwrap();
        let c = conjugator(&j, &k, 0).unwrap();
        assert!(c.residual <= 1e-8, "residual {}", c.residual);
        assert!(c.cond.is_finite());
    }

    #[test]
    fn intertwiner_doubling_and_cancellation() {
        let t = ComplexStructure::canonical(4).unwrap();
        let rep = intertwiner_sum(&t, &t).unwrap();
        assert_eq!(rep.sum.matrix(), &(t.operator().matrix() * 2.0));
        assert_eq!(rep.residual, 0.0);
        assert!(rep.invertible);

        let minus =
            ComplexStructure::new(RealOperator::new(-t.operator().matrix()).unwrap(), 1e-10)
                .unwrap();
        let rep2 = intertwiner_sum(&t, &minus).unwrap();
        assert_eq!(rep2.sum.frobenius(), 0.0);
        assert_eq!(rep2.residual, 0.0);
        assert!(!rep2.invertible);
    }

    #[test]
    fn identities_vanish_for_exact_structures() {
        let t = ComplexStructure::canonical(6).unwrap();
        let r = DMatrix::from_row_slice(
            6,
            6,
            &[
                1.0, 0.1, 0.0, 0.0, -0.2, 0.0, //
                0.0, 1.0, 0.2, 0.0, 0.0, 0.1, //
                0.0, 0.0, 1.1, 0.0, 0.0, 0.0, //
                0.1, 0.0, 0.0, 0.9, 0.0, 0.0, //
                0.0, 0.0, 0.1, 0.0, 1.0, 0.0, //
                0.0, 0.2, 0.0, 0.0, 0.0, 1.0,
            ],
        );
        let r_inv = r.clone().lu().try_inverse().unwrap();
        let u_mat = &r * t.operator().matrix() * &r_inv;
        let u = ComplexStructure::new(RealOperator::new(u_mat).unwrap(), 1e-9).unwrap();
        let (r1, r2) = incomparability_identities(&t, &u).unwrap();
        assert!(r1 <= 2.0 * (t.defect() + u.defect()) + 1e-12, "r1 = {r1}");
        assert!(r2 <= t.defect() + u.defect() + 1e-12, "r2 = {r2}");
    }

    #[test]
    fn identities_for_equal_structures() {
        // T = U = J0: (T+U)^2 = -4 Id and (T-U)^2 = 0
        let t = j0();
        let (r1, r2) = incomparability_identities(&t, &t).unwrap();
        assert_eq!(r1, 0.0);
        assert_eq!(r2, 0.0);
    }

    #[test]
    fn hyperplane_embed_rank_one_defect() {
        let j = j0();
        let a = j.hyperplane_embed();
        assert_eq!(a.dim(), 3);
        let sq = a.matrix() * a.matrix();
        let defect = sq + DMatrix::<f64>::identity(3, 3);
        // diag(2, 0, 0)
        assert_eq!(defect[(0, 0)], 2.0);
        assert_eq!(defect.norm(), 2.0);
        assert_eq!(RealOperator::new(defect).unwrap().rank_tol(1e-12), 1);
    }

    #[test]
    fn perturbation_iso_trivial_and_degenerate() {
        let i = ComplexStructure::canonical(4).unwrap();
        let zero = RealOperator::zeros(4);
        let rep = perturbation_isomorphism(&i, &zero, 1e-12).unwrap();
        assert_eq!(rep.map.matrix(), &(i.operator().matrix() * 2.0));
        assert!(rep.invertible);
        assert_eq!(rep.intertwining_residual, 0.0);

        // S = -2I gives I + S = -I (still a structure) and 2I + S = 0
        let s = RealOperator::new(i.operator().matrix() * -2.0).unwrap();
        let rep2 = perturbation_isomorphism(&i, &s, 1e-12).unwrap();
        assert!(!rep2.invertible);
        assert_eq!(rep2.map.frobenius(), 0.0);
    }

    #[test]
    fn perturbation_iso_rejects_bad_perturbation() {
        let i = ComplexStructure::canonical(2).unwrap();
        let s = RealOperator::identity(2);
        assert!(perturbation_isomorphism(&i, &s, 1e-10).is_err());
    }
}
