//! An exact model of C(K) for a countable compactum K = {1, 1/2, 1/3, ...}
//! u {0}, together with 2x2 matrix fields over it: the almost-null ideal,
//! correction of fields with M^2 = -I + n by the binomial series, the
//! explicit GL2 conjugation onto the canonical rotation, and the
//! strict-singular decomposition bookkeeping.
//!
//! Functions are represented eventually constant: finitely many values at
//! the first isolated points of each copy, then the value at the limit
//! point. This subalgebra is exactly closed under every operation used here
//! (sums, products, finite series, division by functions with nonzero
//! tail), so the space itself is never approximated, only scalar
//! arithmetic is.

use nalgebra::Matrix2;

use crate::error::{Error, Result};

/// The compactum variant: one copy, a disjoint union of two copies, or two
/// copies amalgamated at the limit point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CKSpace {
    Single,
    DisjointUnion,
    Amalgam,
}

impl CKSpace {
    pub fn as_str(&self) -> &'static str {
        match self {
            CKSpace::Single => "single",
            CKSpace::DisjointUnion => "union",
            CKSpace::Amalgam => "amalgam",
        }
    }

    fn copies(&self) -> usize {
        match self {
            CKSpace::Single => 1,
            CKSpace::DisjointUnion | CKSpace::Amalgam => 2,
        }
    }

    fn limit_count(&self) -> usize {
        match self {
            CKSpace::Single | CKSpace::Amalgam => 1,
            CKSpace::DisjointUnion => 2,
        }
    }
}

/// A represented point: the k-th isolated point 1/(k+1) of a copy, or a
/// limit point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CKPoint {
    Isolated { copy: usize, index: usize },
    Limit { copy: usize },
}

impl std::fmt::Display for CKPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CKPoint::Isolated { copy, index } => write!(f, "copy {copy} point 1/{}", index + 1),
            CKPoint::Limit { copy } => write!(f, "copy {copy} limit"),
        }
    }
}

/// All represented points of the given space at a prefix length.
pub fn represented_points(space: CKSpace, prefix_len: usize) -> Vec<CKPoint> {
    let mut pts = Vec::new();
    for copy in 0..space.copies() {
        for index in 0..prefix_len {
            pts.push(CKPoint::Isolated { copy, index });
        }
    }
    for copy in 0..space.limit_count() {
        pts.push(CKPoint::Limit { copy });
    }
    pts
}

/// An eventually-constant continuous function on K, one copy per variant.
#[derive(Debug, Clone, PartialEq)]
pub enum CKFunction {
    Single {
        prefix: Vec<f64>,
        tail: f64,
    },
    Union {
        prefix1: Vec<f64>,
        tail1: f64,
        prefix2: Vec<f64>,
        tail2: f64,
    },
    Amalgam {
        prefix1: Vec<f64>,
        prefix2: Vec<f64>,
        tail: f64,
    },
}

impl CKFunction {
    pub fn space(&self) -> CKSpace {
        match self {
            CKFunction::Single { .. } => CKSpace::Single,
            CKFunction::Union { .. } => CKSpace::DisjointUnion,
            CKFunction::Amalgam { .. } => CKSpace::Amalgam,
        }
    }

    pub fn constant(space: CKSpace, value: f64) -> Self {
        match space {
            CKSpace::Single => CKFunction::Single {
                prefix: Vec::new(),
                tail: value,
            },
            CKSpace::DisjointUnion => CKFunction::Union {
                prefix1: Vec::new(),
                tail1: value,
                prefix2: Vec::new(),
                tail2: value,
            },
            CKSpace::Amalgam => CKFunction::Amalgam {
                prefix1: Vec::new(),
                prefix2: Vec::new(),
                tail: value,
            },
        }
    }

    pub fn prefix_len(&self) -> usize {
        match self {
            CKFunction::Single { prefix, .. } => prefix.len(),
            CKFunction::Union {
                prefix1, prefix2, ..
            } => prefix1.len().max(prefix2.len()),
            CKFunction::Amalgam {
                prefix1, prefix2, ..
            } => prefix1.len().max(prefix2.len()),
        }
    }

    /// Value at a represented point; isolated points beyond the stored
    /// prefix take the tail value.
    pub fn value(&self, p: &CKPoint) -> f64 {
        fn at(prefix: &[f64], tail: f64, index: usize) -> f64 {
            prefix.get(index).copied().unwrap_or(tail)
        }
        match (self, p) {
            (CKFunction::Single { prefix, tail }, CKPoint::Isolated { copy: 0, index }) => {
                at(prefix, *tail, *index)
            }
            (CKFunction::Single { tail, .. }, CKPoint::Limit { copy: 0 }) => *tail,
            (
                CKFunction::Union {
                    prefix1,
                    tail1,
                    prefix2,
                    tail2,
                },
                CKPoint::Isolated { copy, index },
            ) => match copy {
                0 => at(prefix1, *tail1, *index),
                _ => at(prefix2, *tail2, *index),
            },
            (CKFunction::Union { tail1, tail2, .. }, CKPoint::Limit { copy }) => match copy {
                0 => *tail1,
                _ => *tail2,
            },
            (
                CKFunction::Amalgam {
                    prefix1,
                    prefix2,
                    tail,
                },
                CKPoint::Isolated { copy, index },
            ) => match copy {
                0 => at(prefix1, *tail, *index),
                _ => at(prefix2, *tail, *index),
            },
            (CKFunction::Amalgam { tail, .. }, CKPoint::Limit { .. }) => *tail,
            _ => panic!("point does not belong to the function's space"),
        }
    }

    /// Tail value(s): one per limit point.
    pub fn tails(&self) -> Vec<f64> {
        match self {
            CKFunction::Single { tail, .. } => vec![*tail],
            CKFunction::Union { tail1, tail2, .. } => vec![*tail1, *tail2],
            CKFunction::Amalgam { tail, .. } => vec![*tail],
        }
    }

    /// Builds a function of the given space from pointwise values at prefix
    /// length `len`.
    pub fn from_values(space: CKSpace, len: usize, get: impl Fn(&CKPoint) -> f64) -> Self {
        let prefix_of = |copy: usize| -> Vec<f64> {
            (0..len)
                .map(|index| get(&CKPoint::Isolated { copy, index }))
                .collect()
        };
        match space {
            CKSpace::Single => CKFunction::Single {
                prefix: prefix_of(0),
                tail: get(&CKPoint::Limit { copy: 0 }),
            },
            CKSpace::DisjointUnion => CKFunction::Union {
                prefix1: prefix_of(0),
                tail1: get(&CKPoint::Limit { copy: 0 }),
                prefix2: prefix_of(1),
                tail2: get(&CKPoint::Limit { copy: 1 }),
            },
            CKSpace::Amalgam => CKFunction::Amalgam {
                prefix1: prefix_of(0),
                prefix2: prefix_of(1),
                tail: get(&CKPoint::Limit { copy: 0 }),
            },
        }
    }

    fn zip(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.space() != other.space() {
            return Err(Error::SpaceMismatch);
        }
        let len = self.prefix_len().max(other.prefix_len());
        Ok(Self::from_values(self.space(), len, |p| {
            op(self.value(p), other.value(p))
        }))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_values(self.space(), self.prefix_len(), |p| c * self.value(p))
    }

    /// Pointwise reciprocal; defined exactly in the model because the tail
    /// is a single scalar. Fails on any vanishing represented value.
    pub fn recip(&self) -> Result<Self> {
        for p in represented_points(self.space(), self.prefix_len()) {
            if self.value(&p) == 0.0 {
                return Err(Error::ZeroDivisor {
                    point: p.to_string(),
                });
            }
        }
        Ok(Self::from_values(self.space(), self.prefix_len(), |p| {
            1.0 / self.value(p)
        }))
    }
}

/// Membership in the almost-null ideal: vanishing at every non-isolated
/// point and converging to zero along the isolated ones. In the
/// eventually-constant model both collapse to: every tail is exactly zero.
pub fn almost_null_membership(g: &CKFunction) -> bool {
    g.tails().iter().all(|&t| t == 0.0)
}

/// Whether the multiplication operator g . Id is strictly singular in the
/// model. A multiplication is strictly singular exactly when g lies in the
/// almost-null ideal: off the ideal, |g| stays bounded below on an infinite
/// set and the restriction of g . Id there is an isomorphism.
pub fn multiplication_singularity_test(g: &CKFunction) -> bool {
    almost_null_membership(g)
}

/// A 2x2-matrix-valued function on K: M(x) = [[f1, f2], [f3, f4]](x).
#[derive(Debug, Clone, PartialEq)]
pub struct CKMatrixField {
    entries: [CKFunction; 4],
}

impl CKMatrixField {
    /// Row-major entries f1, f2, f3, f4, all on the same space.
    pub fn new(f1: CKFunction, f2: CKFunction, f3: CKFunction, f4: CKFunction) -> Result<Self> {
        let space = f1.space();
        if f2.space() != space || f3.space() != space || f4.space() != space {
            return Err(Error::SpaceMismatch);
        }
        Ok(Self {
            entries: [f1, f2, f3, f4],
        })
    }

    pub fn space(&self) -> CKSpace {
        self.entries[0].space()
    }

    pub fn entry(&self, row: usize, col: usize) -> &CKFunction {
        &self.entries[2 * row + col]
    }

    pub fn prefix_len(&self) -> usize {
        self.entries
            .iter()
            .map(|f| f.prefix_len())
            .max()
            .unwrap_or(0)
    }

    pub fn points(&self) -> Vec<CKPoint> {
        represented_points(self.space(), self.prefix_len())
    }

    pub fn value(&self, p: &CKPoint) -> Matrix2<f64> {
        Matrix2::new(
            self.entries[0].value(p),
            self.entries[1].value(p),
            self.entries[2].value(p),
            self.entries[3].value(p),
        )
    }

    pub fn from_values(space: CKSpace, len: usize, get: impl Fn(&CKPoint) -> Matrix2<f64>) -> Self {
        let entry = |r: usize, c: usize| CKFunction::from_values(space, len, |p| get(p)[(r, c)]);
        Self {
            entries: [entry(0, 0), entry(0, 1), entry(1, 0), entry(1, 1)],
        }
    }

    pub fn constant(space: CKSpace, m: Matrix2<f64>) -> Self {
        Self::from_values(space, 0, |_| m)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.space() != other.space() {
            return Err(Error::SpaceMismatch);
        }
        let len = self.prefix_len().max(other.prefix_len());
        Ok(Self::from_values(self.space(), len, |p| {
            self.value(p) + other.value(p)
        }))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.space() != other.space() {
            return Err(Error::SpaceMismatch);
        }
        let len = self.prefix_len().max(other.prefix_len());
        Ok(Self::from_values(self.space(), len, |p| {
            self.value(p) - other.value(p)
        }))
    }

    /// Pointwise square M(x)^2; exact in the model.
    pub fn square(&self) -> Self {
        Self::from_values(self.space(), self.prefix_len(), |p| {
            let m = self.value(p);
            m * m
        })
    }

    /// True when all four entries are almost null.
    pub fn is_almost_null(&self) -> bool {
        self.entries.iter().all(almost_null_membership)
    }
}

/// Spectral norm of a 2x2 real matrix, in closed form.
pub fn spectral_norm_2x2(m: &Matrix2<f64>) -> f64 {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let e = a * a + c * c;
    let g = b * b + d * d;
    let f = a * b + c * d;
    let t = ((e - g) * (e - g) + 4.0 * f * f).sqrt();
    (0.5 * (e + g + t)).max(0.0).sqrt()
}

const J0: Matrix2<f64> = Matrix2::new(0.0, 1.0, -1.0, 0.0);

/// The canonical rotation j = [[0, 1], [-1, 0]] as a 2x2 matrix.
pub fn canonical_rotation() -> Matrix2<f64> {
    J0
}

/// Output of `field_correct`.
#[derive(Debug, Clone)]
pub struct FieldCorrection {
    /// Exceptional isolated points where |n(x)| exceeded 1/2; the corrected
    /// field is set to the canonical rotation there.
    pub f_set: Vec<CKPoint>,
    pub n_prime: CKMatrixField,
    pub m_prime: CKMatrixField,
    /// max over represented points of |M'(x)^2 + I| (spectral norm).
    pub max_square_residual: f64,
    pub max_series_terms: usize,
}

/// Corrects a matrix field with almost-null defect n = M^2 + I to a field
/// M' = M + n' with M'(x)^2 = -I at every represented point.
///
/// Off the exceptional set F, n'(x) = M(x) . sum over k >= 1 of
/// b_k n(x)^k, truncated by the geometric tail bound with ratio
/// |n(x)| <= 1/2; on F the corrected value is the canonical rotation.
pub fn field_correct(m: &CKMatrixField, tau: f64) -> Result<FieldCorrection> {
    let eye = CKMatrixField::constant(m.space(), Matrix2::identity());
    let n = m.square().add(&eye)?;
    for r in 0..2 {
        for c in 0..2 {
            let tails = n.entry(r, c).tails();
            if let Some(&bad) = tails.iter().find(|&&t| t != 0.0) {
                return Err(Error::NonNullDefect {
                    row: r,
                    col: c,
                    tail: bad,
                });
            }
        }
    }

    let len = m.prefix_len().max(n.prefix_len());
    let points = represented_points(m.space(), len);
    let mut f_set = Vec::new();
    for p in &points {
        if matches!(p, CKPoint::Isolated { .. }) && spectral_norm_2x2(&n.value(p)) > 0.5 {
            f_set.push(*p);
        }
    }
    // off F the norm never exceeds 1/2; a value at or above 1 would break
    // the series and marks a model violation
    for p in &points {
        let norm = spectral_norm_2x2(&n.value(p));
        if !f_set.contains(p) && norm >= 1.0 {
            return Err(Error::ModelViolation {
                point: p.to_string(),
                norm,
            });
        }
    }

    let mut max_terms = 0usize;
    let m_prime = CKMatrixField::from_values(m.space(), len, |p| {
        if f_set.contains(p) {
            J0
        } else {
            let mx = m.value(p);
            let nx = n.value(p);
            let (corr, terms) = matrix2_series(&nx, tau);
            // interior mutation is fine here: from_values evaluates every
            // point exactly once per entry, and max is order-independent
            let _ = terms;
            mx + mx * corr
        }
    });
    // recompute term counts for the certificate (from_values closures are Fn)
    for p in &points {
        if !f_set.contains(p) {
            let (_, terms) = matrix2_series(&n.value(p), tau);
            max_terms = max_terms.max(terms);
        }
    }
    let n_prime = m_prime.sub(m)?;

    let mut max_square_residual = 0.0f64;
    for p in &points {
        let mp = m_prime.value(p);
        let r = spectral_norm_2x2(&(mp * mp + Matrix2::identity()));
        max_square_residual = max_square_residual.max(r);
    }
    if max_square_residual > tau {
        return Err(Error::InternalInvariant {
            msg: format!("corrected field misses M'^2 = -I: residual {max_square_residual:.3e}"),
        });
    }
    if !n_prime.is_almost_null() {
        return Err(Error::InternalInvariant {
            msg: "correction n' left the almost-null ideal".into(),
        });
    }
    Ok(FieldCorrection {
        f_set,
        n_prime,
        m_prime,
        max_square_residual,
        max_series_terms: max_terms,
    })
}

/// sum over k >= 1 of b_k n^k for a 2x2 block, truncated by the geometric
/// tail bound; requires |n| < 1.
fn matrix2_series(n: &Matrix2<f64>, tau: f64) -> (Matrix2<f64>, usize) {
    let rho = spectral_norm_2x2(n).min(0.999);
    let target = tau / 10.0;
    let mut sum = Matrix2::<f64>::zeros();
    let mut power = Matrix2::identity();
    let mut b = 1.0f64;
    for k in 0..400 {
        b *= (2 * k + 1) as f64 / (2 * k + 2) as f64;
        power *= n;
        sum += power * b;
        let term = b * spectral_norm_2x2(&power);
        if term == 0.0 || term * rho / (1.0 - rho) < target {
            return (sum, k + 1);
        }
    }
    (sum, 400)
}

/// Output of `field_conjugator`.
#[derive(Debug, Clone)]
pub struct FieldConjugation {
    pub p: CKMatrixField,
    pub q: CKMatrixField,
    /// max over points of |P(x) Q(x) - I|.
    pub max_inverse_residual: f64,
    /// max over points of |Q(x) j P(x) - M'(x)|.
    pub max_conjugation_residual: f64,
    pub min_abs_f2: f64,
    /// max over points of f2(x) f3(x); at most -1 + tau when M'^2 = -I.
    pub max_f2f3: f64,
}

/// Builds the explicit GL2 conjugation between a pointwise structure
/// M' (with M'^2 = -I) and the canonical rotation j:
/// P = [[1, 0], [f1, f2]], Q = P^{-1} = [[1, 0], [-f1/f2, 1/f2]], and
/// Q j P = M'. On points where M' equals j the formulas collapse to
/// P = Q = I.
pub fn field_conjugator(m_prime: &CKMatrixField, tau: f64) -> Result<FieldConjugation> {
    let len = m_prime.prefix_len();
    let points = represented_points(m_prime.space(), len);
    for p in &points {
        let mp = m_prime.value(p);
        let r = spectral_norm_2x2(&(mp * mp + Matrix2::identity()));
        if r > tau {
            return Err(Error::Precondition {
                msg: format!(
                    "field_conjugator needs M'^2 = -I within {tau:.3e}; residual {r:.3e} at {p}"
                ),
            });
        }
    }
    let f1 = m_prime.entry(0, 0);
    let f2 = m_prime.entry(0, 1);
    let f3 = m_prime.entry(1, 0);

    let mut min_abs_f2 = f64::INFINITY;
    for p in &points {
        let v = f2.value(p).abs();
        min_abs_f2 = min_abs_f2.min(v);
        if v < 1e-8 {
            return Err(Error::ZeroDivisor {
                point: p.to_string(),
            });
        }
    }

    let p_field = CKMatrixField::from_values(m_prime.space(), len, |pt| {
        Matrix2::new(1.0, 0.0, f1.value(pt), f2.value(pt))
    });
    let q_field = CKMatrixField::from_values(m_prime.space(), len, |pt| {
        let (a, b) = (f1.value(pt), f2.value(pt));
        Matrix2::new(1.0, 0.0, -a / b, 1.0 / b)
    });

    let mut max_inverse_residual = 0.0f64;
    let mut max_conjugation_residual = 0.0f64;
    let mut max_f2f3 = f64::NEG_INFINITY;
    for pt in &points {
        let pm = p_field.value(pt);
        let qm = q_field.value(pt);
        let inv_r = spectral_norm_2x2(&(pm * qm - Matrix2::identity()));
        let conj_r = spectral_norm_2x2(&(qm * J0 * pm - m_prime.value(pt)));
        max_inverse_residual = max_inverse_residual.max(inv_r);
        max_conjugation_residual = max_conjugation_residual.max(conj_r);
        max_f2f3 = max_f2f3.max(f2.value(pt) * f3.value(pt));
    }
    let bound = 10.0 * tau.max(1e-15) / (min_abs_f2 * min_abs_f2).min(1.0);
    if max_inverse_residual > bound || max_conjugation_residual > bound {
        return Err(Error::InternalInvariant {
            msg: format!(
                "conjugation residuals {max_inverse_residual:.3e}/{max_conjugation_residual:.3e} exceed {bound:.3e}"
            ),
        });
    }
    Ok(FieldConjugation {
        p: p_field,
        q: q_field,
        max_inverse_residual,
        max_conjugation_residual,
        min_abs_f2,
        max_f2f3,
    })
}

/// Certificate for the strict-singular decomposition of the correction:
/// n'. Id = (M . Id) sum over k of b_k (n^k . Id) W + V (n'. Id), with V
/// the finite-rank projection onto functions supported on F and W = Id - V.
#[derive(Debug, Clone)]
pub struct DecompositionCertificate {
    pub max_residual: f64,
    /// Rank of V in the model: two function components times |F|.
    pub v_rank: usize,
    pub series_terms: usize,
    /// Each power n^k stays in the almost-null ideal.
    pub powers_almost_null: bool,
}

/// Verifies the decomposition identity pointwise on all represented points.
///
/// Off F the W-term must reproduce n' through the series (including the
/// M(x) factor that the series definition of n' carries); on F the V-term
/// reproduces n' trivially, so the check there is that the identity is
/// consistent, i.e. residual zero by construction.
pub fn strict_singular_decomposition(
    m: &CKMatrixField,
    f_set: &[CKPoint],
    n_prime: &CKMatrixField,
    tau: f64,
) -> Result<DecompositionCertificate> {
    if m.space() != n_prime.space() {
        return Err(Error::SpaceMismatch);
    }
    let eye = CKMatrixField::constant(m.space(), Matrix2::identity());
    let n = m.square().add(&eye)?;
    let len = m.prefix_len().max(n_prime.prefix_len());
    let points = represented_points(m.space(), len);

    let mut powers_almost_null = true;
    for k in 1..=4usize {
        let mut pw = CKMatrixField::constant(m.space(), Matrix2::identity());
        for _ in 0..k {
            pw = CKMatrixField::from_values(m.space(), len, |p| pw.value(p) * n.value(p));
        }
        powers_almost_null &= pw.is_almost_null();
    }

    let mut max_residual = 0.0f64;
    let mut series_terms = 0usize;
    for p in &points {
        let lhs = n_prime.value(p);
        let rhs = if f_set.contains(p) {
            // V-term: the projection onto C_F(K) returns n' itself
            lhs
        } else {
            let (corr, terms) = matrix2_series(&n.value(p), tau);
            series_terms = series_terms.max(terms);
            m.value(p) * corr
        };
        let r = spectral_norm_2x2(&(lhs - rhs));
        if r > tau {
            return Err(Error::DecompositionIdentityFailed {
                residual: r,
                point: p.to_string(),
            });
        }
        max_residual = max_residual.max(r);
    }
    Ok(DecompositionCertificate {
        max_residual,
        v_rank: 2 * f_set.len(),
        series_terms,
        powers_almost_null,
    })
}

/// Splits an amalgam function into the constrained pair (f, g) on the
/// disjoint union, with f and g sharing the amalgamated value.
pub fn amalgam_to_pair(h: &CKFunction) -> Result<(CKFunction, CKFunction)> {
    match h {
        CKFunction::Amalgam {
            prefix1,
            prefix2,
            tail,
        } => Ok((
            CKFunction::Single {
                prefix: prefix1.clone(),
                tail: *tail,
            },
            CKFunction::Single {
                prefix: prefix2.clone(),
                tail: *tail,
            },
        )),
        _ => Err(Error::Precondition {
            msg: "amalgam_to_pair expects an amalgam function".into(),
        }),
    }
}

/// Rejoins a constrained pair into an amalgam function; the tails must
/// agree exactly.
pub fn pair_to_amalgam(f: &CKFunction, g: &CKFunction) -> Result<CKFunction> {
    match (f, g) {
        (
            CKFunction::Single {
                prefix: p1,
                tail: t1,
            },
            CKFunction::Single {
                prefix: p2,
                tail: t2,
            },
        ) => {
            if t1 != t2 {
                return Err(Error::ConstraintViolated {
                    left: *t1,
                    right: *t2,
                });
            }
            Ok(CKFunction::Amalgam {
                prefix1: p1.clone(),
                prefix2: p2.clone(),
                tail: *t1,
            })
        }
        _ => Err(Error::Precondition {
            msg: "pair_to_amalgam expects two single-copy functions".into(),
        }),
    }
}

/// Dimension bookkeeping on truncated prefixes of length `n`: the free pair
/// space has dimension 2(n+1), the amalgam (equivalently, the constrained
/// pair subspace) has dimension 2n+1, so the constraint has codimension 1.
pub fn truncated_dimensions(prefix_len: usize) -> (usize, usize) {
    (2 * (prefix_len + 1), 2 * prefix_len + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(prefix: &[f64], tail: f64) -> CKFunction {
        CKFunction::Single {
            prefix: prefix.to_vec(),
            tail,
        }
    }

    #[test]
    fn almost_null_examples() {
        assert!(almost_null_membership(&single(&[1.0, 0.5, 0.25], 0.0)));
        assert!(!almost_null_membership(&CKFunction::constant(
            CKSpace::Single,
            1.0
        )));
        // large values at finitely many isolated points are allowed
        assert!(almost_null_membership(&single(&[5.0], 0.0)));
    }

    #[test]
    fn singularity_test_matches_ideal() {
        assert!(multiplication_singularity_test(&single(&[2.0], 0.0)));
        assert!(!multiplication_singularity_test(&CKFunction::constant(
            CKSpace::Single,
            1.0
        )));
        assert!(!multiplication_singularity_test(&single(&[0.0, 0.0], 0.3)));
    }

    #[test]
    fn ideal_property() {
        let g = single(&[1.0, -0.5], 0.0);
        let h = single(&[3.0, 2.0, -1.0], 4.0);
        let gh = g.mul(&h).unwrap();
        assert!(almost_null_membership(&gh));
    }

    #[test]
    fn field_correct_constant_rotation() {
        let m = CKMatrixField::constant(CKSpace::Single, canonical_rotation());
        let out = field_correct(&m, 1e-10).unwrap();
        assert!(out.f_set.is_empty());
        assert_eq!(out.max_square_residual, 0.0);
        assert!(out.n_prime.is_almost_null());
        for p in m.points() {
            assert_eq!(out.m_prime.value(&p), m.value(&p));
        }
    }

    #[test]
    fn field_correct_scaled_rotation() {
        // M(x) = [[0, 1 + g(x)], [-1, 0]] with g almost null corrects to
        // (1 + g(x))^{-1/2} M(x) off F = empty
        let g = single(&[0.1, 0.05], 0.0);
        let zero = CKFunction::constant(CKSpace::Single, 0.0);
        let one_plus = CKFunction::constant(CKSpace::Single, 1.0).add(&g).unwrap();
        let m = CKMatrixField::new(
            zero.clone(),
            one_plus,
            CKFunction::constant(CKSpace::Single, -1.0),
            zero.clone(),
        )
        .unwrap();
        let out = field_correct(&m, 1e-12).unwrap();
        assert!(out.f_set.is_empty());
        assert!(out.max_square_residual <= 1e-12);
        for p in m.points() {
            let scale = (1.0 + g.value(&p)).powf(-0.5);
            let expect = m.value(&p) * scale;
            let diff = out.m_prime.value(&p) - expect;
            assert!(spectral_norm_2x2(&diff) < 1e-12, "at {p}");
        }
    }

    #[test]
    fn field_correct_with_exceptional_point() {
        // defect of norm 2 at the first isolated point only
        let d = single(&[2.0], 0.0);
        let zero = CKFunction::constant(CKSpace::Single, 0.0);
        let one_plus = CKFunction::constant(CKSpace::Single, 1.0).add(&d).unwrap();
        let m = CKMatrixField::new(
            zero.clone(),
            one_plus,
            CKFunction::constant(CKSpace::Single, -1.0),
            zero.clone(),
        )
        .unwrap();
        // n = M^2 + I = diag(-d(x)(...)), norm 2 at x1: F = {x1}
        let out = field_correct(&m, 1e-10).unwrap();
        assert_eq!(out.f_set.len(), 1);
        assert_eq!(out.f_set[0], CKPoint::Isolated { copy: 0, index: 0 });
        assert_eq!(
            out.m_prime.value(&CKPoint::Isolated { copy: 0, index: 0 }),
            canonical_rotation()
        );
        assert!(out.max_square_residual <= 1e-10);
    }

    #[test]
    fn field_correct_rejects_non_null_defect() {
        // tail 0.3 in the defect: M^2 + I does not vanish at the limit
        let m = CKMatrixField::constant(CKSpace::Single, Matrix2::new(0.0, 1.3, -1.0, 0.0));
        assert!(matches!(
            field_correct(&m, 1e-10),
            Err(Error::NonNullDefect { .. })
        ));
    }

    #[test]
    fn conjugator_constant_rotation() {
        let m = CKMatrixField::constant(CKSpace::Single, canonical_rotation());
        let out = field_conjugator(&m, 1e-12).unwrap();
        for p in m.points() {
            assert_eq!(out.p.value(&p), Matrix2::identity());
            assert_eq!(out.q.value(&p), Matrix2::identity());
        }
        assert_eq!(out.max_conjugation_residual, 0.0);
    }

    #[test]
    fn conjugator_parametrized_structure() {
        // M'(x) = [[t, 1], [-1 - t^2, -t]](x) squares to -I exactly
        let t = single(&[1.0, 0.5], 0.0);
        let one = CKFunction::constant(CKSpace::Single, 1.0);
        let f3 = CKFunction::from_values(CKSpace::Single, 2, |p| {
            let tv = t.value(p);
            -1.0 - tv * tv
        });
        let f4 = t.scale(-1.0);
        let m = CKMatrixField::new(t.clone(), one, f3, f4).unwrap();
        let out = field_conjugator(&m, 1e-12).unwrap();
        for p in m.points() {
            let expect_p = Matrix2::new(1.0, 0.0, t.value(&p), 1.0);
            assert_eq!(out.p.value(&p), expect_p);
            let conj = out.q.value(&p) * canonical_rotation() * out.p.value(&p);
            assert!(spectral_norm_2x2(&(conj - m.value(&p))) < 1e-12);
        }
        assert!(out.max_f2f3 <= -1.0 + 1e-12);
    }

    #[test]
    fn decomposition_identity_holds() {
        let d = single(&[2.0, 0.3, -0.2], 0.0);
        let zero = CKFunction::constant(CKSpace::Single, 0.0);
        let one_plus = CKFunction::constant(CKSpace::Single, 1.0).add(&d).unwrap();
        let m = CKMatrixField::new(
            zero.clone(),
            one_plus,
            CKFunction::constant(CKSpace::Single, -1.0),
            zero.clone(),
        )
        .unwrap();
        let out = field_correct(&m, 1e-10).unwrap();
        let cert = strict_singular_decomposition(&m, &out.f_set, &out.n_prime, 1e-10).unwrap();
        assert!(cert.max_residual <= 1e-10);
        assert!(cert.powers_almost_null);
        assert_eq!(cert.v_rank, 2 * out.f_set.len());
    }

    #[test]
    fn decomposition_detects_tampering() {
        let d = single(&[0.3, -0.1], 0.0);
        let zero = CKFunction::constant(CKSpace::Single, 0.0);
        let one_plus = CKFunction::constant(CKSpace::Single, 1.0).add(&d).unwrap();
        let m = CKMatrixField::new(
            zero.clone(),
            one_plus,
            CKFunction::constant(CKSpace::Single, -1.0),
            zero.clone(),
        )
        .unwrap();
        let out = field_correct(&m, 1e-10).unwrap();
        // perturb one prefix entry of n' by 1e-3
        let mut tampered = out.n_prime.clone();
        let bumped = tampered.entry(0, 1).add(&single(&[1e-3], 0.0)).unwrap();
        tampered = CKMatrixField::new(
            tampered.entry(0, 0).clone(),
            bumped,
            tampered.entry(1, 0).clone(),
            tampered.entry(1, 1).clone(),
        )
        .unwrap();
        assert!(matches!(
            strict_singular_decomposition(&m, &out.f_set, &tampered, 1e-10),
            Err(Error::DecompositionIdentityFailed { .. })
        ));
    }

    #[test]
    fn amalgam_pair_round_trip() {
        let h = CKFunction::Amalgam {
            prefix1: vec![2.0],
            prefix2: vec![3.0],
            tail: 5.0,
        };
        let (f, g) = amalgam_to_pair(&h).unwrap();
        assert_eq!(f.value(&CKPoint::Limit { copy: 0 }), 5.0);
        assert_eq!(g.value(&CKPoint::Limit { copy: 0 }), 5.0);
        assert_eq!(f.value(&CKPoint::Isolated { copy: 0, index: 0 }), 2.0);
        assert_eq!(g.value(&CKPoint::Isolated { copy: 0, index: 0 }), 3.0);
        let back = pair_to_amalgam(&f, &g).unwrap();
        assert_eq!(back, h);

        let constant = CKFunction::constant(CKSpace::Amalgam, 1.0);
        let (cf, cg) = amalgam_to_pair(&constant).unwrap();
        assert_eq!(cf, CKFunction::constant(CKSpace::Single, 1.0));
        assert_eq!(cg, CKFunction::constant(CKSpace::Single, 1.0));
    }

    #[test]
    fn amalgam_constraint_enforced() {
        let f = single(&[1.0], 2.0);
        let g = single(&[1.0], 3.0);
        assert!(matches!(
            pair_to_amalgam(&f, &g),
            Err(Error::ConstraintViolated { .. })
        ));
    }

    #[test]
    fn truncated_dimension_bookkeeping() {
        for n in [0usize, 1, 5, 50] {
            let (pair, amalgam) = truncated_dimensions(n);
            assert_eq!(pair, 2 * n + 2);
            assert_eq!(amalgam, 2 * n + 1);
            assert_eq!(pair - amalgam, 1);
        }
    }

    #[test]
    fn spectral_norm_closed_form() {
        let m = Matrix2::new(0.0, 2.0, 0.0, 0.0);
        assert!((spectral_norm_2x2(&m) - 2.0).abs() < 1e-15);
        let id = Matrix2::<f64>::identity();
        assert!((spectral_norm_2x2(&id) - 1.0).abs() < 1e-15);
        let r = Matrix2::new(1.0, 2.0, -0.5, 0.3);
        let sv = nalgebra::DMatrix::from_row_slice(2, 2, r.as_slice())
            .svd(false, false)
            .singular_values[0];
        assert!((spectral_norm_2x2(&r) - sv).abs() < 1e-12);
    }
}
