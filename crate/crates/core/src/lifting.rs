//! Lifting of approximate square roots of -Id.
//!
//! Three pipelines live here:
//! - `complex_lift`: over C, an operator B with small defect B^2 + Id is
//!   corrected to A = 2iP - iI via the spectral projection P for the
//!   eigenvalue cluster in the upper half plane; A^2 = -Id holds exactly
//!   once P is an exact projection.
//! - `real_dichotomy`: over R, an operator A with defect S = A^2 + Id is
//!   corrected either to an exact structure (even branch) or to the block
//!   form diag(1, J) on a distinguished splitting (odd branch). The
//!   correction on the small part of the defect spectrum uses the binomial
//!   series of -1 + (1-z)^{-1/2}; the rest is replaced wholesale by a
//!   finite-rank structure built on range(Q).
//! - parity accounting: counting real eigenvalues with multiplicity, whose
//!   parity is a homotopy invariant along polynomial operator paths.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{default_cluster_radius, ComplexOperator, RealOperator};
use crate::riesz::{
    real_part_projection, riesz_projection, select_disk_contour, Contour, RectContour,
};
use crate::structures::ComplexStructure;

/// Relative singular-value threshold for all rank decisions in this module.
const RANK_TOL: f64 = 1e-9;

/// Coefficients b_1 .. b_n of the expansion
/// -1 + (1 - z)^{-1/2} = sum over n >= 1 of b_n z^n,
/// by the recurrence b_0 = 1, b_{k+1} = b_k (2k+1) / (2k+2).
///
/// All coefficients are positive, decreasing, and tend to zero; equivalently
/// b_n = C(2n, n) / 4^n.
pub fn binomial_coefficients(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut b = 1.0f64;
    for k in 0..n {
        b *= (2 * k + 1) as f64 / (2 * k + 2) as f64;
        out.push(b);
    }
    out
}

/// Finite surrogate for the ideal membership test: an operator fits the
/// budget when its rank stays under the rank bound or its norm under the
/// norm bound. Bounds set to `None` are unavailable rather than infinite;
/// at least one must be present.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealBudget {
    max_rank: Option<usize>,
    max_norm: Option<f64>,
}

impl IdealBudget {
    pub fn new(max_rank: Option<usize>, max_norm: Option<f64>) -> Result<Self> {
        if max_rank.is_none() && max_norm.is_none() {
            return Err(Error::Precondition {
                msg: "ideal budget needs at least one finite bound".into(),
            });
        }
        Ok(Self { max_rank, max_norm })
    }

    /// Defaults from the surrogate model: rank budget dim/4, norm budget 1/2.
    pub fn default_for_dim(dim: usize) -> Self {
        Self {
            max_rank: Some(dim / 4),
            max_norm: Some(0.5),
        }
    }

    pub fn max_rank(&self) -> Option<usize> {
        self.max_rank
    }

    pub fn max_norm(&self) -> Option<f64> {
        self.max_norm
    }

    fn admits(&self, rank: usize, norm: f64) -> bool {
        let by_rank = self.max_rank.is_some_and(|r| rank <= r);
        let by_norm = self.max_norm.is_some_and(|n| norm <= n);
        by_rank || by_norm
    }

    fn check(&self, what: &str, rank: usize, norm: f64) -> Result<()> {
        if self.admits(rank, norm) {
            Ok(())
        } else {
            Err(Error::BudgetExceeded {
                detail: format!(
                    "{what}: rank {rank} vs bound {:?}, norm {norm:.6e} vs bound {:?}",
                    self.max_rank, self.max_norm
                ),
            })
        }
    }
}

/// An operator A together with its stored defect S = A^2 + Id.
///
/// S is computed once at construction and never recomputed, so it commutes
/// with A to machine precision by construction.
#[derive(Debug, Clone)]
pub struct AlmostComplexStructure {
    a: RealOperator,
    s: RealOperator,
    rank_s: usize,
    norm_s: f64,
}

impl AlmostComplexStructure {
    pub fn new(a: RealOperator) -> Self {
        let n = a.dim();
        let s_mat = a.matrix() * a.matrix() + DMatrix::<f64>::identity(n, n);
        let s = RealOperator::new(s_mat).expect("finite square");
        let rank_s = s.rank_tol(RANK_TOL);
        let norm_s = s.opnorm();
        Self {
            a,
            s,
            rank_s,
            norm_s,
        }
    }

    pub fn operator(&self) -> &RealOperator {
        &self.a
    }

    pub fn defect(&self) -> &RealOperator {
        &self.s
    }

    pub fn rank_defect(&self) -> usize {
        self.rank_s
    }

    pub fn norm_defect(&self) -> f64 {
        self.norm_s
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }
}

/// Even-or-odd parity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(n: usize) -> Self {
        if n.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }
}

impl std::fmt::Display for Parity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which algebraic form of the series identity was certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesResidualForm {
    /// |(P+s)^2 - P (Id-S)^{-1}|
    Inverse,
    /// |(P+s)^2 (Id-S) - P|, used when Id - S is singular to tolerance
    Product,
}

impl SeriesResidualForm {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeriesResidualForm::Inverse => "inverse",
            SeriesResidualForm::Product => "product",
        }
    }
}

/// Numerical evidence accompanying a dichotomy outcome. All residuals are
/// Frobenius norms, an upper bound for the operator norm.
#[derive(Debug, Clone)]
pub struct DichotomyCertificate {
    pub dim: usize,
    pub rank_s: usize,
    pub norm_s: f64,
    pub budget_rank: Option<usize>,
    pub budget_norm: Option<f64>,
    pub fast_path: bool,
    pub contour: Option<RectContour>,
    pub rank_p: usize,
    pub rank_q: usize,
    /// Spectral-radius estimate of SP: the largest enclosed eigenvalue
    /// modulus.
    pub rho: f64,
    pub series_terms: usize,
    pub series_residual: f64,
    pub series_residual_form: SeriesResidualForm,
    pub projection_commutation: f64,
    pub projection_imag_norm: f64,
    pub rank_v: usize,
    pub norm_v: f64,
    /// Even branch: |(A+v)^2 + Id|. Odd branch: |M^{-1}(A+v)M - diag(1, J_Y)|
    /// in the returned basis M = (e, Y_basis).
    pub outcome_residual: f64,
    /// Odd branch only: |M^{-1}(A+v)^2 M - diag(1, -Id)|, the square-form
    /// reading of the block alternative.
    pub odd_square_residual: Option<f64>,
    /// True when the odd outcome was re-expressed in the standard
    /// R (+) Y splitting by a finite-rank repair.
    pub realigned: bool,
}

/// Outcome of the real dichotomy: exactly one of the two branches.
#[derive(Debug, Clone)]
pub enum LiftOutcome {
    /// (A+v)^2 = -Id within tolerance.
    Even {
        j: ComplexStructure,
        v: RealOperator,
        cert: DichotomyCertificate,
    },
    /// In the basis (e, Y_basis), A+v = diag(1, J_Y) within tolerance.
    Odd {
        e: DVector<f64>,
        y_basis: DMatrix<f64>,
        j_y: ComplexStructure,
        v: RealOperator,
        a_plus_v: RealOperator,
        cert: DichotomyCertificate,
    },
}

impl LiftOutcome {
    pub fn is_even(&self) -> bool {
        matches!(self, LiftOutcome::Even { .. })
    }

    pub fn certificate(&self) -> &DichotomyCertificate {
        match self {
            LiftOutcome::Even { cert, .. } => cert,
            LiftOutcome::Odd { cert, .. } => cert,
        }
    }

    pub fn correction(&self) -> &RealOperator {
        match self {
            LiftOutcome::Even { v, .. } => v,
            LiftOutcome::Odd { v, .. } => v,
        }
    }

    pub fn corrected_operator(&self) -> &RealOperator {
        match self {
            LiftOutcome::Even { j, .. } => j.operator(),
            LiftOutcome::Odd { a_plus_v, .. } => a_plus_v,
        }
    }
}

/// Result of the complex lifting A = 2iP - iI.
#[derive(Debug, Clone)]
pub struct ComplexLift {
    pub a: ComplexOperator,
    /// |A^2 + Id| (Frobenius).
    pub square_residual: f64,
    /// |AB - BA| (Frobenius).
    pub commutation_residual: f64,
    /// Operator norm of A - B.
    pub diff_norm: f64,
    pub diff_rank: usize,
    pub fast_path: bool,
    /// Radius of the circle centered at i when the projection was computed.
    pub contour_radius: Option<f64>,
}

/// Threshold under which a defect counts as numerically zero, making the
/// fast path (return the input unchanged) both exact and within tolerance.
fn fast_path_threshold(tau: f64, scale: f64) -> f64 {
    tau.min(1e-11 * scale.max(1.0) * scale.max(1.0))
}

/// Lifts a complex operator with B^2 = -Id + S, S in the budget, to an
/// exact square root of -Id commuting with B.
///
/// The spectrum of B splits into clusters near i and near -i; the Riesz
/// projection P for the upper cluster over a circle centered at i yields
/// A = 2iP - iI with A^2 = -(Id + 4(P^2 - P)).
pub fn complex_lift(b: &ComplexOperator, budget: &IdealBudget, tau: f64) -> Result<ComplexLift> {
    complex_lift_with_margin(b, budget, tau, None)
}

/// `complex_lift` with an explicit contour-to-spectrum margin; `None` takes
/// the default 1e-3 times the operator norm.
pub fn complex_lift_with_margin(
    b: &ComplexOperator,
    budget: &IdealBudget,
    tau: f64,
    margin: Option<f64>,
) -> Result<ComplexLift> {
    let n = b.dim();
    if n == 0 {
        return Err(Error::Precondition {
            msg: "complex_lift requires positive dimension".into(),
        });
    }
    let eye = DMatrix::<Complex64>::identity(n, n);
    let s = b.matrix() * b.matrix() + &eye;
    let s_op = ComplexOperator::new(s)?;
    let norm_s = s_op.opnorm();
    let rank_s = s_op.rank_tol(RANK_TOL);
    budget.check("defect S = B^2 + Id", rank_s, norm_s)?;

    let scale = b.opnorm();
    if norm_s <= fast_path_threshold(tau, scale) {
        return Ok(ComplexLift {
            a: b.clone(),
            square_residual: s_op.frobenius(),
            commutation_residual: 0.0,
            diff_norm: 0.0,
            diff_rank: 0,
            fast_path: true,
            contour_radius: None,
        });
    }

    let spec = b.eig(default_cluster_radius(scale))?;
    let ci = Complex64::new(0.0, 1.0);
    let delta = margin.unwrap_or(1e-3 * scale.max(1.0));
    let mut rho_plus = 0.0f64;
    let mut rho_minus = f64::INFINITY;
    for c in spec.clusters() {
        if c.value.im.abs() <= delta {
            return Err(Error::NoSeparatingContour {
                detail: format!(
                    "eigenvalue {}+{}i lies within {delta:.3e} of the real axis between the clusters",
                    c.value.re, c.value.im
                ),
            });
        }
        let d = (c.value - ci).norm();
        if c.value.im > 0.0 {
            rho_plus = rho_plus.max(d);
        } else {
            rho_minus = rho_minus.min(d);
        }
    }
    if rho_minus - rho_plus <= 2.0 * delta {
        return Err(Error::NoSeparatingContour {
            detail: format!(
                "clusters near i and -i are not separable: upper radius {rho_plus:.3e}, \
                 nearest excluded distance {rho_minus:.3e}"
            ),
        });
    }
    let radius = if rho_minus.is_finite() {
        0.5 * (rho_plus + rho_minus)
    } else {
        rho_plus + 1.0
    };
    let contour = Contour::Circle {
        center: ci,
        radius,
        nodes: 24,
    };
    let proj = riesz_projection(b, &contour, tau.min(1e-10))?;

    let p = proj.p.matrix();
    let a_mat = p * (2.0 * ci) - &eye * ci;
    let a = ComplexOperator::new(a_mat)?;

    let square_residual = (a.matrix() * a.matrix() + &eye).norm();
    let commutation_residual = (a.matrix() * b.matrix() - b.matrix() * a.matrix()).norm();
    if square_residual > tau {
        return Err(Error::InternalInvariant {
            msg: format!("lifted operator misses A^2 = -Id: residual {square_residual:.3e}"),
        });
    }
    let diff = ComplexOperator::new(a.matrix() - b.matrix())?;
    let diff_norm = diff.opnorm();
    let diff_rank = if diff.frobenius() <= fast_path_threshold(tau, scale) {
        0
    } else {
        diff.rank_tol(RANK_TOL)
    };
    Ok(ComplexLift {
        a,
        square_residual,
        commutation_residual,
        diff_norm,
        diff_rank,
        fast_path: false,
        contour_radius: Some(radius),
    })
}

/// Normalizes column signs so the first component of significant magnitude
/// is positive; keeps singular bases deterministic.
fn fix_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut flip = false;
        for i in 0..m.nrows() {
            let x = m[(i, j)];
            if x.abs() > 1e-12 {
                flip = x < 0.0;
                break;
            }
        }
        if flip {
            for i in 0..m.nrows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Rank of a polished projection matrix: a nonzero idempotent has operator
/// norm at least 1, so anything below 1/2 is the zero projection.
fn projection_rank(p: &RealOperator) -> usize {
    if p.opnorm() < 0.5 {
        0
    } else {
        p.rank_tol(RANK_TOL)
    }
}

/// Rank and orthonormal null-space basis of a short row matrix, via the
/// orthogonal projector onto the row-space complement.
fn row_null_space(rows: &DMatrix<f64>, rel_tol: f64) -> Result<(usize, DMatrix<f64>)> {
    let n = rows.ncols();
    let t = rows.transpose();
    let qr = t.col_piv_qr();
    let r = qr.r();
    let r00 = r
        .diagonal()
        .iter()
        .fold(0.0f64, |a: f64, &x: &f64| a.max(x.abs()));
    let rank = if r00 == 0.0 {
        0
    } else {
        r.diagonal()
            .iter()
            .filter(|x| x.abs() > rel_tol * r00)
            .count()
    };
    let q = qr.q();
    let mut proj = DMatrix::<f64>::identity(n, n);
    for k in 0..rank {
        let v = q.column(k);
        proj -= v * v.transpose();
    }
    let basis = range_basis(&proj, n - rank)?;
    Ok((rank, basis))
}

/// Orthonormal basis of the range of `m` at the given numerical rank, from
/// a column-pivoted Householder QR (backward stable, unlike the singular
/// vectors on inputs with tightly clustered singular values).
fn range_basis(m: &DMatrix<f64>, rank: usize) -> Result<DMatrix<f64>> {
    if rank == 0 {
        return Ok(DMatrix::zeros(m.nrows(), 0));
    }
    let qr = m.clone().col_piv_qr();
    let q = qr.q();
    if q.ncols() < rank {
        return Err(Error::InternalInvariant {
            msg: format!(
                "range basis of rank {rank} from a {} column factor",
                q.ncols()
            ),
        });
    }
    let mut basis = q.columns(0, rank).into_owned();
    fix_column_signs(&mut basis);
    Ok(basis)
}

/// Finite-rank structure on range(Q) from an orthonormal basis u_0..u_{r-1}:
/// even rank pairs consecutive vectors into rotation blocks; odd rank fixes
/// u_0 and pairs the rest. Returns (F, fixed vector if any).
fn structure_on_range(basis: &DMatrix<f64>) -> (DMatrix<f64>, Option<DVector<f64>>) {
    let n = basis.nrows();
    let r = basis.ncols();
    let mut f = DMatrix::<f64>::zeros(n, n);
    let (start, fixed) = if r % 2 == 1 {
        let u0 = basis.column(0).into_owned();
        f += &u0 * u0.transpose();
        (1, Some(u0))
    } else {
        (0, None)
    };
    let mut k = start;
    while k + 1 < r {
        let ua = basis.column(k);
        let ub = basis.column(k + 1);
        // F ua = -ub, F ub = ua: a rotation block in the (ua, ub) plane
        f += ub * ua.transpose() * -1.0;
        f += ua * ub.transpose();
        k += 2;
    }
    (f, fixed)
}

/// The even/odd dichotomy for a real operator with budgeted defect.
pub fn real_dichotomy(
    acs: &AlmostComplexStructure,
    budget: &IdealBudget,
    tau: f64,
) -> Result<LiftOutcome> {
    real_dichotomy_with_margin(acs, budget, tau, None)
}

/// `real_dichotomy` with an explicit contour-to-spectrum margin; `None`
/// takes the default 1e-3 times the defect norm.
pub fn real_dichotomy_with_margin(
    acs: &AlmostComplexStructure,
    budget: &IdealBudget,
    tau: f64,
    margin: Option<f64>,
) -> Result<LiftOutcome> {
    let n = acs.dim();
    if n == 0 {
        return Err(Error::Precondition {
            msg: "real_dichotomy requires positive dimension".into(),
        });
    }
    budget.check("defect S = A^2 + Id", acs.rank_defect(), acs.norm_defect())?;

    let a = acs.operator();
    let a_norm = a.opnorm();

    // fast path: the defect is numerically zero, A is already a structure
    if acs.norm_defect() <= fast_path_threshold(tau, a_norm) {
        if !n.is_multiple_of(2) {
            return Err(Error::InternalInvariant {
                msg: format!(
                    "odd dimension {n} with numerically vanishing defect {:.3e}",
                    acs.norm_defect()
                ),
            });
        }
        let j = ComplexStructure::new(a.clone(), tau)?;
        let cert = DichotomyCertificate {
            dim: n,
            rank_s: acs.rank_defect(),
            norm_s: acs.norm_defect(),
            budget_rank: budget.max_rank(),
            budget_norm: budget.max_norm(),
            fast_path: true,
            contour: None,
            rank_p: n,
            rank_q: 0,
            rho: 0.0,
            series_terms: 0,
            series_residual: 0.0,
            series_residual_form: SeriesResidualForm::Inverse,
            projection_commutation: 0.0,
            projection_imag_norm: 0.0,
            rank_v: 0,
            norm_v: 0.0,
            outcome_residual: acs.norm_defect(),
            odd_square_residual: None,
            realigned: false,
        };
        return Ok(LiftOutcome::Even {
            j,
            v: RealOperator::zeros(n),
            cert,
        });
    }

    let s = acs.defect();
    let spec_s = s.eig(default_cluster_radius(acs.norm_defect()))?;
    let delta = margin.unwrap_or(1e-3 * acs.norm_defect().clamp(1e-6, 1.0));
    let rect = select_disk_contour(&spec_s, delta)?;

    let s_c: ComplexOperator = s.into();
    // quadrature errors get amplified by the splitting conditioning in the
    // corrector algebra downstream, so aim well below tau here
    let quad_tau = (tau * 1e-3).clamp(1e-13, 1e-10);
    let proj = riesz_projection(&s_c, &Contour::Rect(rect.clone()), quad_tau)?;
    let projection_imag_norm = proj.p.imag_part().frobenius();
    let p_real = real_part_projection(&proj, tau.max(1e-10))?;
    let p = p_real.matrix().clone();
    let eye = DMatrix::<f64>::identity(n, n);
    let q = &eye - &p;

    let rank_p = projection_rank(&p_real);
    let rank_q = projection_rank(&RealOperator::new(q.clone())?);
    if rank_p + rank_q != n {
        return Err(Error::InternalInvariant {
            msg: format!("projection ranks {rank_p} + {rank_q} do not split dimension {n}"),
        });
    }
    if !rank_p.is_multiple_of(2) {
        return Err(Error::InternalInvariant {
            msg: format!("range(P) has odd rank {rank_p} but carries a complex structure"),
        });
    }
    if rank_q > acs.rank_defect() {
        return Err(Error::InternalInvariant {
            msg: format!(
                "rank(Q) = {rank_q} exceeds rank(S) = {}; the contour failed to enclose the kernel part",
                acs.rank_defect()
            ),
        });
    }

    // series correction on the enclosed part
    let rho = proj
        .enclosed
        .iter()
        .map(|c| c.value.norm())
        .fold(0.0, f64::max);
    if rho >= 1.0 - 1e-9 {
        return Err(Error::SeriesNonConvergence { rho });
    }
    let (s_corr, series_terms) = binomial_series(s.matrix(), &p, rho, tau)?;

    // certify (P + s)^2 = P (Id - S)^{-1}, in product form when Id - S is
    // singular to tolerance
    let ps = &p + &s_corr;
    let ps2 = &ps * &ps;
    let id_minus_s = &eye - s.matrix();
    let ims = RealOperator::new(id_minus_s.clone())?;
    let (series_residual, series_residual_form) = match ims.inverse(1e-10) {
        Ok(inv) => (
            (&ps2 - &p * inv.matrix()).norm(),
            SeriesResidualForm::Inverse,
        ),
        Err(_) => (
            (&ps2 * &id_minus_s - &p).norm(),
            SeriesResidualForm::Product,
        ),
    };
    if series_residual > tau.max(1e-10) * id_minus_s.norm().max(1.0) {
        return Err(Error::InternalInvariant {
            msg: format!("series identity residual {series_residual:.3e} out of tolerance"),
        });
    }

    let q_basis = range_basis(&q, rank_q)?;
    let (f_mat, fixed) = structure_on_range(&q_basis);
    let s_prime = &f_mat * &q - a.matrix() * &q;
    let v_mat = a.matrix() * &s_corr + s_prime;
    let v = RealOperator::new(v_mat.clone())?;
    let norm_v = v.opnorm();
    let rank_v = if v.frobenius() <= fast_path_threshold(tau, a_norm) {
        0
    } else {
        v.rank_tol(RANK_TOL)
    };
    if rank_v > 3 * acs.rank_defect() + 3 {
        return Err(Error::BudgetExceeded {
            detail: format!(
                "correction rank {rank_v} exceeds the certified chain 3 rank(S) + 3 = {}",
                3 * acs.rank_defect() + 3
            ),
        });
    }

    let apv = a.matrix() + &v_mat;
    let mut cert = DichotomyCertificate {
        dim: n,
        rank_s: acs.rank_defect(),
        norm_s: acs.norm_defect(),
        budget_rank: budget.max_rank(),
        budget_norm: budget.max_norm(),
        fast_path: false,
        contour: Some(rect),
        rank_p,
        rank_q,
        rho,
        series_terms,
        series_residual,
        series_residual_form,
        projection_commutation: proj.commutation_residual,
        projection_imag_norm,
        rank_v,
        norm_v,
        outcome_residual: 0.0,
        odd_square_residual: None,
        realigned: false,
    };

    if rank_q.is_multiple_of(2) {
        let square_residual = (&apv * &apv + &eye).norm();
        if square_residual > tau {
            return Err(Error::InternalInvariant {
                msg: format!("even branch residual {square_residual:.3e} exceeds {tau:.3e}"),
            });
        }
        cert.outcome_residual = square_residual;
        let j = ComplexStructure::new(RealOperator::new(apv)?, tau)?;
        Ok(LiftOutcome::Even { j, v, cert })
    } else {
        let e = fixed.expect("odd rank produces a fixed direction");
        // basis of the complement: the paired part of range(Q), then range(P)
        let p_basis = range_basis(&p, rank_p)?;
        let mut y_cols: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
        for k in 1..rank_q {
            y_cols.push(q_basis.column(k).into_owned());
        }
        for k in 0..rank_p {
            y_cols.push(p_basis.column(k).into_owned());
        }
        let y_basis = if y_cols.is_empty() {
            DMatrix::<f64>::zeros(n, 0)
        } else {
            DMatrix::from_columns(&y_cols)
        };
        let mut m = DMatrix::<f64>::zeros(n, n);
        m.column_mut(0).copy_from(&e);
        for (k, col) in y_cols.iter().enumerate() {
            m.column_mut(k + 1).copy_from(col);
        }
        let m_inv = m
            .clone()
            .lu()
            .try_inverse()
            .ok_or(Error::InternalInvariant {
                msg: "odd-branch basis (e, Y) is singular".into(),
            })?;
        let t = &m_inv * &apv * &m;
        let j_y_mat = t.view((1, 1), (n - 1, n - 1)).into_owned();
        let mut block = DMatrix::<f64>::zeros(n, n);
        block[(0, 0)] = 1.0;
        block.view_mut((1, 1), (n - 1, n - 1)).copy_from(&j_y_mat);
        let block_residual = (&t - &block).norm();
        if block_residual > tau {
            return Err(Error::InternalInvariant {
                msg: format!("odd branch block residual {block_residual:.3e} exceeds {tau:.3e}"),
            });
        }
        let apv2 = &apv * &apv;
        let mut neg_block = -DMatrix::<f64>::identity(n, n);
        neg_block[(0, 0)] = 1.0;
        let odd_square_residual = (&m_inv * apv2 * &m - neg_block).norm();
        cert.outcome_residual = block_residual;
        cert.odd_square_residual = Some(odd_square_residual);
        let j_y = ComplexStructure::new(RealOperator::new(j_y_mat)?, tau)?;
        Ok(LiftOutcome::Odd {
            e,
            y_basis,
            j_y,
            v,
            a_plus_v: RealOperator::new(apv)?,
            cert,
        })
    }
}

/// Sum of b_k (SP)^k truncated once the geometric tail bound (ratio `rho`,
/// tempered by the observed term decay) drops below tau/10.
fn binomial_series(
    s: &DMatrix<f64>,
    p: &DMatrix<f64>,
    rho: f64,
    tau: f64,
) -> Result<(DMatrix<f64>, usize)> {
    let n = s.nrows();
    let sp = s * p;
    // the truncation error gets amplified by the conditioning of the
    // spectral splitting downstream, so aim far below tau
    let target = (tau * 1e-4).min(tau / 10.0).max(1e-14);
    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut b = 1.0f64;
    let mut prev_norm = f64::INFINITY;
    const MAX_TERMS: usize = 5_000;
    for k in 0..MAX_TERMS {
        b *= (2 * k + 1) as f64 / (2 * k + 2) as f64;
        power = &power * &sp;
        let term_norm = b * power.norm();
        sum += &power * b;
        if term_norm == 0.0 {
            return Ok((sum, k + 1));
        }
        // analytic bound with the eigenvalue-based ratio, tempered by the
        // observed decay when transients of the non-normal part dominate
        let observed = if prev_norm.is_finite() && prev_norm > 0.0 {
            (term_norm / prev_norm).min(0.999_999)
        } else {
            rho
        };
        let ratio = rho.max(observed).min(0.999_999);
        let tail = term_norm * ratio / (1.0 - ratio);
        if tail < target && k >= 1 {
            return Ok((sum, k + 1));
        }
        prev_norm = term_norm;
    }
    Err(Error::SeriesNonConvergence { rho })
}

/// Re-expresses an odd outcome in the standard R (+) Y splitting (first
/// coordinate axis against its complementary hyperplane) by a finite-rank
/// repair of rank at most 3.
///
/// The rank-1 case applies when the returned hyperplane already equals the
/// standard one; otherwise the structure is kept on the J-stable space
/// Z = Y' /\ Y /\ J^{-1}Y (codimension 3) and replaced by a fresh rotation
/// block on a 2-dimensional complement inside Y. A codimension-2 space Z
/// would yield a rank-2 repair squaring to -Id on an odd-dimensional space,
/// which the parity exclusion forbids; hitting it is reported as an internal
/// invariant violation.
pub fn realign_to_standard_split(outcome: &LiftOutcome, tau: f64) -> Result<LiftOutcome> {
    let (e, y_basis, v, apv, cert) = match outcome {
        LiftOutcome::Odd {
            e,
            y_basis,
            v,
            a_plus_v,
            cert,
            ..
        } => (e, y_basis, v, a_plus_v, cert),
        LiftOutcome::Even { .. } => {
            return Err(Error::Precondition {
                msg: "realignment applies to the odd branch only".into(),
            })
        }
    };
    let n = apv.dim();
    let b = apv.matrix();
    if n == 1 {
        return Ok(outcome.clone());
    }

    // functionals cutting out Y' (returned hyperplane) and Y (standard)
    let mut m = DMatrix::<f64>::zeros(n, n);
    m.column_mut(0).copy_from(e);
    for k in 0..n - 1 {
        m.column_mut(k + 1).copy_from(&y_basis.column(k));
    }
    let m_inv = m
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::InternalInvariant {
            msg: "odd outcome basis is singular".into(),
        })?;
    let psi = m_inv.row(0).into_owned();
    let psi_unit = &psi / psi.norm();

    let scale = b.norm().max(1.0);

    // Case Y' = Y: psi is proportional to the first coordinate functional
    let mut e1_row = nalgebra::RowDVector::<f64>::zeros(n);
    e1_row[0] = 1.0;
    let aligned =
        (psi_unit.clone() - &e1_row).norm() < 1e-8 || (psi_unit.clone() + &e1_row).norm() < 1e-8;
    let (target, repair_rank_cap) = if aligned {
        let c = b.view((1, 1), (n - 1, n - 1)).into_owned();
        let mut t = DMatrix::<f64>::zeros(n, n);
        t[(0, 0)] = 1.0;
        t.view_mut((1, 1), (n - 1, n - 1)).copy_from(&c);
        (t, 1usize)
    } else {
        // Z = ker(phi) /\ ker(psi) /\ ker(phi B)
        let mut rows = DMatrix::<f64>::zeros(3, n);
        rows.row_mut(0).copy_from(&e1_row);
        rows.row_mut(1).copy_from(&psi_unit);
        let phi_b = b.row(0).into_owned();
        rows.row_mut(2)
            .copy_from(&(&phi_b / phi_b.norm().max(1e-300)));
        let (rank, mut z_basis) = row_null_space(&rows, 1e-10)?;
        if rank == 2 {
            return Err(Error::InternalInvariant {
                msg: "codimension-2 repair reached; forbidden by the parity exclusion".into(),
            });
        }
        if rank != 3 {
            return Err(Error::InternalInvariant {
                msg: format!("unexpected functional rank {rank} during realignment"),
            });
        }
        fix_column_signs(&mut z_basis);

        // G = Y /\ Z-perp, dimension 2
        let mut g_rows = DMatrix::<f64>::zeros(1 + z_basis.ncols(), n);
        g_rows.row_mut(0).copy_from(&e1_row);
        for k in 0..z_basis.ncols() {
            g_rows
                .row_mut(1 + k)
                .copy_from(&z_basis.column(k).transpose());
        }
        let (g_rank, mut g_basis) = row_null_space(&g_rows, 1e-10)?;
        if n - g_rank != 2 {
            return Err(Error::InternalInvariant {
                msg: format!("complement G has dimension {} instead of 2", n - g_rank),
            });
        }
        fix_column_signs(&mut g_basis);

        // restriction of B to Z in the Z basis
        let bz = b * &z_basis;
        let c_z = z_basis.transpose() * &bz;
        let agree = (&bz - &z_basis * &c_z).norm();
        if agree > tau.max(1e-9) * scale * 10.0 {
            return Err(Error::InternalInvariant {
                msg: format!("Z is not invariant under A+v: residual {agree:.3e}"),
            });
        }

        // assemble diag(1, k, C) in the basis (e1, g1, g2, Z)
        let nz = z_basis.ncols();
        let mut nb = DMatrix::<f64>::zeros(n, n);
        nb.column_mut(0)
            .copy_from(&DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 }));
        nb.column_mut(1).copy_from(&g_basis.column(0));
        nb.column_mut(2).copy_from(&g_basis.column(1));
        for k in 0..nz {
            nb.column_mut(3 + k).copy_from(&z_basis.column(k));
        }
        let nb_inv = nb
            .clone()
            .lu()
            .try_inverse()
            .ok_or(Error::InternalInvariant {
                msg: "realignment basis is singular".into(),
            })?;
        let mut inner = DMatrix::<f64>::zeros(n, n);
        inner[(0, 0)] = 1.0;
        // rotation block on G
        inner[(1, 2)] = 1.0;
        inner[(2, 1)] = -1.0;
        inner.view_mut((3, 3), (nz, nz)).copy_from(&c_z);
        (&nb * inner * nb_inv, 3usize)
    };

    let f = &target - b;
    let f_op = RealOperator::new(f)?;
    let rank_f = if f_op.frobenius() <= 1e-12 * scale {
        0
    } else {
        f_op.rank_tol(RANK_TOL)
    };
    if rank_f > repair_rank_cap {
        return Err(Error::InternalInvariant {
            msg: format!("repair rank {rank_f} exceeds the cap {repair_rank_cap}"),
        });
    }

    // the realigned outcome in standard coordinates
    let j_y_mat = target.view((1, 1), (n - 1, n - 1)).into_owned();
    let mut block = DMatrix::<f64>::zeros(n, n);
    block[(0, 0)] = 1.0;
    block.view_mut((1, 1), (n - 1, n - 1)).copy_from(&j_y_mat);
    let block_residual = (&target - &block).norm();
    let defect = (&j_y_mat * &j_y_mat + DMatrix::<f64>::identity(n - 1, n - 1)).norm();
    if block_residual > tau.max(1e-10) || defect > tau.max(1e-10) {
        return Err(Error::InternalInvariant {
            msg: format!(
                "realigned block residual {block_residual:.3e} or defect {defect:.3e} out of tolerance"
            ),
        });
    }
    let j_y = ComplexStructure::new(RealOperator::new(j_y_mat)?, tau.max(1e-10))?;

    let v_new = RealOperator::new(v.matrix() + f_op.matrix())?;
    let norm_v = v_new.opnorm();
    let rank_v = v_new.rank_tol(RANK_TOL);
    let mut e1 = DVector::<f64>::zeros(n);
    e1[0] = 1.0;
    let mut y_std_cols: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    for k in 1..n {
        let mut col = DVector::<f64>::zeros(n);
        col[k] = 1.0;
        y_std_cols.push(col);
    }
    let mut cert = cert.clone();
    cert.rank_v = rank_v;
    cert.norm_v = norm_v;
    cert.outcome_residual = block_residual;
    cert.realigned = true;
    Ok(LiftOutcome::Odd {
        e: e1,
        y_basis: DMatrix::from_columns(&y_std_cols),
        j_y,
        v: v_new,
        a_plus_v: RealOperator::new(target)?,
        cert,
    })
}

/// Real eigenvalues with multiplicities and the parity of their count.
#[derive(Debug, Clone)]
pub struct ParityCertificate {
    pub real_eigs: Vec<(f64, usize)>,
    pub n: usize,
    pub parity: Parity,
}

/// Counts real eigenvalues (|Im| at most the radius) with multiplicity.
/// Eigenvalues with |Im| inside a factor 10 of the radius are reported as
/// ambiguous rather than silently counted.
pub fn parity_count(a: &RealOperator, radius: f64) -> Result<ParityCertificate> {
    let spec = a.eig(radius)?;
    let mut real_eigs: Vec<(f64, usize)> = Vec::new();
    let mut n = 0usize;
    for c in spec.clusters() {
        let im = c.value.im.abs();
        if im <= radius {
            real_eigs.push((c.value.re, c.multiplicity));
            n += c.multiplicity;
        } else if im <= 10.0 * radius {
            return Err(Error::AmbiguousParity {
                re: c.value.re,
                im: c.value.im,
                radius,
            });
        }
    }
    let parity = Parity::of(n);
    if parity != Parity::of(a.dim()) {
        return Err(Error::InternalInvariant {
            msg: format!(
                "real count {n} has different parity from dimension {}; conjugate pairing failed",
                a.dim()
            ),
        });
    }
    real_eigs.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(ParityCertificate {
        real_eigs,
        n,
        parity,
    })
}

#[derive(Debug, Clone)]
pub struct HomotopyPoint {
    pub mu: f64,
    /// Real-eigenvalue count, None when the count was ambiguous at this mu.
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrackVerdict {
    ParityConstant(Parity),
    Indeterminate,
    /// Should never occur in finite dimension; kept for honest reporting.
    NotConstant,
}

#[derive(Debug, Clone)]
pub struct HomotopyTrack {
    pub points: Vec<HomotopyPoint>,
    pub verdict: TrackVerdict,
    pub n_start: Option<usize>,
    pub n_end: Option<usize>,
}

/// True when the defect D = A^2 + Id satisfies D^2 = 2D within tolerance,
/// i.e. A^2 = -Id + 2 Pi for a projection Pi. Rank 0 gives an exact
/// structure; rank 1 is the square of a diag(1, J) block form.
fn is_block_form_endpoint(m: &DMatrix<f64>, tau: f64) -> bool {
    let n = m.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let d = m * m + &eye;
    (&d * &d * 0.5 - &d).norm() <= tau * d.norm().max(1.0)
}

/// Tracks n(mu) for T_mu = A + mu s over an equispaced grid on [0, 1].
/// At least one endpoint must be in the certified class: an exact structure
/// or an exact odd block form (both read off the defect A^2 + Id).
pub fn homotopy_parity_track(
    a: &RealOperator,
    s: &RealOperator,
    grid_points: usize,
    tau: f64,
) -> Result<HomotopyTrack> {
    let n = a.dim();
    if s.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "homotopy perturbation",
            expected: n,
            got: s.dim(),
        });
    }
    if grid_points < 2 {
        return Err(Error::Precondition {
            msg: "homotopy grid needs at least 2 points".into(),
        });
    }
    let end = RealOperator::new(a.matrix() + s.matrix())?;
    if !is_block_form_endpoint(a.matrix(), tau) && !is_block_form_endpoint(end.matrix(), tau) {
        return Err(Error::Precondition {
            msg: format!("neither endpoint is a structure or an odd block form within {tau:.3e}"),
        });
    }

    let mut points = Vec::with_capacity(grid_points);
    let mut parities: Vec<Option<usize>> = Vec::with_capacity(grid_points);
    for k in 0..grid_points {
        let mu = k as f64 / (grid_points - 1) as f64;
        let m = RealOperator::new(a.matrix() + s.matrix() * mu)?;
        let radius = default_cluster_radius(m.opnorm());
        match parity_count(&m, radius) {
            Ok(cert) => {
                points.push(HomotopyPoint {
                    mu,
                    n: Some(cert.n),
                });
                parities.push(Some(cert.n));
            }
            Err(Error::AmbiguousParity { .. }) => {
                points.push(HomotopyPoint { mu, n: None });
                parities.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let verdict = if parities.iter().any(|p| p.is_none()) {
        TrackVerdict::Indeterminate
    } else {
        let first = parities[0].unwrap() % 2;
        if parities.iter().all(|p| p.unwrap() % 2 == first) {
            TrackVerdict::ParityConstant(Parity::of(first))
        } else {
            TrackVerdict::NotConstant
        }
    };
    Ok(HomotopyTrack {
        n_start: points.first().and_then(|p| p.n),
        n_end: points.last().and_then(|p| p.n),
        points,
        verdict,
    })
}

/// Certificate that the two dichotomy alternatives exclude each other on
/// the given ambient space, via the determinant obstruction.
#[derive(Debug, Clone)]
pub struct ExclusionCertificate {
    pub dim: usize,
    pub dim_parity: Parity,
    pub n_real: usize,
    pub verified_outcome: &'static str,
    pub obstruction: String,
}

/// Checks an outcome against the operator it claims to come from and issues
/// the nonexistence certificate for the other branch.
pub fn exclusion_check(
    outcome: &LiftOutcome,
    a: &RealOperator,
    tau: f64,
) -> Result<ExclusionCertificate> {
    let n = a.dim();
    let cert = outcome.certificate();
    if cert.dim != n {
        return Err(Error::Precondition {
            msg: format!("outcome dimension {} does not match operator {n}", cert.dim),
        });
    }
    let recomputed = AlmostComplexStructure::new(a.clone());
    if (recomputed.norm_defect() - cert.norm_s).abs() > 1e-9 * recomputed.norm_defect().max(1.0) {
        return Err(Error::Precondition {
            msg: format!(
                "recomputed defect norm {:.6e} differs from certified {:.6e}; outcome/operator mismatch",
                recomputed.norm_defect(),
                cert.norm_s
            ),
        });
    }
    // the corrected operator must re-verify from A and v
    let apv = a.matrix() + outcome.correction().matrix();
    let eye = DMatrix::<f64>::identity(n, n);
    match outcome {
        LiftOutcome::Even { .. } => {
            if !n.is_multiple_of(2) {
                return Err(Error::Precondition {
                    msg: format!("even outcome claimed on odd dimension {n}"),
                });
            }
            let r = (&apv * &apv + &eye).norm();
            if r > 10.0 * tau {
                return Err(Error::Precondition {
                    msg: format!("even outcome fails to re-verify: residual {r:.3e}"),
                });
            }
        }
        LiftOutcome::Odd { a_plus_v, .. } => {
            if n % 2 != 1 {
                return Err(Error::Precondition {
                    msg: format!("odd outcome claimed on even dimension {n}"),
                });
            }
            let r = (&apv - a_plus_v.matrix()).norm();
            if r > 1e-9 * apv.norm().max(1.0) {
                return Err(Error::Precondition {
                    msg: format!("odd outcome correction mismatch: {r:.3e}"),
                });
            }
        }
    }
    let parity_cert = parity_count(a, default_cluster_radius(a.opnorm()))?;
    let dim_parity = Parity::of(n);
    let (verified_outcome, obstruction) = if outcome.is_even() {
        (
            "even",
            format!(
                "no correction of diag(1, J) form exists on dimension {n}: \
                 J would act on odd dimension {} where det(J)^2 = -1 is impossible over R",
                n - 1
            ),
        )
    } else {
        (
            "odd",
            format!(
                "no exact structure exists on dimension {n}: \
                 det(J)^2 = det(-Id) = (-1)^{n} = -1 is impossible over R"
            ),
        )
    };
    Ok(ExclusionCertificate {
        dim: n,
        dim_parity,
        n_real: parity_cert.n,
        verified_outcome,
        obstruction,
    })
}
