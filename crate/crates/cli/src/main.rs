//! Command-line front end: JSON matrix and field I/O, one subcommand per
//! pipeline, machine-readable certificates on stdout, human log on stderr.
//!
//! Exit codes: 0 success (even/affirmative outcome), 1 usage error,
//! 2 numerical failure, 3 odd outcome (a distinct success code so scripts
//! can branch on the dichotomy).

mod io;
mod jout;
mod verify;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use cxstruct::ckfield::{field_conjugator, field_correct, strict_singular_decomposition, CKPoint};
use cxstruct::complexify::Complexified;
use cxstruct::lifting::{
    complex_lift_with_margin, exclusion_check, homotopy_parity_track, parity_count,
    real_dichotomy_with_margin, realign_to_standard_split, AlmostComplexStructure, IdealBudget,
    LiftOutcome, TrackVerdict,
};
use cxstruct::linalg::default_cluster_radius;
use cxstruct::structures::{conjugator, ComplexStructure};
use cxstruct::RealOperator;

use io::{
    ck_field_json, complex_matrix_json, read_ck_field, read_matrix, read_real_matrix,
    real_matrix_json, MatrixData,
};
use jout::J;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl From<cxstruct::Error> for CliError {
    fn from(e: cxstruct::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

const DEFAULT_TOL: f64 = 1e-10;
const TOL_ENV: &str = "CXSTRUCT_TOL";

#[derive(Parser)]
#[command(
    name = "cxstruct",
    version,
    about = "Numerical toolkit for complex structures on real spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Global tolerance (default 1e-10; env CXSTRUCT_TOL overrides the default)
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Ideal budget: maximum defect rank
    #[arg(long, global = true)]
    max_rank: Option<usize>,

    /// Ideal budget: maximum defect norm
    #[arg(long, global = true)]
    max_norm: Option<f64>,

    /// Contour-to-spectrum margin (default 1e-3 x operator norm)
    #[arg(long, global = true)]
    contour_margin: Option<f64>,

    /// Homotopy grid points
    #[arg(long, global = true, default_value_t = 101)]
    grid: usize,

    /// Seed for randomized pivot retries
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Also write the certificate to this path
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lift a complex operator with B^2 = -Id + S to an exact square root of -Id
    LiftComplex {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Run the real even/odd dichotomy on an operator with budgeted defect
    Dichotomy {
        #[arg(long = "in")]
        input: PathBuf,
        /// Re-express an odd outcome in the standard R (+) Y splitting
        #[arg(long)]
        standard_split: bool,
    },
    /// Count real eigenvalues with multiplicity and report the parity
    Parity {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Track the real-eigenvalue count along A + mu s over a grid on [0, 1]
    Track {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        pert: PathBuf,
    },
    /// Synthesize P with J = P K P^{-1} for two complex structures
    Conjugate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "with")]
        with: PathBuf,
    },
    /// Embed a complex structure J as diag(1, J) on one dimension more
    Embed {
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the embedded matrix to this path
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Correct a 2x2 matrix field with almost-null defect to M'^2 = -I
    CkCorrect {
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the corrected field to this path
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Conjugate a pointwise structure field onto the canonical rotation
    CkConjugate {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Recompute a certificate and check residuals within 10x stated values
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        against: PathBuf,
        /// Second input for two-operand commands (conjugate)
        #[arg(long = "with")]
        with: Option<PathBuf>,
        /// Perturbation input for track
        #[arg(long)]
        pert: Option<PathBuf>,
    },
}

/// Flags resolved to concrete values, echoed into every certificate.
#[derive(Debug, Clone)]
pub struct Opts {
    pub tol: f64,
    pub max_rank: Option<usize>,
    pub max_norm: Option<f64>,
    pub contour_margin: Option<f64>,
    pub grid: usize,
    pub seed: u64,
}

impl Opts {
    fn budget(&self, dim: usize) -> Result<IdealBudget, CliError> {
        if self.max_rank.is_none() && self.max_norm.is_none() {
            Ok(IdealBudget::default_for_dim(dim))
        } else {
            IdealBudget::new(self.max_rank, self.max_norm).map_err(Into::into)
        }
    }

    fn echo(&self, input: &Path, extra: &[(&str, J)]) -> J {
        let mut o = J::obj();
        o.push("in", J::str(input.display().to_string()));
        o.push("tol", J::Num(self.tol));
        o.push("max_rank", J::opt_int(self.max_rank.map(|r| r as i64)));
        o.push("max_norm", J::opt_num(self.max_norm));
        o.push("contour_margin", J::opt_num(self.contour_margin));
        o.push("grid", J::Int(self.grid as i64));
        o.push("seed", J::Int(self.seed as i64));
        for (k, v) in extra {
            o.push(k, v.clone());
        }
        o
    }
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    // usage problems (unknown flags, missing args) exit 1; help/version 0
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let tol = cli
        .tol
        .or_else(|| {
            std::env::var(TOL_ENV)
                .ok()
                .and_then(|s| s.parse::<f64>().ok())
        })
        .unwrap_or(DEFAULT_TOL);
    let opts = Opts {
        tol,
        max_rank: cli.max_rank,
        max_norm: cli.max_norm,
        contour_margin: cli.contour_margin,
        grid: cli.grid,
        seed: cli.seed,
    };
    let started = Instant::now();
    let result = dispatch(&cli.command, &opts);
    match result {
        Ok((cert, code)) => {
            let rendered = cert.render();
            print!("{rendered}");
            if let Some(path) = &cli.out {
                if let Err(e) = std::fs::write(path, &rendered) {
                    eprintln!("[cxstruct] cannot write {}: {e}", path.display());
                    return 1;
                }
            }
            eprintln!(
                "[cxstruct] {} finished in {:.1} ms (exit {code})",
                command_name(&cli.command),
                started.elapsed().as_secs_f64() * 1e3
            );
            code
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("[cxstruct] usage error: {msg}");
            1
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("[cxstruct] numerical failure: {msg}");
            2
        }
    }
}

fn command_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::LiftComplex { .. } => "lift-complex",
        Cmd::Dichotomy { .. } => "dichotomy",
        Cmd::Parity { .. } => "parity",
        Cmd::Track { .. } => "track",
        Cmd::Conjugate { .. } => "conjugate",
        Cmd::Embed { .. } => "embed",
        Cmd::CkCorrect { .. } => "ck-correct",
        Cmd::CkConjugate { .. } => "ck-conjugate",
        Cmd::Verify { .. } => "verify",
    }
}

fn dispatch(cmd: &Cmd, opts: &Opts) -> Result<(J, i32), CliError> {
    match cmd {
        Cmd::LiftComplex { input } => cmd_lift_complex(input, opts),
        Cmd::Dichotomy {
            input,
            standard_split,
        } => cmd_dichotomy(input, *standard_split, opts),
        Cmd::Parity { input } => cmd_parity(input, opts),
        Cmd::Track { input, pert } => cmd_track(input, pert, opts),
        Cmd::Conjugate { input, with } => cmd_conjugate(input, with, opts),
        Cmd::Embed { input, emit } => cmd_embed(input, emit.as_deref(), opts),
        Cmd::CkCorrect { input, emit } => cmd_ck_correct(input, emit.as_deref(), opts),
        Cmd::CkConjugate { input } => cmd_ck_conjugate(input, opts),
        Cmd::Verify {
            input,
            against,
            with,
            pert,
        } => verify::cmd_verify(input, against, with.as_deref(), pert.as_deref(), opts),
    }
}

fn rect_matrix_json(m: &nalgebra::DMatrix<f64>) -> J {
    let mut o = J::obj();
    o.push("rows", J::Int(m.nrows() as i64));
    o.push("cols", J::Int(m.ncols() as i64));
    let mut data = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            data.push(J::Num(m[(i, j)]));
        }
    }
    o.push("data", J::Arr(data));
    o
}

fn cmd_lift_complex(input: &Path, opts: &Opts) -> Result<(J, i32), CliError> {
    let b = match read_matrix(input)? {
        MatrixData::Complex(b) => b,
        MatrixData::Real(a) => Complexified::complexify(a).to_complex(),
    };
    let budget = opts.budget(b.dim())?;
    let lift = complex_lift_with_margin(&b, &budget, opts.tol, opts.contour_margin)?;
    let mut cert = J::obj();
    cert.push("command", J::str("lift-complex"));
    cert.push("args", opts.echo(input, &[]));
    cert.push("outcome", J::str("lifted"));
    cert.push("dim", J::Int(b.dim() as i64));
    cert.push("fast_path", J::Bool(lift.fast_path));
    cert.push("square_residual", J::Num(lift.square_residual));
    cert.push("commutation_residual", J::Num(lift.commutation_residual));
    cert.push("diff_norm", J::Num(lift.diff_norm));
    cert.push("diff_rank", J::Int(lift.diff_rank as i64));
    cert.push("contour_radius", J::opt_num(lift.contour_radius));
    cert.push("norm_gauge", J::str("frobenius"));
    cert.push("a", complex_matrix_json(&lift.a));
    Ok((cert, 0))
}

fn outcome_json(out: &LiftOutcome) -> (J, i32) {
    let cert_data = out.certificate();
    let mut cert = J::obj();
    cert.push(
        "outcome",
        J::str(if out.is_even() { "even" } else { "odd" }),
    );
    cert.push("dim", J::Int(cert_data.dim as i64));
    cert.push("fast_path", J::Bool(cert_data.fast_path));
    cert.push("rank_s", J::Int(cert_data.rank_s as i64));
    cert.push("norm_s", J::Num(cert_data.norm_s));
    cert.push(
        "budget_rank",
        J::opt_int(cert_data.budget_rank.map(|r| r as i64)),
    );
    cert.push("budget_norm", J::opt_num(cert_data.budget_norm));
    if let Some(rc) = &cert_data.contour {
        let mut c = J::obj();
        c.push("center_re", J::Num(rc.center_re));
        c.push("half_width", J::Num(rc.half_width));
        c.push("half_height", J::Num(rc.half_height));
        cert.push("contour", c);
    } else {
        cert.push("contour", J::Null);
    }
    cert.push("rank_p", J::Int(cert_data.rank_p as i64));
    cert.push("rank_q", J::Int(cert_data.rank_q as i64));
    cert.push("rho", J::Num(cert_data.rho));
    cert.push("series_terms", J::Int(cert_data.series_terms as i64));
    cert.push("series_residual", J::Num(cert_data.series_residual));
    cert.push(
        "series_residual_form",
        J::str(cert_data.series_residual_form.as_str()),
    );
    cert.push(
        "projection_commutation_residual",
        J::Num(cert_data.projection_commutation),
    );
    cert.push(
        "projection_imag_residual",
        J::Num(cert_data.projection_imag_norm),
    );
    cert.push("rank_v", J::Int(cert_data.rank_v as i64));
    cert.push("norm_v", J::Num(cert_data.norm_v));
    cert.push("outcome_residual", J::Num(cert_data.outcome_residual));
    cert.push(
        "odd_square_residual",
        J::opt_num(cert_data.odd_square_residual),
    );
    cert.push("realigned", J::Bool(cert_data.realigned));
    cert.push("norm_gauge", J::str("frobenius"));
    match out {
        LiftOutcome::Even { j, v, .. } => {
            cert.push("parity", J::str("even"));
            cert.push("j", real_matrix_json(j.operator()));
            cert.push("v", real_matrix_json(v));
            (cert, 0)
        }
        LiftOutcome::Odd {
            e, y_basis, j_y, v, ..
        } => {
            cert.push("parity", J::str("odd"));
            cert.push("e", J::floats(e.iter().copied()));
            cert.push("y_basis", rect_matrix_json(y_basis));
            cert.push("j_y", real_matrix_json(j_y.operator()));
            cert.push("v", real_matrix_json(v));
            (cert, 3)
        }
    }
}

fn cmd_dichotomy(input: &Path, standard_split: bool, opts: &Opts) -> Result<(J, i32), CliError> {
    let a = read_real_matrix(input)?;
    let acs = AlmostComplexStructure::new(a.clone());
    let budget = opts.budget(a.dim())?;
    let mut out = real_dichotomy_with_margin(&acs, &budget, opts.tol, opts.contour_margin)?;
    if standard_split && !out.is_even() {
        out = realign_to_standard_split(&out, opts.tol)?;
    }
    let exclusion = exclusion_check(&out, &a, opts.tol)?;
    let (body, code) = outcome_json(&out);
    let mut cert = J::obj();
    cert.push("command", J::str("dichotomy"));
    cert.push(
        "args",
        opts.echo(input, &[("standard_split", J::Bool(standard_split))]),
    );
    if let J::Obj(fields) = body {
        for (k, v) in fields {
            cert.push(&k, v);
        }
    }
    let mut excl = J::obj();
    excl.push("verified_outcome", J::str(exclusion.verified_outcome));
    excl.push("dim_parity", J::str(exclusion.dim_parity.as_str()));
    excl.push("n_real", J::Int(exclusion.n_real as i64));
    excl.push("obstruction", J::str(exclusion.obstruction));
    cert.push("exclusion", excl);
    Ok((cert, code))
}

fn cmd_parity(input: &Path, opts: &Opts) -> Result<(J, i32), CliError> {
    let a = read_real_matrix(input)?;
    let radius = default_cluster_radius(a.opnorm());
    let parity = parity_count(&a, radius)?;
    let mut cert = J::obj();
    cert.push("command", J::str("parity"));
    cert.push("args", opts.echo(input, &[]));
    cert.push("outcome", J::str("counted"));
    cert.push("dim", J::Int(a.dim() as i64));
    cert.push("cluster_radius", J::Num(radius));
    cert.push("n", J::Int(parity.n as i64));
    cert.push("parity", J::str(parity.parity.as_str()));
    let eigs = parity
        .real_eigs
        .iter()
        .map(|(v, m)| J::Arr(vec![J::Num(*v), J::Int(*m as i64)]))
        .collect();
    cert.push("real_eigs", J::Arr(eigs));
    Ok((cert, 0))
}

fn cmd_track(input: &Path, pert: &Path, opts: &Opts) -> Result<(J, i32), CliError> {
    let a = read_real_matrix(input)?;
    let s = read_real_matrix(pert)?;
    let track = homotopy_parity_track(&a, &s, opts.grid, opts.tol)?;
    let (verdict, code) = match &track.verdict {
        TrackVerdict::ParityConstant(p) => (format!("parity-constant-{p}"), 0),
        TrackVerdict::Indeterminate => ("indeterminate".to_string(), 2),
        TrackVerdict::NotConstant => ("not-constant".to_string(), 2),
    };
    let mut cert = J::obj();
    cert.push("command", J::str("track"));
    cert.push(
        "args",
        opts.echo(input, &[("pert", J::str(pert.display().to_string()))]),
    );
    cert.push("outcome", J::str("tracked"));
    cert.push("dim", J::Int(a.dim() as i64));
    cert.push("verdict", J::str(verdict));
    cert.push("n_start", J::opt_int(track.n_start.map(|n| n as i64)));
    cert.push("n_end", J::opt_int(track.n_end.map(|n| n as i64)));
    let pts = track
        .points
        .iter()
        .map(|p| {
            J::Arr(vec![
                J::Num(p.mu),
                p.n.map_or(J::Null, |n| J::Int(n as i64)),
            ])
        })
        .collect();
    cert.push("points", J::Arr(pts));
    Ok((cert, code))
}

fn cmd_conjugate(input: &Path, with: &Path, opts: &Opts) -> Result<(J, i32), CliError> {
    let j_raw = read_real_matrix(input)?;
    let k_raw = read_real_matrix(with)?;
    let j = ComplexStructure::new(j_raw, opts.tol.min(0.999))?;
    let k = ComplexStructure::new(k_raw, opts.tol.min(0.999))?;
    let conj = conjugator(&j, &k, opts.seed)?;
    let mut cert = J::obj();
    cert.push("command", J::str("conjugate"));
    cert.push(
        "args",
        opts.echo(input, &[("with", J::str(with.display().to_string()))]),
    );
    cert.push("outcome", J::str("conjugated"));
    cert.push("dim", J::Int(j.dim() as i64));
    cert.push("residual", J::Num(conj.residual));
    cert.push("cond", J::Num(conj.cond));
    cert.push("pivot_order_used", J::Int(conj.pivot_order_used as i64));
    cert.push("seed", J::Int(conj.seed as i64));
    cert.push("norm_gauge", J::str("frobenius"));
    cert.push("p", real_matrix_json(&conj.p));
    Ok((cert, 0))
}

fn cmd_embed(input: &Path, emit: Option<&Path>, opts: &Opts) -> Result<(J, i32), CliError> {
    let j_raw = read_real_matrix(input)?;
    let j = ComplexStructure::new(j_raw, opts.tol.min(0.999))?;
    let embedded = j.hyperplane_embed();
    let n = embedded.dim();
    let sq = embedded.matrix() * embedded.matrix() + nalgebra::DMatrix::<f64>::identity(n, n);
    let defect = RealOperator::new(sq).map_err(CliError::from)?;
    let emitted = real_matrix_json(&embedded);
    if let Some(path) = emit {
        std::fs::write(path, emitted.render())
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    }
    let mut cert = J::obj();
    cert.push("command", J::str("embed"));
    cert.push("args", opts.echo(input, &[]));
    cert.push("outcome", J::str("embedded"));
    cert.push("dim_in", J::Int(j.dim() as i64));
    cert.push("dim_out", J::Int(n as i64));
    cert.push("structure_defect", J::Num(j.defect()));
    cert.push("embed_defect_rank", J::Int(defect.rank_tol(1e-9) as i64));
    cert.push("embed_defect_norm", J::Num(defect.opnorm()));
    cert.push("embedded", emitted);
    Ok((cert, 0))
}

fn ck_point_json(p: &CKPoint) -> J {
    match p {
        CKPoint::Isolated { copy, index } => J::Arr(vec![
            J::str("isolated"),
            J::Int(*copy as i64),
            J::Int(*index as i64),
        ]),
        CKPoint::Limit { copy } => J::Arr(vec![J::str("limit"), J::Int(*copy as i64)]),
    }
}

fn cmd_ck_correct(input: &Path, emit: Option<&Path>, opts: &Opts) -> Result<(J, i32), CliError> {
    let m = read_ck_field(input)?;
    let corr = field_correct(&m, opts.tol)?;
    let decomp = strict_singular_decomposition(&m, &corr.f_set, &corr.n_prime, opts.tol)?;
    let emitted = ck_field_json(&corr.m_prime);
    if let Some(path) = emit {
        std::fs::write(path, emitted.render())
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    }
    let mut cert = J::obj();
    cert.push("command", J::str("ck-correct"));
    cert.push("args", opts.echo(input, &[]));
    cert.push("outcome", J::str("corrected"));
    cert.push("space", J::str(m.space().as_str()));
    cert.push("prefix_len", J::Int(m.prefix_len() as i64));
    cert.push(
        "f_set",
        J::Arr(corr.f_set.iter().map(ck_point_json).collect()),
    );
    cert.push("max_square_residual", J::Num(corr.max_square_residual));
    cert.push("max_series_terms", J::Int(corr.max_series_terms as i64));
    cert.push(
        "n_prime_almost_null",
        J::Bool(corr.n_prime.is_almost_null()),
    );
    let mut d = J::obj();
    d.push("max_residual", J::Num(decomp.max_residual));
    d.push("v_rank", J::Int(decomp.v_rank as i64));
    d.push("series_terms", J::Int(decomp.series_terms as i64));
    d.push("powers_almost_null", J::Bool(decomp.powers_almost_null));
    cert.push("decomposition", d);
    cert.push("m_prime", emitted);
    cert.push("n_prime", ck_field_json(&corr.n_prime));
    Ok((cert, 0))
}

fn cmd_ck_conjugate(input: &Path, opts: &Opts) -> Result<(J, i32), CliError> {
    let m = read_ck_field(input)?;
    let conj = field_conjugator(&m, opts.tol)?;
    let mut cert = J::obj();
    cert.push("command", J::str("ck-conjugate"));
    cert.push("args", opts.echo(input, &[]));
    cert.push("outcome", J::str("conjugated"));
    cert.push("space", J::str(m.space().as_str()));
    cert.push("max_inverse_residual", J::Num(conj.max_inverse_residual));
    cert.push(
        "max_conjugation_residual",
        J::Num(conj.max_conjugation_residual),
    );
    cert.push("min_abs_f2", J::Num(conj.min_abs_f2));
    cert.push("max_f2f3", J::Num(conj.max_f2f3));
    cert.push("p", ck_field_json(&conj.p));
    cert.push("q", ck_field_json(&conj.q));
    Ok((cert, 0))
}
