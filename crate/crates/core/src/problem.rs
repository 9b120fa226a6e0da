//! QP data model: `min ½ yᵀHy + gᵀy  s.t.  c ≤ Gy ≤ d`.
//!
//! Equality constraints are rows with `c_i = d_i`; there is no separate
//! equality block. Bounds with magnitude at or above [`INFINITY_THRESHOLD`]
//! are treated as infinite.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Bounds whose magnitude reaches this value are stored as `±∞`.
pub const INFINITY_THRESHOLD: f64 = 1e30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("H is not symmetric (max |H_ij - H_ji| = {0:e})")]
    NonSymmetricHessian(f64),
    #[error("H is not positive definite")]
    NotPositiveDefinite,
    #[error("inverted bounds on row {row}: c = {lower} > d = {upper}")]
    InvertedBounds { row: usize, lower: f64, upper: f64 },
    #[error("problem has no constraint rows (add a row with infinite bounds instead)")]
    NoConstraints,
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
}

/// Tag of a constraint row, derived from its bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    Equality,
    Inequality,
}

impl ConstraintKind {
    pub fn of(lower: f64, upper: f64) -> Self {
        if lower == upper {
            ConstraintKind::Equality
        } else {
            ConstraintKind::Inequality
        }
    }
}

/// An unvalidated problem, e.g. straight out of a parser.
///
/// `n` and `m` are the declared sizes; every matrix and vector is checked
/// against them by [`validate`].
#[derive(Debug, Clone)]
pub struct RawProblem {
    pub n: usize,
    pub m: usize,
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub gmat: DMatrix<f64>,
    pub c: DVector<f64>,
    pub d: DVector<f64>,
}

/// A validated convex QP.
///
/// The matrices sit behind `Arc` so that problems differing only in
/// `g`, `c`, `d` (one per MPC step, say) share them; see
/// [`QProblem::with_vectors`]. Immutable once built.
#[derive(Debug, Clone)]
pub struct QProblem {
    hessian: Arc<DMatrix<f64>>,
    linear: DVector<f64>,
    constraints: Arc<DMatrix<f64>>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl PartialEq for QProblem {
    fn eq(&self, other: &Self) -> bool {
        self.hessian == other.hessian
            && self.linear == other.linear
            && self.constraints == other.constraints
            && self.lower == other.lower
            && self.upper == other.upper
    }
}

impl QProblem {
    pub fn new(
        h: DMatrix<f64>,
        g: DVector<f64>,
        gmat: DMatrix<f64>,
        c: DVector<f64>,
        d: DVector<f64>,
    ) -> Result<Self, ProblemError> {
        validate(RawProblem {
            n: h.nrows(),
            m: gmat.nrows(),
            h,
            g,
            gmat,
            c,
            d,
        })
    }

    pub fn n(&self) -> usize {
        self.linear.len()
    }

    pub fn m(&self) -> usize {
        self.lower.len()
    }

    /// `H`
    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    /// `g`
    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    /// `G`
    pub fn constraints(&self) -> &DMatrix<f64> {
        &self.constraints
    }

    /// `c`
    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    /// `d`
    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn hessian_arc(&self) -> &Arc<DMatrix<f64>> {
        &self.hessian
    }

    pub fn constraints_arc(&self) -> &Arc<DMatrix<f64>> {
        &self.constraints
    }

    pub fn kind(&self, row: usize) -> ConstraintKind {
        ConstraintKind::of(self.lower[row], self.upper[row])
    }

    pub fn constraint_kinds(&self) -> Vec<ConstraintKind> {
        (0..self.m()).map(|i| self.kind(i)).collect()
    }

    pub fn objective(&self, y: &DVector<f64>) -> f64 {
        0.5 * y.dot(&(&*self.hessian * y)) + self.linear.dot(y)
    }

    /// A problem with the same `H` and `G` (shared, not copied) and new
    /// `g`, `c`, `d`. Only the vectors are re-validated.
    pub fn with_vectors(
        &self,
        g: DVector<f64>,
        c: DVector<f64>,
        d: DVector<f64>,
    ) -> Result<Self, ProblemError> {
        if g.len() != self.n() {
            return Err(ProblemError::DimensionMismatch(format!(
                "g has length {}, expected {}",
                g.len(),
                self.n()
            )));
        }
        let (lower, upper) = checked_bounds(self.m(), c, d)?;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(ProblemError::NonFinite("g"));
        }
        Ok(QProblem {
            hessian: Arc::clone(&self.hessian),
            linear: g,
            constraints: Arc::clone(&self.constraints),
            lower,
            upper,
        })
    }

    /// Assembles a problem from parts that are already known to be valid
    /// (e.g. a diagonal rescaling of a validated problem).
    pub(crate) fn from_parts_unchecked(
        hessian: Arc<DMatrix<f64>>,
        linear: DVector<f64>,
        constraints: Arc<DMatrix<f64>>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Self {
        QProblem {
            hessian,
            linear,
            constraints,
            lower,
            upper,
        }
    }

    /// Is `y` feasible for `c ≤ Gy ≤ d` up to `tol`?
    pub fn is_feasible(&self, y: &DVector<f64>, tol: f64) -> bool {
        let gy = &*self.constraints * y;
        gy.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
    }
}

fn normalize_bound(x: f64) -> f64 {
    if x >= INFINITY_THRESHOLD {
        f64::INFINITY
    } else if x <= -INFINITY_THRESHOLD {
        f64::NEG_INFINITY
    } else {
        x
    }
}

fn checked_bounds(
    m: usize,
    c: DVector<f64>,
    d: DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), ProblemError> {
    if c.len() != m || d.len() != m {
        return Err(ProblemError::DimensionMismatch(format!(
            "c has length {}, d has length {}, expected {}",
            c.len(),
            d.len(),
            m
        )));
    }
    if c.iter().chain(d.iter()).any(|x| x.is_nan()) {
        return Err(ProblemError::NonFinite("bounds"));
    }
    let c = c.map(normalize_bound);
    let d = d.map(normalize_bound);
    for i in 0..m {
        // A lower bound of +∞ (or upper of −∞) admits no point at all.
        if c[i] > d[i] || c[i] == f64::INFINITY || d[i] == f64::NEG_INFINITY {
            return Err(ProblemError::InvertedBounds {
                row: i,
                lower: c[i],
                upper: d[i],
            });
        }
    }
    Ok((c, d))
}

/// Checks every `QProblem` invariant and returns the first violation.
///
/// Order of checks: dimensions, finiteness, symmetry of `H`, bounds, and
/// finally positive-definiteness (a Cholesky factorization).
pub fn validate(raw: RawProblem) -> Result<QProblem, ProblemError> {
    let RawProblem {
        n,
        m,
        h,
        g,
        gmat,
        c,
        d,
    } = raw;
    if m == 0 {
        return Err(ProblemError::NoConstraints);
    }
    if h.nrows() != n || h.ncols() != n {
        return Err(ProblemError::DimensionMismatch(format!(
            "H is {}x{}, expected {n}x{n}",
            h.nrows(),
            h.ncols()
        )));
    }
    if g.len() != n {
        return Err(ProblemError::DimensionMismatch(format!(
            "g has length {}, expected {n}",
            g.len()
        )));
    }
    if gmat.nrows() != m || gmat.ncols() != n {
        return Err(ProblemError::DimensionMismatch(format!(
            "G is {}x{}, expected {m}x{n}",
            gmat.nrows(),
            gmat.ncols()
        )));
    }
    if h.iter().any(|x| !x.is_finite()) {
        return Err(ProblemError::NonFinite("H"));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(ProblemError::NonFinite("g"));
    }
    if gmat.iter().any(|x| !x.is_finite()) {
        return Err(ProblemError::NonFinite("G"));
    }

    let asym = max_asymmetry(&h);
    if asym > 1e-12 * inf_norm(&h).max(1.0) {
        return Err(ProblemError::NonSymmetricHessian(asym));
    }
    let (c, d) = checked_bounds(m, c, d)?;
    if h.clone().cholesky().is_none() {
        return Err(ProblemError::NotPositiveDefinite);
    }

    Ok(QProblem {
        hessian: Arc::new(h),
        linear: g,
        constraints: Arc::new(gmat),
        lower: c,
        upper: d,
    })
}

fn max_asymmetry(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((h[(i, j)] - h[(j, i)]).abs());
        }
    }
    worst
}

/// Induced ∞-norm (max absolute row sum).
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Vector ∞-norm; 0 for an empty vector.
pub fn vec_inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Solved,
    MaxIters,
    /// The iterate became non-finite.
    Invalid,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Solved => "solved",
            SolveStatus::MaxIters => "max-iters",
            SolveStatus::Invalid => "invalid",
        }
    }
}

/// A penalty-grid index that became active at `iteration` (0 = start).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RhoSwitch {
    pub iteration: usize,
    pub index: usize,
}

/// Primal/dual solution in the units of the original (unscaled) problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub lambda: DVector<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub r_prim: f64,
    pub r_dual: f64,
    pub rho_trace: Vec<RhoSwitch>,
}

impl Solution {
    /// Grid index active when the solve stopped.
    pub fn final_index(&self) -> Option<usize> {
        self.rho_trace.last().map(|s| s.index)
    }
}
