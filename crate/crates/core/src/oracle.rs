//! Slow reference implementations for testing: sequential ADMM in both
//! update orders, and an exhaustive active-set KKT solver for tiny problems.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::problem::{vec_inf_norm, ConstraintKind, QProblem, Solution, SolveStatus};

/// Largest `m` accepted by [`brute_force_kkt`] (`3^12 ≈ 5·10⁵` active sets).
pub const MAX_BRUTE_FORCE_ROWS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("the original-order ADMM step needs σ > 0")]
    ZeroSigma,
    #[error("invalid penalty: every ρ must be positive and σ nonnegative")]
    InvalidPenalty,
    #[error("H + σI + GᵀρG is not positive definite")]
    Factorization,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("brute-force enumeration supports m ≤ {MAX_BRUTE_FORCE_ROWS}, got m = {0}")]
    TooManyRows(usize),
    #[error("no feasible KKT point found")]
    Infeasible,
}

/// State of the original-order ADMM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub y_bar: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub mu: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl AdmmState {
    pub fn zeros(n: usize, m: usize) -> Self {
        AdmmState {
            y_bar: DVector::zeros(n),
            y: DVector::zeros(n),
            z: DVector::zeros(m),
            mu: DVector::zeros(n),
            lambda: DVector::zeros(m),
        }
    }
}

fn kkt_factor(
    p: &QProblem,
    sigma: f64,
    rho_vec: &DVector<f64>,
) -> Result<Cholesky<f64, Dyn>, OracleError> {
    if rho_vec.len() != p.m() {
        return Err(OracleError::DimensionMismatch(format!(
            "rho has {} entries for m = {}",
            rho_vec.len(),
            p.m()
        )));
    }
    if !(sigma >= 0.0) || rho_vec.iter().any(|r| !(*r > 0.0)) {
        return Err(OracleError::InvalidPenalty);
    }
    let g = p.constraints();
    let rho = DMatrix::from_diagonal(rho_vec);
    let kkt = p.hessian() + DMatrix::identity(p.n(), p.n()) * sigma + g.transpose() * rho * g;
    kkt.cholesky().ok_or(OracleError::Factorization)
}

fn project(x: &DVector<f64>, p: &QProblem) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| x[i].max(p.lower()[i]).min(p.upper()[i]))
}

fn check_state(n: usize, m: usize, p: &QProblem) -> Result<(), OracleError> {
    if n != p.n() || m != p.m() {
        return Err(OracleError::DimensionMismatch(format!(
            "state has n = {n}, m = {m}; problem has n = {}, m = {}",
            p.n(),
            p.m()
        )));
    }
    Ok(())
}

/// One ADMM step in the original order:
///
/// ```text
/// ȳ⁺ = D(−g + σy − μ + Gᵀ(ρz − λ))
/// y⁺ = ȳ⁺ + μ/σ
/// z⁺ = Π(Gȳ⁺ + ρ⁻¹λ)
/// μ⁺ = μ + σ(ȳ⁺ − y⁺)
/// λ⁺ = λ + ρ(Gy⁺ − z⁺)
/// ```
pub fn admm_step_original(
    state: &AdmmState,
    p: &QProblem,
    sigma: f64,
    rho_vec: &DVector<f64>,
) -> Result<AdmmState, OracleError> {
    if sigma == 0.0 {
        return Err(OracleError::ZeroSigma);
    }
    check_state(state.y.len(), state.z.len(), p)?;
    let chol = kkt_factor(p, sigma, rho_vec)?;
    let g = p.constraints();

    let rho_z_minus_l = rho_vec.component_mul(&state.z) - &state.lambda;
    let rhs = -p.linear() + &state.y * sigma - &state.mu + g.tr_mul(&rho_z_minus_l);
    let y_bar = chol.solve(&rhs);
    let shift = &state.mu / sigma;
    let y = &y_bar + &shift;
    let z = project(&(g * &y_bar + state.lambda.component_div(rho_vec)), p);
    // σ((ȳ⁺ + μ/σ) − y⁺), bit-for-bit zero.
    let mu = (&y_bar + &shift - &y) * sigma;
    let lambda = &state.lambda + rho_vec.component_mul(&(g * &y - &z));
    Ok(AdmmState {
        y_bar,
        y,
        z,
        mu,
        lambda,
    })
}

/// `(y, z, λ)` after one reordered step.
pub type YZLambda = (DVector<f64>, DVector<f64>, DVector<f64>);

/// One ADMM step with the dual update first, using explicit linear solves:
///
/// ```text
/// λ⁺ = λ + ρ(Gy − z)
/// y⁺ = D(−g + σy + Gᵀ(ρz − λ⁺))
/// z⁺ = Π(Gy⁺ + ρ⁻¹λ⁺)
/// ```
pub fn admm_step_reordered(
    y: &DVector<f64>,
    z: &DVector<f64>,
    lambda: &DVector<f64>,
    p: &QProblem,
    sigma: f64,
    rho_vec: &DVector<f64>,
) -> Result<YZLambda, OracleError> {
    check_state(y.len(), z.len(), p)?;
    check_state(y.len(), lambda.len(), p)?;
    let chol = kkt_factor(p, sigma, rho_vec)?;
    let g = p.constraints();

    let lambda_next = lambda + rho_vec.component_mul(&(g * y - z));
    let rhs = -p.linear() + y * sigma + g.tr_mul(&(rho_vec.component_mul(z) - &lambda_next));
    let y_next = chol.solve(&rhs);
    let z_next = project(&(g * &y_next + lambda_next.component_div(rho_vec)), p);
    Ok((y_next, z_next, lambda_next))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowState {
    Inactive,
    Lower,
    Upper,
}

/// Exact solution of a tiny strictly convex QP by enumerating every
/// assignment of {inactive, lower active, upper active} to the rows.
///
/// Equality rows are always active. A candidate is accepted when it is
/// primal feasible and its multipliers have the right signs (`λ_i ≥ 0` on
/// active upper bounds, `λ_i ≤ 0` on active lower bounds); the accepted
/// candidate with the smallest objective is returned.
pub fn brute_force_kkt(p: &QProblem) -> Result<Solution, OracleError> {
    let m = p.m();
    if m > MAX_BRUTE_FORCE_ROWS {
        return Err(OracleError::TooManyRows(m));
    }
    let g = p.constraints();
    let scale = 1.0
        + vec_inf_norm(p.linear())
        + crate::problem::inf_norm(p.hessian())
        + crate::problem::inf_norm(g);
    let tol = 1e-9 * scale;

    let options: Vec<Vec<RowState>> = (0..m)
        .map(|i| {
            let (lo, hi) = (p.lower()[i], p.upper()[i]);
            if p.kind(i) == ConstraintKind::Equality {
                return vec![RowState::Lower];
            }
            let mut v = vec![RowState::Inactive];
            if lo.is_finite() {
                v.push(RowState::Lower);
            }
            if hi.is_finite() {
                v.push(RowState::Upper);
            }
            v
        })
        .collect();

    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    let mut choice = vec![0usize; m];
    loop {
        let states: Vec<RowState> = (0..m).map(|i| options[i][choice[i]]).collect();
        if let Some((y, lambda)) = solve_active_set(p, &states, tol) {
            let obj = p.objective(&y);
            if best.as_ref().is_none_or(|(b, _, _)| obj < *b) {
                best = Some((obj, y, lambda));
            }
        }
        // Odometer increment over the per-row option lists.
        let mut i = 0;
        while i < m {
            choice[i] += 1;
            if choice[i] < options[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
        if i == m {
            break;
        }
    }

    let (_, y, lambda) = best.ok_or(OracleError::Infeasible)?;
    let z = g * &y;
    let r_prim = (0..m)
        .map(|i| (p.lower()[i] - z[i]).max(z[i] - p.upper()[i]).max(0.0))
        .fold(0.0, f64::max);
    let dual = p.hessian() * &y + p.linear() + g.tr_mul(&lambda);
    Ok(Solution {
        y,
        z,
        lambda,
        status: SolveStatus::Solved,
        iterations: 0,
        r_prim,
        r_dual: vec_inf_norm(&dual),
        rho_trace: Vec::new(),
    })
}

fn solve_active_set(
    p: &QProblem,
    states: &[RowState],
    tol: f64,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let (n, m) = (p.n(), p.m());
    let g = p.constraints();
    let active: Vec<usize> = (0..m)
        .filter(|&i| states[i] != RowState::Inactive)
        .collect();
    let k = active.len();

    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(p.hessian());
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-p.linear()));
    for (a, &i) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + a, j)] = g[(i, j)];
            kkt[(j, n + a)] = g[(i, j)];
        }
        rhs[n + a] = match states[i] {
            RowState::Upper => p.upper()[i],
            _ => p.lower()[i],
        };
    }
    let sol = kkt.clone().lu().solve(&rhs)?;
    if sol.iter().any(|x| !x.is_finite()) || vec_inf_norm(&(&kkt * &sol - &rhs)) > tol {
        return None;
    }

    let y = sol.rows(0, n).into_owned();
    let mut lambda = DVector::zeros(m);
    for (a, &i) in active.iter().enumerate() {
        lambda[i] = sol[n + a];
    }
    let gy = g * &y;
    for i in 0..m {
        if gy[i] < p.lower()[i] - tol || gy[i] > p.upper()[i] + tol {
            return None;
        }
        let ok = match (states[i], p.kind(i)) {
            (_, ConstraintKind::Equality) | (RowState::Inactive, _) => true,
            (RowState::Upper, _) => lambda[i] >= -tol,
            (RowState::Lower, _) => lambda[i] <= tol,
        };
        if !ok {
            return None;
        }
    }
    Some((y, lambda))
}
