//! Linear MPC as a QP, in the direct (states and controls) form and in the
//! condensed form preconditioned by an LQR feedback `u_k = −K x_k + Δu_k`.
//!
//! The direct decision vector is `y = [u₀; x₁; u₁; x₂; …; u_{N−1}; x_N]`.
//! The condensed one is `ỹ = [Δu₀; …; Δu_{N−1}]`, and `y = S ỹ + M x₀`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::problem::{inf_norm, ProblemError, QProblem};

pub const DEFAULT_DARE_TOL: f64 = 1e-10;
pub const DEFAULT_DARE_MAX_ITERS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
    #[error("Riccati iteration did not reach the tolerance in {0} iterations")]
    NoConvergence(usize),
    #[error("gain is not stabilizing: spectral radius of A − BK is {0}")]
    NotStabilizing(f64),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// `x_{k+1} = A x_k + B u_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, MpcError> {
        if !a.is_square() || b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(MpcError::DimensionMismatch(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(LinearSystem { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    /// `[B, AB, …, A^{nx−1}B]`
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let (nx, nu) = (self.nx(), self.nu());
        let mut c = DMatrix::zeros(nx, nx * nu);
        let mut block = self.b.clone();
        for k in 0..nx {
            c.view_mut((0, k * nu), (nx, nu)).copy_from(&block);
            block = &self.a * block;
        }
        c
    }

    pub fn controllability_rank(&self) -> usize {
        let svd = self.controllability_matrix().svd(false, false);
        let max = svd.singular_values.max();
        let tol = max * (self.nx() * self.nu()).max(self.nx()) as f64 * f64::EPSILON;
        svd.singular_values.iter().filter(|s| **s > tol).count()
    }

    pub fn is_controllable(&self) -> bool {
        self.controllability_rank() == self.nx()
    }

    /// Largest `|x_{k+1} − A x_k − B u_k|` along a trajectory started at `x0`.
    pub fn dynamics_defect(&self, x0: &DVector<f64>, traj: &Trajectory) -> f64 {
        let mut prev = x0.clone();
        let mut worst = 0.0f64;
        for (x, u) in traj.states.iter().zip(&traj.controls) {
            worst = worst.max((x - self.step(&prev, u)).amax());
            prev = x.clone();
        }
        worst
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, z| acc.max(z.norm()))
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).amax()
}

/// Stage weights `Q`, `R`, terminal weight `Q_N` and horizon `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcWeights {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    q_n: DMatrix<f64>,
    horizon: usize,
}

impl MpcWeights {
    pub fn new(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        q_n: DMatrix<f64>,
        horizon: usize,
    ) -> Result<Self, MpcError> {
        let bad = |m: &str| Err(MpcError::InvalidWeights(m.into()));
        if horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !q.is_square() || !r.is_square() || q_n.shape() != q.shape() {
            return bad("Q, Q_N must be nx×nx and R nu×nu");
        }
        for (name, m) in [("Q", &q), ("R", &r), ("Q_N", &q_n)] {
            let tol = 1e-12 * inf_norm(m).max(1.0);
            if asymmetry(m) > tol {
                return Err(MpcError::InvalidWeights(format!("{name} is not symmetric")));
            }
        }
        if r.clone().cholesky().is_none() {
            return bad("R must be positive definite");
        }
        Ok(MpcWeights { q, r, q_n, horizon })
    }

    /// Weights whose terminal cost is the infinite-horizon LQR cost-to-go.
    pub fn with_lqr_terminal(
        sys: &LinearSystem,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        horizon: usize,
    ) -> Result<Self, MpcError> {
        MpcWeights::new(q.clone(), r.clone(), q.clone(), horizon)?;
        let (p, _) = lqr_gain(sys, &q, &r, DEFAULT_DARE_TOL, DEFAULT_DARE_MAX_ITERS)?;
        MpcWeights::new(q, r, p, horizon)
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn q_n(&self) -> &DMatrix<f64> {
        &self.q_n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self, MpcError> {
        MpcWeights::new(self.q.clone(), self.r.clone(), self.q_n.clone(), horizon)
    }
}

/// Control limits on `u₀ … u_{N−1}` and optional state limits on
/// `x₁ … x_N`. Infinite entries are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxLimits {
    pub u_lo: DVector<f64>,
    pub u_hi: DVector<f64>,
    pub x: Option<(DVector<f64>, DVector<f64>)>,
}

impl BoxLimits {
    pub fn controls(u_lo: DVector<f64>, u_hi: DVector<f64>) -> Result<Self, MpcError> {
        BoxLimits {
            u_lo,
            u_hi,
            x: None,
        }
        .validated()
    }

    /// `−limit ≤ u ≤ limit` in every component.
    pub fn symmetric(nu: usize, limit: f64) -> Result<Self, MpcError> {
        BoxLimits::controls(
            DVector::from_element(nu, -limit),
            DVector::from_element(nu, limit),
        )
    }

    pub fn with_states(self, x_lo: DVector<f64>, x_hi: DVector<f64>) -> Result<Self, MpcError> {
        BoxLimits {
            x: Some((x_lo, x_hi)),
            ..self
        }
        .validated()
    }

    fn validated(self) -> Result<Self, MpcError> {
        let check = |lo: &DVector<f64>, hi: &DVector<f64>, what: &str| {
            if lo.len() != hi.len() {
                return Err(MpcError::InvalidLimits(format!(
                    "{what} bounds differ in length"
                )));
            }
            if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
                return Err(MpcError::InvalidLimits(format!(
                    "{what} lower bound above upper"
                )));
            }
            Ok(())
        };
        check(&self.u_lo, &self.u_hi, "control")?;
        if let Some((lo, hi)) = &self.x {
            check(lo, hi, "state")?;
        }
        Ok(self)
    }

    fn check_dims(&self, sys: &LinearSystem) -> Result<(), MpcError> {
        if self.u_lo.len() != sys.nu() {
            return Err(MpcError::DimensionMismatch(format!(
                "control limits have length {}, nu = {}",
                self.u_lo.len(),
                sys.nu()
            )));
        }
        if let Some((lo, _)) = &self.x {
            if lo.len() != sys.nx() {
                return Err(MpcError::DimensionMismatch(format!(
                    "state limits have length {}, nx = {}",
                    lo.len(),
                    sys.nx()
                )));
            }
        }
        Ok(())
    }

    /// Rows per stage: `nu` control rows, then `nx` state rows if present.
    fn rows_per_stage(&self) -> usize {
        self.u_lo.len() + self.x.as_ref().map_or(0, |(lo, _)| lo.len())
    }
}

fn check_system(sys: &LinearSystem, w: &MpcWeights) -> Result<(), MpcError> {
    if w.q.nrows() != sys.nx() || w.r.nrows() != sys.nu() {
        return Err(MpcError::DimensionMismatch(format!(
            "Q is {}x{}, R is {}x{}; system has nx = {}, nu = {}",
            w.q.nrows(),
            w.q.ncols(),
            w.r.nrows(),
            w.r.ncols(),
            sys.nx(),
            sys.nu()
        )));
    }
    Ok(())
}

fn check_x0(sys: &LinearSystem, x0: &DVector<f64>) -> Result<(), MpcError> {
    if x0.len() != sys.nx() {
        return Err(MpcError::DimensionMismatch(format!(
            "x0 has length {}, nx = {}",
            x0.len(),
            sys.nx()
        )));
    }
    Ok(())
}

/// Offsets of `u_k` and `x_{k+1}` in the direct decision vector.
fn u_offset(sys: &LinearSystem, k: usize) -> usize {
    k * (sys.nu() + sys.nx())
}

fn x_offset(sys: &LinearSystem, k: usize) -> usize {
    k * (sys.nu() + sys.nx()) + sys.nu()
}

/// `blockdiag(R, Q, R, Q, …, R, Q_N)`
fn direct_hessian(sys: &LinearSystem, w: &MpcWeights) -> DMatrix<f64> {
    let (nx, nu, n) = (sys.nx(), sys.nu(), w.horizon);
    let mut h = DMatrix::zeros(n * (nx + nu), n * (nx + nu));
    for k in 0..n {
        h.view_mut((u_offset(sys, k), u_offset(sys, k)), (nu, nu))
            .copy_from(&w.r);
        let q = if k + 1 == n { &w.q_n } else { &w.q };
        h.view_mut((x_offset(sys, k), x_offset(sys, k)), (nx, nx))
            .copy_from(q);
    }
    h
}

/// Box rows on the direct decision vector, with their bounds.
fn limit_rows(
    sys: &LinearSystem,
    limits: &BoxLimits,
    horizon: usize,
) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let (nx, nu) = (sys.nx(), sys.nu());
    let per = limits.rows_per_stage();
    let mut g = DMatrix::zeros(horizon * per, horizon * (nx + nu));
    let mut c = DVector::zeros(horizon * per);
    let mut d = DVector::zeros(horizon * per);
    for k in 0..horizon {
        let row = k * per;
        for i in 0..nu {
            g[(row + i, u_offset(sys, k) + i)] = 1.0;
            c[row + i] = limits.u_lo[i];
            d[row + i] = limits.u_hi[i];
        }
        if let Some((lo, hi)) = &limits.x {
            for i in 0..nx {
                g[(row + nu + i, x_offset(sys, k) + i)] = 1.0;
                c[row + nu + i] = lo[i];
                d[row + nu + i] = hi[i];
            }
        }
    }
    (g, c, d)
}

/// The MPC problem over states and controls: dynamics as equality rows
/// (`B u₀ − x₁ = −A x₀`, `A x_k + B u_k − x_{k+1} = 0`), followed by the
/// box rows of every stage.
pub fn build_direct_mpc(
    sys: &LinearSystem,
    weights: &MpcWeights,
    limits: &BoxLimits,
    x0: &DVector<f64>,
) -> Result<QProblem, MpcError> {
    check_system(sys, weights)?;
    limits.check_dims(sys)?;
    check_x0(sys, x0)?;
    let (nx, nu, horizon) = (sys.nx(), sys.nu(), weights.horizon);
    let n = horizon * (nx + nu);

    let (g_box, c_box, d_box) = limit_rows(sys, limits, horizon);
    let m_dyn = horizon * nx;
    let m = m_dyn + g_box.nrows();
    let mut g = DMatrix::zeros(m, n);
    let mut c = DVector::zeros(m);
    for k in 0..horizon {
        let row = k * nx;
        if k > 0 {
            g.view_mut((row, x_offset(sys, k - 1)), (nx, nx))
                .copy_from(&sys.a);
        }
        g.view_mut((row, u_offset(sys, k)), (nx, nu))
            .copy_from(&sys.b);
        for i in 0..nx {
            g[(row + i, x_offset(sys, k) + i)] = -1.0;
        }
    }
    c.rows_mut(0, nx).copy_from(&(-(&sys.a * x0)));
    let mut d = c.clone();
    g.view_mut((m_dyn, 0), g_box.shape()).copy_from(&g_box);
    c.rows_mut(m_dyn, c_box.len()).copy_from(&c_box);
    d.rows_mut(m_dyn, d_box.len()).copy_from(&d_box);

    Ok(QProblem::new(
        direct_hessian(sys, weights),
        DVector::zeros(n),
        g,
        c,
        d,
    )?)
}

fn riccati_step(
    sys: &LinearSystem,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), MpcError> {
    let (a, b) = (&sys.a, &sys.b);
    let pb = p * b;
    let pa = p * a;
    let s = r + b.transpose() * &pb;
    let chol = s
        .cholesky()
        .ok_or_else(|| MpcError::InvalidWeights("R + BᵀPB is not positive definite".into()))?;
    let k = chol.solve(&(b.transpose() * &pa));
    let next = q + a.transpose() * &pa - (a.transpose() * &pb) * &k;
    Ok(((&next + next.transpose()) * 0.5, k))
}

/// Infinite-horizon LQR by fixed-point Riccati iteration from `P = Q`.
///
/// Returns `(P, K)` with `‖P − Ric(P)‖∞ ≤ tol` and
/// `K = (R + BᵀPB)⁻¹BᵀPA`.
pub fn lqr_gain(
    sys: &LinearSystem,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>), MpcError> {
    if q.shape() != (sys.nx(), sys.nx()) || r.shape() != (sys.nu(), sys.nu()) {
        return Err(MpcError::DimensionMismatch(format!(
            "Q is {}x{}, R is {}x{}; system has nx = {}, nu = {}",
            q.nrows(),
            q.ncols(),
            r.nrows(),
            r.ncols(),
            sys.nx(),
            sys.nu()
        )));
    }
    let mut p = q.clone();
    for _ in 0..max_iters {
        let (next, k) = riccati_step(sys, q, r, &p)?;
        if inf_norm(&(&next - &p)) <= tol {
            return Ok((p, k));
        }
        if next.iter().any(|x| !x.is_finite()) {
            break;
        }
        p = next;
    }
    Err(MpcError::NoConvergence(max_iters))
}

/// Everything that does not depend on `x₀`, plus the maps that turn `x₀`
/// into the linear cost and the bound offsets.
#[derive(Debug, Clone)]
pub struct CondensedTemplate {
    nx: usize,
    nu: usize,
    horizon: usize,
    k: DMatrix<f64>,
    a_bar: DMatrix<f64>,
    s: DMatrix<f64>,
    m: DMatrix<f64>,
    /// `SᵀHM`, so that `ḡ = offset_g x₀`.
    offset_g: DMatrix<f64>,
    /// `G_ineq M`, so that `c̄ = c − offset_c x₀`.
    offset_c: DMatrix<f64>,
    /// `H̄`, `Ḡ` and the bounds at `x₀ = 0`.
    base: QProblem,
}

impl CondensedTemplate {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn a_bar(&self) -> &DMatrix<f64> {
        &self.a_bar
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn offset_g(&self) -> &DMatrix<f64> {
        &self.offset_g
    }

    pub fn offset_c(&self) -> &DMatrix<f64> {
        &self.offset_c
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        self.base.hessian()
    }

    pub fn constraints(&self) -> &DMatrix<f64> {
        self.base.constraints()
    }

    /// The condensed problem at `x₀ = 0`.
    pub fn base(&self) -> &QProblem {
        &self.base
    }
}

/// `S` and `M` for the substitution `u_k = −K x_k + Δu_k`.
fn condensation_maps(
    sys: &LinearSystem,
    k: &DMatrix<f64>,
    a_bar: &DMatrix<f64>,
    horizon: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (nx, nu) = (sys.nx(), sys.nu());
    let n = horizon * (nx + nu);
    let mut s = DMatrix::zeros(n, horizon * nu);
    let mut m = DMatrix::zeros(n, nx);

    // powers[j] = Ā^j, and abar_b[j] = Ā^j B.
    let mut powers = vec![DMatrix::identity(nx, nx)];
    for j in 1..=horizon {
        powers.push(a_bar * &powers[j - 1]);
    }
    let abar_b: Vec<DMatrix<f64>> = powers.iter().map(|p| p * &sys.b).collect();

    for step in 0..horizon {
        let (ru, rx) = (u_offset(sys, step), x_offset(sys, step));
        for j in 0..step {
            s.view_mut((ru, j * nu), (nu, nu))
                .copy_from(&(-(k * &abar_b[step - 1 - j])));
        }
        for i in 0..nu {
            s[(ru + i, step * nu + i)] = 1.0;
        }
        for j in 0..=step {
            s.view_mut((rx, j * nu), (nx, nu))
                .copy_from(&abar_b[step - j]);
        }
        m.view_mut((ru, 0), (nu, nx))
            .copy_from(&(-(k * &powers[step])));
        m.view_mut((rx, 0), (nx, nx)).copy_from(&powers[step + 1]);
    }
    (s, m)
}

fn condense(
    sys: &LinearSystem,
    weights: &MpcWeights,
    limits: &BoxLimits,
    k: &DMatrix<f64>,
    a_bar: DMatrix<f64>,
) -> Result<CondensedTemplate, MpcError> {
    let horizon = weights.horizon;
    let (s, m) = condensation_maps(sys, k, &a_bar, horizon);
    let h = direct_hessian(sys, weights);
    let hs = &h * &s;
    let h_bar = s.transpose() * &hs;
    let h_bar = (&h_bar + h_bar.transpose()) * 0.5;
    let offset_g = hs.transpose() * &m;
    let (g_ineq, c, d) = limit_rows(sys, limits, horizon);
    let g_bar = &g_ineq * &s;
    let offset_c = &g_ineq * &m;
    let base = QProblem::new(h_bar, DVector::zeros(horizon * sys.nu()), g_bar, c, d)?;
    Ok(CondensedTemplate {
        nx: sys.nx(),
        nu: sys.nu(),
        horizon,
        k: k.clone(),
        a_bar,
        s,
        m,
        offset_g,
        offset_c,
        base,
    })
}

/// Condensed problem template for a stabilizing gain `K` (`nu × nx`).
/// The dynamics rows are eliminated; only the box rows remain, as `Ḡ = G S`.
pub fn build_condensed_mpc(
    sys: &LinearSystem,
    weights: &MpcWeights,
    limits: &BoxLimits,
    k: &DMatrix<f64>,
) -> Result<CondensedTemplate, MpcError> {
    check_system(sys, weights)?;
    limits.check_dims(sys)?;
    if k.shape() != (sys.nu(), sys.nx()) {
        return Err(MpcError::DimensionMismatch(format!(
            "K is {}x{}, expected {}x{}",
            k.nrows(),
            k.ncols(),
            sys.nu(),
            sys.nx()
        )));
    }
    let a_bar = &sys.a - &sys.b * k;
    let radius = spectral_radius(&a_bar);
    if !(radius < 1.0) {
        return Err(MpcError::NotStabilizing(radius));
    }
    condense(sys, weights, limits, k, a_bar)
}

/// The condensed QP at `x₀`: `ḡ = offset_g x₀`, `c̄ = c − offset_c x₀`,
/// `d̄ = d − offset_c x₀`. `H̄` and `Ḡ` are shared with the template.
pub fn instantiate(t: &CondensedTemplate, x0: &DVector<f64>) -> Result<QProblem, MpcError> {
    if x0.len() != t.nx {
        return Err(MpcError::DimensionMismatch(format!(
            "x0 has length {}, nx = {}",
            x0.len(),
            t.nx
        )));
    }
    let g = &t.offset_g * x0;
    let shift = &t.offset_c * x0;
    let c = t.base.lower() - &shift;
    let d = t.base.upper() - &shift;
    Ok(t.base.with_vectors(g, c, d)?)
}

/// States `x₁ … x_N` and controls `u₀ … u_{N−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    /// Splits a direct-form decision vector.
    pub fn from_direct(y: &DVector<f64>, nx: usize, nu: usize) -> Self {
        let horizon = y.len() / (nx + nu);
        let stride = nx + nu;
        Trajectory {
            controls: (0..horizon)
                .map(|k| y.rows(k * stride, nu).into_owned())
                .collect(),
            states: (0..horizon)
                .map(|k| y.rows(k * stride + nu, nx).into_owned())
                .collect(),
        }
    }
}

/// `y = S ỹ + M x₀`, unpacked.
pub fn recover_trajectory(
    t: &CondensedTemplate,
    y_tilde: &DVector<f64>,
    x0: &DVector<f64>,
) -> Result<Trajectory, MpcError> {
    if y_tilde.len() != t.s.ncols() || x0.len() != t.nx {
        return Err(MpcError::DimensionMismatch(format!(
            "ỹ has length {}, x0 has length {}; expected {} and {}",
            y_tilde.len(),
            x0.len(),
            t.s.ncols(),
            t.nx
        )));
    }
    let y = &t.s * y_tilde + &t.m * x0;
    Ok(Trajectory::from_direct(&y, t.nx, t.nu))
}

/// Condition numbers of the condensed Hessian without (`K = 0`) and with
/// the LQR preconditioner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    pub naive: f64,
    pub lqr: f64,
}

/// Ratio of extreme singular values of a symmetric matrix; `∞` when the
/// smallest one is zero.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let eig = a.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), x| {
        (lo.min(x.abs()), hi.max(x.abs()))
    });
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn condition_report(
    sys: &LinearSystem,
    weights: &MpcWeights,
    horizon: usize,
) -> Result<ConditionReport, MpcError> {
    let weights = weights.with_horizon(horizon)?;
    check_system(sys, &weights)?;
    let limits = BoxLimits::symmetric(sys.nu(), f64::INFINITY)?;
    let zero = DMatrix::zeros(sys.nu(), sys.nx());
    let (s, _) = condensation_maps(sys, &zero, &sys.a, horizon);
    let naive = s.transpose() * direct_hessian(sys, &weights) * &s;
    let (_, k) = lqr_gain(
        sys,
        &weights.q,
        &weights.r,
        DEFAULT_DARE_TOL,
        DEFAULT_DARE_MAX_ITERS,
    )?;
    let lqr = build_condensed_mpc(sys, &weights, &limits, &k)?;
    Ok(ConditionReport {
        naive: condition_number(&naive),
        lqr: condition_number(lqr.hessian()),
    })
}
