//! Offline stage: equilibration, the penalty grid, and one precomputed
//! affine layer `v ↦ W v + b` per grid penalty.
//!
//! For a diagonal per-row penalty `ρ` the ADMM step with the dual update
//! moved first is an affine map of `v = [y; z; λ]` followed by a box clamp
//! on the `z` block:
//!
//! ```text
//! D = (H + σI + GᵀρG)⁻¹
//!
//!     ⎡ D(σI − GᵀρG)        2DGᵀρ         −DGᵀ         ⎤        ⎡ −D g  ⎤
//! W = ⎢ GD(σI − GᵀρG) + G   2GDGᵀρ − I    −GDGᵀ + ρ⁻¹  ⎥    b = ⎢ −GD g ⎥
//!     ⎣ ρG                  −ρ            I            ⎦        ⎣ 0     ⎦
//! ```
//!
//! `W` depends only on `(H, G, σ, ρ)`, so every grid point is built once.
//! `b` is linear in `g` and is rebuilt from the cached `D` and `GD` when the
//! linear cost changes.

mod equilibrate;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use equilibrate::{ruiz_equilibrate, Scaling, DEFAULT_RUIZ_PASSES, DEFAULT_RUIZ_TOL};

use crate::problem::{ConstraintKind, QProblem};

pub const RHO_MIN: f64 = 1e-3;
pub const RHO_MAX: f64 = 1e3;
pub const RHO_INITIAL: f64 = 0.1;
/// Equality rows get this multiple of the base penalty.
pub const EQUALITY_PENALTY_SCALE: f64 = 1e3;
pub const DEFAULT_GRID_POINTS: usize = 13;
pub const DEFAULT_SIGMA: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayerError {
    #[error("penalty grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),
    #[error("KKT matrix H + σI + GᵀρG is not positive definite (ρ = {rho})")]
    Factorization { rho: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Log-spaced base penalties from [`RHO_MIN`] to [`RHO_MAX`].
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyGrid {
    values: Vec<f64>,
    eq_scale: f64,
    initial_index: usize,
}

impl PenaltyGrid {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn eq_scale(&self) -> f64 {
        self.eq_scale
    }

    pub fn initial_index(&self) -> usize {
        self.initial_index
    }

    /// Index of the value closest to `rho` in log distance; ties go to the
    /// smaller value.
    pub fn nearest(&self, rho: f64) -> usize {
        let target = rho.log10();
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (k, v) in self.values.iter().enumerate() {
            let dist = (v.log10() - target).abs();
            if dist < best_dist {
                best = k;
                best_dist = dist;
            }
        }
        best
    }

    /// Per-row penalties for grid point `k`.
    pub fn row_penalties(&self, k: usize, kinds: &[ConstraintKind]) -> DVector<f64> {
        let base = self.values[k];
        DVector::from_iterator(
            kinds.len(),
            kinds.iter().map(|kind| match kind {
                ConstraintKind::Equality => self.eq_scale * base,
                ConstraintKind::Inequality => base,
            }),
        )
    }
}

pub fn build_penalty_grid(n_points: usize) -> Result<PenaltyGrid, LayerError> {
    if n_points < 2 {
        return Err(LayerError::GridTooSmall(n_points));
    }
    let lo = RHO_MIN.log10().round() as i64;
    let hi = RHO_MAX.log10().round() as i64;
    let span = hi - lo;
    let steps = (n_points - 1) as i64;
    let values = (0..n_points as i64)
        .map(|k| {
            let num = span * k;
            if num % steps == 0 {
                // Whole decades come out exact: 10^-3 == 1e-3.
                10f64.powi((lo + num / steps) as i32)
            } else {
                10f64.powf(lo as f64 + num as f64 / steps as f64)
            }
        })
        .collect();
    let mut grid = PenaltyGrid {
        values,
        eq_scale: EQUALITY_PENALTY_SCALE,
        initial_index: 0,
    };
    grid.initial_index = grid.nearest(RHO_INITIAL);
    Ok(grid)
}

/// `D = (H + σI + Gᵀ diag(ρ) G)⁻¹` via Cholesky.
pub fn build_kkt_inverse(
    h: &DMatrix<f64>,
    gmat: &DMatrix<f64>,
    sigma: f64,
    rho_vec: &DVector<f64>,
) -> Result<DMatrix<f64>, LayerError> {
    let n = h.nrows();
    if h.ncols() != n || gmat.ncols() != n || gmat.nrows() != rho_vec.len() {
        return Err(LayerError::DimensionMismatch(format!(
            "H {}x{}, G {}x{}, rho {}",
            h.nrows(),
            h.ncols(),
            gmat.nrows(),
            gmat.ncols(),
            rho_vec.len()
        )));
    }
    if !(sigma >= 0.0) || rho_vec.iter().any(|r| !(*r > 0.0)) {
        return Err(LayerError::InvalidParameter(
            "need σ ≥ 0 and every ρ > 0".into(),
        ));
    }
    let mut kkt = h.clone();
    for i in 0..n {
        kkt[(i, i)] += sigma;
    }
    let rho_g = scale_rows(gmat, rho_vec);
    kkt.gemm_tr(1.0, gmat, &rho_g, 1.0);
    let rho = rho_vec.iter().copied().fold(f64::NAN, f64::min);
    let chol = kkt.cholesky().ok_or(LayerError::Factorization { rho })?;
    Ok(chol.inverse())
}

fn scale_rows(a: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= s[i];
    }
    out
}

/// One weight-tied layer: the fused matrix `W` plus what is needed to
/// rebuild the bias for a new `g`.
#[derive(Debug, Clone)]
pub struct Layer {
    /// Base (grid) penalty.
    pub rho: f64,
    pub rho_vec: DVector<f64>,
    pub rho_inv_vec: DVector<f64>,
    /// `D`
    pub kkt_inverse: DMatrix<f64>,
    /// `G D`
    pub gd: DMatrix<f64>,
    /// `(n + 2m) × (n + 2m)`
    pub w: DMatrix<f64>,
}

impl Layer {
    pub fn n(&self) -> usize {
        self.kkt_inverse.nrows()
    }

    pub fn m(&self) -> usize {
        self.rho_vec.len()
    }

    /// `b = [−D g; −GD g; 0]`
    pub fn bias(&self, g: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n() + 2 * self.m());
        self.bias_into(g, &mut out);
        out
    }

    pub fn bias_into(&self, g: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.n();
        let m = self.m();
        out.rows_mut(0, n).gemv(-1.0, &self.kkt_inverse, g, 0.0);
        out.rows_mut(n, m).gemv(-1.0, &self.gd, g, 0.0);
        out.rows_mut(n + m, m).fill(0.0);
    }
}

/// Builds the layer for `(H, G, σ, ρ)` through the identity
/// `DGᵀρ = A⁻¹Gᵀ(ρ⁻¹ + GA⁻¹Gᵀ)⁻¹` with `A = H + σI`, which keeps every
/// block of `W` accurate when `ρ` is large. The cached `D` (used for the
/// bias) is the Cholesky inverse of the full KKT matrix. Falls back to
/// [`build_layer`] when `A` cannot be factored.
pub fn build_layer_stable(
    h: &DMatrix<f64>,
    gmat: &DMatrix<f64>,
    sigma: f64,
    rho: f64,
    rho_vec: &DVector<f64>,
) -> Result<Layer, LayerError> {
    let d = build_kkt_inverse(h, gmat, sigma, rho_vec)?;
    let n = h.nrows();
    let m = gmat.nrows();
    let mut a = h.clone();
    for i in 0..n {
        a[(i, i)] += sigma;
    }
    let Some(a_chol) = a.cholesky() else {
        return Ok(build_layer(gmat, sigma, rho, rho_vec, d));
    };
    let rho_inv_vec = rho_vec.map(|r| 1.0 / r);
    let a_inv = symmetrized(a_chol.inverse());
    let a_inv_gt = &a_inv * gmat.transpose();

    let mut s = gmat * &a_inv_gt;
    for i in 0..m {
        s[(i, i)] += rho_inv_vec[i];
    }
    let s = symmetrized(s);
    let s_inv = symmetrized(
        s.cholesky()
            .ok_or(LayerError::Factorization { rho })?
            .inverse(),
    );

    // X = DGᵀρ, and D and GD in the same form for the first two row blocks.
    let x = &a_inv_gt * &s_inv;
    let mut d_w = a_inv;
    d_w.gemm(-1.0, &x, &a_inv_gt.transpose(), 1.0);
    let gd_w = scale_rows(&x.transpose(), &rho_inv_vec);

    let mut h2 = h.clone();
    for i in 0..n {
        h2[(i, i)] += 2.0 * sigma;
    }

    let mut w = DMatrix::<f64>::zeros(n + 2 * m, n + 2 * m);
    {
        let mut b11 = w.view_mut((0, 0), (n, n));
        b11.gemm(1.0, &d_w, &h2, 0.0);
        for i in 0..n {
            b11[(i, i)] -= 1.0;
        }
    }
    w.view_mut((0, n), (n, m)).copy_from(&(&x * 2.0));
    for j in 0..m {
        for i in 0..n {
            w[(i, n + m + j)] = -x[(i, j)] * rho_inv_vec[j];
        }
    }
    w.view_mut((n, 0), (m, n)).gemm(1.0, &gd_w, &h2, 0.0);
    for i in 0..m {
        for j in 0..m {
            let mut v22 = -2.0 * rho_inv_vec[i] * s_inv[(i, j)];
            if i == j {
                v22 += 1.0;
            }
            w[(n + i, n + j)] = v22;
            w[(n + i, n + m + j)] = rho_inv_vec[i] * s_inv[(i, j)] * rho_inv_vec[j];
        }
    }
    for i in 0..m {
        for j in 0..n {
            w[(n + m + i, j)] = rho_vec[i] * gmat[(i, j)];
        }
        w[(n + m + i, n + i)] = -rho_vec[i];
        w[(n + m + i, n + m + i)] = 1.0;
    }

    Ok(Layer {
        rho,
        rho_vec: rho_vec.clone(),
        rho_inv_vec,
        gd: gmat * &d,
        kkt_inverse: d,
        w,
    })
}

fn symmetrized(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Assembles `W` from its block formula. `d` must be the KKT inverse for
/// the same `(H, G, σ, ρ)`.
pub fn build_layer(
    gmat: &DMatrix<f64>,
    sigma: f64,
    rho: f64,
    rho_vec: &DVector<f64>,
    d: DMatrix<f64>,
) -> Layer {
    let n = gmat.ncols();
    let m = gmat.nrows();
    let rho_inv_vec = rho_vec.map(|r| 1.0 / r);

    // Gᵀρ (n×m) and σI − GᵀρG (n×n)
    let gt_rho = scale_rows(gmat, rho_vec).transpose();
    let mut t = DMatrix::<f64>::identity(n, n) * sigma;
    t.gemm(-1.0, &gt_rho, gmat, 1.0);

    let gd = gmat * &d;
    let gdgt = &gd * gmat.transpose();

    let mut w = DMatrix::<f64>::zeros(n + 2 * m, n + 2 * m);

    // Row block 1: [D(σI − GᵀρG), 2DGᵀρ, −DGᵀ]
    w.view_mut((0, 0), (n, n)).gemm(1.0, &d, &t, 0.0);
    w.view_mut((0, n), (n, m)).gemm(2.0, &d, &gt_rho, 0.0);
    w.view_mut((0, n + m), (n, m))
        .gemm(-1.0, &d, &gmat.transpose(), 0.0);

    // Row block 2: [GD(σI − GᵀρG) + G, 2GDGᵀρ − I, −GDGᵀ + ρ⁻¹]
    {
        let mut b21 = w.view_mut((n, 0), (m, n));
        b21.copy_from(gmat);
        b21.gemm(1.0, &gd, &t, 1.0);
    }
    for i in 0..m {
        for j in 0..m {
            let mut v22 = 2.0 * gdgt[(i, j)] * rho_vec[j];
            let mut v23 = -gdgt[(i, j)];
            if i == j {
                v22 -= 1.0;
                v23 += rho_inv_vec[i];
            }
            w[(n + i, n + j)] = v22;
            w[(n + i, n + m + j)] = v23;
        }
    }

    // Row block 3: [ρG, −ρ, I]
    for i in 0..m {
        for j in 0..n {
            w[(n + m + i, j)] = rho_vec[i] * gmat[(i, j)];
        }
        w[(n + m + i, n + i)] = -rho_vec[i];
        w[(n + m + i, n + m + i)] = 1.0;
    }

    Layer {
        rho,
        rho_vec: rho_vec.clone(),
        rho_inv_vec,
        kkt_inverse: d,
        gd,
        w,
    }
}

/// Clamp bounds for `v = [y; z; λ]`: infinite on `y` and `λ`, `[c, d]` on `z`.
pub fn clamp_bounds(
    n: usize,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let m = lower.len();
    let mut lo = DVector::from_element(n + 2 * m, f64::NEG_INFINITY);
    let mut hi = DVector::from_element(n + 2 * m, f64::INFINITY);
    lo.rows_mut(n, m).copy_from(lower);
    hi.rows_mut(n, m).copy_from(upper);
    (lo, hi)
}

/// How the offline stage is configured.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSettings {
    pub sigma: f64,
    pub grid_points: usize,
    pub equilibrate: bool,
    pub ruiz_passes: usize,
    pub ruiz_tol: f64,
}

impl Default for LayerSettings {
    fn default() -> Self {
        LayerSettings {
            sigma: DEFAULT_SIGMA,
            grid_points: DEFAULT_GRID_POINTS,
            equilibrate: true,
            ruiz_passes: DEFAULT_RUIZ_PASSES,
            ruiz_tol: DEFAULT_RUIZ_TOL,
        }
    }
}

/// Every precomputed layer for one `(H, G)` pair, plus the scaling that
/// maps the user's problem onto the one the layers were built for.
///
/// Immutable once built; concurrent solves may share it.
#[derive(Debug, Clone)]
pub struct LayerCache {
    grid: PenaltyGrid,
    sigma: f64,
    scaling: Scaling,
    kinds: Vec<ConstraintKind>,
    working: QProblem,
    layers: Vec<Layer>,
    clamp_lo: DVector<f64>,
    clamp_hi: DVector<f64>,
}

impl LayerCache {
    /// Equilibrates `p` (if enabled), builds the grid and every layer.
    pub fn build(p: &QProblem, settings: &LayerSettings) -> Result<Self, LayerError> {
        let grid = build_penalty_grid(settings.grid_points)?;
        if settings.equilibrate {
            let (scaled, scaling) = ruiz_equilibrate(p, settings.ruiz_passes, settings.ruiz_tol);
            let mut cache = precompute_all(&scaled, &grid, settings.sigma)?;
            cache.scaling = scaling;
            Ok(cache)
        } else {
            precompute_all(p, &grid, settings.sigma)
        }
    }

    pub fn grid(&self) -> &PenaltyGrid {
        &self.grid
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    /// The (scaled) problem the layers were built for.
    pub fn working_problem(&self) -> &QProblem {
        &self.working
    }

    pub fn kinds(&self) -> &[ConstraintKind] {
        &self.kinds
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, k: usize) -> &Layer {
        &self.layers[k]
    }

    pub fn n(&self) -> usize {
        self.working.n()
    }

    pub fn m(&self) -> usize {
        self.working.m()
    }

    /// `(c̃, d̃)` for the working problem.
    pub fn clamp_bounds(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.clamp_lo, &self.clamp_hi)
    }
}

/// Builds a layer for every grid point of `p` as given (no scaling).
pub fn precompute_all(
    p: &QProblem,
    grid: &PenaltyGrid,
    sigma: f64,
) -> Result<LayerCache, LayerError> {
    let kinds = p.constraint_kinds();
    let layers = (0..grid.len())
        .map(|k| {
            let rho_vec = grid.row_penalties(k, &kinds);
            build_layer_stable(
                p.hessian(),
                p.constraints(),
                sigma,
                grid.values()[k],
                &rho_vec,
            )
        })
        .collect::<Result<Vec<_>, LayerError>>()?;
    let (clamp_lo, clamp_hi) = clamp_bounds(p.n(), p.lower(), p.upper());
    Ok(LayerCache {
        grid: grid.clone(),
        sigma,
        scaling: Scaling::identity(p.n(), p.m()),
        kinds,
        working: QProblem::from_parts_unchecked(
            Arc::clone(p.hessian_arc()),
            p.linear().clone(),
            Arc::clone(p.constraints_arc()),
            p.lower().clone(),
            p.upper().clone(),
        ),
        layers,
        clamp_lo,
        clamp_hi,
    })
}

#[cfg(test)]
mod tests;
