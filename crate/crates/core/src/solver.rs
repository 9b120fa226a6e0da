//! Online stage: repeat `v ← clamp(W v + b, c̃, d̃)`, look at the residuals
//! every `check_interval` iterations, and switch to another cached layer
//! when the residual balance asks for a different penalty.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, DVectorView};
use thiserror::Error;

use crate::layers::{self, LayerCache, LayerError, LayerSettings, PenaltyGrid};
use crate::problem::{vec_inf_norm, QProblem, RhoSwitch, Solution, SolveStatus};

pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_CHECK_INTERVAL: usize = 25;
pub const DEFAULT_MAX_ITERS: usize = 4000;
pub const DEFAULT_RHO_SWITCH_THRESHOLD: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error("layer cache does not match the problem: {0}")]
    InvalidCache(String),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub eps_prim: f64,
    pub eps_dual: f64,
    pub check_interval: usize,
    pub max_iters: usize,
    /// Only switch layers when the nominal penalty differs from the
    /// current one by at least this factor.
    pub rho_switch_threshold: f64,
    pub adaptive_rho: bool,
    /// Offline-stage settings (σ, grid, equilibration).
    pub layers: LayerSettings,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            eps_prim: DEFAULT_EPS,
            eps_dual: DEFAULT_EPS,
            check_interval: DEFAULT_CHECK_INTERVAL,
            max_iters: DEFAULT_MAX_ITERS,
            rho_switch_threshold: DEFAULT_RHO_SWITCH_THRESHOLD,
            adaptive_rho: true,
            layers: LayerSettings::default(),
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |msg: &str| Err(SolveError::InvalidSettings(msg.into()));
        if !(self.eps_prim > 0.0 && self.eps_dual > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.check_interval == 0 {
            return bad("check_interval must be at least 1");
        }
        if self.max_iters < self.check_interval {
            return bad("max_iters must be at least check_interval");
        }
        if !(self.rho_switch_threshold >= 1.0) {
            return bad("rho_switch_threshold must be at least 1");
        }
        Ok(())
    }
}

/// `v = [y; z; λ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateVector {
    data: DVector<f64>,
    n: usize,
    m: usize,
}

impl IterateVector {
    pub fn zeros(n: usize, m: usize) -> Self {
        IterateVector {
            data: DVector::zeros(n + 2 * m),
            n,
            m,
        }
    }

    pub fn from_parts(y: &DVector<f64>, z: &DVector<f64>, lambda: &DVector<f64>) -> Self {
        let (n, m) = (y.len(), z.len());
        assert_eq!(lambda.len(), m, "z and λ must have equal length");
        let mut data = DVector::zeros(n + 2 * m);
        data.rows_mut(0, n).copy_from(y);
        data.rows_mut(n, m).copy_from(z);
        data.rows_mut(n + m, m).copy_from(lambda);
        IterateVector { data, n, m }
    }

    pub fn from_vector(data: DVector<f64>, n: usize, m: usize) -> Self {
        assert_eq!(data.len(), n + 2 * m);
        IterateVector { data, n, m }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn y(&self) -> DVectorView<'_, f64> {
        self.data.rows(0, self.n)
    }

    pub fn z(&self) -> DVectorView<'_, f64> {
        self.data.rows(self.n, self.m)
    }

    pub fn lambda(&self) -> DVectorView<'_, f64> {
        self.data.rows(self.n + self.m, self.m)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }
}

/// Where a solve starts: an iterate (in problem units) and optionally the
/// grid index to start from (`None` = the grid's initial index).
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub iterate: IterateVector,
    pub index: Option<usize>,
}

impl WarmStart {
    pub fn cold(n: usize, m: usize, index: usize) -> Self {
        WarmStart {
            iterate: IterateVector::zeros(n, m),
            index: Some(index),
        }
    }
}

/// Elementwise projection onto `[lo, hi]`.
pub fn clamp_in_place(v: &mut DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) {
    for ((x, l), h) in v.iter_mut().zip(lo.iter()).zip(hi.iter()) {
        *x = x.max(*l).min(*h);
    }
}

/// One layer: `clamp(W v + b, lo, hi)`.
pub fn iterate(
    v: &DVector<f64>,
    w: &DMatrix<f64>,
    b: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> DVector<f64> {
    let mut out = b.clone();
    out.gemv(1.0, w, v, 1.0);
    clamp_in_place(&mut out, lo, hi);
    out
}

/// `(‖Gy − z‖∞, ‖Hy + g + Gᵀλ‖∞)` on `p` as given.
pub fn residuals(v: &IterateVector, p: &QProblem) -> (f64, f64) {
    let y = v.y();
    let mut prim = p.constraints() * y;
    prim -= v.z();
    let mut dual = p.linear().clone();
    dual.gemv(1.0, p.hessian(), &y, 1.0);
    dual.gemv_tr(1.0, p.constraints(), &v.lambda(), 1.0);
    (vec_inf_norm(&prim), vec_inf_norm(&dual))
}

/// Residual-balancing penalty update given the two normalizers
/// `dual_scale = max(‖Hy‖, ‖Gᵀλ‖, ‖g‖, 1e-4)` and
/// `prim_scale = max(‖Gy‖, ‖z‖, 1e-4)`.
pub fn rho_nominal_from_norms(
    r_prim: f64,
    r_dual: f64,
    dual_scale: f64,
    prim_scale: f64,
    current_rho: f64,
) -> f64 {
    if r_prim == 0.0 || r_dual == 0.0 {
        return current_rho;
    }
    current_rho * ((r_prim * dual_scale) / (r_dual * prim_scale)).sqrt()
}

pub fn rho_nominal(
    r_prim: f64,
    r_dual: f64,
    v: &IterateVector,
    p: &QProblem,
    current_rho: f64,
) -> f64 {
    if r_prim == 0.0 || r_dual == 0.0 {
        return current_rho;
    }
    let y = v.y();
    let hy = p.hessian() * y;
    let gtl = p.constraints().tr_mul(&v.lambda());
    let gy = p.constraints() * y;
    let dual_scale = vec_inf_norm(&hy)
        .max(vec_inf_norm(&gtl))
        .max(vec_inf_norm(p.linear()))
        .max(1e-4);
    let prim_scale = vec_inf_norm(&gy)
        .max(vec_inf_norm(&v.z().into_owned()))
        .max(1e-4);
    rho_nominal_from_norms(r_prim, r_dual, dual_scale, prim_scale, current_rho)
}

/// Grid index to use next: the log-nearest point to `rho_nominal`, but only
/// if it is at least `threshold` times away from the current penalty.
pub fn select_layer(
    rho_nominal: f64,
    grid: &PenaltyGrid,
    current_index: usize,
    threshold: f64,
) -> usize {
    let current = grid.values()[current_index];
    let ratio = (rho_nominal / current).max(current / rho_nominal);
    if ratio >= threshold {
        grid.nearest(rho_nominal)
    } else {
        current_index
    }
}

/// `[y; Gy; λ]` from a previous solution, starting at its final grid index.
pub fn warm_start(prev: &Solution, p: &QProblem) -> Result<WarmStart, SolveError> {
    if prev.y.len() != p.n() || prev.lambda.len() != p.m() {
        return Err(SolveError::DimensionMismatch(format!(
            "previous solution has n = {}, m = {}; problem has n = {}, m = {}",
            prev.y.len(),
            prev.lambda.len(),
            p.n(),
            p.m()
        )));
    }
    let z = p.constraints() * &prev.y;
    Ok(WarmStart {
        iterate: IterateVector::from_parts(&prev.y, &z, &prev.lambda),
        index: prev.final_index(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualCheck {
    pub iteration: usize,
    pub r_prim: f64,
    pub r_dual: f64,
    /// Grid index in use during the iterations leading to this check.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Solution,
    pub wall_time: Duration,
    /// One entry per residual check.
    pub history: Vec<ResidualCheck>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    UntilConverged,
    Fixed(usize),
}

fn check_cache(p: &QProblem, cache: &LayerCache) -> Result<(), SolveError> {
    if cache.n() != p.n() || cache.m() != p.m() {
        return Err(SolveError::InvalidCache(format!(
            "cache built for n = {}, m = {}; problem has n = {}, m = {}",
            cache.n(),
            cache.m(),
            p.n(),
            p.m()
        )));
    }
    if let Some(row) = (0..p.m()).find(|&i| p.kind(i) != cache.kinds()[i]) {
        return Err(SolveError::InvalidCache(format!(
            "row {row} changed between equality and inequality"
        )));
    }
    Ok(())
}

/// Runs the layer iteration until both residuals meet their tolerances at
/// a check, or `max_iters` is reached (reported through the status, not as
/// an error). The returned solution is in the units of `p`.
///
/// `cache` must have been built for `p`'s `H` and `G`; `g`, `c`, `d` may
/// differ from the ones it was built with.
pub fn solve(
    p: &QProblem,
    cache: &LayerCache,
    settings: &SolverSettings,
    start: Option<&WarmStart>,
) -> Result<SolveReport, SolveError> {
    run(p, cache, settings, start, Mode::UntilConverged)
}

/// Runs exactly `k` iterations with no early exit. Penalty switching still
/// happens at check points when `k ≥ check_interval`.
pub fn fixed_iters(
    p: &QProblem,
    cache: &LayerCache,
    settings: &SolverSettings,
    k: usize,
    start: Option<&WarmStart>,
) -> Result<SolveReport, SolveError> {
    if k == 0 {
        return Err(SolveError::InvalidSettings(
            "fixed iteration count must be at least 1".into(),
        ));
    }
    run(p, cache, settings, start, Mode::Fixed(k))
}

fn run(
    p: &QProblem,
    cache: &LayerCache,
    settings: &SolverSettings,
    start: Option<&WarmStart>,
    mode: Mode,
) -> Result<SolveReport, SolveError> {
    settings.validate()?;
    check_cache(p, cache)?;
    let clock = Instant::now();

    let (n, m) = (p.n(), p.m());
    let grid = cache.grid();
    let scaling = cache.scaling();
    let (g_s, c_s, d_s) = scaling.scale_vectors(p.linear(), p.lower(), p.upper());
    let (lo, hi) = layers::clamp_bounds(n, &c_s, &d_s);

    let mut index = start
        .and_then(|s| s.index)
        .unwrap_or_else(|| grid.initial_index());
    if index >= grid.len() {
        return Err(SolveError::InvalidSettings(format!(
            "start index {index} outside a grid of {}",
            grid.len()
        )));
    }

    let mut v = match start {
        Some(s) => {
            let it = &s.iterate;
            if it.n() != n || it.m() != m {
                return Err(SolveError::DimensionMismatch(format!(
                    "warm start has n = {}, m = {}; problem has n = {n}, m = {m}",
                    it.n(),
                    it.m()
                )));
            }
            let (y, z, l) = scaling.scale_iterate(
                &it.y().into_owned(),
                &it.z().into_owned(),
                &it.lambda().into_owned(),
            );
            IterateVector::from_parts(&y, &z, &l).data
        }
        None => DVector::zeros(n + 2 * m),
    };
    let mut next = DVector::zeros(n + 2 * m);
    let mut bias = cache.layer(index).bias(&g_s);

    // Unscaling can move a clamped z by an ulp; clamping again keeps it
    // inside [c, d] exactly.
    let unscale = |v: &DVector<f64>| {
        let (y, mut z, l) = scaling.unscale_iterate(
            &v.rows(0, n).into_owned(),
            &v.rows(n, m).into_owned(),
            &v.rows(n + m, m).into_owned(),
        );
        clamp_in_place(&mut z, p.lower(), p.upper());
        IterateVector::from_parts(&y, &z, &l)
    };

    let limit = match mode {
        Mode::UntilConverged => settings.max_iters,
        Mode::Fixed(k) => k,
    };
    let mut trace = vec![RhoSwitch {
        iteration: 0,
        index,
    }];
    let mut history = Vec::new();
    let mut status = None;
    let mut iterations = 0;
    let mut last: Option<(usize, f64, f64)> = None;

    for i in 1..=limit {
        next.copy_from(&bias);
        next.gemv(1.0, &cache.layer(index).w, &v, 1.0);
        clamp_in_place(&mut next, &lo, &hi);
        std::mem::swap(&mut v, &mut next);
        iterations = i;

        if i % settings.check_interval != 0 {
            continue;
        }
        if v.iter().any(|x| !x.is_finite()) {
            status = Some(SolveStatus::Invalid);
            break;
        }
        let current = unscale(&v);
        let (r_prim, r_dual) = residuals(&current, p);
        history.push(ResidualCheck {
            iteration: i,
            r_prim,
            r_dual,
            index,
        });
        last = Some((i, r_prim, r_dual));
        if mode == Mode::UntilConverged
            && r_prim <= settings.eps_prim
            && r_dual <= settings.eps_dual
        {
            status = Some(SolveStatus::Solved);
            break;
        }
        if settings.adaptive_rho {
            let nominal = rho_nominal(r_prim, r_dual, &current, p, grid.values()[index]);
            let chosen = select_layer(nominal, grid, index, settings.rho_switch_threshold);
            if chosen != index {
                index = chosen;
                cache.layer(index).bias_into(&g_s, &mut bias);
                trace.push(RhoSwitch {
                    iteration: i,
                    index,
                });
            }
        }
    }

    let out = unscale(&v);
    let (r_prim, r_dual) = match last {
        Some((i, rp, rd)) if i == iterations => (rp, rd),
        _ => residuals(&out, p),
    };
    let status = status.unwrap_or_else(|| {
        if !(r_prim.is_finite() && r_dual.is_finite()) {
            SolveStatus::Invalid
        } else if r_prim <= settings.eps_prim && r_dual <= settings.eps_dual {
            SolveStatus::Solved
        } else {
            SolveStatus::MaxIters
        }
    });

    Ok(SolveReport {
        solution: Solution {
            y: out.y().into_owned(),
            z: out.z().into_owned(),
            lambda: out.lambda().into_owned(),
            status,
            iterations,
            r_prim,
            r_dual,
            rho_trace: trace,
        },
        wall_time: clock.elapsed(),
        history,
    })
}

/// A problem's layer cache bundled with the settings it was built with.
#[derive(Debug, Clone)]
pub struct Solver {
    cache: LayerCache,
    settings: SolverSettings,
}

impl Solver {
    /// Runs the offline stage for `p`.
    pub fn new(p: &QProblem, settings: SolverSettings) -> Result<Self, SolveError> {
        settings.validate()?;
        let cache = LayerCache::build(p, &settings.layers)?;
        Ok(Solver { cache, settings })
    }

    pub fn cache(&self) -> &LayerCache {
        &self.cache
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// Online-stage knobs (tolerances, iteration limits, adaptivity) may be
    /// changed freely; `layers` changes take effect only in a new `Solver`.
    pub fn settings_mut(&mut self) -> &mut SolverSettings {
        &mut self.settings
    }

    pub fn solve(
        &self,
        p: &QProblem,
        start: Option<&WarmStart>,
    ) -> Result<SolveReport, SolveError> {
        solve(p, &self.cache, &self.settings, start)
    }

    pub fn fixed_iters(
        &self,
        p: &QProblem,
        k: usize,
        start: Option<&WarmStart>,
    ) -> Result<SolveReport, SolveError> {
        fixed_iters(p, &self.cache, &self.settings, k, start)
    }
}

/// Offline and online stage in one call.
pub fn solve_problem(p: &QProblem, settings: &SolverSettings) -> Result<SolveReport, SolveError> {
    Solver::new(p, settings.clone())?.solve(p, None)
}
