//! Random problem suites, closed-loop MPC simulation and CSV result tables.

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::mpc::{
    build_condensed_mpc, instantiate, lqr_gain, recover_trajectory, spectral_radius, BoxLimits,
    CondensedTemplate, LinearSystem, MpcError, MpcWeights, DEFAULT_DARE_MAX_ITERS,
    DEFAULT_DARE_TOL,
};
use crate::problem::{vec_inf_norm, ProblemError, QProblem, SolveStatus};
use crate::solver::{warm_start, SolveError, Solver, SolverSettings, WarmStart};

/// Spectral-radius band of generated open-loop unstable systems.
pub const UNSTABLE_RADIUS: (f64, f64) = (1.05, 1.3);
/// Spectral-radius band of generated stable systems.
pub const STABLE_RADIUS: (f64, f64) = (0.8, 0.95);
pub const MAX_SYSTEM_RESAMPLES: usize = 10;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("no controllable system for nu = {nu} after {attempts} samples")]
    Uncontrollable { nu: usize, attempts: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// A random QP together with a point known to be feasible.
#[derive(Debug, Clone)]
pub struct GeneratedQp {
    pub problem: QProblem,
    pub witness: DVector<f64>,
}

/// `H = MᵀM + 0.1 I`, standard-normal `g` and `G`, `⌊n/4⌋` equality rows
/// through `G y₀` followed by `⌊n/4⌋` inequality rows `G y₀ ± (|ξ| + 0.1)`.
pub fn gen_random_dense_qp_with_witness(n: usize, seed: u64) -> Result<GeneratedQp, BenchError> {
    if n < 4 {
        return Err(BenchError::InvalidSize(format!(
            "random QP needs n ≥ 4, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = n / 4;
    let m_half = normal_matrix(&mut rng, n, n);
    let mut h = m_half.tr_mul(&m_half);
    for i in 0..n {
        h[(i, i)] += 0.1;
    }
    let h = (&h + h.transpose()) * 0.5;
    let g = normal_vector(&mut rng, n);
    let y0 = normal_vector(&mut rng, n);
    let gmat = normal_matrix(&mut rng, 2 * k, n);
    let gy = &gmat * &y0;
    let mut c = gy.clone();
    let mut d = gy;
    for i in k..2 * k {
        let slack = rng.sample::<f64, _>(StandardNormal).abs() + 0.1;
        c[i] -= slack;
        d[i] += slack;
    }
    Ok(GeneratedQp {
        problem: QProblem::new(h, g, gmat, c, d)?,
        witness: y0,
    })
}

pub fn gen_random_dense_qp(n: usize, seed: u64) -> Result<QProblem, BenchError> {
    Ok(gen_random_dense_qp_with_witness(n, seed)?.problem)
}

/// `nx = 3 nu`; standard-normal `A`, `B` with `A` rescaled to a spectral
/// radius drawn uniformly from [`UNSTABLE_RADIUS`] or [`STABLE_RADIUS`].
/// Uncontrollable draws are resampled.
pub fn gen_random_linear_system(
    nu: usize,
    seed: u64,
    unstable: bool,
) -> Result<LinearSystem, BenchError> {
    if nu == 0 {
        return Err(BenchError::InvalidSize("nu must be at least 1".into()));
    }
    let nx = 3 * nu;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = if unstable {
        UNSTABLE_RADIUS
    } else {
        STABLE_RADIUS
    };
    for _ in 0..MAX_SYSTEM_RESAMPLES {
        let a = normal_matrix(&mut rng, nx, nx);
        let b = normal_matrix(&mut rng, nx, nu);
        let target = rng.random_range(lo..=hi);
        let radius = spectral_radius(&a);
        if radius == 0.0 {
            continue;
        }
        let sys = LinearSystem::new(a * (target / radius), b)?;
        if sys.is_controllable() {
            return Ok(sys);
        }
    }
    Err(BenchError::Uncontrollable {
        nu,
        attempts: MAX_SYSTEM_RESAMPLES,
    })
}

/// Condensed MPC with its layer cache, built once and reused every step.
#[derive(Debug, Clone)]
pub struct MpcController {
    sys: LinearSystem,
    limits: BoxLimits,
    template: CondensedTemplate,
    solver: Solver,
}

impl MpcController {
    /// LQR gain from the stage weights, the condensed template and the
    /// solver's offline stage.
    pub fn new(
        sys: LinearSystem,
        weights: &MpcWeights,
        limits: BoxLimits,
        settings: SolverSettings,
    ) -> Result<Self, BenchError> {
        let (_, k) = lqr_gain(
            &sys,
            weights.q(),
            weights.r(),
            DEFAULT_DARE_TOL,
            DEFAULT_DARE_MAX_ITERS,
        )?;
        let template = build_condensed_mpc(&sys, weights, &limits, &k)?;
        let solver = Solver::new(template.base(), settings)?;
        Ok(MpcController {
            sys,
            limits,
            template,
            solver,
        })
    }

    pub fn system(&self) -> &LinearSystem {
        &self.sys
    }

    pub fn limits(&self) -> &BoxLimits {
        &self.limits
    }

    pub fn template(&self) -> &CondensedTemplate {
        &self.template
    }

    pub fn solver(&self) -> &Solver {
        &self.solver
    }
}

/// How much solver work each MPC step gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepPolicy {
    /// Exactly this many warm-started iterations.
    Iterations(usize),
    /// Solve to the controller's tolerances (warm-started).
    ToTolerance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoopOptions {
    pub steps: usize,
    pub policy: StepPolicy,
    /// `‖x‖∞` at or below this counts as stabilized.
    pub stabilize_tol: f64,
    /// Activity is measured over the first this-many steps.
    pub activity_window: usize,
    /// `‖x‖∞` above this stops the run as diverged.
    pub divergence_limit: f64,
}

impl ClosedLoopOptions {
    pub fn new(steps: usize, policy: StepPolicy) -> Self {
        ClosedLoopOptions {
            steps,
            policy,
            stabilize_tol: 1e-2,
            activity_window: 50,
            divergence_limit: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopResult {
    /// `x₀, x₁, …` up to where the run stopped.
    pub states: Vec<DVector<f64>>,
    /// Applied (clipped) controls, one per transition.
    pub controls: Vec<DVector<f64>>,
    /// First step index `t` with `‖x_t‖∞ ≤ stabilize_tol`.
    pub steps_to_stabilize: Option<usize>,
    /// Share of the first `activity_window` steps whose commanded `u₀`
    /// reached a control limit.
    pub activity_fraction: f64,
    pub diverged: bool,
    /// Solver iterations summed over all steps.
    pub iterations: usize,
    pub r_prim: f64,
    pub r_dual: f64,
    pub wall_time: Duration,
}

const ACTIVE_TOL: f64 = 1e-6;

/// Receding-horizon loop: at each step instantiate the condensed QP at the
/// current state, run the solver warm-started from the previous step's
/// iterate, apply the first control (clipped to the limits) to the true
/// dynamics and advance.
///
/// The run stops after `steps` transitions, on divergence, or once the
/// state is stabilized and the activity window has passed.
pub fn simulate_closed_loop(
    ctrl: &MpcController,
    x0: &DVector<f64>,
    opts: &ClosedLoopOptions,
) -> Result<ClosedLoopResult, BenchError> {
    let clock = Instant::now();
    let (u_lo, u_hi) = (&ctrl.limits.u_lo, &ctrl.limits.u_hi);
    let mut x = x0.clone();
    let mut states = vec![x.clone()];
    let mut controls = Vec::new();
    let mut start: Option<WarmStart> = None;
    let mut stabilized = (vec_inf_norm(&x) <= opts.stabilize_tol).then_some(0);
    let mut active_steps = 0usize;
    let mut iterations = 0usize;
    let (mut r_prim, mut r_dual) = (0.0, 0.0);
    let mut diverged = false;

    for t in 0..opts.steps {
        if stabilized.is_some() && t >= opts.activity_window {
            break;
        }
        let qp = instantiate(&ctrl.template, &x)?;
        let report = match opts.policy {
            StepPolicy::Iterations(k) => ctrl.solver.fixed_iters(&qp, k, start.as_ref())?,
            StepPolicy::ToTolerance => ctrl.solver.solve(&qp, start.as_ref())?,
        };
        let sol = report.solution;
        if sol.status == SolveStatus::Invalid {
            diverged = true;
            break;
        }
        iterations += sol.iterations;
        (r_prim, r_dual) = (sol.r_prim, sol.r_dual);

        let traj = recover_trajectory(&ctrl.template, &sol.y, &x)?;
        let u = &traj.controls[0];
        if t < opts.activity_window
            && (0..u.len()).any(|i| u[i] <= u_lo[i] + ACTIVE_TOL || u[i] >= u_hi[i] - ACTIVE_TOL)
        {
            active_steps += 1;
        }
        let applied = DVector::from_fn(u.len(), |i, _| u[i].max(u_lo[i]).min(u_hi[i]));
        x = ctrl.sys.step(&x, &applied);
        controls.push(applied);
        states.push(x.clone());
        start = Some(warm_start(&sol, &qp)?);

        let size = vec_inf_norm(&x);
        if !size.is_finite() || size > opts.divergence_limit {
            diverged = true;
            break;
        }
        if stabilized.is_none() && size <= opts.stabilize_tol {
            stabilized = Some(t + 1);
        }
    }

    let window = opts.activity_window.min(controls.len()).max(1);
    Ok(ClosedLoopResult {
        states,
        controls,
        steps_to_stabilize: stabilized,
        activity_fraction: active_steps as f64 / window as f64,
        diverged,
        iterations,
        r_prim,
        r_dual,
        wall_time: clock.elapsed(),
    })
}

/// Share of the first `window` steps in which the unconstrained LQR
/// command `−K x` of a clipped-LQR rollout from `x0` reaches a limit.
pub fn lqr_activity(
    sys: &LinearSystem,
    k: &DMatrix<f64>,
    limits: &BoxLimits,
    x0: &DVector<f64>,
    window: usize,
) -> f64 {
    let mut x = x0.clone();
    let mut active = 0;
    for _ in 0..window {
        let u = -(k * &x);
        let mut hit = false;
        let applied = DVector::from_fn(u.len(), |i, _| {
            if u[i] <= limits.u_lo[i] + ACTIVE_TOL || u[i] >= limits.u_hi[i] - ACTIVE_TOL {
                hit = true;
            }
            u[i].max(limits.u_lo[i]).min(limits.u_hi[i])
        });
        if hit {
            active += 1;
        }
        x = sys.step(&x, &applied);
    }
    active as f64 / window.max(1) as f64
}

/// Smallest scale in `1, 1.25, 1.25², …` (at most 100 steps) at which the
/// clipped-LQR rollout from `scale · direction` has at least `target`
/// activity over `window` steps.
pub fn scale_for_activity(
    sys: &LinearSystem,
    k: &DMatrix<f64>,
    limits: &BoxLimits,
    direction: &DVector<f64>,
    target: f64,
    window: usize,
) -> f64 {
    let mut scale = 1.0;
    for _ in 0..100 {
        if lqr_activity(sys, k, limits, &(direction * scale), window) >= target {
            break;
        }
        scale *= 1.25;
    }
    scale
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Suite {
    #[serde(rename = "random-qp")]
    RandomQp,
    #[serde(rename = "random-mpc")]
    RandomMpc,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::RandomQp => "random-qp",
            Suite::RandomMpc => "random-mpc",
        }
    }
}

/// Closed-loop settings of the MPC suite.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcBenchSettings {
    pub horizon: usize,
    pub iterations_per_step: usize,
    pub steps: usize,
    pub unstable: bool,
    /// Symmetric control limit `|u_i| ≤ u_max`.
    pub u_max: f64,
    /// Activity the clipped-LQR rollout must show before `x₀` is accepted.
    pub activity_target: f64,
}

impl Default for MpcBenchSettings {
    fn default() -> Self {
        MpcBenchSettings {
            horizon: 40,
            iterations_per_step: 1,
            steps: 500,
            unstable: false,
            u_max: 1.0,
            activity_target: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub suite: Suite,
    /// `n` for the QP suite, `nu` for the MPC suite.
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub solver: SolverSettings,
    pub mpc: MpcBenchSettings,
    pub output: Option<PathBuf>,
}

impl BenchConfig {
    /// Sizes log-spaced from 10 up to 500 (2000 with `full_scale`).
    pub fn random_qp(full_scale: bool) -> Self {
        let sizes = if full_scale {
            vec![10, 22, 50, 110, 250, 550, 1200, 2000]
        } else {
            vec![10, 22, 50, 110, 250, 500]
        };
        BenchConfig {
            suite: Suite::RandomQp,
            sizes,
            seeds: (0..10).collect(),
            solver: SolverSettings::default(),
            mpc: MpcBenchSettings::default(),
            output: None,
        }
    }

    /// Control dimensions up to 20 (10 to 50 with `full_scale`).
    pub fn random_mpc(full_scale: bool) -> Self {
        let sizes = if full_scale {
            vec![10, 20, 30, 40, 50]
        } else {
            vec![4, 10, 20]
        };
        BenchConfig {
            suite: Suite::RandomMpc,
            sizes,
            seeds: (0..10).collect(),
            solver: SolverSettings::default(),
            mpc: MpcBenchSettings::default(),
            output: None,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.sizes.is_empty() || self.seeds.is_empty() {
            return Err(BenchError::InvalidSize(
                "need at least one size and one seed".into(),
            ));
        }
        let min = match self.suite {
            Suite::RandomQp => 4,
            Suite::RandomMpc => 1,
        };
        if let Some(s) = self.sizes.iter().find(|s| **s < min) {
            return Err(BenchError::InvalidSize(format!(
                "{} sizes must be at least {min}, got {s}",
                self.suite.as_str()
            )));
        }
        if self.suite == Suite::RandomMpc
            && (self.mpc.horizon == 0 || self.mpc.iterations_per_step == 0)
        {
            return Err(BenchError::InvalidSize(
                "horizon and iterations per step must be at least 1".into(),
            ));
        }
        self.solver.validate()?;
        Ok(())
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub suite: Suite,
    pub n_or_nu: usize,
    pub seed: u64,
    pub iterations: usize,
    pub r_prim: f64,
    pub r_dual: f64,
    pub converged: bool,
    pub wall_ms: f64,
    pub steps_to_stabilize: Option<usize>,
    pub activity_fraction: Option<f64>,
}

fn run_qp(n: usize, seed: u64, settings: &SolverSettings) -> Result<RunRecord, BenchError> {
    let p = gen_random_dense_qp(n, seed)?;
    let clock = Instant::now();
    let s = Solver::new(&p, settings.clone())?.solve(&p, None)?.solution;
    let wall = clock.elapsed();
    Ok(RunRecord {
        suite: Suite::RandomQp,
        n_or_nu: n,
        seed,
        iterations: s.iterations,
        r_prim: s.r_prim,
        r_dual: s.r_dual,
        converged: s.status == SolveStatus::Solved,
        wall_ms: wall.as_secs_f64() * 1e3,
        steps_to_stabilize: None,
        activity_fraction: None,
    })
}

/// The suite's MPC instance for `(nu, seed)`: generated system, unit
/// weights with LQR terminal cost, symmetric control limits, and an
/// initial state along a random direction scaled for constraint activity.
pub fn mpc_instance(
    nu: usize,
    seed: u64,
    cfg: &MpcBenchSettings,
    settings: &SolverSettings,
) -> Result<(MpcController, DVector<f64>), BenchError> {
    let sys = gen_random_linear_system(nu, seed, cfg.unstable)?;
    let nx = sys.nx();
    let weights = MpcWeights::with_lqr_terminal(
        &sys,
        DMatrix::identity(nx, nx),
        DMatrix::identity(nu, nu),
        cfg.horizon,
    )?;
    let limits = BoxLimits::symmetric(nu, cfg.u_max)?;
    let ctrl = MpcController::new(sys, &weights, limits, settings.clone())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let direction = normal_vector(&mut rng, nx);
    let direction = &direction / vec_inf_norm(&direction);
    let scale = scale_for_activity(
        ctrl.system(),
        ctrl.template().gain(),
        ctrl.limits(),
        &direction,
        cfg.activity_target,
        50,
    );
    Ok((ctrl, direction * scale))
}

fn run_mpc(
    nu: usize,
    seed: u64,
    cfg: &MpcBenchSettings,
    settings: &SolverSettings,
) -> Result<RunRecord, BenchError> {
    let (ctrl, x0) = mpc_instance(nu, seed, cfg, settings)?;
    let opts = ClosedLoopOptions::new(cfg.steps, StepPolicy::Iterations(cfg.iterations_per_step));
    let res = simulate_closed_loop(&ctrl, &x0, &opts)?;
    Ok(RunRecord {
        suite: Suite::RandomMpc,
        n_or_nu: nu,
        seed,
        iterations: res.iterations,
        r_prim: res.r_prim,
        r_dual: res.r_dual,
        converged: res.steps_to_stabilize.is_some() && !res.diverged,
        wall_ms: res.wall_time.as_secs_f64() * 1e3,
        steps_to_stabilize: res.steps_to_stabilize,
        activity_fraction: Some(res.activity_fraction),
    })
}

/// Runs every `(size, seed)` cell in order and writes the CSV to
/// `config.output` when set.
pub fn run_suite(config: &BenchConfig) -> Result<Vec<RunRecord>, BenchError> {
    config.validate()?;
    let mut records = Vec::with_capacity(config.sizes.len() * config.seeds.len());
    for &size in &config.sizes {
        for &seed in &config.seeds {
            records.push(match config.suite {
                Suite::RandomQp => run_qp(size, seed, &config.solver)?,
                Suite::RandomMpc => run_mpc(size, seed, &config.mpc, &config.solver)?,
            });
        }
    }
    if let Some(path) = &config.output {
        let out_err = |e: &dyn std::fmt::Display| BenchError::Output {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let file = std::fs::File::create(path).map_err(|e| out_err(&e))?;
        write_csv(&records, file).map_err(|e| out_err(&e))?;
    }
    Ok(records)
}

/// Header plus one row per record.
pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record([
            "suite",
            "n_or_nu",
            "seed",
            "iterations",
            "r_prim",
            "r_dual",
            "converged",
            "wall_ms",
            "steps_to_stabilize",
            "activity_fraction",
        ])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(records: &[RunRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("writing CSV to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

#[cfg(test)]
mod tests;
