use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clampqp::bench::{
    csv_string, mpc_instance, run_suite, simulate_closed_loop, BenchConfig, ClosedLoopOptions,
    MpcBenchSettings, MpcController, RunRecord, StepPolicy,
};
use clampqp::mpc::{BoxLimits, LinearSystem, MpcWeights};
use clampqp::solver::{
    solve_problem, SolverSettings, DEFAULT_CHECK_INTERVAL, DEFAULT_EPS, DEFAULT_MAX_ITERS,
};
use clampqp::{parse_problem, SolveStatus};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

const EXIT_SOLVED: u8 = 0;
const EXIT_INPUT_ERROR: u8 = 1;
const EXIT_MAX_ITERS: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "clampqp",
    version,
    about = "Fused-iteration ADMM solver for dense convex QPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a QP file and print the result as `key: value` lines.
    Solve {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps_prim: f64,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps_dual: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
        max_iters: usize,
    },
    /// Random dense QP suite.
    BenchQp {
        #[arg(long, value_delimiter = ',', default_value = "10,22,50,110,250,500")]
        sizes: Vec<usize>,
        /// Number of seeds per size, starting at 0.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Primal and dual tolerance.
        #[arg(long, default_value_t = DEFAULT_EPS)]
        tol: f64,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop MPC suite on random stable systems (10 seeds per size).
    BenchMpc {
        #[arg(long, value_delimiter = ',', default_value = "4,10,20")]
        nu: Vec<usize>,
        #[arg(long, default_value_t = 40)]
        horizon: usize,
        #[arg(long, default_value_t = 1)]
        iters_per_step: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one closed-loop MPC simulation and print its trajectory.
    MpcDemo {
        #[arg(long, value_enum, default_value_t = Preset::DoubleIntegrator)]
        preset: Preset,
        #[arg(long, default_value_t = 40)]
        horizon: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Preset {
    /// x = [position, velocity], h = 0.1, |u| ≤ 0.5, x0 = [1, 0].
    DoubleIntegrator,
    /// Random stable system with nu = 2 (seed 0).
    RandomStable,
    /// Random open-loop unstable system with nu = 2 (seed 0).
    RandomUnstable,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_INPUT_ERROR
            } else {
                EXIT_SOLVED
            });
        }
    };
    let outcome = match cli.command {
        Command::Solve {
            file,
            eps_prim,
            eps_dual,
            max_iters,
        } => cmd_solve(&file, eps_prim, eps_dual, max_iters),
        Command::BenchQp {
            sizes,
            seeds,
            tol,
            out,
        } => {
            let config = BenchConfig {
                sizes,
                seeds: (0..seeds).collect(),
                solver: SolverSettings {
                    eps_prim: tol,
                    eps_dual: tol,
                    ..SolverSettings::default()
                },
                output: out,
                ..BenchConfig::random_qp(false)
            };
            cmd_bench(&config)
        }
        Command::BenchMpc {
            nu,
            horizon,
            iters_per_step,
            steps,
            out,
        } => {
            let base = BenchConfig::random_mpc(false);
            let config = BenchConfig {
                sizes: nu,
                mpc: MpcBenchSettings {
                    horizon,
                    iterations_per_step: iters_per_step,
                    steps,
                    ..base.mpc.clone()
                },
                output: out,
                ..base
            };
            cmd_bench(&config)
        }
        Command::MpcDemo { preset, horizon } => cmd_mpc_demo(preset, horizon),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_INPUT_ERROR)
        }
    }
}

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_solve(path: &Path, eps_prim: f64, eps_dual: f64, max_iters: usize) -> Result<u8, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let p = parse_problem(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let settings = SolverSettings {
        eps_prim,
        eps_dual,
        max_iters,
        check_interval: DEFAULT_CHECK_INTERVAL.min(max_iters.max(1)),
        ..SolverSettings::default()
    };
    let report = solve_problem(&p, &settings).map_err(|e| e.to_string())?;
    let s = report.solution;
    let status = match s.status {
        SolveStatus::Solved => "solved",
        SolveStatus::MaxIters => "max-iters",
        SolveStatus::Invalid => "invalid",
    };
    println!("status: {status}");
    println!("iterations: {}", s.iterations);
    println!("r_prim: {:e}", s.r_prim);
    println!("r_dual: {:e}", s.r_dual);
    println!("objective: {}", p.objective(&s.y));
    println!("y: {}", join(s.y.iter().copied()));
    println!("z: {}", join(s.z.iter().copied()));
    println!("lambda: {}", join(s.lambda.iter().copied()));
    Ok(match s.status {
        SolveStatus::Solved => EXIT_SOLVED,
        SolveStatus::MaxIters => EXIT_MAX_ITERS,
        SolveStatus::Invalid => EXIT_INPUT_ERROR,
    })
}

fn summarize(label: &str, size: usize, rows: &[&RunRecord]) -> String {
    let ok = rows.iter().filter(|r| r.converged).count();
    let mut iters: Vec<usize> = rows.iter().map(|r| r.iterations).collect();
    iters.sort_unstable();
    let median = iters.get(iters.len() / 2).copied().unwrap_or(0);
    let wall: f64 = rows.iter().map(|r| r.wall_ms).sum::<f64>() / rows.len().max(1) as f64;
    let mut line = format!(
        "{label}={size}: {ok}/{} converged, median {median} iterations, mean {wall:.1} ms",
        rows.len()
    );
    let activity: Vec<f64> = rows.iter().filter_map(|r| r.activity_fraction).collect();
    if !activity.is_empty() {
        let mean = activity.iter().sum::<f64>() / activity.len() as f64;
        line.push_str(&format!(", mean activity {:.0}%", 100.0 * mean));
    }
    line
}

fn cmd_bench(config: &BenchConfig) -> Result<u8, String> {
    let records = run_suite(config).map_err(|e| e.to_string())?;
    let label = match config.suite {
        clampqp::bench::Suite::RandomQp => "n",
        clampqp::bench::Suite::RandomMpc => "nu",
    };
    for &size in &config.sizes {
        let rows: Vec<&RunRecord> = records.iter().filter(|r| r.n_or_nu == size).collect();
        eprintln!("{}", summarize(label, size, &rows));
    }
    if config.output.is_none() {
        print!("{}", csv_string(&records));
    }
    Ok(EXIT_SOLVED)
}

fn cmd_mpc_demo(preset: Preset, horizon: usize) -> Result<u8, String> {
    let settings = SolverSettings::default();
    let (ctrl, x0): (MpcController, DVector<f64>) = match preset {
        Preset::DoubleIntegrator => {
            let sys = LinearSystem::new(dmatrix![1.0, 0.1; 0.0, 1.0], dmatrix![0.005; 0.1])
                .map_err(|e| e.to_string())?;
            let weights = MpcWeights::with_lqr_terminal(
                &sys,
                DMatrix::identity(2, 2),
                dmatrix![1.0],
                horizon,
            )
            .map_err(|e| e.to_string())?;
            let limits = BoxLimits::symmetric(1, 0.5).map_err(|e| e.to_string())?;
            let ctrl =
                MpcController::new(sys, &weights, limits, settings).map_err(|e| e.to_string())?;
            (ctrl, dvector![1.0, 0.0])
        }
        Preset::RandomStable | Preset::RandomUnstable => {
            let cfg = MpcBenchSettings {
                horizon,
                unstable: matches!(preset, Preset::RandomUnstable),
                ..MpcBenchSettings::default()
            };
            mpc_instance(2, 0, &cfg, &settings).map_err(|e| e.to_string())?
        }
    };
    let opts = ClosedLoopOptions::new(500, StepPolicy::Iterations(1));
    let res = simulate_closed_loop(&ctrl, &x0, &opts).map_err(|e| e.to_string())?;
    println!("step  |x|_inf  u");
    for (t, x) in res.states.iter().enumerate() {
        let u = res
            .controls
            .get(t)
            .map(|u| join(u.iter().copied()))
            .unwrap_or_default();
        println!("{t:4}  {:.3e}  {u}", x.amax());
    }
    match res.steps_to_stabilize {
        Some(t) => println!("steps_to_stabilize: {t}"),
        None => println!("steps_to_stabilize: none"),
    }
    println!("activity_fraction: {}", res.activity_fraction);
    println!("diverged: {}", res.diverged);
    Ok(if res.steps_to_stabilize.is_some() {
        EXIT_SOLVED
    } else {
        EXIT_MAX_ITERS
    })
}
