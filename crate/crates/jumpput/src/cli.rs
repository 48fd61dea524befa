//! Command-line front end.
//!
//! Four subcommands share one JSON config file:
//!
//! - `price`: solve and write `value.csv` plus `solution.json`.
//! - `trace`: solve and write the per-sweep convergence table
//!   `trace.csv`, verifying every recorded delta against the geometric
//!   rate bound.
//! - `validate`: solve, then compare against Monte Carlo at a set of
//!   spots, writing `validate.json`.
//! - `sweep`: re-solve over a list of values for one model parameter and
//!   write `sweep.csv`.
//!
//! Exit codes: `0` success, `2` configuration or usage errors, `3` solve
//! failures, `4` a trace row violating its rate bound, `5` a failed
//! validation point.
//!
//! All artifacts are plain text with LF line endings; floats in CSV files
//! carry 18 significant digits so they parse back bit-identically, and
//! `solution.json` re-serializes byte-identically after a round trip
//! through its documented schema.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::gridfn::Grid;
use crate::mc;
use crate::model::{JumpMeasure, MarketModel, VolatilityModel};
use crate::operator::{TOL_FIT, TOL_PDE, TOL_TRUNC_REL};
use crate::solver::{self, Diagnostics, Solution};

#[derive(Parser)]
#[command(name = "jumpput", version, about = "Perpetual American put under jump diffusion")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the model and write the value function and boundary.
    Price(CommonArgs),
    /// Solve and write the per-sweep convergence trace.
    Trace(CommonArgs),
    /// Solve and validate the value function against Monte Carlo.
    Validate(CommonArgs),
    /// Re-solve over a range of one model parameter.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for output artifacts (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Evaluation spot; repeat for several. Overrides config spots.
    #[arg(long = "spot")]
    spots: Vec<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Parameter to sweep: lambda, sigma, strike, or alpha.
    #[arg(long)]
    param: String,
    /// Comma-separated list of parameter values.
    #[arg(long)]
    values: String,
}

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub solver: Option<SolverSpec>,
    #[serde(default)]
    pub mc: Option<McSpec>,
    /// Default evaluation spots for `price`.
    #[serde(default)]
    pub spots: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub vol: VolSpec,
    pub r: f64,
    /// Discount rate; defaults to `r`.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub lambda: f64,
    pub jumps: JumpSpec,
    pub strike: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum VolSpec {
    Constant { sigma: f64 },
    Cev { sigma: f64, gamma: f64 },
    Table { points: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum JumpSpec {
    Discrete {
        atoms: Vec<(f64, f64)>,
    },
    Lognormal {
        meanlog: f64,
        sdlog: f64,
        /// Quadrature order for the jump average; defaults to 32.
        #[serde(default)]
        quad_order: Option<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub x_min: Option<f64>,
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub tol_fit: Option<f64>,
    #[serde(default)]
    pub tol_pde: Option<f64>,
    #[serde(default)]
    pub tol_trunc: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    #[serde(default)]
    pub n_paths: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub t_max: Option<f64>,
    /// Spots at which `validate` compares solver and simulation.
    #[serde(default)]
    pub points: Option<Vec<f64>>,
    /// Extra bias allowance for the time-discretized barrier monitoring.
    #[serde(default)]
    pub allowance: Option<f64>,
}

/// Exact grid parameters echoed into `solution.json`; rebuilding
/// `Grid::new(x_min, x_max, n, strike)` from them reproduces the node set
/// bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEcho {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

/// On-disk solution document. Field order is fixed so that a parse and
/// re-serialize round trip is byte-identical.
#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub model: ModelSpec,
    pub grid: GridEcho,
    pub boundary: f64,
    pub boundaries: Vec<f64>,
    pub n_iter: usize,
    pub sup_norm_deltas: Vec<f64>,
    pub diagnostics: Diagnostics,
    /// Relative path of the value CSV next to this document.
    pub value_csv: String,
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

type CResult<T> = std::result::Result<T, Failure>;

fn config_failure(msg: impl Into<String>) -> Failure {
    Failure { code: 2, message: msg.into() }
}

fn solve_failure(e: Error) -> Failure {
    Failure { code: 3, message: format!("solve failed: {e}") }
}

fn io_failure(what: &str, e: std::io::Error) -> Failure {
    Failure { code: 3, message: format!("cannot write {what}: {e}") }
}

struct Resolved {
    model: MarketModel,
    model_echo: ModelSpec,
    grid: Arc<Grid>,
    grid_echo: GridEcho,
    epsilon: f64,
    tol_fit: f64,
    tol_pde: f64,
    tol_trunc: f64,
    mc_n_paths: usize,
    mc_seed: u64,
    mc_dt: f64,
    mc_t_max: f64,
    mc_points: Vec<f64>,
    mc_allowance: f64,
    spots: Vec<f64>,
}

/// Maps the JSON model block onto a validated `MarketModel`.
pub fn build_model(spec: &ModelSpec) -> crate::Result<MarketModel> {
    let vol = match &spec.vol {
        VolSpec::Constant { sigma } => VolatilityModel::constant(*sigma)?,
        VolSpec::Cev { sigma, gamma } => VolatilityModel::cev(*sigma, *gamma)?,
        VolSpec::Table { points } => VolatilityModel::table(points.clone())?,
    };
    let jumps = match &spec.jumps {
        JumpSpec::Discrete { atoms } => JumpMeasure::discrete(atoms.clone())?,
        JumpSpec::Lognormal { meanlog, sdlog, quad_order } => {
            JumpMeasure::lognormal(*meanlog, *sdlog, quad_order.unwrap_or(32))?
        }
    };
    let alpha = spec.alpha.unwrap_or(spec.r);
    MarketModel::new(vol, spec.r, alpha, spec.lambda, jumps, spec.strike)
}

fn resolve(config: &RunConfig, cli_spots: &[f64]) -> CResult<Resolved> {
    let model = build_model(&config.model).map_err(|e| config_failure(format!("{e}")))?;
    let k = model.strike;

    let mut model_echo = config.model.clone();
    model_echo.alpha = Some(model.alpha);
    if let JumpSpec::Lognormal { quad_order, .. } = &mut model_echo.jumps {
        *quad_order = Some(quad_order.unwrap_or(32));
    }

    let gs = config.grid.clone().unwrap_or(GridSpec { x_min: None, x_max: None, n: None });
    let grid_echo = GridEcho {
        x_min: gs.x_min.unwrap_or(k * 1e-3),
        x_max: gs.x_max.unwrap_or(k * 1e2),
        n: gs.n.unwrap_or(2000),
    };
    let grid = Grid::new(grid_echo.x_min, grid_echo.x_max, grid_echo.n, k)
        .map_err(|e| config_failure(format!("{e}")))?;

    let ss = config.solver.clone().unwrap_or(SolverSpec {
        epsilon: None,
        tol_fit: None,
        tol_pde: None,
        tol_trunc: None,
    });
    let epsilon = ss.epsilon.unwrap_or(1e-6 * k);
    for (name, v) in [
        ("epsilon", Some(epsilon)),
        ("tol_fit", ss.tol_fit),
        ("tol_pde", ss.tol_pde),
        ("tol_trunc", ss.tol_trunc),
    ] {
        if let Some(v) = v {
            if !(v > 0.0) || !v.is_finite() {
                return Err(config_failure(format!("solver.{name} must be positive, got {v}")));
            }
        }
    }

    let ms = config.mc.clone().unwrap_or(McSpec {
        n_paths: None,
        seed: None,
        dt: None,
        t_max: None,
        points: None,
        allowance: None,
    });

    let spots = if !cli_spots.is_empty() {
        cli_spots.to_vec()
    } else {
        config.spots.clone().unwrap_or_else(|| vec![k])
    };
    for &s in &spots {
        if !(s > 0.0) || !s.is_finite() {
            return Err(config_failure(format!("spot {s} must be positive and finite")));
        }
    }

    Ok(Resolved {
        mc_n_paths: ms.n_paths.unwrap_or(100_000),
        mc_seed: ms.seed.unwrap_or(1),
        mc_dt: ms.dt.unwrap_or(1e-3),
        mc_t_max: ms.t_max.unwrap_or(mc::default_t_max(model.alpha)),
        mc_points: ms.points.unwrap_or_else(|| vec![0.5 * k, 0.8 * k, k, 1.5 * k, 3.0 * k]),
        mc_allowance: ms.allowance.unwrap_or(2e-3 * k),
        tol_fit: ss.tol_fit.unwrap_or(TOL_FIT),
        tol_pde: ss.tol_pde.unwrap_or(TOL_PDE),
        tol_trunc: ss.tol_trunc.unwrap_or(TOL_TRUNC_REL),
        model,
        model_echo,
        grid,
        grid_echo,
        epsilon,
        spots,
    })
}

fn load_config(path: &Path) -> CResult<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_failure(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| config_failure(format!("invalid config {}: {e}", path.display())))
}

fn init_threads() -> CResult<()> {
    if let Ok(raw) = std::env::var("JUMPPUT_THREADS") {
        let n: usize = raw
            .parse()
            .map_err(|_| config_failure(format!("JUMPPUT_THREADS = {raw:?} is not a number")))?;
        if n == 0 {
            return Err(config_failure("JUMPPUT_THREADS must be at least 1"));
        }
        #[cfg(feature = "parallel")]
        {
            // A second initialization in the same process is harmless.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

/// 18 significant digits: parses back to the identical f64.
fn full(x: f64) -> String {
    format!("{x:.17e}")
}

fn write_text(dir: &Path, name: &str, text: &str) -> CResult<()> {
    fs::write(dir.join(name), text).map_err(|e| io_failure(name, e))
}

fn value_csv(sol: &Solution) -> String {
    let mut out = String::with_capacity(sol.v.grid().len() * 52 + 16);
    out.push_str("x,value\n");
    for (x, v) in sol.v.grid().nodes().iter().zip(sol.v.values()) {
        out.push_str(&full(*x));
        out.push(',');
        out.push_str(&full(*v));
        out.push('\n');
    }
    out
}

fn solution_json(r: &Resolved, sol: &Solution) -> CResult<Vec<u8>> {
    let doc = SolutionDoc {
        model: r.model_echo.clone(),
        grid: r.grid_echo.clone(),
        boundary: sol.boundary(),
        boundaries: sol.boundaries.clone(),
        n_iter: sol.n_iter,
        sup_norm_deltas: sol.sup_norm_deltas.clone(),
        diagnostics: sol.diagnostics.clone(),
        value_csv: "value.csv".to_string(),
    };
    let mut bytes = serde_json::to_vec_pretty(&doc)
        .map_err(|e| Failure { code: 3, message: format!("cannot serialize solution: {e}") })?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Rows of the convergence trace: `(n, l_n, sup_delta, rate_bound)`.
/// Row `n < n_iter` reports the post-sweep contraction `||v_{n+1} - v_n||`;
/// the final row reports the fixed-point residual. Both are bounded by
/// `(lambda/(lambda+alpha))^n K`.
fn trace_rows(model: &MarketModel, sol: &Solution) -> Vec<(usize, f64, f64, f64)> {
    let rate = if model.lambda > 0.0 { model.lambda / (model.lambda + model.alpha) } else { 0.0 };
    (1..=sol.n_iter)
        .map(|n| {
            let delta = if n < sol.n_iter {
                sol.sup_norm_deltas[n]
            } else {
                sol.diagnostics.fixed_point_residual
            };
            (n, sol.boundaries[n - 1], delta, rate.powi(n as i32) * model.strike)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn prepare(common: &CommonArgs) -> CResult<Resolved> {
    let config = load_config(&common.config)?;
    let resolved = resolve(&config, &common.spots)?;
    fs::create_dir_all(&common.out)
        .map_err(|e| config_failure(format!("cannot create {}: {e}", common.out.display())))?;
    Ok(resolved)
}

fn run_solve(r: &Resolved) -> CResult<Solution> {
    solver::solve(&r.model, &r.grid, r.epsilon).map_err(solve_failure)
}

fn cmd_price(common: &CommonArgs) -> CResult<()> {
    let r = prepare(common)?;
    let sol = run_solve(&r)?;
    write_text(&common.out, "value.csv", &value_csv(&sol))?;
    let json = solution_json(&r, &sol)?;
    fs::write(common.out.join("solution.json"), &json)
        .map_err(|e| io_failure("solution.json", e))?;

    let d = &sol.diagnostics;
    if d.smooth_fit_gap > r.tol_fit {
        eprintln!("warning: smooth-fit gap {} exceeds {}", d.smooth_fit_gap, r.tol_fit);
    }
    if d.max_pde_residual_continuation > r.tol_pde * r.model.rho() * r.model.strike {
        eprintln!(
            "warning: PDE residual {} exceeds {}",
            d.max_pde_residual_continuation,
            r.tol_pde * r.model.rho() * r.model.strike
        );
    }
    if d.truncation_gap > r.tol_trunc * r.model.strike {
        eprintln!("warning: truncation gap {} exceeds {}", d.truncation_gap, r.tol_trunc);
    }

    println!("boundary {}", full(sol.boundary()));
    println!("n_iter {}", sol.n_iter);
    for &s in &r.spots {
        println!("spot {} value {}", full(s), full(sol.v.eval(s)));
    }
    Ok(())
}

fn cmd_trace(common: &CommonArgs) -> CResult<()> {
    let r = prepare(common)?;
    let sol = run_solve(&r)?;
    let rows = trace_rows(&r.model, &sol);
    let mut out = String::from("n,l_n,sup_delta,rate_bound\n");
    for &(n, l, d, b) in &rows {
        out.push_str(&format!("{n},{},{},{}\n", full(l), full(d), full(b)));
    }
    write_text(&common.out, "trace.csv", &out)?;
    for &(n, _, d, b) in &rows {
        if d > b + 1e-12 * r.model.strike {
            return Err(Failure {
                code: 4,
                message: format!("trace row {n}: sup_delta {d} exceeds the rate bound {b}"),
            });
        }
    }
    println!("trace rows {}", rows.len());
    Ok(())
}

fn cmd_validate(common: &CommonArgs) -> CResult<()> {
    let r = prepare(common)?;
    let sol = run_solve(&r)?;
    let points = if common.spots.is_empty() { r.mc_points.clone() } else { common.spots.clone() };
    let report = mc::validate_solution(
        &sol,
        &r.model,
        &points,
        r.mc_n_paths,
        r.mc_seed,
        r.mc_dt,
        r.mc_t_max,
        r.mc_allowance,
    )
    .map_err(|e| config_failure(format!("{e}")))?;
    let mut bytes = serde_json::to_vec_pretty(&report)
        .map_err(|e| Failure { code: 3, message: format!("cannot serialize report: {e}") })?;
    bytes.push(b'\n');
    fs::write(common.out.join("validate.json"), &bytes)
        .map_err(|e| io_failure("validate.json", e))?;
    for p in &report.points {
        println!(
            "spot {} solver {} mc {} se {} {}",
            full(p.x),
            full(p.solver_value),
            full(p.mc_mean),
            full(p.std_error),
            if p.pass { "pass" } else { "FAIL" }
        );
    }
    if !report.all_pass {
        let worst = report
            .points
            .iter()
            .filter(|p| !p.pass)
            .map(|p| p.x)
            .collect::<Vec<_>>();
        return Err(Failure {
            code: 5,
            message: format!("validation failed at spots {worst:?}"),
        });
    }
    Ok(())
}

fn parse_sweep_values(raw: &str) -> CResult<Vec<f64>> {
    let vals: Vec<f64> = raw
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| config_failure(format!("sweep value {s:?} is not a number")))
        })
        .collect::<CResult<Vec<f64>>>()?;
    if vals.is_empty() {
        return Err(config_failure("sweep needs at least one value"));
    }
    Ok(vals)
}

fn cmd_sweep(args: &SweepArgs) -> CResult<()> {
    let config = load_config(&args.common.config)?;
    let base = resolve(&config, &args.common.spots)?;
    let values = parse_sweep_values(&args.values)?;
    let k0 = base.model.strike;
    let spot0 = base.spots[0];

    match args.param.as_str() {
        "lambda" | "sigma" | "strike" | "alpha" => {}
        other => {
            return Err(config_failure(format!(
                "unknown sweep parameter {other:?}; expected lambda, sigma, strike, or alpha"
            )))
        }
    }
    if args.param == "sigma" && !matches!(config.model.vol, VolSpec::Constant { .. }) {
        return Err(config_failure(
            "sigma sweeps require constant volatility; vary the table or CEV spec directly",
        ));
    }

    fs::create_dir_all(&args.common.out)
        .map_err(|e| config_failure(format!("cannot create {}: {e}", args.common.out.display())))?;

    let mut out = String::from("value,boundary,v_at_spot\n");
    for &v in &values {
        let mut spec = config.model.clone();
        let mut grid_echo = base.grid_echo.clone();
        let mut spot = spot0;
        match args.param.as_str() {
            "lambda" => spec.lambda = v,
            "alpha" => spec.alpha = Some(v),
            "sigma" => spec.vol = VolSpec::Constant { sigma: v },
            "strike" => {
                // Keep the sweep moneyness-anchored: scale the grid and the
                // evaluation spot together with the strike.
                spec.strike = v;
                let scale = v / k0;
                grid_echo.x_min *= scale;
                grid_echo.x_max *= scale;
                spot *= scale;
            }
            _ => unreachable!(),
        }
        let model = build_model(&spec).map_err(|e| config_failure(format!("{e}")))?;
        let grid = Grid::new(grid_echo.x_min, grid_echo.x_max, grid_echo.n, model.strike)
            .map_err(|e| config_failure(format!("{e}")))?;
        let sol = solver::solve(&model, &grid, base.epsilon).map_err(solve_failure)?;
        out.push_str(&format!(
            "{},{},{}\n",
            full(v),
            full(sol.boundary()),
            full(sol.v.eval(spot))
        ));
    }
    write_text(&args.common.out, "sweep.csv", &out)?;
    println!("sweep rows {}", values.len());
    Ok(())
}

/// Entry point; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Price(c) => cmd_price(c),
        Command::Trace(c) => cmd_trace(c),
        Command::Validate(c) => cmd_validate(c),
        Command::Sweep(a) => cmd_sweep(a),
    });
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
