//! Fixed-point iteration of the pricing sweep.
//!
//! Starting from the payoff `v_0 = h`, the driver applies the operator
//! sweep repeatedly, `v_{n+1} = R v_n`, recording the exercise boundary of
//! every iterate. The sweep is a sup-norm contraction with factor
//! `lambda / (alpha + lambda)`, which yields both a stopping rule and an
//! a priori iteration bound:
//!
//! ```text
//! ||v_{n+1} - v_n|| <= (lambda / (alpha + lambda))^n ||v_1 - v_0||
//!                   <= (lambda / (alpha + lambda))^n K.
//! ```
//!
//! With no jumps the sweep does not depend on its input at all, so the
//! first iterate is already the exact fixed point and the driver
//! short-circuits after one application.
//!
//! After convergence a battery of independent diagnostics is attached:
//! the residual of one extra sweep, the smooth-fit slope gap at the
//! boundary, finite-difference PDE residuals on the continuation region,
//! variational-inequality violations on the stopping region, and the gap
//! to a two-barrier solve that certifies the domain truncation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fundsol::{boundary_behavior_check, gbm_pair, numeric_pair, FundamentalPair};
use crate::gridfn::{apply_S, shape_report, Grid, GridFunction};
use crate::model::MarketModel;
use crate::operator::{discrete_fit_slope, OperatorContext, TOL_SHAPE_REL};

/// Smallest `n` with `(lambda/(lambda+alpha))^n K <= epsilon`, clamped to at
/// least one sweep. With `lambda = 0` the rate is zero and one sweep is
/// always enough.
pub fn a_priori_iterations(lambda: f64, alpha: f64, epsilon: f64, strike: f64) -> usize {
    if lambda <= 0.0 {
        return 1;
    }
    let rate = lambda / (lambda + alpha);
    let mut bound = strike;
    let mut n = 0usize;
    while bound > epsilon && n < 100_000 {
        bound *= rate;
        n += 1;
    }
    n.max(1)
}

/// Convergence and consistency measures attached to a finished solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Sup-norm of one extra sweep applied to the final iterate.
    pub fixed_point_residual: f64,
    /// `|v'(l+) + 1|` from quadratic extrapolation at the boundary.
    pub smooth_fit_gap: f64,
    /// Max finite-difference residual of the pricing equation on the
    /// continuation region.
    pub max_pde_residual_continuation: f64,
    /// Max violation of the variational inequality on the stopping region.
    pub max_vi_violation_stopping: f64,
    /// Sup gap to a two-barrier solve with the upper barrier at the grid
    /// edge, measured on the inner half of the domain.
    pub truncation_gap: f64,
    /// Final iterate is convex, nonincreasing, and inside the value band.
    pub shape_ok: bool,
    /// Classified behavior of the fundamental pair at the origin.
    pub zero_boundary: String,
    /// Whether `phi` has decayed to negligible size at the grid edge.
    pub infinity_natural: bool,
}

/// Converged value function plus the full iteration history.
pub struct Solution {
    /// Final iterate (the value function on the grid).
    pub v: GridFunction,
    /// Exercise boundary of every iterate, in order.
    pub boundaries: Vec<f64>,
    /// Number of sweeps performed.
    pub n_iter: usize,
    /// `||v_{i+1} - v_i||` for `i = 0 .. n_iter - 1` (`v_0` is the payoff).
    pub sup_norm_deltas: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl Solution {
    /// Exercise boundary of the final iterate.
    pub fn boundary(&self) -> f64 {
        *self.boundaries.last().expect("a solution always has at least one sweep")
    }
}

/// Builds the fundamental pair for the model (closed form for constant
/// volatility, shooting otherwise) and wraps it in an operator context.
pub fn build_context(model: &MarketModel, grid: &Arc<Grid>) -> Result<OperatorContext> {
    let pair: FundamentalPair = match &model.vol {
        crate::model::VolatilityModel::Constant { sigma } => {
            gbm_pair(*sigma, model.mu(), model.rho())?
        }
        other => numeric_pair(other, model.mu(), model.rho(), grid)?,
    };
    OperatorContext::new(model.clone(), pair, grid.clone())
}

/// Runs the fixed-point iteration to sup-norm tolerance `epsilon`.
pub fn solve(model: &MarketModel, grid: &Arc<Grid>, epsilon: f64) -> Result<Solution> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Config(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    let ctx = build_context(model, grid)?;
    let cap = a_priori_iterations(model.lambda, model.alpha, epsilon, model.strike);

    let mut v = GridFunction::payoff(grid.clone(), model.strike);
    let mut boundaries = Vec::new();
    let mut deltas = Vec::new();
    loop {
        let n = boundaries.len() + 1;
        let (next, l) = ctx
            .apply_R(&v)
            .map_err(|e| Error::Solver { iteration: n, source: Box::new(e) })?;
        deltas.push(next.sup_diff(&v));
        boundaries.push(l);
        v = next;
        if model.lambda == 0.0 {
            // The sweep ignores its input: v_1 is the exact fixed point.
            break;
        }
        let m = deltas.len();
        let small = deltas[m - 1] <= epsilon;
        let twice = m >= 2 && small && deltas[m - 2] <= epsilon;
        if twice || m >= cap {
            break;
        }
    }

    let l = *boundaries.last().unwrap();
    let (resweep, _) = ctx
        .apply_R(&v)
        .map_err(|e| Error::Solver { iteration: boundaries.len() + 1, source: Box::new(e) })?;
    let fixed_point_residual = resweep.sup_diff(&v);

    let qvi = qvi_report(model, &v, l);
    let fit_gap = (discrete_fit_slope(&v, l) + 1.0).abs();
    let two = ctx.two_barrier_R(&v, l, grid.x_max())?;
    let mut truncation_gap: f64 = 0.0;
    for (j, &x) in grid.nodes().iter().enumerate() {
        if x > l && x <= grid.x_max() / 2.0 {
            truncation_gap = truncation_gap.max((two.values()[j] - v.values()[j]).abs());
        }
    }
    let shape = shape_report(&v, model.strike, TOL_SHAPE_REL * model.strike);
    let behavior = boundary_behavior_check(ctx.pair(), grid);

    Ok(Solution {
        n_iter: boundaries.len(),
        boundaries,
        sup_norm_deltas: deltas,
        diagnostics: Diagnostics {
            fixed_point_residual,
            smooth_fit_gap: fit_gap,
            max_pde_residual_continuation: qvi.max_pde_residual_continuation,
            max_vi_violation_stopping: qvi.max_vi_violation_stopping,
            truncation_gap,
            shape_ok: shape.all_ok(),
            zero_boundary: format!("{:?}", behavior.zero_mode),
            infinity_natural: behavior.infinity_natural,
        },
        v,
    })
}

/// Independent finite-difference verification of the variational
/// characterization, built from the grid values alone (no Green kernel).
pub struct QviReport {
    /// Max `|(1/2) sigma^2 x^2 v'' + mu x v' - rho v + lambda Sv|` over
    /// continuation nodes in `(l, 50 K]`, excluding stencils touching the
    /// boundary kink.
    pub max_pde_residual_continuation: f64,
    /// Max `(F + lambda Sv)^+` over stopping nodes in `(10 x_min, l)`,
    /// where `v = h` and the inequality `(A - rho) h + lambda Sv <= 0`
    /// must hold.
    pub max_vi_violation_stopping: f64,
    /// Max `(F + lambda Sv)^+` over all nodes below the strike; the sign
    /// condition that guarantees a unique smooth-pasting boundary.
    pub max_source_sign_violation: f64,
    pub continuation_nodes: usize,
    pub stopping_nodes: usize,
}

/// Checks `v` against the variational system by central differences in
/// log-price coordinates.
pub fn qvi_report(model: &MarketModel, v: &GridFunction, boundary: f64) -> QviReport {
    let grid = v.grid();
    let nodes = grid.nodes();
    let n = nodes.len();
    let d = grid.log_step();
    let rho = model.rho();
    let k = model.strike;
    let lam_sv: Vec<f64> = if model.lambda > 0.0 {
        apply_S(v, &model.jumps).values().iter().map(|&s| model.lambda * s).collect()
    } else {
        vec![0.0; n]
    };
    let f_src = |x: f64| if x > k { 0.0 } else { -model.mu() * x - rho * (k - x) };

    let mut max_pde: f64 = 0.0;
    let mut cont = 0usize;
    for j in 1..n - 1 {
        // Keep the three-point stencil strictly above the boundary kink
        // and inside a band where truncation effects are negligible.
        if nodes[j - 1] <= boundary || nodes[j] > 50.0 * k {
            continue;
        }
        let vals = v.values();
        let vd = (vals[j + 1] - vals[j - 1]) / (2.0 * d);
        let vdd = (vals[j + 1] - 2.0 * vals[j] + vals[j - 1]) / (d * d);
        let s = model.vol.eval(nodes[j]);
        let gen = 0.5 * s * s * (vdd - vd) + model.mu() * vd;
        let res = gen - rho * vals[j] + lam_sv[j];
        max_pde = max_pde.max(res.abs());
        cont += 1;
    }

    let mut max_vi: f64 = 0.0;
    let mut stop = 0usize;
    let mut max_sign: f64 = 0.0;
    for j in 0..n {
        let x = nodes[j];
        if x < k {
            max_sign = max_sign.max(f_src(x) + lam_sv[j]);
        }
        if x > 10.0 * grid.x_min() && x < boundary {
            max_vi = max_vi.max(f_src(x) + lam_sv[j]);
            stop += 1;
        }
    }

    QviReport {
        max_pde_residual_continuation: max_pde,
        max_vi_violation_stopping: max_vi.max(0.0),
        max_source_sign_violation: max_sign.max(0.0),
        continuation_nodes: cont,
        stopping_nodes: stop,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundsol::gbm_exponents;
    use crate::model::{JumpMeasure, VolatilityModel};

    const K: f64 = 1.0;

    fn model(lambda: f64, jumps: JumpMeasure) -> MarketModel {
        MarketModel::new(VolatilityModel::constant(0.2).unwrap(), 0.05, 0.05, lambda, jumps, K)
            .unwrap()
    }

    fn default_grid() -> Arc<Grid> {
        Grid::new(1e-3, 1e2, 2000, K).unwrap()
    }

    #[test]
    fn a_priori_iteration_examples() {
        assert_eq!(a_priori_iterations(0.1, 0.05, 1e-3, 1.0), 18);
        assert_eq!(a_priori_iterations(0.1, 0.05, 1e-6, 1.0), 35);
        assert_eq!(a_priori_iterations(0.0, 0.05, 1e-9, 1.0), 1);
        assert_eq!(a_priori_iterations(0.05, 0.05, 1.0, 1.0), 1);
    }

    #[test]
    fn no_jump_solve_is_one_sweep_and_matches_closed_form() {
        let m = model(0.0, JumpMeasure::identity());
        let sol = solve(&m, &default_grid(), 1e-6).unwrap();
        assert_eq!(sol.n_iter, 1);
        assert_eq!(sol.boundaries.len(), 1);
        assert_eq!(sol.sup_norm_deltas.len(), 1);
        assert!((sol.boundary() - 5.0 / 7.0).abs() < 1e-5, "boundary {}", sol.boundary());
        assert_eq!(
            sol.diagnostics.fixed_point_residual, 0.0,
            "a second sweep of an input-independent operator must reproduce itself exactly"
        );
        let (bm, _) = gbm_exponents(0.2, 0.05, 0.05);
        let l = 5.0 / 7.0;
        for x in [0.5, 0.8, 1.0, 1.5, 2.0] {
            let oracle = if x <= l { K - x } else { (K - l) * (x / l).powf(bm) };
            let rel = (sol.v.eval(x) - oracle).abs() / oracle;
            assert!(rel < 2e-4, "relative error {rel} at {x}");
        }
        assert!(sol.diagnostics.smooth_fit_gap < 1e-3);
        assert!(sol.diagnostics.shape_ok, "value function must be convex and decreasing");
        assert!(sol.diagnostics.truncation_gap < 1e-6 * K);
    }

    #[test]
    fn jump_solve_contracts_at_the_documented_rate() {
        let nu = JumpMeasure::lognormal(-0.08, 0.4, 32).unwrap();
        let m = model(0.1, nu);
        let eps = 1e-6 * K;
        let sol = solve(&m, &default_grid(), eps).unwrap();
        let rate = m.lambda / (m.lambda + m.alpha);
        assert!(sol.n_iter <= a_priori_iterations(m.lambda, m.alpha, eps, K));
        for (i, &d) in sol.sup_norm_deltas.iter().enumerate() {
            let bound = rate.powi(i as i32) * K;
            assert!(d <= bound + 1e-12, "delta {d} at sweep {} beats the bound {bound}", i + 1);
        }
        assert!(sol.diagnostics.fixed_point_residual <= eps);
        assert_eq!(sol.boundaries.len(), sol.n_iter);
        assert!((0.5..0.9).contains(&sol.boundary()), "boundary {}", sol.boundary());
    }

    #[test]
    fn unit_jump_model_reduces_to_the_no_jump_problem() {
        // nu = delta_1 relabels jump times without moving the path, so the
        // value function and boundary must match the lambda = 0 model.
        let m = model(0.1, JumpMeasure::identity());
        let sol = solve(&m, &default_grid(), 1e-8).unwrap();
        assert!(
            (sol.boundary() - 5.0 / 7.0).abs() < 1e-4,
            "boundary {} vs 5/7",
            sol.boundary()
        );
        let (bm, _) = gbm_exponents(0.2, 0.05, 0.05);
        let l = 5.0 / 7.0;
        let oracle = (K - l) * (1.0 / l).powf(bm);
        assert!(
            (sol.v.eval(K) - oracle).abs() < 5e-4,
            "value at strike {} vs {oracle}",
            sol.v.eval(K)
        );
        // Later boundaries must not drift away from the limit.
        let first = sol.boundaries[0];
        let last = sol.boundary();
        assert!(first > last, "first-sweep boundary starts above the fixed-point one");
    }

    #[test]
    fn qvi_report_certifies_the_no_jump_solution() {
        let m = model(0.0, JumpMeasure::identity());
        let sol = solve(&m, &default_grid(), 1e-6).unwrap();
        let rep = qvi_report(&m, &sol.v, sol.boundary());
        assert!(
            rep.max_pde_residual_continuation <= 1e-4 * m.rho() * K,
            "PDE residual {}",
            rep.max_pde_residual_continuation
        );
        assert_eq!(rep.max_vi_violation_stopping, 0.0, "payoff source is negative below K");
        assert_eq!(rep.max_source_sign_violation, 0.0);
        assert!(rep.continuation_nodes > 500);
        assert!(rep.stopping_nodes > 500);
    }

    #[test]
    fn solve_rejects_bad_epsilon() {
        let m = model(0.0, JumpMeasure::identity());
        assert!(solve(&m, &default_grid(), 0.0).is_err());
        assert!(solve(&m, &default_grid(), f64::NAN).is_err());
    }
}
