//! The single-sweep pricing operator.
//!
//! One sweep maps a candidate value `f` to the solution `g` of the exterior
//! problem
//!
//! ```text
//! (A - rho) g + lambda Sf = 0   on (l, infinity),    g(l) = h(l),  g -> 0,
//! ```
//!
//! with `rho = alpha + lambda`, realized explicitly through the Green kernel
//! of the killed diffusion: with `w(y) = 2 / (y^2 sigma(y)^2 W(y))` and
//! `psi_l = psi - (psi(l)/phi(l)) phi` (the solution vanishing at `l`),
//!
//! ```text
//! g(x) = psi_l(x) int_x^inf w phi lambda Sf dy
//!      + phi(x)  int_l^x w psi_l lambda Sf dy
//!      + phi(x) h(l) / phi(l).
//! ```
//!
//! The exercise boundary `l` is pinned by smooth pasting, `g'(l+) = -1`.
//! Differentiating the formula, that condition is equivalent to the root
//! equation `G(l) = 0` with
//!
//! ```text
//! G(l) = int_l^inf w(y) phi(y) lambda Sf(y) dy
//!      + [phi(l) + phi'(l) (K - l)] / W(l),         l < K.
//! ```
//!
//! The closed second term is the entire contribution of the payoff source
//! `F = (A - rho) h`: integrating `w phi F` by parts against the payoff kink
//! at `K` leaves exactly `[phi(l) + phi'(l) h(l)]/W(l)`, which equals
//! `int_l w phi F dy + phi(K)/W(K)` - the naive integral alone misses the
//! kink mass `(1/2) sigma(K)^2 K^2 delta_K` and has no root at all when
//! `lambda = 0`. Using the closed form also removes all quadrature error
//! from the payoff part of `G`.
//!
//! Everything here is invariant under rescaling `psi` or `phi` by positive
//! constants: each term is a ratio in which the scales cancel through `W`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fundsol::FundamentalPair;
use crate::gridfn::{apply_S, shape_report, Grid, GridFunction, UpperTail};
use crate::model::MarketModel;

/// Shape tolerance relative to the strike (value units).
pub const TOL_SHAPE_REL: f64 = 1e-7;
/// Bisection interval width for the boundary root, relative to the strike.
pub const TOL_ROOT_REL: f64 = 1e-10;
/// Smooth-fit slope tolerance.
pub const TOL_FIT: f64 = 1e-3;
/// PDE residual tolerance (relative to `rho K`).
pub const TOL_PDE: f64 = 1e-4;
/// Domain-truncation tolerance relative to the strike.
pub const TOL_TRUNC_REL: f64 = 1e-6;

/// Precomputed node data for the Green-kernel quadratures.
pub struct OperatorContext {
    model: MarketModel,
    pair: Arc<FundamentalPair>,
    grid: Arc<Grid>,
    /// `psi`, `phi` at nodes.
    psi: Vec<f64>,
    phi: Vec<f64>,
    /// Green weight `w(y) = 2 / (y^2 sigma(y)^2 W(y))` at nodes.
    w_green: Vec<f64>,
}

/// Per-iterate source cache: `lambda Sf` and its cumulative quadratures,
/// computed once per `f` and shared by the boundary search and the sweep.
pub struct JumpSource {
    /// `lambda * Sf` sampled at nodes.
    lam_sf: Vec<f64>,
    /// Interpolant for off-node evaluations; `None` when `lambda = 0`.
    sf: Option<GridFunction>,
    /// `int_{x_j}^{x_max} w phi lambda Sf dy` (suffix trapezoid).
    suffix_phi: Vec<f64>,
    /// `int_{x_0}^{x_j} w psi lambda Sf dy` (prefix trapezoid).
    prefix_psi: Vec<f64>,
    /// `int_{x_0}^{x_j} w phi lambda Sf dy`.
    prefix_phi: Vec<f64>,
}

impl OperatorContext {
    pub fn new(model: MarketModel, pair: FundamentalPair, grid: Arc<Grid>) -> Result<Self> {
        let rho = model.rho();
        if (pair.rho() - rho).abs() > 1e-12 * rho.max(1.0) {
            return Err(Error::InvalidModel(format!(
                "fundamental pair kill rate {} does not match alpha + lambda = {rho}",
                pair.rho()
            )));
        }
        let k = model.strike;
        let anchor = grid.nodes()[grid.strike_index()];
        if (anchor - k).abs() > 1e-12 * k {
            return Err(Error::InvalidGrid(format!(
                "grid is anchored at {anchor}, not at the strike {k}"
            )));
        }
        let nodes = grid.nodes();
        let psi: Vec<f64> = nodes.iter().map(|&x| pair.psi(x)).collect();
        let phi: Vec<f64> = nodes.iter().map(|&x| pair.phi(x)).collect();
        let w_green: Vec<f64> = nodes
            .iter()
            .map(|&x| {
                let s = model.vol.eval(x);
                2.0 / (x * x * s * s * pair.wronskian(x))
            })
            .collect();
        for (j, &w) in w_green.iter().enumerate() {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::FundamentalPair(format!(
                    "Green weight w({}) = {w} is not positive and finite",
                    nodes[j]
                )));
            }
        }
        Ok(OperatorContext { model, pair: Arc::new(pair), grid, psi, phi, w_green })
    }

    pub fn model(&self) -> &MarketModel {
        &self.model
    }

    pub fn pair(&self) -> &Arc<FundamentalPair> {
        &self.pair
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Green weight `w(y)` at an arbitrary point.
    fn w_at(&self, y: f64) -> f64 {
        let s = self.model.vol.eval(y);
        2.0 / (y * y * s * s * self.pair.wronskian(y))
    }

    /// Payoff source `F(x) = (A - rho) h(x)`: affine below the strike, zero
    /// above, left-limit value at the strike itself (the point carries no
    /// quadrature mass; the kink contribution is handled in closed form).
    pub fn f_payoff(&self, x: f64) -> f64 {
        let k = self.model.strike;
        if x > k {
            0.0
        } else {
            -self.model.mu() * x - self.model.rho() * (k - x)
        }
    }

    /// Builds the per-iterate source cache (`lambda Sf` plus its cumulative
    /// quadratures). With `lambda = 0` all stored integrals are zero and the
    /// jump average is skipped entirely.
    pub fn jump_source(&self, f: &GridFunction) -> JumpSource {
        let n = self.grid.len();
        let nodes = self.grid.nodes();
        let lam = self.model.lambda;
        let (lam_sf, sf) = if lam > 0.0 {
            let sf = apply_S(f, &self.model.jumps);
            let lam_sf: Vec<f64> = sf.values().iter().map(|&v| lam * v).collect();
            (lam_sf, Some(sf))
        } else {
            (vec![0.0; n], None)
        };

        let q_phi: Vec<f64> = (0..n).map(|j| self.w_green[j] * self.phi[j] * lam_sf[j]).collect();
        let q_psi: Vec<f64> = (0..n).map(|j| self.w_green[j] * self.psi[j] * lam_sf[j]).collect();

        let mut suffix_phi = vec![0.0; n];
        for j in (0..n - 1).rev() {
            let dx = nodes[j + 1] - nodes[j];
            suffix_phi[j] = suffix_phi[j + 1] + 0.5 * dx * (q_phi[j] + q_phi[j + 1]);
        }
        let mut prefix_psi = vec![0.0; n];
        let mut prefix_phi = vec![0.0; n];
        for j in 1..n {
            let dx = nodes[j] - nodes[j - 1];
            prefix_psi[j] = prefix_psi[j - 1] + 0.5 * dx * (q_psi[j - 1] + q_psi[j]);
            prefix_phi[j] = prefix_phi[j - 1] + 0.5 * dx * (q_phi[j - 1] + q_phi[j]);
        }
        JumpSource { lam_sf, sf, suffix_phi, prefix_psi, prefix_phi }
    }

    /// `lambda * Sf` at an arbitrary point.
    fn lam_sf_at(&self, src: &JumpSource, y: f64) -> f64 {
        match &src.sf {
            Some(sf) => self.model.lambda * sf.eval(y),
            None => 0.0,
        }
    }

    /// `int_l^{x_max} w phi lambda Sf dy` with the partial cell at `l`
    /// resolved by a trapezoid against the interpolated integrand.
    fn a_integral_at(&self, src: &JumpSource, l: f64) -> f64 {
        if src.sf.is_none() {
            return 0.0;
        }
        let nodes = self.grid.nodes();
        let c = self.grid.cell_of(l);
        let ql = self.w_at(l) * self.pair.phi(l) * self.lam_sf_at(src, l);
        let j = c + 1;
        let qj = self.w_green[j] * self.phi[j] * src.lam_sf[j];
        src.suffix_phi[j] + 0.5 * (nodes[j] - l) * (ql + qj)
    }

    /// Prefix integrals `int_{x_0}^{l}` of `w psi lambda Sf` and
    /// `w phi lambda Sf`.
    fn prefix_at(&self, src: &JumpSource, l: f64) -> (f64, f64) {
        if src.sf.is_none() {
            return (0.0, 0.0);
        }
        let nodes = self.grid.nodes();
        let c = self.grid.cell_of(l);
        let w_l = self.w_at(l);
        let lam_sf_l = self.lam_sf_at(src, l);
        let q_psi_l = w_l * self.pair.psi(l) * lam_sf_l;
        let q_phi_l = w_l * self.pair.phi(l) * lam_sf_l;
        let q_psi_c = self.w_green[c] * self.psi[c] * src.lam_sf[c];
        let q_phi_c = self.w_green[c] * self.phi[c] * src.lam_sf[c];
        let dx = l - nodes[c];
        (
            src.prefix_psi[c] + 0.5 * dx * (q_psi_c + q_psi_l),
            src.prefix_phi[c] + 0.5 * dx * (q_phi_c + q_phi_l),
        )
    }

    /// Boundary objective `G(l)`; its unique root in `(0, K)` is the
    /// exercise boundary for the source built from `f`.
    pub fn boundary_objective(&self, f: &GridFunction, l: f64) -> Result<f64> {
        let src = self.jump_source(f);
        self.boundary_objective_with(&src, l)
    }

    /// `G(l)` against a prebuilt source cache.
    pub fn boundary_objective_with(&self, src: &JumpSource, l: f64) -> Result<f64> {
        let k = self.model.strike;
        if !(l >= 10.0 * self.grid.x_min()) || !(l < self.grid.x_max()) {
            return Err(Error::OutOfRange(format!(
                "boundary candidate l = {l} outside (10 x_min, x_max) = ({}, {})",
                10.0 * self.grid.x_min(),
                self.grid.x_max()
            )));
        }
        let jump_part = self.a_integral_at(src, l);
        if l > k {
            return Ok(jump_part);
        }
        let phi = self.pair.phi(l);
        let phi_d = self.pair.phi_prime(l);
        let w = self.pair.wronskian(l);
        Ok(jump_part + (phi + phi_d * (k - l)) / w)
    }

    fn check_shape_precondition(&self, f: &GridFunction) -> Result<()> {
        let k = self.model.strike;
        let tol = TOL_SHAPE_REL * k;
        let rep = shape_report(f, k, tol);
        if !rep.convex {
            return Err(Error::Shape("input is not convex at the node level".into()));
        }
        if !rep.decreasing {
            return Err(Error::Shape("input is not nonincreasing at the node level".into()));
        }
        if rep.min_right_slope < -1.0 - TOL_SHAPE_REL {
            return Err(Error::Shape(format!(
                "input right derivative {} falls below -1",
                rep.min_right_slope
            )));
        }
        let bad = f
            .values()
            .iter()
            .any(|&v| v < -tol || v > k + tol);
        if bad {
            return Err(Error::Shape(format!("input leaves the value band [0, K = {k}]")));
        }
        Ok(())
    }

    /// Locates the exercise boundary `l[f]`: the unique root of `G` in
    /// `(10 x_min, K)`, by a sign-change scan over grid cells followed by
    /// bisection down to an interval of `1e-10 K`.
    pub fn find_boundary(&self, f: &GridFunction) -> Result<f64> {
        let src = self.jump_source(f);
        self.find_boundary_with(&src, f)
    }

    /// Boundary search against a prebuilt source cache.
    pub fn find_boundary_with(&self, src: &JumpSource, f: &GridFunction) -> Result<f64> {
        self.check_shape_precondition(f)?;
        let k = self.model.strike;
        let lo = 10.0 * self.grid.x_min();
        if !(lo < k) {
            return Err(Error::InvalidGrid(format!(
                "grid floor too high: 10 x_min = {lo} reaches the strike {k}"
            )));
        }

        // Scan points: the floor, every node strictly inside (lo, K), and K.
        let mut points: Vec<f64> = vec![lo];
        for &x in self.grid.nodes() {
            if x > lo && x < k {
                points.push(x);
            }
        }
        points.push(k);

        let g_at = |l: f64| self.boundary_objective_with(src, l);
        let mut brackets: Vec<(f64, f64)> = Vec::new();
        let mut prev_x = points[0];
        let mut prev_g = g_at(prev_x)?;
        if prev_g == 0.0 {
            return Ok(prev_x);
        }
        for &x in &points[1..] {
            let g = g_at(x)?;
            if g == 0.0 {
                brackets.push((x, x));
            } else if prev_g.signum() != g.signum() {
                brackets.push((prev_x, x));
            }
            prev_x = x;
            prev_g = g;
        }

        match brackets.len() {
            0 => Err(Error::NoBoundary(format!(
                "the boundary objective has no sign change in ({lo:.6}, {k}); the existence \
                 condition for a smooth-pasting point fails for this model/input"
            ))),
            1 => {
                let (mut a, mut b) = brackets[0];
                if a == b {
                    return Ok(a);
                }
                let mut ga = g_at(a)?;
                let width_target = TOL_ROOT_REL * k;
                while b - a > width_target {
                    let m = 0.5 * (a + b);
                    let gm = g_at(m)?;
                    if gm == 0.0 {
                        return Ok(m);
                    }
                    if gm.signum() == ga.signum() {
                        a = m;
                        ga = gm;
                    } else {
                        b = m;
                    }
                }
                Ok(0.5 * (a + b))
            }
            _ => Err(Error::MultipleBrackets(brackets)),
        }
    }

    /// One Green-kernel sweep at a fixed boundary `l`: returns `g` equal to
    /// the payoff on `(0, l]` and to the explicit three-term formula above
    /// `l`. Above the grid the result decays like `phi`.
    #[allow(non_snake_case)]
    pub fn apply_R_l(&self, f: &GridFunction, l: f64) -> Result<GridFunction> {
        let src = self.jump_source(f);
        self.apply_R_l_with(&src, l)
    }

    #[allow(non_snake_case)]
    fn apply_R_l_with(&self, src: &JumpSource, l: f64) -> Result<GridFunction> {
        let k = self.model.strike;
        if !(l > self.grid.x_min()) || !(l < k) {
            return Err(Error::OutOfRange(format!(
                "boundary l = {l} is not inside (x_min, K) = ({}, {k})",
                self.grid.x_min()
            )));
        }
        let nodes = self.grid.nodes();
        let n = nodes.len();
        let ratio = self.pair.psi(l) / self.pair.phi(l);
        let h_l_over_phi = (k - l) / self.pair.phi(l);
        let (p_psi_l, p_phi_l) = self.prefix_at(src, l);

        let mut values = vec![0.0; n];
        for j in 0..n {
            let x = nodes[j];
            if x <= l {
                values[j] = k - x;
            } else {
                let psi_bar = self.psi[j] - ratio * self.phi[j];
                let b = (src.prefix_psi[j] - p_psi_l) - ratio * (src.prefix_phi[j] - p_phi_l);
                values[j] = psi_bar * src.suffix_phi[j] + self.phi[j] * (b + h_l_over_phi);
            }
        }
        GridFunction::new(
            self.grid.clone(),
            values,
            k,
            UpperTail::Decay(self.pair.clone() as Arc<dyn crate::gridfn::TailDecay>),
        )
    }

    /// Full sweep: find the boundary for `f`, then apply the kernel there.
    #[allow(non_snake_case)]
    pub fn apply_R(&self, f: &GridFunction) -> Result<(GridFunction, f64)> {
        let src = self.jump_source(f);
        let l = self.find_boundary_with(&src, f)?;
        let g = self.apply_R_l_with(&src, l)?;
        Ok((g, l))
    }

    /// Two-barrier sweep: solves the same source problem on `(l, rho_barrier)`
    /// with `u(l) = h(l)` and `u(rho_barrier) = h(rho_barrier)`. Used as a
    /// diagnostic: as the upper barrier grows the result converges to the
    /// one-barrier sweep, certifying the domain truncation.
    ///
    /// Outside `[l, rho_barrier]` the returned function equals the payoff.
    #[allow(non_snake_case)]
    pub fn two_barrier_R(
        &self,
        f: &GridFunction,
        l: f64,
        rho_barrier: f64,
    ) -> Result<GridFunction> {
        let k = self.model.strike;
        if !(l < rho_barrier) || !(rho_barrier <= self.grid.x_max() * (1.0 + 1e-12)) {
            return Err(Error::OutOfRange(format!(
                "barriers must satisfy l < rho_barrier <= x_max; got ({l}, {rho_barrier})"
            )));
        }
        if !(l > self.grid.x_min()) || !(l < k) {
            return Err(Error::OutOfRange(format!(
                "lower barrier l = {l} is not inside (x_min, K) = ({}, {k})",
                self.grid.x_min()
            )));
        }
        let src = self.jump_source(f);
        let nodes = self.grid.nodes();
        let n = nodes.len();

        let a = self.pair.psi(l) / self.pair.phi(l);
        let b = self.pair.phi(rho_barrier) / self.pair.psi(rho_barrier);
        // Wronskian of the pair (psi - a phi, phi - b psi) is (1 - ab) W; the
        // kernel weights divide by it.
        let denom = 1.0 - a * b;
        if !(denom > 0.0) {
            return Err(Error::OutOfRange(format!(
                "degenerate barrier pair: 1 - ab = {denom} must be positive"
            )));
        }

        let (p_psi_l, p_phi_l) = self.prefix_at(&src, l);
        let (p_psi_r, p_phi_r) = self.prefix_at(&src, rho_barrier);
        let h_l = k - l;
        let h_r = (k - rho_barrier).max(0.0);
        let phibar_l = self.pair.phi(l) - b * self.pair.psi(l);
        let psibar_r = self.pair.psi(rho_barrier) - a * self.pair.phi(rho_barrier);

        let mut values = vec![0.0; n];
        for j in 0..n {
            let x = nodes[j];
            if x <= l || x >= rho_barrier {
                values[j] = (k - x).max(0.0);
            } else {
                let psi_bar = self.psi[j] - a * self.phi[j];
                let phi_bar = self.phi[j] - b * self.psi[j];
                // Suffix over (x, rho_barrier) and prefix over (l, x), both
                // decomposed through the cached plain psi/phi integrals.
                let up = (p_phi_r - src.prefix_phi[j]) - b * (p_psi_r - src.prefix_psi[j]);
                let down = (src.prefix_psi[j] - p_psi_l) - a * (src.prefix_phi[j] - p_phi_l);
                values[j] = (psi_bar * up + phi_bar * down) / denom
                    + h_l * phi_bar / phibar_l
                    + h_r * psi_bar / psibar_r;
            }
        }
        GridFunction::new(self.grid.clone(), values, k, UpperTail::Flat)
    }
}

/// Discrete smooth-fit slope of `g` at the boundary `l`: the derivative at
/// `l` of the parabola through `(l, K - l)` and the first two nodes above
/// `l`. Quadratic extrapolation keeps the estimator within `O(cell^2)` of
/// the true one-sided derivative.
pub fn discrete_fit_slope(g: &GridFunction, l: f64) -> f64 {
    let nodes = g.grid().nodes();
    let mut a = g.grid().cell_of(l) + 1;
    if nodes[a] <= l {
        a += 1;
    }
    let b = a + 1;
    let (xa, xb) = (nodes[a], nodes[b]);
    let (ya, yb) = (g.values()[a], g.values()[b]);
    let y0 = g.strike() - l;
    y0 * (2.0 * l - xa - xb) / ((l - xa) * (l - xb))
        + ya * (l - xb) / ((xa - l) * (xa - xb))
        + yb * (l - xa) / ((xb - l) * (xb - xa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundsol::{gbm_exponents, gbm_pair};
    use crate::model::{JumpMeasure, VolatilityModel};

    const K: f64 = 1.0;

    fn gbm_model(lambda: f64, jumps: JumpMeasure) -> MarketModel {
        MarketModel::new(
            VolatilityModel::constant(0.2).unwrap(),
            0.05,
            0.05,
            lambda,
            jumps,
            K,
        )
        .unwrap()
    }

    fn gbm_ctx(lambda: f64, jumps: JumpMeasure) -> OperatorContext {
        let model = gbm_model(lambda, jumps);
        let grid = Grid::new(1e-3, 1e2, 2000, K).unwrap();
        let pair = gbm_pair(0.2, model.mu(), model.rho()).unwrap();
        OperatorContext::new(model, pair, grid).unwrap()
    }

    #[test]
    fn f_payoff_examples() {
        let ctx = gbm_ctx(0.0, JumpMeasure::identity());
        assert_eq!(ctx.f_payoff(2.0 * K), 0.0);
        assert!((ctx.f_payoff(0.5) + 0.05).abs() < 1e-15, "F(0.5) = {}", ctx.f_payoff(0.5));
        assert!((ctx.f_payoff(1e-12) + 0.05 * K).abs() < 1e-13, "F(0+) -> -(alpha+lambda) K");
        assert!((ctx.f_payoff(K) + 0.05 * K).abs() < 1e-15, "left-limit convention at K");
    }

    #[test]
    fn boundary_objective_closed_form_root() {
        // With no jumps, G(l) = 1 - (5/7)/l for this model, so G(5/7) = 0.
        let ctx = gbm_ctx(0.0, JumpMeasure::identity());
        let h = GridFunction::payoff(ctx.grid().clone(), K);
        let l_star = 5.0 / 7.0;
        let g = ctx.boundary_objective(&h, l_star).unwrap();
        assert!(g.abs() < 1e-12, "G(l*) = {g}");
        assert!(ctx.boundary_objective(&h, 0.6).unwrap() < 0.0);
        assert!(ctx.boundary_objective(&h, 0.9).unwrap() > 0.0);
        // Above the strike and with no jump source the objective vanishes.
        assert_eq!(ctx.boundary_objective(&h, 1.5).unwrap(), 0.0);
        // Out-of-range requests are rejected.
        assert!(ctx.boundary_objective(&h, 1e-3).is_err());
    }

    #[test]
    fn boundary_objective_increases_toward_strike_for_constant_input() {
        // Deep downward jump measure with lam * xi < r, f = K: the source
        // lam * Sf + F = lam * K - rho * (K - y) - mu * y stays negative on
        // (0, K), so G grows monotonically as l approaches K.
        let nu = JumpMeasure::discrete(vec![(0.4, 1.0)]).unwrap();
        let ctx = gbm_ctx(0.1, nu);
        let g = ctx.grid().clone();
        let f = GridFunction::new(g.clone(), vec![K; g.len()], K, UpperTail::Flat).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for l in [0.3, 0.5, 0.7, 0.9, 0.999] {
            let val = ctx.boundary_objective(&f, l).unwrap();
            assert!(val > prev, "G({l}) = {val} did not increase past {prev}");
            prev = val;
        }
    }

    #[test]
    fn find_boundary_recovers_perpetual_put_threshold() {
        let ctx = gbm_ctx(0.0, JumpMeasure::identity());
        let h = GridFunction::payoff(ctx.grid().clone(), K);
        let l = ctx.find_boundary(&h).unwrap();
        assert!(
            (l - 5.0 / 7.0).abs() < 1e-5,
            "boundary {l} vs closed form {}",
            5.0 / 7.0
        );
    }

    #[test]
    fn find_boundary_rejects_malformed_inputs() {
        let ctx = gbm_ctx(0.0, JumpMeasure::identity());
        let g = ctx.grid().clone();
        // Increasing function violates the decreasing precondition.
        let vals: Vec<f64> = g.nodes().iter().map(|&x| (x / 200.0).min(1.0)).collect();
        let f = GridFunction::new(g.clone(), vals, K, UpperTail::Flat).unwrap();
        assert!(matches!(ctx.find_boundary(&f), Err(Error::Shape(_))));
        // Values above K violate the band.
        let f = GridFunction::new(g.clone(), vec![1.5 * K; g.len()], K, UpperTail::Flat).unwrap();
        assert!(matches!(ctx.find_boundary(&f), Err(Error::Shape(_))));
    }

    #[test]
    fn jump_boundary_matches_hand_integrated_objective() {
        // nu = delta_1 and f = h make lambda Sh + F = -alpha (K - y) - mu y,
        // and every integral in G is a power integral; solve G = 0 by hand
        // and compare against the production root finder.
        let lambda = 0.1;
        let ctx = gbm_ctx(lambda, JumpMeasure::identity());
        let (bm, bp) = gbm_exponents(0.2, ctx.model().mu(), ctx.model().rho());
        let spread = bp - bm;
        // G(l) = -alpha * c1/bp * (l^{-bp} - 1) + 1/spread with
        // c1 = 2/(sigma^2 spread); root: l = (1 + bp sigma^2 / (2 alpha))^{-1/bp}.
        let c1 = 2.0 / (0.04 * spread);
        let root = (1.0 + (1.0 / spread) / (0.05 * c1 / bp)).powf(-1.0 / bp);
        let h = GridFunction::payoff(ctx.grid().clone(), K);
        let l = ctx.find_boundary(&h).unwrap();
        assert!(
            (l - root).abs() < 2e-4,
            "boundary {l} vs hand-integrated root {root}"
        );
        // Reference magnitude: raising the kill rate pulls the first-sweep
        // boundary up toward the strike relative to the no-jump problem.
        assert!((0.73..0.76).contains(&l), "l[h] = {l}");
    }

    #[test]
    fn apply_r_matches_perpetual_put_value() {
        let ctx = gbm_ctx(0.0, JumpMeasure::identity());
        let h = GridFunction::payoff(ctx.grid().clone(), K);
        let (v, l) = ctx.apply_R(&h).unwrap();
        let l_star = 5.0 / 7.0;
        let (bm, _) = gbm_exponents(0.2, 0.05, 0.05);
        let oracle = |x: f64| {
            if x <= l_star {
                K - x
            } else {
                (K - l_star) * (x / l_star).powf(bm)
            }
        };
        assert!((v.eval(K) - oracle(K)).abs() < 1e-9, "value at the strike");
        assert!((oracle(K) - 0.12320).abs() < 5e-6, "published reference magnitude");
        // Nodewise dominance over the payoff.
        for (j, &x) in ctx.grid().nodes().iter().enumerate() {
            assert!(v.values()[j] >= (K - x).max(0.0) - 1e-12, "dominance fails at {x}");
        }
        // Continuity and smooth fit at the boundary.
        assert!((v.eval(l) - (K - l)).abs() < TOL_FIT);
        let slope = discrete_fit_slope(&v, l);
        assert!((slope + 1.0).abs() < TOL_FIT, "fit slope {slope}");
        // Sup-norm agreement with the closed form on a wide band.
        let mut x = 0.25;
        while x < 5.0 {
            let rel = (v.eval(x) - oracle(x)).abs() / oracle(x);
            assert!(rel < 2e-4, "relative error {rel} at x = {x}");
            x *= 1.01;
        }
    }

    #[test]
    fn resolvent_of_constant_source_is_bounded_by_rate_ratio() {
        // nu = delta_1, f = c: the two integral terms add at most
        // lambda c / (alpha + lambda) on top of the boundary term.
        let lambda = 0.1;
        let alpha = 0.05;
        let c = 0.6 * K;
        let ctx = gbm_ctx(lambda, JumpMeasure::identity());
        let g = ctx.grid().clone();
        let f = GridFunction::new(g.clone(), vec![c; g.len()], K, UpperTail::Flat).unwrap();
        let l = 0.7;
        let v = ctx.apply_R_l(&f, l).unwrap();
        let base = |x: f64| ctx.pair().phi(x) * (K - l) / ctx.pair().phi(l);
        for x in [0.8, 1.0, 1.6, 3.0] {
            let gap = v.eval(x) - base(x);
            assert!(gap >= -1e-10, "resolvent term must be nonnegative at {x}");
            assert!(
                gap <= lambda * c / (alpha + lambda) + 1e-6,
                "gap {gap} exceeds the resolvent bound at {x}"
            );
        }
    }

    #[test]
    fn apply_r_is_monotone_in_its_input() {
        let nu = JumpMeasure::lognormal(-0.08, 0.4, 32).unwrap();
        let ctx = gbm_ctx(0.1, nu);
        let g = ctx.grid().clone();
        let h = GridFunction::payoff(g.clone(), K);
        let top = GridFunction::new(g.clone(), vec![K; g.len()], K, UpperTail::Flat).unwrap();
        let (rh, _) = ctx.apply_R(&h).unwrap();
        let (rt, _) = ctx.apply_R(&top).unwrap();
        for j in 0..g.len() {
            assert!(
                rh.values()[j] <= rt.values()[j] + 1e-9,
                "monotonicity fails at node {j}"
            );
        }
    }

    #[test]
    fn rescaling_the_pair_leaves_outputs_unchanged() {
        let nu = JumpMeasure::lognormal(-0.08, 0.4, 32).unwrap();
        let model = gbm_model(0.1, nu);
        let grid = Grid::new(1e-3, 1e2, 2000, K).unwrap();
        let pair = gbm_pair(0.2, model.mu(), model.rho()).unwrap();
        let scaled = pair.rescaled(3.0, 0.25);
        let ctx1 = OperatorContext::new(model.clone(), pair, grid.clone()).unwrap();
        let ctx2 = OperatorContext::new(model, scaled, grid.clone()).unwrap();
        let h = GridFunction::payoff(grid.clone(), K);
        let l1 = ctx1.find_boundary(&h).unwrap();
        let l2 = ctx2.find_boundary(&h).unwrap();
        assert!((l1 - l2).abs() <= 1e-10 * K, "boundaries {l1} vs {l2}");
        let v1 = ctx1.apply_R_l(&h, l1).unwrap();
        let v2 = ctx2.apply_R_l(&h, l1).unwrap();
        assert!(v1.sup_diff(&v2) <= 1e-10, "sweep outputs differ by {}", v1.sup_diff(&v2));
    }

    #[test]
    fn two_barrier_source_free_form() {
        let ctx = gbm_ctx(0.0, JumpMeasure::identity());
        let g = ctx.grid().clone();
        let zero = GridFunction::new(g.clone(), vec![0.0; g.len()], K, UpperTail::Flat).unwrap();
        let l = 0.7;
        let rho_b = 3.0;
        let u = ctx.two_barrier_R(&zero, l, rho_b).unwrap();
        let pair = ctx.pair();
        let a = pair.psi(l) / pair.phi(l);
        let b = pair.phi(rho_b) / pair.psi(rho_b);
        let phibar = |x: f64| pair.phi(x) - b * pair.psi(x);
        // h(rho_b) = 0 above the strike, so only the lower boundary term
        // survives: u = h(l) phibar(x)/phibar(l). Compare at exact nodes so
        // no interpolation error enters.
        let k_idx = g.strike_index();
        for j in [k_idx - 30, k_idx, k_idx + 100, k_idx + 180] {
            let x = g.nodes()[j];
            assert!(x > l && x < rho_b, "node {x} escaped the barrier window");
            let want = (K - l) * phibar(x) / phibar(l);
            let got = u.values()[j];
            assert!((got - want).abs() < 1e-9, "at node {x}: {got} vs {want}");
        }
        let _ = a;
        // Barrier ordering violations are rejected.
        assert!(ctx.two_barrier_R(&zero, 0.9, 0.8).is_err());
    }

    #[test]
    fn two_barrier_converges_monotonically_to_one_barrier() {
        let nu = JumpMeasure::lognormal(-0.08, 0.4, 32).unwrap();
        let ctx = gbm_ctx(0.1, nu);
        let h = GridFunction::payoff(ctx.grid().clone(), K);
        let l = ctx.find_boundary(&h).unwrap();
        let v = ctx.apply_R_l(&h, l).unwrap();
        let x_probe = 1.4;
        let mut prev = f64::NEG_INFINITY;
        for rho_b in [2.0, 5.0, 10.0] {
            let u = ctx.two_barrier_R(&h, l, rho_b).unwrap();
            let val = u.eval(x_probe);
            assert!(val > prev, "no monotone approach at rho_b = {rho_b}");
            assert!(val <= v.eval(x_probe) + 1e-12, "two-barrier value must lie below");
            prev = val;
        }
        // At the full truncation width, the gap on a central band is tiny.
        let u = ctx.two_barrier_R(&h, l, ctx.grid().x_max()).unwrap();
        let mut worst: f64 = 0.0;
        let mut x = l;
        while x < ctx.grid().x_max() / 2.0 {
            worst = worst.max((u.eval(x) - v.eval(x)).abs());
            x *= 1.01;
        }
        assert!(worst <= TOL_TRUNC_REL * K, "truncation gap {worst}");
    }
}
