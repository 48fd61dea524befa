//! Fundamental solutions of the killed generator.
//!
//! The pricing sweeps solve exterior problems for the operator
//!
//! ```text
//! (A u)(x) = 1/2 sigma(x)^2 x^2 u''(x) + mu x u'(x),   killed at rate rho,
//! ```
//!
//! whose solution space is spanned by an increasing solution `psi` and a
//! decreasing solution `phi` of `A u = rho u`, unique up to positive scalars.
//! For constant volatility these are the powers `x^{beta+}` and `x^{beta-}`
//! with `beta+-` the roots of `1/2 sigma^2 b(b-1) + mu b - rho = 0`. For
//! general volatility the pair is built by shooting in the log-price
//! coordinate `t = ln x`, where the ODE reads
//!
//! ```text
//! u_tt = (2 rho / sigma^2) u + (1 - 2 mu / sigma^2) u_t
//! ```
//!
//! and is free of the `x^2` coefficient growth. `psi` is integrated upward
//! from `x_min` and `phi` downward from `x_max` (each in its growing
//! direction, so the shooting is stable), seeded with the frozen-coefficient
//! power exponent at the starting end; seed error decays away from the ends.
//!
//! The Wronskian `W = psi' phi - psi phi'` is positive and, divided by the
//! scale density `exp(-int 2 mu / (sigma(y)^2 y) dy)`, constant in `x`; the
//! constancy of that ratio is the module's cheapest global correctness check.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gridfn::{Grid, TailDecay};
use crate::model::VolatilityModel;
use crate::numerics::{gauss_legendre_8, hermite_derivative, hermite_value, integrate_adaptive};

/// Relative tolerance of the shooting integrator.
const RTOL_BUILD: f64 = 1e-12;
/// Magnitude window outside which the running state is renormalized.
const RENORM_LIMIT: f64 = 1e120;

/// Roots `(beta-, beta+)` of `1/2 sigma^2 b(b-1) + mu b - rho = 0`.
pub fn gbm_exponents(sigma: f64, mu: f64, rho: f64) -> (f64, f64) {
    let a = 0.5 * sigma * sigma;
    let b = mu - a;
    let disc = (b * b + 4.0 * a * rho).sqrt();
    ((-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a))
}

#[derive(Debug, Clone)]
enum PairKind {
    ClosedForm {
        beta_plus: f64,
        beta_minus: f64,
        /// Positive scale factors; the pair is only defined up to these.
        c_psi: f64,
        c_phi: f64,
    },
    Numeric(NumericData),
}

/// Node states `(u, du/dt)` in the log coordinate, normalized to `u = 1` at
/// the strike node.
#[derive(Debug, Clone)]
struct NumericData {
    grid: Arc<Grid>,
    psi: Vec<(f64, f64)>,
    phi: Vec<(f64, f64)>,
}

/// Evaluators for `psi`, `phi`, their derivatives and the Wronskian.
#[derive(Debug, Clone)]
pub struct FundamentalPair {
    rho: f64,
    mu: f64,
    vol: VolatilityModel,
    kind: PairKind,
}

/// Closed-form pair for constant volatility: `psi = x^{beta+}`,
/// `phi = x^{beta-}`.
pub fn gbm_pair(sigma: f64, mu: f64, rho: f64) -> Result<FundamentalPair> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::FundamentalPair(format!("kill rate rho = {rho} must be positive")));
    }
    if !(sigma > 0.0) {
        return Err(Error::FundamentalPair(format!("volatility {sigma} must be positive")));
    }
    let (beta_minus, beta_plus) = gbm_exponents(sigma, mu, rho);
    Ok(FundamentalPair {
        rho,
        mu,
        vol: VolatilityModel::Constant { sigma },
        kind: PairKind::ClosedForm { beta_plus, beta_minus, c_psi: 1.0, c_phi: 1.0 },
    })
}

/// Numerically constructed pair for a general volatility model.
///
/// Both solutions are normalized to value 1 at the strike node. Off-node
/// evaluation reconstructs value/derivative with a cubic Hermite patch in the
/// log coordinate; beyond the grid ends the local power behavior at the end
/// node is frozen and extended.
pub fn numeric_pair(
    vol: &VolatilityModel,
    mu: f64,
    rho: f64,
    grid: &Arc<Grid>,
) -> Result<FundamentalPair> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::FundamentalPair(format!("kill rate rho = {rho} must be positive")));
    }
    let n = grid.len();
    let nodes = grid.nodes();
    let rhs = |t: f64, y: [f64; 2]| {
        let s2 = {
            let s = vol.eval(t.exp());
            s * s
        };
        [y[1], (2.0 * rho / s2) * y[0] + (1.0 - 2.0 * mu / s2) * y[1]]
    };

    // March one solution across the grid in the given node order, seeded with
    // the frozen-coefficient exponent at the first listed node. Returns the
    // normalized (u, du/dt) states in grid order.
    let shoot = |order: Box<dyn Iterator<Item = usize>>, label: &str| -> Result<Vec<(f64, f64)>> {
        let idx: Vec<usize> = order.collect();
        let x0 = nodes[idx[0]];
        let (bm, bp) = gbm_exponents(vol.eval(x0), mu, rho);
        let seed = if idx[0] == 0 { bp } else { bm };
        let mut state = [1.0f64, seed];
        let mut scale = 0.0f64;
        let mut raw = vec![(0.0f64, 0.0f64, 0.0f64); n];
        raw[idx[0]] = (state[0], state[1], scale);
        for w in idx.windows(2) {
            let (ta, tb) = (nodes[w[0]].ln(), nodes[w[1]].ln());
            state = integrate_adaptive(&rhs, ta, state, tb, RTOL_BUILD);
            if !(state[0] > 0.0) || !state[0].is_finite() || !state[1].is_finite() {
                return Err(Error::FundamentalPair(format!(
                    "{label} became non-positive near x = {}",
                    nodes[w[1]]
                )));
            }
            let m = state[0].abs().max(state[1].abs());
            if m > RENORM_LIMIT || m < 1.0 / RENORM_LIMIT {
                state[0] /= m;
                state[1] /= m;
                scale += m.ln();
            }
            raw[w[1]] = (state[0], state[1], scale);
        }
        // Normalize to value 1 at the strike node.
        let (uk, _, sk) = raw[grid.strike_index()];
        let log_c = uk.ln() + sk;
        let out: Vec<(f64, f64)> = raw
            .iter()
            .map(|&(u, ud, s)| {
                let v = (u.ln() + s - log_c).exp();
                let d = if ud == 0.0 {
                    0.0
                } else {
                    ud.signum() * (ud.abs().ln() + s - log_c).exp()
                };
                (v, d)
            })
            .collect();
        for (j, &(v, _)) in out.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::FundamentalPair(format!(
                    "{label} not strictly positive at node {j} (x = {})",
                    nodes[j]
                )));
            }
        }
        Ok(out)
    };

    let psi = shoot(Box::new(0..n), "psi")?;
    let phi = shoot(Box::new((0..n).rev()), "phi")?;

    for j in 1..n {
        if !(psi[j].0 > psi[j - 1].0) {
            return Err(Error::FundamentalPair(format!(
                "psi fails to increase strictly at node {j}"
            )));
        }
        if !(phi[j].0 < phi[j - 1].0) {
            return Err(Error::FundamentalPair(format!(
                "phi fails to decrease strictly at node {j}"
            )));
        }
    }

    Ok(FundamentalPair {
        rho,
        mu,
        vol: vol.clone(),
        kind: PairKind::Numeric(NumericData { grid: grid.clone(), psi, phi }),
    })
}

impl NumericData {
    /// Value and log-derivative of a stored solution at any positive price.
    fn eval(&self, states: &[(f64, f64)], x: f64) -> (f64, f64) {
        let nodes = self.grid.nodes();
        let last = nodes.len() - 1;
        if x <= nodes[0] {
            let (u, ud) = states[0];
            let b = ud / u;
            let v = u * (x / nodes[0]).powf(b);
            return (v, b * v);
        }
        if x >= nodes[last] {
            let (u, ud) = states[last];
            let b = ud / u;
            let v = u * (x / nodes[last]).powf(b);
            return (v, b * v);
        }
        let j = self.grid.cell_of(x);
        let h = nodes[j + 1].ln() - nodes[j].ln();
        let s = (x / nodes[j]).ln();
        let (u0, d0) = states[j];
        let (u1, d1) = states[j + 1];
        (
            hermite_value(h, u0, d0, u1, d1, s),
            hermite_derivative(h, u0, d0, u1, d1, s),
        )
    }
}

impl FundamentalPair {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn vol(&self) -> &VolatilityModel {
        &self.vol
    }

    /// Increasing solution.
    pub fn psi(&self, x: f64) -> f64 {
        match &self.kind {
            PairKind::ClosedForm { beta_plus, c_psi, .. } => c_psi * x.powf(*beta_plus),
            PairKind::Numeric(d) => d.eval(&d.psi, x).0,
        }
    }

    /// Derivative of the increasing solution.
    pub fn psi_prime(&self, x: f64) -> f64 {
        match &self.kind {
            PairKind::ClosedForm { beta_plus, c_psi, .. } => {
                c_psi * beta_plus * x.powf(beta_plus - 1.0)
            }
            PairKind::Numeric(d) => d.eval(&d.psi, x).1 / x,
        }
    }

    /// Decreasing solution.
    pub fn phi(&self, x: f64) -> f64 {
        match &self.kind {
            PairKind::ClosedForm { beta_minus, c_phi, .. } => c_phi * x.powf(*beta_minus),
            PairKind::Numeric(d) => d.eval(&d.phi, x).0,
        }
    }

    /// Derivative of the decreasing solution.
    pub fn phi_prime(&self, x: f64) -> f64 {
        match &self.kind {
            PairKind::ClosedForm { beta_minus, c_phi, .. } => {
                c_phi * beta_minus * x.powf(beta_minus - 1.0)
            }
            PairKind::Numeric(d) => d.eval(&d.phi, x).1 / x,
        }
    }

    /// Wronskian `W(x) = psi'(x) phi(x) - psi(x) phi'(x)`.
    pub fn wronskian(&self, x: f64) -> f64 {
        match &self.kind {
            PairKind::ClosedForm { beta_plus, beta_minus, c_psi, c_phi } => {
                c_psi * c_phi * (beta_plus - beta_minus) * x.powf(beta_plus + beta_minus - 1.0)
            }
            PairKind::Numeric(d) => {
                let (p, pd) = d.eval(&d.psi, x);
                let (q, qd) = d.eval(&d.phi, x);
                // In log-coordinate states: psi' phi - psi phi' = (pd q - p qd)/x.
                (pd * q - p * qd) / x
            }
        }
    }

    /// The same pair with `psi` scaled by `c1 > 0` and `phi` by `c2 > 0`.
    /// Downstream formulas must be invariant under this.
    pub fn rescaled(&self, c1: f64, c2: f64) -> FundamentalPair {
        assert!(c1 > 0.0 && c2 > 0.0);
        let kind = match &self.kind {
            PairKind::ClosedForm { beta_plus, beta_minus, c_psi, c_phi } => PairKind::ClosedForm {
                beta_plus: *beta_plus,
                beta_minus: *beta_minus,
                c_psi: c1 * c_psi,
                c_phi: c2 * c_phi,
            },
            PairKind::Numeric(d) => PairKind::Numeric(NumericData {
                grid: d.grid.clone(),
                psi: d.psi.iter().map(|&(u, ud)| (c1 * u, c1 * ud)).collect(),
                phi: d.phi.iter().map(|&(u, ud)| (c2 * u, c2 * ud)).collect(),
            }),
        };
        FundamentalPair { rho: self.rho, mu: self.mu, vol: self.vol.clone(), kind }
    }

    /// CSV dump `x,psi,psi_prime,phi,phi_prime,W` over grid nodes.
    pub fn to_csv_string(&self, grid: &Grid) -> String {
        let mut out = String::from("x,psi,psi_prime,phi,phi_prime,W\n");
        for &x in grid.nodes() {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                x,
                self.psi(x),
                self.psi_prime(x),
                self.phi(x),
                self.phi_prime(x),
                self.wronskian(x)
            ));
        }
        out
    }
}

impl TailDecay for FundamentalPair {
    fn decay_ratio(&self, x: f64, y: f64) -> f64 {
        self.phi(x) / self.phi(y)
    }
}

/// Log of the scale-density ratio: `int_a^b 2 mu / (sigma(y)^2 y) dy`.
///
/// Closed forms for constant and power volatilities; composite Gauss-Legendre
/// in the log coordinate for tabulated ones.
pub fn scale_log_integral(vol: &VolatilityModel, mu: f64, a: f64, b: f64) -> f64 {
    match vol {
        VolatilityModel::Constant { sigma } => 2.0 * mu / (sigma * sigma) * (b / a).ln(),
        VolatilityModel::Cev { sigma, gamma } => {
            // sigma(y) = sigma y^{-gamma}: integrand 2 mu y^{2 gamma - 1} / sigma^2.
            mu / (sigma * sigma * gamma) * (b.powf(2.0 * gamma) - a.powf(2.0 * gamma))
        }
        VolatilityModel::Table { .. } => {
            // In t = ln y the integrand is 2 mu / sigma(e^t)^2, smooth between
            // table breakpoints; one 8-point panel per half-decade is plenty.
            let (ta, tb) = (a.ln(), b.ln());
            let panels = (((tb - ta).abs() / 0.5).ceil() as usize).max(1);
            let step = (tb - ta) / panels as f64;
            let mut acc = 0.0;
            for k in 0..panels {
                let lo = ta + k as f64 * step;
                acc += gauss_legendre_8(lo, lo + step, |t| {
                    let s = vol.eval(t.exp());
                    2.0 * mu / (s * s)
                });
            }
            acc
        }
    }
}

/// Scaled Wronskian profile `W(x_j) * exp(int_{K}^{x_j} 2 mu/(sigma^2 y) dy)`
/// over the grid; constant for an exact pair.
pub fn scaled_wronskian_profile(pair: &FundamentalPair, grid: &Grid) -> Vec<f64> {
    let anchor = grid.nodes()[grid.strike_index()];
    grid.nodes()
        .iter()
        .map(|&x| pair.wronskian(x) * scale_log_integral(&pair.vol, pair.mu, anchor, x).exp())
        .collect()
}

/// Max relative spread of the scaled Wronskian across the grid.
pub fn scaled_wronskian_spread(pair: &FundamentalPair, grid: &Grid) -> f64 {
    let prof = scaled_wronskian_profile(pair, grid);
    let lo = prof.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = prof.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / hi.abs().max(1e-300)
}

/// Worst per-cell defect of the stored pair against a tight re-integration
/// of the ODE, scaled by `|u| + |du/dt|`.
///
/// Each grid cell is re-integrated from the stored state at its left node
/// (right node for `phi`) with a tolerance well below the build tolerance;
/// the mismatch at the far node measures how well the stored values satisfy
/// the equation.
pub fn ode_defect(pair: &FundamentalPair, grid: &Grid) -> f64 {
    let rho = pair.rho;
    let mu = pair.mu;
    let vol = pair.vol.clone();
    let rhs = |t: f64, y: [f64; 2]| {
        let s = vol.eval(t.exp());
        let s2 = s * s;
        [y[1], (2.0 * rho / s2) * y[0] + (1.0 - 2.0 * mu / s2) * y[1]]
    };
    let nodes = grid.nodes();
    let state = |x: f64, phi: bool| -> [f64; 2] {
        if phi {
            [pair.phi(x), x * pair.phi_prime(x)]
        } else {
            [pair.psi(x), x * pair.psi_prime(x)]
        }
    };
    let mut worst = 0.0f64;
    for j in 0..nodes.len() - 1 {
        let (ta, tb) = (nodes[j].ln(), nodes[j + 1].ln());
        // psi marches up, phi marches down (their stable directions).
        for (phi, from, to) in [(false, ta, tb), (true, tb, ta)] {
            let x_from = from.exp();
            let x_to = to.exp();
            let got = integrate_adaptive(&rhs, from, state(x_from, phi), to, 1e-13);
            let want = state(x_to, phi);
            let scale = want[0].abs() + want[1].abs();
            let defect = ((got[0] - want[0]).abs()).max((got[1] - want[1]).abs()) / scale;
            worst = worst.max(defect);
        }
    }
    worst
}

/// How the pair behaves at the ends of the working grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroMode {
    /// `phi` bounded at zero, `psi'/W` tends to a positive limit.
    ExitLike,
    /// `phi` blows up at zero, `psi'/W` tends to zero.
    NaturalLike,
    /// Matches neither admitted pattern.
    Unclassified,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundaryBehavior {
    /// `phi(x_max)/phi(K) < 1e-6` and `psi` large at the top.
    pub infinity_natural: bool,
    pub zero_mode: ZeroMode,
}

/// Diagnostic classification of the boundary behavior of a pair on a grid.
/// Never blocks a solve; callers decide what to do with a mismatch.
pub fn boundary_behavior_check(pair: &FundamentalPair, grid: &Grid) -> BoundaryBehavior {
    let k = grid.nodes()[grid.strike_index()];
    let top = grid.x_max();
    let infinity_natural =
        pair.phi(top) / pair.phi(k) < 1e-6 && pair.psi(top) > pair.psi(k);

    // Trend between the bottom node and one decade above it.
    let xa = grid.x_min();
    let xb = (xa * 10.0).min(k / 10.0);
    let r_phi = pair.phi(xa) / pair.phi(xb);
    let t = |x: f64| pair.psi_prime(x) / pair.wronskian(x);
    let t_ratio = t(xa) / t(xb);
    let zero_mode = if r_phi > 5.0 && t_ratio < 0.5 {
        ZeroMode::NaturalLike
    } else if r_phi < 2.0 && t_ratio > 0.5 {
        ZeroMode::ExitLike
    } else {
        ZeroMode::Unclassified
    };
    BoundaryBehavior { infinity_natural, zero_mode }
}

#[cfg(test)]
mod tests {
    use super::*;

    const K: f64 = 1.0;

    fn grid() -> Arc<Grid> {
        Grid::new(1e-3, 1e2, 2000, K).unwrap()
    }

    #[test]
    fn gbm_exponents_reference_values() {
        let (bm, bp) = gbm_exponents(0.2, 0.05, 0.05);
        assert!((bp - 1.0).abs() < 1e-12, "beta+ = {bp}");
        assert!((bm + 2.5).abs() < 1e-12, "beta- = {bm}");

        let (bm, bp) = gbm_exponents(0.2, 0.05, 0.15);
        assert!((bp - 2.0894541725).abs() < 1e-9, "beta+ = {bp}");
        assert!((bm + 3.5894541725).abs() < 1e-9, "beta- = {bm}");

        // Product of roots is -2 rho / sigma^2 < 0 for any valid inputs.
        for (s, m, r) in [(0.1, 0.03, 0.07), (0.45, -0.02, 0.12), (0.2, 0.0, 0.05)] {
            let (bm, bp) = gbm_exponents(s, m, r);
            assert!(bm < 0.0 && bp > 0.0, "sign split fails for ({s}, {m}, {r})");
        }
    }

    #[test]
    fn gbm_pair_wronskian_at_one() {
        let pair = gbm_pair(0.2, 0.05, 0.05).unwrap();
        assert!((pair.wronskian(1.0) - 3.5).abs() < 1e-12);
        assert!(gbm_pair(0.2, 0.05, -0.1).is_err(), "negative kill rate must fail");
    }

    #[test]
    fn numeric_pair_matches_closed_form_for_constant_vol() {
        let g = grid();
        let vol = VolatilityModel::constant(0.2).unwrap();
        let exact = gbm_pair(0.2, 0.05, 0.05).unwrap();
        let num = numeric_pair(&vol, 0.05, 0.05, &g).unwrap();
        let mut x = K / 10.0;
        let mut worst: f64 = 0.0;
        while x <= 10.0 * K {
            for (a, b) in [
                (num.psi(x), exact.psi(x)),
                (num.phi(x), exact.phi(x)),
                (num.psi_prime(x), exact.psi_prime(x)),
                (num.phi_prime(x), exact.phi_prime(x)),
                (num.wronskian(x), exact.wronskian(x)),
            ] {
                worst = worst.max((a - b).abs() / b.abs());
            }
            x *= 1.03;
        }
        assert!(worst < 1e-6, "worst relative error {worst}");
    }

    #[test]
    fn numeric_pair_is_normalized_and_monotone() {
        let g = grid();
        let vol = VolatilityModel::constant(0.2).unwrap();
        let num = numeric_pair(&vol, 0.05, 0.05, &g).unwrap();
        assert!((num.psi(K) - 1.0).abs() < 1e-12);
        assert!((num.phi(K) - 1.0).abs() < 1e-12);
        assert!(num.psi(g.x_min()) < 1.0 && num.psi(g.x_max()) > 1.0);
        assert!(num.phi(g.x_min()) > 1.0 && num.phi(g.x_max()) < 1.0);
    }

    #[test]
    fn scaled_wronskian_is_constant() {
        let g = grid();
        let vol = VolatilityModel::constant(0.2).unwrap();
        for pair in [
            gbm_pair(0.2, 0.05, 0.05).unwrap(),
            numeric_pair(&vol, 0.05, 0.05, &g).unwrap(),
        ] {
            let spread = scaled_wronskian_spread(&pair, &g);
            assert!(spread < 1e-6, "scaled Wronskian spread {spread}");
        }
        // CEV numeric pair on a narrower working band.
        let g2 = Grid::new(1e-2, 20.0, 1200, K).unwrap();
        let cev = VolatilityModel::cev(0.2, 0.5).unwrap();
        let pair = numeric_pair(&cev, 0.05, 0.05, &g2).unwrap();
        let spread = scaled_wronskian_spread(&pair, &g2);
        assert!(spread < 1e-6, "CEV scaled Wronskian spread {spread}");
    }

    #[test]
    fn ode_defect_is_small() {
        let g = Grid::new(1e-3, 1e2, 400, K).unwrap();
        let vol = VolatilityModel::constant(0.2).unwrap();
        for pair in [
            gbm_pair(0.2, 0.05, 0.05).unwrap(),
            numeric_pair(&vol, 0.05, 0.05, &g).unwrap(),
        ] {
            let defect = ode_defect(&pair, &g);
            assert!(defect <= 1e-8, "ODE defect {defect}");
        }
    }

    #[test]
    fn boundary_behavior_gbm_is_natural_both_ends() {
        // beta- = -2.5 needs x_max = 1000 K for phi(x_max)/phi(K) < 1e-6.
        let g = Grid::new(1e-3, 1e3, 2000, K).unwrap();
        let pair = gbm_pair(0.2, 0.05, 0.05).unwrap();
        let b = boundary_behavior_check(&pair, &g);
        assert!(b.infinity_natural);
        assert_eq!(b.zero_mode, ZeroMode::NaturalLike);
    }

    #[test]
    fn boundary_behavior_cev_is_exit_like_at_zero() {
        let g = Grid::new(1e-3, 20.0, 1500, K).unwrap();
        let cev = VolatilityModel::cev(0.2, 0.5).unwrap();
        let pair = numeric_pair(&cev, 0.05, 0.05, &g).unwrap();
        let b = boundary_behavior_check(&pair, &g);
        assert_eq!(b.zero_mode, ZeroMode::ExitLike);
        // Sanity on both ends regardless of the x_max threshold outcome.
        assert!(pair.psi(g.x_min()) / pair.psi(K) < 1.0);
    }

    #[test]
    fn rescaling_scales_wronskian_bilinearly() {
        let pair = gbm_pair(0.2, 0.05, 0.05).unwrap();
        let scaled = pair.rescaled(3.0, 0.25);
        let x = 1.7;
        assert!((scaled.psi(x) - 3.0 * pair.psi(x)).abs() < 1e-12 * pair.psi(x));
        assert!((scaled.phi(x) - 0.25 * pair.phi(x)).abs() < 1e-12);
        let w_ratio = scaled.wronskian(x) / pair.wronskian(x);
        assert!((w_ratio - 0.75).abs() < 1e-12);
    }

    #[test]
    fn tail_decay_uses_phi_ratio() {
        let pair = gbm_pair(0.2, 0.05, 0.05).unwrap();
        let r = pair.decay_ratio(4.0, 2.0);
        assert!((r - 2.0f64.powf(-2.5)).abs() < 1e-14);
    }

    #[test]
    fn scale_log_integral_closed_forms_match_quadrature() {
        // Constant vol vs a one-row "table" of the same level.
        let c = VolatilityModel::constant(0.2).unwrap();
        let t = VolatilityModel::table(vec![(1e-4, 0.2), (1e4, 0.2)]).unwrap();
        let a = 0.3;
        let b = 7.0;
        let mu = 0.05;
        let exact = scale_log_integral(&c, mu, a, b);
        let quad = scale_log_integral(&t, mu, a, b);
        assert!((exact - quad).abs() < 1e-12 * exact.abs());

        // CEV closed form against a dense numerical check.
        let cev = VolatilityModel::cev(0.2, 0.5).unwrap();
        let exact = scale_log_integral(&cev, mu, a, b);
        let mut acc = 0.0;
        let steps = 40_000;
        for i in 0..steps {
            let y = a + (b - a) * (i as f64 + 0.5) / steps as f64;
            let s = cev.eval(y);
            acc += 2.0 * mu / (s * s * y) * (b - a) / steps as f64;
        }
        assert!((exact - acc).abs() < 1e-6 * exact.abs(), "{exact} vs {acc}");
    }
}
