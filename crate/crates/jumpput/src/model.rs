//! Market description: volatility law, jump measure, rates and strike.
//!
//! The asset pays no dividends and jumps multiplicatively: at Poisson times of
//! rate `lambda` the price moves from `x` to `z x` with `z` drawn from the
//! jump measure `nu`. Writing `xi = E[Z]`, the drift is pinned to
//!
//! ```text
//! mu = r + lambda - lambda * xi
//! ```
//!
//! so that the discounted price is a martingale under the pricing measure.
//! A lognormal jump law is collapsed to a finite atom list through
//! Gauss-Hermite quadrature once at construction time; afterwards every jump
//! integral in the library is a fixed weighted sum, which keeps the averaging
//! operator linear and cheap.

use crate::error::{Error, Result};
use crate::numerics::GaussHermite;

const SQRT_PI: f64 = 1.772_453_850_905_515_9;

/// Distribution of the multiplicative jump factor `Z`.
#[derive(Debug, Clone)]
pub enum JumpKind {
    /// Finitely many atoms `(z_i, p_i)`.
    Discrete,
    /// `ln Z ~ N(meanlog, sdlog^2)`, discretized with `quad_order` nodes.
    LogNormal {
        meanlog: f64,
        sdlog: f64,
        quad_order: usize,
    },
}

/// Jump measure, stored as a finite list of positive atoms with nonnegative
/// probabilities summing to one. Lognormal laws keep their parameters around
/// for exact path simulation; pricing always goes through the atoms.
#[derive(Debug, Clone)]
pub struct JumpMeasure {
    kind: JumpKind,
    atoms: Vec<(f64, f64)>,
}

impl JumpMeasure {
    /// A discrete measure from explicit atoms `(z_i, p_i)`.
    pub fn discrete(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidModel("jump measure needs at least one atom".into()));
        }
        for &(z, p) in &atoms {
            if !(z > 0.0) || !z.is_finite() {
                return Err(Error::InvalidModel(format!("jump atom z = {z} must be positive and finite")));
            }
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidModel(format!("jump probability {p} must be nonnegative")));
            }
        }
        let total: f64 = atoms.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "jump probabilities sum to {total}, expected 1 within 1e-12"
            )));
        }
        let m = JumpMeasure { kind: JumpKind::Discrete, atoms };
        m.check_mean()?;
        Ok(m)
    }

    /// The point mass at `z = 1` (jumps that do nothing).
    pub fn identity() -> Self {
        JumpMeasure { kind: JumpKind::Discrete, atoms: vec![(1.0, 1.0)] }
    }

    /// Lognormal law `ln Z ~ N(meanlog, sdlog^2)` discretized by Gauss-Hermite
    /// quadrature: atoms `z_i = exp(meanlog + sqrt(2) sdlog t_i)` with
    /// probabilities `w_i / sqrt(pi)`.
    pub fn lognormal(meanlog: f64, sdlog: f64, quad_order: usize) -> Result<Self> {
        if !(sdlog > 0.0) || !sdlog.is_finite() || !meanlog.is_finite() {
            return Err(Error::InvalidModel(format!(
                "lognormal jump parameters (meanlog={meanlog}, sdlog={sdlog}) invalid"
            )));
        }
        if quad_order < 2 {
            return Err(Error::InvalidModel("lognormal quadrature order must be >= 2".into()));
        }
        let rule = GaussHermite::new(quad_order);
        let atoms: Vec<(f64, f64)> = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&t, &w)| ((meanlog + std::f64::consts::SQRT_2 * sdlog * t).exp(), w / SQRT_PI))
            .collect();
        let total: f64 = atoms.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidModel(format!(
                "lognormal quadrature weights sum to {total}, expected 1 within 1e-10"
            )));
        }
        for &(z, _) in &atoms {
            if !(z > 0.0) || !z.is_finite() {
                return Err(Error::InvalidModel("lognormal quadrature produced a non-positive node".into()));
            }
        }
        let m = JumpMeasure { kind: JumpKind::LogNormal { meanlog, sdlog, quad_order }, atoms };
        m.check_mean()?;
        Ok(m)
    }

    fn check_mean(&self) -> Result<()> {
        let xi = self.mean();
        if !xi.is_finite() {
            return Err(Error::InvalidModel(format!("jump mean xi = {xi} is not finite")));
        }
        Ok(())
    }

    /// The atoms `(z_i, p_i)` the pricing operators sum over.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// Mean jump factor `xi = sum_i z_i p_i`.
    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(z, p)| z * p).sum()
    }

    /// The underlying law, for exact path simulation.
    pub fn kind(&self) -> &JumpKind {
        &self.kind
    }
}

/// Mean jump factor of a measure; quadrature estimate for lognormal laws.
pub fn jump_mean(jumps: &JumpMeasure) -> f64 {
    jumps.mean()
}

/// Risk-neutral drift `mu = r + lambda - lambda * xi`.
pub fn derive_mu(r: f64, lambda: f64, xi: f64) -> f64 {
    r + lambda - lambda * xi
}

/// Level-dependent volatility `sigma(x)`.
#[derive(Debug, Clone)]
pub enum VolatilityModel {
    /// `sigma(x) = sigma`.
    Constant { sigma: f64 },
    /// `sigma(x) = sigma * x^{-gamma}` with `gamma` in (0, 1).
    Cev { sigma: f64, gamma: f64 },
    /// Tabulated `(x_j, sigma_j)`, log-log interpolated, constant outside.
    Table { points: Vec<(f64, f64)> },
}

impl VolatilityModel {
    pub fn constant(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidModel(format!("constant volatility {sigma} must be positive")));
        }
        Ok(VolatilityModel::Constant { sigma })
    }

    pub fn cev(sigma: f64, gamma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidModel(format!("CEV scale {sigma} must be positive")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidModel(format!("CEV exponent {gamma} must lie in (0, 1)")));
        }
        Ok(VolatilityModel::Cev { sigma, gamma })
    }

    /// A tabulated volatility curve. Nodes must be strictly increasing in `x`,
    /// strictly positive in `sigma`, and adjacent values may differ by at most
    /// a factor of 10 (a cheap guard against accidental discontinuities).
    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidModel("volatility table needs at least two points".into()));
        }
        for w in points.windows(2) {
            if !(w[0].0 < w[1].0) {
                return Err(Error::InvalidModel("volatility table abscissae must be strictly increasing".into()));
            }
        }
        for &(x, s) in &points {
            if !(x > 0.0) || !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "volatility table entry ({x}, {s}) must be positive"
                )));
            }
        }
        for w in points.windows(2) {
            let ratio = w[1].1 / w[0].1;
            if !(0.1..=10.0).contains(&ratio) {
                return Err(Error::InvalidModel(format!(
                    "volatility table jumps by factor {ratio} between x = {} and x = {}; \
                     adjacent levels may differ by at most 10x",
                    w[0].0, w[1].0
                )));
            }
        }
        Ok(VolatilityModel::Table { points })
    }

    /// Evaluates `sigma(x)`; `x` must be positive.
    pub fn eval(&self, x: f64) -> f64 {
        assert!(x > 0.0, "volatility evaluated at non-positive price {x}");
        match self {
            VolatilityModel::Constant { sigma } => *sigma,
            VolatilityModel::Cev { sigma, gamma } => sigma * x.powf(-gamma),
            VolatilityModel::Table { points } => {
                let lx = x.ln();
                let first = points.first().unwrap();
                let last = points.last().unwrap();
                if x <= first.0 {
                    return first.1;
                }
                if x >= last.0 {
                    return last.1;
                }
                let k = points.partition_point(|&(xj, _)| xj < x);
                let (x0, s0) = points[k - 1];
                let (x1, s1) = points[k];
                let t = (lx - x0.ln()) / (x1.ln() - x0.ln());
                (s0.ln() + t * (s1.ln() - s0.ln())).exp()
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, VolatilityModel::Constant { .. })
    }
}

/// Evaluates a volatility model at a price (free-function spelling).
pub fn sigma_eval(vol: &VolatilityModel, x: f64) -> f64 {
    vol.eval(x)
}

/// Full market description.
#[derive(Debug, Clone)]
pub struct MarketModel {
    pub vol: VolatilityModel,
    pub r: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub jumps: JumpMeasure,
    pub strike: f64,
}

impl MarketModel {
    pub fn new(
        vol: VolatilityModel,
        r: f64,
        alpha: f64,
        lambda: f64,
        jumps: JumpMeasure,
        strike: f64,
    ) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidModel(format!("interest rate r = {r} must be positive")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidModel(format!("discount rate alpha = {alpha} must be positive")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidModel(format!("jump intensity lambda = {lambda} must be nonnegative")));
        }
        if !(strike > 0.0) || !strike.is_finite() {
            return Err(Error::InvalidModel(format!("strike {strike} must be positive")));
        }
        let model = MarketModel { vol, r, alpha, lambda, jumps, strike };
        if !model.mu().is_finite() {
            return Err(Error::InvalidModel("derived drift mu is not finite".into()));
        }
        Ok(model)
    }

    /// Mean jump factor `xi`.
    pub fn xi(&self) -> f64 {
        self.jumps.mean()
    }

    /// Risk-neutral drift `mu = r + lambda - lambda xi`.
    pub fn mu(&self) -> f64 {
        derive_mu(self.r, self.lambda, self.xi())
    }

    /// Kill rate of the iteration's linear solves: `rho = alpha + lambda`.
    pub fn rho(&self) -> f64 {
        self.alpha + self.lambda
    }
}
