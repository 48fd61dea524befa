//! Pricing of perpetual American puts on assets with level-dependent volatility
//! and compound Poisson jumps.
//!
//! The state follows
//!
//! ```text
//! dX_t = mu X_t dt + sigma(X_t) X_t dB_t + X_{t-} d(sum of (Z_i - 1) jumps)
//! ```
//!
//! where jumps arrive at rate `lambda` and multiply the state by i.i.d. factors
//! `Z ~ nu`. The put value `V(x) = sup_tau E[e^{-alpha tau} (K - X_tau)^+]` is
//! computed by value iteration: each sweep solves an exterior Dirichlet problem
//! for the diffusion killed at rate `alpha + lambda`, with the jump term of the
//! previous iterate acting as a source. The solve is explicit in terms of the
//! increasing/decreasing fundamental solutions of the killed generator, so each
//! sweep costs one quadrature pass over the grid and a one-dimensional root
//! find for the exercise boundary.
//!
//! Modules:
//! - [`model`]: market description (volatility law, jump measure, rates).
//! - [`gridfn`]: log-spaced price grid and piecewise linear grid functions.
//! - [`fundsol`]: fundamental solutions `psi` (increasing) and `phi` (decreasing).
//! - [`operator`]: the single-sweep operator, boundary objective and root find.
//! - [`solver`]: the fixed-point iteration with a priori error control.
//! - [`mc`]: independent Monte Carlo cross-check of solver output.
//! - [`cli`]: command line front end (`price`, `trace`, `validate`, `sweep`).

pub mod cli;
pub mod error;
pub mod fundsol;
pub mod gridfn;
pub mod mc;
pub mod model;
pub mod numerics;
pub mod operator;
pub mod solver;

pub use error::{Error, Result};

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is enabled.
///
/// The output order is always the index order, so callers that reduce the
/// result with a fixed summation order get bit-identical answers regardless
/// of thread count.
pub fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
