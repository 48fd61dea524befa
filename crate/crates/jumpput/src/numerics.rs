//! Shared numerical kernels: deterministic summation, Gauss quadrature rules,
//! cubic Hermite interpolation and an adaptive Runge-Kutta step.

/// Pairwise (cascade) summation.
///
/// Error grows like O(log n) in ulps instead of O(n) for a running sum, and
/// the reduction tree depends only on the slice length, so results are
/// bit-identical no matter how the values were produced (serial or parallel).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 64;
    if xs.len() <= BASE {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Gauss-Hermite quadrature rule for the weight `exp(-t^2)` on the real line.
///
/// Nodes are the roots of the degree `n` Hermite polynomial, found by Newton
/// iteration on the orthonormal three-term recurrence (stable for any
/// practical order). Weights satisfy `sum(w) = sqrt(pi)` exactly in theory.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite order must be at least 1");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let pim4 = std::f64::consts::PI.powf(-0.25);

        // Roots come in +/- pairs; iterate the positive half starting from the
        // largest and reuse previous roots to seed the next guess.
        let half = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..half {
            z = match i {
                0 => {
                    let an = 2.0 * n as f64 + 1.0;
                    an.sqrt() - 1.85575 * an.powf(-1.0 / 6.0)
                }
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[n - 1],
                3 => 1.91 * z - 0.91 * nodes[n - 2],
                _ => 2.0 * z - nodes[n - i + 1],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                // Evaluate the orthonormal Hermite function h_n and its
                // derivative sqrt(2n) h_{n-1} at z.
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[n - 1 - i] = z;
            nodes[i] = -z;
            let w = 2.0 / (pp * pp);
            weights[n - 1 - i] = w;
            weights[i] = w;
        }
        if n % 2 == 1 {
            // For odd order the middle node is exactly zero; the Newton loop
            // above already put it there to rounding, pin it.
            nodes[n / 2] = 0.0;
        }
        GaussHermite { nodes, weights }
    }
}

/// Nodes and weights of the 8-point Gauss-Legendre rule on [-1, 1].
/// Exact for polynomials up to degree 15; used for smooth scale-density
/// integrals over single cells.
pub const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (-0.9602898564975363, 0.10122853629037626),
    (-0.7966664774136267, 0.22238103445337448),
    (-0.5255324099163290, 0.31370664587788727),
    (-0.1834346424956498, 0.36268378337836200),
    (0.1834346424956498, 0.36268378337836200),
    (0.5255324099163290, 0.31370664587788727),
    (0.7966664774136267, 0.22238103445337448),
    (0.9602898564975363, 0.10122853629037626),
];

/// Integrates `f` over `[a, b]` with the 8-point Gauss-Legendre rule.
pub fn gauss_legendre_8<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for (t, w) in GAUSS_LEGENDRE_8 {
        acc += w * f(c + h * t);
    }
    acc * h
}

/// Cubic Hermite interpolation of `(y0, d0)` at `t = 0` and `(y1, d1)` at
/// `t = h`, evaluated at offset `s` in `[0, h]`. Derivatives are with respect
/// to the same coordinate as `h`.
pub fn hermite_value(h: f64, y0: f64, d0: f64, y1: f64, d1: f64, s: f64) -> f64 {
    let t = s / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1
}

/// Derivative of [`hermite_value`] with respect to the interpolation
/// coordinate, evaluated at offset `s`.
pub fn hermite_derivative(h: f64, y0: f64, d0: f64, y1: f64, d1: f64, s: f64) -> f64 {
    let t = s / h;
    let t2 = t * t;
    ((6.0 * t2 - 6.0 * t) * y0
        + (3.0 * t2 - 4.0 * t + 1.0) * h * d0
        + (-6.0 * t2 + 6.0 * t) * y1
        + (3.0 * t2 - 2.0 * t) * h * d1)
        / h
}

/// One embedded Cash-Karp Runge-Kutta step of order 4(5) for a 2-state system.
/// Returns the 5th order solution and an error estimate per component.
fn cash_karp_step<F>(f: &F, t: f64, y: [f64; 2], h: f64) -> ([f64; 2], [f64; 2])
where
    F: Fn(f64, [f64; 2]) -> [f64; 2],
{
    const A: [f64; 6] = [0.0, 0.2, 0.3, 0.6, 1.0, 0.875];
    const B: [[f64; 5]; 6] = [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [0.2, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
        [0.3, -0.9, 1.2, 0.0, 0.0],
        [-11.0 / 54.0, 2.5, -70.0 / 27.0, 35.0 / 27.0, 0.0],
        [
            1631.0 / 55296.0,
            175.0 / 512.0,
            575.0 / 13824.0,
            44275.0 / 110592.0,
            253.0 / 4096.0,
        ],
    ];
    const C5: [f64; 6] = [37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0];
    const C4: [f64; 6] = [
        2825.0 / 27648.0,
        0.0,
        18575.0 / 48384.0,
        13525.0 / 55296.0,
        277.0 / 14336.0,
        0.25,
    ];

    let mut k = [[0.0f64; 2]; 6];
    k[0] = f(t, y);
    for i in 1..6 {
        let mut yi = y;
        for (j, kj) in k.iter().enumerate().take(i) {
            yi[0] += h * B[i][j] * kj[0];
            yi[1] += h * B[i][j] * kj[1];
        }
        k[i] = f(t + A[i] * h, yi);
    }
    let mut y5 = y;
    let mut err = [0.0f64; 2];
    for (i, ki) in k.iter().enumerate() {
        y5[0] += h * C5[i] * ki[0];
        y5[1] += h * C5[i] * ki[1];
        err[0] += h * (C5[i] - C4[i]) * ki[0];
        err[1] += h * (C5[i] - C4[i]) * ki[1];
    }
    (y5, err)
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction) with
/// adaptive Cash-Karp 4(5) steps at relative tolerance `rtol`.
pub fn integrate_adaptive<F>(f: &F, t0: f64, y0: [f64; 2], t1: f64, rtol: f64) -> [f64; 2]
where
    F: Fn(f64, [f64; 2]) -> [f64; 2],
{
    let span = t1 - t0;
    if span == 0.0 {
        return y0;
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut h: f64 = span;
    let mut guard = 0usize;
    while (t1 - t) * dir > 0.0 {
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let (y_new, err) = cash_karp_step(f, t, y, h);
        let scale0 = y[0].abs().max(y_new[0].abs()).max(1e-290);
        let scale1 = y[1].abs().max(y_new[1].abs()).max(1e-290);
        let e = (err[0] / scale0).abs().max((err[1] / scale1).abs());
        if e <= rtol {
            t += h;
            y = y_new;
            // Grow the step conservatively.
            let f_grow = if e > 0.0 { 0.9 * (rtol / e).powf(0.2) } else { 5.0 };
            h *= f_grow.clamp(1.0, 5.0);
        } else {
            h *= (0.9 * (rtol / e).powf(0.25)).clamp(0.1, 0.9);
        }
        guard += 1;
        assert!(guard < 1_000_000, "adaptive integrator failed to converge");
    }
    y
}
