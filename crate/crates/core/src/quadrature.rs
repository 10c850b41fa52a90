//! One-dimensional quadrature rules shared across the crate.

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Nodes are found by Newton iteration on the Legendre polynomial with
/// the Chebyshev-point initial guess; accurate to machine precision for
/// the orders used here (n <= 200).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre: need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // initial guess (Abramowitz–Stegun 25.4.38 flavor)
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' by the three-term recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        // the middle node of an odd rule is exactly zero
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        x.iter().map(|&t| mid + half * t).collect(),
        w.iter().map(|&t| half * t).collect(),
    )
}

/// Composite midpoint rule on `[0, len]` with panels graded
/// geometrically toward the endpoint `len`.
///
/// The panel adjacent to `len` has width `len * (1-q) * q^(n-1) / (1-q^n)`;
/// `q` in (0, 1) controls the grading strength.  Used for characteristic
/// integrals whose integrand varies fastest where the ray meets the
/// boundary.
pub fn graded_midpoint(len: f64, n: usize, q: f64) -> Vec<(f64, f64)> {
    assert!(n >= 1 && q > 0.0 && q < 1.0);
    if len <= 0.0 {
        return Vec::new();
    }
    let total: f64 = (1.0 - q.powi(n as i32)) / (1.0 - q);
    let mut out = Vec::with_capacity(n);
    let mut left = 0.0;
    for k in 0..n {
        let width = len * q.powi(k as i32) / total;
        out.push((left + 0.5 * width, width));
        left += width;
    }
    out
}

/// Quadrature rule for damped characteristic integrals
/// `int_0^tau e^{-nu s} g(s) ds ~ sum w_k g(s_k)`.
///
/// The substitution `xi = (1 - e^{-nu s}) / nu` integrates the
/// exponential factor exactly (the rule is exact for constant `g`) and
/// the graded midpoint rule in `xi` clusters nodes toward `s = tau`,
/// where the integrand of transport rays varies fastest.
pub fn damped_ray_rule(nu: f64, tau: f64, n: usize, q: f64) -> Vec<(f64, f64)> {
    if tau <= 0.0 {
        return Vec::new();
    }
    let xi_max = if nu * tau < 1e-8 {
        tau * (1.0 - 0.5 * nu * tau)
    } else {
        (1.0 - (-nu * tau).exp()) / nu
    };
    graded_midpoint(xi_max, n, q)
        .into_iter()
        .map(|(xi, w)| {
            let s = if nu * xi < 1e-8 {
                xi * (1.0 + 0.5 * nu * xi)
            } else {
                -(1.0 - nu * xi).max(1e-300).ln() / nu
            };
            (s.min(tau), w)
        })
        .collect()
}

/// Error function, re-exported so callers do not depend on statrs
/// directly.
#[inline]
pub fn erf(x: f64) -> f64 {
    statrs::function::erf::erf(x)
}
