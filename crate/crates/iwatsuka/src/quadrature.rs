//! Gauss-Legendre quadrature on composite panels.
//!
//! The moment integrals behind the admissibility constants involve
//! `u^3 e^{-u^2} P(u)^2` with `P` a polynomial of degree <= 11, so a fixed
//! high-order rule per unit-length panel integrates them to machine
//! precision.  Nodes are found by Newton iteration on the Legendre
//! recurrence; weights from the standard derivative formula.

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Tricomi-style initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for m in 2..=n {
        let m = m as f64;
        let p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` over [a, b] with `order`-point Gauss-Legendre panels of
/// width at most `panel`.
pub fn integrate_panels(f: impl Fn(f64) -> f64, a: f64, b: f64, panel: f64, order: usize) -> f64 {
    assert!(b >= a && panel > 0.0);
    let n_panels = (((b - a) / panel).ceil() as usize).max(1);
    let (nodes, weights) = gauss_legendre(order);
    let w = (b - a) / n_panels as f64;
    let mut total = 0.0;
    for p in 0..n_panels {
        let lo = a + p as f64 * w;
        let mid = lo + 0.5 * w;
        let half = 0.5 * w;
        let mut s = 0.0;
        for (x, wt) in nodes.iter().zip(&weights) {
            s += wt * f(mid + half * x);
        }
        total += s * half;
    }
    total
}
