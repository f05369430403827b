//! Harmonic-well eigenfunctions for a uniform field and the moment
//! constants that control how fast band functions can flatten.
//!
//! For a uniform field `b` the fiber reduces to a shifted harmonic well
//! whose level `l` eigenfunction is a Hermite function of degree `l - 1`
//! with energy `(2l - 1) b`.  The half-line third moment of each level
//! yields a coefficient; the running maximum over levels, inverted and
//! divided by `2j - 1`, is the prefactor in the lower bound for the band
//! derivative inside its trust window.

use crate::fiber::FiberGrid;
use crate::quadrature::integrate_panels;
use crate::{ensure, Result};

const MAX_DEGREE: usize = 12;

/// Physicists' Hermite polynomial `H_n(x)` by the three-term recurrence;
/// degrees up to 12 keep every coefficient exact in f64.
pub fn hermite(n: usize, x: f64) -> f64 {
    assert!(n <= MAX_DEGREE, "Hermite degree {n} out of range");
    if n == 0 {
        return 1.0;
    }
    let mut hm = 1.0;
    let mut h = 2.0 * x;
    for k in 1..n {
        let next = 2.0 * x * h - 2.0 * k as f64 * hm;
        hm = h;
        h = next;
    }
    h
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// L2-normalized eigenfunction of the level `level >= 1` well for field
/// strength `b`, centered at `center`.  Its energy is `(2 level - 1) b`.
pub fn eigenfunction(level: usize, b: f64, center: f64, x: f64) -> f64 {
    assert!(level >= 1 && level <= MAX_DEGREE, "level {level} out of range");
    assert!(b > 0.0);
    let deg = level - 1;
    let y = b.sqrt() * (x - center);
    let norm = b.powf(0.25)
        / (2f64.powi(deg as i32) * factorial(deg)).sqrt()
        / std::f64::consts::PI.powf(0.25);
    norm * hermite(deg, y) * (-0.5 * y * y).exp()
}

/// Half-line third-moment coefficient of level `l`:
/// `(2^{l-1} (l-1)!)^{-1/2} pi^{-1/4} (int_0^inf u^3 e^{-u^2} H_{l-1}(u)^2 du)^{1/2}`.
pub fn moment_coefficient(level: usize) -> f64 {
    assert!(level >= 1 && level <= MAX_DEGREE);
    let deg = level - 1;
    let integrand = |u: f64| {
        let h = hermite(deg, u);
        u * u * u * (-u * u).exp() * h * h
    };
    // The integrand dies like exp(-u^2); [0, 24] is far past underflow.
    let coarse = integrate_panels(&integrand, 0.0, 24.0, 1.0, 32);
    let fine = integrate_panels(&integrand, 0.0, 24.0, 0.5, 48);
    let scale = fine.abs().max(1e-300);
    assert!(
        (fine - coarse).abs() <= 1e-12 * scale,
        "half-line moment quadrature did not settle at level {level}"
    );
    let norm2 = 2f64.powi(deg as i32) * factorial(deg) * std::f64::consts::PI.sqrt();
    (fine / norm2).sqrt()
}

/// Moment coefficients per level and derivative-bound prefactors per band.
#[derive(Debug, Clone)]
pub struct DerivativeConstants {
    /// `moment[l-1]` is the half-line coefficient of level `l`.
    pub moment: Vec<f64>,
    /// `prefactor[j-1]` bounds the derivative of band `j` from below.
    pub prefactor: Vec<f64>,
}

/// Computes the constants for bands `1..=j_max` (at most 8).
pub fn derivative_constants(j_max: usize) -> Result<DerivativeConstants> {
    ensure(j_max >= 1 && j_max <= 8, || {
        format!("band count {j_max} outside 1..=8")
    })?;
    let moment: Vec<f64> = (1..=j_max).map(moment_coefficient).collect();
    let mut prefactor = Vec::with_capacity(j_max);
    let mut running_max = 0.0f64;
    for (j, &m) in moment.iter().enumerate() {
        running_max = running_max.max(m);
        prefactor.push(running_max.powi(-2) / (2.0 * (j + 1) as f64 - 1.0));
    }
    Ok(DerivativeConstants { moment, prefactor })
}

/// Discrete overlap of a grid function with the level eigenfunction of a
/// uniform field `b` centered at `center`.
pub fn overlap(grid: &FiberGrid, psi: &[f64], level: usize, b: f64, center: f64) -> f64 {
    assert_eq!(psi.len(), grid.n);
    let mut s = 0.0;
    for i in 0..grid.n {
        s += psi[i] * eigenfunction(level, b, center, grid.x(i));
    }
    grid.h * s
}
