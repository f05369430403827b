//! Band functions of the fibered operator and their derivatives.
//!
//! For each momentum `k` the fiber is a one-dimensional well
//! `-d^2/dx^2 + (k - beta(x))^2`; its eigenvalue curves `omega_j(k)` carry
//! everything downstream: trust windows, edge currents, transport speeds.
//! The module computes tables of `omega_j` on shared grids (so values at
//! neighbouring momenta are directly comparable), offers four independent
//! derivative routes that must agree within discretization error, and
//! implements the admissibility bookkeeping for the windows in which the
//! derivative has a guaranteed lower bound.
//!
//! Derivative routes:
//! * `derivative_fh` differentiates the discrete eigenvalue exactly through
//!   the parameter dependence of the operator.
//! * `derivative_boundary` (step profile only) expresses the slope through
//!   the eigenfunction's value and slope at the wall.
//! * `derivative_weighted_upper` / `derivative_weighted_lower` reweight the
//!   momentum integrand by `1 - field/b_plus` resp. `field/b_minus - 1`,
//!   which collapses it onto one side of the interface.
//! * `derivative_fd` runs a five-point difference across dedicated solves
//!   and serves as the oracle for the other three.

use crate::eigensolve::{lowest_eigenpairs, lowest_eigenvalues, EigenPair};
use crate::fiber::{build_fiber_operator, select_domain_with_step, FiberGrid};
use crate::landau::derivative_constants;
use crate::profiles::FieldProfile;
use crate::{ensure, Error, Result};
use rayon::prelude::*;
use std::io::{self, Write};

/// Knobs for band-table construction.
#[derive(Debug, Clone)]
pub struct BandsOptions {
    /// Grid step; `None` means `0.2 / sqrt(b_plus)`.
    pub resolution: Option<f64>,
    /// Transverse domain margin in well widths.
    pub margin: f64,
    /// Keep the eigenvectors (memory heavy on fine sweeps).
    pub store_vectors: bool,
    /// Solve on this exact grid instead of selecting one; used to share the
    /// transverse axis with a two-dimensional evolution.
    pub grid_override: Option<FiberGrid>,
}

impl Default for BandsOptions {
    fn default() -> Self {
        BandsOptions { resolution: None, margin: 8.0, store_vectors: false, grid_override: None }
    }
}

/// One band along the momentum sweep.
#[derive(Debug, Clone)]
pub struct BandSweep {
    pub omega: Vec<f64>,
    pub omega_prime: Vec<f64>,
    pub omega_prime_alt: Vec<f64>,
}

/// Bands on a shared momentum grid and a shared transverse grid.
#[derive(Debug, Clone)]
pub struct BandTable {
    pub profile: FieldProfile,
    pub k: Vec<f64>,
    pub bands: Vec<BandSweep>,
    /// `vectors[ik][j]` when requested; oriented continuously in `k`.
    pub vectors: Option<Vec<Vec<Vec<f64>>>>,
    pub grid: FiberGrid,
}

/// Momentum half-span on which tails are flat to well below sweep
/// resolution but increments still clear the noise floor.
pub fn default_k_span(profile: &FieldProfile) -> f64 {
    3.5 * profile.b_plus().sqrt()
}

fn table_grid(
    profile: &FieldProfile,
    k_min: f64,
    k_max: f64,
    j_max: usize,
    opts: &BandsOptions,
) -> Result<FiberGrid> {
    if let Some(g) = &opts.grid_override {
        return Ok(g.clone());
    }
    let h = opts.resolution.unwrap_or_else(|| crate::fiber::default_step(profile));
    select_domain_with_step(profile, k_min, k_max, j_max, opts.margin, h)
}

/// Eigenpairs of the fiber at a single momentum.
pub fn solve_at(
    profile: &FieldProfile,
    k: f64,
    j_max: usize,
    opts: &BandsOptions,
) -> Result<(FiberGrid, Vec<EigenPair>)> {
    let grid = table_grid(profile, k, k, j_max, opts)?;
    let t = build_fiber_operator(profile, &grid, k);
    let pairs = lowest_eigenpairs(&t, grid.h, j_max, None)?;
    Ok((grid, pairs))
}

/// Lowest `j_max` eigenvalues at one momentum on a caller-fixed grid.
pub fn omega_on_grid(
    profile: &FieldProfile,
    grid: &FiberGrid,
    k: f64,
    j_max: usize,
) -> Result<Vec<f64>> {
    let t = build_fiber_operator(profile, grid, k);
    lowest_eigenvalues(&t, j_max)
}

/// Builds the band table for `j_max` bands on `n_k` momenta.
pub fn compute_bands(
    profile: &FieldProfile,
    k_min: f64,
    k_max: f64,
    n_k: usize,
    j_max: usize,
    opts: &BandsOptions,
) -> Result<BandTable> {
    ensure(n_k >= 2 && k_max > k_min, || {
        format!("need an increasing momentum range with n_k >= 2, got [{k_min}, {k_max}] x {n_k}")
    })?;
    ensure(j_max >= 1, || "need at least one band".to_string())?;
    let grid = table_grid(profile, k_min, k_max, j_max, opts)?;
    let ks: Vec<f64> = (0..n_k)
        .map(|i| k_min + (k_max - k_min) * i as f64 / (n_k - 1) as f64)
        .collect();

    let solved: Result<Vec<Vec<EigenPair>>> = ks
        .par_iter()
        .map(|&k| {
            let t = build_fiber_operator(profile, &grid, k);
            lowest_eigenpairs(&t, grid.h, j_max, None)
        })
        .collect();
    let mut solved = solved?;

    // Orient vectors continuously along the sweep (solves ran unordered).
    for ik in 1..solved.len() {
        for j in 0..j_max {
            let (lo, hi) = solved.split_at_mut(ik);
            let prev = &lo[ik - 1][j].vector;
            let cur = &mut hi[0][j].vector;
            let dot: f64 = prev.iter().zip(cur.iter()).map(|(a, b)| a * b).sum();
            if dot < 0.0 {
                cur.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }

    let mut bands = vec![
        BandSweep {
            omega: Vec::with_capacity(n_k),
            omega_prime: Vec::with_capacity(n_k),
            omega_prime_alt: Vec::with_capacity(n_k),
        };
        j_max
    ];
    let mut vectors = if opts.store_vectors { Some(Vec::with_capacity(n_k)) } else { None };
    for (ik, pairs) in solved.into_iter().enumerate() {
        let k = ks[ik];
        let mut per_k = Vec::with_capacity(j_max);
        for (j, pair) in pairs.into_iter().enumerate() {
            bands[j].omega.push(pair.value);
            bands[j].omega_prime.push(derivative_fh(profile, &grid, k, &pair.vector));
            bands[j].omega_prime_alt.push(derivative_alt(
                profile,
                &grid,
                k,
                pair.value,
                &pair.vector,
            ));
            if vectors.is_some() {
                per_k.push(pair.vector);
            }
        }
        if let Some(v) = vectors.as_mut() {
            v.push(per_k);
        }
    }
    Ok(BandTable { profile: profile.clone(), k: ks, bands, vectors, grid })
}

/// Exact derivative of the discrete eigenvalue: `2 h sum (k - beta) psi^2`.
pub fn derivative_fh(profile: &FieldProfile, grid: &FiberGrid, k: f64, psi: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..grid.n {
        s += (k - profile.beta_at(grid.x(i))) * psi[i] * psi[i];
    }
    2.0 * grid.h * s
}

/// Wall-trace form of the slope, step profile only:
/// `(1/b_minus - 1/b_plus) ((omega - k^2) psi(0)^2 + psi'(0)^2)`.
pub fn derivative_boundary(
    profile: &FieldProfile,
    grid: &FiberGrid,
    k: f64,
    omega: f64,
    psi: &[f64],
) -> Result<f64> {
    ensure(profile.is_sharp(), || "wall-trace slope needs a step profile".to_string())?;
    let z = grid.zero_index;
    ensure(z >= 3 && z + 3 < grid.n, || "grid too small around the wall".to_string())?;
    let h = grid.h;
    // One-sided four-point slopes from each side, averaged; psi'' is
    // continuous across the wall so both are third-order accurate.
    let fwd = (-11.0 * psi[z] + 18.0 * psi[z + 1] - 9.0 * psi[z + 2] + 2.0 * psi[z + 3]) / (6.0 * h);
    let bwd = (11.0 * psi[z] - 18.0 * psi[z - 1] + 9.0 * psi[z - 2] - 2.0 * psi[z - 3]) / (6.0 * h);
    let dpsi = 0.5 * (fwd + bwd);
    let w = (omega - k * k) * psi[z] * psi[z] + dpsi * dpsi;
    Ok((1.0 / profile.b_minus() - 1.0 / profile.b_plus()) * w)
}

/// Slope via the left-collapsed weight `1 - field/b_plus`.
pub fn derivative_weighted_upper(
    profile: &FieldProfile,
    grid: &FiberGrid,
    k: f64,
    psi: &[f64],
) -> f64 {
    let bp = profile.b_plus();
    let mut s = 0.0;
    for i in 0..grid.n {
        let x = grid.x(i);
        s += (1.0 - profile.field_at(x) / bp) * (k - profile.beta_at(x)) * psi[i] * psi[i];
    }
    2.0 * grid.h * s
}

/// Slope via the right-collapsed weight `field/b_minus - 1`.
pub fn derivative_weighted_lower(
    profile: &FieldProfile,
    grid: &FiberGrid,
    k: f64,
    psi: &[f64],
) -> f64 {
    let bm = profile.b_minus();
    let mut s = 0.0;
    for i in 0..grid.n {
        let x = grid.x(i);
        s += (profile.field_at(x) / bm - 1.0) * (k - profile.beta_at(x)) * psi[i] * psi[i];
    }
    -2.0 * grid.h * s
}

fn derivative_alt(
    profile: &FieldProfile,
    grid: &FiberGrid,
    k: f64,
    omega: f64,
    psi: &[f64],
) -> f64 {
    if profile.is_sharp() {
        derivative_boundary(profile, grid, k, omega, psi).unwrap_or(f64::NAN)
    } else {
        derivative_weighted_upper(profile, grid, k, psi)
    }
}

/// Five-point finite-difference slope from dedicated solves on one shared
/// grid; the oracle against which the analytic routes are checked.
pub fn derivative_fd(
    profile: &FieldProfile,
    k: f64,
    j: usize,
    delta: f64,
    opts: &BandsOptions,
) -> Result<f64> {
    ensure(delta > 0.0 && delta.is_finite(), || format!("bad stencil width {delta}"))?;
    let grid = match &opts.grid_override {
        Some(g) => g.clone(),
        None => {
            let h = opts.resolution.unwrap_or_else(|| crate::fiber::default_step(profile));
            select_domain_with_step(profile, k - 2.0 * delta, k + 2.0 * delta, j, opts.margin, h)?
        }
    };
    let omega = |kk: f64| -> Result<f64> { Ok(omega_on_grid(profile, &grid, kk, j)?[j - 1]) };
    let m2 = omega(k - 2.0 * delta)?;
    let m1 = omega(k - delta)?;
    let p1 = omega(k + delta)?;
    let p2 = omega(k + 2.0 * delta)?;
    Ok((m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * delta))
}

/// Discretization allowance for a level-`j` eigenvalue at field `b` and
/// step `h`: the three-point Laplacian undershoots by about
/// `h^2/12 * <p^4> = h^2 b^2 (2j^2 - 2j + 1)/16`, granted with a safety
/// factor of four.
pub fn discretization_allowance(h: f64, j: usize, b: f64) -> f64 {
    let jj = j as f64;
    4.0 * h * h * b * b * (2.0 * jj * jj - 2.0 * jj + 1.0) / 16.0 + 1e-9
}

/// How many low bands admit a full trust window for step ratio `r`:
/// `floor((r^2 + 1) / (2 (r^2 - 1)))`, zero when `r > sqrt(3)`.
pub fn admissible_band_count(r: f64) -> Result<usize> {
    ensure(r.is_finite() && r > 1.0, || format!("step ratio must exceed 1, got {r}"))?;
    Ok(((r * r + 1.0) / (2.0 * (r * r - 1.0))).floor() as usize)
}

/// Largest admissible half-width of the band-`j` window: `(2j-1)(r-1)/(r+1)`.
pub fn delta_max(j: usize, r: f64) -> f64 {
    (2.0 * j as f64 - 1.0) * (r - 1.0) / (r + 1.0)
}

/// Energy window of band `j` at half-width `delta`:
/// `((2j-1+delta) b_minus, (2j-1-delta) b_plus)`.
pub fn energy_window(profile: &FieldProfile, j: usize, delta: f64) -> Result<(f64, f64)> {
    let r = profile.ratio();
    ensure(j >= 1, || "band index starts at 1".to_string())?;
    ensure(delta > 0.0 && delta < delta_max(j, r), || {
        format!("window half-width {delta} outside (0, {})", delta_max(j, r))
    })?;
    let lo = (2.0 * j as f64 - 1.0 + delta) * profile.b_minus();
    let hi = (2.0 * j as f64 - 1.0 - delta) * profile.b_plus();
    ensure(lo < hi, || format!("empty window [{lo}, {hi}]"))?;
    Ok((lo, hi))
}

/// Momentum preimage of an energy window under the increasing band `j`,
/// bisected to 1e-8 momentum accuracy on a shared grid.
pub fn window_preimage(
    profile: &FieldProfile,
    j: usize,
    window: (f64, f64),
    opts: &BandsOptions,
) -> Result<(f64, f64)> {
    let (e_lo, e_hi) = window;
    ensure(e_lo < e_hi, || format!("empty window [{e_lo}, {e_hi}]"))?;
    let mut span = default_k_span(profile);
    for _ in 0..4 {
        let h = opts.resolution.unwrap_or_else(|| crate::fiber::default_step(profile));
        let grid = select_domain_with_step(profile, -span, span, j, opts.margin, h)?;
        let at = |k: f64| -> Result<f64> { Ok(omega_on_grid(profile, &grid, k, j)?[j - 1]) };
        if at(-span)? < e_lo && at(span)? > e_hi {
            let tol = 1e-8 * span.max(1.0);
            let edge = |target: f64| -> Result<f64> {
                let (mut lo, mut hi) = (-span, span);
                while hi - lo > tol {
                    let mid = 0.5 * (lo + hi);
                    if at(mid)? < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            };
            return Ok((edge(e_lo)?, edge(e_hi)?));
        }
        span *= 1.5;
    }
    Err(Error::Numeric(format!(
        "band {j} never leaves the window [{e_lo}, {e_hi}] on the probed momentum range"
    )))
}

/// Guaranteed slope inside the band-`j` window:
/// `c_j delta^3 (r-1) / r^3 sqrt(b_minus)`.
pub fn derivative_lower_bound(profile: &FieldProfile, j: usize, delta: f64) -> Result<f64> {
    let r = profile.ratio();
    ensure(delta > 0.0 && delta < delta_max(j, r), || {
        format!("window half-width {delta} outside (0, {})", delta_max(j, r))
    })?;
    let c = derivative_constants(j)?.prefactor[j - 1];
    Ok(c * delta.powi(3) * (r - 1.0) / r.powi(3) * profile.b_minus().sqrt())
}

/// Outcome of sweeping the slope across a trust window.
#[derive(Debug, Clone)]
pub struct DerivativeBoundCheck {
    pub j: usize,
    pub delta: f64,
    pub k_window: (f64, f64),
    pub min_derivative: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Verifies the slope bound for band `j` at half-width `delta` by sampling
/// `n_k` momenta across the window preimage.
pub fn check_derivative_lower_bound(
    profile: &FieldProfile,
    j: usize,
    delta: f64,
    n_k: usize,
    opts: &BandsOptions,
) -> Result<DerivativeBoundCheck> {
    ensure(profile.is_sharp(), || "slope bound is stated for the step profile".to_string())?;
    let window = energy_window(profile, j, delta)?;
    let (k_lo, k_hi) = window_preimage(profile, j, window, opts)?;
    let mut sweep = opts.clone();
    sweep.store_vectors = true;
    let table = compute_bands(profile, k_lo, k_hi, n_k.max(2), j, &sweep)?;
    let min_derivative = table.bands[j - 1]
        .omega_prime
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let bound = derivative_lower_bound(profile, j, delta)?;
    Ok(DerivativeBoundCheck {
        j,
        delta,
        k_window: (k_lo, k_hi),
        min_derivative,
        bound,
        pass: min_derivative >= bound,
    })
}

/// Result of comparing a smoothed profile's bands against the step bands.
#[derive(Debug, Clone)]
pub struct SmoothComparison {
    pub sup_beta_distance: f64,
    pub max_sqrt_gap: f64,
    pub allowance: f64,
    pub pass: bool,
    /// Largest `|omega_eps - omega|` per band across the sweep.
    pub max_abs_gap: Vec<f64>,
    /// Per-band cap `a (a + 2 sqrt((2j-1) r)) b_minus`, `a = (r-1) sqrt(b_minus) eps`.
    pub abs_bound: Vec<f64>,
    pub pass_abs: bool,
}

/// Band-`j` cap on `|omega_eps - omega|` for a ramp of half-width `eps`.
pub fn comparison_bound(sharp: &FieldProfile, j: usize, eps: f64) -> f64 {
    let (bm, r) = (sharp.b_minus(), sharp.ratio());
    let a = (r - 1.0) * bm.sqrt() * eps;
    a * (a + 2.0 * ((2.0 * j as f64 - 1.0) * r).sqrt()) * bm
}

/// Checks `|sqrt(omega^eps) - sqrt(omega)| <= sup |beta_eps - beta|`
/// band by band on shared momenta, with a discretization allowance.
pub fn compare_sharp_smooth(
    sharp: &FieldProfile,
    smooth: &FieldProfile,
    k_min: f64,
    k_max: f64,
    n_k: usize,
    j_max: usize,
    opts: &BandsOptions,
) -> Result<SmoothComparison> {
    let dist = smooth.beta_sup_distance(sharp)?;
    let sharp_table = compute_bands(sharp, k_min, k_max, n_k, j_max, opts)?;
    let smooth_table = compute_bands(smooth, k_min, k_max, n_k, j_max, opts)?;
    let h = sharp_table.grid.h.max(smooth_table.grid.h);
    let b = sharp.b_plus();
    let mut max_gap = 0.0f64;
    let mut allowance = 0.0f64;
    let mut max_abs_gap = vec![0.0f64; j_max];
    let mut abs_bound = vec![0.0f64; j_max];
    for j in 0..j_max {
        abs_bound[j] = comparison_bound(sharp, j + 1, smooth.epsilon());
        for ik in 0..n_k {
            let a = sharp_table.bands[j].omega[ik];
            let c = smooth_table.bands[j].omega[ik];
            max_gap = max_gap.max((a.sqrt() - c.sqrt()).abs());
            max_abs_gap[j] = max_abs_gap[j].max((a - c).abs());
            let slack = discretization_allowance(h, j + 1, b) / a.sqrt().max(1e-12);
            allowance = allowance.max(slack);
        }
    }
    let pass_abs = (0..j_max)
        .all(|j| max_abs_gap[j] <= abs_bound[j] + 2.0 * discretization_allowance(h, j + 1, b));
    Ok(SmoothComparison {
        sup_beta_distance: dist,
        max_sqrt_gap: max_gap,
        allowance,
        pass: max_gap <= dist + allowance,
        max_abs_gap,
        abs_bound,
        pass_abs,
    })
}

/// Slope-positivity findings for a ramp profile.
#[derive(Debug, Clone)]
pub struct SmoothPositivityReport {
    pub epsilon: f64,
    /// Momenta further from zero than `b_plus * eps` carry positive slope.
    pub min_outside: Vec<f64>,
    pub outside_pass: bool,
    /// Slope floor over the whole sweep, ramp zone included.
    pub min_everywhere: Vec<f64>,
    /// Ramp narrow enough (`eps < sqrt(2j-1) / (2 r sqrt(b_minus))`) that
    /// positive slope is claimed at every momentum.
    pub small_ramp: Vec<bool>,
    /// Every band with a narrow ramp has positive slope everywhere.
    pub everywhere_pass: bool,
}

/// Sweeps ramp-profile band slopes over the tails and through the ramp
/// zone, recording floors outside `|k| <= b_plus * eps` and overall.
pub fn check_smooth_positivity(
    profile: &FieldProfile,
    n_k: usize,
    j_max: usize,
    opts: &BandsOptions,
) -> Result<SmoothPositivityReport> {
    let eps = profile.epsilon();
    ensure(eps > 0.0, || "slope positivity sweep needs a ramp profile".to_string())?;
    let r = profile.ratio();
    let cut = profile.b_plus() * eps;
    let span = default_k_span(profile);
    let outer = compute_bands(profile, -span, span, n_k, j_max, opts)?;
    // The ramp zone can fall between outer nodes, so probe it separately.
    let inner_span = (1.5 * cut).max(6.0 * (2.0 * span) / (n_k - 1) as f64);
    let inner = compute_bands(profile, -inner_span, inner_span, 33, j_max, opts)?;

    let mut min_outside = vec![f64::INFINITY; j_max];
    let mut min_everywhere = vec![f64::INFINITY; j_max];
    for table in [&outer, &inner] {
        for (ik, &k) in table.k.iter().enumerate() {
            for j in 0..j_max {
                let d = table.bands[j].omega_prime[ik];
                min_everywhere[j] = min_everywhere[j].min(d);
                if k.abs() > cut {
                    min_outside[j] = min_outside[j].min(d);
                }
            }
        }
    }
    let small_ramp: Vec<bool> = (1..=j_max)
        .map(|j| eps < (2.0 * j as f64 - 1.0).sqrt() / (2.0 * r * profile.b_minus().sqrt()))
        .collect();
    let outside_pass = min_outside.iter().all(|&d| d > 0.0);
    let everywhere_pass =
        (0..j_max).all(|j| !small_ramp[j] || min_everywhere[j] > 0.0);
    Ok(SmoothPositivityReport {
        epsilon: eps,
        min_outside,
        outside_pass,
        min_everywhere,
        small_ramp,
        everywhere_pass,
    })
}

/// Strict-growth report along a sweep.
#[derive(Debug, Clone)]
pub struct MonotoneReport {
    pub strictly_increasing: bool,
    pub min_increment: f64,
}

/// Checks each band increases strictly between consecutive momenta.
pub fn check_monotone(table: &BandTable) -> MonotoneReport {
    let mut min_inc = f64::INFINITY;
    for band in &table.bands {
        for w in band.omega.windows(2) {
            min_inc = min_inc.min(w[1] - w[0]);
        }
    }
    MonotoneReport { strictly_increasing: min_inc > 0.0, min_increment: min_inc }
}

/// Writes the table as CSV: `k,band,omega,omega_prime,omega_prime_alt,profile`.
pub fn write_csv<W: Write>(table: &BandTable, w: &mut W) -> io::Result<()> {
    writeln!(w, "k,band,omega,omega_prime,omega_prime_alt,profile")?;
    let id = table.profile.id();
    for (ik, &k) in table.k.iter().enumerate() {
        for (j, band) in table.bands.iter().enumerate() {
            writeln!(
                w,
                "{:.12e},{},{:.12e},{:.12e},{:.12e},{}",
                k,
                j + 1,
                band.omega[ik],
                band.omega_prime[ik],
                band.omega_prime_alt[ik],
                id
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(res: f64) -> BandsOptions {
        BandsOptions { resolution: Some(res), ..BandsOptions::default() }
    }

    #[test]
    fn uniform_field_bands_are_flat_odd_multiples() {
        let p = FieldProfile::constant(1.5).unwrap();
        let t = compute_bands(&p, -2.0, 2.0, 9, 2, &opts(0.05)).unwrap();
        for (j, band) in t.bands.iter().enumerate() {
            let want = (2 * j + 1) as f64 * 1.5;
            for (ik, &om) in band.omega.iter().enumerate() {
                assert!((om - want).abs() < 5e-3, "band {} at k={}: {}", j + 1, t.k[ik], om);
                assert!(band.omega_prime[ik].abs() < 1e-8);
            }
        }
    }

    #[test]
    fn step_bands_are_sandwiched_and_monotone() {
        let p = FieldProfile::sharp(1.0, 2.0).unwrap();
        let span = default_k_span(&p);
        let o = opts(0.02);
        let t = compute_bands(&p, -span, span, 61, 3, &o).unwrap();
        for (j, band) in t.bands.iter().enumerate() {
            let n = (2 * j + 1) as f64;
            let tol = discretization_allowance(t.grid.h, j + 1, p.b_plus());
            for &om in &band.omega {
                assert!(om >= n * 1.0 - tol, "band {} below floor: {om}", j + 1);
                assert!(om <= n * 2.0 + tol, "band {} above ceiling: {om}", j + 1);
            }
        }
        let rep = check_monotone(&t);
        assert!(rep.strictly_increasing, "min increment {}", rep.min_increment);
        // Far tails sit near the flat limits.
        let tol = discretization_allowance(t.grid.h, 3, 2.0) + 2e-3;
        for (j, band) in t.bands.iter().enumerate() {
            let n = (2 * j + 1) as f64;
            assert!((band.omega[0] - n).abs() < tol, "left tail band {}: {}", j + 1, band.omega[0]);
            assert!(
                (band.omega[60] - 2.0 * n).abs() < tol,
                "right tail band {}: {}",
                j + 1,
                band.omega[60]
            );
        }
    }

    #[test]
    fn derivative_routes_agree_with_the_difference_oracle() {
        let p = FieldProfile::sharp(1.0, 1.5).unwrap();
        let o = opts(0.02);
        for &k in &[-0.6, 0.3, 1.1] {
            let (grid, pairs) = solve_at(&p, k, 2, &o).unwrap();
            for (j, pair) in pairs.iter().enumerate() {
                let fh = derivative_fh(&p, &grid, k, &pair.vector);
                let fd = derivative_fd(&p, k, j + 1, 0.04, &o).unwrap();
                assert!(
                    (fh - fd).abs() < 1e-5 + 1e-5 * fh.abs(),
                    "fh {fh} vs fd {fd} at k={k}, band {}",
                    j + 1
                );
                let wall =
                    derivative_boundary(&p, &grid, k, pair.value, &pair.vector).unwrap();
                let up = derivative_weighted_upper(&p, &grid, k, &pair.vector);
                let lo = derivative_weighted_lower(&p, &grid, k, &pair.vector);
                let tol = 40.0 * grid.h * grid.h * p.b_plus().powi(2);
                assert!((wall - fh).abs() < tol, "wall {wall} vs fh {fh} at k={k}");
                assert!((up - fh).abs() < tol, "upper {up} vs fh {fh} at k={k}");
                assert!((lo - fh).abs() < tol, "lower {lo} vs fh {fh} at k={k}");
            }
        }
    }

    #[test]
    fn smooth_profile_slopes_also_cross_check() {
        let p = FieldProfile::smooth_cubic(1.0, 1.8, 0.3).unwrap();
        let o = opts(0.02);
        let k = 0.5;
        let (grid, pairs) = solve_at(&p, k, 1, &o).unwrap();
        let fh = derivative_fh(&p, &grid, k, &pairs[0].vector);
        let fd = derivative_fd(&p, k, 1, 0.04, &o).unwrap();
        let up = derivative_weighted_upper(&p, &grid, k, &pairs[0].vector);
        let lo = derivative_weighted_lower(&p, &grid, k, &pairs[0].vector);
        assert!((fh - fd).abs() < 1e-5 + 1e-5 * fh.abs(), "fh {fh} vs fd {fd}");
        let tol = 40.0 * grid.h * grid.h * p.b_plus().powi(2);
        assert!((up - fh).abs() < tol, "upper {up} vs fh {fh}");
        assert!((lo - fh).abs() < tol, "lower {lo} vs fh {fh}");
    }

    #[test]
    fn admissible_counts_match_hand_values() {
        assert_eq!(admissible_band_count(1.5).unwrap(), 1);
        assert_eq!(admissible_band_count(3f64.sqrt()).unwrap(), 1);
        assert_eq!(admissible_band_count(1.1).unwrap(), 5);
        assert_eq!(admissible_band_count(2.0).unwrap(), 0);
        assert!(admissible_band_count(1.0).is_err());
        assert!(admissible_band_count(0.5).is_err());
    }

    #[test]
    fn windows_validate_their_half_width() {
        let p = FieldProfile::sharp(1.0, 1.5).unwrap();
        // delta_max(1, 1.5) = 0.2
        assert!((delta_max(1, 1.5) - 0.2).abs() < 1e-15);
        let (lo, hi) = energy_window(&p, 1, 0.1).unwrap();
        assert!((lo - 1.1).abs() < 1e-15);
        assert!((hi - 1.35).abs() < 1e-15);
        assert!(energy_window(&p, 1, 0.2).is_err());
        assert!(energy_window(&p, 1, 0.0).is_err());
        let (lo2, hi2) = energy_window(&p, 2, 0.1).unwrap();
        assert!(lo2 > hi && hi2 > lo2);
    }

    #[test]
    fn preimage_edges_hit_the_window_boundaries() {
        let p = FieldProfile::sharp(1.0, 1.5).unwrap();
        let o = opts(0.02);
        let window = energy_window(&p, 1, 0.1).unwrap();
        let (k_lo, k_hi) = window_preimage(&p, 1, window, &o).unwrap();
        assert!(k_lo < k_hi);
        let grid = select_domain_with_step(&p, k_lo, k_hi, 1, 8.0, 0.02).unwrap();
        let at_lo = omega_on_grid(&p, &grid, k_lo, 1).unwrap()[0];
        let at_hi = omega_on_grid(&p, &grid, k_hi, 1).unwrap()[0];
        assert!((at_lo - window.0).abs() < 1e-5, "{at_lo} vs {}", window.0);
        assert!((at_hi - window.1).abs() < 1e-5, "{at_hi} vs {}", window.1);
    }

    #[test]
    fn slope_bound_holds_inside_the_window() {
        let p = FieldProfile::sharp(1.0, 1.5).unwrap();
        let chk = check_derivative_lower_bound(&p, 1, 0.1, 9, &opts(0.02)).unwrap();
        assert!(chk.pass, "min slope {} vs bound {}", chk.min_derivative, chk.bound);
        // The guaranteed constant is far from sharp; the observed slope
        // should clear it by a wide factor.
        assert!(chk.min_derivative > 10.0 * chk.bound);
    }

    #[test]
    fn smoothing_moves_bands_by_less_than_the_profile_distance() {
        let sharp = FieldProfile::sharp(1.0, 2.0).unwrap();
        let smooth = FieldProfile::smooth_linear(1.0, 2.0, 0.1).unwrap();
        let cmp =
            compare_sharp_smooth(&sharp, &smooth, -2.0, 2.0, 9, 2, &opts(0.02)).unwrap();
        assert!(cmp.pass, "gap {} vs dist {}", cmp.max_sqrt_gap, cmp.sup_beta_distance);
        assert!(cmp.sup_beta_distance > 0.0);
        // Tighter ramps track the step more closely.
        let tighter = FieldProfile::smooth_linear(1.0, 2.0, 0.02).unwrap();
        let cmp2 =
            compare_sharp_smooth(&sharp, &tighter, -2.0, 2.0, 9, 2, &opts(0.02)).unwrap();
        assert!(cmp2.max_sqrt_gap < cmp.max_sqrt_gap + 1e-6);
        // Absolute gaps stay well under the per-band caps.
        assert!(cmp.pass_abs);
        for j in 0..2 {
            assert!(cmp.max_abs_gap[j] < 0.5 * cmp.abs_bound[j]);
        }
        let by_hand = 0.1 * (0.1 + 2.0 * 2.0f64.sqrt());
        assert!((comparison_bound(&sharp, 1, 0.1) - by_hand).abs() < 1e-15);
    }

    #[test]
    fn ramp_slopes_stay_positive_where_claimed() {
        let smooth = FieldProfile::smooth_cubic(1.0, 1.5, 0.1).unwrap();
        let rep = check_smooth_positivity(&smooth, 41, 2, &opts(0.02)).unwrap();
        assert!(rep.outside_pass, "floors {:?}", rep.min_outside);
        // eps = 0.1 < 1 / (2 * 1.5) = 0.333, so every band is in the
        // narrow-ramp regime here.
        assert!(rep.small_ramp.iter().all(|&s| s));
        assert!(rep.everywhere_pass, "floors {:?}", rep.min_everywhere);
        let wide = FieldProfile::smooth_cubic(1.0, 1.5, 0.4).unwrap();
        let rep2 = check_smooth_positivity(&wide, 41, 1, &opts(0.02)).unwrap();
        assert!(!rep2.small_ramp[0]);
        assert!(rep2.outside_pass);
        let flat = FieldProfile::constant(1.0).unwrap();
        assert!(check_smooth_positivity(&flat, 9, 1, &opts(0.05)).is_err());
    }

    #[test]
    fn csv_output_is_deterministic() {
        let p = FieldProfile::sharp(1.0, 2.0).unwrap();
        let t = compute_bands(&p, -1.0, 1.0, 5, 2, &opts(0.05)).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&t, &mut a).unwrap();
        let t2 = compute_bands(&p, -1.0, 1.0, 5, 2, &opts(0.05)).unwrap();
        write_csv(&t2, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("k,band,omega,omega_prime,omega_prime_alt,profile\n"));
        assert_eq!(text.lines().count(), 1 + 5 * 2);
    }

    #[test]
    fn rejects_degenerate_sweeps() {
        let p = FieldProfile::sharp(1.0, 2.0).unwrap();
        assert!(compute_bands(&p, 1.0, -1.0, 5, 1, &opts(0.05)).is_err());
        assert!(compute_bands(&p, -1.0, 1.0, 1, 1, &opts(0.05)).is_err());
        assert!(compute_bands(&p, -1.0, 1.0, 5, 0, &opts(0.05)).is_err());
    }
}
