//! Fiber grids and the discretized transverse operator.
//!
//! For fixed longitudinal momentum `k` the transverse problem is
//! `h(k) = -d^2/dx^2 + (k - beta(x))^2` on a line segment wide enough that
//! Dirichlet walls are invisible: the potential confines states near the
//! guiding center `beta^{-1}(k)` and near the wall `x = 0`, so the segment
//! is the hull of both, padded by `margin_widths` oscillator lengths of the
//! weakest field at the highest requested level.
//!
//! Grids always place a node exactly at `x = 0` (the pointwise derivative
//! formulas sample the wall) and use the standard three-point Laplacian,
//! which keeps the operator symmetric tridiagonal.

use crate::profiles::FieldProfile;
use crate::{ensure, Result};

/// Uniform grid `x_i = x_min + i h`, `i = 0..n`, with a node at `x = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberGrid {
    pub x_min: f64,
    pub h: f64,
    pub n: usize,
    /// Index of the node at `x = 0`.
    pub zero_index: usize,
}

impl FiberGrid {
    /// Builds the grid covering `[lo, hi]` with step at most `h_target`,
    /// extended so both endpoints land on the lattice through zero.
    pub fn covering(lo: f64, hi: f64, h_target: f64) -> Result<Self> {
        ensure(lo < 0.0 && hi > 0.0 && h_target > 0.0, || {
            format!("grid must straddle the wall: [{lo}, {hi}] step {h_target}")
        })?;
        let mut n_left = (-lo / h_target).ceil() as usize;
        let mut n_right = (hi / h_target).ceil() as usize;
        // Keep at least 64 nodes even for degenerate spans.
        while n_left + n_right + 1 < 64 {
            n_left += 8;
            n_right += 8;
        }
        Ok(FiberGrid {
            x_min: -(n_left as f64) * h_target,
            h: h_target,
            n: n_left + n_right + 1,
            zero_index: n_left,
        })
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + self.h * i as f64
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }

    /// Discrete L2 inner product `h * sum u v`.
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Default step: five nodes per oscillator length of the stronger field.
pub fn default_step(profile: &FieldProfile) -> f64 {
    0.2 / profile.b_plus().sqrt()
}

/// Picks the transverse domain for momentum `k` and levels up to `j_max`.
pub fn select_domain(profile: &FieldProfile, k: f64, j_max: usize, margin_widths: f64) -> Result<FiberGrid> {
    select_domain_with_step(profile, k, k, j_max, margin_widths, default_step(profile))
}

/// Domain covering a whole momentum range on one common grid; `beta` is
/// monotone, so the hull of the endpoint domains covers every `k` between.
pub fn select_domain_with_step(
    profile: &FieldProfile,
    k_min: f64,
    k_max: f64,
    j_max: usize,
    margin_widths: f64,
    h_target: f64,
) -> Result<FiberGrid> {
    profile.validate()?;
    ensure(j_max >= 1, || format!("need at least one level, got j_max = {j_max}"))?;
    ensure(margin_widths >= 6.0, || {
        format!("margin must be at least 6 oscillator widths, got {margin_widths}")
    })?;
    ensure(k_min <= k_max, || format!("bad momentum range [{k_min}, {k_max}]"))?;
    let w = margin_widths * ((2.0 * j_max as f64 + 1.0) / profile.b_minus()).sqrt();
    let lo = (profile.beta_inverse(k_min) - w).min(-w);
    let hi = (profile.beta_inverse(k_max) + w).max(w);
    let h = h_target.min(default_step(profile));
    FiberGrid::covering(lo, hi, h)
}

/// Symmetric tridiagonal operator with Dirichlet ends.
#[derive(Debug, Clone)]
pub struct TridiagonalOperator {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl TridiagonalOperator {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len());
        TridiagonalOperator { diag, off }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Row-sum norm.
    pub fn norm_inf(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
                let right = if i + 1 < n { self.off[i].abs() } else { 0.0 };
                self.diag[i].abs() + left + right
            })
            .fold(0.0, f64::max)
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.n();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        (lo, hi)
    }

    /// `y = T v`.
    pub fn apply(&self, v: &[f64], y: &mut [f64]) {
        let n = self.n();
        assert!(v.len() == n && y.len() == n);
        for i in 0..n {
            let mut s = self.diag[i] * v[i];
            if i > 0 {
                s += self.off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * v[i + 1];
            }
            y[i] = s;
        }
    }
}

/// Potential of the fiber operator at momentum `k`.
#[inline]
pub fn potential(profile: &FieldProfile, k: f64, x: f64) -> f64 {
    let d = k - profile.beta_at(x);
    d * d
}

/// Discretizes `h(k)` on `grid`: `2/h^2 + V` on the diagonal, `-1/h^2` off.
pub fn build_fiber_operator(profile: &FieldProfile, grid: &FiberGrid, k: f64) -> TridiagonalOperator {
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let diag = (0..grid.n)
        .map(|i| 2.0 * inv_h2 + potential(profile, k, grid.x(i)))
        .collect();
    let off = vec![-inv_h2; grid.n - 1];
    TridiagonalOperator::new(diag, off)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_covers_wall_and_guiding_center() {
        let p = FieldProfile::sharp(1.0, 2.0).unwrap();
        let g = select_domain(&p, 0.0, 1, 8.0).unwrap();
        let w = 8.0 * 3.0f64.sqrt();
        assert!(g.x_min <= -w && g.x_max() >= w);
        assert_eq!(g.x(g.zero_index), 0.0);
        assert!(g.h <= 0.2 / 2.0f64.sqrt() + 1e-15);
        assert!(g.n >= 64);

        let g = select_domain(&p, -4.0, 3, 6.0).unwrap();
        let w = 6.0 * 7.0f64.sqrt();
        // Guiding center beta^{-1}(-4) = -4 padded by w on the left.
        assert!(g.x_min <= -4.0 - w && g.x_max() >= w);
    }

    #[test]
    fn domain_rejects_bad_margins() {
        let p = FieldProfile::sharp(1.0, 2.0).unwrap();
        assert!(select_domain(&p, 0.0, 0, 8.0).is_err());
        assert!(select_domain(&p, 0.0, 1, 4.0).is_err());
    }

    #[test]
    fn operator_shape_and_norm() {
        let p = FieldProfile::sharp(1.0, 1.5).unwrap();
        let g = select_domain(&p, 0.3, 2, 8.0).unwrap();
        let t = build_fiber_operator(&p, &g, 0.3);
        assert_eq!(t.n(), g.n);
        let inv_h2 = 1.0 / (g.h * g.h);
        // Row-sum norm is bounded by 4/h^2 + max V and reached near max V.
        let vmax = g.nodes().map(|x| potential(&p, 0.3, x)).fold(0.0, f64::max);
        assert!(t.norm_inf() <= 4.0 * inv_h2 + vmax + 1e-9);
        assert!(t.norm_inf() >= vmax);
        // Discs are centered at 2/h^2 + V with radius at most 2/h^2, so the
        // interval stays nonnegative and reaches past the potential ceiling.
        let (lo, hi) = t.gershgorin();
        assert!(lo >= 0.0 && hi >= vmax && lo < hi);
    }

    #[test]
    fn potential_is_squeezed_between_pure_landau_wells() {
        // For the sharp step: with k <= 0,
        //   (k - bm x)^2 <= V(x, k) <= (k r - bm r x)^2 = r^2 (k - bm x)^2,
        // i.e. the fiber potential sits between the uniform-field well at k
        // and the scaled one at k * r.  Mirrored inequality for k >= 0.
        let p = FieldProfile::sharp(1.0, 1.7).unwrap();
        let r = p.ratio();
        for ik in 0..=40 {
            let k = -6.0 + 12.0 * ik as f64 / 40.0;
            for ix in 0..=200 {
                let x = -8.0 + 16.0 * ix as f64 / 200.0;
                let v = potential(&p, k, x);
                let vm = |kk: f64| (kk - p.b_minus() * x).powi(2);
                let vp = |kk: f64| (kk - p.b_plus() * x).powi(2);
                if k <= 0.0 {
                    assert!(vm(k) <= v + 1e-12);
                    assert!(v <= vp(k * r) + 1e-12, "k={k} x={x}");
                } else {
                    assert!(vm(k / r) <= v + 1e-12, "k={k} x={x}");
                    assert!(v <= vp(k) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn grid_step_divides_zero_offset() {
        let p = FieldProfile::sharp(1.0, 2.0).unwrap();
        let g = select_domain(&p, -7.3, 2, 8.0).unwrap();
        let z = g.x(g.zero_index);
        assert_eq!(z, 0.0);
        // x_min is an exact multiple of h.
        assert!((g.x_min / g.h - (g.x_min / g.h).round()).abs() < 1e-12);
    }
}
