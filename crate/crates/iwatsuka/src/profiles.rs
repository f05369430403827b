//! Magnetic field profiles and the gauge function `beta`.
//!
//! A profile is a bounded monotone field `b(x)` with `b = b_minus` to the
//! left of a transition zone `[-epsilon, epsilon]` and `b = b_plus` to the
//! right.  The gauge function `beta(x) = int_0^x b(s) ds` is stored in
//! closed form as a piecewise polynomial, so evaluation never quadratures.
//! `beta` is strictly increasing, hence globally invertible; the inverse is
//! closed-form outside the transition zone and safeguarded Newton inside.

use serde::{Deserialize, Serialize};

use crate::{ensure, Result};

/// Transverse magnetic field profile depending on `x` only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldProfile {
    /// Uniform field; the translation-invariant reference case.
    Constant { b: f64 },
    /// Jump from `b_minus` to `b_plus` at `x = 0`.
    Sharp { b_minus: f64, b_plus: f64 },
    /// Linear ramp across `[-epsilon, epsilon]`; continuous, kinked ends.
    SmoothLinear { b_minus: f64, b_plus: f64, epsilon: f64 },
    /// Cubic smoothstep ramp across `[-epsilon, epsilon]`; C^1 everywhere.
    SmoothCubic { b_minus: f64, b_plus: f64, epsilon: f64 },
}

impl FieldProfile {
    pub fn constant(b: f64) -> Result<Self> {
        let p = FieldProfile::Constant { b };
        p.validate()?;
        Ok(p)
    }

    pub fn sharp(b_minus: f64, b_plus: f64) -> Result<Self> {
        let p = FieldProfile::Sharp { b_minus, b_plus };
        p.validate()?;
        Ok(p)
    }

    pub fn smooth_linear(b_minus: f64, b_plus: f64, epsilon: f64) -> Result<Self> {
        let p = FieldProfile::SmoothLinear { b_minus, b_plus, epsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn smooth_cubic(b_minus: f64, b_plus: f64, epsilon: f64) -> Result<Self> {
        let p = FieldProfile::SmoothCubic { b_minus, b_plus, epsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (bm, bp) = (self.b_minus(), self.b_plus());
        ensure(bm.is_finite() && bp.is_finite() && bm > 0.0, || {
            format!("field bounds must be finite and positive, got ({bm}, {bp})")
        })?;
        ensure(bm <= bp, || {
            format!("field must not decrease across the wall: b_minus {bm} > b_plus {bp}")
        })?;
        match *self {
            FieldProfile::SmoothLinear { epsilon, .. } | FieldProfile::SmoothCubic { epsilon, .. } => {
                ensure(epsilon.is_finite() && epsilon > 0.0, || {
                    format!("transition half-width must be positive, got {epsilon}")
                })
            }
            _ => Ok(()),
        }
    }

    pub fn b_minus(&self) -> f64 {
        match *self {
            FieldProfile::Constant { b } => b,
            FieldProfile::Sharp { b_minus, .. }
            | FieldProfile::SmoothLinear { b_minus, .. }
            | FieldProfile::SmoothCubic { b_minus, .. } => b_minus,
        }
    }

    pub fn b_plus(&self) -> f64 {
        match *self {
            FieldProfile::Constant { b } => b,
            FieldProfile::Sharp { b_plus, .. }
            | FieldProfile::SmoothLinear { b_plus, .. }
            | FieldProfile::SmoothCubic { b_plus, .. } => b_plus,
        }
    }

    /// Field ratio `r = b_plus / b_minus >= 1`.
    pub fn ratio(&self) -> f64 {
        self.b_plus() / self.b_minus()
    }

    /// Transition half-width; zero for the sharp and constant cases.
    pub fn epsilon(&self) -> f64 {
        match *self {
            FieldProfile::SmoothLinear { epsilon, .. } | FieldProfile::SmoothCubic { epsilon, .. } => epsilon,
            _ => 0.0,
        }
    }

    pub fn is_sharp(&self) -> bool {
        matches!(self, FieldProfile::Sharp { .. })
    }

    /// A short stable identifier used in CSV output.
    pub fn id(&self) -> String {
        match *self {
            FieldProfile::Constant { b } => format!("constant({b})"),
            FieldProfile::Sharp { b_minus, b_plus } => format!("sharp({b_minus},{b_plus})"),
            FieldProfile::SmoothLinear { b_minus, b_plus, epsilon } => {
                format!("smooth_linear({b_minus},{b_plus},{epsilon})")
            }
            FieldProfile::SmoothCubic { b_minus, b_plus, epsilon } => {
                format!("smooth_cubic({b_minus},{b_plus},{epsilon})")
            }
        }
    }

    /// Field strength at `x`.  Always inside `[b_minus, b_plus]`; at the
    /// sharp wall itself we return the midpoint, matching the ramp limits.
    pub fn field_at(&self, x: f64) -> f64 {
        match *self {
            FieldProfile::Constant { b } => b,
            FieldProfile::Sharp { b_minus, b_plus } => {
                if x < 0.0 {
                    b_minus
                } else if x > 0.0 {
                    b_plus
                } else {
                    0.5 * (b_minus + b_plus)
                }
            }
            FieldProfile::SmoothLinear { b_minus, b_plus, epsilon } => {
                if x <= -epsilon {
                    b_minus
                } else if x >= epsilon {
                    b_plus
                } else {
                    b_minus + (b_plus - b_minus) * (x + epsilon) / (2.0 * epsilon)
                }
            }
            FieldProfile::SmoothCubic { b_minus, b_plus, epsilon } => {
                if x <= -epsilon {
                    b_minus
                } else if x >= epsilon {
                    b_plus
                } else {
                    let t = (x + epsilon) / (2.0 * epsilon);
                    b_minus + (b_plus - b_minus) * t * t * (3.0 - 2.0 * t)
                }
            }
        }
    }

    /// Gauge function `beta(x) = int_0^x b`, in closed form.
    pub fn beta_at(&self, x: f64) -> f64 {
        match *self {
            FieldProfile::Constant { b } => b * x,
            FieldProfile::Sharp { b_minus, b_plus } => {
                if x <= 0.0 {
                    b_minus * x
                } else {
                    b_plus * x
                }
            }
            FieldProfile::SmoothLinear { b_minus, b_plus, epsilon } => {
                let c = b_plus - b_minus;
                if x < -epsilon {
                    // beta(-eps) = -bm*eps - c*eps/4, slope b_minus beyond.
                    -b_minus * epsilon - 0.25 * c * epsilon + b_minus * (x + epsilon)
                } else if x > epsilon {
                    // beta(+eps) = bm*eps + 3c*eps/4, slope b_plus beyond.
                    b_minus * epsilon + 0.75 * c * epsilon + b_plus * (x - epsilon)
                } else {
                    let u = x + epsilon;
                    b_minus * x + c * (u * u / (4.0 * epsilon) - 0.25 * epsilon)
                }
            }
            FieldProfile::SmoothCubic { b_minus, b_plus, epsilon } => {
                let c = b_plus - b_minus;
                if x < -epsilon {
                    -b_minus * epsilon - 3.0 / 16.0 * c * epsilon + b_minus * (x + epsilon)
                } else if x > epsilon {
                    b_minus * epsilon + 13.0 / 16.0 * c * epsilon + b_plus * (x - epsilon)
                } else {
                    // primitive of the smoothstep: t^3 - t^4/2, t = (x+eps)/(2 eps)
                    let t = (x + epsilon) / (2.0 * epsilon);
                    let s = t * t * t * (1.0 - 0.5 * t);
                    b_minus * x + 2.0 * epsilon * c * (s - 3.0 / 32.0)
                }
            }
        }
    }

    /// Inverse of `beta`.  Satisfies `beta(beta_inverse(k)) = k` to
    /// `1e-12 * max(1, |k|)` absolute.
    pub fn beta_inverse(&self, k: f64) -> f64 {
        match *self {
            FieldProfile::Constant { b } => k / b,
            FieldProfile::Sharp { b_minus, b_plus } => {
                if k <= 0.0 {
                    k / b_minus
                } else {
                    k / b_plus
                }
            }
            FieldProfile::SmoothLinear { b_minus, b_plus, epsilon }
            | FieldProfile::SmoothCubic { b_minus, b_plus, epsilon } => {
                let lo = self.beta_at(-epsilon);
                let hi = self.beta_at(epsilon);
                if k <= lo {
                    -epsilon + (k - lo) / b_minus
                } else if k >= hi {
                    epsilon + (k - hi) / b_plus
                } else {
                    self.invert_in_ramp(k, epsilon)
                }
            }
        }
    }

    /// Newton with bisection fallback on the ramp; `beta' = b >= b_minus > 0`
    /// keeps Newton well conditioned, bisection guards the bracket.
    fn invert_in_ramp(&self, k: f64, epsilon: f64) -> f64 {
        let tol = 1e-13 * k.abs().max(1.0);
        let (mut lo, mut hi) = (-epsilon, epsilon);
        let mut x = k / self.field_at(0.0);
        if !(lo..=hi).contains(&x) {
            x = 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let f = self.beta_at(x) - k;
            if f.abs() <= tol {
                return x;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let step = f / self.field_at(x);
            let next = x - step;
            x = if (lo..=hi).contains(&next) { next } else { 0.5 * (lo + hi) };
        }
        x
    }

    /// `sup_x |beta_self(x) - beta_sharp(x)|` against the sharp profile with
    /// the same field bounds.  The difference is constant outside the ramp,
    /// so the supremum is attained on `[-epsilon, epsilon]`, which we sample
    /// densely together with both plateau values.
    pub fn beta_sup_distance(&self, sharp: &FieldProfile) -> Result<f64> {
        ensure(sharp.is_sharp(), || {
            format!("distance reference must be a sharp profile, got {}", sharp.id())
        })?;
        ensure(
            self.b_minus() == sharp.b_minus() && self.b_plus() == sharp.b_plus(),
            || {
                format!(
                    "field bounds mismatch: ({}, {}) vs ({}, {})",
                    self.b_minus(),
                    self.b_plus(),
                    sharp.b_minus(),
                    sharp.b_plus()
                )
            },
        )?;
        let eps = self.epsilon();
        if eps == 0.0 {
            return Ok(0.0);
        }
        let n = 4096;
        let mut sup: f64 = 0.0;
        for i in 0..=n {
            let x = -eps + 2.0 * eps * i as f64 / n as f64;
            sup = sup.max((self.beta_at(x) - sharp.beta_at(x)).abs());
        }
        // Plateau offsets left/right of the ramp.
        sup = sup.max((self.beta_at(-2.0 * eps) - sharp.beta_at(-2.0 * eps)).abs());
        sup = sup.max((self.beta_at(2.0 * eps) - sharp.beta_at(2.0 * eps)).abs());
        Ok(sup)
    }
}

/// A compactly supported C^1 bump `amp * cos^2(pi s / 2)` on the ellipse
/// `s < 1`, `s^2 = ((x-x0)/wx)^2 + ((y-y0)/wy)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump2d {
    pub amplitude: f64,
    pub x0: f64,
    pub y0: f64,
    pub half_width_x: f64,
    pub half_width_y: f64,
}

impl Bump2d {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let sx = (x - self.x0) / self.half_width_x;
        let sy = (y - self.y0) / self.half_width_y;
        let s2 = sx * sx + sy * sy;
        if s2 >= 1.0 {
            return 0.0;
        }
        let c = (std::f64::consts::FRAC_PI_2 * s2.sqrt()).cos();
        self.amplitude * c * c
    }

    /// Supremum norm; attained at the center.
    pub fn sup_norm(&self) -> f64 {
        self.amplitude.abs()
    }

    /// Upper bound on `sup |grad|`: the radial slope maximizes at s = 1/2
    /// where |d/ds cos^2| = pi/2, and |grad s| <= 1/min(wx, wy).
    pub fn grad_norm_bound(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 * self.amplitude.abs()
            / self.half_width_x.min(self.half_width_y)
    }

    /// Smallest R with support inside |y| < R.
    pub fn y_support_halfwidth(&self) -> f64 {
        self.y0.abs() + self.half_width_y
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.amplitude.is_finite()
                && self.half_width_x > 0.0
                && self.half_width_y > 0.0
                && self.x0.is_finite()
                && self.y0.is_finite(),
            || "bump requires finite amplitude/center and positive widths".to_string(),
        )
    }
}

/// Electromagnetic perturbation on top of the profile gauge: a vector
/// potential correction `(a1, a2)` and an electric potential `q`, all
/// compactly supported bumps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<Bump2d>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<Bump2d>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Bump2d>,
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        for b in [self.a1, self.a2, self.q].into_iter().flatten() {
            b.validate()?;
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.a1.is_none() && self.a2.is_none() && self.q.is_none()
    }

    pub fn a1_at(&self, x: f64, y: f64) -> f64 {
        self.a1.map_or(0.0, |b| b.value(x, y))
    }

    pub fn a2_at(&self, x: f64, y: f64) -> f64 {
        self.a2.map_or(0.0, |b| b.value(x, y))
    }

    pub fn q_at(&self, x: f64, y: f64) -> f64 {
        self.q.map_or(0.0, |b| b.value(x, y))
    }

    /// Sup norm of the vector part, `sqrt(a1^2 + a2^2)` bounded entrywise.
    pub fn a_sup_norm(&self) -> f64 {
        let a1 = self.a1.map_or(0.0, |b| b.sup_norm());
        let a2 = self.a2.map_or(0.0, |b| b.sup_norm());
        (a1 * a1 + a2 * a2).sqrt()
    }

    /// Bound on `sup |grad a|` combining both components.
    pub fn a_grad_norm(&self) -> f64 {
        let a1 = self.a1.map_or(0.0, |b| b.grad_norm_bound());
        let a2 = self.a2.map_or(0.0, |b| b.grad_norm_bound());
        a1.max(a2)
    }

    pub fn q_sup_norm(&self) -> f64 {
        self.q.map_or(0.0, |b| b.sup_norm())
    }

    /// Smallest R with all supports inside |y| < R.
    pub fn y_support_halfwidth(&self) -> f64 {
        [self.a1, self.a2, self.q]
            .into_iter()
            .flatten()
            .map(|b| b.y_support_halfwidth())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_panels;

    fn profiles() -> Vec<FieldProfile> {
        vec![
            FieldProfile::constant(1.0).unwrap(),
            FieldProfile::sharp(1.0, 1.5).unwrap(),
            FieldProfile::sharp(1.0, 2.0).unwrap(),
            FieldProfile::smooth_linear(1.0, 2.0, 0.1).unwrap(),
            FieldProfile::smooth_cubic(1.0, 2.0, 0.05).unwrap(),
            FieldProfile::smooth_cubic(4.0, 6.0, 0.25).unwrap(),
        ]
    }

    #[test]
    fn field_stays_within_bounds_and_is_monotone() {
        for p in profiles() {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=2000 {
                let x = -3.0 + 6.0 * i as f64 / 2000.0;
                let b = p.field_at(x);
                assert!(b >= p.b_minus() - 1e-14 && b <= p.b_plus() + 1e-14, "{}", p.id());
                assert!(b >= prev - 1e-12, "field must be non-decreasing: {}", p.id());
                prev = b;
            }
        }
    }

    #[test]
    fn beta_matches_quadrature_of_field() {
        // Oracle: numerically integrate the field and compare the closed form.
        for p in profiles() {
            for &x in &[-2.0, -0.3, -0.07, 0.0, 0.04, 0.11, 0.9, 3.0] {
                let (a, b) = if x < 0.0 { (x, 0.0) } else { (0.0, x) };
                // Split at the ramp edges so no panel straddles a kink.
                let mut cuts = vec![a, b];
                for edge in [-p.epsilon(), p.epsilon()] {
                    if edge > a && edge < b {
                        cuts.push(edge);
                    }
                }
                cuts.sort_by(|u, v| u.partial_cmp(v).unwrap());
                let quad: f64 = cuts
                    .windows(2)
                    .map(|w| integrate_panels(|s| p.field_at(s), w[0], w[1], 0.01, 16))
                    .sum();
                let quad = if x < 0.0 { -quad } else { quad };
                assert!(
                    (p.beta_at(x) - quad).abs() < 1e-10 * (1.0 + quad.abs()),
                    "{} at x={x}: closed {} vs quad {}",
                    p.id(),
                    p.beta_at(x),
                    quad
                );
            }
        }
    }

    #[test]
    fn beta_values_on_the_linear_ramp() {
        let p = FieldProfile::smooth_linear(1.0, 2.0, 0.1).unwrap();
        // Trapezoid of the ramp from 0 to 0.1: mean field 1.75 over width 0.1.
        assert!((p.beta_at(0.1) - 0.175).abs() < 1e-14);
        assert!((p.beta_at(0.0) - 0.0).abs() < 1e-15);
        assert!((p.beta_at(-0.1) + 0.125).abs() < 1e-14);
        // Continuity at the ramp ends.
        for &x in &[-0.1, 0.1] {
            let inside = p.beta_at(x);
            let outside = p.beta_at(x + x.signum() * 1e-12);
            assert!((inside - outside).abs() < 1e-11);
        }
    }

    #[test]
    fn beta_inverse_round_trips() {
        for p in profiles() {
            for i in 0..=400 {
                let k = -20.0 + 40.0 * i as f64 / 400.0;
                let x = p.beta_inverse(k);
                assert!(
                    (p.beta_at(x) - k).abs() <= 1e-12 * k.abs().max(1.0),
                    "{} at k={k}",
                    p.id()
                );
            }
        }
    }

    #[test]
    fn beta_inverse_sharp_values() {
        let p = FieldProfile::sharp(1.0, 2.0).unwrap();
        assert_eq!(p.beta_inverse(4.0), 2.0);
        assert_eq!(p.beta_inverse(-3.0), -3.0);
    }

    #[test]
    fn sup_distance_linear_ramp() {
        let sharp = FieldProfile::sharp(1.0, 2.0).unwrap();
        let lin = FieldProfile::smooth_linear(1.0, 2.0, 0.1).unwrap();
        // |beta_lin - beta_sharp| peaks at the ramp ends with value c*eps/4.
        let d = lin.beta_sup_distance(&sharp).unwrap();
        assert!((d - 0.025).abs() < 1e-10);
        // Well inside the coarse bound (r - 1) * b_minus * eps.
        assert!(d <= (lin.ratio() - 1.0) * lin.b_minus() * lin.epsilon() + 1e-15);
    }

    #[test]
    fn sup_distance_cubic_ramp() {
        let sharp = FieldProfile::sharp(1.0, 2.0).unwrap();
        let cub = FieldProfile::smooth_cubic(1.0, 2.0, 0.05).unwrap();
        let d = cub.beta_sup_distance(&sharp).unwrap();
        // Peaks at the ramp ends with value 3*c*eps/16.
        assert!((d - 3.0 * 0.05 / 16.0).abs() < 1e-9);
        assert!(d <= (cub.ratio() - 1.0) * cub.b_minus() * cub.epsilon() + 1e-15);
    }

    #[test]
    fn sup_distance_rejects_mismatched_bounds() {
        let sharp = FieldProfile::sharp(1.0, 1.5).unwrap();
        let lin = FieldProfile::smooth_linear(1.0, 2.0, 0.1).unwrap();
        assert!(lin.beta_sup_distance(&sharp).is_err());
        assert!(lin.beta_sup_distance(&lin).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(FieldProfile::sharp(2.0, 1.0).is_err());
        assert!(FieldProfile::sharp(0.0, 1.0).is_err());
        assert!(FieldProfile::sharp(-1.0, 1.0).is_err());
        assert!(FieldProfile::smooth_linear(1.0, 2.0, 0.0).is_err());
        assert!(FieldProfile::sharp(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn cubic_ramp_is_c1_at_the_ends() {
        let p = FieldProfile::smooth_cubic(1.0, 2.0, 0.1).unwrap();
        for &x in &[-0.1f64, 0.1] {
            let h = 1e-6;
            let left = (p.beta_at(x) - p.beta_at(x - h)) / h;
            let right = (p.beta_at(x + h) - p.beta_at(x)) / h;
            // Slopes agree because the field is continuous with zero ramp slope.
            assert!((left - right).abs() < 1e-5);
        }
    }

    #[test]
    fn serde_round_trip() {
        for p in profiles() {
            let s = serde_json::to_string(&p).unwrap();
            let q: FieldProfile = serde_json::from_str(&s).unwrap();
            assert_eq!(p, q);
        }
    }

    #[test]
    fn bump_norms_bound_samples() {
        let b = Bump2d { amplitude: 0.3, x0: 0.5, y0: -1.0, half_width_x: 0.7, half_width_y: 1.3 };
        let mut max_v: f64 = 0.0;
        let mut max_g: f64 = 0.0;
        let n = 160;
        for i in 0..=n {
            for j in 0..=n {
                let x = b.x0 - 1.0 + 2.0 * i as f64 / n as f64;
                let y = b.y0 - 2.0 + 4.0 * j as f64 / n as f64;
                max_v = max_v.max(b.value(x, y).abs());
                let h = 1e-6;
                let gx = (b.value(x + h, y) - b.value(x - h, y)) / (2.0 * h);
                let gy = (b.value(x, y + h) - b.value(x, y - h)) / (2.0 * h);
                max_g = max_g.max((gx * gx + gy * gy).sqrt());
            }
        }
        assert!(max_v <= b.sup_norm() + 1e-12);
        assert!(max_g <= b.grad_norm_bound() + 1e-6);
        assert!(b.value(b.x0, b.y0 + b.half_width_y + 1e-12) == 0.0);
    }
}
