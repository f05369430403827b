//! Closed-form admissibility budgets for the edge-current floors.
//!
//! The trust window `((2j-1+delta) b_minus, (2j-1-delta) b_plus)` of band
//! `j` carries a certified current floor `c_j delta^3 (r-1)/r^3
//! sqrt(b_minus)` (see [`crate::bands::derivative_lower_bound`]).  This
//! module prices how much of that floor survives perturbation:
//!
//! 1. smoothing the field step over a ramp of half-width `eps` keeps half
//!    the floor on a sub-window, provided the dimensionless ramp amplitude
//!    `(r-1) sqrt(b_minus) eps` stays under a budget,
//! 2. adding a bounded gauge field `a` and scalar potential `q` on top of
//!    the smoothed model keeps a quarter of the floor on a further
//!    sub-window, provided `(|a|^2 + |grad a|)_sup^(1/2) / sqrt(b_minus)`
//!    and `|q|_sup / b_minus` stay under budgets of their own,
//! 3. if the perturbation lives in a strip `|y| < R`, a cap on
//!    `|a_2|_sup / sqrt(b_minus)` alone preserves the quarter floor as an
//!    asymptotic velocity, uniformly in `R`.
//!
//! Each budget is certified by one scalar inequality whose terms are
//! closed forms in `(j, r, delta)`, the budgets, and a window split `N`.
//! The functions here evaluate that inequality exactly (no operators
//! involved), search splits over powers of two, and locate the largest
//! admissible budgets by bisection.  The budgets are conservative by
//! construction, often absurdly so: they are certificates that the floors
//! survive, not estimates of where they actually break.

use serde::{Deserialize, Serialize};

use crate::bands::{admissible_band_count, delta_max};
use crate::landau::derivative_constants;
use crate::{ensure, Error, Result};

/// Window splits are searched over `2^0 ..= 2^MAX_SPLIT_EXP`.
pub const MAX_SPLIT_EXP: u32 = 40;

/// Scaled window data entering the admissibility inequality.  Everything
/// is divided by `b_minus`, so a stage depends on `(j, r, delta)` only.
#[derive(Debug, Clone, Copy)]
struct Stage {
    /// Window half-width over `b_minus`.
    half_width: f64,
    /// Window midpoint over `b_minus`.
    midpoint: f64,
    /// Weight of the leakage terms relative to the certified floor.
    penalty: f64,
}

impl Stage {
    /// Left side of the admissibility inequality at gauge amplitude `a`,
    /// scalar budget `q` and window split `n`.  Certified when at most
    /// 1/2, which halves the floor carried into this stage.  Strictly
    /// increasing in `a` and `q`, strictly decreasing in `n`.
    fn lhs(&self, a: f64, q: f64, n: f64) -> f64 {
        let d_n = self.half_width / n;
        let reach = 2.0 * a * (2.0 * a.sqrt() + (self.midpoint + d_n + q).powf(0.25)).powi(2)
            + d_n
            + q;
        let spill = reach / self.half_width;
        spill * spill
            + self.penalty * (3.0 * spill.sqrt() * (self.midpoint + reach).sqrt() + a)
    }

    /// Certification at the finest split the ledger searches.
    fn certifies(&self, a: f64, q: f64) -> bool {
        self.lhs(a, q, 2f64.powi(MAX_SPLIT_EXP as i32)) <= 0.5
    }

    /// Coarsest power-of-two split certifying `(a, q)`, if any.
    fn smallest_split(&self, a: f64, q: f64) -> Option<u64> {
        (0..=MAX_SPLIT_EXP)
            .map(|p| 1u64 << p)
            .find(|&n| self.lhs(a, q, n as f64) <= 0.5)
    }

    fn sup_amplitude(&self, q: f64) -> f64 {
        sup_admissible(|a| self.certifies(a, q))
    }

    fn sup_potential(&self, a: f64) -> f64 {
        sup_admissible(|q| self.certifies(a, q))
    }
}

/// Largest `x >= 0` satisfying a monotone predicate (true below, false
/// above), by doubling then bisection; 0 when the predicate fails at 0.
fn sup_admissible(pred: impl Fn(f64) -> bool) -> f64 {
    if !pred(0.0) {
        return 0.0;
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut doublings = 0;
    while pred(hi) {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 80 {
            return lo;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    lo
}

fn validate_window(j: usize, r: f64, delta: f64) -> Result<f64> {
    ensure(j >= 1 && j <= 8, || format!("band index {j} outside 1..=8"))?;
    ensure(r.is_finite() && r > 1.0, || format!("step ratio must exceed 1, got {r}"))?;
    ensure(admissible_band_count(r)? >= 1, || {
        format!("certified floors need a step ratio of at most sqrt(3), got {r}")
    })?;
    ensure(delta > 0.0 && delta < delta_max(j, r), || {
        format!("window half-width {delta} outside (0, {})", delta_max(j, r))
    })?;
    Ok(derivative_constants(j)?.prefactor[j - 1])
}

/// Budgets letting a smoothed field keep half the step-profile floor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothStage {
    pub band: usize,
    pub ratio: f64,
    pub delta: f64,
    /// Certified slope prefactor `c_j` of the step stage.
    pub prefactor: f64,
    /// Trust-window half-width `((2j-1)(r-1) - delta (r+1)) / 2` over
    /// `b_minus`.
    pub half_width: f64,
    /// Trust-window midpoint `((2j-1+delta) + (2j-1-delta) r) / 2` over
    /// `b_minus`.
    pub midpoint: f64,
    /// Leakage weight `delta^-3 r^3 / ((r-1) c_j)`.
    pub penalty: f64,
    /// Supremum of the admissible ramp amplitude
    /// `(r-1) sqrt(b_minus) eps`; 0 when nothing certifies.
    pub amplitude_sup: f64,
    /// Operating amplitude the ledger certifies at: half the supremum.
    pub amplitude: f64,
    /// Coarsest power-of-two split certifying `amplitude`; 0 if none.
    pub split: u64,
    /// Half-width over `b_minus` of the certified sub-window,
    /// `half_width / split`.
    pub sub_half_width: f64,
    /// Admissibility value at the recorded operating point; certification
    /// means at most 1/2.
    pub condition_value: f64,
    /// The sub-window keeps `floor_coefficient * sqrt(b_minus)` of
    /// current: half the step-stage coefficient.
    pub floor_coefficient: f64,
    pub certified: bool,
}

impl SmoothStage {
    /// Largest certified ramp half-width for a given left field strength.
    pub fn epsilon_cap(&self, b_minus: f64) -> f64 {
        self.amplitude / ((self.ratio - 1.0) * b_minus.sqrt())
    }

    /// Certified current floor on the sub-window.
    pub fn current_floor(&self, b_minus: f64) -> f64 {
        self.floor_coefficient * b_minus.sqrt()
    }

    /// Certified energy sub-window for a given left field strength.
    pub fn sub_window(&self, b_minus: f64) -> (f64, f64) {
        let mid = self.midpoint * b_minus;
        let half = self.sub_half_width * b_minus;
        (mid - half, mid + half)
    }
}

/// Prices the ramp budget for band `j`, step ratio `r` and window
/// half-width `delta`.
pub fn smooth_stage(j: usize, r: f64, delta: f64) -> Result<SmoothStage> {
    let prefactor = validate_window(j, r, delta)?;
    let jf = 2.0 * j as f64 - 1.0;
    let stage = Stage {
        half_width: (jf * (r - 1.0) - delta * (r + 1.0)) / 2.0,
        midpoint: ((jf + delta) + (jf - delta) * r) / 2.0,
        penalty: delta.powi(-3) * r.powi(3) / ((r - 1.0) * prefactor),
    };
    let amplitude_sup = stage.sup_amplitude(0.0);
    let amplitude = 0.5 * amplitude_sup;
    let split = if amplitude_sup > 0.0 {
        stage.smallest_split(amplitude, 0.0).unwrap_or(0)
    } else {
        0
    };
    let certified = split > 0;
    Ok(SmoothStage {
        band: j,
        ratio: r,
        delta,
        prefactor,
        half_width: stage.half_width,
        midpoint: stage.midpoint,
        penalty: stage.penalty,
        amplitude_sup,
        amplitude,
        split,
        sub_half_width: if certified { stage.half_width / split as f64 } else { 0.0 },
        condition_value: if certified { stage.lhs(amplitude, 0.0, split as f64) } else { f64::NAN },
        floor_coefficient: 0.5 * prefactor * delta.powi(3) * (r - 1.0) / r.powi(3),
        certified,
    })
}

/// Budgets letting a bounded gauge and scalar perturbation keep a quarter
/// of the step-profile floor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbedStage {
    pub band: usize,
    pub ratio: f64,
    pub delta: f64,
    /// This stage trusts only the previous sub-window, so its half-width
    /// over `b_minus` is the smooth stage's `sub_half_width`.
    pub half_width: f64,
    pub midpoint: f64,
    /// Twice the smooth-stage penalty: the floor entering this stage is
    /// already halved.
    pub penalty: f64,
    /// Supremum of `(|a|_sup^2 + |grad a|_sup)^(1/2) / sqrt(b_minus)` at
    /// zero scalar budget, and the half-supremum operating point.
    pub field_budget_sup: f64,
    pub field_budget: f64,
    /// Supremum of `|q|_sup / b_minus` priced at the operating field
    /// budget, and the half-supremum operating point.
    pub potential_budget_sup: f64,
    pub potential_budget: f64,
    /// Coarsest power-of-two split certifying the operating budgets.
    pub split: u64,
    /// Admissibility value at the recorded operating point; certification
    /// means at most 1/2.
    pub condition_value: f64,
    /// Certified windows must not be wider than `window_cap * b_minus`.
    pub window_cap: f64,
    /// Quarter of the step-stage coefficient.  Also the commutator floor
    /// in the time-decay estimates (the double commutator with `y` is 2).
    pub floor_coefficient: f64,
    pub certified: bool,
}

impl PerturbedStage {
    pub fn current_floor(&self, b_minus: f64) -> f64 {
        self.floor_coefficient * b_minus.sqrt()
    }

    /// Largest certified `(|a|_sup^2 + |grad a|_sup)^(1/2)`.
    pub fn field_cap(&self, b_minus: f64) -> f64 {
        self.field_budget * b_minus.sqrt()
    }

    /// Largest certified `|q|_sup`.
    pub fn potential_cap(&self, b_minus: f64) -> f64 {
        self.potential_budget * b_minus
    }

    /// Certified energy sub-window for a given left field strength.
    pub fn sub_window(&self, b_minus: f64) -> (f64, f64) {
        let mid = self.midpoint * b_minus;
        let half = 0.5 * self.window_cap * b_minus;
        (mid - half, mid + half)
    }
}

/// Prices the gauge and scalar budgets on top of a certified smooth stage.
pub fn perturbed_stage(smooth: &SmoothStage) -> Result<PerturbedStage> {
    ensure(smooth.certified, || {
        "smoothing stage did not certify, so there is no sub-window to perturb".to_string()
    })?;
    let stage = Stage {
        half_width: smooth.sub_half_width,
        midpoint: smooth.midpoint,
        penalty: 2.0 * smooth.penalty,
    };
    let field_budget_sup = stage.sup_amplitude(0.0);
    let field_budget = 0.5 * field_budget_sup;
    let potential_budget_sup = stage.sup_potential(field_budget);
    let potential_budget = 0.5 * potential_budget_sup;
    let split = if field_budget_sup > 0.0 {
        stage.smallest_split(field_budget, potential_budget).unwrap_or(0)
    } else {
        0
    };
    let certified = split > 0;
    Ok(PerturbedStage {
        band: smooth.band,
        ratio: smooth.ratio,
        delta: smooth.delta,
        half_width: stage.half_width,
        midpoint: stage.midpoint,
        penalty: stage.penalty,
        field_budget_sup,
        field_budget,
        potential_budget_sup,
        potential_budget,
        split,
        condition_value: if certified {
            stage.lhs(field_budget, potential_budget, split as f64)
        } else {
            f64::NAN
        },
        window_cap: if certified { 2.0 * stage.half_width / split as f64 } else { 0.0 },
        floor_coefficient: 0.5 * smooth.floor_coefficient,
        certified,
    })
}

/// Strip-supported transverse gauge cap preserving the quarter floor as
/// an asymptotic velocity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticStage {
    pub band: usize,
    pub ratio: f64,
    pub delta: f64,
    /// Quarter-floor coefficient `c_j delta^3 (r-1)/r^3 / 4`; the
    /// transverse gauge amplitude must stay strictly under it.
    pub coefficient: f64,
    /// Operating cap on `|a_2|_sup / sqrt(b_minus)`: half the coefficient.
    pub transverse_budget: f64,
}

impl AsymptoticStage {
    /// Long-time velocity floor, independent of the strip width.
    pub fn velocity_floor(&self, b_minus: f64) -> f64 {
        self.coefficient * b_minus.sqrt()
    }

    /// Largest operating `|a_2|_sup` for a strip-supported perturbation.
    pub fn transverse_cap(&self, b_minus: f64) -> f64 {
        self.transverse_budget * b_minus.sqrt()
    }
}

pub fn asymptotic_stage(j: usize, r: f64, delta: f64) -> Result<AsymptoticStage> {
    let prefactor = validate_window(j, r, delta)?;
    let coefficient = 0.25 * prefactor * delta.powi(3) * (r - 1.0) / r.powi(3);
    Ok(AsymptoticStage {
        band: j,
        ratio: r,
        delta,
        coefficient,
        transverse_budget: 0.5 * coefficient,
    })
}

/// Full cascade of certified floors and budgets for one trust window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsLedger {
    pub band: usize,
    pub ratio: f64,
    pub delta: f64,
    /// Step-stage floor coefficient `c_j delta^3 (r-1)/r^3`.
    pub step_floor_coefficient: f64,
    pub smooth: SmoothStage,
    pub perturbed: PerturbedStage,
    pub asymptotic: AsymptoticStage,
}

impl ConstantsLedger {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(Error::from)
    }
}

/// Prices all three stages for band `j`, step ratio `r` and window
/// half-width `delta`.
pub fn build_ledger(j: usize, r: f64, delta: f64) -> Result<ConstantsLedger> {
    let smooth = smooth_stage(j, r, delta)?;
    let perturbed = perturbed_stage(&smooth)?;
    let asymptotic = asymptotic_stage(j, r, delta)?;
    let step_floor_coefficient = 2.0 * smooth.floor_coefficient;
    Ok(ConstantsLedger {
        band: j,
        ratio: r,
        delta,
        step_floor_coefficient,
        smooth,
        perturbed,
        asymptotic,
    })
}
