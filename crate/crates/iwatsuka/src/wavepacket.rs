//! Wave packets built from one transverse band.
//!
//! A packet is a weighted superposition of fiber states over a momentum
//! window. The weights are tapered by an [`Envelope`], squared weights
//! integrate to one, and every observable reduces to quadrature over the
//! momentum nodes:
//!
//! * the carried current is half the weighted mean of the band slope,
//! * the transverse density is the weighted mean of the fiber densities,
//! * free motion along the wall multiplies each coefficient by a phase,
//!   so the packet centroid drifts at twice the current.
//!
//! [`check_localization`] measures how much of the packet sits inside the
//! cyclotron-width interval around the wall and compares against the
//! guaranteed mass, the pointwise tail envelope, and the hypotheses under
//! which the guarantee is claimed. [`fibered_transport`] evolves the
//! momentum coefficients exactly and fits the centroid drift.

use crate::bands::{
    compute_bands, energy_window, window_preimage, BandTable, BandsOptions,
};
use crate::fiber::FiberGrid;
use crate::profiles::FieldProfile;
use crate::{ensure, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Taper applied to the packet weights across the momentum window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    /// Flat weights, sharp edges.
    Indicator,
    /// Truncated Gaussian, one sixth of the window per deviation.
    Gaussian,
    /// Raised cosine vanishing at both edges.
    Hann,
}

impl Envelope {
    pub(crate) fn shape(self, s: f64) -> f64 {
        // `s` runs over [0, 1] across the window.
        match self {
            Envelope::Indicator => 1.0,
            Envelope::Gaussian => (-18.0 * (s - 0.5) * (s - 0.5)).exp(),
            Envelope::Hann => {
                let w = (std::f64::consts::PI * s).sin();
                w * w
            }
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Envelope::Indicator => "indicator",
            Envelope::Gaussian => "gaussian",
            Envelope::Hann => "hann",
        }
    }
}

/// Trapezoid sum with unit spacing folded into `dk`.
pub(crate) fn trapz(vals: &[f64], dk: f64) -> f64 {
    let n = vals.len();
    dk * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[n - 1]))
}

/// Band packet on a uniform momentum grid.
#[derive(Debug, Clone)]
pub struct WavePacket {
    pub profile: FieldProfile,
    pub band: usize,
    pub envelope: Envelope,
    pub k: Vec<f64>,
    pub dk: f64,
    /// Tapered weights; squared weights trapezoid-integrate to one.
    pub weight: Vec<f64>,
    pub omega: Vec<f64>,
    pub omega_prime: Vec<f64>,
    pub grid: FiberGrid,
    /// Fiber state per momentum node, unit norm on `grid`.
    pub psi: Vec<Vec<f64>>,
}

impl WavePacket {
    /// Packet over an explicit momentum interval.
    pub fn on_k_interval(
        profile: &FieldProfile,
        band: usize,
        k_lo: f64,
        k_hi: f64,
        n_k: usize,
        envelope: Envelope,
        opts: &BandsOptions,
    ) -> Result<Self> {
        ensure(band >= 1, || "band index starts at 1".to_string())?;
        ensure(n_k >= 8, || format!("need at least 8 momentum nodes, got {n_k}"))?;
        ensure(k_hi > k_lo, || format!("empty momentum interval [{k_lo}, {k_hi}]"))?;
        let mut sweep = opts.clone();
        sweep.store_vectors = true;
        let table = compute_bands(profile, k_lo, k_hi, n_k, band, &sweep)?;
        Ok(Self::from_table(table, band, envelope))
    }

    /// Packet filling the band-`band` trust window of half-width `delta`.
    pub fn in_window(
        profile: &FieldProfile,
        band: usize,
        delta: f64,
        n_k: usize,
        envelope: Envelope,
        opts: &BandsOptions,
    ) -> Result<Self> {
        let window = energy_window(profile, band, delta)?;
        let (k_lo, k_hi) = window_preimage(profile, band, window, opts)?;
        Self::on_k_interval(profile, band, k_lo, k_hi, n_k, envelope, opts)
    }

    fn from_table(table: BandTable, band: usize, envelope: Envelope) -> Self {
        let n_k = table.k.len();
        let dk = (table.k[n_k - 1] - table.k[0]) / (n_k - 1) as f64;
        let mut weight: Vec<f64> = (0..n_k)
            .map(|i| envelope.shape(i as f64 / (n_k - 1) as f64))
            .collect();
        let squares: Vec<f64> = weight.iter().map(|w| w * w).collect();
        let scale = trapz(&squares, dk).sqrt();
        for w in &mut weight {
            *w /= scale;
        }
        let sweep = &table.bands[band - 1];
        let vectors = table.vectors.expect("packet table stores vectors");
        let psi: Vec<Vec<f64>> = vectors.into_iter().map(|mut v| v.swap_remove(band - 1)).collect();
        WavePacket {
            profile: table.profile,
            band,
            envelope,
            k: table.k,
            dk,
            weight,
            omega: sweep.omega.clone(),
            omega_prime: sweep.omega_prime.clone(),
            grid: table.grid,
            psi,
        }
    }

    fn support(&self) -> impl Iterator<Item = usize> + '_ {
        let cut = 1e-12 * self.weight.iter().cloned().fold(0.0, f64::max);
        (0..self.k.len()).filter(move |&i| self.weight[i] > cut)
    }

    /// Current along the wall: half the squared-weight average of the slope.
    pub fn edge_current(&self) -> f64 {
        let vals: Vec<f64> =
            (0..self.k.len()).map(|i| self.omega_prime[i] * self.weight[i] * self.weight[i]).collect();
        0.5 * trapz(&vals, self.dk)
    }

    /// Drift speed of the packet centroid, twice the current.
    pub fn mean_velocity(&self) -> f64 {
        2.0 * self.edge_current()
    }

    /// Slope extremes over the weight support.
    pub fn velocity_window(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in self.support() {
            lo = lo.min(self.omega_prime[i]);
            hi = hi.max(self.omega_prime[i]);
        }
        (lo, hi)
    }

    /// Energy extremes over the weight support.
    pub fn energy_window(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in self.support() {
            lo = lo.min(self.omega[i]);
            hi = hi.max(self.omega[i]);
        }
        (lo, hi)
    }

    /// Largest `|slope| / (2 sqrt(energy))` over the support; at most one
    /// for the discrete fiber problem up to rounding.
    pub fn speed_margin(&self) -> f64 {
        self.support()
            .map(|i| self.omega_prime[i].abs() / (2.0 * self.omega[i].sqrt()))
            .fold(0.0, f64::max)
    }

    /// Transverse density on the fiber grid, unit mass.
    pub fn density(&self) -> Vec<f64> {
        let n_k = self.k.len();
        let mut rho = vec![0.0; self.grid.n];
        for i in 0..n_k {
            let cw = if i == 0 || i == n_k - 1 { 0.5 } else { 1.0 };
            let f = cw * self.weight[i] * self.weight[i] * self.dk;
            for (r, p) in rho.iter_mut().zip(&self.psi[i]) {
                *r += f * p * p;
            }
        }
        rho
    }

    /// Packet mass carried by grid nodes inside `[lo, hi]`.
    pub fn mass_within(&self, lo: f64, hi: f64) -> f64 {
        let rho = self.density();
        let mut mass = 0.0;
        for (m, r) in rho.iter().enumerate() {
            let x = self.grid.x(m);
            if x >= lo && x <= hi {
                mass += self.grid.h * r;
            }
        }
        mass
    }
}

/// Hypotheses under which the localization guarantee is claimed.
#[derive(Debug, Clone)]
pub struct LocalizationConditions {
    /// `eps1 * b_plus^eps2 >= 2 sqrt(2j-1)`.
    pub taper_plus: bool,
    /// `eps1 * b_minus^eps2 >= 2 sqrt(2j-1) sqrt(b_plus/b_minus)`.
    pub taper_minus: bool,
    /// Window preimage inside `(-b_minus^(1/2+eps2), b_plus^(1/2+eps2))`.
    pub preimage_inside: bool,
}

impl LocalizationConditions {
    pub fn all(&self) -> bool {
        self.taper_plus && self.taper_minus && self.preimage_inside
    }
}

/// Measured against guaranteed confinement of a window packet.
#[derive(Debug, Clone)]
pub struct LocalizationReport {
    pub band: usize,
    pub delta: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Confinement interval around the wall.
    pub interval: (f64, f64),
    pub mass_inside: f64,
    /// Guaranteed mass `1 - 2 sqrt(pi (2j-1)) exp(-eps1^2 b_minus^(2 eps2) / 8)`.
    pub guarantee: f64,
    pub conditions: LocalizationConditions,
    /// Guarantee is positive, so the statement has content.
    pub nontrivial: bool,
    /// Mass meets the guarantee (vacuously when the guarantee is negative).
    pub containment_pass: bool,
    /// Largest ratio of `|psi|` to the pointwise tail envelope.
    pub envelope_max_ratio: f64,
    pub envelope_pass: bool,
}

impl LocalizationReport {
    /// Full pass: hypotheses hold, the guarantee bites, and both the mass
    /// and the pointwise envelope respect it.
    pub fn strong_pass(&self) -> bool {
        self.conditions.all() && self.nontrivial && self.containment_pass && self.envelope_pass
    }
}

/// Pointwise tail envelope centered at `x_center`, decay rate `b_side`.
fn tail_envelope(j: usize, b_plus: f64, b_side: f64, x_center: f64, x: f64) -> f64 {
    let amp = std::f64::consts::SQRT_2 * (2.0 * j as f64 - 1.0).powf(0.25) * b_plus.powf(0.25);
    amp * (-0.5 * b_side * (x - x_center) * (x - x_center)).exp()
}

/// Builds a window packet and measures its confinement near the wall.
pub fn check_localization(
    profile: &FieldProfile,
    band: usize,
    delta: f64,
    eps1: f64,
    eps2: f64,
    n_k: usize,
    opts: &BandsOptions,
) -> Result<LocalizationReport> {
    ensure(profile.is_sharp(), || "confinement is stated for the step profile".to_string())?;
    ensure(eps1 > 0.0 && eps2 > 0.0, || format!("need positive taper parameters, got ({eps1}, {eps2})"))?;
    let packet = WavePacket::in_window(profile, band, delta, n_k, Envelope::Hann, opts)?;
    let (bm, bp) = (profile.b_minus(), profile.b_plus());
    let jj = 2.0 * band as f64 - 1.0;

    let interval = (-(1.0 + eps1) * bm.powf(-0.5 + eps2), (1.0 + eps1) * bp.powf(-0.5 + eps2));
    let mass_inside = packet.mass_within(interval.0, interval.1);
    let guarantee = 1.0 - 2.0 * (std::f64::consts::PI * jj).sqrt()
        * (-eps1 * eps1 * bm.powf(2.0 * eps2) / 8.0).exp();

    let conditions = LocalizationConditions {
        taper_plus: eps1 * bp.powf(eps2) >= 2.0 * jj.sqrt(),
        taper_minus: eps1 * bm.powf(eps2) >= 2.0 * jj.sqrt() * (bp / bm).sqrt(),
        preimage_inside: packet.k[0] > -bm.powf(0.5 + eps2)
            && packet.k[packet.k.len() - 1] < bp.powf(0.5 + eps2),
    };

    // Tail envelope beyond the classical turning strip on either side.
    let x_plus = bp.powf(-0.5 + eps2) + jj.sqrt() * bp.sqrt() / bp;
    let x_minus = -(bm.powf(-0.5 + eps2) + jj.sqrt() * bp.sqrt() / bm);
    let mut ratio = 0.0f64;
    for i in packet.support().collect::<Vec<_>>() {
        for m in 0..packet.grid.n {
            let x = packet.grid.x(m);
            let bound = if x >= x_plus {
                tail_envelope(band, bp, bp, x_plus, x)
            } else if x <= x_minus {
                tail_envelope(band, bp, bm, x_minus, x)
            } else {
                continue;
            };
            let psi = packet.psi[i][m].abs();
            if psi < 1e-250 {
                continue;
            }
            ratio = ratio.max(psi / bound.max(1e-300));
        }
    }

    Ok(LocalizationReport {
        band,
        delta,
        eps1,
        eps2,
        interval,
        mass_inside,
        guarantee,
        conditions,
        nontrivial: guarantee > 0.0,
        containment_pass: mass_inside >= guarantee,
        envelope_max_ratio: ratio,
        envelope_pass: ratio <= 1.0 + 1e-9,
    })
}

/// Runs [`check_localization`] over increasing fields at fixed step ratio
/// and reports the first field where the guarantee bites and everything
/// holds.
pub struct LocalizationScan {
    pub reports: Vec<(f64, LocalizationReport)>,
    pub threshold: Option<f64>,
}

pub fn localization_threshold_scan(
    ratio: f64,
    band: usize,
    delta: f64,
    eps1: f64,
    eps2: f64,
    n_k: usize,
    b_values: &[f64],
    opts: &BandsOptions,
) -> Result<LocalizationScan> {
    let mut reports = Vec::new();
    let mut threshold = None;
    for &bm in b_values {
        let profile = FieldProfile::sharp(bm, ratio * bm)?;
        let report = check_localization(&profile, band, delta, eps1, eps2, n_k, opts)?;
        if threshold.is_none() && report.strong_pass() {
            threshold = Some(bm);
        }
        reports.push((bm, report));
    }
    Ok(LocalizationScan { reports, threshold })
}

/// Centroid drift of a freely evolving packet.
#[derive(Debug, Clone)]
pub struct TransportResult {
    pub times: Vec<f64>,
    pub mean_y: Vec<f64>,
    /// Least-squares fit through the centroid track.
    pub slope: f64,
    /// Twice the packet current.
    pub predicted_slope: f64,
    pub rel_err: f64,
    /// Slope extremes over the packet support.
    pub velocity_window: (f64, f64),
    pub within_window: bool,
    pub norm_drift: f64,
}

/// Evolves the momentum coefficients exactly and tracks the centroid via
/// a five-point derivative in momentum. Requires weights that vanish at
/// the window edges, so flat tapers are rejected.
pub fn fibered_transport(p: &WavePacket, t_max: f64, n_times: usize) -> Result<TransportResult> {
    ensure(t_max > 0.0 && n_times >= 3, || {
        format!("need a forward time range with at least 3 samples, got {t_max} x {n_times}")
    })?;
    let n = p.k.len();
    ensure(n >= 16, || format!("need at least 16 momentum nodes for transport, got {n}"))?;
    let wmax = p.weight.iter().cloned().fold(0.0, f64::max);
    ensure(p.weight[0] <= 1e-6 * wmax && p.weight[n - 1] <= 1e-6 * wmax, || {
        format!("transport needs weights tapered to zero at the window edges; the {} taper keeps {:.2e} of the peak there", p.envelope.id(), (p.weight[0].max(p.weight[n - 1])) / wmax)
    })?;

    let mut times = Vec::with_capacity(n_times);
    let mut mean_y = Vec::with_capacity(n_times);
    let mut norm_drift = 0.0f64;
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    for s in 0..n_times {
        let t = t_max * s as f64 / (n_times - 1) as f64;
        for i in 0..n {
            let phase = Complex64::from_polar(1.0, -p.omega[i] * t);
            c[i] = phase * p.weight[i];
        }
        // <y> = sum Re(conj(c) i Dc) dk with the five-point derivative,
        // zero padding past the tapered edges.
        let at = |i: isize| -> Complex64 {
            if i < 0 || i >= n as isize {
                Complex64::new(0.0, 0.0)
            } else {
                c[i as usize]
            }
        };
        let mut y = 0.0;
        let mut norm = 0.0;
        for i in 0..n as isize {
            let d = (at(i - 2) - at(i + 2) + 8.0 * (at(i + 1) - at(i - 1))) / (12.0 * p.dk);
            let cw = if i == 0 || i == n as isize - 1 { 0.5 } else { 1.0 };
            y += cw * (at(i).conj() * Complex64::i() * d).re * p.dk;
            norm += cw * at(i).norm_sqr() * p.dk;
        }
        norm_drift = norm_drift.max((norm - 1.0).abs());
        times.push(t);
        mean_y.push(y);
    }

    let t_bar = times.iter().sum::<f64>() / n_times as f64;
    let y_bar = mean_y.iter().sum::<f64>() / n_times as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for s in 0..n_times {
        num += (times[s] - t_bar) * (mean_y[s] - y_bar);
        den += (times[s] - t_bar) * (times[s] - t_bar);
    }
    let slope = num / den;
    let predicted = p.mean_velocity();
    let (v_lo, v_hi) = p.velocity_window();
    let span = (v_hi - v_lo).abs().max(1e-12);
    Ok(TransportResult {
        times,
        mean_y,
        slope,
        predicted_slope: predicted,
        rel_err: (slope - predicted).abs() / predicted.abs().max(1e-300),
        velocity_window: (v_lo, v_hi),
        within_window: slope >= v_lo - 1e-9 * span && slope <= v_hi + 1e-9 * span,
        norm_drift,
    })
}
