//! Genuine 2-D time evolution cross-checking the fiber picture.
//!
//! The fiber machinery predicts that a band packet drifts along the wall
//! at twice its edge current.  This module rebuilds the same physics with
//! no fiber shortcut: the packet is synthesized on a 2-D grid and evolved
//! under the discrete Hamiltonian
//!
//! ```text
//!   H = Lx + B^2 + q,   B = -i D_y - (beta(x) + a2(x,y)),
//! ```
//!
//! where `Lx` is the three-point transverse Laplacian and `D_y` the
//! centered longitudinal difference.  `B` is Hermitian, so `H` is too.
//! On a plane wave `e^{iky}` the operator `B` acts as multiplication by
//! `sin(k hy)/hy - beta(x)`, hence every column `phi(x) e^{iky}` built
//! from the fiber problem at the mapped momentum `sin(k hy)/hy` is an
//! exact interior eigenvector of `H`.  [`effective_packet`] builds packets
//! with exactly that dispersion, so the fibered reference and the 2-D
//! evolution share one discretization and the comparison isolates the
//! time-integration error alone.
//!
//! Time stepping is Crank-Nicolson, `(I + i dt/2 H) psi' = (I - i dt/2 H)
//! psi`, which conserves the norm and any function of `H` up to solver
//! tolerance.  Since `I + i a H` is normal, the update solves the
//! Hermitian positive system `(I + a^2 H^2) psi' = (I - i a H)^2 psi` by
//! conjugate gradients with an exact-diagonal Jacobi preconditioner and a
//! linear-extrapolation warm start.
//!
//! The velocity observable is `v_y = (BS + SB)/2` with `S` the symmetric
//! neighbor average; this is exactly `(i/2)[H, y]` on the grid, so
//! `d<y>/dt = 2 J_y` holds with no spatial discretization error.

use std::io::{self, Write};

use num_complex::Complex64;

use crate::eigensolve::lowest_eigenpairs;
use crate::fiber::{build_fiber_operator, FiberGrid};
use crate::profiles::{FieldProfile, PerturbationSpec};
use crate::wavepacket::{trapz, Envelope, WavePacket};
use crate::{ensure, Error, Result};

/// Tensor grid: the x axis is a fiber grid (node at the wall), the y axis
/// is uniform, symmetric about 0, with a node at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub x: FiberGrid,
    pub hy: f64,
    pub ny: usize,
    pub y_min: f64,
}

impl Grid2D {
    /// Covers `[-y_half, y_half]` with step at most `hy_target`.
    pub fn new(x: FiberGrid, y_half: f64, hy_target: f64) -> Result<Self> {
        ensure(y_half > 0.0 && hy_target > 0.0 && hy_target <= y_half, || {
            format!("bad longitudinal window: half-width {y_half}, step {hy_target}")
        })?;
        let half = (y_half / hy_target).ceil() as usize;
        Ok(Grid2D {
            x,
            hy: hy_target,
            ny: 2 * half + 1,
            y_min: -(half as f64) * hy_target,
        })
    }

    #[inline]
    pub fn y(&self, m: usize) -> f64 {
        self.y_min + self.hy * m as f64
    }

    pub fn len(&self) -> usize {
        self.x.n * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Area element of one node.
    pub fn cell(&self) -> f64 {
        self.x.h * self.hy
    }
}

/// Discrete Hamiltonian on a [`Grid2D`].  States are stored row-major
/// with `y` contiguous: index `ix * ny + iy`.
#[derive(Debug, Clone)]
pub struct Operator2d {
    pub grid: Grid2D,
    /// `beta(x) + a2(x, y)` per node.
    shift: Vec<f64>,
    /// Scalar potential per node.
    potential: Vec<f64>,
    inv_hx2: f64,
    inv_2hy: f64,
}

impl Operator2d {
    /// Builds the operator; the longitudinal gauge is fixed, so any `a1`
    /// component is rejected.
    pub fn new(
        profile: &FieldProfile,
        perturbation: &PerturbationSpec,
        grid: Grid2D,
    ) -> Result<Self> {
        profile.validate()?;
        perturbation.validate()?;
        ensure(perturbation.a1.is_none(), || {
            "the evolver fixes the gauge along x; move the perturbation into a2".to_string()
        })?;
        let (nx, ny) = (grid.x.n, grid.ny);
        let mut shift = Vec::with_capacity(nx * ny);
        let mut potential = Vec::with_capacity(nx * ny);
        for ix in 0..nx {
            let x = grid.x.x(ix);
            let beta = profile.beta_at(x);
            for iy in 0..ny {
                let y = grid.y(iy);
                shift.push(beta + perturbation.a2_at(x, y));
                potential.push(perturbation.q_at(x, y));
            }
        }
        let inv_hx2 = 1.0 / (grid.x.h * grid.x.h);
        let inv_2hy = 0.5 / grid.hy;
        Ok(Operator2d { grid, shift, potential, inv_hx2, inv_2hy })
    }

    /// `out = B v` with `B = -i D_y - shift`.
    fn apply_b(&self, v: &[Complex64], out: &mut [Complex64]) {
        let ny = self.grid.ny;
        let nx = self.grid.x.n;
        for ix in 0..nx {
            let o = ix * ny;
            for iy in 0..ny {
                let up = if iy + 1 < ny { v[o + iy + 1] } else { Complex64::ZERO };
                let dn = if iy > 0 { v[o + iy - 1] } else { Complex64::ZERO };
                let d = (up - dn) * self.inv_2hy;
                out[o + iy] = Complex64::new(d.im, -d.re) - self.shift[o + iy] * v[o + iy];
            }
        }
    }

    /// `out = S v`, the symmetric longitudinal neighbor average.
    fn apply_s(&self, v: &[Complex64], out: &mut [Complex64]) {
        let ny = self.grid.ny;
        let nx = self.grid.x.n;
        for ix in 0..nx {
            let o = ix * ny;
            for iy in 0..ny {
                let up = if iy + 1 < ny { v[o + iy + 1] } else { Complex64::ZERO };
                let dn = if iy > 0 { v[o + iy - 1] } else { Complex64::ZERO };
                out[o + iy] = 0.5 * (up + dn);
            }
        }
    }

    /// `out = H v`, using `scratch` for the inner `B` pass.
    pub fn apply(&self, v: &[Complex64], scratch: &mut [Complex64], out: &mut [Complex64]) {
        self.apply_b(v, scratch);
        self.apply_b(scratch, out);
        let ny = self.grid.ny;
        let nx = self.grid.x.n;
        for ix in 0..nx {
            let o = ix * ny;
            for iy in 0..ny {
                let i = o + iy;
                let left = if ix > 0 { v[i - ny] } else { Complex64::ZERO };
                let right = if ix + 1 < nx { v[i + ny] } else { Complex64::ZERO };
                out[i] += (2.0 * v[i] - left - right) * self.inv_hx2 + self.potential[i] * v[i];
            }
        }
    }

    /// Exact diagonal of `H`.
    fn diag_h(&self) -> Vec<f64> {
        let ny = self.grid.ny;
        let nx = self.grid.x.n;
        let inv_4hy2 = self.inv_2hy * self.inv_2hy;
        let mut d = Vec::with_capacity(nx * ny);
        for ix in 0..nx {
            for iy in 0..ny {
                let i = ix * ny + iy;
                // The squared difference contributes one quarter per
                // present second neighbor.
                let mut dd = 2.0 * self.inv_hx2 + self.potential[i]
                    + self.shift[i] * self.shift[i];
                if iy + 1 < ny {
                    dd += inv_4hy2;
                }
                if iy > 0 {
                    dd += inv_4hy2;
                }
                d.push(dd);
            }
        }
        d
    }

    /// Exact diagonal of `H^2`: squared row norms of `H`.
    fn diag_h2(&self) -> Vec<f64> {
        let ny = self.grid.ny;
        let nx = self.grid.x.n;
        let inv_4hy2 = self.inv_2hy * self.inv_2hy;
        let diag = self.diag_h();
        let mut d2 = Vec::with_capacity(nx * ny);
        for ix in 0..nx {
            for iy in 0..ny {
                let i = ix * ny + iy;
                let mut s = diag[i] * diag[i];
                if ix > 0 {
                    s += self.inv_hx2 * self.inv_hx2;
                }
                if ix + 1 < nx {
                    s += self.inv_hx2 * self.inv_hx2;
                }
                if iy + 1 < ny {
                    let c = self.shift[i] + self.shift[i + 1];
                    s += c * c * inv_4hy2;
                }
                if iy > 0 {
                    let c = self.shift[i] + self.shift[i - 1];
                    s += c * c * inv_4hy2;
                }
                if iy + 2 < ny {
                    s += inv_4hy2 * inv_4hy2;
                }
                if iy >= 2 {
                    s += inv_4hy2 * inv_4hy2;
                }
                d2.push(s);
            }
        }
        d2
    }

    /// Mass, centroid, current and boundary fraction of a state.
    pub fn observe(&self, psi: &[Complex64]) -> Observables {
        let (nx, ny) = (self.grid.x.n, self.grid.ny);
        let cell = self.grid.cell();
        let mut mass = 0.0;
        let mut first_y = 0.0;
        let mut boundary = 0.0;
        for ix in 0..nx {
            let edge_x = ix < 2 || ix + 2 >= nx;
            for iy in 0..ny {
                let w = psi[ix * ny + iy].norm_sqr();
                mass += w;
                first_y += w * self.grid.y(iy);
                if edge_x || iy < 2 || iy + 2 >= ny {
                    boundary += w;
                }
            }
        }
        let mut s = vec![Complex64::ZERO; psi.len()];
        let mut b = vec![Complex64::ZERO; psi.len()];
        self.apply_s(psi, &mut s);
        self.apply_b(psi, &mut b);
        // <v_y> = Re <S psi, B psi>: the symmetrized product folds into
        // one real part because both factors are Hermitian.
        let current: f64 = s.iter().zip(&b).map(|(a, c)| (a.conj() * c).re).sum();
        Observables {
            mass: mass * cell,
            mean_y: first_y / mass,
            current: current / mass,
            boundary_fraction: boundary / mass,
        }
    }
}

/// Instantaneous state functionals; `current` and `mean_y` are
/// mass-normalized, `boundary_fraction` is the mass share within two
/// layers of the domain edge.
#[derive(Debug, Clone, Copy)]
pub struct Observables {
    pub mass: f64,
    pub mean_y: f64,
    pub current: f64,
    pub boundary_fraction: f64,
}

/// Options for the implicit stepper.
#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub dt: f64,
    /// Relative residual target of the inner conjugate-gradient solve.
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    /// Abort when more than this mass fraction reaches the domain edge.
    pub boundary_cap: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { dt: 2e-3, cg_tol: 1e-11, cg_max_iters: 600, boundary_cap: 1e-6 }
    }
}

/// Crank-Nicolson stepper with persistent scratch space.
pub struct Stepper {
    pub op: Operator2d,
    alpha: f64,
    tol: f64,
    max_iters: usize,
    /// `1 / diag(I + alpha^2 H^2)`.
    precond: Vec<f64>,
    prev: Option<Vec<Complex64>>,
    /// Worst inner-iteration count seen so far.
    pub max_iters_seen: usize,
}

impl Stepper {
    pub fn new(op: Operator2d, opts: &EvolveOptions) -> Result<Self> {
        ensure(opts.dt > 0.0 && opts.dt.is_finite(), || {
            format!("time step must be positive, got {}", opts.dt)
        })?;
        ensure(opts.cg_tol > 0.0 && opts.cg_max_iters >= 8, || {
            "solver needs a positive tolerance and at least 8 iterations".to_string()
        })?;
        let alpha = 0.5 * opts.dt;
        let precond =
            op.diag_h2().into_iter().map(|d| 1.0 / (1.0 + alpha * alpha * d)).collect();
        Ok(Stepper {
            op,
            alpha,
            tol: opts.cg_tol,
            max_iters: opts.cg_max_iters,
            precond,
            prev: None,
            max_iters_seen: 0,
        })
    }

    /// Advances `psi` by one step.
    pub fn step(&mut self, psi: &mut Vec<Complex64>) -> Result<()> {
        let n = psi.len();
        ensure(n == self.op.grid.len(), || "state length does not match the grid".to_string())?;
        let a = self.alpha;
        let mut w1 = vec![Complex64::ZERO; n];
        let mut w2 = vec![Complex64::ZERO; n];
        let mut scratch = vec![Complex64::ZERO; n];
        self.op.apply(psi, &mut scratch, &mut w1);
        self.op.apply(&w1, &mut scratch, &mut w2);
        // rhs = (I - i a H)^2 psi = psi - 2 i a H psi - a^2 H^2 psi.
        let rhs: Vec<Complex64> = (0..n)
            .map(|i| psi[i] - 2.0 * a * Complex64::i() * w1[i] - a * a * w2[i])
            .collect();

        let mut x: Vec<Complex64> = match &self.prev {
            Some(prev) => (0..n).map(|i| 2.0 * psi[i] - prev[i]).collect(),
            None => psi.clone(),
        };
        let iters = self.solve_normal(&rhs, &mut x)?;
        self.max_iters_seen = self.max_iters_seen.max(iters);
        self.prev = Some(std::mem::replace(psi, x));
        Ok(())
    }

    /// Preconditioned conjugate gradients on `(I + a^2 H^2) x = rhs`.
    fn solve_normal(&self, rhs: &[Complex64], x: &mut [Complex64]) -> Result<usize> {
        let n = rhs.len();
        let a2 = self.alpha * self.alpha;
        let mut scratch = vec![Complex64::ZERO; n];
        let mut h1 = vec![Complex64::ZERO; n];
        let mut ap = vec![Complex64::ZERO; n];
        let apply_a = |v: &[Complex64],
                       scratch: &mut [Complex64],
                       h1: &mut [Complex64],
                       out: &mut [Complex64]| {
            self.op.apply(v, scratch, h1);
            self.op.apply(h1, scratch, out);
            for i in 0..n {
                out[i] = v[i] + a2 * out[i];
            }
        };

        let norm_rhs = rhs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm_rhs == 0.0 {
            x.iter_mut().for_each(|c| *c = Complex64::ZERO);
            return Ok(0);
        }
        let gate = self.tol * norm_rhs;

        apply_a(x, &mut scratch, &mut h1, &mut ap);
        let mut r: Vec<Complex64> = (0..n).map(|i| rhs[i] - ap[i]).collect();
        let mut z: Vec<Complex64> = (0..n).map(|i| self.precond[i] * r[i]).collect();
        let mut p = z.clone();
        let mut rz: f64 = (0..n).map(|i| (r[i].conj() * z[i]).re).sum();
        for it in 0..self.max_iters {
            let rnorm = r.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if rnorm <= gate {
                return Ok(it);
            }
            ensure(rnorm.is_finite(), || "solver diverged to non-finite residual".to_string())
                .map_err(|_| Error::Numeric("solver diverged to non-finite residual".into()))?;
            apply_a(&p, &mut scratch, &mut h1, &mut ap);
            let pap: f64 = (0..n).map(|i| (p[i].conj() * ap[i]).re).sum();
            let step = rz / pap;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            for i in 0..n {
                z[i] = self.precond[i] * r[i];
            }
            let rz_next: f64 = (0..n).map(|i| (r[i].conj() * z[i]).re).sum();
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::Numeric(format!(
            "implicit solve stalled after {} iterations",
            self.max_iters
        )))
    }
}

/// Builds a band packet whose dispersion matches the 2-D grid exactly:
/// the fiber problem at momentum `k` is solved with the mapped momentum
/// `sin(k hy)/hy` on the grid's own x axis, and the recorded slope is the
/// chain-rule derivative with respect to the true `k`.
pub fn effective_packet(
    profile: &FieldProfile,
    band: usize,
    k_lo: f64,
    k_hi: f64,
    n_k: usize,
    envelope: Envelope,
    grid: &Grid2D,
) -> Result<WavePacket> {
    profile.validate()?;
    ensure(band >= 1, || "band index starts at 1".to_string())?;
    ensure(n_k >= 8, || format!("need at least 8 momentum nodes, got {n_k}"))?;
    ensure(k_hi > k_lo, || format!("empty momentum interval [{k_lo}, {k_hi}]"))?;
    let reach = k_lo.abs().max(k_hi.abs()) * grid.hy;
    ensure(reach <= 1.0, || {
        format!("longitudinal step too coarse for the momentum window: k hy = {reach:.3}")
    })?;
    let dk = (k_hi - k_lo) / (n_k - 1) as f64;
    let mut weight: Vec<f64> =
        (0..n_k).map(|i| envelope.shape(i as f64 / (n_k - 1) as f64)).collect();
    let squares: Vec<f64> = weight.iter().map(|w| w * w).collect();
    let scale = trapz(&squares, dk).sqrt();
    ensure(scale > 0.0, || "taper weights vanish everywhere".to_string())?;
    for w in &mut weight {
        *w /= scale;
    }

    let x = &grid.x;
    let mut k = Vec::with_capacity(n_k);
    let mut omega = Vec::with_capacity(n_k);
    let mut omega_prime = Vec::with_capacity(n_k);
    let mut psi = Vec::with_capacity(n_k);
    let mut refs: Option<Vec<Vec<f64>>> = None;
    for i in 0..n_k {
        let ki = k_lo + dk * i as f64;
        let k_eff = (ki * grid.hy).sin() / grid.hy;
        let t = build_fiber_operator(profile, x, k_eff);
        let pairs = lowest_eigenpairs(&t, x.h, band, refs.as_deref())?;
        let phi = &pairs[band - 1];
        // Chain rule through the mapped momentum.
        let fh: f64 = (0..x.n)
            .map(|m| (k_eff - profile.beta_at(x.x(m))) * phi.vector[m] * phi.vector[m])
            .sum::<f64>()
            * x.h;
        k.push(ki);
        omega.push(phi.value);
        omega_prime.push(2.0 * fh * (ki * grid.hy).cos());
        psi.push(phi.vector.clone());
        refs = Some(pairs.into_iter().map(|p| p.vector).collect());
    }
    Ok(WavePacket {
        profile: profile.clone(),
        band,
        envelope,
        k,
        dk,
        weight,
        omega,
        omega_prime,
        grid: x.clone(),
        psi,
    })
}

/// Synthesizes the packet on the grid at time `t`, unit discrete mass:
/// `psi(x, y) = N sum_i w_i phi_i(x) exp(i (k_i y - omega_i t))`.
pub fn synthesize(packet: &WavePacket, grid: &Grid2D, t: f64) -> Result<Vec<Complex64>> {
    ensure(packet.grid == grid.x, || {
        "packet and grid disagree on the transverse axis; build the packet on this grid"
            .to_string()
    })?;
    let span = grid.hy * (grid.ny - 1) as f64;
    let period = 2.0 * std::f64::consts::PI / packet.dk;
    ensure(span < period, || {
        format!("momentum spacing aliases inside the window: span {span:.1} >= period {period:.1}")
    })?;
    let (nx, ny) = (grid.x.n, grid.ny);
    let n_k = packet.k.len();
    let mut state = vec![Complex64::ZERO; nx * ny];
    // One column of longitudinal phases per momentum node.
    let amp = packet.dk / (2.0 * std::f64::consts::PI).sqrt();
    let mut phases = vec![Complex64::ZERO; ny];
    for i in 0..n_k {
        let w = packet.weight[i] * amp;
        if w == 0.0 {
            continue;
        }
        for (iy, ph) in phases.iter_mut().enumerate() {
            *ph = Complex64::from_polar(w, packet.k[i] * grid.y(iy) - packet.omega[i] * t);
        }
        for ix in 0..nx {
            let f = packet.psi[i][ix];
            if f == 0.0 {
                continue;
            }
            let row = &mut state[ix * ny..(ix + 1) * ny];
            for (s, ph) in row.iter_mut().zip(&phases) {
                *s += f * ph;
            }
        }
    }
    let mass: f64 = state.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.cell();
    ensure((mass - 1.0).abs() <= 1e-3, || {
        format!("synthesized mass {mass:.6} is off unity; widen the window or refine k")
    })?;
    let scale = 1.0 / mass.sqrt();
    state.iter_mut().for_each(|c| *c *= scale);
    Ok(state)
}

/// Time series of the evolved observables.
#[derive(Debug, Clone)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub current: Vec<f64>,
    /// Largest relative mass deviation from the start.
    pub norm_drift: f64,
    pub boundary_fraction_max: f64,
    pub cg_iters_max: usize,
}

/// Evolves `psi` for `steps` steps, recording `samples` evenly spaced
/// observable samples (the initial state included).
pub fn evolve_trace(
    stepper: &mut Stepper,
    mut psi: Vec<Complex64>,
    steps: usize,
    samples: usize,
    boundary_cap: f64,
) -> Result<(EvolutionTrace, Vec<Complex64>)> {
    ensure(samples >= 2 && steps >= samples - 1 && steps % (samples - 1) == 0, || {
        format!("samples ({samples}) must evenly divide the {steps} steps")
    })?;
    let stride = steps / (samples - 1);
    let dt = 2.0 * stepper.alpha;
    let mut times = Vec::with_capacity(samples);
    let mut mass = Vec::with_capacity(samples);
    let mut mean_y = Vec::with_capacity(samples);
    let mut current = Vec::with_capacity(samples);
    let mut boundary_max = 0.0f64;

    let mut record = |psi: &[Complex64], t: f64, op: &Operator2d| -> Result<()> {
        let obs = op.observe(psi);
        ensure(obs.boundary_fraction <= boundary_cap, || {
            format!(
                "packet reached the domain edge at t = {t:.3}: boundary fraction {:.2e}",
                obs.boundary_fraction
            )
        })
        .map_err(|e| Error::Numeric(e.to_string()))?;
        boundary_max = boundary_max.max(obs.boundary_fraction);
        times.push(t);
        mass.push(obs.mass);
        mean_y.push(obs.mean_y);
        current.push(obs.current);
        Ok(())
    };

    record(&psi, 0.0, &stepper.op)?;
    for n in 1..=steps {
        stepper.step(&mut psi)?;
        if n % stride == 0 {
            record(&psi, n as f64 * dt, &stepper.op)?;
        }
    }
    let norm_drift = mass.iter().map(|m| (m / mass[0] - 1.0).abs()).fold(0.0, f64::max);
    Ok((
        EvolutionTrace {
            times,
            mass,
            mean_y,
            current,
            norm_drift,
            boundary_fraction_max: boundary_max,
            cg_iters_max: stepper.max_iters_seen,
        },
        psi,
    ))
}

/// Side-by-side centroid tracks of the 2-D evolution and the synthesized
/// fiber reference.
#[derive(Debug, Clone)]
pub struct TransportComparison {
    pub trace: EvolutionTrace,
    pub reference_mean_y: Vec<f64>,
    /// Fibered edge current of the packet (time independent).
    pub fibered_current: f64,
    /// Largest centroid discrepancy across the samples.
    pub max_error: f64,
    /// Reference displacement over the full run.
    pub displacement: f64,
    /// `max_error` over `|displacement|`.
    pub rel_error: f64,
}

/// Evolves a packet on the unperturbed profile and compares its centroid
/// track against the exact fiber synthesis at every sample time.
pub fn fibered_vs_grid(
    packet: &WavePacket,
    grid: &Grid2D,
    opts: &EvolveOptions,
    steps: usize,
    samples: usize,
) -> Result<TransportComparison> {
    let op = Operator2d::new(&packet.profile, &PerturbationSpec::default(), grid.clone())?;
    let psi0 = synthesize(packet, grid, 0.0)?;
    let mut stepper = Stepper::new(op, opts)?;
    let (trace, _) = evolve_trace(&mut stepper, psi0, steps, samples, opts.boundary_cap)?;
    let mut reference_mean_y = Vec::with_capacity(trace.times.len());
    for &t in &trace.times {
        let state = synthesize(packet, grid, t)?;
        reference_mean_y.push(stepper.op.observe(&state).mean_y);
    }
    let max_error = trace
        .mean_y
        .iter()
        .zip(&reference_mean_y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let displacement = reference_mean_y[reference_mean_y.len() - 1] - reference_mean_y[0];
    ensure(displacement.abs() > 1e-9, || {
        "the reference packet does not move; a relative check needs a drifting packet".to_string()
    })?;
    Ok(TransportComparison {
        trace,
        reference_mean_y,
        fibered_current: packet.edge_current(),
        max_error,
        displacement,
        rel_error: max_error / displacement.abs(),
    })
}

/// Current history of a packet crossing a strip perturbation.
#[derive(Debug, Clone)]
pub struct VelocityProbe {
    pub trace: EvolutionTrace,
    pub initial_current: f64,
    /// Smallest sampled current, usually while the packet crosses the
    /// perturbed strip.
    pub dip: f64,
    /// Mean current over the final quarter of the samples.
    pub late_mean: f64,
}

/// Evolves a packet through a perturbation and records its current.
pub fn velocity_probe(
    packet: &WavePacket,
    perturbation: &PerturbationSpec,
    grid: &Grid2D,
    opts: &EvolveOptions,
    steps: usize,
    samples: usize,
) -> Result<VelocityProbe> {
    let op = Operator2d::new(&packet.profile, perturbation, grid.clone())?;
    let psi0 = synthesize(packet, grid, 0.0)?;
    let mut stepper = Stepper::new(op, opts)?;
    let (trace, _) = evolve_trace(&mut stepper, psi0, steps, samples, opts.boundary_cap)?;
    let dip = trace.current.iter().cloned().fold(f64::INFINITY, f64::min);
    let tail = (trace.current.len() / 4).max(2);
    let late = &trace.current[trace.current.len() - tail..];
    let late_mean = late.iter().sum::<f64>() / late.len() as f64;
    let initial_current = trace.current[0];
    Ok(VelocityProbe { trace, initial_current, dip, late_mean })
}

/// Writes the trace as CSV: `t,mass,mean_y,current`.
pub fn write_trace_csv<W: Write>(trace: &EvolutionTrace, w: &mut W) -> io::Result<()> {
    writeln!(w, "t,mass,mean_y,current")?;
    for i in 0..trace.times.len() {
        writeln!(
            w,
            "{:.12e},{:.12e},{:.12e},{:.12e}",
            trace.times[i], trace.mass[i], trace.mean_y[i], trace.current[i]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sharp() -> FieldProfile {
        FieldProfile::sharp(1.0, 1.5).unwrap()
    }

    fn small_grid() -> Grid2D {
        let x = FiberGrid::covering(-3.0, 3.0, 0.15).unwrap();
        Grid2D::new(x, 8.0, 0.25).unwrap()
    }

    /// Broad momentum window keeps the packet well inside the small grid.
    fn small_packet(grid: &Grid2D) -> WavePacket {
        effective_packet(&sharp(), 1, 0.2, 3.0, 9, Envelope::Gaussian, grid).unwrap()
    }

    fn random_state(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn synthesized_mode_is_a_discrete_interior_eigenvector() {
        let p = sharp();
        let grid = small_grid();
        let k = 0.6f64;
        let k_eff = (k * grid.hy).sin() / grid.hy;
        let t = build_fiber_operator(&p, &grid.x, k_eff);
        let pair = &lowest_eigenpairs(&t, grid.x.h, 1, None).unwrap()[0];
        let (nx, ny) = (grid.x.n, grid.ny);
        let mut state = vec![Complex64::ZERO; nx * ny];
        for ix in 0..nx {
            for iy in 0..ny {
                state[ix * ny + iy] =
                    Complex64::from_polar(pair.vector[ix], k * grid.y(iy));
            }
        }
        let op = Operator2d::new(&p, &PerturbationSpec::default(), grid.clone()).unwrap();
        let mut scratch = vec![Complex64::ZERO; state.len()];
        let mut out = vec![Complex64::ZERO; state.len()];
        op.apply(&state, &mut scratch, &mut out);
        let peak = pair.vector.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for ix in 0..nx {
            for iy in 2..ny - 2 {
                let i = ix * ny + iy;
                worst = worst.max((out[i] - pair.value * state[i]).norm());
            }
        }
        assert!(worst <= 1e-8 * (1.0 + pair.value) * peak, "residual {worst:.3e}");
    }

    #[test]
    fn jacobi_diagonal_matches_basis_probes() {
        let p = sharp();
        let x = FiberGrid::covering(-2.0, 2.0, 0.4).unwrap();
        let grid = Grid2D::new(x, 1.0, 0.5).unwrap();
        let bump = crate::profiles::Bump2d {
            amplitude: 0.3,
            x0: 0.5,
            y0: 0.0,
            half_width_x: 1.0,
            half_width_y: 0.8,
        };
        let pert = PerturbationSpec { a1: None, a2: Some(bump), q: Some(bump) };
        let op = Operator2d::new(&p, &pert, grid).unwrap();
        let n = op.grid.len();
        let d2 = op.diag_h2();
        let mut e = vec![Complex64::ZERO; n];
        let mut scratch = vec![Complex64::ZERO; n];
        let mut out = vec![Complex64::ZERO; n];
        for i in (0..n).step_by(7) {
            e.iter_mut().for_each(|c| *c = Complex64::ZERO);
            e[i] = Complex64::new(1.0, 0.0);
            op.apply(&e, &mut scratch, &mut out);
            let probe: f64 = out.iter().map(|c| c.norm_sqr()).sum();
            assert!(
                (probe - d2[i]).abs() <= 1e-11 * probe.max(1.0),
                "row {i}: probe {probe:.12e} vs closed form {:.12e}",
                d2[i]
            );
        }
    }

    #[test]
    fn one_step_satisfies_the_implicit_relation() {
        let p = sharp();
        let grid = small_grid();
        let op = Operator2d::new(&p, &PerturbationSpec::default(), grid).unwrap();
        let n = op.grid.len();
        let psi0 = random_state(n, 11);
        let opts = EvolveOptions { dt: 5e-3, ..EvolveOptions::default() };
        let mut stepper = Stepper::new(op, &opts).unwrap();
        let mut psi = psi0.clone();
        stepper.step(&mut psi).unwrap();
        let a = 0.5 * opts.dt;
        let mut scratch = vec![Complex64::ZERO; n];
        let mut h_new = vec![Complex64::ZERO; n];
        let mut h_old = vec![Complex64::ZERO; n];
        stepper.op.apply(&psi, &mut scratch, &mut h_new);
        stepper.op.apply(&psi0, &mut scratch, &mut h_old);
        let norm0: f64 = psi0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let mut residual = 0.0f64;
        for i in 0..n {
            let lhs = psi[i] + a * Complex64::i() * h_new[i];
            let rhs = psi0[i] - a * Complex64::i() * h_old[i];
            residual += (lhs - rhs).norm_sqr();
        }
        let residual = residual.sqrt();
        assert!(residual <= 50.0 * opts.cg_tol * norm0, "residual {residual:.3e}");
        // The unitary step preserves the norm.
        let norm1: f64 = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm1 / norm0 - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn norm_and_energy_survive_many_steps() {
        let p = sharp();
        let grid = small_grid();
        let packet = small_packet(&grid);
        let psi0 = synthesize(&packet, &grid, 0.0).unwrap();
        let op = Operator2d::new(&p, &PerturbationSpec::default(), grid).unwrap();
        let energy = |op: &Operator2d, v: &[Complex64]| -> f64 {
            let mut scratch = vec![Complex64::ZERO; v.len()];
            let mut out = vec![Complex64::ZERO; v.len()];
            op.apply(v, &mut scratch, &mut out);
            let num: f64 = v.iter().zip(&out).map(|(a, b)| (a.conj() * b).re).sum();
            let den: f64 = v.iter().map(|c| c.norm_sqr()).sum();
            num / den
        };
        let e0 = energy(&op, &psi0);
        let opts = EvolveOptions { dt: 1e-2, ..EvolveOptions::default() };
        let mut stepper = Stepper::new(op, &opts).unwrap();
        let mut psi = psi0;
        for _ in 0..40 {
            stepper.step(&mut psi).unwrap();
        }
        let mass: f64 = psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * stepper.op.grid.cell();
        assert!((mass - 1.0).abs() <= 1e-9, "mass drift {:.3e}", mass - 1.0);
        let e1 = energy(&stepper.op, &psi);
        assert!((e1 / e0 - 1.0).abs() <= 1e-9, "energy drift {:.3e}", e1 / e0 - 1.0);
        assert!(stepper.max_iters_seen < 80);
    }

    #[test]
    fn centroid_tracks_the_fibered_reference() {
        let p = sharp();
        let x = FiberGrid::covering(-4.5, 5.5, 0.1).unwrap();
        let grid = Grid2D::new(x, 20.0, 0.2).unwrap();
        let packet =
            effective_packet(&p, 1, 0.5, 1.7, 17, Envelope::Gaussian, &grid).unwrap();
        let opts = EvolveOptions { dt: 4e-3, ..EvolveOptions::default() };
        let cmp = fibered_vs_grid(&packet, &grid, &opts, 300, 6).unwrap();
        assert!(cmp.rel_error <= 1e-3, "relative centroid error {:.3e}", cmp.rel_error);
        assert!(cmp.displacement > 0.1, "displacement {:.3}", cmp.displacement);
        assert!(cmp.trace.norm_drift <= 1e-8);
        // At the start the grid current equals the fibered current.
        assert!(
            (cmp.trace.current[0] - cmp.fibered_current).abs() <= 1e-6,
            "grid {:.9} vs fiber {:.9}",
            cmp.trace.current[0],
            cmp.fibered_current
        );
        // The centroid moves at twice the current.
        let v = (cmp.reference_mean_y[5] - cmp.reference_mean_y[0])
            / (cmp.trace.times[5] - cmp.trace.times[0]);
        assert!(
            (v - 2.0 * cmp.fibered_current).abs() <= 2e-3 * v.abs(),
            "drift speed {v:.6} vs doubled current {:.6}",
            2.0 * cmp.fibered_current
        );
    }

    #[test]
    fn whole_cell_translation_shifts_the_centroid_exactly() {
        // Covariance of the observables under a lossless shift holds for
        // any state kept away from the domain edge.
        let p = sharp();
        let grid = small_grid();
        let op = Operator2d::new(&p, &PerturbationSpec::default(), grid.clone()).unwrap();
        let (nx, ny) = (grid.x.n, grid.ny);
        let m = 3usize;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut psi = vec![Complex64::ZERO; nx * ny];
        for ix in 0..nx {
            for iy in 2..ny - 2 - m {
                psi[ix * ny + iy] =
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let mut shifted = vec![Complex64::ZERO; psi.len()];
        for ix in 0..nx {
            for iy in 0..ny - m {
                shifted[ix * ny + iy + m] = psi[ix * ny + iy];
            }
        }
        let a = op.observe(&psi);
        let b = op.observe(&shifted);
        let gap = b.mean_y - a.mean_y - m as f64 * grid.hy;
        assert!(gap.abs() <= 1e-10, "centroid gap {gap:.3e}");
        let cur = b.current - a.current;
        assert!(cur.abs() <= 1e-10, "current gap {cur:.3e}");
        assert!((b.mass - a.mass).abs() <= 1e-12 * a.mass);
    }

    #[test]
    fn rejects_misconfigured_runs() {
        let p = sharp();
        let grid = small_grid();
        let bump = crate::profiles::Bump2d {
            amplitude: 0.1,
            x0: 0.0,
            y0: 0.0,
            half_width_x: 1.0,
            half_width_y: 1.0,
        };
        // Longitudinal gauge component.
        let pert = PerturbationSpec { a1: Some(bump), a2: None, q: None };
        assert!(matches!(
            Operator2d::new(&p, &pert, grid.clone()),
            Err(Error::Parameter(_))
        ));
        // Mismatched transverse axis.
        let packet = small_packet(&grid);
        let other = Grid2D::new(FiberGrid::covering(-2.0, 2.0, 0.2).unwrap(), 4.0, 0.25).unwrap();
        assert!(synthesize(&packet, &other, 0.0).is_err());
        // Sampling that does not divide the step count.
        let op = Operator2d::new(&p, &PerturbationSpec::default(), grid.clone()).unwrap();
        let psi = synthesize(&packet, &grid, 0.0).unwrap();
        let mut stepper = Stepper::new(op, &EvolveOptions::default()).unwrap();
        assert!(evolve_trace(&mut stepper, psi, 10, 4, 1e-6).is_err());
        // Degenerate time step.
        let op2 = Operator2d::new(&p, &PerturbationSpec::default(), grid).unwrap();
        assert!(Stepper::new(op2, &EvolveOptions { dt: 0.0, ..EvolveOptions::default() })
            .is_err());
    }

    #[test]
    fn trace_csv_is_deterministic() {
        let p = sharp();
        let grid = small_grid();
        let packet = small_packet(&grid);
        let run = || {
            let op =
                Operator2d::new(&p, &PerturbationSpec::default(), grid.clone()).unwrap();
            let psi = synthesize(&packet, &grid, 0.0).unwrap();
            let mut stepper = Stepper::new(op, &EvolveOptions::default()).unwrap();
            // The taper's truncation tails hold about 2e-6 near the edge.
            let (trace, _) = evolve_trace(&mut stepper, psi, 4, 3, 1e-4).unwrap();
            let mut buf = Vec::new();
            write_trace_csv(&trace, &mut buf).unwrap();
            buf
        };
        let a = run();
        assert_eq!(a, run());
        assert!(String::from_utf8(a).unwrap().starts_with("t,mass,mean_y,current\n"));
    }
}
