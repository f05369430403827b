//! Numerical laboratory for a charged particle in two dimensions subject to a
//! transverse magnetic field that jumps (or ramps) across a straight line.
//!
//! The Hamiltonian is `H = p_x^2 + (p_y - beta(x))^2` in the Landau gauge,
//! where `beta` is the primitive of the field profile `b(x)`.  Translation
//! invariance along `y` reduces `H` to a family of half-line problems
//! `h(k) = p_x^2 + (k - beta(x))^2` indexed by the longitudinal momentum `k`.
//! Everything this crate computes flows out of that fiber decomposition:
//!
//! * [`bands`] assembles the dispersion curves `omega_j(k)` and their
//!   derivatives through four independent routes that must agree,
//! * [`wavepacket`] builds spectrally localized states and measures their
//!   edge current, spatial localization and ballistic transport,
//! * [`ledger`] evaluates the closed-form admissibility constants that
//!   control how much field smoothing and how large a perturbation the
//!   current lower bounds tolerate,
//! * [`evolve2d`] cross-checks the fiber picture against a genuine 2-D
//!   Crank-Nicolson evolution with gauge-consistent link phases,
//! * [`harness`] bundles all of the above into named, reproducible checks.
//!
//! Units: the field strength carries dimension 1/length^2, so `k` scales as
//! sqrt(field), energies as field, and lengths as 1/sqrt(field).  All grids
//! and tolerances below are expressed in those natural units.
//!
//! The runnable entry points live in `examples/` (one per capability) and in
//! the thin `iwatsuka` binary, which exposes the same capabilities as
//! subcommands for scripted runs.

pub mod bands;
pub mod eigensolve;
pub mod evolve2d;
pub mod fiber;
pub mod harness;
pub mod landau;
pub mod ledger;
pub mod profiles;
pub mod quadrature;
pub mod wavepacket;

use thiserror::Error;

/// Crate-wide error type.  The binary maps these onto exit codes:
/// config 2, numeric 3, failed checks 1.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value is outside the documented domain.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An iteration failed to converge or produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A run configuration could not be parsed or is internally inconsistent.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Parameter(msg()))
    }
}
