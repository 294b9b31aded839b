//! Dipole-approximation dynamics.
//!
//! The coupling `V = v0 (ε·p)` does not depend on position, so momentum is
//! conserved by the field interaction and every mode is a driven oscillator
//! with a constant drive. Its amplitude has a closed form, and the particle
//! velocity at time `t` follows from `(t, p, α(0))` alone.

use num_complex::Complex64;

use crate::dynamics::{integrate_local, StateDerivative, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::model::{coupling_dipole, Approximation, ModeLattice, ParticleParams, SystemState, Vec3};
use crate::stochastic::NoisePath;

pub(crate) fn eom_dipole_unchecked(
    state: &SystemState,
    lattice: &ModeLattice,
    params: &ParticleParams,
    external_force: &Vec3,
) -> StateDerivative {
    let hbar = lattice.units.hbar;
    let mut dx = state.p / params.mass;
    let mut dalphas = Vec::with_capacity(state.alphas.len());
    for (mode, a) in lattice.modes.iter().zip(&state.alphas) {
        // ∇_p V = v0 ε, and α + ᾱ = 2 Re α.
        dx += mode.eps() * (mode.v0 * 2.0 * a.re);
        let v = coupling_dipole(mode, &state.p);
        dalphas.push(Complex64::new(0.0, -mode.omega) * a - Complex64::new(0.0, v / hbar));
    }
    StateDerivative { dx, dp: *external_force, dalphas }
}

/// Right-hand side of the dipole equations of motion:
/// `dx = p/m + Σ v0 ε (α + ᾱ)`, `dp = F_ext`, `dα = −iωα − (i/ħ) V(p)`.
pub fn eom_dipole(
    state: &SystemState,
    lattice: &ModeLattice,
    params: &ParticleParams,
    external_force: &Vec3,
) -> Result<StateDerivative> {
    lattice.check_state(state)?;
    Ok(eom_dipole_unchecked(state, lattice, params, external_force))
}

/// Closed-form driven-oscillator solution
/// `z(t) = z(0) e^{−iωt} + (V/ħω)(1 − e^{−iωt})`,
/// the exact solution of `dz/dt = −iωz + (i/ħ)V` for constant `V`.
///
/// The mode amplitude under [`eom_dipole`] obeys the same equation with the
/// drive sign reversed, so `α(t) = mode_closed_form_dipole(α(0), −V, ω, ħ, t)`;
/// [`dipole_amplitude`] packages that call.
pub fn mode_closed_form_dipole(z0: Complex64, v: f64, omega: f64, hbar: f64, t: f64) -> Result<Complex64> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidFrequency(omega));
    }
    let phase = Complex64::from_polar(1.0, -omega * t);
    Ok(z0 * phase + (1.0 - phase) * (v / (hbar * omega)))
}

/// Exact dipole-mode amplitude `α(t)` for constant momentum.
pub fn dipole_amplitude(alpha0: Complex64, v: f64, omega: f64, hbar: f64, t: f64) -> Result<Complex64> {
    mode_closed_form_dipole(alpha0, -v, omega, hbar, t)
}

/// Particle velocity at elapsed time `t` in the force-free regime, computed
/// from the current momentum and the initial amplitudes only.
pub fn velocity_dipole_closed(
    t: f64,
    p: &Vec3,
    alphas0: &[Complex64],
    lattice: &ModeLattice,
    params: &ParticleParams,
) -> Result<Vec3> {
    if alphas0.len() != lattice.len() {
        return Err(Error::StateShape { expected: lattice.len(), got: alphas0.len() });
    }
    let hbar = lattice.units.hbar;
    let mut v = p / params.mass;
    for (mode, a0) in lattice.modes.iter().zip(alphas0) {
        let a = dipole_amplitude(*a0, coupling_dipole(mode, p), mode.omega, hbar, t)?;
        v += mode.eps() * (mode.v0 * 2.0 * a.re);
    }
    Ok(v)
}

/// RK4 integration of the dipole system; the external force is read from
/// `noise` (zero when absent).
pub fn integrate_dipole(
    state0: &SystemState,
    lattice: &ModeLattice,
    params: &ParticleParams,
    grid: &TimeGrid,
    noise: Option<&NoisePath>,
) -> Result<Trajectory> {
    integrate_local(state0, lattice, params, Approximation::Dipole, grid, noise, |s, f| {
        eom_dipole_unchecked(s, lattice, params, f)
    })
}
