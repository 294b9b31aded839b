//! Units, the truncated transverse mode lattice, coupling amplitudes and the
//! particle-field Hamiltonian in the dipole and quadrupole approximations.
//!
//! Field modes are carried as complex c-number amplitudes `α`; the creation
//! operator of the quantized expansion maps to `conj(α)`. A lattice is built
//! once and then only read, so it can be shared freely between workers.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitsConfig {
    pub hbar: f64,
    pub c: f64,
}

impl Default for UnitsConfig {
    fn default() -> Self {
        Self { hbar: 1.0, c: 1.0 }
    }
}

impl UnitsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::InvalidConfig(format!("units.hbar must be > 0, got {}", self.hbar)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidConfig(format!("units.c must be > 0, got {}", self.c)));
        }
        Ok(())
    }
}

/// Particle mass, charge and the global coupling multiplier `g` that stands
/// in for the unspecified coefficients of the nonlocal Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleParams {
    pub mass: f64,
    pub charge: f64,
    pub coupling_scale: f64,
}

impl Default for ParticleParams {
    fn default() -> Self {
        Self { mass: 1.0, charge: 1.0, coupling_scale: 1.0 }
    }
}

impl ParticleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidConfig(format!("particle.mass must be > 0, got {}", self.mass)));
        }
        if !self.charge.is_finite() {
            return Err(Error::InvalidConfig("particle.charge must be finite".into()));
        }
        if !(self.coupling_scale >= 0.0 && self.coupling_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("particle.coupling must be >= 0, got {}", self.coupling_scale)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approximation {
    Dipole,
    Quadrupole,
}

/// Which of the two transverse polarizations a mode entry carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Polarization {
    First,
    Second,
}

/// One `(k, r)` entry of the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    /// Integer lattice index, `k = 2π n / L`.
    pub n: [i32; 3],
    pub k: Vec3,
    pub omega: f64,
    pub eps1: Vec3,
    pub eps2: Vec3,
    pub r: Polarization,
    pub v0: f64,
}

impl Mode {
    /// The polarization vector `ε_r(k)` this entry couples through.
    pub fn eps(&self) -> Vec3 {
        match self.r {
            Polarization::First => self.eps1,
            Polarization::Second => self.eps2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeLattice {
    pub box_length: f64,
    pub n_max: u32,
    pub volume: f64,
    pub units: UnitsConfig,
    pub modes: Vec<Mode>,
}

impl ModeLattice {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn omega_min(&self) -> f64 {
        self.modes.iter().map(|m| m.omega).fold(f64::INFINITY, f64::min)
    }

    pub fn omega_max(&self) -> f64 {
        self.modes.iter().map(|m| m.omega).fold(0.0, f64::max)
    }

    /// Lattice made of explicitly supplied modes. Used for hand-built
    /// single-mode systems; `n_max` is recorded as 0.
    pub fn from_modes(modes: Vec<Mode>, volume: f64, units: UnitsConfig) -> Self {
        Self { box_length: volume.cbrt(), n_max: 0, volume, units, modes }
    }

    pub fn check_state(&self, state: &SystemState) -> Result<()> {
        if state.alphas.len() != self.modes.len() {
            return Err(Error::StateShape { expected: self.modes.len(), got: state.alphas.len() });
        }
        Ok(())
    }
}

/// Particle phase-space point plus one complex amplitude per lattice mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub x: Vec3,
    pub p: Vec3,
    pub alphas: Vec<Complex64>,
}

impl SystemState {
    pub fn new(t: f64, x: Vec3, p: Vec3, alphas: Vec<Complex64>) -> Self {
        Self { t, x, p, alphas }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.x.iter().all(|v| v.is_finite())
            && self.p.iter().all(|v| v.is_finite())
            && self.alphas.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

/// Orthonormal transverse pair for `k`.
///
/// `eps1 = normalize(a × k)` where `a` is the coordinate axis with the
/// smallest `|k_i|` (on ties the higher axis index wins), and
/// `eps2 = normalize(k × eps1)`.
pub fn polarization_basis(k: &Vec3) -> Result<(Vec3, Vec3)> {
    let norm = k.norm();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    let mut axis = 0;
    for i in 1..3 {
        if k[i].abs() <= k[axis].abs() {
            axis = i;
        }
    }
    let a = Vec3::ith(axis, 1.0);
    let eps1 = a.cross(k).normalize();
    let eps2 = k.cross(&eps1).normalize();
    Ok((eps1, eps2))
}

/// `g · (−e/m) · sqrt(ħ c² / (2 V ω))`.
pub fn coupling_v0(omega: f64, params: &ParticleParams, volume: f64, units: &UnitsConfig) -> f64 {
    let scale = (units.hbar * units.c * units.c / (2.0 * volume * omega)).sqrt();
    params.coupling_scale * (-params.charge / params.mass) * scale
}

/// All modes with `k = 2π n / L`, `0 < |n| ≤ n_max`, two polarizations each,
/// sorted lexicographically by `n` and then by polarization.
pub fn build_lattice(box_length: f64, n_max: u32, units: &UnitsConfig, params: &ParticleParams) -> Result<ModeLattice> {
    if !(box_length > 0.0 && box_length.is_finite()) {
        return Err(Error::InvalidConfig(format!("lattice.box_length must be > 0, got {box_length}")));
    }
    if n_max < 1 {
        return Err(Error::InvalidConfig("lattice.n_max must be >= 1".into()));
    }
    units.validate()?;
    params.validate()?;

    let volume = box_length.powi(3);
    let r = n_max as i32;
    let r2 = r * r;
    let mut modes = Vec::new();
    for nx in -r..=r {
        for ny in -r..=r {
            for nz in -r..=r {
                let n2 = nx * nx + ny * ny + nz * nz;
                if n2 == 0 || n2 > r2 {
                    continue;
                }
                let k = Vec3::new(nx as f64, ny as f64, nz as f64) * (2.0 * std::f64::consts::PI / box_length);
                let omega = units.c * k.norm();
                let (eps1, eps2) = polarization_basis(&k)?;
                let v0 = coupling_v0(omega, params, volume, units);
                for pol in [Polarization::First, Polarization::Second] {
                    modes.push(Mode { n: [nx, ny, nz], k, omega, eps1, eps2, r: pol, v0 });
                }
            }
        }
    }
    Ok(ModeLattice { box_length, n_max, volume, units: *units, modes })
}

/// Dipole coupling `V_{k,r}(p) = v0 (ε_r · p)`.
pub fn coupling_dipole(mode: &Mode, p: &Vec3) -> f64 {
    mode.v0 * mode.eps().dot(p)
}

/// Quadrupole coupling `V_{k,r}(p, x) = i v0 (ε_r · p)(k · x)`; always
/// pure imaginary.
pub fn coupling_vq(mode: &Mode, p: &Vec3, x: &Vec3) -> Complex64 {
    Complex64::new(0.0, mode.v0 * mode.eps().dot(p) * mode.k.dot(x))
}

/// Complex interaction sum `Σ V (α ± ᾱ)` before taking the real part.
pub(crate) fn interaction_sum(state: &SystemState, lattice: &ModeLattice, approx: Approximation) -> Complex64 {
    lattice
        .modes
        .iter()
        .zip(&state.alphas)
        .map(|(mode, a)| match approx {
            Approximation::Dipole => Complex64::from(coupling_dipole(mode, &state.p)) * (a + a.conj()),
            Approximation::Quadrupole => coupling_vq(mode, &state.p, &state.x) * (a - a.conj()),
        })
        .sum()
}

/// Field energy `Σ ħ ω |α|²`.
pub fn field_energy(state: &SystemState, lattice: &ModeLattice) -> f64 {
    let hbar = lattice.units.hbar;
    lattice.modes.iter().zip(&state.alphas).map(|(m, a)| hbar * m.omega * a.norm_sqr()).sum()
}

/// Total energy of the nonlocal Hamiltonian (the stochastic scalar term is
/// handled as an external force and is not part of this value).
pub fn hamiltonian(
    state: &SystemState,
    lattice: &ModeLattice,
    params: &ParticleParams,
    approx: Approximation,
) -> Result<f64> {
    lattice.check_state(state)?;
    let kinetic = state.p.norm_squared() / (2.0 * params.mass);
    Ok(kinetic + field_energy(state, lattice) + interaction_sum(state, lattice, approx).re)
}
