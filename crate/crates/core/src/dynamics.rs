//! Time grids, trajectories and the fixed-step RK4 driver shared by the
//! local (particle plus field) formulations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{field_energy, hamiltonian, Approximation, ModeLattice, ParticleParams, SystemState, Vec3};
use crate::stochastic::NoisePath;

/// Largest `dt · ω_max` accepted without a warning.
pub const STEP_WARN_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n_steps: usize) -> Result<Self> {
        let grid = Self { t0, dt, n_steps };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("grid.dt must be > 0, got {}", self.dt)));
        }
        if self.n_steps < 1 {
            return Err(Error::InvalidConfig("grid.n_steps must be >= 1".into()));
        }
        if !self.t0.is_finite() {
            return Err(Error::InvalidConfig("grid.t0 must be finite".into()));
        }
        Ok(())
    }

    /// Number of grid points, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Elapsed time since `t0` at point `i`.
    pub fn elapsed(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.time(self.n_steps)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub dx: Vec3,
    pub dp: Vec3,
    pub dalphas: Vec<Complex64>,
}

impl SystemState {
    /// `self + h · d`, with time advanced by `h`.
    pub fn advanced(&self, d: &StateDerivative, h: f64) -> SystemState {
        SystemState {
            t: self.t + h,
            x: self.x + d.dx * h,
            p: self.p + d.dp * h,
            alphas: self.alphas.iter().zip(&d.dalphas).map(|(a, da)| a + da * h).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<SystemState>,
    /// Right-hand side `dx/dt` evaluated at each grid point.
    pub velocities: Vec<Vec3>,
    pub energies: Vec<f64>,
    /// Energy-weighted occupation `Σ ħω|α|²`.
    pub photon_numbers: Vec<f64>,
    /// Plain occupation `Σ |α|²`.
    pub occupations: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn with_capacity(grid: TimeGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            states: Vec::with_capacity(n),
            velocities: Vec::with_capacity(n),
            energies: Vec::with_capacity(n),
            photon_numbers: Vec::with_capacity(n),
            occupations: Vec::with_capacity(n),
        }
    }

    pub(crate) fn record(
        &mut self,
        state: SystemState,
        velocity: Vec3,
        lattice: &ModeLattice,
        params: &ParticleParams,
        approx: Approximation,
    ) -> Result<()> {
        self.energies.push(hamiltonian(&state, lattice, params, approx)?);
        self.photon_numbers.push(field_energy(&state, lattice));
        self.occupations.push(state.alphas.iter().map(|a| a.norm_sqr()).sum());
        self.velocities.push(velocity);
        self.states.push(state);
        Ok(())
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.states.iter().map(|s| s.x).collect()
    }

    pub fn momenta(&self) -> Vec<Vec3> {
        self.states.iter().map(|s| s.p).collect()
    }

    pub fn last(&self) -> &SystemState {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

pub(crate) fn warn_if_coarse(grid: &TimeGrid, lattice: &ModeLattice) {
    let stiffness = grid.dt * lattice.omega_max();
    if stiffness > STEP_WARN_THRESHOLD {
        log::warn!("dt * omega_max = {stiffness:.3} exceeds {STEP_WARN_THRESHOLD}; mode phases are under-resolved");
    }
}

pub(crate) fn check_noise(grid: &TimeGrid, noise: Option<&NoisePath>) -> Result<()> {
    if let Some(path) = noise {
        if path.values.len() != grid.len() || path.grid.dt != grid.dt {
            return Err(Error::GridMismatch(format!(
                "noise path has {} samples at dt = {}, trajectory grid has {} at dt = {}",
                path.values.len(),
                path.grid.dt,
                grid.len(),
                grid.dt
            )));
        }
    }
    Ok(())
}

/// External force on step `i`; held constant across the RK4 stages.
pub(crate) fn force_at(noise: Option<&NoisePath>, i: usize) -> Vec3 {
    noise.map_or_else(Vec3::zeros, |path| path.values[i])
}

/// Classical RK4 over a local right-hand side `eom(state, force)`.
pub(crate) fn integrate_local<F>(
    state0: &SystemState,
    lattice: &ModeLattice,
    params: &ParticleParams,
    approx: Approximation,
    grid: &TimeGrid,
    noise: Option<&NoisePath>,
    eom: F,
) -> Result<Trajectory>
where
    F: Fn(&SystemState, &Vec3) -> StateDerivative,
{
    grid.validate()?;
    lattice.check_state(state0)?;
    check_noise(grid, noise)?;
    warn_if_coarse(grid, lattice);

    let dt = grid.dt;
    let mut traj = Trajectory::with_capacity(*grid);
    let mut state = state0.clone();
    state.t = grid.t0;

    for i in 0..grid.n_steps {
        let force = force_at(noise, i);
        let k1 = eom(&state, &force);
        let k2 = eom(&state.advanced(&k1, 0.5 * dt), &force);
        let k3 = eom(&state.advanced(&k2, 0.5 * dt), &force);
        let k4 = eom(&state.advanced(&k3, dt), &force);

        let mut next = SystemState {
            t: grid.time(i + 1),
            x: state.x + (k1.dx + (k2.dx + k3.dx) * 2.0 + k4.dx) * (dt / 6.0),
            p: state.p + (k1.dp + (k2.dp + k3.dp) * 2.0 + k4.dp) * (dt / 6.0),
            alphas: Vec::with_capacity(state.alphas.len()),
        };
        for (j, a) in state.alphas.iter().enumerate() {
            let incr = k1.dalphas[j] + (k2.dalphas[j] + k3.dalphas[j]) * 2.0 + k4.dalphas[j];
            next.alphas.push(a + incr * (dt / 6.0));
        }

        traj.record(state, k1.dx, lattice, params, approx)?;
        if !next.is_finite() {
            return Err(Error::Divergence { step: i + 1, t: next.t });
        }
        state = next;
    }
    let last_force = force_at(noise, grid.n_steps);
    let v = eom(&state, &last_force).dx;
    traj.record(state, v, lattice, params, approx)?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_times() {
        let g = TimeGrid::new(1.0, 0.25, 4).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.times(), vec![1.0, 1.25, 1.5, 1.75, 2.0]);
        assert_eq!(g.t_final(), 2.0);
    }

    #[test]
    fn invalid_grids() {
        assert!(TimeGrid::new(0.0, 0.0, 4).is_err());
        assert!(TimeGrid::new(0.0, -1.0, 4).is_err());
        assert!(TimeGrid::new(0.0, 0.1, 0).is_err());
    }
}
