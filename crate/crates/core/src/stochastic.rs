//! Reproducible randomness: per-trajectory streams, initial mode amplitudes,
//! and the colored (Ornstein-Uhlenbeck) external force.
//!
//! Every random draw in the crate goes through a [`Stream`] obtained from
//! [`derive_stream`]. Streams are ChaCha8 keyed by the master seed with the
//! trajectory index as the stream id, so stream `i` is the same sequence
//! whichever worker produces it and in whatever order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::TimeGrid;
use crate::error::{Error, Result};
use crate::model::{ModeLattice, Vec3};

pub type Stream = ChaCha8Rng;

pub fn derive_stream(master_seed: u64, trajectory_index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trajectory_index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub tau_c: f64,
    pub enabled: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma: 0.0, tau_c: 1.0, enabled: false }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise.sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.tau_c > 0.0 && self.tau_c.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise.tau_c must be > 0, got {}", self.tau_c)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub grid: TimeGrid,
    pub values: Vec<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialModeDist {
    Vacuum,
    Thermal { temperature: f64 },
    Fixed { occupation: f64 },
}

impl InitialModeDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialModeDist::Vacuum => Ok(()),
            InitialModeDist::Thermal { temperature } if temperature >= 0.0 && temperature.is_finite() => Ok(()),
            InitialModeDist::Thermal { temperature } => {
                Err(Error::InvalidConfig(format!("initial.temperature must be >= 0, got {temperature}")))
            }
            InitialModeDist::Fixed { occupation } if occupation >= 0.0 && occupation.is_finite() => Ok(()),
            InitialModeDist::Fixed { occupation } => {
                Err(Error::InvalidConfig(format!("initial.occupation must be >= 0, got {occupation}")))
            }
        }
    }
}

/// Mean occupation `1/(e^{ħω/T} − 1)`; zero at `T = 0`.
pub fn bose_occupation(hbar_omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    1.0 / (hbar_omega / temperature).exp_m1()
}

/// One amplitude per lattice mode, in lattice order.
pub fn sample_initial_modes(
    lattice: &ModeLattice,
    dist: &InitialModeDist,
    stream: &mut Stream,
) -> Result<Vec<Complex64>> {
    dist.validate()?;
    let hbar = lattice.units.hbar;
    let alphas = match *dist {
        InitialModeDist::Vacuum => vec![Complex64::new(0.0, 0.0); lattice.len()],
        InitialModeDist::Fixed { occupation } => {
            let r = occupation.sqrt();
            lattice
                .modes
                .iter()
                .map(|_| Complex64::from_polar(r, stream.random::<f64>() * std::f64::consts::TAU))
                .collect()
        }
        InitialModeDist::Thermal { temperature } => lattice
            .modes
            .iter()
            .map(|m| {
                let s = (0.5 * bose_occupation(hbar * m.omega, temperature)).sqrt();
                let re: f64 = stream.sample(StandardNormal);
                let im: f64 = stream.sample(StandardNormal);
                Complex64::new(s * re, s * im)
            })
            .collect(),
    };
    Ok(alphas)
}

/// Stationary OU path per Cartesian component, exact discretization
/// `F_{n+1} = ρ F_n + σ sqrt(1 − ρ²) ξ`, `ρ = e^{−dt/τ_c}`, started from the
/// stationary law. A disabled config gives the all-zero path.
pub fn ou_noise_path(config: &NoiseConfig, grid: &TimeGrid, stream: &mut Stream) -> Result<NoisePath> {
    config.validate()?;
    grid.validate()?;
    if !config.enabled {
        return Ok(NoisePath { grid: *grid, values: vec![Vec3::zeros(); grid.len()] });
    }
    let rho = (-grid.dt / config.tau_c).exp();
    let kick = config.sigma * (1.0 - rho * rho).sqrt();
    let normal3 = |s: &mut Stream| {
        Vec3::new(s.sample::<f64, _>(StandardNormal), s.sample(StandardNormal), s.sample(StandardNormal))
    };
    let mut values = Vec::with_capacity(grid.len());
    let mut f = normal3(stream) * config.sigma;
    values.push(f);
    for _ in 0..grid.n_steps {
        f = f * rho + normal3(stream) * kick;
        values.push(f);
    }
    Ok(NoisePath { grid: *grid, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_lattice, ParticleParams, UnitsConfig};
    use std::f64::consts::PI;

    fn lattice() -> ModeLattice {
        build_lattice(2.0 * PI, 1, &UnitsConfig::default(), &ParticleParams::default()).unwrap()
    }

    #[test]
    fn streams_are_deterministic_and_separated() {
        let a: Vec<u64> = (0..100)
            .map({
                let mut s = derive_stream(42, 0);
                move |_| s.random()
            })
            .collect();
        let b: Vec<u64> = (0..100)
            .map({
                let mut s = derive_stream(42, 0);
                move |_| s.random()
            })
            .collect();
        let c: Vec<u64> = (0..100)
            .map({
                let mut s = derive_stream(42, 1);
                move |_| s.random()
            })
            .collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn vacuum_is_zero() {
        let mut s = derive_stream(1, 0);
        let a = sample_initial_modes(&lattice(), &InitialModeDist::Vacuum, &mut s).unwrap();
        assert!(a.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn fixed_occupation_modulus() {
        let mut s = derive_stream(1, 0);
        let a = sample_initial_modes(&lattice(), &InitialModeDist::Fixed { occupation: 4.0 }, &mut s).unwrap();
        for z in a {
            assert!((z.norm() - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_parameters_rejected() {
        let mut s = derive_stream(1, 0);
        assert!(sample_initial_modes(&lattice(), &InitialModeDist::Thermal { temperature: -1.0 }, &mut s).is_err());
        assert!(sample_initial_modes(&lattice(), &InitialModeDist::Fixed { occupation: -0.1 }, &mut s).is_err());
    }

    #[test]
    fn zero_sigma_or_disabled_gives_zero_path() {
        let grid = TimeGrid::new(0.0, 0.1, 50).unwrap();
        let mut s = derive_stream(3, 0);
        let zero = ou_noise_path(&NoiseConfig { sigma: 0.0, tau_c: 1.0, enabled: true }, &grid, &mut s).unwrap();
        assert!(zero.values.iter().all(|v| *v == Vec3::zeros()));
        let off = ou_noise_path(&NoiseConfig { sigma: 2.0, tau_c: 1.0, enabled: false }, &grid, &mut s).unwrap();
        assert!(off.values.iter().all(|v| *v == Vec3::zeros()));
        assert_eq!(off.values.len(), grid.len());
    }

    #[test]
    fn bose_factor() {
        assert_eq!(bose_occupation(1.0, 0.0), 0.0);
        assert!((bose_occupation(1.0, 1.0) - 1.0 / (1f64.exp() - 1.0)).abs() < 1e-15);
    }
}
