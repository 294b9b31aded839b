//! Reproducible batches of stochastic trajectories and their statistics.
//!
//! Trajectory `i` draws all of its randomness from `derive_stream(seed, i)`
//! and results are reduced in index order once every trajectory has
//! finished, so the output is bit-identical for any worker count.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dipole::integrate_dipole;
use crate::dynamics::{TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::model::{build_lattice, Approximation, ModeLattice, ParticleParams, SystemState, UnitsConfig, Vec3};
use crate::observables::{
    mean_and_stderr, memory_kernel, memory_metric, msd_direct, msd_from_vacf, msd_from_velocity_integrals, vacf,
    vacf_two_time, KernelEquation, PathRecord, TimeSeries, VacfMode,
};
use crate::quadrupole::{integrate_quadrupole_local, integrate_quadrupole_reduced, ConvolutionMethod};
use crate::stochastic::{derive_stream, ou_noise_path, sample_initial_modes, InitialModeDist, NoiseConfig};

/// Environment variable capping the worker count (0 or unset = automatic).
pub const THREADS_ENV: &str = "NMGLE_THREADS";

/// Largest tolerated fraction of diverged trajectories.
pub const MAX_DIVERGED_FRACTION: f64 = 0.1;

/// Grids longer than this skip the quadratic two-time table and integrate
/// velocities per trajectory instead.
pub const MAX_TABLE_POINTS: usize = 4097;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Local,
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub box_length: f64,
    pub n_max: u32,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { box_length: std::f64::consts::TAU, n_max: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub units: UnitsConfig,
    pub particle: ParticleParams,
    pub lattice: LatticeConfig,
    pub approx: Approximation,
    pub formulation: Formulation,
    pub convolution: ConvolutionMethod,
    pub grid: TimeGrid,
    pub noise: NoiseConfig,
    pub initial_dist: InitialModeDist,
    /// Keep the sampled `α(0)`; when false the field starts empty, which
    /// removes the initial-condition forces.
    pub initial_forces: bool,
    pub x0: [f64; 3],
    pub p0: [f64; 3],
    pub n_trajectories: usize,
    pub master_seed: u64,
    /// Horizon for the memory score; `None` means `10 / ω_min`.
    pub memory_horizon: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            units: UnitsConfig::default(),
            particle: ParticleParams::default(),
            lattice: LatticeConfig::default(),
            approx: Approximation::Dipole,
            formulation: Formulation::Local,
            convolution: ConvolutionMethod::Incremental,
            grid: TimeGrid { t0: 0.0, dt: 0.01, n_steps: 1000 },
            noise: NoiseConfig::default(),
            initial_dist: InitialModeDist::Vacuum,
            initial_forces: true,
            x0: [0.0; 3],
            p0: [1.0, 0.0, 0.0],
            n_trajectories: 1,
            master_seed: 0,
            memory_horizon: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.units.validate()?;
        self.particle.validate()?;
        if !(self.lattice.box_length > 0.0 && self.lattice.box_length.is_finite()) {
            return Err(Error::InvalidConfig("lattice.box_length must be > 0".into()));
        }
        if self.lattice.n_max < 1 {
            return Err(Error::InvalidConfig("lattice.n_max must be >= 1".into()));
        }
        self.grid.validate()?;
        self.noise.validate()?;
        self.initial_dist.validate()?;
        if self.formulation == Formulation::Reduced && self.approx != Approximation::Quadrupole {
            return Err(Error::InvalidConfig(
                "dynamics.formulation = reduced requires dynamics.approx = quadrupole".into(),
            ));
        }
        if self.n_trajectories < 1 {
            return Err(Error::InvalidConfig("ensemble.n_trajectories must be >= 1".into()));
        }
        if !self.x0.iter().chain(&self.p0).all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("initial.x0 and initial.p0 must be finite".into()));
        }
        if let Some(h) = self.memory_horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidConfig("kernel.horizon must be > 0".into()));
            }
        }
        Ok(())
    }

    pub fn build_lattice(&self) -> Result<ModeLattice> {
        build_lattice(self.lattice.box_length, self.lattice.n_max, &self.units, &self.particle)
    }

    pub fn memory_horizon(&self, lattice: &ModeLattice) -> f64 {
        self.memory_horizon.unwrap_or(10.0 / lattice.omega_min())
    }
}

/// Initial amplitudes for trajectory `index`, and the stream positioned
/// after them.
pub fn trajectory_inputs(
    config: &SimConfig,
    lattice: &ModeLattice,
    index: usize,
) -> Result<(Vec<Complex64>, crate::stochastic::Stream)> {
    let mut stream = derive_stream(config.master_seed, index as u64);
    let mut alphas0 = sample_initial_modes(lattice, &config.initial_dist, &mut stream)?;
    if !config.initial_forces {
        alphas0.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
    }
    Ok((alphas0, stream))
}

/// Integrates trajectory `index` of the ensemble described by `config`,
/// with the formulation overridden by `formulation`.
pub fn run_trajectory_as(
    config: &SimConfig,
    lattice: &ModeLattice,
    index: usize,
    formulation: Formulation,
) -> Result<Trajectory> {
    let (alphas0, mut stream) = trajectory_inputs(config, lattice, index)?;
    let noise =
        if config.noise.enabled { Some(ou_noise_path(&config.noise, &config.grid, &mut stream)?) } else { None };
    let x0 = Vec3::from(config.x0);
    let p0 = Vec3::from(config.p0);
    let state0 = SystemState::new(config.grid.t0, x0, p0, alphas0);
    match (config.approx, formulation) {
        (Approximation::Dipole, Formulation::Local) => {
            integrate_dipole(&state0, lattice, &config.particle, &config.grid, noise.as_ref())
        }
        (Approximation::Quadrupole, Formulation::Local) => {
            integrate_quadrupole_local(&state0, lattice, &config.particle, &config.grid, noise.as_ref())
        }
        (Approximation::Quadrupole, Formulation::Reduced) => integrate_quadrupole_reduced(
            &x0,
            &p0,
            &state0.alphas,
            lattice,
            &config.particle,
            &config.grid,
            config.convolution,
            noise.as_ref(),
        ),
        (Approximation::Dipole, Formulation::Reduced) => {
            Err(Error::InvalidConfig("reduced formulation requires the quadrupole approximation".into()))
        }
    }
}

pub fn run_trajectory(config: &SimConfig, lattice: &ModeLattice, index: usize) -> Result<Trajectory> {
    run_trajectory_as(config, lattice, index, config.formulation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergedTrajectory {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub config: SimConfig,
    pub n_used: usize,
    pub diverged: Vec<DivergedTrajectory>,
    pub msd_direct: TimeSeries,
    pub msd_vacf: TimeSeries,
    pub vacf: TimeSeries,
    pub energy: TimeSeries,
    pub photon_number: TimeSeries,
    pub occupation: TimeSeries,
    /// Largest per-trajectory `max_t |H(t) − H(0)| / |H(0)|` (absolute when
    /// `H(0) = 0`).
    pub energy_drift: f64,
    /// Heuristic memory score of the momentum-equation kernel.
    pub memory_metric: f64,
    pub memory_horizon: f64,
    /// Wall-clock time; kept out of the serialized result so that reruns
    /// serialize identically.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
    #[serde(skip)]
    pub threads: usize,
}

impl EnsembleResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble result serializes")
    }
}

/// Reads [`THREADS_ENV`]; unset, empty or unparsable means 0 (automatic).
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(0)
}

/// Runs the ensemble with the worker count taken from `NMGLE_THREADS`.
pub fn run_ensemble(config: &SimConfig) -> Result<EnsembleResult> {
    run_ensemble_with_threads(config, threads_from_env())
}

fn relative_drift(series: &[f64]) -> f64 {
    let h0 = series[0];
    let scale = if h0 != 0.0 { h0.abs() } else { 1.0 };
    series.iter().map(|h| (h - h0).abs() / scale).fold(0.0, f64::max)
}

pub fn run_ensemble_with_threads(config: &SimConfig, threads: usize) -> Result<EnsembleResult> {
    config.validate()?;
    let started = Instant::now();
    let lattice = config.build_lattice()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let workers = pool.current_num_threads();

    let outcomes: Vec<Result<PathRecord>> = pool.install(|| {
        (0..config.n_trajectories)
            .into_par_iter()
            .map(|i| run_trajectory(config, &lattice, i).map(|t| PathRecord::from(&t)))
            .collect()
    });

    let mut paths = Vec::with_capacity(outcomes.len());
    let mut diverged = Vec::new();
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(p) => paths.push(p),
            Err(e @ Error::Divergence { .. }) => diverged.push(DivergedTrajectory { index, message: e.to_string() }),
            Err(e) => return Err(e),
        }
    }
    let total = config.n_trajectories;
    if diverged.len() as f64 > MAX_DIVERGED_FRACTION * total as f64 || paths.is_empty() {
        return Err(Error::EnsembleDiverged { diverged: diverged.len(), total });
    }

    let grid = config.grid;
    let msd_direct = msd_direct(&paths)?;
    let msd_vacf = if grid.len() <= MAX_TABLE_POINTS {
        msd_from_vacf(&vacf_two_time(&paths)?)?
    } else {
        msd_from_velocity_integrals(&paths)?
    };
    let vacf = vacf(&paths, VacfMode::Origin)?;
    let series = |f: &dyn Fn(&PathRecord, usize) -> f64| -> Result<TimeSeries> {
        let (mean, se) = mean_and_stderr(paths.len(), grid.len(), |s, t| f(&paths[s], t));
        TimeSeries::new(grid, mean, Some(se))
    };
    let energy = series(&|p, t| p.energies[t])?;
    let photon_number = series(&|p, t| p.photon_numbers[t])?;
    let occupation = series(&|p, t| p.occupations[t])?;
    let energy_drift = paths.iter().map(|p| relative_drift(&p.energies)).fold(0.0, f64::max);

    let horizon = config.memory_horizon(&lattice);
    let kernel = memory_kernel(&lattice, config.approx, KernelEquation::Momentum);
    let memory_metric = memory_metric(&kernel, horizon)?;

    Ok(EnsembleResult {
        config: config.clone(),
        n_used: paths.len(),
        diverged,
        msd_direct,
        msd_vacf,
        vacf,
        energy,
        photon_number,
        occupation,
        energy_drift,
        memory_metric,
        memory_horizon: horizon,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        threads: workers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_msd: f64,
    /// Slope of `log MSD` against `log t` over the last decade of time;
    /// `None` when the series is degenerate.
    pub msd_exponent: Option<f64>,
    pub memory_metric: f64,
    pub energy_drift: f64,
    /// `max_t |N(t) − N(0)|` of the mean energy-weighted photon number,
    /// relative to `N(0)` when that is nonzero.
    pub photon_number_drift: f64,
    pub n_used: usize,
    pub n_diverged: usize,
}

/// Least-squares slope of `log MSD` on `log t` for `t ∈ [t_end/10, t_end]`.
pub fn msd_exponent(series: &TimeSeries) -> Option<f64> {
    let grid = series.grid;
    let t_end = grid.elapsed(grid.n_steps);
    let pts: Vec<(f64, f64)> = (1..grid.len())
        .map(|i| (grid.elapsed(i), series.values[i]))
        .filter(|&(t, m)| t >= t_end / 10.0 * (1.0 - 1e-12) && t > 0.0 && m > 0.0)
        .map(|(t, m)| (t.ln(), m.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

pub fn summarize(result: &EnsembleResult) -> Result<Summary> {
    let msd = &result.msd_direct.values;
    let final_msd = *msd.last().ok_or(Error::EmptyInput("ensemble result"))?;
    Ok(Summary {
        final_msd,
        msd_exponent: msd_exponent(&result.msd_direct),
        memory_metric: result.memory_metric,
        energy_drift: result.energy_drift,
        photon_number_drift: relative_drift(&result.photon_number.values),
        n_used: result.n_used,
        n_diverged: result.diverged.len(),
    })
}
