//! Ensemble diagnostics: velocity autocorrelation, mean-square displacement
//! (directly and as the double time integral of the two-time velocity
//! correlation), photon number, memory kernels and a scalar memory score.

use serde::{Deserialize, Serialize};

use crate::dynamics::{TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::model::{field_energy, Approximation, ModeLattice, SystemState, Vec3};

/// Floor on `max |K|` in the memory-score normalization.
pub const METRIC_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(grid: TimeGrid, values: Vec<f64>, stderr: Option<Vec<f64>>) -> Result<Self> {
        if values.len() != grid.len() || stderr.as_ref().is_some_and(|s| s.len() != values.len()) {
            return Err(Error::GridMismatch(format!(
                "series of length {} on a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values, stderr })
    }
}

/// The parts of a trajectory the ensemble statistics need.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub grid: TimeGrid,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub energies: Vec<f64>,
    pub photon_numbers: Vec<f64>,
    pub occupations: Vec<f64>,
}

impl From<&Trajectory> for PathRecord {
    fn from(t: &Trajectory) -> Self {
        Self {
            grid: t.grid,
            positions: t.positions(),
            velocities: t.velocities.clone(),
            energies: t.energies.clone(),
            photon_numbers: t.photon_numbers.clone(),
            occupations: t.occupations.clone(),
        }
    }
}

impl PathRecord {
    /// Record from explicit positions and velocities; the energy-like
    /// series are zero-filled.
    pub fn from_kinematics(grid: TimeGrid, positions: Vec<Vec3>, velocities: Vec<Vec3>) -> Result<Self> {
        if positions.len() != grid.len() || velocities.len() != grid.len() {
            return Err(Error::GridMismatch("kinematic series length differs from grid".into()));
        }
        let n = grid.len();
        Ok(Self {
            grid,
            positions,
            velocities,
            energies: vec![0.0; n],
            photon_numbers: vec![0.0; n],
            occupations: vec![0.0; n],
        })
    }
}

/// Mean and standard error of the mean, per column of per-sample rows.
pub(crate) fn mean_and_stderr<F>(n_samples: usize, len: usize, value: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(usize, usize) -> f64,
{
    let mut mean = vec![0.0; len];
    let mut m2 = vec![0.0; len];
    for s in 0..n_samples {
        let count = (s + 1) as f64;
        for t in 0..len {
            let v = value(s, t);
            let delta = v - mean[t];
            mean[t] += delta / count;
            m2[t] += delta * (v - mean[t]);
        }
    }
    let stderr = if n_samples > 1 {
        let n = n_samples as f64;
        m2.iter().map(|q| (q / (n - 1.0) / n).sqrt()).collect()
    } else {
        vec![0.0; len]
    };
    (mean, stderr)
}

fn check_ensemble(paths: &[PathRecord]) -> Result<TimeGrid> {
    let first = paths.first().ok_or(Error::EmptyInput("trajectory ensemble"))?;
    for p in paths {
        if p.grid != first.grid || p.positions.len() != first.grid.len() || p.velocities.len() != first.grid.len() {
            return Err(Error::GridMismatch("trajectories do not share a time grid".into()));
        }
    }
    Ok(first.grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VacfMode {
    /// `⟨v(t₀)·v(t₀ + τ)⟩` from the first grid point.
    Origin,
    /// Additionally averaged over all available time origins.
    Stationary,
}

/// Velocity autocorrelation as a function of lag, with ensemble stderr.
pub fn vacf(paths: &[PathRecord], mode: VacfMode) -> Result<TimeSeries> {
    let grid = check_ensemble(paths)?;
    let n = grid.len();
    let (values, stderr) = match mode {
        VacfMode::Origin => {
            mean_and_stderr(paths.len(), n, |s, lag| paths[s].velocities[0].dot(&paths[s].velocities[lag]))
        }
        VacfMode::Stationary => {
            let per_path: Vec<Vec<f64>> = paths
                .iter()
                .map(|p| {
                    (0..n)
                        .map(|lag| {
                            let count = n - lag;
                            (0..count).map(|t| p.velocities[t].dot(&p.velocities[t + lag])).sum::<f64>() / count as f64
                        })
                        .collect()
                })
                .collect();
            mean_and_stderr(paths.len(), n, |s, lag| per_path[s][lag])
        }
    };
    TimeSeries::new(TimeGrid { t0: 0.0, ..grid }, values, Some(stderr))
}

/// Ensemble-mean two-time velocity correlation `C(t₁, t₂) = ⟨v(t₁)·v(t₂)⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct VacfTable {
    pub grid: TimeGrid,
    /// Row-major `len × len`.
    pub values: Vec<f64>,
    /// Standard error of the double integral at each upper limit, from the
    /// per-trajectory integrals.
    pub integral_stderr: Option<Vec<f64>>,
}

impl VacfTable {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.len() + j]
    }
}

/// Weights of `∫_{t_i}^{t_{i+1}} f dt` in units of `dt`, from the cubic
/// through the four nearest samples (one-sided at the ends). Grids shorter
/// than four points fall back to the trapezoid panel. Summed over panels
/// this is the trapezoid rule with fourth-order end corrections.
fn panel_weights(i: usize, n: usize) -> [(usize, f64); 4] {
    const C: f64 = 1.0 / 24.0;
    if n < 4 {
        return [(i, 0.5), (i + 1, 0.5), (i, 0.0), (i, 0.0)];
    }
    if i == 0 {
        [(0, 9.0 * C), (1, 19.0 * C), (2, -5.0 * C), (3, C)]
    } else if i + 2 == n {
        [(n - 4, C), (n - 3, -5.0 * C), (n - 2, 19.0 * C), (n - 1, 9.0 * C)]
    } else {
        [(i - 1, -C), (i, 13.0 * C), (i + 1, 13.0 * C), (i + 2, -C)]
    }
}

/// `∫₀^{t_m} v dt` for each grid point `m`.
fn cumulative_displacement(velocities: &[Vec3], dt: f64) -> Vec<Vec3> {
    let n = velocities.len();
    let mut out = Vec::with_capacity(n);
    let mut acc = Vec3::zeros();
    out.push(acc);
    for i in 0..n.saturating_sub(1) {
        for (k, w) in panel_weights(i, n) {
            acc += velocities[k] * (w * dt);
        }
        out.push(acc);
    }
    out
}

pub fn vacf_two_time(paths: &[PathRecord]) -> Result<VacfTable> {
    let grid = check_ensemble(paths)?;
    let n = grid.len();
    let mut values = vec![0.0; n * n];
    for p in paths {
        for i in 0..n {
            let vi = p.velocities[i];
            let row = &mut values[i * n..(i + 1) * n];
            for (c, vj) in row.iter_mut().zip(&p.velocities) {
                *c += vi.dot(vj);
            }
        }
    }
    let inv = 1.0 / paths.len() as f64;
    values.iter_mut().for_each(|v| *v *= inv);

    let disp: Vec<Vec<Vec3>> = paths.iter().map(|p| cumulative_displacement(&p.velocities, grid.dt)).collect();
    let (_, stderr) = mean_and_stderr(paths.len(), n, |s, t| disp[s][t].norm_squared());
    Ok(VacfTable { grid, values, integral_stderr: Some(stderr) })
}

/// `⟨|x(t) − x(0)|²⟩` with ensemble stderr.
pub fn msd_direct(paths: &[PathRecord]) -> Result<TimeSeries> {
    let grid = check_ensemble(paths)?;
    let (values, stderr) =
        mean_and_stderr(paths.len(), grid.len(), |s, t| (paths[s].positions[t] - paths[s].positions[0]).norm_squared());
    TimeSeries::new(grid, values, Some(stderr))
}

/// `∫₀ᵗ∫₀ᵗ C(t₁, t₂) dt₁ dt₂` for every upper limit `t` on the table grid,
/// as the product rule of the panel quadrature used for displacements
/// (trapezoid with fourth-order end corrections). O(len²).
pub fn msd_from_vacf(table: &VacfTable) -> Result<TimeSeries> {
    let n = table.grid.len();
    if table.values.len() != n * n {
        return Err(Error::GridMismatch(format!(
            "correlation table has {} entries, grid needs {}",
            table.values.len(),
            n * n
        )));
    }
    let h = table.grid.dt;
    // weights[k]: quadrature weight of sample k for ∫₀^{t_m}; row[j] = Σ_k weights[k] C(k, j).
    let mut weights = vec![0.0; n];
    let mut row = vec![0.0; n];
    let mut out = Vec::with_capacity(n);
    out.push(0.0);
    for m in 1..n {
        for (k, w) in panel_weights(m - 1, n) {
            if w == 0.0 {
                continue;
            }
            weights[k] += w * h;
            let c = &table.values[k * n..(k + 1) * n];
            row.iter_mut().zip(c).for_each(|(r, v)| *r += w * h * v);
        }
        out.push(weights.iter().zip(&row).map(|(w, r)| w * r).sum());
    }
    TimeSeries::new(table.grid, out, table.integral_stderr.clone())
}

/// The same double integral computed per trajectory as `|∫v|²` and then
/// averaged; equal to [`msd_from_vacf`] of [`vacf_two_time`] up to
/// rounding, without the quadratic-size table.
pub fn msd_from_velocity_integrals(paths: &[PathRecord]) -> Result<TimeSeries> {
    let grid = check_ensemble(paths)?;
    let disp: Vec<Vec<Vec3>> = paths.iter().map(|p| cumulative_displacement(&p.velocities, grid.dt)).collect();
    let (values, stderr) = mean_and_stderr(paths.len(), grid.len(), |s, t| disp[s][t].norm_squared());
    TimeSeries::new(grid, values, Some(stderr))
}

/// Energy-weighted occupation `Σ ħω|α|²`.
pub fn photon_number(state: &SystemState, lattice: &ModeLattice) -> Result<f64> {
    lattice.check_state(state)?;
    Ok(field_energy(state, lattice))
}

/// Plain occupation `Σ |α|²`.
pub fn occupation(state: &SystemState, lattice: &ModeLattice) -> Result<f64> {
    lattice.check_state(state)?;
    Ok(state.alphas.iter().map(|a| a.norm_sqr()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelEquation {
    Coordinate,
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelTerm {
    pub weight: f64,
    pub omega: f64,
}

/// `K(τ) = Σ w sin(ωτ)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KernelSpec {
    pub terms: Vec<KernelTerm>,
}

impl KernelSpec {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, tau: f64) -> f64 {
        self.terms.iter().map(|t| t.weight * (t.omega * tau).sin()).sum()
    }

    fn derivative(&self, tau: f64) -> f64 {
        self.terms.iter().map(|t| t.weight * t.omega * (t.omega * tau).cos()).sum()
    }

    /// `∫₀^τ K`.
    fn antiderivative(&self, tau: f64) -> f64 {
        self.terms.iter().map(|t| t.weight * (1.0 - (t.omega * tau).cos()) / t.omega).sum()
    }

    fn omega_max(&self) -> f64 {
        self.terms.iter().map(|t| t.omega).fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> KernelSpec {
        KernelSpec {
            terms: self.terms.iter().map(|t| KernelTerm { weight: t.weight * factor, omega: t.omega }).collect(),
        }
    }
}

/// History kernel of the reduced equations. Each mode contributes a term
/// `w sin(ωτ)` with `w = ∓(2/ħ) v0² |k|²` (minus in the coordinate equation,
/// plus in the momentum equation); the remaining factors are the projections
/// `k̂·x`, `ε·p` of the current and past state. Dipole coupling has no
/// history term, so its kernel is empty.
pub fn memory_kernel(lattice: &ModeLattice, approx: Approximation, which: KernelEquation) -> KernelSpec {
    if approx == Approximation::Dipole {
        return KernelSpec::default();
    }
    let sign = match which {
        KernelEquation::Coordinate => -1.0,
        KernelEquation::Momentum => 1.0,
    };
    let terms = lattice
        .modes
        .iter()
        .filter(|m| m.v0 != 0.0)
        .map(|m| KernelTerm {
            weight: sign * 2.0 / lattice.units.hbar * m.v0 * m.v0 * m.k.norm_squared(),
            omega: m.omega,
        })
        .collect();
    KernelSpec { terms }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..80 {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
        if b - a <= f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }
    0.5 * (a + b)
}

/// `M = ∫₀ᴴ |K| dτ / (H · max(max|K|, floor))`, in `[0, 1]`.
///
/// `∫|K|` is evaluated exactly between sign changes through the closed-form
/// antiderivative; roots and extrema are located by bisection on a sampling
/// grid of 128 points per shortest period.
pub fn memory_metric_with_floor(kernel: &KernelSpec, horizon: f64, floor: f64) -> Result<f64> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidConfig(format!("memory horizon must be > 0, got {horizon}")));
    }
    if kernel.is_empty() {
        return Ok(0.0);
    }
    let periods = horizon * kernel.omega_max() / std::f64::consts::TAU;
    let n = ((periods * 128.0).ceil() as usize).max(1024);
    let h = horizon / n as f64;

    let mut integral = 0.0;
    let mut seg_start = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut prev_t = 0.0;
    let mut prev_k = kernel.eval(0.0);
    let mut prev_d = kernel.derivative(0.0);
    max_abs = max_abs.max(prev_k.abs());
    for i in 1..=n {
        let t = if i == n { horizon } else { i as f64 * h };
        let k = kernel.eval(t);
        let d = kernel.derivative(t);
        max_abs = max_abs.max(k.abs());
        if (prev_k > 0.0 && k < 0.0) || (prev_k < 0.0 && k > 0.0) {
            let root = bisect(|s| kernel.eval(s), prev_t, t);
            integral += (kernel.antiderivative(root) - kernel.antiderivative(seg_start)).abs();
            seg_start = root;
        }
        if (prev_d > 0.0 && d < 0.0) || (prev_d < 0.0 && d > 0.0) {
            let ext = bisect(|s| kernel.derivative(s), prev_t, t);
            max_abs = max_abs.max(kernel.eval(ext).abs());
        }
        prev_t = t;
        prev_k = k;
        prev_d = d;
    }
    integral += (kernel.antiderivative(horizon) - kernel.antiderivative(seg_start)).abs();
    Ok(integral / (horizon * max_abs.max(floor)))
}

pub fn memory_metric(kernel: &KernelSpec, horizon: f64) -> Result<f64> {
    memory_metric_with_floor(kernel, horizon, METRIC_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_lattice, ParticleParams, UnitsConfig};
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn constant_velocity_paths(v: Vec3, n_paths: usize, grid: TimeGrid) -> Vec<PathRecord> {
        (0..n_paths)
            .map(|_| {
                let pos = (0..grid.len()).map(|i| v * grid.elapsed(i)).collect();
                PathRecord::from_kinematics(grid, pos, vec![v; grid.len()]).unwrap()
            })
            .collect()
    }

    #[test]
    fn constant_velocity_vacf_and_msd() {
        let grid = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let v = Vec3::new(1.0, 2.0, -0.5);
        let paths = constant_velocity_paths(v, 3, grid);
        for mode in [VacfMode::Origin, VacfMode::Stationary] {
            let c = vacf(&paths, mode).unwrap();
            for x in &c.values {
                assert_relative_eq!(*x, v.norm_squared(), epsilon = 1e-12);
            }
        }
        let msd = msd_direct(&paths).unwrap();
        let from = msd_from_vacf(&vacf_two_time(&paths).unwrap()).unwrap();
        for i in 0..grid.len() {
            let t = grid.elapsed(i);
            assert_relative_eq!(msd.values[i], v.norm_squared() * t * t, epsilon = 1e-12);
            assert_relative_eq!(from.values[i], v.norm_squared() * t * t, epsilon = 1e-12);
        }
    }

    #[test]
    fn stationary_particles() {
        let grid = TimeGrid::new(0.0, 0.5, 4).unwrap();
        let paths = constant_velocity_paths(Vec3::zeros(), 2, grid);
        assert!(msd_direct(&paths).unwrap().values.iter().all(|v| *v == 0.0));
        assert!(msd_from_vacf(&vacf_two_time(&paths).unwrap()).unwrap().values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn empty_ensemble_rejected() {
        assert_eq!(vacf(&[], VacfMode::Origin), Err(Error::EmptyInput("trajectory ensemble")));
        assert!(msd_direct(&[]).is_err());
        assert!(vacf_two_time(&[]).is_err());
    }

    #[test]
    fn hand_built_three_step_vacf() {
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let a = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let b = vec![Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 0.0), Vec3::new(3.0, 0.0, 0.0)];
        let paths = vec![
            PathRecord::from_kinematics(grid, vec![Vec3::zeros(); 3], a).unwrap(),
            PathRecord::from_kinematics(grid, vec![Vec3::zeros(); 3], b).unwrap(),
        ];
        // origin: lag0 (1 + 1)/2, lag1 (2 + -1)/2, lag2 (0 + -3)/2
        let c = vacf(&paths, VacfMode::Origin).unwrap();
        assert_eq!(c.values, vec![1.0, 0.5, -1.5]);
        // stationary per path a: lag0 (1+4+1)/3=2, lag1 (2+0)/2=1, lag2 0
        //                 path b: lag0 (1+2+9)/3=4, lag1 (-1+3)/2=1, lag2 -3
        let s = vacf(&paths, VacfMode::Stationary).unwrap();
        assert_eq!(s.values, vec![3.0, 1.0, -1.5]);
        let table = vacf_two_time(&paths).unwrap();
        // C(1,2) = (a1·a2 + b1·b2)/2 = (0 + 3)/2
        assert_eq!(table.at(1, 2), 1.5);
        assert_eq!(table.at(2, 1), 1.5);
    }

    #[test]
    fn displacement_quadrature_is_exact_for_cubics() {
        let grid = TimeGrid::new(0.0, 0.1, 12).unwrap();
        let vel: Vec<Vec3> = (0..grid.len()).map(|i| Vec3::new(grid.elapsed(i).powi(3), 1.0, 0.0)).collect();
        let paths = vec![PathRecord::from_kinematics(grid, vec![Vec3::zeros(); grid.len()], vel).unwrap()];
        let a = msd_from_vacf(&vacf_two_time(&paths).unwrap()).unwrap();
        let b = msd_from_velocity_integrals(&paths).unwrap();
        for i in 0..grid.len() {
            let t = grid.elapsed(i);
            let exact = (t.powi(4) / 4.0).powi(2) + t * t;
            assert!((a.values[i] - exact).abs() < 1e-14);
            assert!((b.values[i] - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn table_route_equals_per_path_route() {
        let grid = TimeGrid::new(0.0, 0.05, 30).unwrap();
        let paths: Vec<_> = (0..5)
            .map(|s| {
                let vel = (0..grid.len())
                    .map(|i| Vec3::new((i as f64 * 0.3 + s as f64).sin(), (i as f64 * 0.1).cos() * s as f64, 0.2))
                    .collect();
                PathRecord::from_kinematics(grid, vec![Vec3::zeros(); grid.len()], vel).unwrap()
            })
            .collect();
        let a = msd_from_vacf(&vacf_two_time(&paths).unwrap()).unwrap();
        let b = msd_from_velocity_integrals(&paths).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
        assert_eq!(a.stderr, b.stderr);
    }

    #[test]
    fn table_shape_checked() {
        let grid = TimeGrid::new(0.0, 0.1, 3).unwrap();
        let table = VacfTable { grid, values: vec![0.0; 5], integral_stderr: None };
        assert!(matches!(msd_from_vacf(&table), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn photon_number_values() {
        let lat = build_lattice(2.0 * PI, 1, &UnitsConfig { hbar: 2.0, c: 1.0 }, &ParticleParams::default()).unwrap();
        let mut alphas = vec![Complex64::new(0.0, 0.0); lat.len()];
        let s = SystemState::new(0.0, Vec3::zeros(), Vec3::zeros(), alphas.clone());
        assert_eq!(photon_number(&s, &lat).unwrap(), 0.0);
        alphas[3] = Complex64::new(0.0, 1.0);
        let s = SystemState::new(0.0, Vec3::zeros(), Vec3::zeros(), alphas);
        assert_eq!(photon_number(&s, &lat).unwrap(), 2.0);
        assert_eq!(occupation(&s, &lat).unwrap(), 1.0);
    }

    #[test]
    fn dipole_and_chargeless_kernels_are_empty() {
        let lat = build_lattice(2.0 * PI, 2, &UnitsConfig::default(), &ParticleParams::default()).unwrap();
        for which in [KernelEquation::Coordinate, KernelEquation::Momentum] {
            assert!(memory_kernel(&lat, Approximation::Dipole, which).is_empty());
        }
        let free =
            build_lattice(2.0 * PI, 2, &UnitsConfig::default(), &ParticleParams { charge: 0.0, ..Default::default() })
                .unwrap();
        assert!(memory_kernel(&free, Approximation::Quadrupole, KernelEquation::Momentum).is_empty());
        assert_eq!(memory_metric(&KernelSpec::default(), 3.0).unwrap(), 0.0);
    }

    #[test]
    fn sine_kernel_metric() {
        let k = KernelSpec { terms: vec![KernelTerm { weight: 1.0, omega: 1.0 }] };
        assert_relative_eq!(memory_metric(&k, PI).unwrap(), 2.0 / PI, epsilon = 1e-12);
    }

    #[test]
    fn metric_rejects_bad_horizon() {
        let k = KernelSpec { terms: vec![KernelTerm { weight: 1.0, omega: 1.0 }] };
        assert!(memory_metric(&k, 0.0).is_err());
    }
}
