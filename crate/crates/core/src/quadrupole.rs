//! Quadrupole-approximation dynamics in two equivalent forms.
//!
//! The local form evolves `(x, p, α)` under
//! `H = p²/2m + Σ ħω|α|² + Σ V(p, x)(α − ᾱ)` with `V = i v0 (ε·p)(k·x)`.
//! Writing `u = v0 (ε·p)(k·x) = Im V`, the canonical c-number rule
//! `iħ dα/dt = ∂H/∂ᾱ` gives
//!
//! ```text
//! dx/dt = p/m − 2 Σ v0 (k·x) Im α ε
//! dp/dt = 2 Σ v0 (ε·p) Im α k
//! dα/dt = −iωα + (i/ħ) V = −iωα − u/ħ
//! ```
//!
//! The reduced form eliminates the modes exactly. Variation of constants
//! gives `α(t) = α(0) e^{−iωt} − (1/ħ) ∫₀ᵗ e^{−iω(t−s)} u(s) ds`, hence
//! `Im α(t) = Im(α(0) e^{−iωt}) + (1/ħ) ∫₀ᵗ sin(ω(t−s)) u(s) ds`. The first
//! piece is the initial-condition random force, the second the history
//! (memory) integral, so the particle obeys a closed integro-differential
//! equation with sine kernels.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{check_noise, force_at, integrate_local, warn_if_coarse, StateDerivative, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::model::{Approximation, ModeLattice, ParticleParams, SystemState, Vec3};
use crate::stochastic::NoisePath;

pub use crate::model::coupling_vq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvolutionMethod {
    /// Trapezoidal quadrature over the whole stored history on every call.
    Naive,
    /// Running accumulator updated by one trapezoid panel per step.
    Incremental,
}

/// Running value of `A(t) = ∫₀ᵗ e^{−iωs} f(s) ds` on a uniform grid, so that
/// `∫₀ᵗ e^{iω(t−s)} f(s) ds = e^{iωt} A(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionAccumulator {
    omega: f64,
    dt: f64,
    len: usize,
    sum: Complex64,
    last_weighted: Complex64,
    last_sample: f64,
}

impl ConvolutionAccumulator {
    pub fn new(omega: f64, dt: f64) -> Self {
        Self {
            omega,
            dt,
            len: 0,
            sum: Complex64::new(0.0, 0.0),
            last_weighted: Complex64::new(0.0, 0.0),
            last_sample: 0.0,
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.omega, self.dt);
    }

    /// Number of samples fed so far.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Appends the sample at `s = len · dt`.
    pub fn push(&mut self, f: f64) {
        let s = self.len as f64 * self.dt;
        let weighted = Complex64::from_polar(1.0, -self.omega * s) * f;
        if self.len > 0 {
            self.sum += (self.last_weighted + weighted) * (0.5 * self.dt);
        }
        self.last_weighted = weighted;
        self.last_sample = f;
        self.len += 1;
    }

    /// `A(t)` at the latest sample.
    pub fn integral(&self) -> Complex64 {
        self.sum
    }

    /// `∫₀ᵗ e^{iω(t−s)} f(s) ds` at the latest sample time.
    pub fn value(&self) -> Complex64 {
        if self.len == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let t = (self.len - 1) as f64 * self.dt;
        Complex64::from_polar(1.0, self.omega * t) * self.sum
    }

    pub fn last_sample(&self) -> f64 {
        self.last_sample
    }
}

/// `e^{iω j dt}` for `j = 0, 1, ...`, grown on demand.
#[derive(Debug, Clone)]
pub struct PhaseTable {
    omega: f64,
    dt: f64,
    phases: Vec<Complex64>,
}

impl PhaseTable {
    pub fn new(omega: f64, dt: f64) -> Self {
        Self { omega, dt, phases: Vec::new() }
    }

    pub fn ensure(&mut self, n: usize) {
        let start = self.phases.len();
        self.phases.extend((start..n).map(|j| Complex64::from_polar(1.0, self.omega * j as f64 * self.dt)));
    }

    /// Trapezoidal `∫₀ᵗ e^{iω(t−s)} f(s) ds` over the full sample history.
    pub fn convolve(&mut self, samples: &[f64]) -> Complex64 {
        self.ensure(samples.len());
        naive_sum(samples, self.dt, &self.phases)
    }
}

fn naive_sum(samples: &[f64], dt: f64, phases: &[Complex64]) -> Complex64 {
    let n = samples.len();
    if n < 2 {
        return Complex64::new(0.0, 0.0);
    }
    let last = n - 1;
    let (mut re, mut im) = (0.0, 0.0);
    for (i, f) in samples.iter().enumerate().skip(1).take(last - 1) {
        let ph = phases[last - i];
        re += ph.re * f;
        im += ph.im * f;
    }
    let ends = phases[last] * samples[0] + phases[0] * samples[last];
    (Complex64::new(re, im) + ends * 0.5) * dt
}

/// Complex history convolution `C(t) = ∫₀ᵗ e^{iω(t−s)} f(s) ds` of a real
/// signal sampled at spacing `dt`, with `t` the time of the last sample.
/// The sine-kernel memory integral `∫₀ᵗ sin(ω(t−s)) f(s) ds` is `Im C`.
///
/// `Incremental` reads the accumulator, which must have been fed exactly
/// the samples in `samples`.
pub fn memory_convolution(
    samples: &[f64],
    dt: f64,
    omega: f64,
    method: ConvolutionMethod,
    acc: Option<&ConvolutionAccumulator>,
) -> Result<Complex64> {
    match method {
        ConvolutionMethod::Naive => {
            let mut table = PhaseTable::new(omega, dt);
            Ok(table.convolve(samples))
        }
        ConvolutionMethod::Incremental => {
            let acc = acc.ok_or(Error::HistorySync { accumulated: 0, history: samples.len() })?;
            if acc.len() != samples.len() || acc.dt != dt || acc.omega != omega {
                return Err(Error::HistorySync { accumulated: acc.len(), history: samples.len() });
            }
            Ok(acc.value())
        }
    }
}

/// Per-mode record of `u(s) = Im V(p(s), x(s))` on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    pub dt: f64,
    pub samples: Vec<Vec<f64>>,
}

impl HistoryBuffer {
    pub fn new(n_modes: usize, dt: f64) -> Self {
        Self { dt, samples: vec![Vec::new(); n_modes] }
    }

    pub fn push(&mut self, x: &Vec3, p: &Vec3, lattice: &ModeLattice) {
        for (buf, mode) in self.samples.iter_mut().zip(&lattice.modes) {
            buf.push(coupling_vq(mode, p, x).im);
        }
    }

    /// Number of stored time points.
    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Initial-condition forces entering the coordinate and momentum equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomForceRealization {
    pub f_q: Vec3,
    pub f_p: Vec3,
    pub t: f64,
}

/// Complex-valued sums before projection; the imaginary parts vanish.
pub(crate) fn random_forces_complex(
    t: f64,
    x: &Vec3,
    p: &Vec3,
    alphas0: &[Complex64],
    lattice: &ModeLattice,
) -> ([Complex64; 3], [Complex64; 3]) {
    let mut f_q = [Complex64::new(0.0, 0.0); 3];
    let mut f_p = [Complex64::new(0.0, 0.0); 3];
    for (mode, a0) in lattice.modes.iter().zip(alphas0) {
        let free = a0 * Complex64::from_polar(1.0, -mode.omega * t);
        let bracket = free - free.conj();
        let eps = mode.eps();
        let cq = Complex64::new(0.0, mode.v0 * mode.k.dot(x)) * bracket;
        let cp = -Complex64::new(0.0, mode.v0 * eps.dot(p)) * bracket;
        for i in 0..3 {
            f_q[i] += cq * eps[i];
            f_p[i] += cp * mode.k[i];
        }
    }
    (f_q, f_p)
}

/// Forces carried by the freely evolving initial amplitudes:
/// `F_q = Σ i v0 (k·x) [α(0)e^{−iωt} − ᾱ(0)e^{iωt}] ε`,
/// `F_p = −Σ i v0 (ε·p) [α(0)e^{−iωt} − ᾱ(0)e^{iωt}] k`,
/// with `t` the time elapsed since the amplitudes were sampled.
pub fn random_forces(
    t: f64,
    x: &Vec3,
    p: &Vec3,
    alphas0: &[Complex64],
    lattice: &ModeLattice,
) -> Result<RandomForceRealization> {
    if alphas0.len() != lattice.len() {
        return Err(Error::StateShape { expected: lattice.len(), got: alphas0.len() });
    }
    let (q, pp) = random_forces_complex(t, x, p, alphas0, lattice);
    Ok(RandomForceRealization {
        f_q: Vec3::new(q[0].re, q[1].re, q[2].re),
        f_p: Vec3::new(pp[0].re, pp[1].re, pp[2].re),
        t,
    })
}

pub(crate) fn eom_quadrupole_unchecked(
    state: &SystemState,
    lattice: &ModeLattice,
    params: &ParticleParams,
    external_force: &Vec3,
) -> StateDerivative {
    let hbar = lattice.units.hbar;
    let mut dx = state.p / params.mass;
    let mut dp = *external_force;
    let mut dalphas = Vec::with_capacity(state.alphas.len());
    for (mode, a) in lattice.modes.iter().zip(&state.alphas) {
        let eps = mode.eps();
        let kx = mode.k.dot(&state.x);
        let ep = eps.dot(&state.p);
        dx -= eps * (2.0 * mode.v0 * kx * a.im);
        dp += mode.k * (2.0 * mode.v0 * ep * a.im);
        let u = mode.v0 * ep * kx;
        dalphas.push(Complex64::new(0.0, -mode.omega) * a - u / hbar);
    }
    StateDerivative { dx, dp, dalphas }
}

/// Local quadrupole right-hand side (see module docs).
pub fn eom_quadrupole_local(
    state: &SystemState,
    lattice: &ModeLattice,
    params: &ParticleParams,
    external_force: &Vec3,
) -> Result<StateDerivative> {
    lattice.check_state(state)?;
    Ok(eom_quadrupole_unchecked(state, lattice, params, external_force))
}

pub fn integrate_quadrupole_local(
    state0: &SystemState,
    lattice: &ModeLattice,
    params: &ParticleParams,
    grid: &TimeGrid,
    noise: Option<&NoisePath>,
) -> Result<Trajectory> {
    integrate_local(state0, lattice, params, Approximation::Quadrupole, grid, noise, |s, f| {
        eom_quadrupole_unchecked(s, lattice, params, f)
    })
}

/// Reduced `(dx, dp)` at elapsed time `tau`, given for each mode the history
/// convolution `C = ∫₀^tau e^{iω(tau−s)} u(s) ds`.
#[allow(clippy::too_many_arguments)]
fn reduced_derivative(
    lattice: &ModeLattice,
    params: &ParticleParams,
    alphas0: &[Complex64],
    tau: f64,
    x: &Vec3,
    p: &Vec3,
    convolutions: &[Complex64],
    external_force: &Vec3,
) -> (Vec3, Vec3) {
    let inv_hbar = 1.0 / lattice.units.hbar;
    let mut dx = p / params.mass;
    let mut dp = *external_force;
    for ((mode, a0), conv) in lattice.modes.iter().zip(alphas0).zip(convolutions) {
        let eps = mode.eps();
        let free = (a0 * Complex64::from_polar(1.0, -mode.omega * tau)).im;
        let im_alpha = free + conv.im * inv_hbar;
        dx -= eps * (2.0 * mode.v0 * mode.k.dot(x) * im_alpha);
        dp += mode.k * (2.0 * mode.v0 * eps.dot(p) * im_alpha);
    }
    (dx, dp)
}

/// Reduced-equation rate `(dx, dp)` at the time of the last stored sample,
/// recomputed from the full stored history by direct quadrature.
pub fn reduced_rate_from_history(
    history: &HistoryBuffer,
    x: &Vec3,
    p: &Vec3,
    alphas0: &[Complex64],
    lattice: &ModeLattice,
    params: &ParticleParams,
) -> Result<(Vec3, Vec3)> {
    if alphas0.len() != lattice.len() || history.samples.len() != lattice.len() {
        return Err(Error::StateShape { expected: lattice.len(), got: alphas0.len().min(history.samples.len()) });
    }
    let n = history.len();
    if n == 0 {
        return Err(Error::EmptyInput("history buffer"));
    }
    let convs = lattice
        .modes
        .iter()
        .zip(&history.samples)
        .map(|(mode, s)| memory_convolution(s, history.dt, mode.omega, ConvolutionMethod::Naive, None))
        .collect::<Result<Vec<_>>>()?;
    let tau = (n - 1) as f64 * history.dt;
    Ok(reduced_derivative(lattice, params, alphas0, tau, x, p, &convs, &Vec3::zeros()))
}

enum Convolver {
    Naive(Vec<PhaseTable>),
    Incremental(Vec<ConvolutionAccumulator>),
}

/// Integrates the particle-only integro-differential system obtained by
/// eliminating the modes. Amplitudes are reconstructed at grid points from
/// the history convolutions, so the trajectory carries the same observables
/// as [`integrate_quadrupole_local`].
///
/// Inside a step, the history integral up to an RK4 stage point is the grid
/// value advanced by one partial trapezoid panel ending at the stage state.
#[allow(clippy::too_many_arguments)]
pub fn integrate_quadrupole_reduced(
    x0: &Vec3,
    p0: &Vec3,
    alphas0: &[Complex64],
    lattice: &ModeLattice,
    params: &ParticleParams,
    grid: &TimeGrid,
    method: ConvolutionMethod,
    noise: Option<&NoisePath>,
) -> Result<Trajectory> {
    grid.validate()?;
    if alphas0.len() != lattice.len() {
        return Err(Error::StateShape { expected: lattice.len(), got: alphas0.len() });
    }
    check_noise(grid, noise)?;
    warn_if_coarse(grid, lattice);

    let dt = grid.dt;
    let hbar = lattice.units.hbar;
    let n_modes = lattice.len();
    let mut history = HistoryBuffer::new(n_modes, dt);
    let mut convolver = match method {
        ConvolutionMethod::Naive => {
            Convolver::Naive(lattice.modes.iter().map(|m| PhaseTable::new(m.omega, dt)).collect())
        }
        ConvolutionMethod::Incremental => {
            Convolver::Incremental(lattice.modes.iter().map(|m| ConvolutionAccumulator::new(m.omega, dt)).collect())
        }
    };
    // e^{iωh} for the stage offsets h = dt/2 and h = dt.
    let half: Vec<Complex64> = lattice.modes.iter().map(|m| Complex64::from_polar(1.0, 0.5 * m.omega * dt)).collect();
    let full: Vec<Complex64> = lattice.modes.iter().map(|m| Complex64::from_polar(1.0, m.omega * dt)).collect();

    let mut traj = Trajectory::with_capacity(*grid);
    let (mut x, mut p) = (*x0, *p0);
    history.push(&x, &p, lattice);
    if let Convolver::Incremental(accs) = &mut convolver {
        for (acc, s) in accs.iter_mut().zip(&history.samples) {
            acc.push(s[0]);
        }
    }

    let mut conv_n = vec![Complex64::new(0.0, 0.0); n_modes];
    let mut conv_stage = vec![Complex64::new(0.0, 0.0); n_modes];
    for n in 0..=grid.n_steps {
        let tau = grid.elapsed(n);
        match &mut convolver {
            Convolver::Naive(tables) => {
                for ((c, table), s) in conv_n.iter_mut().zip(tables.iter_mut()).zip(&history.samples) {
                    *c = table.convolve(s);
                }
            }
            Convolver::Incremental(accs) => {
                for (c, acc) in conv_n.iter_mut().zip(accs.iter()) {
                    *c = acc.value();
                }
            }
        }

        let force = force_at(noise, n);
        let (k1x, k1p) = reduced_derivative(lattice, params, alphas0, tau, &x, &p, &conv_n, &force);

        let alphas: Vec<Complex64> = lattice
            .modes
            .iter()
            .zip(alphas0)
            .zip(&conv_n)
            .map(|((m, a0), c)| a0 * Complex64::from_polar(1.0, -m.omega * tau) - c.conj() / hbar)
            .collect();
        traj.record(SystemState::new(grid.time(n), x, p, alphas), k1x, lattice, params, Approximation::Quadrupole)?;
        if n == grid.n_steps {
            break;
        }

        let mut stage = |h: f64, phase: &[Complex64], xs: &Vec3, ps: &Vec3| {
            for (j, mode) in lattice.modes.iter().enumerate() {
                let u_n = *history.samples[j].last().expect("history seeded");
                let u_s = coupling_vq(mode, ps, xs).im;
                conv_stage[j] = phase[j] * conv_n[j] + (phase[j] * u_n + u_s) * (0.5 * h);
            }
            reduced_derivative(lattice, params, alphas0, tau + h, xs, ps, &conv_stage, &force)
        };
        let (x2, p2) = (x + k1x * (0.5 * dt), p + k1p * (0.5 * dt));
        let (k2x, k2p) = stage(0.5 * dt, &half, &x2, &p2);
        let (x3, p3) = (x + k2x * (0.5 * dt), p + k2p * (0.5 * dt));
        let (k3x, k3p) = stage(0.5 * dt, &half, &x3, &p3);
        let (x4, p4) = (x + k3x * dt, p + k3p * dt);
        let (k4x, k4p) = stage(dt, &full, &x4, &p4);

        x += (k1x + (k2x + k3x) * 2.0 + k4x) * (dt / 6.0);
        p += (k1p + (k2p + k3p) * 2.0 + k4p) * (dt / 6.0);
        if !(x.iter().chain(p.iter()).all(|v| v.is_finite())) {
            return Err(Error::Divergence { step: n + 1, t: grid.time(n + 1) });
        }
        history.push(&x, &p, lattice);
        if let Convolver::Incremental(accs) = &mut convolver {
            for (acc, s) in accs.iter_mut().zip(&history.samples) {
                acc.push(*s.last().expect("just pushed"));
            }
        }
    }
    Ok(traj)
}
