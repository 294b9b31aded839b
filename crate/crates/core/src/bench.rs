//! Timing and agreement measurements for the two history-convolution
//! strategies.
//!
//! The per-step cost at step count `N` is the wall time of the last `k`
//! steps of an `N`-step run divided by `k`. Naive re-sums the whole history
//! on each of those steps; Incremental adds one panel. Timings are the
//! minimum over repeats.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrupole::{ConvolutionAccumulator, PhaseTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub omega: f64,
    pub dt: f64,
    pub seed: u64,
    /// Timed steps per measurement, capped at `N / 10`.
    pub window: usize,
    pub repeats: usize,
    /// Batches are repeated until they take at least this long.
    pub min_batch: Duration,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self { omega: 1.3, dt: 1e-3, seed: 0, window: 500, repeats: 5, min_batch: Duration::from_millis(20) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub steps: usize,
    pub naive_seconds_per_step: f64,
    pub incremental_seconds_per_step: f64,
}

/// Sum of five random sinusoids sampled at `n` points.
pub fn smooth_signal(n: usize, dt: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps: Vec<(f64, f64, f64)> = (0..5)
        .map(|_| {
            (rng.random_range(-1.0..1.0), rng.random_range(0.1..3.0), rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    (0..n).map(|i| comps.iter().map(|(a, w, ph)| a * (w * i as f64 * dt + ph).sin()).sum()).collect()
}

/// Largest deviation between the two strategies over every step of the
/// signal, relative to the largest convolution magnitude.
pub fn max_relative_difference(signal: &[f64], omega: f64, dt: f64) -> Result<f64> {
    if signal.is_empty() {
        return Err(Error::EmptyInput("signal"));
    }
    let mut table = PhaseTable::new(omega, dt);
    table.ensure(signal.len());
    let mut acc = ConvolutionAccumulator::new(omega, dt);
    let mut max_diff: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for (i, &f) in signal.iter().enumerate() {
        acc.push(f);
        let naive = table.convolve(&signal[..=i]);
        max_diff = max_diff.max((naive - acc.value()).norm());
        max_abs = max_abs.max(naive.norm());
    }
    Ok(if max_abs > 0.0 { max_diff / max_abs } else { max_diff })
}

/// As [`max_relative_difference`], but comparing only at about
/// `checkpoints` evenly spaced steps (always including the last), which
/// keeps the check linear in the signal length.
pub fn strided_relative_difference(signal: &[f64], omega: f64, dt: f64, checkpoints: usize) -> Result<f64> {
    if signal.is_empty() {
        return Err(Error::EmptyInput("signal"));
    }
    let stride = (signal.len() / checkpoints.max(1)).max(1);
    let last = signal.len() - 1;
    let mut table = PhaseTable::new(omega, dt);
    table.ensure(signal.len());
    let mut acc = ConvolutionAccumulator::new(omega, dt);
    let mut max_diff: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for (i, &f) in signal.iter().enumerate() {
        acc.push(f);
        if i % stride == 0 || i == last {
            let naive = table.convolve(&signal[..=i]);
            max_diff = max_diff.max((naive - acc.value()).norm());
            max_abs = max_abs.max(naive.norm());
        }
    }
    Ok(if max_abs > 0.0 { max_diff / max_abs } else { max_diff })
}

fn per_step<F: FnMut() -> Complex64>(k: usize, settings: &BenchSettings, mut batch: F) -> f64 {
    let mut best = f64::INFINITY;
    let mut sink = Complex64::new(0.0, 0.0);
    for _ in 0..settings.repeats.max(1) {
        let mut runs = 0usize;
        let start = Instant::now();
        loop {
            sink += batch();
            runs += 1;
            if start.elapsed() >= settings.min_batch {
                break;
            }
        }
        best = best.min(start.elapsed().as_secs_f64() / (runs * k) as f64);
    }
    std::hint::black_box(sink);
    best
}

fn measure(steps: usize, settings: &BenchSettings) -> BenchRow {
    let signal = smooth_signal(steps + 1, settings.dt, settings.seed);
    let k = settings.window.min(steps / 10).max(1);
    let first = steps + 1 - k;

    let mut table = PhaseTable::new(settings.omega, settings.dt);
    table.ensure(steps + 1);
    let naive = per_step(k, settings, || {
        let mut s = Complex64::new(0.0, 0.0);
        for end in first..=steps {
            s += table.convolve(std::hint::black_box(&signal[..=end]));
        }
        s
    });

    let mut warm = ConvolutionAccumulator::new(settings.omega, settings.dt);
    for &f in &signal[..first] {
        warm.push(f);
    }
    let incremental = per_step(k, settings, || {
        let mut acc = warm.clone();
        let mut s = Complex64::new(0.0, 0.0);
        for &f in &signal[first..] {
            acc.push(std::hint::black_box(f));
            s += acc.value();
        }
        s
    });

    BenchRow { steps, naive_seconds_per_step: naive, incremental_seconds_per_step: incremental }
}

pub fn bench_convolution(steps: &[usize], settings: &BenchSettings) -> Result<Vec<BenchRow>> {
    if steps.is_empty() {
        return Err(Error::EmptyInput("step counts"));
    }
    if let Some(bad) = steps.iter().find(|&&n| n < 10) {
        return Err(Error::InvalidConfig(format!("step count must be >= 10, got {bad}")));
    }
    Ok(steps.iter().map(|&n| measure(n, settings)).collect())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(1.5))).collect();
        assert!((log_log_slope(&pts).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(log_log_slope(&[(1.0, 1.0)]), None);
    }

    #[test]
    fn strategies_agree_on_short_signal() {
        let s = smooth_signal(2000, 1e-3, 4);
        assert!(max_relative_difference(&s, 2.0, 1e-3).unwrap() < 1e-12);
        assert!(strided_relative_difference(&s, 2.0, 1e-3, 50).unwrap() < 1e-12);
    }

    #[test]
    fn rejects_tiny_step_counts() {
        assert!(bench_convolution(&[5], &BenchSettings::default()).is_err());
        assert!(bench_convolution(&[], &BenchSettings::default()).is_err());
    }
}
