use std::path::Path;

use nmgle::bench::{bench_convolution, log_log_slope, smooth_signal, strided_relative_difference, BenchSettings};
use nmgle::ensemble::{
    run_ensemble, run_trajectory_as, summarize, threads_from_env, EnsembleResult, Formulation, SimConfig,
};
use nmgle::model::Approximation;
use nmgle::observables::{memory_kernel, memory_metric, KernelEquation, TimeSeries};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{echo, parse_config, ConfigError};
use crate::output::{csv, svg, Column, OutputDir, Plot, Series};

pub const CONFIG_ECHO: &str = "config.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Simulation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(ConfigError::Read { .. }) => 4,
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io(_) => 4,
            CliError::Simulation(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<nmgle::Error> for CliError {
    fn from(e: nmgle::Error) -> Self {
        match e {
            nmgle::Error::InvalidConfig(_) => CliError::Usage(e.to_string()),
            nmgle::Error::Divergence { .. } | nmgle::Error::EnsembleDiverged { .. } => {
                CliError::Divergence(e.to_string())
            }
            _ => CliError::Simulation(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

fn open_with_config(out: &Path, cfg: &SimConfig) -> Result<OutputDir> {
    let mut dir = OutputDir::create(out)?;
    dir.write(CONFIG_ECHO, &echo(cfg))?;
    Ok(dir)
}

fn times(series: &TimeSeries) -> Vec<f64> {
    series.grid.times()
}

fn push_series<'a>(cols: &mut Vec<Column<'a>>, name: &str, series: &'a TimeSeries) {
    cols.push(Column::new(name, &series.values));
    if let Some(se) = &series.stderr {
        cols.push(Column::new(format!("{name}_stderr"), se));
    }
}

fn write_run_meta(dir: &mut OutputDir, result: &EnsembleResult) -> Result<()> {
    let meta = json!({
        "wall_clock_seconds": result.wall_clock_seconds,
        "threads": result.threads,
        "n_trajectories": result.config.n_trajectories,
        "n_used": result.n_used,
        "diverged": result.diverged,
        "version": env!("CARGO_PKG_VERSION"),
    });
    dir.write("run_meta.json", &to_json(&meta))?;
    Ok(())
}

pub fn simulate(config: &Path, out: &Path) -> Result<()> {
    let cfg = parse_config(config)?;
    let mut dir = open_with_config(out, &cfg)?;
    let result = run_ensemble(&cfg)?;
    let summary = summarize(&result)?;

    let t = times(&result.msd_direct);
    let mut cols = vec![Column::new("t", &t)];
    push_series(&mut cols, "msd_direct", &result.msd_direct);
    push_series(&mut cols, "msd_vacf", &result.msd_vacf);
    push_series(&mut cols, "energy", &result.energy);
    push_series(&mut cols, "photon_number", &result.photon_number);
    push_series(&mut cols, "occupation", &result.occupation);
    dir.write("series.csv", &csv(&cols))?;

    let lag: Vec<f64> = (0..result.vacf.values.len()).map(|i| result.vacf.grid.elapsed(i)).collect();
    let mut vcols = vec![Column::new("t", &lag)];
    push_series(&mut vcols, "vacf", &result.vacf);
    dir.write("vacf.csv", &csv(&vcols))?;

    dir.write("summary.json", &to_json(&summary))?;
    dir.write("result.json", &result.to_json())?;
    write_run_meta(&mut dir, &result)?;

    let elapsed: Vec<f64> = (0..t.len()).map(|i| result.msd_direct.grid.elapsed(i)).collect();
    dir.write(
        "msd.svg",
        &svg(&Plot {
            title: "Mean-square displacement",
            x_label: "t - t0",
            y_label: "MSD",
            log_log: true,
            series: vec![
                Series { label: "direct", x: &elapsed, y: &result.msd_direct.values },
                Series { label: "from VACF", x: &elapsed, y: &result.msd_vacf.values },
            ],
        }),
    )?;
    dir.write(
        "vacf.svg",
        &svg(&Plot {
            title: "Velocity autocorrelation",
            x_label: "lag",
            y_label: "<v(0)·v(t)>",
            log_log: false,
            series: vec![Series { label: "VACF", x: &lag, y: &result.vacf.values }],
        }),
    )?;
    dir.commit();
    println!(
        "simulate: {} trajectories ({} diverged), final MSD {:e}, memory metric {:.6}, output in {}",
        result.n_used,
        result.diverged.len(),
        summary.final_msd,
        summary.memory_metric,
        out.display()
    );
    Ok(())
}

pub fn compare_formulations(config: &Path, out: &Path) -> Result<()> {
    let mut cfg = parse_config(config)?;
    if cfg.approx != Approximation::Quadrupole {
        return Err(CliError::Usage("compare-formulations requires dynamics.approx = quadrupole".into()));
    }
    cfg.formulation = Formulation::Local;
    let mut dir = open_with_config(out, &cfg)?;
    let lattice = cfg.build_lattice()?;
    let n = cfg.grid.len();
    let mut abs_div = vec![0.0f64; n];
    let mut rel_div = vec![0.0f64; n];
    for index in 0..cfg.n_trajectories {
        let local = run_trajectory_as(&cfg, &lattice, index, Formulation::Local)?;
        let reduced = run_trajectory_as(&cfg, &lattice, index, Formulation::Reduced)?;
        let scale = local.states.iter().map(|s| s.x.amax().max(s.p.amax())).fold(0.0, f64::max);
        let scale = if scale > 0.0 { scale } else { 1.0 };
        for (i, (a, b)) in local.states.iter().zip(&reduced.states).enumerate() {
            let d = (a.x - b.x).amax().max((a.p - b.p).amax());
            abs_div[i] = abs_div[i].max(d);
            rel_div[i] = rel_div[i].max(d / scale);
        }
    }
    let t = cfg.grid.times();
    dir.write(
        "divergence.csv",
        &csv(&[Column::new("t", &t), Column::new("abs_divergence", &abs_div), Column::new("rel_divergence", &rel_div)]),
    )?;
    let max_rel = rel_div.iter().cloned().fold(0.0, f64::max);
    let max_abs = abs_div.iter().cloned().fold(0.0, f64::max);
    dir.write(
        "summary.json",
        &to_json(&json!({
            "max_relative_divergence": max_rel,
            "max_absolute_divergence": max_abs,
            "n_trajectories": cfg.n_trajectories,
            "convolution": cfg.convolution,
        })),
    )?;
    dir.commit();
    println!("compare-formulations: max relative divergence {max_rel:e}, max absolute {max_abs:e}");
    Ok(())
}

pub fn msd(config: &Path, out: &Path) -> Result<()> {
    let cfg = parse_config(config)?;
    let mut dir = open_with_config(out, &cfg)?;
    let result = run_ensemble(&cfg)?;
    let (a, b) = (&result.msd_direct, &result.msd_vacf);
    let zero = vec![0.0; a.values.len()];
    let se_a = a.stderr.as_deref().unwrap_or(&zero);
    let se_b = b.stderr.as_deref().unwrap_or(&zero);
    let z: Vec<f64> = (0..a.values.len())
        .map(|i| {
            let diff = a.values[i] - b.values[i];
            let se = se_a[i].hypot(se_b[i]);
            if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                diff.signum() * f64::INFINITY
            }
        })
        .collect();
    let t = times(a);
    let mut cols = vec![Column::new("t", &t)];
    push_series(&mut cols, "msd_direct", a);
    push_series(&mut cols, "msd_vacf", b);
    cols.push(Column::new("difference_in_stderr", &z));
    dir.write("msd.csv", &csv(&cols))?;
    let max_z = z.iter().map(|v| v.abs()).fold(0.0, f64::max);
    dir.write("summary.json", &to_json(&json!({ "max_abs_difference_in_stderr": max_z, "n_used": result.n_used })))?;
    write_run_meta(&mut dir, &result)?;
    let elapsed: Vec<f64> = (0..t.len()).map(|i| a.grid.elapsed(i)).collect();
    dir.write(
        "msd.svg",
        &svg(&Plot {
            title: "Mean-square displacement",
            x_label: "t - t0",
            y_label: "MSD",
            log_log: true,
            series: vec![
                Series { label: "direct", x: &elapsed, y: &a.values },
                Series { label: "from VACF", x: &elapsed, y: &b.values },
            ],
        }),
    )?;
    dir.commit();
    println!("msd: max |difference| = {max_z:.3} combined standard errors");
    Ok(())
}

pub fn kernel(config: &Path, out: &Path, points: usize) -> Result<()> {
    let cfg = parse_config(config)?;
    if points < 2 {
        return Err(CliError::Usage(format!("--points must be >= 2, got {points}")));
    }
    let mut dir = open_with_config(out, &cfg)?;
    let lattice = cfg.build_lattice()?;
    let horizon = cfg.memory_horizon(&lattice);
    let kq = memory_kernel(&lattice, cfg.approx, KernelEquation::Coordinate);
    let kp = memory_kernel(&lattice, cfg.approx, KernelEquation::Momentum);
    let tau: Vec<f64> = (0..points).map(|i| horizon * i as f64 / (points - 1) as f64).collect();
    let vq: Vec<f64> = tau.iter().map(|&s| kq.eval(s)).collect();
    let vp: Vec<f64> = tau.iter().map(|&s| kp.eval(s)).collect();
    dir.write(
        "kernel.csv",
        &csv(&[Column::new("t", &tau), Column::new("k_coordinate", &vq), Column::new("k_momentum", &vp)]),
    )?;
    let mq = memory_metric(&kq, horizon)?;
    let mp = memory_metric(&kp, horizon)?;
    dir.write(
        "kernel.json",
        &to_json(&json!({
            "horizon": horizon,
            "memory_metric_coordinate": mq,
            "memory_metric_momentum": mp,
            "coordinate_terms": kq.terms,
            "momentum_terms": kp.terms,
        })),
    )?;
    dir.write(
        "kernel.svg",
        &svg(&Plot {
            title: "Memory kernel",
            x_label: "tau",
            y_label: "K(tau)",
            log_log: false,
            series: vec![
                Series { label: "coordinate", x: &tau, y: &vq },
                Series { label: "momentum", x: &tau, y: &vp },
            ],
        }),
    )?;
    dir.commit();
    println!("kernel: {} terms, memory metric {mp:.6} over horizon {horizon}", kp.terms.len());
    Ok(())
}

pub fn bench(steps: &[usize], out: &Path, seed: u64) -> Result<()> {
    let settings = BenchSettings { seed, ..Default::default() };
    let mut dir = OutputDir::create(out)?;
    dir.write("settings.json", &to_json(&settings))?;
    let rows = bench_convolution(steps, &settings)?;
    let mut agreement = Vec::with_capacity(rows.len());
    for r in &rows {
        let signal = smooth_signal(r.steps + 1, settings.dt, settings.seed);
        agreement.push(strided_relative_difference(&signal, settings.omega, settings.dt, 1000)?);
    }
    let n: Vec<f64> = rows.iter().map(|r| r.steps as f64).collect();
    let naive: Vec<f64> = rows.iter().map(|r| r.naive_seconds_per_step).collect();
    let inc: Vec<f64> = rows.iter().map(|r| r.incremental_seconds_per_step).collect();
    let speedup: Vec<f64> = naive.iter().zip(&inc).map(|(a, b)| a / b).collect();
    dir.write(
        "bench.csv",
        &csv(&[
            Column::new("steps", &n),
            Column::new("naive_seconds_per_step", &naive),
            Column::new("incremental_seconds_per_step", &inc),
            Column::new("speedup", &speedup),
            Column::new("max_relative_difference", &agreement),
        ]),
    )?;
    let pts = |ys: &[f64]| -> Vec<(f64, f64)> { n.iter().cloned().zip(ys.iter().cloned()).collect() };
    dir.write(
        "bench.json",
        &to_json(&json!({
            "rows": rows,
            "speedup": speedup,
            "max_relative_difference": agreement,
            "naive_slope": log_log_slope(&pts(&naive)),
            "incremental_slope": log_log_slope(&pts(&inc)),
            "threads": threads_from_env(),
        })),
    )?;
    dir.commit();
    for (i, r) in rows.iter().enumerate() {
        println!(
            "steps {:>8}: naive {:.3e} s/step, incremental {:.3e} s/step, speedup {:.1}, max rel diff {:.2e}",
            r.steps, naive[i], inc[i], speedup[i], agreement[i]
        );
    }
    Ok(())
}

pub fn echo_config(config: &Path) -> Result<()> {
    print!("{}", echo(&parse_config(config)?));
    Ok(())
}
