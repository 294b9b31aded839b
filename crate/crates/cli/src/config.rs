//! Flat `key = value` experiment files.
//!
//! Sections are dotted key prefixes (`lattice.n_max = 2`). `#` starts a
//! comment. Unknown or repeated keys are rejected, missing keys keep their
//! defaults, and [`echo`] writes every key so the output reparses to the
//! same configuration.

use std::fmt::Write as _;
use std::path::Path;

use nmgle::dynamics::TimeGrid;
use nmgle::ensemble::{Formulation, SimConfig};
use nmgle::model::Approximation;
use nmgle::quadrupole::ConvolutionMethod;
use nmgle::stochastic::InitialModeDist;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}: line {line}: {key}: {message}")]
    Key { path: String, line: usize, key: String, message: String },
    #[error("{path}: line {line}: {message}")]
    Syntax { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
}

pub const KEYS: &[&str] = &[
    "units.hbar",
    "units.c",
    "particle.mass",
    "particle.charge",
    "particle.coupling",
    "lattice.box_length",
    "lattice.n_max",
    "dynamics.approx",
    "dynamics.formulation",
    "dynamics.convolution",
    "grid.t0",
    "grid.dt",
    "grid.n_steps",
    "noise.enabled",
    "noise.sigma",
    "noise.tau_c",
    "initial.kind",
    "initial.temperature",
    "initial.occupation",
    "initial.forces",
    "initial.x0",
    "initial.p0",
    "ensemble.n_trajectories",
    "ensemble.master_seed",
    "kernel.horizon",
];

/// Distribution parameters are kept separately while parsing so that the
/// kind and its parameter can appear in either order.
struct InitialDraft {
    kind: String,
    temperature: f64,
    occupation: f64,
}

fn parse_f64(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("expected a number, got `{v}`"))?;
    if !x.is_finite() {
        return Err(format!("expected a finite number, got `{v}`"));
    }
    Ok(x)
}

fn positive(v: &str) -> Result<f64, String> {
    let x = parse_f64(v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("must be > 0, got {x}"))
    }
}

fn non_negative(v: &str) -> Result<f64, String> {
    let x = parse_f64(v)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("must be >= 0, got {x}"))
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn parse_vec3(v: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got `{v}`"));
    }
    Ok([parse_f64(parts[0])?, parse_f64(parts[1])?, parse_f64(parts[2])?])
}

fn parse_count(v: &str, min: u64) -> Result<u64, String> {
    let n: u64 = v.parse().map_err(|_| format!("expected a non-negative integer, got `{v}`"))?;
    if n < min {
        return Err(format!("must be >= {min}, got {n}"));
    }
    Ok(n)
}

fn apply(cfg: &mut SimConfig, init: &mut InitialDraft, key: &str, v: &str) -> Result<(), String> {
    match key {
        "units.hbar" => cfg.units.hbar = positive(v)?,
        "units.c" => cfg.units.c = positive(v)?,
        "particle.mass" => cfg.particle.mass = positive(v)?,
        "particle.charge" => cfg.particle.charge = parse_f64(v)?,
        "particle.coupling" => cfg.particle.coupling_scale = non_negative(v)?,
        "lattice.box_length" => cfg.lattice.box_length = positive(v)?,
        "lattice.n_max" => {
            cfg.lattice.n_max = u32::try_from(parse_count(v, 1)?).map_err(|_| "too large".to_string())?
        }
        "dynamics.approx" => {
            cfg.approx = match v {
                "dipole" => Approximation::Dipole,
                "quadrupole" => Approximation::Quadrupole,
                _ => return Err(format!("expected dipole or quadrupole, got `{v}`")),
            }
        }
        "dynamics.formulation" => {
            cfg.formulation = match v {
                "local" => Formulation::Local,
                "reduced" => Formulation::Reduced,
                _ => return Err(format!("expected local or reduced, got `{v}`")),
            }
        }
        "dynamics.convolution" => {
            cfg.convolution = match v {
                "naive" => ConvolutionMethod::Naive,
                "incremental" => ConvolutionMethod::Incremental,
                _ => return Err(format!("expected naive or incremental, got `{v}`")),
            }
        }
        "grid.t0" => cfg.grid.t0 = parse_f64(v)?,
        "grid.dt" => cfg.grid.dt = positive(v)?,
        "grid.n_steps" => cfg.grid.n_steps = parse_count(v, 1)? as usize,
        "noise.enabled" => cfg.noise.enabled = parse_bool(v)?,
        "noise.sigma" => cfg.noise.sigma = non_negative(v)?,
        "noise.tau_c" => cfg.noise.tau_c = positive(v)?,
        "initial.kind" => match v {
            "vacuum" | "thermal" | "fixed" => init.kind = v.to_string(),
            _ => return Err(format!("expected vacuum, thermal or fixed, got `{v}`")),
        },
        "initial.temperature" => init.temperature = non_negative(v)?,
        "initial.occupation" => init.occupation = non_negative(v)?,
        "initial.forces" => cfg.initial_forces = parse_bool(v)?,
        "initial.x0" => cfg.x0 = parse_vec3(v)?,
        "initial.p0" => cfg.p0 = parse_vec3(v)?,
        "ensemble.n_trajectories" => cfg.n_trajectories = parse_count(v, 1)? as usize,
        "ensemble.master_seed" => cfg.master_seed = parse_count(v, 0)?,
        "kernel.horizon" => cfg.memory_horizon = if v == "auto" { None } else { Some(positive(v)?) },
        _ => return Err("unknown key".into()),
    }
    Ok(())
}

pub fn parse_str(text: &str, path: &str) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default();
    let mut init = InitialDraft { kind: "vacuum".into(), temperature: 1.0, occupation: 1.0 };
    let mut seen: Vec<&str> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            path: path.into(),
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let key_err = |message: String| ConfigError::Key { path: path.into(), line, key: key.into(), message };
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            return Err(key_err("unknown key".into()));
        };
        if seen.contains(&known) {
            return Err(key_err("key given more than once".into()));
        }
        seen.push(known);
        apply(&mut cfg, &mut init, key, value).map_err(key_err)?;
    }

    cfg.initial_dist = match init.kind.as_str() {
        "thermal" => InitialModeDist::Thermal { temperature: init.temperature },
        "fixed" => InitialModeDist::Fixed { occupation: init.occupation },
        _ => InitialModeDist::Vacuum,
    };
    cfg.validate().map_err(|e| ConfigError::Invalid { path: path.into(), message: e.to_string() })?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Read { path: display.clone(), message: e.to_string() })?;
    parse_str(&text, &display)
}

fn vec3(v: &[f64; 3]) -> String {
    format!("{:?}, {:?}, {:?}", v[0], v[1], v[2])
}

/// Full effective configuration in the input format. Floats use the
/// shortest representation that reads back to the same value.
pub fn echo(cfg: &SimConfig) -> String {
    let TimeGrid { t0, dt, n_steps } = cfg.grid;
    let (kind, temperature, occupation) = match cfg.initial_dist {
        InitialModeDist::Vacuum => ("vacuum", None, None),
        InitialModeDist::Thermal { temperature } => ("thermal", Some(temperature), None),
        InitialModeDist::Fixed { occupation } => ("fixed", None, Some(occupation)),
    };
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    put("units.hbar", format!("{:?}", cfg.units.hbar));
    put("units.c", format!("{:?}", cfg.units.c));
    put("particle.mass", format!("{:?}", cfg.particle.mass));
    put("particle.charge", format!("{:?}", cfg.particle.charge));
    put("particle.coupling", format!("{:?}", cfg.particle.coupling_scale));
    put("lattice.box_length", format!("{:?}", cfg.lattice.box_length));
    put("lattice.n_max", cfg.lattice.n_max.to_string());
    put(
        "dynamics.approx",
        match cfg.approx {
            Approximation::Dipole => "dipole".into(),
            Approximation::Quadrupole => "quadrupole".into(),
        },
    );
    put(
        "dynamics.formulation",
        match cfg.formulation {
            Formulation::Local => "local".into(),
            Formulation::Reduced => "reduced".into(),
        },
    );
    put(
        "dynamics.convolution",
        match cfg.convolution {
            ConvolutionMethod::Naive => "naive".into(),
            ConvolutionMethod::Incremental => "incremental".into(),
        },
    );
    put("grid.t0", format!("{t0:?}"));
    put("grid.dt", format!("{dt:?}"));
    put("grid.n_steps", n_steps.to_string());
    put("noise.enabled", cfg.noise.enabled.to_string());
    put("noise.sigma", format!("{:?}", cfg.noise.sigma));
    put("noise.tau_c", format!("{:?}", cfg.noise.tau_c));
    put("initial.kind", kind.into());
    if let Some(t) = temperature {
        put("initial.temperature", format!("{t:?}"));
    }
    if let Some(n) = occupation {
        put("initial.occupation", format!("{n:?}"));
    }
    put("initial.forces", cfg.initial_forces.to_string());
    put("initial.x0", vec3(&cfg.x0));
    put("initial.p0", vec3(&cfg.p0));
    put("ensemble.n_trajectories", cfg.n_trajectories.to_string());
    put("ensemble.master_seed", cfg.master_seed.to_string());
    put("kernel.horizon", cfg.memory_horizon.map_or_else(|| "auto".into(), |h| format!("{h:?}")));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_str("", "empty").unwrap();
        assert_eq!(cfg, SimConfig::default());
        assert_eq!(cfg.units.hbar, 1.0);
        assert_eq!(cfg.units.c, 1.0);
        assert_eq!(cfg.initial_dist, InitialModeDist::Vacuum);
        assert_eq!(cfg.approx, Approximation::Dipole);
        assert_eq!(cfg.n_trajectories, 1);
    }

    #[test]
    fn zero_n_max_names_the_key() {
        let err = parse_str("# lattice\nlattice.n_max = 0\n", "c.cfg").unwrap_err();
        match &err {
            ConfigError::Key { key, line, .. } => {
                assert_eq!(key, "lattice.n_max");
                assert_eq!(*line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("lattice.n_max"));
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        assert!(matches!(parse_str("lattice.nmax = 2", "c"), Err(ConfigError::Key { .. })));
        assert!(matches!(parse_str("grid.dt = 0.1\ngrid.dt = 0.2", "c"), Err(ConfigError::Key { .. })));
        assert!(matches!(parse_str("just words", "c"), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn type_mismatch() {
        let err = parse_str("grid.n_steps = ten", "c").unwrap_err();
        assert!(err.to_string().contains("grid.n_steps"));
        assert!(parse_str("initial.x0 = 1, 2", "c").is_err());
        assert!(parse_str("noise.enabled = yes", "c").is_err());
    }

    #[test]
    fn cross_field_invariant() {
        let err = parse_str("dynamics.formulation = reduced", "c").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { .. }));
    }

    #[test]
    fn parameter_before_kind() {
        let cfg = parse_str("initial.temperature = 2.5\ninitial.kind = thermal", "c").unwrap();
        assert_eq!(cfg.initial_dist, InitialModeDist::Thermal { temperature: 2.5 });
    }

    #[test]
    fn echo_round_trip() {
        let text = "dynamics.approx = quadrupole\ndynamics.formulation = reduced\ngrid.dt = 0.001\n\
                    initial.kind = fixed\ninitial.occupation = 0.3\ninitial.p0 = 0.1, -2e-3, 3\n\
                    ensemble.master_seed = 18446744073709551615\nkernel.horizon = 12.5\n";
        let cfg = parse_str(text, "c").unwrap();
        let again = parse_str(&echo(&cfg), "echo").unwrap();
        assert_eq!(cfg, again);
    }
}
