use nmgle::dynamics::TimeGrid;
use nmgle::ensemble::{run_ensemble_with_threads, summarize, Formulation, SimConfig};
use nmgle::model::{Approximation, ParticleParams};
use nmgle::stochastic::{InitialModeDist, NoiseConfig};

fn config(n: usize) -> SimConfig {
    SimConfig {
        approx: Approximation::Quadrupole,
        formulation: Formulation::Reduced,
        particle: ParticleParams { coupling_scale: 2.0, ..Default::default() },
        grid: TimeGrid::new(0.0, 0.01, 200).unwrap(),
        initial_dist: InitialModeDist::Thermal { temperature: 1.0 },
        noise: NoiseConfig { sigma: 0.2, tau_c: 0.5, enabled: true },
        n_trajectories: n,
        master_seed: 77,
        ..Default::default()
    }
}

#[test]
fn rerun_is_bit_identical() {
    let cfg = config(40);
    let a = run_ensemble_with_threads(&cfg, 2).unwrap();
    let b = run_ensemble_with_threads(&cfg, 3).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.n_used, 40);
}

#[test]
fn standard_error_shrinks_as_inverse_root_n() {
    let small = run_ensemble_with_threads(&config(100), 0).unwrap();
    let large = run_ensemble_with_threads(&config(400), 0).unwrap();
    let se = |r: &nmgle::ensemble::EnsembleResult| *r.msd_direct.stderr.as_ref().unwrap().last().unwrap();
    let ratio = se(&small) / se(&large);
    assert!((ratio / 2.0 - 1.0).abs() <= 0.2, "ratio {ratio}");
}

#[test]
fn summary_reports_ballistic_exponent_without_coupling() {
    let mut cfg = config(5);
    cfg.particle.charge = 0.0;
    cfg.noise.enabled = false;
    cfg.approx = Approximation::Dipole;
    cfg.formulation = Formulation::Local;
    let r = run_ensemble_with_threads(&cfg, 1).unwrap();
    let s = summarize(&r).unwrap();
    assert!((s.msd_exponent.unwrap() - 2.0).abs() < 1e-9);
    assert!((s.final_msd - 4.0).abs() < 1e-9);
    assert_eq!(s.n_diverged, 0);
}

#[test]
fn reduced_dipole_is_rejected() {
    let mut cfg = config(2);
    cfg.approx = Approximation::Dipole;
    assert!(run_ensemble_with_threads(&cfg, 1).is_err());
}
