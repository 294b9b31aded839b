use std::f64::consts::PI;

use nmgle::model::{
    build_lattice, coupling_dipole, coupling_vq, hamiltonian, polarization_basis, Approximation, ParticleParams,
    SystemState, UnitsConfig, Vec3,
};
use nmgle::quadrupole::{memory_convolution, ConvolutionAccumulator, ConvolutionMethod};
use num_complex::Complex64;
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec3> {
    (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, b, c)| Vec3::new(a, b, c))
}

fn amplitudes(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64).prop_map(|(r, i)| Complex64::new(r, i)), n)
}

proptest! {
    #[test]
    fn polarization_basis_is_orthonormal_and_transverse(k in vec3()) {
        prop_assume!(k.norm() > 1e-3);
        let (e1, e2) = polarization_basis(&k).unwrap();
        let khat = k.normalize();
        prop_assert!((e1.norm() - 1.0).abs() < 1e-12);
        prop_assert!((e2.norm() - 1.0).abs() < 1e-12);
        prop_assert!(e1.dot(&e2).abs() < 1e-12);
        prop_assert!(e1.dot(&khat).abs() < 1e-12);
        prop_assert!(e2.dot(&khat).abs() < 1e-12);
        // Right-handed triad.
        prop_assert!((e1.cross(&e2) - khat).norm() < 1e-12);
    }

    #[test]
    fn quadrupole_coupling_is_imaginary_and_hamiltonian_real(
        x in vec3(), p in vec3(), alphas in amplitudes(12), g in 0.1..5.0f64,
    ) {
        let params = ParticleParams { coupling_scale: g, ..Default::default() };
        let lat = build_lattice(2.0 * PI, 1, &UnitsConfig::default(), &params).unwrap();
        let mut sum = Complex64::new(0.0, 0.0);
        for (m, a) in lat.modes.iter().zip(&alphas) {
            let v = coupling_vq(m, &p, &x);
            prop_assert_eq!(v.re, 0.0);
            sum += v * a.conj() + v.conj() * a;
        }
        prop_assert!(sum.im.abs() <= 1e-12 * (1.0 + sum.norm()));
        let state = SystemState::new(0.0, x, p, alphas);
        prop_assert!(hamiltonian(&state, &lat, &params, Approximation::Quadrupole).unwrap().is_finite());
    }

    #[test]
    fn hamiltonian_matches_direct_sum(
        x in vec3(), p in vec3(), alphas in amplitudes(12), mass in 0.2..4.0f64, g in 0.1..3.0f64,
    ) {
        let params = ParticleParams { mass, coupling_scale: g, ..Default::default() };
        let lat = build_lattice(2.0 * PI, 1, &UnitsConfig::default(), &params).unwrap();
        let state = SystemState::new(0.0, x, p, alphas.clone());
        let mut h_dip = p.dot(&p) / (2.0 * mass);
        let mut h_quad = h_dip;
        for (m, a) in lat.modes.iter().zip(&alphas) {
            let field = m.omega * (a.re * a.re + a.im * a.im);
            let ep = m.eps().dot(&p);
            h_dip += field + 2.0 * m.v0 * ep * a.re;
            h_quad += field - 2.0 * m.v0 * ep * m.k.dot(&x) * a.im;
            prop_assert!((coupling_dipole(m, &p) - m.v0 * ep).abs() <= 1e-14 * (1.0 + ep.abs()));
        }
        let dip = hamiltonian(&state, &lat, &params, Approximation::Dipole).unwrap();
        let quad = hamiltonian(&state, &lat, &params, Approximation::Quadrupole).unwrap();
        prop_assert!((dip - h_dip).abs() <= 1e-12 * h_dip.abs().max(1.0));
        prop_assert!((quad - h_quad).abs() <= 1e-12 * h_quad.abs().max(1.0));
    }

    #[test]
    fn convolution_methods_agree(
        samples in prop::collection::vec(-3.0..3.0f64, 2..400),
        omega in 0.05..8.0f64,
        dt in 1e-3..5e-2f64,
    ) {
        let mut acc = ConvolutionAccumulator::new(omega, dt);
        for &f in &samples {
            acc.push(f);
        }
        let naive = memory_convolution(&samples, dt, omega, ConvolutionMethod::Naive, None).unwrap();
        let inc = memory_convolution(&samples, dt, omega, ConvolutionMethod::Incremental, Some(&acc)).unwrap();
        let scale = samples.iter().map(|f| f.abs()).sum::<f64>() * dt;
        prop_assert!((naive - inc).norm() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn lattice_modes_pair_under_inversion(n_max in 1u32..4, l in 0.5..20.0f64) {
        let lat = build_lattice(l, n_max, &UnitsConfig::default(), &ParticleParams::default()).unwrap();
        prop_assert_eq!(lat.len() % 2, 0);
        for m in &lat.modes {
            let mirror = [-m.n[0], -m.n[1], -m.n[2]];
            prop_assert!(lat.modes.iter().any(|o| o.n == mirror && o.r == m.r));
            prop_assert!((m.omega - m.k.norm()).abs() <= 1e-12 * m.omega);
            prop_assert!(m.v0.is_finite());
        }
    }
}
