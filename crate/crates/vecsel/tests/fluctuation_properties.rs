use approx::assert_relative_eq;
use num_complex::Complex64;
use proptest::prelude::*;

use vecsel::basis::{Layout, Region};
use vecsel::fluctuation::{build_diffusion, log_grid, FluctuationSystem};
use vecsel::model::{derive_rates, CouplingModel, DichroismSign, ModelParams};
use vecsel::steadystate::{closed_form_steady, refine_steady, SteadyState};
use vecsel::verification::{gauge_deviation, lyapunov_direct, quadrature_covariance};

fn refined(p: &ModelParams) -> SteadyState {
    let d = derive_rates(p).unwrap();
    refine_steady(&closed_form_steady(p, &d), p, &d).unwrap().steady
}

fn system(p: &ModelParams) -> FluctuationSystem {
    FluctuationSystem::new(&refined(p), p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn drift_pairs_conjugates(xi in 0.1f64..=1.0, p in 0.0f64..=1.0, ratio in 1.001f64..1.5, coherent in prop::bool::ANY) {
        let mut params = ModelParams::reference().with_xi(xi).with_p(p).with_pump_ratio(ratio);
        if coherent {
            params.coupling = CouplingModel::Coherent;
        }
        let d = derive_rates(&params).unwrap();
        let s = closed_form_steady(&params, &d);
        let sys = FluctuationSystem::build_unchecked(&s, &params).unwrap();
        let layout = &sys.layout;
        let n = layout.dim();
        let scale = sys.drift.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        for i in 0..n {
            for j in 0..n {
                let (ci, cj) = (layout.conj(i), layout.conj(j));
                prop_assert!((sys.drift[(ci, cj)] - sys.drift[(i, j)].conj()).norm() <= 1e-12 * scale);
                prop_assert!((sys.diffusion[(cj, ci)] - sys.diffusion[(i, j)].conj()).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn normalized_cross_spectrum_is_bounded(xi in 0.1f64..=1.0, ratio in 1.001f64..1.3, omega in 0.0f64..100.0) {
        let sys = system(&ModelParams::reference().with_xi(xi).with_pump_ratio(ratio));
        let s = sys.spectrum_at(omega).unwrap();
        prop_assert!(s.c_ab.abs() <= 1.0 + 1e-9);
        prop_assert!(s.c_aa >= 0.0 && s.c_bb >= 0.0);
    }
}

#[test]
fn partition_noise_vanishes_for_poisson_pump() {
    let p = ModelParams::reference();
    let s = refined(&p);
    let q = build_diffusion(&s, &p, &derive_rates(&p).unwrap());
    let layout = Layout::new(p.coupling);
    for r in Region::ALL {
        for o in Region::ALL {
            if r != o {
                for (s1, s2) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    assert_eq!(q[(layout.population(r, s1), layout.population(o, s2))], Complex64::new(0.0, 0.0));
                }
            }
        }
    }
}

#[test]
fn partition_noise_for_regular_pump() {
    let p = ModelParams::reference().with_xi(0.5).with_p(1.0);
    let d = derive_rates(&p).unwrap();
    let q = build_diffusion(&refined(&p), &p, &d);
    let layout = Layout::new(p.coupling);
    let pumps = d.region_pumps();
    let expected = -pumps[0] * pumps[2] / d.pump_total / 2.0;
    assert!(expected < 0.0);
    assert_relative_eq!(q[(layout.population(Region::M, 0), layout.population(Region::L, 1))].re, expected, max_relative = 1e-14);
    assert_relative_eq!(q[(layout.population(Region::L, 0), layout.population(Region::M, 0))].re, expected, max_relative = 1e-14);
}

#[test]
fn doubling_diffusion_doubles_excess_noise() {
    let sys = system(&ModelParams::reference());
    let doubled = sys.with_diffusion(&sys.diffusion * Complex64::new(2.0, 0.0));
    for omega in [0.0, 1e-3, 0.5, 7.0, 300.0] {
        let (a, b) = (sys.spectrum_at(omega).unwrap(), doubled.spectrum_at(omega).unwrap());
        assert_relative_eq!(b.c_aa - 1.0, 2.0 * (a.c_aa - 1.0), max_relative = 1e-9);
        assert_relative_eq!(b.c_bb - 1.0, 2.0 * (a.c_bb - 1.0), max_relative = 1e-9);
        assert_relative_eq!(b.d_ab, 2.0 * a.d_ab, max_relative = 1e-9, epsilon = 1e-300);
    }
}

#[test]
fn opposite_dichroism_swaps_modes() {
    let plus = system(&ModelParams::reference());
    let mut p = ModelParams::reference();
    p.dichroism_sign = DichroismSign::Minus;
    let minus = system(&p);
    for omega in [0.0, 1e-2, 1.0, 100.0] {
        let (a, b) = (plus.spectrum_at(omega).unwrap(), minus.spectrum_at(omega).unwrap());
        assert_relative_eq!(a.c_aa, b.c_bb, max_relative = 1e-7);
        assert_relative_eq!(a.c_bb, b.c_aa, max_relative = 1e-7);
        assert_relative_eq!(a.c_ab, b.c_ab, max_relative = 1e-7);
    }
}

#[test]
fn grid_order_does_not_matter() {
    let sys = system(&ModelParams::reference());
    let grid = log_grid(1e-3, 1e3, 37);
    let forward = sys.sweep(&grid).unwrap();
    let reversed: Vec<f64> = grid.iter().rev().copied().collect();
    let mut backward = sys.sweep(&reversed).unwrap();
    backward.reverse();
    assert_eq!(forward, backward);
}

#[test]
fn dark_state_decouples_fields_from_populations() {
    let p = ModelParams::reference().with_pump_ratio(0.5);
    let s = refined(&p);
    assert!(!s.lasing_a && !s.lasing_b);
    let sys = FluctuationSystem::new(&s, &p).unwrap();
    assert_eq!(sys.phase_modes, 0);
    let layout = &sys.layout;
    for i in 0..layout.first_population() {
        for j in layout.first_population()..layout.dim() {
            assert_eq!(sys.drift[(i, j)], Complex64::new(0.0, 0.0));
            assert_eq!(sys.drift[(j, i)], Complex64::new(0.0, 0.0));
        }
    }
    let spec = sys.spectrum_at(0.1).unwrap();
    assert_eq!(spec.c_ab, 0.0);
    assert!(spec.c_aa > 1.0);
}

#[test]
fn quadrature_matches_direct_lyapunov_solution() {
    let sys = system(&ModelParams::reference().with_xi(0.4));
    let direct = lyapunov_direct(&sys.deflated, &sys.diffusion).unwrap();
    let quad = quadrature_covariance(&sys.deflated, &sys.diffusion, 1e7, 40_000).unwrap();
    let norm = direct.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let worst = (&quad - &direct).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    assert!(worst <= 1e-3 * norm, "max deviation {worst:e} of {norm:e}");
}

#[test]
fn b_phase_flip_leaves_spectra_unchanged() {
    for sign in [DichroismSign::Plus, DichroismSign::Minus] {
        let mut p = ModelParams::reference().with_xi(0.5).with_p(1.0);
        p.dichroism_sign = sign;
        let sys = system(&p);
        assert!(gauge_deviation(&sys, &[0.0, 0.1, 10.0]).unwrap() <= 1e-10);
    }
}
