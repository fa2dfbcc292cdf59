use vecsel::toymodel::{evolve, evolve_with, observe, DensityState, ToyConfig, ToyOperators};

fn small(g: f64) -> ToyConfig {
    ToyConfig { g, fock_cutoff: 4, alpha_a: 0.5, alpha_b: 0.2, ..ToyConfig::default() }
}

#[test]
fn free_emitter_decays_at_twice_gamma_2() {
    let cfg = small(0.0);
    let ops = ToyOperators::new(&cfg);
    let dt = cfg.max_step();
    let mut worst = 0.0f64;
    evolve_with(&DensityState::initial(&cfg), &ops, &cfg, 10.0, dt, |s| {
        let exact = (-2.0 * cfg.gamma_2 * s.time).exp();
        worst = worst.max((observe(s, &ops).upper_population - exact).abs());
    })
    .unwrap();
    assert!(worst <= 1e-6, "max deviation {worst:e}");
}

#[test]
fn trace_is_preserved() {
    let cfg = small(0.3);
    let s = evolve(&DensityState::initial(&cfg), &cfg, 20.0, cfg.max_step()).unwrap();
    assert!((s.trace().re - 1.0).abs() < 1e-12 && s.trace().im.abs() < 1e-12);
    assert!(s.min_eigenvalue() > -1e-10);
}

#[test]
fn antisymmetric_mode_is_dark() {
    // Exact only without truncation; cutoff 8 leaves ~1e-9 in the top layer.
    let cfg = ToyConfig { fock_cutoff: 8, ..small(0.3) };
    let ops = ToyOperators::new(&cfg);
    let start = observe(&DensityState::initial(&cfg), &ops).photons_anti;
    let mut worst = 0.0f64;
    evolve_with(&DensityState::initial(&cfg), &ops, &cfg, 10.0, cfg.max_step(), |s| {
        worst = worst.max((observe(s, &ops).photons_anti - start).abs());
    })
    .unwrap();
    assert!(start > 0.05);
    assert!(worst < 1e-8, "drift {worst:e}");
}

#[test]
fn integrator_is_fourth_order() {
    let cfg = ToyConfig { g: 0.4, gamma_perp: 1.0, ..small(0.4) };
    let dt = cfg.max_step();
    let t = 4.0;
    let run = |h: f64| evolve(&DensityState::initial(&cfg), &cfg, t, h).unwrap().rho;
    let (r1, r2, r4) = (run(dt), run(dt / 2.0), run(dt / 4.0));
    let e1 = (&r1 - &r2).norm();
    let e2 = (&r2 - &r4).norm();
    let ratio = e1 / e2;
    assert!((12.0..20.0).contains(&ratio), "error ratio {ratio}");
}

#[test]
fn real_amplitudes_stay_real() {
    let cfg = small(0.3);
    let ops = ToyOperators::new(&cfg);
    let s = evolve_with(&DensityState::initial(&cfg), &ops, &cfg, 30.0, cfg.max_step(), |_| {}).unwrap();
    let o = observe(&s, &ops);
    assert!(o.a.im.abs() <= 1e-14 * o.a.norm());
    assert!(o.b.im.abs() <= 1e-14 * o.b.norm());
}

#[test]
fn oversized_step_is_rejected() {
    let cfg = small(0.1);
    assert!(evolve(&DensityState::initial(&cfg), &cfg, 1.0, 2.0 * cfg.max_step()).is_err());
}
