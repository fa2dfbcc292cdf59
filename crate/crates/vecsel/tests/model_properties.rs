use approx::assert_relative_eq;
use num_complex::Complex64;
use proptest::prelude::*;

use vecsel::basis::Layout;
use vecsel::config;
use vecsel::model::{derive_rates, CouplingModel, DichroismSign, ModelParams};
use vecsel::steadystate::{closed_form_steady, collective_rhs, refine_steady, threshold};

fn params_strategy() -> impl Strategy<Value = ModelParams> {
    (
        0.05f64..=1.0,
        0.05f64..=1.0,
        0.0f64..=1.0,
        1.0005f64..2.0,
        0.05f64..0.3,
        prop::bool::ANY,
        prop::bool::ANY,
    )
        .prop_map(|(xa, xb, p, ratio, g, coherent, minus)| {
            let mut m = ModelParams::reference();
            m.xi_a = xa;
            m.xi_b = xb;
            m.p = p;
            m.g_a = g;
            m.g_b = g * 1.1;
            m.coupling = if coherent { CouplingModel::Coherent } else { CouplingModel::Separated };
            m.dichroism_sign = if minus { DichroismSign::Minus } else { DichroismSign::Plus };
            m.with_pump_ratio(ratio)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip(p in params_strategy()) {
        let back = config::parse(&config::render(&p)).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn time_rescaling_covariance(p in params_strategy(), lambda in 0.1f64..10.0) {
        let mut q = p.clone();
        for r in [
            &mut q.kappa_a, &mut q.kappa_b, &mut q.kappa_ap, &mut q.kappa_bp, &mut q.omega_ap,
            &mut q.omega_bp, &mut q.gamma_2, &mut q.gamma_1, &mut q.gamma_perp, &mut q.gamma_c,
            &mut q.nu, &mut q.g_a, &mut q.g_b, &mut q.pump_a,
        ] {
            *r *= lambda;
        }
        let (dp, dq) = (derive_rates(&p).unwrap(), derive_rates(&q).unwrap());
        let (tp, tq) = (threshold(&p, &dp), threshold(&q, &dq));
        prop_assert!(((tq.0 / tp.0) / lambda - 1.0).abs() < 1e-12);
        prop_assert!(((tq.1 / tp.1) / lambda - 1.0).abs() < 1e-12);
        let (sp, sq) = (closed_form_steady(&p, &dp), closed_form_steady(&q, &dq));
        prop_assert!((sp.intensity_a - sq.intensity_a).abs() <= 1e-9 * sp.intensity_a.max(1.0));
        prop_assert!((sp.intensity_b - sq.intensity_b).abs() <= 1e-9 * sp.intensity_b.max(1.0));
        prop_assert!((dq.zeta_ab - dp.zeta_ab).abs() < 1e-12);
    }

    #[test]
    fn intensity_grows_with_pump(p in params_strategy(), step in 1.0001f64..1.5) {
        let q = p.clone().with_pump_ratio(p.pump_ratio() * step);
        let (sp, sq) = (
            closed_form_steady(&p, &derive_rates(&p).unwrap()),
            closed_form_steady(&q, &derive_rates(&q).unwrap()),
        );
        prop_assert!(sq.intensity_a + sq.intensity_b > sp.intensity_a + sp.intensity_b);
    }

    #[test]
    fn rhs_respects_conjugation(p in params_strategy(), seed in prop::collection::vec(-1.0f64..1.0, 64)) {
        let layout = Layout::new(p.coupling);
        let n = layout.dim();
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..layout.first_population() {
            let j = layout.conj(i);
            if i < j {
                x[i] = Complex64::new(seed[2 * i] * 50.0, seed[2 * i + 1] * 50.0);
                x[j] = x[i].conj();
            }
        }
        for i in layout.first_population()..n {
            x[i] = Complex64::new(1e4 * (1.0 + seed[i % 64]), 0.0);
        }
        let f = collective_rhs(&x, &p, &derive_rates(&p).unwrap());
        for i in 0..n {
            let j = layout.conj(i);
            prop_assert!((f[j] - f[i].conj()).norm() <= 1e-9 * (1.0 + f[i].norm()));
        }
    }
}

#[test]
fn pump_ratio_of_reference() {
    let p = ModelParams::reference();
    assert_relative_eq!(p.pump_ratio(), 1.01, max_relative = 1e-14);
    assert_relative_eq!(p.threshold_a(), 5e5, max_relative = 1e-14);
}

#[test]
fn refined_state_has_real_positive_intensities() {
    for xi in [0.1, 0.4, 0.8, 1.0] {
        let p = ModelParams::reference().with_xi(xi);
        let d = derive_rates(&p).unwrap();
        let r = refine_steady(&closed_form_steady(&p, &d), &p, &d).unwrap();
        assert!(r.residual <= r.tolerance);
        assert!(r.steady.intensity_a > 0.0 && r.steady.intensity_b > 0.0, "xi = {xi}");
    }
}

#[test]
fn validation_rejects_bad_parameters() {
    let mut p = ModelParams::reference();
    p.kappa_ap = p.kappa_a;
    assert!(p.validate().is_err());
    let mut p = ModelParams::reference();
    p.xi_a = 0.0;
    assert!(p.validate().is_err());
    let mut p = ModelParams::reference();
    p.p = 1.5;
    assert!(p.validate().is_err());
}
