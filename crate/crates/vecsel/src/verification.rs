//! Independent checks of the fluctuation engine: a finite-difference
//! Jacobian, a quadrature of the spectral matrix against the covariance
//! (Lyapunov) identity, the shot-noise limit, phase-gauge invariance and the
//! qualitative spectral trends of the reference configuration.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluctuation::{log_grid, FluctuationSystem, SpectrumPoint};
use crate::linalg::{self, CMat};
use crate::model::{derive_rates, ModelParams};
use crate::steadystate::{closed_form_steady, refine_steady, rhs_in_frame, SteadyState};

pub const JACOBIAN_TOLERANCE: f64 = 1e-6;
pub const LYAPUNOV_TOLERANCE: f64 = 1e-3;
pub const SHOT_NOISE_TOLERANCE: f64 = 1e-3;
pub const GAUGE_TOLERANCE: f64 = 1e-10;

/// Central-difference Jacobian of the collective equations at `steady`,
/// with steps of `1e-6` times the scale of each variable class.
pub fn finite_difference_jacobian(steady: &SteadyState, params: &ModelParams) -> Result<CMat> {
    let derived = derive_rates(params)?;
    let x0 = steady.to_vector();
    let layout = steady.layout();
    let n = layout.dim();
    let first_pop = layout.first_population();

    let field_scale = steady.intensity_a.max(steady.intensity_b).sqrt().max(1.0);
    let pol_scale = steady.polarizations.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let pop_scale = steady.populations.iter().fold(1.0f64, |m, v| m.max(v.abs()));

    let mut jac = CMat::zeros(n, n);
    for j in 0..n {
        let scale = if j < 8 {
            field_scale
        } else if j < first_pop {
            pol_scale
        } else {
            pop_scale
        };
        let h = 1e-6 * scale;
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[j] += h;
        xm[j] -= h;
        let fp = rhs_in_frame(&xp, params, &derived, steady.frame);
        let fm = rhs_in_frame(&xm, params, &derived, steady.frame);
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct JacobianComparison {
    /// Largest entrywise relative deviation.
    pub max_relative: f64,
    /// `||D - J_fd||_F / ||D||_F`.
    pub frobenius_relative: f64,
}

/// Compares an analytic drift matrix with the finite-difference Jacobian.
/// Entries below `1e-12` of the largest entry are ignored by the
/// entrywise measure.
pub fn compare_jacobians(drift: &CMat, fd: &CMat) -> JacobianComparison {
    let scale = drift.iter().chain(fd.iter()).fold(0.0f64, |m, z| m.max(z.norm()));
    let floor = 1e-12 * scale;
    let mut max_relative = 0.0f64;
    for (a, b) in drift.iter().zip(fd.iter()) {
        let mag = a.norm().max(b.norm());
        if mag > floor {
            max_relative = max_relative.max((a - b).norm() / mag);
        }
    }
    let frobenius_relative = linalg::frobenius(&(drift - fd)) / linalg::frobenius(drift);
    JacobianComparison { max_relative, frobenius_relative }
}

pub fn jacobian_check(steady: &SteadyState, params: &ModelParams) -> Result<JacobianComparison> {
    let derived = derive_rates(params)?;
    let drift = crate::fluctuation::build_drift(steady, params, &derived).matrix;
    Ok(compare_jacobians(&drift, &finite_difference_jacobian(steady, params)?))
}

/// `V = (1/2pi) * integral of S(W) over [-omega_max, omega_max]`, composite
/// midpoint rule. Half of the `n_points` nodes lie at positive frequency:
/// one cell covers `[0, w0]` and the rest are uniform in `ln W` up to
/// `omega_max`, with `w0` far below the slowest decay rate of `d`.
pub fn quadrature_covariance(d: &CMat, diffusion: &CMat, omega_max: f64, n_points: usize) -> Result<CMat> {
    let n = d.nrows();
    let eig = linalg::eigenvalues(d);
    if let Some(bad) = eig.iter().find(|z| z.re >= 0.0) {
        return Err(Error::Unstable { eigenvalue: *bad });
    }
    let slowest = eig.iter().fold(f64::INFINITY, |m, z| m.min(z.norm()));
    let w0 = 1e-6 * slowest.min(omega_max);
    let half = (n_points / 2).max(2);

    let (l0, l1) = (w0.ln(), omega_max.ln());
    let h = (l1 - l0) / (half - 1) as f64;
    let mut nodes: Vec<(f64, f64)> = Vec::with_capacity(half);
    nodes.push((0.5 * w0, w0));
    for k in 0..half - 1 {
        let u = l0 + (k as f64 + 0.5) * h;
        let w = u.exp();
        nodes.push((w, w * h));
    }

    let identity = CMat::identity(n, n);
    let resolvent = |w: f64| -> Result<CMat> {
        let a = identity.map(|z| z * Complex64::new(0.0, -w)) - d;
        a.try_inverse().ok_or(Error::SingularResolvent { omega: w })
    };
    let sum = nodes
        .par_iter()
        .map(|&(w, weight)| -> Result<CMat> {
            let mp = resolvent(w)?;
            let mm = resolvent(-w)?;
            let s_pos = &mp * diffusion * mm.transpose();
            let s_neg = &mm * diffusion * mp.transpose();
            Ok((s_pos + s_neg) * Complex64::new(weight, 0.0))
        })
        .try_reduce(|| CMat::zeros(n, n), |a, b| Ok(a + b))?;
    Ok(sum / Complex64::new(2.0 * std::f64::consts::PI, 0.0))
}

pub fn lyapunov_residual(d: &CMat, diffusion: &CMat, v: &CMat) -> f64 {
    let r = d * v + v * d.transpose() + diffusion;
    linalg::frobenius(&r) / linalg::frobenius(diffusion)
}

pub fn lyapunov_check(d: &CMat, diffusion: &CMat, omega_max: f64, n_points: usize) -> Result<f64> {
    let v = quadrature_covariance(d, diffusion, omega_max, n_points)?;
    Ok(lyapunov_residual(d, diffusion, &v))
}

/// Direct solution of `D V + V D^T + Diff = 0` through the Kronecker form.
pub fn lyapunov_direct(d: &CMat, diffusion: &CMat) -> Result<CMat> {
    let n = d.nrows();
    let identity = CMat::identity(n, n);
    let big = identity.kronecker(d) + d.kronecker(&identity);
    let rhs = nalgebra::DVector::from_iterator(n * n, diffusion.iter().map(|z| -z));
    let vec = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("Lyapunov operator is singular".into()))?;
    Ok(DMatrix::from_column_slice(n, n, vec.as_slice()))
}

pub fn shot_noise_deviation(sys: &FluctuationSystem, omega: f64) -> Result<f64> {
    let s = sys.spectrum_at(omega)?;
    Ok((s.c_aa - 1.0).abs().max((s.c_bb - 1.0).abs()))
}

/// Largest relative change of C_aa, C_bb, C_ab when mode b and everything
/// following its phase is multiplied by -1 and its readout vector flipped.
pub fn gauge_deviation(sys: &FluctuationSystem, grid: &[f64]) -> Result<f64> {
    let flipped = FluctuationSystem::new(&sys.steady.with_b_phase_flip(), &sys.params)?.with_flipped_b_readout();
    let mut worst = 0.0f64;
    for &w in grid {
        let a = sys.spectrum_at(w)?;
        let b = flipped.spectrum_at(w)?;
        for (x, y) in [(a.c_aa, b.c_aa), (a.c_bb, b.c_bb), (a.c_ab, b.c_ab)] {
            worst = worst.max((x - y).abs() / x.abs().max(1.0));
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub jacobian_residual: f64,
    pub jacobian_frobenius: f64,
    pub lyapunov_residual: Option<f64>,
    pub stability_margin: Option<f64>,
    pub shot_noise_deviation: Option<f64>,
    pub gauge_deviation: Option<f64>,
    pub notices: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        let opt_ok = |v: Option<f64>, tol: f64| v.is_none_or(|x| x.is_finite() && x <= tol);
        self.jacobian_residual <= JACOBIAN_TOLERANCE
            && opt_ok(self.lyapunov_residual, LYAPUNOV_TOLERANCE)
            && self.stability_margin.is_none_or(|m| m < 0.0)
            && opt_ok(self.shot_noise_deviation, SHOT_NOISE_TOLERANCE)
            && opt_ok(self.gauge_deviation, GAUGE_TOLERANCE)
    }

    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "skipped".to_string(), |x| format!("{x:.6e}"));
        let mut out = String::new();
        out.push_str(&format!(
            "jacobian_residual    {:.6e}  (limit {JACOBIAN_TOLERANCE:e}; frobenius {:.3e})\n",
            self.jacobian_residual, self.jacobian_frobenius
        ));
        out.push_str(&format!("lyapunov_residual    {}  (limit {LYAPUNOV_TOLERANCE:e})\n", fmt(self.lyapunov_residual)));
        out.push_str(&format!("stability_margin     {}  (must be < 0)\n", fmt(self.stability_margin)));
        out.push_str(&format!(
            "shot_noise_deviation {}  (limit {SHOT_NOISE_TOLERANCE:e})\n",
            fmt(self.shot_noise_deviation)
        ));
        out.push_str(&format!("gauge_deviation      {}  (limit {GAUGE_TOLERANCE:e})\n", fmt(self.gauge_deviation)));
        for n in &self.notices {
            out.push_str(&format!("notice: {n}\n"));
        }
        out.push_str(if self.passed() { "result: PASS\n" } else { "result: FAIL\n" });
        out
    }
}

#[derive(Clone, Debug)]
pub struct VerificationOptions {
    pub omega_max: f64,
    pub lyapunov_points: usize,
    /// Relative perturbation applied to one drift entry before the
    /// Jacobian comparison; exercises the oracle itself.
    pub drift_fault: Option<f64>,
}

impl Default for VerificationOptions {
    fn default() -> Self {
        VerificationOptions { omega_max: 1e6, lyapunov_points: 100_000, drift_fault: None }
    }
}

/// Runs every oracle at the refined steady state of `params`.
pub fn run_verification(params: &ModelParams, options: &VerificationOptions) -> Result<VerificationReport> {
    let derived = derive_rates(params)?;
    let steady = refine_steady(&closed_form_steady(params, &derived), params, &derived)?.steady;

    let mut drift = crate::fluctuation::build_drift(&steady, params, &derived).matrix;
    if let Some(fault) = options.drift_fault {
        drift[(0, 0)] *= 1.0 + fault;
    }
    let jac = compare_jacobians(&drift, &finite_difference_jacobian(&steady, params)?);

    let mut report = VerificationReport {
        jacobian_residual: jac.max_relative,
        jacobian_frobenius: jac.frobenius_relative,
        lyapunov_residual: None,
        stability_margin: None,
        shot_noise_deviation: None,
        gauge_deviation: None,
        notices: Vec::new(),
    };
    if !(steady.lasing_a || steady.lasing_b) {
        report.notices.push("below threshold: spectrum oracles skipped".into());
        return Ok(report);
    }

    let sys = FluctuationSystem::build_unchecked(&steady, params)?;
    report.stability_margin = Some(sys.stability_margin());
    if sys.stability_margin() >= 0.0 {
        report.notices.push(format!("unstable steady state: eigenvalue {}", sys.leading_eigenvalue));
        return Ok(report);
    }
    report.lyapunov_residual =
        Some(lyapunov_check(&sys.deflated, &sys.diffusion, options.omega_max, options.lyapunov_points)?);
    report.shot_noise_deviation = Some(shot_noise_deviation(&sys, options.omega_max)?);
    report.gauge_deviation = Some(gauge_deviation(&sys, &[0.0, 1e-3, 0.1, 1.0, 10.0, 1e3])?);
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct TrendCheck {
    pub id: &'static str,
    pub description: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Frequencies used for minima and maxima over the spectrum: zero plus a
/// logarithmic grid from 1e-4 to 1e4.
pub fn trend_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(log_grid(1e-4, 1e4, 161));
    g
}

/// Refined steady state, stability-gated system and spectrum of `params`
/// on [`trend_grid`].
pub fn spectrum_for(params: &ModelParams) -> Result<(FluctuationSystem, Vec<SpectrumPoint>)> {
    let derived = derive_rates(params)?;
    let steady = refine_steady(&closed_form_steady(params, &derived), params, &derived)?.steady;
    let sys = FluctuationSystem::new(&steady, params)?;
    let spec = sys.sweep(&trend_grid())?;
    Ok((sys, spec))
}

fn min_by(spec: &[SpectrumPoint], f: impl Fn(&SpectrumPoint) -> f64) -> f64 {
    spec.iter().map(f).fold(f64::INFINITY, f64::min)
}

fn max_by(spec: &[SpectrumPoint], f: impl Fn(&SpectrumPoint) -> f64) -> f64 {
    spec.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
}

/// Qualitative spectral trends of the symmetric reference configuration.
/// `base` supplies everything except overlap, pump ratio, regularity and g.
pub fn spectral_trend_suite(base: &ModelParams) -> Result<Vec<TrendCheck>> {
    let cfg = |xi: f64, ratio: f64, p: f64| base.clone().with_xi(xi).with_p(p).with_pump_ratio(ratio);
    let mut out = Vec::new();
    let mut all_cab: Vec<f64> = Vec::new();

    let (_, s_strong) = spectrum_for(&cfg(0.8, 1.011, 0.0))?;
    all_cab.extend(s_strong.iter().map(|s| s.c_ab));
    let m = min_by(&s_strong, |s| s.c_aa);
    out.push(TrendCheck {
        id: "sub_shot_noise",
        description: "xi = 0.8, R = 1.011 Rbar: min C_aa < 1",
        passed: m < 1.0,
        detail: format!("min C_aa = {m:.6}"),
    });

    let zero: Vec<f64> = [1.001, 1.01, 1.011]
        .iter()
        .map(|&r| spectrum_for(&cfg(0.8, r, 0.0)).map(|(_, s)| s[0].c_aa))
        .collect::<Result<_>>()?;
    out.push(TrendCheck {
        id: "pump_ordering",
        description: "C_aa(0) decreases over R/Rbar = 1.001, 1.01, 1.011",
        passed: zero.windows(2).all(|w| w[1] < w[0]),
        detail: format!("C_aa(0) = {:.6e}, {:.6e}, {:.6e}", zero[0], zero[1], zero[2]),
    });

    let diff = max_by(&s_strong, |s| (s.c_aa - s.c_bb).abs() / s.c_aa.abs().min(s.c_bb.abs()));
    out.push(TrendCheck {
        id: "mode_asymmetry",
        description: "xi = 0.8: C_aa and C_bb differ by more than 10%",
        passed: diff > 0.1,
        detail: format!("max relative difference = {diff:.4}"),
    });

    let (_, s_weak) = spectrum_for(&cfg(0.1, 1.011, 0.0))?;
    all_cab.extend(s_weak.iter().map(|s| s.c_ab));
    let m = min_by(&s_weak, |s| s.c_aa);
    out.push(TrendCheck {
        id: "weak_overlap_flat",
        description: "xi = 0.1: min C_aa >= 0.99",
        passed: m >= 0.99,
        detail: format!("min C_aa = {m:.6}"),
    });

    let mut details = Vec::new();
    let mut ok = true;
    for r in [1.01, 1.011] {
        let (s0, s1) = (spectrum_for(&cfg(0.8, r, 0.0))?.1, spectrum_for(&cfg(0.8, r, 1.0))?.1);
        ok &= s1[0].c_aa >= s0[0].c_aa;
        details.push(format!("R = {r}: p=0 {:.9e}, p=1 {:.9e}", s0[0].c_aa, s1[0].c_aa));
    }
    out.push(TrendCheck {
        id: "regularity",
        description: "xi = 0.8: C_aa(0, p=1) >= C_aa(0, p=0)",
        passed: ok,
        detail: details.join("; "),
    });

    let mut details = Vec::new();
    let mut ok = true;
    for xi in [0.5, 0.8] {
        let (_, s) = spectrum_for(&cfg(xi, 1.01, 0.0))?;
        all_cab.extend(s.iter().map(|s| s.c_ab));
        ok &= s[0].c_ab < 0.0;
        details.push(format!("xi = {xi}: C_ab(0) = {:.6}", s[0].c_ab));
    }
    out.push(TrendCheck {
        id: "anticorrelation",
        description: "C_ab(0) < 0 for xi = 0.5, 0.8",
        passed: ok,
        detail: details.join("; "),
    });
    let (_, s) = spectrum_for(&cfg(0.1, 1.01, 0.0))?;
    all_cab.extend(s.iter().map(|s| s.c_ab));
    out.push(TrendCheck {
        id: "weak_overlap_washout",
        description: "xi = 0.1: C_ab(0) >= -0.05",
        passed: s[0].c_ab >= -0.05,
        detail: format!("C_ab(0) = {:.6}", s[0].c_ab),
    });
    let worst = all_cab.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    out.push(TrendCheck {
        id: "cross_bounded",
        description: "|C_ab| <= 1 on every computed spectrum",
        passed: worst <= 1.0,
        detail: format!("max |C_ab| = {worst:.6}"),
    });

    let strong = cfg(0.8, 1.011, 0.0);
    let (_, weak_g) = spectrum_for(&strong.clone().with_g(0.01))?;
    let dev = max_by(&weak_g, |s| (s.c_aa - 1.0).abs());
    let min_strong = min_by(&s_strong, |s| s.c_aa);
    out.push(TrendCheck {
        id: "weak_coupling",
        description: "g = 0.01: max |C_aa - 1| <= 0.05, while g = 0.1 reaches C_aa < 1",
        passed: dev <= 0.05 && min_strong < 1.0,
        detail: format!("g = 0.01: max |C_aa - 1| = {dev:.6e}; g = 0.1: min C_aa = {min_strong:.6}"),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_lorentzian() {
        let d = CMat::from_element(1, 1, Complex64::new(-2.0, 0.0));
        let q = CMat::from_element(1, 1, Complex64::new(4.0, 0.0));
        let v = quadrature_covariance(&d, &q, 1e6, 100_000).unwrap();
        // Tail beyond omega_max carries 2 gamma / (pi omega_max) of the unit variance.
        assert_relative_eq!(v[(0, 0)].re, 1.0, max_relative = 2e-6);
        let v_direct = lyapunov_direct(&d, &q).unwrap();
        assert_relative_eq!(v_direct[(0, 0)].re, 1.0, max_relative = 1e-15);
        let v2 = quadrature_covariance(&d, &(q * Complex64::new(2.0, 0.0)), 1e6, 100_000).unwrap();
        assert_relative_eq!(v2[(0, 0)].re, 2.0 * v[(0, 0)].re, max_relative = 1e-12);
    }

    #[test]
    fn unstable_drift_is_rejected() {
        let d = CMat::from_element(1, 1, Complex64::new(0.5, 0.0));
        let q = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
        assert!(matches!(lyapunov_check(&d, &q, 1e3, 100), Err(Error::Unstable { .. })));
    }

    #[test]
    fn fault_injection_is_detected() {
        let p = ModelParams::reference();
        let r = derive_rates(&p).unwrap();
        let s = refine_steady(&closed_form_steady(&p, &r), &p, &r).unwrap().steady;
        let fd = finite_difference_jacobian(&s, &p).unwrap();
        let mut d = crate::fluctuation::build_drift(&s, &p, &r).matrix;
        assert!(compare_jacobians(&d, &fd).max_relative < 1e-6);
        d[(0, 8)] *= 1.01;
        assert!(compare_jacobians(&d, &fd).max_relative >= 1e-2 * 0.99);
    }
}
