//! Two field modes resonantly coupled to one strongly dephased two-level
//! emitter:
//!
//! `d rho/dt = -i g [s+ (a + b) + h.c., rho] + gamma_perp L(sz) rho + gamma_2 L(s-) rho`
//!
//! with `L(x) rho = 2 x rho x' - x'x rho - rho x'x`, on a truncated Fock
//! space. Basis index `e (N+1)^2 + n_a (N+1) + n_b`, `e = 1` the upper level.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

type CMat = DMatrix<Complex64>;

#[derive(Clone, Debug, Serialize)]
pub struct ToyConfig {
    pub g: f64,
    pub gamma_perp: f64,
    pub gamma_2: f64,
    pub fock_cutoff: usize,
    pub alpha_a: f64,
    pub alpha_b: f64,
    pub emitter_excited: bool,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            g: 0.01,
            gamma_perp: 1.0,
            gamma_2: 0.1,
            fock_cutoff: 6,
            alpha_a: 0.3,
            alpha_b: 0.3,
            emitter_excited: true,
        }
    }
}

impl ToyConfig {
    pub fn dim(&self) -> usize {
        2 * (self.fock_cutoff + 1).pow(2)
    }

    pub fn max_step(&self) -> f64 {
        0.05 / self.gamma_perp.max(self.gamma_2).max(self.g * (self.fock_cutoff as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::InvalidParameter { name, reason: reason.into() });
        if self.fock_cutoff < 2 {
            return bad("fock_cutoff", "must be at least 2");
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return bad("g", "must be non-negative");
        }
        if !(self.gamma_perp > 0.0 && self.gamma_2 > 0.0) {
            return bad("gamma_perp", "decay rates must be positive");
        }
        let n_max = self.alpha_a.powi(2).max(self.alpha_b.powi(2));
        if (self.fock_cutoff as f64) < 4.0 * n_max {
            return bad("fock_cutoff", "must be at least 4 |alpha|^2");
        }
        Ok(())
    }
}

/// Sparse real operator as (row, col, value) triplets.
#[derive(Clone, Debug, Default)]
struct Sparse(Vec<(usize, usize, f64)>);

impl Sparse {
    fn adjoint(&self) -> Sparse {
        Sparse(self.0.iter().map(|&(i, j, v)| (j, i, v)).collect())
    }

    fn product(&self, other: &Sparse, dim: usize) -> Sparse {
        let mut dense = vec![0.0; dim * dim];
        for &(i, k, v) in &self.0 {
            for &(k2, j, w) in &other.0 {
                if k == k2 {
                    dense[i * dim + j] += v * w;
                }
            }
        }
        Sparse(
            dense
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(idx, v)| (idx / dim, idx % dim, *v))
                .collect(),
        )
    }

    /// out += c * S rho
    fn left(&self, rho: &CMat, c: Complex64, out: &mut CMat) {
        let n = rho.ncols();
        for &(i, k, v) in &self.0 {
            let cv = c * v;
            for j in 0..n {
                out[(i, j)] += cv * rho[(k, j)];
            }
        }
    }

    /// out += c * rho S
    fn right(&self, rho: &CMat, c: Complex64, out: &mut CMat) {
        let n = rho.nrows();
        for &(k, j, v) in &self.0 {
            let cv = c * v;
            for i in 0..n {
                out[(i, j)] += cv * rho[(i, k)];
            }
        }
    }

    /// out += c * S rho S^T
    fn sandwich(&self, rho: &CMat, c: Complex64, out: &mut CMat) {
        for &(i, k, v) in &self.0 {
            for &(j, l, w) in &self.0 {
                out[(i, j)] += c * v * w * rho[(k, l)];
            }
        }
    }

    fn expectation(&self, rho: &CMat) -> Complex64 {
        self.0.iter().map(|&(i, j, v)| v * rho[(j, i)]).sum()
    }
}

/// Operators of one configuration.
#[derive(Clone, Debug)]
pub struct ToyOperators {
    dim: usize,
    hamiltonian: Sparse,
    dissipators: Vec<(f64, Sparse, Sparse)>,
    a: Sparse,
    b: Sparse,
    number_sym: Sparse,
    number_anti: Sparse,
    upper: Sparse,
    top_layer: Sparse,
}

impl ToyOperators {
    pub fn new(config: &ToyConfig) -> Self {
        let n1 = config.fock_cutoff + 1;
        let dim = config.dim();
        let idx = |e: usize, na: usize, nb: usize| e * n1 * n1 + na * n1 + nb;

        let mut a = Sparse::default();
        let mut b = Sparse::default();
        let mut lower = Sparse::default();
        let mut sz = Sparse::default();
        let mut top = Sparse::default();
        for e in 0..2 {
            for na in 0..n1 {
                for nb in 0..n1 {
                    let i = idx(e, na, nb);
                    if na > 0 {
                        a.0.push((idx(e, na - 1, nb), i, (na as f64).sqrt()));
                    }
                    if nb > 0 {
                        b.0.push((idx(e, na, nb - 1), i, (nb as f64).sqrt()));
                    }
                    sz.0.push((i, i, if e == 1 { 1.0 } else { -1.0 }));
                    if e == 1 {
                        lower.0.push((idx(0, na, nb), i, 1.0));
                    }
                    if na == n1 - 1 || nb == n1 - 1 {
                        top.0.push((i, i, 1.0));
                    }
                }
            }
        }
        let mut sum = a.clone();
        sum.0.extend(b.0.iter().copied());
        let mut diff = a.clone();
        diff.0.extend(b.0.iter().map(|&(i, j, v)| (i, j, -v)));

        // H = g (s+ A + s- A'), A = a + b; s+ A maps (0, n) -> (1, n - 1).
        let raise = lower.adjoint();
        let coupling = raise.product(&sum, dim);
        let mut hamiltonian = Sparse(coupling.0.iter().map(|&(i, j, v)| (i, j, config.g * v)).collect());
        hamiltonian.0.extend(coupling.adjoint().0.iter().map(|&(i, j, v)| (i, j, config.g * v)));

        let dissipators = [(config.gamma_perp, sz), (config.gamma_2, lower)]
            .into_iter()
            .map(|(rate, op)| {
                let kk = op.adjoint().product(&op, dim);
                (rate, op, kk)
            })
            .collect();
        let upper = raise.product(&raise.adjoint(), dim);
        ToyOperators {
            dim,
            number_sym: sum.adjoint().product(&sum, dim),
            number_anti: diff.adjoint().product(&diff, dim),
            hamiltonian,
            dissipators,
            a,
            b,
            upper,
            top_layer: top,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DensityState {
    pub rho: CMat,
    pub time: f64,
}

impl DensityState {
    /// Product of the emitter level and two (truncated, renormalized)
    /// coherent states with real amplitudes.
    pub fn initial(config: &ToyConfig) -> Self {
        let n1 = config.fock_cutoff + 1;
        let coherent = |alpha: f64| -> Vec<f64> {
            let mut c = vec![0.0; n1];
            let mut term = (-0.5 * alpha * alpha).exp();
            for (n, slot) in c.iter_mut().enumerate() {
                if n > 0 {
                    term *= alpha / (n as f64).sqrt();
                }
                *slot = term;
            }
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            c.iter().map(|x| x / norm).collect()
        };
        let (ca, cb) = (coherent(config.alpha_a), coherent(config.alpha_b));
        let e = usize::from(config.emitter_excited);
        let mut psi = vec![0.0; config.dim()];
        for na in 0..n1 {
            for nb in 0..n1 {
                psi[e * n1 * n1 + na * n1 + nb] = ca[na] * cb[nb];
            }
        }
        let rho = CMat::from_fn(psi.len(), psi.len(), |i, j| Complex64::new(psi[i] * psi[j], 0.0));
        DensityState { rho, time: 0.0 }
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.rho.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..=i {
                worst = worst.max((self.rho[(i, j)] - self.rho[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn lindblad_rhs(rho: &CMat, ops: &ToyOperators) -> CMat {
    let mut out = CMat::zeros(ops.dim, ops.dim);
    let minus_i = Complex64::new(0.0, -1.0);
    ops.hamiltonian.left(rho, minus_i, &mut out);
    ops.hamiltonian.right(rho, -minus_i, &mut out);
    for (rate, op, kk) in &ops.dissipators {
        if *rate == 0.0 {
            continue;
        }
        let r = Complex64::new(*rate, 0.0);
        op.sandwich(rho, 2.0 * r, &mut out);
        kk.left(rho, -r, &mut out);
        kk.right(rho, -r, &mut out);
    }
    out
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Observables {
    pub time: f64,
    pub a: Complex64,
    pub b: Complex64,
    pub photons_sym: f64,
    pub photons_anti: f64,
    pub upper_population: f64,
    pub top_layer: f64,
}

pub fn observe(state: &DensityState, ops: &ToyOperators) -> Observables {
    Observables {
        time: state.time,
        a: ops.a.expectation(&state.rho),
        b: ops.b.expectation(&state.rho),
        photons_sym: ops.number_sym.expectation(&state.rho).re,
        photons_anti: ops.number_anti.expectation(&state.rho).re,
        upper_population: ops.upper.expectation(&state.rho).re,
        top_layer: ops.top_layer.expectation(&state.rho).re,
    }
}

pub const TRACE_TOLERANCE: f64 = 1e-8;
pub const HERMITICITY_TOLERANCE: f64 = 1e-10;
pub const POSITIVITY_TOLERANCE: f64 = 1e-8;

fn check_invariants(state: &DensityState, positivity: bool) -> Result<()> {
    let fail = |what: String| Err(Error::ToyInvariant { time: state.time, what });
    let tr = state.trace();
    if (tr - 1.0).norm() > TRACE_TOLERANCE {
        return fail(format!("trace {tr}"));
    }
    let h = state.hermiticity_error();
    if h > HERMITICITY_TOLERANCE {
        return fail(format!("hermiticity error {h:e}"));
    }
    if positivity {
        let m = state.min_eigenvalue();
        if m < -POSITIVITY_TOLERANCE {
            return fail(format!("eigenvalue {m:e}"));
        }
    }
    Ok(())
}

/// Classical fourth-order Runge-Kutta with fixed step. Trace and
/// Hermiticity are checked every step, positivity every 100 steps and at
/// the end. `observer` sees the state after every step.
pub fn evolve_with(
    state: &DensityState,
    ops: &ToyOperators,
    config: &ToyConfig,
    t_final: f64,
    dt: f64,
    mut observer: impl FnMut(&DensityState),
) -> Result<DensityState> {
    if !(dt > 0.0 && dt <= config.max_step() * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must lie in (0, {}]", config.max_step()),
        });
    }
    let mut s = state.clone();
    let steps = ((t_final - s.time) / dt).round().max(0.0) as usize;
    let t0 = s.time;
    let half = Complex64::new(0.5 * dt, 0.0);
    let full = Complex64::new(dt, 0.0);
    let sixth = Complex64::new(dt / 6.0, 0.0);
    for step in 1..=steps {
        let k1 = lindblad_rhs(&s.rho, ops);
        let k2 = lindblad_rhs(&(&s.rho + &k1 * half), ops);
        let k3 = lindblad_rhs(&(&s.rho + &k2 * half), ops);
        let k4 = lindblad_rhs(&(&s.rho + &k3 * full), ops);
        s.rho += (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * sixth;
        s.time = t0 + step as f64 * dt;
        check_invariants(&s, step % 100 == 0 || step == steps)?;
        observer(&s);
    }
    Ok(s)
}

pub fn evolve(state: &DensityState, config: &ToyConfig, t_final: f64, dt: f64) -> Result<DensityState> {
    config.validate()?;
    let ops = ToyOperators::new(config);
    evolve_with(state, &ops, config, t_final, dt, |_| {})
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseRun {
    pub alpha: f64,
    pub photon_number: f64,
    /// `-d arg<a>/dt` over the fit window.
    pub phase_rate: f64,
    pub phase_fit_rms: f64,
    pub amplitude_rate: f64,
    pub top_layer: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EffectiveCoefficients {
    pub g: f64,
    pub gamma_perp: f64,
    pub dispersive_shift: f64,
    pub kerr_coefficient: f64,
    pub target_dispersive: f64,
    pub target_kerr: f64,
    pub runs: Vec<PhaseRun>,
    pub inconclusive: bool,
    pub warnings: Vec<String>,
}

impl EffectiveCoefficients {
    pub fn dispersive_error(&self) -> f64 {
        relative_error(self.dispersive_shift, self.target_dispersive)
    }

    pub fn kerr_error(&self) -> f64 {
        relative_error(self.kerr_coefficient, self.target_kerr)
    }
}

fn relative_error(x: f64, target: f64) -> f64 {
    if target == 0.0 {
        x.abs()
    } else {
        ((x - target) / target).abs()
    }
}

/// Amplitudes (per mode, equal for a and b) of the extraction runs.
pub const EXTRACTION_AMPLITUDES: [f64; 4] = [0.2, 0.3, 0.4, 0.5];

/// Fits `-d arg<a>/dt` after a transient of `5 / gamma_2` for several
/// symmetric coherent states, then fits the rates linearly against the
/// coupled-mode photon number `n = <(a' + b')(a + b)>`. For
/// `H = c1 n + c2 n^2` the rate is `2 c1 + 2 c2 + 4 c2 n`, so the
/// dispersive shift is half the intercept and the Kerr coefficient a
/// quarter of the slope.
pub fn extract_effective_coefficients(config: &ToyConfig) -> Result<EffectiveCoefficients> {
    config.validate()?;
    let dt = config.max_step();
    let t_start = 5.0 / config.gamma_2;
    let window = 20.0 / config.gamma_perp;
    let samples = 41usize;

    let runs: Vec<PhaseRun> = EXTRACTION_AMPLITUDES
        .par_iter()
        .map(|&alpha| -> Result<PhaseRun> {
            let cfg = ToyConfig { alpha_a: alpha, alpha_b: alpha, emitter_excited: true, ..config.clone() };
            cfg.validate()?;
            let ops = ToyOperators::new(&cfg);
            let start = evolve_with(&DensityState::initial(&cfg), &ops, &cfg, t_start, dt, |_| {})?;
            let n0 = observe(&start, &ops).photons_sym;
            let step_per_sample = ((window / (samples - 1) as f64) / dt).round().max(1.0) as usize;
            let mut obs = vec![observe(&start, &ops)];
            let mut count = 0usize;
            let end = t_start + dt * (step_per_sample * (samples - 1)) as f64;
            let last = evolve_with(&start, &ops, &cfg, end, dt, |s| {
                count += 1;
                if count.is_multiple_of(step_per_sample) {
                    obs.push(observe(s, &ops));
                }
            })?;
            let times: Vec<f64> = obs.iter().map(|o| o.time).collect();
            let mut phases: Vec<f64> = obs.iter().map(|o| o.a.arg()).collect();
            unwrap(&mut phases);
            let logs: Vec<f64> = obs.iter().map(|o| o.a.norm().ln()).collect();
            let (_, slope, rms) = linear_fit(&times, &phases);
            let (_, amp_slope, _) = linear_fit(&times, &logs);
            Ok(PhaseRun {
                alpha,
                photon_number: n0,
                phase_rate: -slope,
                phase_fit_rms: rms,
                amplitude_rate: amp_slope,
                top_layer: observe(&last, &ops).top_layer,
            })
        })
        .collect::<Result<_>>()?;

    let ns: Vec<f64> = runs.iter().map(|r| r.photon_number).collect();
    let rates: Vec<f64> = runs.iter().map(|r| r.phase_rate).collect();
    let (intercept, slope, rms) = linear_fit(&ns, &rates);

    let mut warnings = Vec::new();
    for r in &runs {
        if r.top_layer > 1e-6 {
            warnings.push(format!("alpha = {}: top Fock layer population {:.2e}", r.alpha, r.top_layer));
        }
    }
    let phase_noise = runs.iter().fold(0.0f64, |m, r| m.max(r.phase_fit_rms));
    let scale = rates.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let inconclusive = rms > 0.05 * scale.max(1e-300) && rms > 1e-12 || phase_noise > 1e-3;

    Ok(EffectiveCoefficients {
        g: config.g,
        gamma_perp: config.gamma_perp,
        dispersive_shift: 0.5 * intercept,
        kerr_coefficient: 0.25 * slope,
        target_dispersive: 2.0 * config.g.powi(2) / config.gamma_perp,
        target_kerr: 4.0 * config.g.powi(4) / config.gamma_perp.powi(3),
        runs,
        inconclusive,
        warnings,
    })
}

fn unwrap(phases: &mut [f64]) {
    use std::f64::consts::PI;
    for k in 1..phases.len() {
        let mut d = phases[k] - phases[k - 1];
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        phases[k] = phases[k - 1] + d;
    }
}

/// Least squares `y = c0 + c1 x`; returns (c0, c1, rms residual).
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let c1 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c0 = my - c1 * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - c0 - c1 * a).powi(2)).sum::<f64>() / n).sqrt();
    (c0, c1, rms)
}
