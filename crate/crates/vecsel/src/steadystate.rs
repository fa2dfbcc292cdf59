//! Stationary intensities, populations and polarizations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::basis::{Layout, Mode, Region};
use crate::error::{Error, Result};
use crate::fluctuation::linearize;
use crate::model::{CouplingModel, DerivedRates, ModelParams};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteadyState {
    pub model: CouplingModel,
    pub intensity_a: f64,
    pub intensity_b: f64,
    /// a+, a-, b+, b-.
    pub fields: [Complex64; 4],
    /// One entry per polarization channel of the [`Layout`].
    pub polarizations: Vec<Complex64>,
    /// M2+, M2-, N2+, N2-, L2+, L2-.
    pub populations: [f64; 6],
    /// Angular frequency of the co-moving frame of each mode's phase,
    /// relative to the frame rotating at the a-mode frequency.
    pub frame: [f64; 2],
    pub lasing_a: bool,
    pub lasing_b: bool,
    pub refined: bool,
}

impl SteadyState {
    pub fn a_plus(&self) -> Complex64 {
        self.fields[0]
    }
    pub fn a_minus(&self) -> Complex64 {
        self.fields[1]
    }
    pub fn b_plus(&self) -> Complex64 {
        self.fields[2]
    }
    pub fn b_minus(&self) -> Complex64 {
        self.fields[3]
    }

    pub fn population(&self, region: Region, spin: usize) -> f64 {
        self.populations[2 * region.index() + spin]
    }

    /// Sum of the polarizations belonging to `region` and `spin`. For the
    /// shared region of the separated model this is Xi_a + Xi_b.
    pub fn polarization(&self, region: Region, spin: usize) -> Complex64 {
        let layout = self.layout();
        layout
            .channels
            .iter()
            .zip(&self.polarizations)
            .filter(|(c, _)| c.region == region && c.spin == spin)
            .map(|(_, x)| *x)
            .sum()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.model)
    }

    pub fn frame_of(&self, mode: Mode) -> f64 {
        match (self.model, mode) {
            (CouplingModel::Coherent, _) | (_, Mode::A) => self.frame[0],
            (_, Mode::B) => self.frame[1],
        }
    }

    /// Full state vector in [`Layout`] order, adjoints included.
    pub fn to_vector(&self) -> Vec<Complex64> {
        let layout = self.layout();
        let mut x = vec![Complex64::new(0.0, 0.0); layout.dim()];
        for k in 0..4 {
            x[k] = self.fields[k];
            x[k + 4] = self.fields[k].conj();
        }
        for (k, p) in self.polarizations.iter().enumerate() {
            x[layout.channel(k)] = *p;
            x[layout.channel_conj(k)] = p.conj();
        }
        let first = layout.first_population();
        for k in 0..6 {
            x[first + k] = Complex64::new(self.populations[k], 0.0);
        }
        x
    }

    /// Global phase flip of mode b and everything that follows its phase.
    pub fn with_b_phase_flip(&self) -> SteadyState {
        let mut out = self.clone();
        out.fields[2] = -out.fields[2];
        out.fields[3] = -out.fields[3];
        let layout = self.layout();
        for (k, ch) in layout.channels.iter().enumerate() {
            if ch.modes == [Mode::B] {
                out.polarizations[k] = -out.polarizations[k];
            }
        }
        out
    }
}

/// Sign pattern (+ component, - component) of the low-loss linear
/// polarization of `mode`: x = (1, 1), y = (-1, 1).
pub fn survivor_pattern(params: &ModelParams, mode: Mode) -> [f64; 2] {
    let s = dichroism_sign(params, mode);
    if s > 0.0 {
        [1.0, 1.0]
    } else {
        [-1.0, 1.0]
    }
}

pub(crate) fn dichroism_sign(params: &ModelParams, mode: Mode) -> f64 {
    let s = params.dichroism_sign.value();
    match mode {
        Mode::A => s,
        Mode::B => -s,
    }
}

/// Returns (Rbar_a, Rbar_b).
pub fn threshold(params: &ModelParams, derived: &DerivedRates) -> (f64, f64) {
    let (ka, kb) = params.net_loss();
    (
        derived.d * params.gamma_perp * ka / (params.g_a * params.g_a),
        derived.d * params.gamma_perp * kb / (params.g_b * params.g_b),
    )
}

/// Class-A intensities: the stationary point of
/// `2 kappa'_x = r_x / (d + c_x (I_x + zeta_xy I_y))` for both modes,
/// clamped at zero.
pub fn class_a_intensities(params: &ModelParams, derived: &DerivedRates) -> (f64, f64) {
    let (ka, kb) = params.net_loss();
    let (ga2, gb2) = (params.g_a * params.g_a, params.g_b * params.g_b);
    let dg = derived.d * params.gamma_perp;
    // I_a + zeta_ab I_b = sa, I_b + zeta_ba I_a = sb.
    let sa = params.pump_a / ka - dg / ga2;
    let sb = derived.pump_b / kb - dg / gb2;
    let det = 1.0 - derived.zeta_ab * derived.zeta_ba;
    let (mut ia, mut ib) = if det.abs() < 1e-12 {
        let total = sa.max(0.0);
        (0.5 * total, 0.5 * total / derived.zeta_ab)
    } else {
        ((sa - derived.zeta_ab * sb) / det, (sb - derived.zeta_ba * sa) / det)
    };
    if ia <= 0.0 && ib <= 0.0 {
        return (0.0, 0.0);
    }
    if ib <= 0.0 {
        ib = 0.0;
        ia = sa.max(0.0);
    } else if ia <= 0.0 {
        ia = 0.0;
        ib = sb.max(0.0);
    }
    (ia, ib)
}

pub fn closed_form_steady(params: &ModelParams, derived: &DerivedRates) -> SteadyState {
    let (ia, ib) = class_a_intensities(params, derived);
    let script_m = derived.d / params.gamma_2 * params.pump_a
        / (derived.d + derived.c_a * (ia + derived.zeta_ab * ib));
    let script_n = derived.d / params.gamma_2 * derived.pump_b
        / (derived.d + derived.c_b * (ib + derived.zeta_ba * ia));
    let shared = 0.5 * (params.xi_a.sqrt() * script_m + params.xi_b.sqrt() * script_n);
    let m = script_m - shared;
    let n = script_n - shared;

    let pa = survivor_pattern(params, Mode::A);
    let pb = survivor_pattern(params, Mode::B);
    let (amp_a, amp_b) = ((ia / 2.0).sqrt(), (ib / 2.0).sqrt());
    let fields = [
        Complex64::new(pa[0] * amp_a, 0.0),
        Complex64::new(pa[1] * amp_a, 0.0),
        Complex64::new(pb[0] * amp_b, 0.0),
        Complex64::new(pb[1] * amp_b, 0.0),
    ];
    let populations = [m, m, n, n, shared, shared];

    let layout = Layout::new(params.coupling);
    let relax = Complex64::new(params.gamma_perp, params.nu);
    let polarizations = layout
        .channels
        .iter()
        .map(|ch| {
            let drive: Complex64 = ch
                .modes
                .iter()
                .map(|&mode| coupling(params, mode) * fields[layout.field(mode, ch.spin)])
                .sum();
            populations[2 * ch.region.index() + ch.spin] * drive / relax
        })
        .collect();

    SteadyState {
        model: params.coupling,
        intensity_a: ia,
        intensity_b: ib,
        fields,
        polarizations,
        populations,
        frame: [0.0, 0.0],
        lasing_a: ia > 0.0,
        lasing_b: ib > 0.0,
        refined: false,
    }
}

pub(crate) fn coupling(params: &ModelParams, mode: Mode) -> f64 {
    match mode {
        Mode::A => params.g_a,
        Mode::B => params.g_b,
    }
}

/// Deterministic time derivative of the collective variables in the frame
/// rotating at the a-mode frequency. Adjoint entries are treated as
/// independent variables, so the result is a polynomial in `x`.
pub fn collective_rhs(x: &[Complex64], params: &ModelParams, derived: &DerivedRates) -> Vec<Complex64> {
    rhs_in_frame(x, params, derived, [0.0, 0.0])
}

/// [`collective_rhs`] seen from a frame whose mode phases rotate at
/// `frame` relative to the a-mode frame.
pub fn rhs_in_frame(
    x: &[Complex64],
    params: &ModelParams,
    derived: &DerivedRates,
    frame: [f64; 2],
) -> Vec<Complex64> {
    let layout = Layout::new(params.coupling);
    assert_eq!(x.len(), layout.dim(), "state length does not match the layout");
    let mut out = vec![Complex64::new(0.0, 0.0); layout.dim()];

    for mode in [Mode::A, Mode::B] {
        let (kappa, c) = field_coefficients(params, mode);
        let g = coupling(params, mode);
        for spin in 0..2 {
            let (i, j) = (layout.field(mode, spin), layout.field(mode, 1 - spin));
            let (ic, jc) = (layout.field_conj(mode, spin), layout.field_conj(mode, 1 - spin));
            out[i] = -kappa * x[i] + c * x[j];
            out[ic] = -kappa * x[ic] + c.conj() * x[jc];
            for (k, ch) in layout.channels.iter().enumerate() {
                if ch.spin == spin && ch.modes.contains(&mode) {
                    out[i] += g * x[layout.channel(k)];
                    out[ic] += g * x[layout.channel_conj(k)];
                }
            }
        }
    }

    let relax = Complex64::new(params.gamma_perp, params.nu);
    for (k, ch) in layout.channels.iter().enumerate() {
        let (xk, xkc) = (layout.channel(k), layout.channel_conj(k));
        let y = x[layout.population(ch.region, ch.spin)];
        let (drive, drive_c) = channel_drive(&layout, params, ch, x);
        out[xk] = -relax * x[xk] + y * drive;
        out[xkc] = -relax.conj() * x[xkc] + y * drive_c;
    }

    let pumps = derived.region_pumps();
    for region in Region::ALL {
        for spin in 0..2 {
            let i = layout.population(region, spin);
            let other = x[layout.population(region, 1 - spin)];
            let mut v = pumps[region.index()] - params.gamma_2 * x[i] - params.gamma_c * (x[i] - other);
            for (k, ch) in layout.channels.iter().enumerate() {
                if ch.region == region && ch.spin == spin {
                    let (drive, drive_c) = channel_drive(&layout, params, ch, x);
                    v -= drive_c * x[layout.channel(k)] + x[layout.channel_conj(k)] * drive;
                }
            }
            out[i] = v;
        }
    }

    for i in 0..layout.dim() {
        if let Some(mode) = layout.phase_mode(i) {
            let w = frame[mode_slot(mode)];
            if w != 0.0 {
                out[i] += I * layout.charge(i) * w * x[i];
            }
        }
    }
    out
}

pub(crate) fn mode_slot(mode: Mode) -> usize {
    match mode {
        Mode::A => 0,
        Mode::B => 1,
    }
}

/// (kappa_x, signed dichroism/birefringence coefficient) of a mode.
pub(crate) fn field_coefficients(params: &ModelParams, mode: Mode) -> (f64, Complex64) {
    let s = dichroism_sign(params, mode);
    match mode {
        Mode::A => (params.kappa_a, s * Complex64::new(params.kappa_ap, params.omega_ap)),
        Mode::B => (params.kappa_b, s * Complex64::new(params.kappa_bp, params.omega_bp)),
    }
}

/// Field combination driving a channel, and its adjoint.
pub(crate) fn channel_drive(
    layout: &Layout,
    params: &ModelParams,
    ch: &crate::basis::Channel,
    x: &[Complex64],
) -> (Complex64, Complex64) {
    let mut d = Complex64::new(0.0, 0.0);
    let mut dc = Complex64::new(0.0, 0.0);
    for &mode in &ch.modes {
        let g = coupling(params, mode);
        d += g * x[layout.field(mode, ch.spin)];
        dc += g * x[layout.field_conj(mode, ch.spin)];
    }
    (d, dc)
}

/// Residual scale used by the convergence test: max(R, gamma_2 * population).
pub fn residual_scale(params: &ModelParams, derived: &DerivedRates, steady: &SteadyState) -> f64 {
    let pop = steady.populations.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    derived.pump_total.max(params.gamma_2 * pop)
}

pub fn residual_norm(steady: &SteadyState, params: &ModelParams, derived: &DerivedRates) -> f64 {
    rhs_in_frame(&steady.to_vector(), params, derived, steady.frame)
        .iter()
        .fold(0.0f64, |m, z| m.max(z.norm()))
}

#[derive(Clone, Debug, Serialize)]
pub struct Refinement {
    pub steady: SteadyState,
    pub iterations: usize,
    pub residual: f64,
    pub tolerance: f64,
}

pub const MAX_NEWTON_ITERATIONS: usize = 100;

/// Newton iteration on the independent real unknowns (real and imaginary
/// parts of every field and polarization, the populations, and one frame
/// frequency per lasing phase group), with one phase-fixing equation per
/// lasing group.
pub fn refine_steady(initial: &SteadyState, params: &ModelParams, derived: &DerivedRates) -> Result<Refinement> {
    let layout = Layout::new(params.coupling);
    if initial.model != params.coupling {
        return Err(Error::Numerical("initial state belongs to a different coupling model".into()));
    }
    let amps = layout.amplitudes();
    let first_pop = layout.first_population();

    // Phase groups that carry light, with the field used to pin the phase.
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for group in layout.phase_groups() {
        let slot = mode_slot(group);
        let candidates: Vec<usize> = (0..4).filter(|&i| layout.phase_mode(i) == Some(group)).collect();
        if let Some(&pin) = candidates
            .iter()
            .filter(|&&i| initial.fields[i].norm() > 0.0)
            .max_by(|&&i, &&j| initial.fields[i].norm().total_cmp(&initial.fields[j].norm()))
        {
            groups.push((slot, pin));
        }
    }

    let n_unknowns = 2 * amps.len() + 6 + groups.len();
    let pack = |x: &[Complex64], frame: [f64; 2]| -> DVector<f64> {
        let mut y = DVector::zeros(n_unknowns);
        for (k, &i) in amps.iter().enumerate() {
            y[2 * k] = x[i].re;
            y[2 * k + 1] = x[i].im;
        }
        for k in 0..6 {
            y[2 * amps.len() + k] = x[first_pop + k].re;
        }
        for (g, &(slot, _)) in groups.iter().enumerate() {
            y[2 * amps.len() + 6 + g] = frame[slot];
        }
        y
    };
    let unpack = |y: &DVector<f64>| -> (Vec<Complex64>, [f64; 2]) {
        let mut x = vec![Complex64::new(0.0, 0.0); layout.dim()];
        for (k, &i) in amps.iter().enumerate() {
            let z = Complex64::new(y[2 * k], y[2 * k + 1]);
            x[i] = z;
            x[layout.conj(i)] = z.conj();
        }
        for k in 0..6 {
            x[first_pop + k] = Complex64::new(y[2 * amps.len() + k], 0.0);
        }
        let mut frame = [0.0, 0.0];
        for (g, &(slot, _)) in groups.iter().enumerate() {
            frame[slot] = y[2 * amps.len() + 6 + g];
        }
        if params.coupling == CouplingModel::Coherent {
            frame[1] = frame[0];
        }
        (x, frame)
    };
    let residual = |x: &[Complex64], frame: [f64; 2]| -> DVector<f64> {
        let f = rhs_in_frame(x, params, derived, frame);
        let mut r = DVector::zeros(n_unknowns);
        for (k, &i) in amps.iter().enumerate() {
            r[2 * k] = f[i].re;
            r[2 * k + 1] = f[i].im;
        }
        for k in 0..6 {
            r[2 * amps.len() + k] = f[first_pop + k].re;
        }
        for (g, &(_, pin)) in groups.iter().enumerate() {
            r[2 * amps.len() + 6 + g] = x[pin].im;
        }
        r
    };
    let max_abs = |x: &[Complex64], frame: [f64; 2]| -> f64 {
        rhs_in_frame(x, params, derived, frame).iter().fold(0.0f64, |m, z| m.max(z.norm()))
    };

    let mut y = pack(&initial.to_vector(), initial.frame);
    let tol_for = |x: &[Complex64]| {
        let pop = (0..6).fold(0.0f64, |m, k| m.max(x[first_pop + k].re.abs()));
        1e-10 * derived.pump_total.max(params.gamma_2 * pop)
    };

    let mut iterations = 0;
    let (mut x, mut frame) = unpack(&y);
    let mut res = max_abs(&x, frame);
    while iterations < MAX_NEWTON_ITERATIONS {
        iterations += 1;
        let f = residual(&x, frame);
        let jac = real_jacobian(&layout, params, derived, &x, frame, &amps, &groups);
        let step = match jac.clone().lu().solve(&(-&f)) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                // Degenerate families of fixed points: minimum-norm step.
                let svd = jac.svd(true, true);
                let cut = 1e-12 * svd.singular_values.max();
                svd.solve(&(-&f), cut).map_err(|e| Error::Numerical(format!("singular Newton matrix: {e}")))?
            }
        };
        let f_norm = f.norm();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &y + &step * t;
            let (tx, tf) = unpack(&trial);
            let tn = residual(&tx, tf).norm();
            if tn <= (1.0 - 1e-4 * t) * f_norm || (tn <= f_norm && res <= tol_for(&tx)) {
                accepted = Some((trial, tx, tf));
                break;
            }
            t *= 0.5;
        }
        let Some((ny, nx, nf)) = accepted else {
            break;
        };
        let step_size = (&ny - &y).norm();
        y = ny;
        x = nx;
        frame = nf;
        res = max_abs(&x, frame);
        if res <= tol_for(&x) && step_size <= 1e-13 * y.norm().max(1.0) {
            break;
        }
    }

    let tolerance = tol_for(&x);
    if res.is_nan() || res > tolerance {
        return Err(Error::NoConvergence { iterations, residual: res });
    }

    let fields = [x[0], x[1], x[2], x[3]];
    let polarizations = (0..layout.n_channels()).map(|k| x[layout.channel(k)]).collect();
    let mut populations = [0.0; 6];
    for (k, p) in populations.iter_mut().enumerate() {
        *p = x[first_pop + k].re;
    }
    let ia = fields[0].norm_sqr() + fields[1].norm_sqr();
    let ib = fields[2].norm_sqr() + fields[3].norm_sqr();
    let floor = 1e-12 * (1.0 + initial.intensity_a.max(initial.intensity_b));
    let steady = SteadyState {
        model: params.coupling,
        intensity_a: ia,
        intensity_b: ib,
        fields,
        polarizations,
        populations,
        frame,
        lasing_a: ia > floor,
        lasing_b: ib > floor,
        refined: true,
    };
    Ok(Refinement { steady, iterations, residual: res, tolerance })
}

/// Jacobian of the real Newton residual, assembled from the complex
/// linearization.
fn real_jacobian(
    layout: &Layout,
    params: &ModelParams,
    derived: &DerivedRates,
    x: &[Complex64],
    frame: [f64; 2],
    amps: &[usize],
    groups: &[(usize, usize)],
) -> DMatrix<f64> {
    let d = linearize(x, params, derived, frame);
    let first_pop = layout.first_population();
    let n = 2 * amps.len() + 6 + groups.len();
    let mut rows: Vec<(usize, bool)> = Vec::with_capacity(n);
    for &i in amps {
        rows.push((i, false));
        rows.push((i, true));
    }
    for k in 0..6 {
        rows.push((first_pop + k, false));
    }

    let mut j = DMatrix::zeros(n, n);
    let mut put_column = |col: usize, v: &dyn Fn(usize) -> Complex64| {
        for (r, &(i, imag)) in rows.iter().enumerate() {
            let z = v(i);
            j[(r, col)] = if imag { z.im } else { z.re };
        }
    };
    for (k, &a) in amps.iter().enumerate() {
        let c = layout.conj(a);
        put_column(2 * k, &|i| d[(i, a)] + d[(i, c)]);
        put_column(2 * k + 1, &|i| I * (d[(i, a)] - d[(i, c)]));
    }
    for k in 0..6 {
        let p = first_pop + k;
        put_column(2 * amps.len() + k, &|i| d[(i, p)]);
    }
    for (g, &(slot, _)) in groups.iter().enumerate() {
        put_column(2 * amps.len() + 6 + g, &|i| match layout.phase_mode(i) {
            Some(m) if phase_slot(layout, m) == slot => I * layout.charge(i) * x[i],
            _ => Complex64::new(0.0, 0.0),
        });
    }
    for (g, &(_, pin)) in groups.iter().enumerate() {
        let r = 2 * amps.len() + 6 + g;
        let k = amps.iter().position(|&a| a == pin).expect("pin is an amplitude");
        j[(r, 2 * k + 1)] = 1.0;
    }
    j
}

fn phase_slot(layout: &Layout, mode: Mode) -> usize {
    match layout.model {
        CouplingModel::Coherent => 0,
        CouplingModel::Separated => mode_slot(mode),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_rates;
    use approx::assert_relative_eq;

    #[test]
    fn reference_threshold() {
        let p = ModelParams::reference();
        let r = derive_rates(&p).unwrap();
        let (ta, tb) = threshold(&p, &r);
        assert_relative_eq!(ta, 5e5, max_relative = 1e-14);
        assert_relative_eq!(tb, 5e5, max_relative = 1e-14);
    }

    #[test]
    fn symmetric_closed_form() {
        let p = ModelParams::reference();
        let r = derive_rates(&p).unwrap();
        let s = closed_form_steady(&p, &r);
        // [g^2 R / kappa' - d gamma_perp] / [g^2 (1 + xi)] with R = 1.01 * 5e5.
        let expected = (0.01 * 5.05e5 / 0.5 - 1e4) / (0.01 * 1.8);
        assert_relative_eq!(s.intensity_a, expected, max_relative = 1e-12);
        assert_relative_eq!(s.intensity_a, 5555.555555555556, max_relative = 1e-12);
        assert_relative_eq!(s.a_plus().norm_sqr() + s.a_minus().norm_sqr(), s.intensity_a, max_relative = 1e-14);
        assert_eq!(s.a_plus(), s.a_minus());
        assert_eq!(s.b_plus(), -s.b_minus());
    }

    #[test]
    fn below_and_at_threshold() {
        let p = ModelParams::reference().with_pump_ratio(0.9);
        let r = derive_rates(&p).unwrap();
        let s = closed_form_steady(&p, &r);
        assert!(!s.lasing_a && s.intensity_a == 0.0);
        let p = ModelParams::reference().with_pump_ratio(1.0);
        let r = derive_rates(&p).unwrap();
        assert!(closed_form_steady(&p, &r).intensity_a.abs() < 1e-9);
    }

    #[test]
    fn unsaturated_fixed_point() {
        let p = ModelParams::reference();
        let r = derive_rates(&p).unwrap();
        let layout = Layout::new(p.coupling);
        let mut x = vec![Complex64::new(0.0, 0.0); layout.dim()];
        for region in Region::ALL {
            for spin in 0..2 {
                x[layout.population(region, spin)] = (r.region_pumps()[region.index()] / p.gamma_2).into();
            }
        }
        let f = collective_rhs(&x, &p, &r);
        assert!(f.iter().all(|z| z.norm() < 1e-9));
    }

    #[test]
    fn refinement_converges_in_separated_model() {
        let p = ModelParams::reference();
        let r = derive_rates(&p).unwrap();
        let cf = closed_form_steady(&p, &r);
        let out = refine_steady(&cf, &p, &r).unwrap();
        assert!(out.residual <= out.tolerance);
        assert!(out.steady.refined && out.steady.lasing_a && out.steady.lasing_b);
        assert!(out.steady.fields.iter().all(|z| z.im.abs() < 1e-9 * z.norm().max(1.0)));
    }

    #[test]
    fn refinement_below_threshold_is_dark() {
        let p = ModelParams::reference().with_pump_ratio(0.5);
        let r = derive_rates(&p).unwrap();
        let out = refine_steady(&closed_form_steady(&p, &r), &p, &r).unwrap();
        assert_eq!(out.steady.intensity_a, 0.0);
        assert_relative_eq!(out.steady.populations[0], r.pump_1 / p.gamma_2, max_relative = 1e-12);
    }
}
