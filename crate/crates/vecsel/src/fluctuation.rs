//! Linearized fluctuations around a steady state and photocurrent spectra.
//!
//! Spectra use `M(W) = (-iW - D)^-1` and `S(W) = M(W) Diff M(-W)^T`.
//! Every lasing steady state has one undamped phase mode per free mode
//! phase. These are removed by deflation, `D' = D - mu * Pi` with `Pi` the
//! spectral projector onto the phase generators `i q x`; the detection
//! vectors annihilate those generators, so spectra are unchanged while
//! `W = 0` and the stability test become meaningful.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{Layout, Mode, Region};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::model::{derive_rates, DerivedRates, ModelParams};
use crate::steadystate::{
    channel_drive, coupling, field_coefficients, mode_slot, survivor_pattern, SteadyState,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Analytic Jacobian of [`crate::steadystate::rhs_in_frame`] at `x`.
pub fn linearize(x: &[Complex64], params: &ModelParams, derived: &DerivedRates, frame: [f64; 2]) -> CMat {
    let _ = derived;
    let layout = Layout::new(params.coupling);
    let n = layout.dim();
    let mut d = CMat::zeros(n, n);

    for mode in [Mode::A, Mode::B] {
        let (kappa, c) = field_coefficients(params, mode);
        let g = coupling(params, mode);
        for spin in 0..2 {
            let (i, j) = (layout.field(mode, spin), layout.field(mode, 1 - spin));
            let (ic, jc) = (layout.field_conj(mode, spin), layout.field_conj(mode, 1 - spin));
            d[(i, i)] = (-kappa).into();
            d[(i, j)] = c;
            d[(ic, ic)] = (-kappa).into();
            d[(ic, jc)] = c.conj();
            for (k, ch) in layout.channels.iter().enumerate() {
                if ch.spin == spin && ch.modes.contains(&mode) {
                    d[(i, layout.channel(k))] += g;
                    d[(ic, layout.channel_conj(k))] += g;
                }
            }
        }
    }

    let relax = Complex64::new(params.gamma_perp, params.nu);
    for (k, ch) in layout.channels.iter().enumerate() {
        let (xk, xkc) = (layout.channel(k), layout.channel_conj(k));
        let pop = layout.population(ch.region, ch.spin);
        let y = x[pop];
        let (drive, drive_c) = channel_drive(&layout, params, ch, x);
        d[(xk, xk)] = -relax;
        d[(xkc, xkc)] = -relax.conj();
        d[(xk, pop)] += drive;
        d[(xkc, pop)] += drive_c;
        for &mode in &ch.modes {
            let g = coupling(params, mode);
            d[(xk, layout.field(mode, ch.spin))] += g * y;
            d[(xkc, layout.field_conj(mode, ch.spin))] += g * y;
        }
    }

    for region in Region::ALL {
        for spin in 0..2 {
            let i = layout.population(region, spin);
            d[(i, i)] = (-params.gamma_2 - params.gamma_c).into();
            d[(i, layout.population(region, 1 - spin))] = params.gamma_c.into();
            for (k, ch) in layout.channels.iter().enumerate() {
                if ch.region != region || ch.spin != spin {
                    continue;
                }
                let (xk, xkc) = (layout.channel(k), layout.channel_conj(k));
                let (drive, drive_c) = channel_drive(&layout, params, ch, x);
                d[(i, xk)] -= drive_c;
                d[(i, xkc)] -= drive;
                for &mode in &ch.modes {
                    let g = coupling(params, mode);
                    d[(i, layout.field_conj(mode, spin))] -= g * x[xk];
                    d[(i, layout.field(mode, spin))] -= g * x[xkc];
                }
            }
        }
    }

    for i in 0..n {
        if let Some(mode) = layout.phase_mode(i) {
            d[(i, i)] += I * layout.charge(i) * frame[mode_slot(mode)];
        }
    }
    d
}

/// Drift matrix with named blocks. Block boundaries: fields `0..8`,
/// polarizations `8..8+2n`, populations after that.
#[derive(Clone, Debug)]
pub struct DriftMatrix {
    pub layout: Layout,
    pub matrix: CMat,
}

impl DriftMatrix {
    fn ranges(&self) -> [std::ops::Range<usize>; 3] {
        let p = self.layout.first_population();
        [0..8, 8..p, p..self.layout.dim()]
    }

    /// Block (row sector, column sector), sectors 0 = fields (A),
    /// 1 = polarizations (P), 2 = populations (N).
    pub fn block(&self, row: usize, col: usize) -> CMat {
        let r = self.ranges();
        let (rr, cc) = (r[row].clone(), r[col].clone());
        self.matrix.view((rr.start, cc.start), (rr.len(), cc.len())).into_owned()
    }
}

pub fn build_drift(steady: &SteadyState, params: &ModelParams, derived: &DerivedRates) -> DriftMatrix {
    DriftMatrix {
        layout: Layout::new(params.coupling),
        matrix: linearize(&steady.to_vector(), params, derived, steady.frame),
    }
}

/// Coefficients of `delta(t - t')` in the ordered correlators `<Z_i Z_j>`.
pub fn build_diffusion(steady: &SteadyState, params: &ModelParams, derived: &DerivedRates) -> CMat {
    let layout = Layout::new(params.coupling);
    let n = layout.dim();
    let mut q = CMat::zeros(n, n);

    for (mode, kappa, kappa_p) in [
        (Mode::A, params.kappa_a, params.kappa_ap),
        (Mode::B, params.kappa_b, params.kappa_bp),
    ] {
        for spin in 0..2 {
            let f = layout.field(mode, spin);
            q[(f, layout.field_conj(mode, spin))] = (2.0 * kappa).into();
            q[(f, layout.field_conj(mode, 1 - spin))] = (2.0 * kappa_p).into();
        }
    }

    let pumps = derived.region_pumps();
    let total = derived.pump_total;
    let half_p = params.p / 2.0;
    for region in Region::ALL {
        let ry = pumps[region.index()];
        let pair = [steady.population(region, 0), steady.population(region, 1)];
        let sum = pair[0] + pair[1];
        for spin in 0..2 {
            let i = layout.population(region, spin);
            let j = layout.population(region, 1 - spin);
            q[(i, i)] = (ry * (1.0 - ry / total * half_p) + params.gamma_2 * pair[spin] + params.gamma_c * sum).into();
            q[(i, j)] = (-ry * ry / total * half_p - params.gamma_c * sum).into();
        }
        for other in Region::ALL {
            if other == region {
                continue;
            }
            let value = -ry * pumps[other.index()] / total * half_p;
            for s in 0..2 {
                for t in 0..2 {
                    q[(layout.population(region, s), layout.population(other, t))] = value.into();
                }
            }
        }
    }

    for (k, ch) in layout.channels.iter().enumerate() {
        let (xk, xkc) = (layout.channel(k), layout.channel_conj(k));
        let ry = pumps[ch.region.index()];
        let own = steady.population(ch.region, ch.spin);
        let flipped = steady.population(ch.region, 1 - ch.spin);
        q[(xkc, xk)] = ((2.0 * params.gamma_perp - params.gamma_2 - params.gamma_c) * own
            + params.gamma_c * flipped
            + ry)
            .into();
        if params.lower_population > 0.0 {
            q[(xk, xkc)] = ((2.0 * params.gamma_perp - params.gamma_1) * params.lower_population).into();
        }
        let xbar = steady.polarizations[k];
        let same = layout.population(ch.region, ch.spin);
        let other = layout.population(ch.region, 1 - ch.spin);
        let c_same = (params.gamma_2 + params.gamma_c) * xbar;
        let c_other = -params.gamma_c * xbar;
        q[(xk, same)] = c_same;
        q[(xk, other)] = c_other;
        q[(same, xkc)] = c_same.conj();
        q[(other, xkc)] = c_other.conj();
    }
    q
}

/// Homodyne-free photocurrent readout vector of the surviving linear
/// polarization of `mode`: `(s+ e_{m+} + s- e_{m-} + adjoints) / 2`.
pub fn detection_vector(layout: &Layout, params: &ModelParams, mode: Mode) -> Vec<f64> {
    let pattern = survivor_pattern(params, mode);
    let mut v = vec![0.0; layout.dim()];
    for spin in 0..2 {
        v[layout.field(mode, spin)] = 0.5 * pattern[spin];
        v[layout.field_conj(mode, spin)] = 0.5 * pattern[spin];
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectrumPoint {
    #[serde(rename = "Omega")]
    pub omega: f64,
    #[serde(rename = "C_aa")]
    pub c_aa: f64,
    #[serde(rename = "C_bb")]
    pub c_bb: f64,
    #[serde(rename = "C_ab")]
    pub c_ab: f64,
    #[serde(rename = "d_aa")]
    pub d_aa: f64,
    #[serde(rename = "d_bb")]
    pub d_bb: f64,
    #[serde(rename = "d_ab")]
    pub d_ab: f64,
}

#[derive(Clone, Debug)]
pub struct FluctuationSystem {
    pub params: ModelParams,
    pub derived: DerivedRates,
    pub steady: SteadyState,
    pub layout: Layout,
    pub drift: CMat,
    pub diffusion: CMat,
    /// Drift with the phase modes moved to `-deflation_rate`.
    pub deflated: CMat,
    pub phase_modes: usize,
    pub deflation_rate: f64,
    pub v_a: Vec<f64>,
    pub v_b: Vec<f64>,
    /// Eigenvalue of `deflated` with the largest real part.
    pub leading_eigenvalue: Complex64,
}

impl FluctuationSystem {
    /// Builds D and Diff at `steady`, deflates phase modes and checks that
    /// the remaining spectrum is damped.
    pub fn new(steady: &SteadyState, params: &ModelParams) -> Result<Self> {
        let sys = Self::build_unchecked(steady, params)?;
        if sys.leading_eigenvalue.re >= 0.0 {
            return Err(Error::Unstable { eigenvalue: sys.leading_eigenvalue });
        }
        Ok(sys)
    }

    /// As [`FluctuationSystem::new`] without the stability gate.
    pub fn build_unchecked(steady: &SteadyState, params: &ModelParams) -> Result<Self> {
        let derived = derive_rates(params)?;
        let layout = Layout::new(params.coupling);
        let drift = build_drift(steady, params, &derived).matrix;
        let diffusion = build_diffusion(steady, params, &derived);
        let deflation_rate = params.kappa_a;
        let (deflated, phase_modes) = deflate_phase_modes(&drift, &layout, steady, deflation_rate);
        let leading_eigenvalue = linalg::max_real_eigenvalue(&deflated);
        Ok(FluctuationSystem {
            params: params.clone(),
            derived,
            steady: steady.clone(),
            v_a: detection_vector(&layout, params, Mode::A),
            v_b: detection_vector(&layout, params, Mode::B),
            layout,
            drift,
            diffusion,
            deflated,
            phase_modes,
            deflation_rate,
            leading_eigenvalue,
        })
    }

    pub fn stability_margin(&self) -> f64 {
        self.leading_eigenvalue.re
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        linalg::eigenvalues(&self.deflated)
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    /// Returns a copy whose diffusion matrix has been replaced.
    pub fn with_diffusion(&self, diffusion: CMat) -> Self {
        FluctuationSystem { diffusion, ..self.clone() }
    }

    /// Returns a copy whose b-mode readout vector has the opposite sign.
    pub fn with_flipped_b_readout(&self) -> Self {
        let v_b = self.v_b.iter().map(|v| -v).collect();
        FluctuationSystem { v_b, ..self.clone() }
    }

    pub fn spectrum_at(&self, omega: f64) -> Result<SpectrumPoint> {
        spectrum_at(omega, self)
    }

    pub fn sweep(&self, grid: &[f64]) -> Result<Vec<SpectrumPoint>> {
        sweep(grid, self)
    }
}

/// Replaces the undamped phase modes of `d` by modes decaying at `rate`.
/// Returns the deflated matrix and the number of modes moved.
fn deflate_phase_modes(d: &CMat, layout: &Layout, steady: &SteadyState, rate: f64) -> (CMat, usize) {
    let x = steady.to_vector();
    let n = layout.dim();
    let scale = linalg::frobenius(d).max(f64::MIN_POSITIVE);

    let mut generators: Vec<Vec<Complex64>> = Vec::new();
    for group in layout.phase_groups() {
        let u: Vec<Complex64> = (0..n)
            .map(|i| match layout.phase_mode(i) {
                Some(m) if m == group => I * layout.charge(i) * x[i],
                _ => ZERO,
            })
            .collect();
        let norm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let u: Vec<Complex64> = u.iter().map(|z| z / norm).collect();
        let du = d * nalgebra::DVector::from_vec(u.clone());
        if du.norm() > 1e-9 * scale {
            // Not a stationary point of the phase dynamics: nothing to deflate.
            return (d.clone(), 0);
        }
        generators.push(u);
    }
    let m = generators.len();
    if m == 0 {
        return (d.clone(), 0);
    }

    let svd = nalgebra::SVD::new(d.clone(), true, false);
    let u_svd = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));

    let mut uu = CMat::zeros(n, m);
    let mut ww = CMat::zeros(n, m);
    for (k, u) in generators.iter().enumerate() {
        for i in 0..n {
            uu[(i, k)] = u[i];
        }
        let col = order[k];
        for i in 0..n {
            ww[(i, k)] = u_svd[(i, col)].conj();
        }
    }
    let gram = ww.transpose() * &uu;
    let Some(gram_inv) = gram.try_inverse() else {
        return (d.clone(), 0);
    };
    let projector = &uu * gram_inv * ww.transpose();
    (d - projector * Complex64::new(rate, 0.0), m)
}

/// Spectral densities and normalized spectra at one frequency.
pub fn spectrum_at(omega: f64, sys: &FluctuationSystem) -> Result<SpectrumPoint> {
    let n = sys.layout.dim();
    let resolvent_rows = |w: f64| -> Result<(nalgebra::DVector<Complex64>, nalgebra::DVector<Complex64>)> {
        // Rows v^T M(w) are solutions of (-iw - D')^T r = v.
        let a: CMat = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { Complex64::new(0.0, -w) } else { ZERO };
            diag - sys.deflated[(j, i)]
        });
        let lu = a.lu();
        let solve = |v: &[f64]| {
            let rhs = nalgebra::DVector::from_iterator(n, v.iter().map(|&x| Complex64::new(x, 0.0)));
            lu.solve(&rhs)
        };
        match (solve(&sys.v_a), solve(&sys.v_b)) {
            (Some(ra), Some(rb)) if ra.iter().chain(rb.iter()).all(|z| z.re.is_finite() && z.im.is_finite()) => {
                Ok((ra, rb))
            }
            _ => Err(Error::SingularResolvent { omega }),
        }
    };
    let (ra_p, rb_p) = resolvent_rows(omega)?;
    let (ra_m, rb_m) = resolvent_rows(-omega)?;

    let q = &sys.diffusion;
    let bilinear = |left: &nalgebra::DVector<Complex64>, right: &nalgebra::DVector<Complex64>| -> Complex64 {
        (left.transpose() * q * right)[(0, 0)]
    };
    let d_aa = bilinear(&ra_p, &ra_m);
    let d_bb = bilinear(&rb_p, &rb_m);
    let d_ab = bilinear(&ra_p, &rb_m);

    let (ka, kb) = sys.params.net_loss();
    let c_aa = 1.0 + 4.0 * ka * d_aa.re;
    let c_bb = 1.0 + 4.0 * kb * d_bb.re;
    let c_ab = 4.0 * (ka * kb).sqrt() * d_ab.re / (c_aa * c_bb).sqrt();
    Ok(SpectrumPoint { omega, c_aa, c_bb, c_ab, d_aa: d_aa.re, d_bb: d_bb.re, d_ab: d_ab.re })
}

/// Evaluates [`spectrum_at`] over `grid` in parallel; output follows grid order.
pub fn sweep(grid: &[f64], sys: &FluctuationSystem) -> Result<Vec<SpectrumPoint>> {
    grid.par_iter().map(|&w| spectrum_at(w, sys)).collect()
}

pub fn log_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![min];
    }
    let (a, b) = (min.ln(), max.ln());
    (0..points)
        .map(|k| {
            if k == 0 {
                min
            } else if k == points - 1 {
                max
            } else {
                (a + (b - a) * k as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn linear_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![min];
    }
    (0..points)
        .map(|k| if k == points - 1 { max } else { min + (max - min) * k as f64 / (points - 1) as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CouplingModel;
    use crate::steadystate::{closed_form_steady, refine_steady};

    fn reference_system() -> FluctuationSystem {
        let p = ModelParams::reference();
        let r = derive_rates(&p).unwrap();
        let s = refine_steady(&closed_form_steady(&p, &r), &p, &r).unwrap().steady;
        FluctuationSystem::new(&s, &p).unwrap()
    }

    #[test]
    fn field_noise_entries() {
        let sys = reference_system();
        let q = &sys.diffusion;
        assert_eq!(q[(0, 4)], Complex64::new(2.0, 0.0));
        assert_eq!(q[(0, 5)], Complex64::new(1.0, 0.0));
        assert_eq!(q[(4, 0)], ZERO);
    }

    #[test]
    fn drift_block_structure() {
        for model in [CouplingModel::Coherent, CouplingModel::Separated] {
            let mut p = ModelParams::reference();
            p.coupling = model;
            p.nu = 30.0;
            let r = derive_rates(&p).unwrap();
            let s = closed_form_steady(&p, &r);
            let d = build_drift(&s, &p, &r);
            assert!(d.block(0, 2).iter().all(|z| *z == ZERO));
            let pp = d.block(1, 1);
            let nc = d.layout.n_channels();
            for i in 0..2 * nc {
                for j in 0..2 * nc {
                    let expected = if i != j {
                        ZERO
                    } else if i < nc {
                        Complex64::new(-p.gamma_perp, -p.nu)
                    } else {
                        Complex64::new(-p.gamma_perp, p.nu)
                    };
                    assert_eq!(pp[(i, j)], expected);
                }
            }
            let nn = d.block(2, 2);
            for i in 0..6 {
                assert_eq!(nn[(i, i)].re, -p.gamma_2 - p.gamma_c);
                for j in 0..6 {
                    assert_eq!(nn[(i, j)], nn[(j, i)]);
                }
            }
            assert_eq!(nn[(0, 1)].re, p.gamma_c);
        }
    }

    #[test]
    fn phase_modes_are_deflated() {
        let sys = reference_system();
        assert_eq!(sys.phase_modes, 2);
        assert!(sys.stability_margin() < 0.0);
    }

    #[test]
    fn grids() {
        let g = log_grid(1e-2, 1e4, 400);
        assert_eq!(g.len(), 400);
        assert_eq!(g[0], 1e-2);
        assert_eq!(g[399], 1e4);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let l = linear_grid(0.0, 1.0, 5);
        assert_eq!(l, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
