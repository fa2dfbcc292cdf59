//! Physical parameters and the rates derived from them.

use serde::Serialize;

use crate::error::{Error, Result};

/// How the polarization of the shared region couples to the two modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingModel {
    /// The shared-region polarization is split into an a-resonant and a
    /// b-resonant part; the a/b beat terms are dropped. 30 variables.
    Separated,
    /// One shared-region polarization driven by both modes. 26 variables.
    Coherent,
}

/// Sign of the linear dichroism/birefringence coupling of mode a.
/// Mode b always carries the opposite sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DichroismSign {
    Plus,
    Minus,
}

impl DichroismSign {
    pub fn value(self) -> f64 {
        match self {
            DichroismSign::Plus => 1.0,
            DichroismSign::Minus => -1.0,
        }
    }
}

impl std::str::FromStr for CouplingModel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "separated" => Ok(CouplingModel::Separated),
            "coherent" => Ok(CouplingModel::Coherent),
            _ => Err(format!("expected `separated` or `coherent`, got `{s}`")),
        }
    }
}

impl std::str::FromStr for DichroismSign {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "plus" | "+" => Ok(DichroismSign::Plus),
            "minus" | "-" => Ok(DichroismSign::Minus),
            _ => Err(format!("expected `plus` or `minus`, got `{s}`")),
        }
    }
}

/// All rates are in units where `kappa_a = 1` in the reference set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub kappa_ap: f64,
    pub kappa_bp: f64,
    pub omega_ap: f64,
    pub omega_bp: f64,
    pub g_a: f64,
    pub g_b: f64,
    pub gamma_2: f64,
    pub gamma_1: f64,
    pub gamma_perp: f64,
    pub gamma_c: f64,
    pub nu: f64,
    pub xi_a: f64,
    pub xi_b: f64,
    /// Pump rate into the whole a-coupled region, per spin branch.
    #[serde(rename = "R_a")]
    pub pump_a: f64,
    pub p: f64,
    pub coupling: CouplingModel,
    pub dichroism_sign: DichroismSign,
    /// Stationary lower-level population used by the anti-normally ordered
    /// polarization noise. Zero drops those entries.
    pub lower_population: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl ModelParams {
    /// Symmetric reference set: g = 0.1, kappa = 1, kappa_p = 0.5,
    /// gamma_2 = 10, gamma_perp = 1e3, gamma_c = 100, xi = 0.8, p = 0,
    /// pumped at 1.01 times threshold.
    pub fn reference() -> Self {
        let base = ModelParams {
            kappa_a: 1.0,
            kappa_b: 1.0,
            kappa_ap: 0.5,
            kappa_bp: 0.5,
            omega_ap: 0.0,
            omega_bp: 0.0,
            g_a: 0.1,
            g_b: 0.1,
            gamma_2: 10.0,
            gamma_1: 1.0e4,
            gamma_perp: 1.0e3,
            gamma_c: 100.0,
            nu: 0.0,
            xi_a: 0.8,
            xi_b: 0.8,
            pump_a: 1.0,
            p: 0.0,
            coupling: CouplingModel::Separated,
            dichroism_sign: DichroismSign::Plus,
            lower_population: 0.0,
        };
        base.with_pump_ratio(1.01)
    }

    /// Saturation denominator `gamma_2 (1 + nu^2 / gamma_perp^2)`.
    pub fn saturation_denominator(&self) -> f64 {
        self.gamma_2 * (1.0 + (self.nu / self.gamma_perp).powi(2))
    }

    /// Threshold of `R_a`.
    pub fn threshold_a(&self) -> f64 {
        self.saturation_denominator() * self.gamma_perp * (self.kappa_a - self.kappa_ap)
            / (self.g_a * self.g_a)
    }

    pub fn threshold_b(&self) -> f64 {
        self.saturation_denominator() * self.gamma_perp * (self.kappa_b - self.kappa_bp)
            / (self.g_b * self.g_b)
    }

    /// Returns a copy with `R_a` set to `ratio` times its threshold.
    pub fn with_pump_ratio(mut self, ratio: f64) -> Self {
        self.pump_a = ratio * self.threshold_a();
        self
    }

    pub fn pump_ratio(&self) -> f64 {
        self.pump_a / self.threshold_a()
    }

    /// Sets both overlap fractions, keeping the pump ratio.
    pub fn with_xi(mut self, xi: f64) -> Self {
        let ratio = self.pump_ratio();
        self.xi_a = xi;
        self.xi_b = xi;
        self.with_pump_ratio(ratio)
    }

    /// Sets both coupling constants, keeping the pump ratio.
    pub fn with_g(mut self, g: f64) -> Self {
        let ratio = self.pump_ratio();
        self.g_a = g;
        self.g_b = g;
        self.with_pump_ratio(ratio)
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    /// Net loss of the surviving polarization of each mode.
    pub fn net_loss(&self) -> (f64, f64) {
        (self.kappa_a - self.kappa_ap, self.kappa_b - self.kappa_bp)
    }

    /// Checks hard invariants and returns advisory warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let positive = [
            ("kappa_a", self.kappa_a),
            ("kappa_b", self.kappa_b),
            ("kappa_ap", self.kappa_ap),
            ("kappa_bp", self.kappa_bp),
            ("g_a", self.g_a),
            ("g_b", self.g_b),
            ("gamma_2", self.gamma_2),
            ("gamma_1", self.gamma_1),
            ("gamma_perp", self.gamma_perp),
            ("gamma_c", self.gamma_c),
            ("R_a", self.pump_a),
        ];
        if self.kappa_a <= self.kappa_ap {
            return Err(invalid("kappa_ap", "kappa_a must exceed kappa_ap".into()));
        }
        if self.kappa_b <= self.kappa_bp {
            return Err(invalid("kappa_bp", "kappa_b must exceed kappa_bp".into()));
        }
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be a positive finite rate, got {v}")));
            }
        }
        for (name, v) in [("omega_ap", self.omega_ap), ("omega_bp", self.omega_bp), ("nu", self.nu)] {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        for (name, v) in [("xi_a", self.xi_a), ("xi_b", self.xi_b)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(invalid(name, format!("must lie in (0, 1], got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(invalid("p", format!("must lie in [0, 1], got {}", self.p)));
        }
        if !(self.lower_population.is_finite() && self.lower_population >= 0.0) {
            return Err(invalid(
                "lower_population",
                format!("must be non-negative, got {}", self.lower_population),
            ));
        }
        Ok(self.hierarchy_warnings())
    }

    /// Class-A ordering kappa, kappa_p << gamma_2 << gamma_perp, gamma_1,
    /// where "<<" means at least a factor of ten.
    pub fn hierarchy_warnings(&self) -> Vec<String> {
        const FACTOR: f64 = 10.0;
        let mut out = Vec::new();
        let field = self.kappa_a.max(self.kappa_b).max(self.kappa_ap).max(self.kappa_bp);
        if field * FACTOR > self.gamma_2 {
            out.push(format!(
                "field rates ({field}) are not well below gamma_2 ({})",
                self.gamma_2
            ));
        }
        let fast = self.gamma_perp.min(self.gamma_1);
        if self.gamma_2 * FACTOR > fast {
            out.push(format!(
                "gamma_2 ({}) is not well below min(gamma_perp, gamma_1) ({fast})",
                self.gamma_2
            ));
        }
        out
    }
}

fn invalid(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivedRates {
    pub d: f64,
    pub r_a: f64,
    pub r_b: f64,
    pub c_a: f64,
    pub c_b: f64,
    pub zeta_ab: f64,
    pub zeta_ba: f64,
    /// Pump of the whole b-coupled region.
    pub pump_b: f64,
    /// Pumps of the a-only, b-only and shared regions.
    pub pump_1: f64,
    pub pump_2: f64,
    pub pump_3: f64,
    pub pump_total: f64,
}

impl DerivedRates {
    /// Region pumps in the order (a-only, b-only, shared).
    pub fn region_pumps(&self) -> [f64; 3] {
        [self.pump_1, self.pump_2, self.pump_3]
    }
}

pub fn derive_rates(params: &ModelParams) -> Result<DerivedRates> {
    params.validate()?;
    let d = params.saturation_denominator();
    let pump_3 = params.xi_a.sqrt() * params.pump_a;
    let pump_b = (params.xi_a / params.xi_b).sqrt() * params.pump_a;
    let pump_1 = (params.pump_a - pump_3).max(0.0);
    let pump_2 = (pump_b - pump_3).max(0.0);
    let (ga2, gb2) = (params.g_a * params.g_a, params.g_b * params.g_b);
    Ok(DerivedRates {
        d,
        r_a: 2.0 * ga2 * params.pump_a / params.gamma_perp,
        r_b: 2.0 * gb2 * pump_b / params.gamma_perp,
        c_a: ga2 / params.gamma_perp,
        c_b: gb2 / params.gamma_perp,
        zeta_ab: params.xi_a * gb2 / ga2,
        zeta_ba: params.xi_b * ga2 / gb2,
        pump_b,
        pump_1,
        pump_2,
        pump_3,
        pump_total: pump_1 + pump_2 + pump_3,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidityReport {
    pub ratio_a: f64,
    pub ratio_b: f64,
    pub threshold: f64,
    pub valid: bool,
}

pub const VALIDITY_THRESHOLD: f64 = 0.1;

/// Small-amplitude condition `c_x (I_x + zeta_xy I_y) / d`.
pub fn check_validity(
    derived: &DerivedRates,
    steady: &crate::steadystate::SteadyState,
) -> ValidityReport {
    let ratio_a = derived.c_a * (steady.intensity_a + derived.zeta_ab * steady.intensity_b) / derived.d;
    let ratio_b = derived.c_b * (steady.intensity_b + derived.zeta_ba * steady.intensity_a) / derived.d;
    ValidityReport {
        ratio_a,
        ratio_b,
        threshold: VALIDITY_THRESHOLD,
        valid: ratio_a <= VALIDITY_THRESHOLD && ratio_b <= VALIDITY_THRESHOLD,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_rates() {
        let p = ModelParams::reference();
        let r = derive_rates(&p).unwrap();
        assert_eq!(r.d, 10.0);
        assert_relative_eq!(r.c_a, 1e-5, max_relative = 1e-15);
        assert_relative_eq!(r.pump_b, p.pump_a, max_relative = 1e-15);
        assert_relative_eq!(r.zeta_ab, r.zeta_ba);
    }

    #[test]
    fn pump_partition() {
        let mut p = ModelParams::reference();
        p.xi_a = 0.3;
        p.xi_b = 0.6;
        let r = derive_rates(&p).unwrap();
        assert_relative_eq!(r.pump_3, 0.6f64.sqrt() * r.pump_b, max_relative = 1e-14);
        assert_relative_eq!(r.pump_total, r.pump_1 + r.pump_2 + r.pump_3);
        assert!(r.pump_1 >= 0.0 && r.pump_2 >= 0.0);
    }

    #[test]
    fn rejects_degenerate_dichroism() {
        let mut p = ModelParams::reference();
        p.kappa_ap = p.kappa_a;
        assert!(matches!(derive_rates(&p), Err(Error::InvalidParameter { name: "kappa_ap", .. })));
        let mut p = ModelParams::reference();
        p.gamma_c = 0.0;
        assert!(derive_rates(&p).is_err());
        let mut p = ModelParams::reference();
        p.xi_b = 1.5;
        assert!(derive_rates(&p).is_err());
    }

    #[test]
    fn detuning_raises_saturation_denominator() {
        let mut p = ModelParams::reference();
        assert_eq!(p.saturation_denominator(), p.gamma_2);
        p.nu = p.gamma_perp;
        assert_relative_eq!(p.saturation_denominator(), 2.0 * p.gamma_2);
    }

    #[test]
    fn reference_hierarchy_is_clean() {
        assert!(ModelParams::reference().hierarchy_warnings().is_empty());
        let mut p = ModelParams::reference();
        p.gamma_2 = 500.0;
        assert_eq!(p.hierarchy_warnings().len(), 1);
        p.kappa_a = 200.0;
        assert_eq!(p.hierarchy_warnings().len(), 2);
    }
}
