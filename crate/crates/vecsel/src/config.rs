//! `key = value` parameter files.
//!
//! Keys are the [`ModelParams`] field names (`R_a` for the pump) plus
//! `pump_ratio`, which sets `R_a` relative to its threshold once every other
//! key has been read. Keys that are not given keep their reference values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelParams;

pub fn load(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path)?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ModelParams> {
    let mut params = ModelParams::reference();
    let mut seen: Vec<&str> = Vec::new();
    let mut pump_ratio: Option<f64> = None;
    let mut pump_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(err(line, format!("missing value for `{key}`")));
        }
        if seen.contains(&key) {
            return Err(err(line, format!("duplicate key `{key}`")));
        }

        let number = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| err(line, format!("`{key}` expects a number, got `{value}`")))
        };
        match key {
            "kappa_a" => params.kappa_a = number()?,
            "kappa_b" => params.kappa_b = number()?,
            "kappa_ap" => params.kappa_ap = number()?,
            "kappa_bp" => params.kappa_bp = number()?,
            "omega_ap" => params.omega_ap = number()?,
            "omega_bp" => params.omega_bp = number()?,
            "g_a" => params.g_a = number()?,
            "g_b" => params.g_b = number()?,
            "gamma_2" => params.gamma_2 = number()?,
            "gamma_1" => params.gamma_1 = number()?,
            "gamma_perp" => params.gamma_perp = number()?,
            "gamma_c" => params.gamma_c = number()?,
            "nu" => params.nu = number()?,
            "xi_a" => params.xi_a = number()?,
            "xi_b" => params.xi_b = number()?,
            "p" => params.p = number()?,
            "lower_population" => params.lower_population = number()?,
            "R_a" => {
                params.pump_a = number()?;
                pump_line = line;
            }
            "pump_ratio" => {
                pump_ratio = Some(number()?);
                pump_line = line;
            }
            "coupling" => params.coupling = value.parse().map_err(|e| err(line, e))?,
            "dichroism_sign" => params.dichroism_sign = value.parse().map_err(|e| err(line, e))?,
            _ => return Err(err(line, format!("unknown key `{key}`"))),
        }
        if (key == "R_a" && seen.contains(&"pump_ratio")) || (key == "pump_ratio" && seen.contains(&"R_a")) {
            return Err(err(line, "give either `R_a` or `pump_ratio`, not both".into()));
        }
        seen.push(key);
    }

    if let Some(ratio) = pump_ratio {
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(err(pump_line, format!("`pump_ratio` must be positive, got {ratio}")));
        }
        params = params.with_pump_ratio(ratio);
    } else if !seen.contains(&"R_a") {
        // Keep the reference pump ratio when other keys moved the threshold.
        params = params.with_pump_ratio(ModelParams::reference().pump_ratio());
    }
    Ok(params)
}

fn err(line: usize, message: String) -> Error {
    Error::Config { line, message }
}

/// Serializes parameters in the same format `parse` reads.
pub fn render(params: &ModelParams) -> String {
    let mut out = String::new();
    for (k, v) in numeric_entries(params) {
        out.push_str(&format!("{k} = {v:e}\n"));
    }
    out.push_str(&format!("coupling = {}\n", coupling_name(params)));
    out.push_str(&format!("dichroism_sign = {}\n", sign_name(params)));
    out
}

pub(crate) fn numeric_entries(p: &ModelParams) -> Vec<(&'static str, f64)> {
    vec![
        ("kappa_a", p.kappa_a),
        ("kappa_b", p.kappa_b),
        ("kappa_ap", p.kappa_ap),
        ("kappa_bp", p.kappa_bp),
        ("omega_ap", p.omega_ap),
        ("omega_bp", p.omega_bp),
        ("g_a", p.g_a),
        ("g_b", p.g_b),
        ("gamma_2", p.gamma_2),
        ("gamma_1", p.gamma_1),
        ("gamma_perp", p.gamma_perp),
        ("gamma_c", p.gamma_c),
        ("nu", p.nu),
        ("xi_a", p.xi_a),
        ("xi_b", p.xi_b),
        ("R_a", p.pump_a),
        ("p", p.p),
        ("lower_population", p.lower_population),
    ]
}

pub(crate) fn coupling_name(p: &ModelParams) -> &'static str {
    match p.coupling {
        crate::model::CouplingModel::Separated => "separated",
        crate::model::CouplingModel::Coherent => "coherent",
    }
}

pub(crate) fn sign_name(p: &ModelParams) -> &'static str {
    match p.dichroism_sign {
        crate::model::DichroismSign::Plus => "plus",
        crate::model::DichroismSign::Minus => "minus",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CouplingModel, DichroismSign};

    #[test]
    fn parses_comments_and_ratio() {
        let text = "# reference\nxi_a = 0.5  # overlap\nxi_b = 0.5\n\npump_ratio = 1.1\ncoupling = coherent\ndichroism_sign = minus\n";
        let p = parse(text).unwrap();
        assert_eq!(p.xi_a, 0.5);
        assert!((p.pump_ratio() - 1.1).abs() < 1e-14);
        assert_eq!(p.coupling, CouplingModel::Coherent);
        assert_eq!(p.dichroism_sign, DichroismSign::Minus);
    }

    #[test]
    fn unknown_key_reports_line() {
        match parse("g_a = 0.1\nfoo = 3\n") {
            Err(Error::Config { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("foo"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse("g_a 0.1"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse("g_a = x"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse("g_a = 1\ng_a = 2"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse("R_a = 1e6\npump_ratio = 2"), Err(Error::Config { line: 2, .. })));
    }

    #[test]
    fn render_round_trips() {
        let mut p = ModelParams::reference().with_xi(0.37).with_p(1.0);
        p.omega_ap = 0.25;
        p.coupling = CouplingModel::Coherent;
        assert_eq!(parse(&render(&p)).unwrap(), p);
    }
}
