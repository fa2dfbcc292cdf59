//! Command-line front end. Exit codes: 0 success, 2 configuration error,
//! 3 numerical failure, 4 validation failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config;
use crate::error::Error;
use crate::fluctuation::{linear_grid, log_grid, FluctuationSystem, SpectrumPoint};
use crate::model::{check_validity, derive_rates, DichroismSign, ModelParams};
use crate::steadystate::{closed_form_steady, refine_steady, threshold, Refinement, SteadyState};
use crate::toymodel::{extract_effective_coefficients, ToyConfig};
use crate::verification::{run_verification, VerificationOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "vecsel", version, about = "Steady states and photocurrent noise spectra of coupled VECSEL modes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Thresholds, intensities, populations and the validity report.
    Steady {
        #[command(flatten)]
        common: Common,
    },
    /// Noise and cross-correlation spectra on a frequency grid.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// One spectrum per value of a parameter, plus an index file.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        /// VAR=v1,v2,... with VAR one of pump_ratio, xi, p, g.
        #[arg(long = "sweep", value_name = "VAR=v1,v2,...")]
        sweep: String,
    },
    /// Runs the verification oracles.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Quadrature nodes of the covariance check.
        #[arg(long, default_value_t = 100_000)]
        lyapunov_points: usize,
        /// Upper frequency of the covariance quadrature and shot-noise check.
        #[arg(long, default_value_t = 1e6)]
        check_omega_max: f64,
        /// Perturbs one drift entry by this relative amount (oracle self-test).
        #[arg(long, value_name = "REL")]
        inject_fault: Option<f64>,
    },
    /// Effective dispersive and Kerr coefficients of the toy master equation.
    ToyVerify {
        /// Coupling constants to test.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.02])]
        g: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        gamma_perp: f64,
        #[arg(long, default_value_t = 0.1)]
        gamma_2: f64,
        #[arg(long, default_value_t = 6)]
        fock_cutoff: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Parameter file; reference values are used for missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Overrides `dichroism_sign` from the config file.
    #[arg(long, value_enum)]
    pub dichroism_sign: Option<SignArg>,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[arg(long, default_value_t = 1e-2)]
    pub omega_min: f64,
    #[arg(long, default_value_t = 1e4)]
    pub omega_max: f64,
    #[arg(long, default_value_t = 400)]
    pub omega_points: usize,
    /// Logarithmic spacing (default).
    #[arg(long, conflicts_with = "linear")]
    pub log: bool,
    #[arg(long)]
    pub linear: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignArg {
    Plus,
    Minus,
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter { .. } | Error::Config { .. } => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        };
        Failure { code, message: e.to_string() }
    }
}

fn config_failure(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_CONFIG, message: message.into() }
}

type CmdResult = std::result::Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Steady { common } => cmd_steady(&common),
        Command::Spectrum { common, grid } => cmd_spectrum(&common, &grid),
        Command::Sweep { common, grid, sweep } => cmd_sweep(&common, &grid, &sweep),
        Command::Validate { common, lyapunov_points, check_omega_max, inject_fault } => {
            cmd_validate(&common, lyapunov_points, check_omega_max, inject_fault)
        }
        Command::ToyVerify { g, gamma_perp, gamma_2, fock_cutoff, out } => {
            cmd_toy_verify(&g, gamma_perp, gamma_2, fock_cutoff, out.as_deref())
        }
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load_params(common: &Common) -> std::result::Result<(ModelParams, Vec<String>), Failure> {
    let mut params = match &common.config {
        Some(path) => config::load(path).map_err(|e| match e {
            Error::Io(io) => config_failure(format!("cannot read {}: {io}", path.display())),
            other => Failure::from(other),
        })?,
        None => ModelParams::reference(),
    };
    if let Some(sign) = common.dichroism_sign {
        params.dichroism_sign = match sign {
            SignArg::Plus => DichroismSign::Plus,
            SignArg::Minus => DichroismSign::Minus,
        };
    }
    let warnings = params.validate()?;
    Ok((params, warnings))
}

fn open_output(path: Option<&Path>) -> std::result::Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p)
                .map_err(|e| config_failure(format!("cannot create {}: {e}", p.display())))?;
            Ok(Box::new(std::io::BufWriter::new(file)))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure { code: EXIT_NUMERICAL, message: format!("write failed: {e}") }
}

fn refine(params: &ModelParams) -> std::result::Result<(SteadyState, Refinement), Failure> {
    let derived = derive_rates(params)?;
    let closed = closed_form_steady(params, &derived);
    let refined = refine_steady(&closed, params, &derived)?;
    Ok((closed, refined))
}

fn cmd_steady(common: &Common) -> CmdResult {
    let (params, warnings) = load_params(common)?;
    let derived = derive_rates(&params)?;
    let (ta, tb) = threshold(&params, &derived);
    let closed = closed_form_steady(&params, &derived);
    let validity = check_validity(&derived, &closed);

    let mut out = String::new();
    out.push_str(&format!("threshold_a          {ta:.10e}\nthreshold_b          {tb:.10e}\n"));
    out.push_str(&format!("pump_ratio           {:.10}\n", params.pump_ratio()));
    out.push_str(&format!(
        "closed_form          I_a = {:.10e}  I_b = {:.10e}  lasing_a = {}  lasing_b = {}\n",
        closed.intensity_a, closed.intensity_b, closed.lasing_a, closed.lasing_b
    ));
    out.push_str(&format!("closed_form_pops     {}\n", fmt_pops(&closed.populations)));
    out.push_str(&format!(
        "validity             ratio_a = {:.6e}  ratio_b = {:.6e}  limit = {}  {}\n",
        validity.ratio_a,
        validity.ratio_b,
        validity.threshold,
        if validity.valid { "valid" } else { "VIOLATED" }
    ));
    let mut code = EXIT_OK;
    match refine_steady(&closed, &params, &derived) {
        Ok(r) => {
            let s = &r.steady;
            out.push_str(&format!(
                "refined              I_a = {:.10e}  I_b = {:.10e}  lasing_a = {}  lasing_b = {}\n",
                s.intensity_a, s.intensity_b, s.lasing_a, s.lasing_b
            ));
            out.push_str(&format!("refined_pops         {}\n", fmt_pops(&s.populations)));
            out.push_str(&format!(
                "newton               iterations = {}  residual = {:.3e}  tolerance = {:.3e}\n",
                r.iterations, r.residual, r.tolerance
            ));
        }
        Err(e) => {
            out.push_str(&format!("refined              failed: {e}\n"));
            code = EXIT_NUMERICAL;
        }
    }
    for w in &warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    let mut w = open_output(common.out.as_deref())?;
    w.write_all(out.as_bytes()).map_err(io_failure)?;
    w.flush().map_err(io_failure)?;
    Ok(code)
}

fn fmt_pops(p: &[f64; 6]) -> String {
    format!(
        "M2 = {:.10e} {:.10e}  N2 = {:.10e} {:.10e}  L2 = {:.10e} {:.10e}",
        p[0], p[1], p[2], p[3], p[4], p[5]
    )
}

fn build_grid(grid: &GridArgs) -> std::result::Result<Vec<f64>, Failure> {
    if !(2..=1_000_000).contains(&grid.omega_points) {
        return Err(config_failure("--omega-points must lie in [2, 1000000]"));
    }
    if !(grid.omega_max > grid.omega_min && grid.omega_min.is_finite() && grid.omega_max.is_finite()) {
        return Err(config_failure("--omega-max must exceed --omega-min"));
    }
    if grid.linear {
        if grid.omega_min < 0.0 {
            return Err(config_failure("--omega-min must be non-negative"));
        }
        Ok(linear_grid(grid.omega_min, grid.omega_max, grid.omega_points))
    } else {
        if grid.omega_min <= 0.0 {
            return Err(config_failure("logarithmic grids need --omega-min > 0"));
        }
        Ok(log_grid(grid.omega_min, grid.omega_max, grid.omega_points))
    }
}

/// Spectrum of `params` on `grid`, or the unstable-state failure.
fn compute_spectrum(
    params: &ModelParams,
    grid: &[f64],
) -> std::result::Result<(FluctuationSystem, Vec<SpectrumPoint>), Failure> {
    let (_, refined) = refine(params)?;
    let sys = FluctuationSystem::build_unchecked(&refined.steady, params)?;
    if sys.stability_margin() >= 0.0 {
        let mut eig = sys.eigenvalues();
        eig.sort_by(|a, b| b.re.total_cmp(&a.re));
        let listing: Vec<String> = eig.iter().take(4).map(|z| format!("{:.6e}{:+.6e}i", z.re, z.im)).collect();
        return Err(Failure {
            code: EXIT_NUMERICAL,
            message: format!("unstable steady state; leading eigenvalues: {}", listing.join(", ")),
        });
    }
    let spec = sys.sweep(grid)?;
    Ok((sys, spec))
}

fn write_spectrum(
    w: &mut dyn Write,
    format: Format,
    sys: &FluctuationSystem,
    spec: &[SpectrumPoint],
) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            writeln!(w, "# vecsel spectrum")?;
            for (k, v) in config::numeric_entries(&sys.params) {
                writeln!(w, "# {k} = {v:e}")?;
            }
            writeln!(w, "# coupling = {}", config::coupling_name(&sys.params))?;
            writeln!(w, "# dichroism_sign = {}", config::sign_name(&sys.params))?;
            writeln!(w, "# pump_ratio = {:e}", sys.params.pump_ratio())?;
            let s = &sys.steady;
            writeln!(w, "# I_a = {:.16e}", s.intensity_a)?;
            writeln!(w, "# I_b = {:.16e}", s.intensity_b)?;
            writeln!(w, "# lasing_a = {}", s.lasing_a)?;
            writeln!(w, "# lasing_b = {}", s.lasing_b)?;
            writeln!(w, "# stability_margin = {:.16e}", sys.stability_margin())?;
            writeln!(w, "Omega,C_aa,C_bb,C_ab,d_aa,d_bb,d_ab")?;
            for p in spec {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    p.omega, p.c_aa, p.c_bb, p.c_ab, p.d_aa, p.d_bb, p.d_ab
                )?;
            }
        }
        Format::Jsonl => {
            for p in spec {
                serde_json::to_writer(&mut *w, p)?;
                writeln!(w)?;
            }
        }
    }
    w.flush()
}

fn cmd_spectrum(common: &Common, grid: &GridArgs) -> CmdResult {
    let (params, warnings) = load_params(common)?;
    let omega = build_grid(grid)?;
    for msg in &warnings {
        eprintln!("warning: {msg}");
    }
    let (sys, spec) = compute_spectrum(&params, &omega)?;
    if !(sys.steady.lasing_a || sys.steady.lasing_b) {
        eprintln!("notice: steady state is below threshold (non-lasing spectra)");
    }
    let mut w = open_output(common.out.as_deref())?;
    write_spectrum(&mut *w, common.format, &sys, &spec).map_err(io_failure)?;
    Ok(EXIT_OK)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVar {
    PumpRatio,
    Xi,
    P,
    G,
}

/// Parses `VAR=v1,v2,...`.
pub fn parse_sweep(spec: &str) -> std::result::Result<(SweepVar, Vec<f64>), String> {
    let (var, values) = spec.split_once('=').ok_or("expected VAR=v1,v2,...")?;
    let var = match var.trim() {
        "pump_ratio" => SweepVar::PumpRatio,
        "xi" => SweepVar::Xi,
        "p" => SweepVar::P,
        "g" => SweepVar::G,
        other => return Err(format!("unknown sweep variable `{other}` (pump_ratio, xi, p, g)")),
    };
    let values: Vec<f64> = values
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("bad sweep value `{s}`")))
        .collect::<std::result::Result<_, _>>()?;
    if values.is_empty() {
        return Err("sweep value list is empty".into());
    }
    Ok((var, values))
}

pub fn apply_sweep(params: &ModelParams, var: SweepVar, value: f64) -> ModelParams {
    let p = params.clone();
    match var {
        SweepVar::PumpRatio => p.with_pump_ratio(value),
        SweepVar::Xi => p.with_xi(value),
        SweepVar::P => p.with_p(value),
        SweepVar::G => p.with_g(value),
    }
}

fn cmd_sweep(common: &Common, grid: &GridArgs, sweep: &str) -> CmdResult {
    let (params, _) = load_params(common)?;
    let (var, values) = parse_sweep(sweep).map_err(config_failure)?;
    let omega = build_grid(grid)?;
    let dir = common.out.clone().ok_or_else(|| config_failure("sweep needs --out DIR"))?;
    std::fs::create_dir_all(&dir).map_err(|e| config_failure(format!("cannot create {}: {e}", dir.display())))?;
    let name = sweep.split('=').next().unwrap_or("var").trim().to_string();
    let ext = match common.format {
        Format::Csv => "csv",
        Format::Jsonl => "jsonl",
    };

    let mut index = String::from("file,variable,value,lasing_a,lasing_b,stability_margin,status\n");
    let mut code = EXIT_OK;
    for (k, &value) in values.iter().enumerate() {
        let p = apply_sweep(&params, var, value);
        p.validate()?;
        let file = format!("spectrum_{name}_{k:03}.{ext}");
        match compute_spectrum(&p, &omega) {
            Ok((sys, spec)) => {
                let mut w = open_output(Some(&dir.join(&file)))?;
                write_spectrum(&mut *w, common.format, &sys, &spec).map_err(io_failure)?;
                index.push_str(&format!(
                    "{file},{name},{value:e},{},{},{:.16e},ok\n",
                    sys.steady.lasing_a,
                    sys.steady.lasing_b,
                    sys.stability_margin()
                ));
            }
            Err(f) => {
                eprintln!("error: {name} = {value}: {}", f.message);
                index.push_str(&format!("{file},{name},{value:e},,,,failed\n"));
                code = code.max(f.code);
            }
        }
    }
    std::fs::write(dir.join("index.csv"), index).map_err(io_failure)?;
    Ok(code)
}

fn cmd_validate(common: &Common, points: usize, omega_max: f64, fault: Option<f64>) -> CmdResult {
    let (params, _) = load_params(common)?;
    let options = VerificationOptions { omega_max, lyapunov_points: points, drift_fault: fault };
    let report = run_verification(&params, &options)?;
    print!("{}", report.to_text());
    if let Some(path) = &common.out {
        let json = serde_json::to_string_pretty(&report).map_err(|e| io_failure(e.into()))?;
        std::fs::write(path, json + "\n").map_err(io_failure)?;
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_VALIDATION })
}

pub const TOY_DISPERSIVE_TOLERANCE: f64 = 0.05;
pub const TOY_KERR_TOLERANCE: f64 = 0.20;

fn cmd_toy_verify(gs: &[f64], gamma_perp: f64, gamma_2: f64, fock_cutoff: usize, out: Option<&Path>) -> CmdResult {
    let mut results = Vec::new();
    let mut ok = true;
    println!("g          dispersive (fit / target / rel.err)          kerr (fit / target / rel.err)");
    for &g in gs {
        let cfg = ToyConfig { g, gamma_perp, gamma_2, fock_cutoff, ..ToyConfig::default() };
        let fit = extract_effective_coefficients(&cfg)?;
        println!(
            "{g:<10} {:+.6e} / {:.6e} / {:.3e}    {:+.6e} / {:.6e} / {:.3e}{}",
            fit.dispersive_shift,
            fit.target_dispersive,
            fit.dispersive_error(),
            fit.kerr_coefficient,
            fit.target_kerr,
            fit.kerr_error(),
            if fit.inconclusive { "  (inconclusive fit)" } else { "" }
        );
        for run in &fit.runs {
            println!(
                "    alpha = {:.2}  n = {:.6}  phase rate = {:+.6e}  amplitude rate = {:+.6e}",
                run.alpha, run.photon_number, run.phase_rate, run.amplitude_rate
            );
        }
        for w in &fit.warnings {
            println!("    warning: {w}");
        }
        ok &= !fit.inconclusive
            && fit.dispersive_error() <= TOY_DISPERSIVE_TOLERANCE
            && fit.kerr_error() <= TOY_KERR_TOLERANCE;
        results.push(fit);
    }
    println!("result: {}", if ok { "PASS" } else { "FAIL" });
    if let Some(path) = out {
        let json = serde_json::to_string_pretty(&results).map_err(|e| io_failure(e.into()))?;
        std::fs::write(path, json + "\n").map_err(io_failure)?;
    }
    Ok(if ok { EXIT_OK } else { EXIT_VALIDATION })
}

