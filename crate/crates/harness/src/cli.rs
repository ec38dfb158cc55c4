//! The `mks` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mks_core::potentials::log_grid;
use mks_core::response::ResponseContext;
use serde_json::json;

use crate::checks::{constraints, response_check, A4Summary};
use crate::config::{parse_cutoffs, RunConfig};
use crate::error::{HarnessError, Result, EXIT_CONFIG, EXIT_OK, EXIT_PHYSICS};
use crate::io::{write_json, write_quasi_csv, write_scf_log, write_sweep_csv, Checkpoint, SweepSummary};
use crate::quasi::quasi_optimality;
use crate::sweep::{run_sweep, solve_at};

/// Tolerances the `response` subcommand enforces.
pub const CHI_FD_TOL: f64 = 1e-5;
pub const ROUNDTRIP_TOL: f64 = 1e-8;
pub const PAIRING_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "mks", version, about = "Finite-temperature Kohn-Sham in a plane-wave basis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated cutoffs overriding `basis.cutoffs`.
    #[arg(long)]
    cutoffs: Option<String>,
    /// Reference cutoff overriding `basis.reference`.
    #[arg(long)]
    reference: Option<f64>,
    /// Print machine-readable JSON instead of text.
    #[arg(long)]
    json: bool,
    /// Output directory overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Self-consistent solve at `basis.cutoff`; writes a checkpoint and the iteration log.
    Scf(Common),
    /// Cutoff sweep against a fine reference; writes `sweep.csv` and `summary.json`.
    Sweep(Common),
    /// Finite-difference and round-trip checks of the response operators.
    Response(Common),
    /// Spectrum of `I - χ` on the tangent space.
    Audit(Common),
    /// Growth bounds of the exchange-correlation functional.
    AuditXc(Common),
    /// Discretisation error against best approximation over the sweep.
    QuasiOpt(Common),
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut c = RunConfig::from_path(&self.config)?;
        if let Some(list) = &self.cutoffs {
            c = c.with_cutoffs(parse_cutoffs(list)?)?;
        }
        if let Some(r) = self.reference {
            c = c.with_reference(r)?;
        }
        if let Some(out) = &self.out {
            c.out_dir = out.clone();
        }
        Ok(c)
    }
}

fn emit(out: &mut dyn Write, text: std::fmt::Arguments) {
    // a closed stdout is not worth failing a finished computation over
    let _ = out.write_fmt(text);
}

fn emit_json(out: &mut dyn Write, value: &serde_json::Value) {
    emit(out, format_args!("{}\n", serde_json::to_string_pretty(value).expect("json")));
}

/// Runs the tool on `args` (including the program name) and returns the
/// exit code; diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            emit(if e.use_stderr() { err } else { out }, format_args!("{e}"));
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            emit(err, format_args!("error: {e}\n"));
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Scf(c) => scf(&c, out),
        Command::Sweep(c) => sweep(&c, out),
        Command::Response(c) => response(&c, out),
        Command::Audit(c) => audit(&c, out),
        Command::AuditXc(c) => audit_xc(&c, out),
        Command::QuasiOpt(c) => quasi(&c, out),
    }
}

fn scf(c: &Common, out: &mut dyn Write) -> Result<i32> {
    let config = c.load()?;
    let problem = config.problem()?;
    let state = mks_core::scf::run_scf(&problem).map_err(|source| HarnessError::AtCutoff {
        cutoff: config.cutoff,
        source,
    })?;
    let checkpoint = config.out_dir.join("checkpoint.json");
    let log = config.out_dir.join("scf_log.csv");
    Checkpoint::new(&state, &config.lattice, config.n_electrons, config.beta).write(&checkpoint)?;
    write_scf_log(&log, &state.log)?;
    let k = constraints(&problem, &state);
    if c.json {
        emit_json(
            out,
            &json!({
                "converged": state.converged,
                "iterations": state.iterations,
                "free_energy": state.free_energy.total,
                "mu": state.mu,
                "residual_density": state.residual_density,
                "residual_fixedpoint": state.residual_fixedpoint,
                "relative_trace_error": k.relative_trace_error,
                "orthonormality": k.orthonormality,
                "basis_size": problem.basis.len(),
                "orbitals": state.gamma.len(),
                "checkpoint": checkpoint,
                "log": log,
            }),
        );
    } else {
        emit(
            out,
            format_args!(
                "{}: {} plane waves, {} orbitals\n\
                 converged {} after {} iterations\n\
                 F = {:.12}  mu = {:.10}\n\
                 |drho| = {:.3e}  fixed-point residual = {:.3e}\n\
                 |sum f - N|/N = {:.3e}  orthonormality = {:.3e}\n\
                 wrote {} and {}\n",
                config.name,
                problem.basis.len(),
                state.gamma.len(),
                state.converged,
                state.iterations,
                state.free_energy.total,
                state.mu,
                state.residual_density,
                state.residual_fixedpoint,
                k.relative_trace_error,
                k.orthonormality,
                checkpoint.display(),
                log.display()
            ),
        );
    }
    Ok(if state.converged { EXIT_OK } else { EXIT_PHYSICS })
}

fn sweep(c: &Common, out: &mut dyn Write) -> Result<i32> {
    let config = c.load()?;
    let result = run_sweep(&config)?;
    let rows = result.rows();
    let csv = config.out_dir.join("sweep.csv");
    let summary_path = config.out_dir.join("summary.json");
    write_sweep_csv(&csv, &rows)?;
    let summary = SweepSummary::new(&result);
    write_json(&summary_path, &summary)?;
    let mono = result.monotonicity();
    if c.json {
        emit_json(
            out,
            &json!({
                "summary": summary,
                "rows": rows,
                "monotone": mono.is_clean(),
                "csv": csv,
                "json": summary_path,
            }),
        );
    } else {
        emit(
            out,
            format_args!(
                "{}: beta = {}, reference cutoff {} ({} plane waves), F_ref = {:.12}\n",
                config.name, result.beta, result.reference_cutoff, result.reference_size, result.reference_free_energy
            ),
        );
        emit(
            out,
            format_args!(
                "{:>8} {:>18} {:>10} {:>10} {:>10} {:>10} {:>8} {:>5}\n",
                "ec", "f_total", "f_err", "rho_err", "gamma_err", "proj_err", "ratio", "iters"
            ),
        );
        for r in &rows {
            emit(
                out,
                format_args!(
                    "{:>8} {:>18.12} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>8.3} {:>5}\n",
                    r.ec, r.f_total, r.f_err, r.rho_l2_err, r.gamma_s11_err, r.proj_err, r.ratio, r.scf_iters
                ),
            );
        }
        for (label, fit) in [("energy", &result.energy_fit), ("density", &result.density_fit)] {
            match fit {
                Some(f) => emit(
                    out,
                    format_args!(
                        "{label} error: {:?} model, slope {:.4}, R^2 {:.4}\n",
                        f.model, f.slope, f.r2
                    ),
                ),
                None => emit(out, format_args!("{label} error: at the tolerance floor, no fit\n")),
            }
        }
        emit(
            out,
            format_args!(
                "max ratio {:.3}; A4 lambda_min {:.4e}, kappa {:.4}; monotone: {}\nwrote {} and {}\n",
                result.max_ratio,
                result.a4.lambda_min,
                result.a4.kappa,
                mono.is_clean(),
                csv.display(),
                summary_path.display()
            ),
        );
    }
    Ok(EXIT_OK)
}

fn converged_context(config: &RunConfig) -> Result<ResponseContext> {
    let basis = config.basis(config.cutoff, None)?;
    let solved = solve_at(config, basis, config.beta, config.scf)?;
    Ok(ResponseContext::new(
        &solved.problem,
        &solved.state,
        config.g_sign,
        config.response_tol,
    )?)
}

fn response(c: &Common, out: &mut dyn Write) -> Result<i32> {
    let config = c.load()?;
    let ctx = converged_context(&config)?;
    let report = response_check(&ctx, config.seed, config.response_samples.max(1))?;
    let xc_off = ctx.problem().interactions.xc.is_none();
    let pairing_ok = !xc_off || report.max_pairing <= PAIRING_TOL;
    let ok = report.chi_fd_error < CHI_FD_TOL && report.roundtrip_residual < ROUNDTRIP_TOL && pairing_ok;
    write_json(&config.out_dir.join("response.json"), &report)?;
    if c.json {
        let mut v = serde_json::to_value(&report)?;
        v["passed"] = json!(ok);
        emit_json(out, &v);
    } else {
        emit(
            out,
            format_args!(
                "{}: {} tangent samples on a {}-dimensional tangent space\n\
                 chi vs finite differences: {:.3e} (tol {CHI_FD_TOL:.0e})\n\
                 Jacobian round trip: {:.3e} (tol {ROUNDTRIP_TOL:.0e})\n\
                 max <chi psi, psi>: {:.3e}{}\n\
                 A4: lambda_min {:.6e}, kappa {:.6}\n{}\n",
                config.name,
                report.samples,
                report.a4.tangent_dim,
                report.chi_fd_error,
                report.roundtrip_residual,
                report.max_pairing,
                if xc_off { " (must be <= 1e-10 without xc)" } else { "" },
                report.a4.lambda_min,
                report.a4.kappa,
                if ok { "passed" } else { "FAILED" }
            ),
        );
    }
    Ok(if ok { EXIT_OK } else { EXIT_PHYSICS })
}

fn audit(c: &Common, out: &mut dyn Write) -> Result<i32> {
    let config = c.load()?;
    let ctx = converged_context(&config)?;
    let report = ctx.audit_a4();
    let a4 = A4Summary::from(report);
    if c.json {
        emit_json(out, &serde_json::to_value(a4)?);
    } else {
        emit(
            out,
            format_args!(
                "lambda_min {:.6e}\nkappa {:.6}\ndenominator_s {:.6e}\ng_sign {}\ntangent_dim {}\n",
                a4.lambda_min, a4.kappa, a4.denominator_s, a4.g_sign, a4.tangent_dim
            ),
        );
    }
    Ok(if report.positive && report.kappa.is_finite() {
        EXIT_OK
    } else {
        EXIT_PHYSICS
    })
}

fn audit_xc(c: &Common, out: &mut dyn Write) -> Result<i32> {
    let config = c.load()?;
    let Some(xc) = config.interactions().xc else {
        if c.json {
            emit_json(out, &json!({ "xc": "none", "passed": true }));
        } else {
            emit(out, format_args!("no exchange-correlation functional configured\n"));
        }
        return Ok(EXIT_OK);
    };
    let audit = xc.audit(&log_grid(1e-4, 1e4, 401));
    if c.json {
        emit_json(
            out,
            &json!({
                "xc": format!("{:?}", xc.model),
                "samples": audit.samples,
                "growth_ratio": audit.growth_ratio,
                "first_derivative_ratio": audit.first_derivative_ratio,
                "second_derivative_ratio": audit.second_derivative_ratio,
                "derivative_fd_error": audit.derivative_fd_error,
                "density_floor": audit.density_floor,
                "violations": audit.violations,
                "passed": audit.passed(),
            }),
        );
    } else {
        emit(
            out,
            format_args!(
                "{:?} on {} samples in [1e-4, 1e4] (densities clamped at {:.0e})\n\
                 growth ratio {:.4}\nfirst-derivative ratio {:.4}\nsecond-derivative ratio {:.4}\n\
                 derivative vs finite differences {:.2e}\n{}\n",
                xc.model,
                audit.samples,
                audit.density_floor,
                audit.growth_ratio,
                audit.first_derivative_ratio,
                audit.second_derivative_ratio,
                audit.derivative_fd_error,
                if audit.passed() {
                    "passed".to_string()
                } else {
                    format!("FAILED at {} densities", audit.violations.len())
                }
            ),
        );
    }
    Ok(if audit.passed() { EXIT_OK } else { EXIT_PHYSICS })
}

fn quasi(c: &Common, out: &mut dyn Write) -> Result<i32> {
    let config = c.load()?;
    let report = quasi_optimality(&config)?;
    let csv = config.out_dir.join("quasi_opt.csv");
    write_quasi_csv(&csv, &report)?;
    if c.json {
        let mut v = serde_json::to_value(&report)?;
        v["passed"] = json!(report.passed());
        emit_json(out, &v);
    } else {
        emit(
            out,
            format_args!(
                "{:>8} {:>6} {:>11} {:>11} {:>8} {:>11} {:>11} {:>8}\n",
                "ec", "size", "gamma_err", "best_err", "ratio", "orb_err", "orb_best", "orb_C"
            ),
        );
        for r in &report.rows {
            emit(
                out,
                format_args!(
                    "{:>8} {:>6} {:>11.4e} {:>11.4e} {:>8.3} {:>11.4e} {:>11.4e} {:>8.3}\n",
                    r.ec, r.basis_size, r.gamma_err, r.best_err, r.ratio, r.orbital_err, r.orbital_best, r.orbital_ratio
                ),
            );
        }
        emit(
            out,
            format_args!(
                "max ratio {:.3} (bound {}), trend slope {:.3e}, orbital constant {:.3}\n{}\n",
                report.max_ratio,
                report.bound,
                report.trend_slope,
                report.orbital_constant,
                if report.passed() { "passed" } else { "FAILED" }
            ),
        );
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_PHYSICS })
}
