//! Batch front-end: profile construction, verification, Laplace
//! certificates, time-dependent runs and the built-in oracle battery.
//!
//! Exit codes: 0 on success (converged / all checks passed), 2 for
//! configuration problems, 3 for numerical failures.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use coag_core::dynamics::{self, MassDistribution, ScalingConfig};
use coag_core::profile::ProblemDescriptor;
use coag_core::{io, laplace, selftest, solver, verify, with_worker_count};
use coag_core::{Error, Profile, ProfileProblem};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "coag", about = "Fat-tailed self-similar coagulation profiles")]
struct Cli {
    /// Worker threads for the node-parallel sweeps (COAG_WORKERS
    /// overrides this flag).
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct a self-similar profile by fixed-point iteration.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the certificate suite against a stored profile.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        profile: PathBuf,
    },
    /// Laplace transform table and the integrated-identity residual.
    Laplace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        profile: PathBuf,
    },
    /// Evolve the time-dependent equation and test the scaling
    /// hypothesis.
    Evolve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the built-in closed-form oracle battery.
    Selftest,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parse(_) => 2,
        Error::Domain(_) | Error::Numerical(_) | Error::Io(_) => 3,
    }
}

fn workers_from_env(flag: usize) -> usize {
    std::env::var("COAG_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(flag)
        .max(1)
}

fn load_config(path: &Path) -> Result<(RunConfig, String), Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = RunConfig::parse(&text)?;
    Ok((cfg, text))
}

/// Loaded profile plus the problem rebuilt from the run configuration,
/// with the sidecar cross-checked against it.
fn load_profile_for(
    cfg: &RunConfig,
    profile_path: &Path,
) -> Result<(Profile, ProfileProblem), Error> {
    let (profile, sidecar) = io::load_profile(profile_path)?;
    let problem = cfg.problem()?;
    if (sidecar.rho - problem.rho).abs() > 1e-12 {
        return Err(Error::config(format!(
            "profile sidecar rho = {} disagrees with configured rho = {}",
            sidecar.rho, problem.rho
        )));
    }
    if (sidecar.lambda - problem.lambda()).abs() > 1e-12 {
        return Err(Error::config(format!(
            "profile sidecar lambda = {} disagrees with the configured kernel (lambda = {})",
            sidecar.lambda,
            problem.lambda()
        )));
    }
    Ok((profile, problem))
}

#[derive(Serialize)]
struct SolveRunReport<'a> {
    problem: ProblemDescriptor,
    report: &'a solver::SolveReport,
    profile_csv: String,
    config_echo: &'a str,
}

#[derive(Serialize)]
struct VerifyRunReport<'a> {
    problem: ProblemDescriptor,
    report: &'a verify::VerifyReport,
    config_echo: &'a str,
}

#[derive(Serialize)]
struct LaplaceRunReport<'a> {
    problem: ProblemDescriptor,
    max_residual: f64,
    tolerance: f64,
    pass: bool,
    config_echo: &'a str,
}

#[derive(Serialize)]
struct ScalingReport<'a> {
    theta: f64,
    lambda: f64,
    times: Vec<f64>,
    scales: Vec<f64>,
    distances: Vec<f64>,
    monotone_decreasing: bool,
    window: (f64, f64),
    config_echo: &'a str,
}

fn cmd_solve(cfg: &RunConfig, raw: &str, out_dir: &Path) -> Result<bool, Error> {
    let problem = cfg.problem()?;
    let (profile, report) = solver::solve(&problem)?;
    let (csv_path, _) = io::save_profile(out_dir, "profile", &profile, problem.rho, problem.lambda())?;
    io::write_json(
        &out_dir.join("solve_report.json"),
        &SolveRunReport {
            problem: problem.descriptor(),
            report: &report,
            profile_csv: csv_path.display().to_string(),
            config_echo: raw,
        },
    )?;
    eprintln!(
        "solve: {} iterations, residual {:.3e}, converged = {}",
        report.iterations,
        report.residual_history.last().copied().unwrap_or(f64::NAN),
        report.converged
    );
    Ok(report.converged)
}

fn cmd_verify(cfg: &RunConfig, raw: &str, out_dir: &Path, profile_path: &Path) -> Result<bool, Error> {
    let (profile, problem) = load_profile_for(cfg, profile_path)?;
    let vcfg = cfg.verify.build(&profile, problem.rho);
    let report = verify::assemble_report(&problem, &profile, &vcfg)?;
    io::write_json(
        &out_dir.join("verify_report.json"),
        &VerifyRunReport {
            problem: problem.descriptor(),
            report: &report,
            config_echo: raw,
        },
    )?;
    // plot-ready decomposition of the tail limit
    let rows = verify::asymptotics_decomposition(&problem, &profile, &vcfg.decay_probes)?;
    let mut csv = String::from("x,x^(1+rho)f,x^(rho-1)I\n");
    for r in &rows {
        csv.push_str(&format!(
            "{:.17e},{:.17e},{:.17e}\n",
            r.x,
            r.scaled_density * (1.0 - problem.rho),
            r.gain_term
        ));
    }
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("asymptotics.csv"), csv)?;
    eprintln!(
        "verify: tail exponent {:.4} (target {:.4}), overall pass = {}",
        report.tail_fit.exponent,
        -(1.0 + problem.rho),
        report.overall_pass
    );
    Ok(report.overall_pass)
}

fn cmd_laplace(cfg: &RunConfig, raw: &str, out_dir: &Path, profile_path: &Path) -> Result<bool, Error> {
    let (profile, problem) = load_profile_for(cfg, profile_path)?;
    let ladder = cfg.laplace.ladder(&profile);
    let probe = laplace::probe(&problem, &profile, &ladder)?;
    fs::create_dir_all(out_dir)?;
    let mut buf = Vec::new();
    io::write_laplace_csv(&mut buf, &probe)?;
    fs::write(out_dir.join("laplace.csv"), buf)?;
    let max_residual = probe.max_residual();
    let pass = max_residual <= cfg.laplace.tolerance;
    io::write_json(
        &out_dir.join("laplace_report.json"),
        &LaplaceRunReport {
            problem: problem.descriptor(),
            max_residual,
            tolerance: cfg.laplace.tolerance,
            pass,
            config_echo: raw,
        },
    )?;
    eprintln!("laplace: max identity residual {max_residual:.3e}, pass = {pass}");
    Ok(pass)
}

fn cmd_evolve(cfg: &RunConfig, raw: &str, out_dir: &Path) -> Result<bool, Error> {
    let section = cfg
        .dynamics
        .as_ref()
        .ok_or_else(|| Error::config("evolve requires a [dynamics] section"))?;
    let problem = cfg.problem()?;
    let grid = section
        .grid
        .clone()
        .unwrap_or_else(|| cfg.grid.clone())
        .build()?;
    let phi0 = MassDistribution::tabulate(grid, section.initial.density(), 0.0)?;
    let step = section.step.build(section.snapshot_times.clone());
    let result = dynamics::evolve(&problem.kernel, &phi0, section.t_end, &step)?;
    fs::create_dir_all(out_dir)?;
    for (i, snap) in result.snapshots.iter().enumerate() {
        let mut csv = String::from("x,phi\n");
        for (&x, &v) in snap.grid().nodes().iter().zip(snap.values()) {
            csv.push_str(&format!("{x:.17e},{v:.17e}\n"));
        }
        fs::write(out_dir.join(format!("snapshot_{i:03}.csv")), csv)?;
    }
    io::write_json(&out_dir.join("mass_ledger.json"), &result.ledger)?;

    let mut pass = true;
    if let Some(scaling) = &section.scaling {
        let (reference, sidecar) = io::load_profile(Path::new(&scaling.reference_profile))?;
        let theta = 1.0 + sidecar.rho;
        let scfg = ScalingConfig::new(theta, sidecar.lambda, section.snapshot_times.clone())?;
        let mut times = Vec::new();
        let mut scales = Vec::new();
        let mut distances = Vec::new();
        for snap in result.snapshots.iter().filter(|s| s.time() > 0.0) {
            let rescaled = dynamics::rescale_snapshot(snap, &scfg)?;
            let d = dynamics::weak_distance(&rescaled, &reference, scaling.window, scaling.probes)?;
            times.push(snap.time());
            scales.push(scfg.scale(snap.time()));
            distances.push(d);
        }
        let monotone = distances.windows(2).all(|w| w[1] <= w[0]);
        pass = monotone && distances.len() >= 3;
        io::write_json(
            &out_dir.join("scaling_report.json"),
            &ScalingReport {
                theta,
                lambda: sidecar.lambda,
                times,
                scales,
                distances,
                monotone_decreasing: monotone,
                window: scaling.window,
                config_echo: raw,
            },
        )?;
    }
    eprintln!(
        "evolve: {} steps, {} snapshots, scaling pass = {pass}",
        result.steps,
        result.snapshots.len()
    );
    Ok(pass)
}

fn cmd_selftest() -> bool {
    let results = selftest::run_selftest();
    let mut all = true;
    for r in &results {
        println!(
            "{} {} ({})",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
        all &= r.pass;
    }
    println!(
        "selftest: {}/{} checks passed",
        results.iter().filter(|r| r.pass).count(),
        results.len()
    );
    all
}

fn run() -> Result<bool, Error> {
    let cli = Cli::parse();
    let workers = workers_from_env(cli.workers);
    let out_dir = cli.out.clone();
    match &cli.command {
        Command::Solve { config } => {
            let (cfg, raw) = load_config(config)?;
            with_worker_count(workers, || cmd_solve(&cfg, &raw, &out_dir))
        }
        Command::Verify { config, profile } => {
            let (cfg, raw) = load_config(config)?;
            with_worker_count(workers, || cmd_verify(&cfg, &raw, &out_dir, profile))
        }
        Command::Laplace { config, profile } => {
            let (cfg, raw) = load_config(config)?;
            with_worker_count(workers, || cmd_laplace(&cfg, &raw, &out_dir, profile))
        }
        Command::Evolve { config } => {
            let (cfg, raw) = load_config(config)?;
            with_worker_count(workers, || cmd_evolve(&cfg, &raw, &out_dir))
        }
        Command::Selftest => Ok(cmd_selftest()),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
