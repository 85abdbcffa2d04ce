//! Command-line front end: limit-problem shooting, hypothesis validation,
//! single solves, eps sweeps, and re-verification of dumped solutions.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nls_core::config::{ExperimentConfig, SeedMode, SolveMode};
use nls_core::domain::validate_hypotheses;
use nls_core::limit::{energy_scaling_check, shoot_ground_state, LimitProblemParams};
use nls_core::sweep::{dump_solutions, emit_report, run_sweep, verify_directory};
use std::path::PathBuf;

const OUT_DIR_ENV: &str = "NLS_LAB_OUT";

#[derive(Parser)]
#[command(
    name = "nls-lab",
    about = "Penalized semiclassical nonlinear Schrödinger laboratory",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory; falls back to $NLS_LAB_OUT, then ./out.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutputArgs {
    fn resolve(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var(OUT_DIR_ENV).ok().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Shoot the limit-problem ground state and report its calibration.
    Limit {
        /// Space dimension N.
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Nonlinearity exponent p.
        #[arg(long, default_value_t = 3.0)]
        p: f64,
        /// Frequency nu of the limit equation.
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        /// Relative bisection tolerance on the central value.
        #[arg(long, default_value_t = 1e-13)]
        tol: f64,
        /// Optional CSV dump of the radial profile (r, U(r)).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the hypothesis report for a configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve a single penalized problem at one eps.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured eps (defaults to the first sweep entry).
        #[arg(long)]
        eps: Option<f64>,
        /// Override the solve mode (ground | pinned | symmetric).
        #[arg(long)]
        mode: Option<String>,
        /// Pin target coordinates, comma separated.
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        tol_grad: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Dump the solution field (csv | bin) beside the JSON result.
        #[arg(long)]
        dump: Option<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the configured eps sweep and emit the report.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for cold-seeded sweeps.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Seed mode override (cold | warm).
        #[arg(long)]
        seed_mode: Option<String>,
        /// Also dump per-eps solution fields.
        #[arg(long)]
        dump_fields: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Recompute diagnostics over dumped solutions and emit a report.
    Verify {
        /// Directory of solution dumps.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn parse_mode(s: &str) -> Result<SolveMode> {
    match s {
        "ground" => Ok(SolveMode::Ground),
        "pinned" => Ok(SolveMode::Pinned),
        "symmetric" => Ok(SolveMode::Symmetric),
        other => bail!("unknown mode `{other}`"),
    }
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|c| c.trim().parse::<f64>().context("bad coordinate"))
        .collect()
}

fn cmd_limit(dim: usize, p: f64, nu: f64, tol: f64, csv: Option<PathBuf>) -> Result<()> {
    let params = LimitProblemParams::new(dim, p, nu)?;
    let profile = shoot_ground_state(&params, tol)?;
    let scaling = energy_scaling_check(&params, &[nu], tol)?;
    let record = serde_json::json!({
        "params": profile.params,
        "u0": profile.center_value,
        "b_nu": profile.energy,
        "r_max": profile.r_max,
        "residuals": {
            "nehari": profile.nehari_residual,
            "scaling_law": scaling[0].relative_deviation,
        },
        "truncated_early": profile.truncated_early,
    });
    println!("{}", serde_json::to_string_pretty(&record)?);
    if let Some(path) = csv {
        let mut text = String::from("r,u\n");
        for (i, &u) in profile.values.iter().enumerate() {
            text.push_str(&format!("{},{}\n", profile.radius(i), u));
        }
        std::fs::write(&path, text)?;
        eprintln!("profile written to {}", path.display());
    }
    Ok(())
}

fn cmd_validate(config: PathBuf) -> Result<()> {
    let config = ExperimentConfig::from_path(&config)?;
    let mesh = config.build_mesh()?;
    let potential = config.build_potential()?;
    let region = config.region_spec();
    let report = validate_hypotheses(&potential, &region, config.problem.p, &mesh);
    println!("hypothesis report for `{}`", config.label());
    println!(
        "  V on region: [{:.6e}, {:.6e}]; on its boundary: [{:.6e}, {:.6e}]",
        report.inf_v_in_region,
        report.sup_v_in_region,
        report.inf_v_boundary,
        report.sup_v_boundary
    );
    println!("  far-field inf V|x|^2 on the box boundary: {:.6e}", report.slow_decay_constant);
    for check in &report.checks {
        let mark = if check.satisfied { "pass" } else { "FAIL" };
        println!("  [{mark}] {}: {}", check.name, check.detail);
    }
    if report.all_pass() {
        println!("all hypotheses satisfied");
        Ok(())
    } else {
        // report-only: flag through the exit code without aborting the print
        std::process::exit(2);
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    config_path: PathBuf,
    eps: Option<f64>,
    mode: Option<String>,
    target: Option<String>,
    tol_grad: Option<f64>,
    max_iter: Option<usize>,
    dump: Option<String>,
    output: OutputArgs,
) -> Result<()> {
    let mut config = ExperimentConfig::from_path(&config_path)?;
    if let Some(mode) = mode {
        config.sweep.mode = parse_mode(&mode)?;
    }
    if let Some(target) = target {
        config.sweep.pin_target = Some(parse_point(&target)?);
    }
    if let Some(t) = tol_grad {
        config.tolerances.tol_grad = t;
    }
    if let Some(m) = max_iter {
        config.tolerances.max_iter = m;
    }
    let eps = eps.unwrap_or(config.sweep.epsilons[0]);
    config.sweep.epsilons = vec![eps];
    config.validate().map_err(anyhow::Error::from)?;

    let outcome = run_sweep(&config, 1)?;
    let record = &outcome.report.records[0];
    if let Some(err) = &record.solve_error {
        bail!("solve failed: {err}");
    }
    println!("{}", serde_json::to_string_pretty(&serde_json::json!({
        "config": config.label(),
        "mode": config.sweep.mode,
        "record": record,
    }))?);
    if let Some(kind) = dump {
        let dir = output.resolve();
        let files = dump_solutions(&outcome, &dir, kind == "bin")?;
        for f in files {
            eprintln!("wrote {}", f.display());
        }
    }
    Ok(())
}

fn cmd_sweep(
    config_path: PathBuf,
    jobs: usize,
    seed_mode: Option<String>,
    dump_fields: bool,
    output: OutputArgs,
) -> Result<()> {
    let mut config = ExperimentConfig::from_path(&config_path)?;
    if let Some(mode) = seed_mode {
        config.sweep.seed_mode = match mode.as_str() {
            "cold" => SeedMode::Cold,
            "warm" => SeedMode::Warm,
            other => bail!("unknown seed mode `{other}`"),
        };
    }
    let dir = output
        .out
        .clone()
        .or_else(|| std::env::var(OUT_DIR_ENV).ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&config.output.directory));
    let outcome = run_sweep(&config, jobs.max(1))?;
    let files = emit_report(&outcome, &dir, &config.output.formats)?;
    for f in &files {
        eprintln!("wrote {}", f.display());
    }
    if dump_fields || config.output.field_dumps {
        let dumps = dump_solutions(&outcome, &dir, false)?;
        eprintln!("dumped {} solution files", dumps.len());
    }
    for check in &outcome.report.checks {
        let mark = if check.passed { "pass" } else { "FAIL" };
        eprintln!("[{mark}] {}: {}", check.name, check.detail);
    }
    if outcome.report.all_checks_pass() {
        Ok(())
    } else {
        std::process::exit(1);
    }
}

fn cmd_verify(input: PathBuf, output: OutputArgs) -> Result<()> {
    let outcome = verify_directory(&input)?;
    let dir = output.resolve();
    let files = emit_report(&outcome, &dir, &["csv".to_string(), "json".to_string()])?;
    for f in &files {
        eprintln!("wrote {}", f.display());
    }
    // decay profile data for plotting: radius vs log10 u around the peak
    if let Some(Some(result)) = outcome.solutions.last().map(|s| s.as_ref()) {
        let mesh = &result.field.mesh;
        let mut text = String::new();
        for (i, &v) in result.field.values.iter().enumerate() {
            if v > 0.0 {
                let pt = mesh.point(i);
                let d2: f64 = pt
                    .iter()
                    .zip(&result.peak)
                    .take(mesh.dim)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                text.push_str(&format!("{} {}\n", d2.sqrt(), v.log10()));
            }
        }
        let path = dir.join(format!("{}_decay_profile.dat", outcome.report.name));
        std::fs::write(&path, text)?;
        eprintln!("wrote {}", path.display());
    }
    for check in &outcome.report.checks {
        let mark = if check.passed { "pass" } else { "FAIL" };
        eprintln!("[{mark}] {}: {}", check.name, check.detail);
    }
    if outcome.report.all_checks_pass() {
        Ok(())
    } else {
        std::process::exit(1);
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Limit { dim, p, nu, tol, csv } => cmd_limit(dim, p, nu, tol, csv),
        Command::Validate { config } => cmd_validate(config),
        Command::Solve { config, eps, mode, target, tol_grad, max_iter, dump, output } => {
            cmd_solve(config, eps, mode, target, tol_grad, max_iter, dump, output)
        }
        Command::Sweep { config, jobs, seed_mode, dump_fields, output } => {
            cmd_sweep(config, jobs, seed_mode, dump_fields, output)
        }
        Command::Verify { input, output } => cmd_verify(input, output),
    }
}
