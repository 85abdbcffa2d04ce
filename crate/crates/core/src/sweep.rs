//! Experiment orchestration: eps sweeps over solve modes, per-entry
//! diagnostics, deterministic report emission, and result persistence.

use crate::config::{ExperimentConfig, SeedMode, SolveMode};
use crate::diagnostics::{
    barycenter, barycenter_cutoff, decay_envelope_check, log_log_slope,
    original_problem_certificate, rescaled_profile_error, tail_energy_fraction, EnvelopeMode,
};
use crate::domain::{DecayClass, Field, Mesh, Point};
use crate::energy::{nehari_lower_bounds, PenalizedProblem};
use crate::limit::{shoot_ground_state, EnergyConstants, GroundStateProfile, LimitProblemParams};
use crate::solver::{
    inset_samples, minimize_nehari, region_boundary_distances, seed_field, solve_pinned,
    test_path_levels, DescentOptions, PinnedSolveSpec, SeedSpec, SolveResult,
    DEFAULT_PIN_SCHEDULE,
};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("limit problem failed: {0}")]
    Limit(#[from] crate::limit::LimitError),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

/// Per-eps record of the sweep report. Optional entries stay empty when the
/// solve failed or a diagnostic was not requested.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub eps: f64,
    pub energy: Option<f64>,
    pub rescaled_energy: Option<f64>,
    pub predicted_energy: f64,
    pub peak: Option<Vec<f64>>,
    pub peak_value: Option<f64>,
    pub barycenter: Option<Vec<f64>>,
    pub peak_boundary_dist: Option<f64>,
    pub certificate_holds: Option<bool>,
    pub certificate_margin: Option<f64>,
    pub envelope_dominated: Option<bool>,
    pub envelope_worst_ratio: Option<f64>,
    pub envelope_lambda: Option<f64>,
    pub envelope_nu: Option<f64>,
    pub nehari_residual: Option<f64>,
    pub gradient_norm: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub tail_fraction: Option<f64>,
    pub rescaled_profile_l2: Option<f64>,
    pub path_boundary_level: Option<f64>,
    pub path_interior_level: Option<f64>,
    pub peak_quotient: Option<f64>,
    pub region_energy_rescaled: Option<f64>,
    pub boundary_layer_max: Option<f64>,
    pub solve_error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub name: String,
    pub dimension: usize,
    pub p: f64,
    pub mode: SolveMode,
    pub base_energy: f64,
    pub sobolev_constant: f64,
    pub target_point: Vec<f64>,
    pub target_potential: f64,
    pub predicted_concentration_energy: f64,
    pub tail_slope: Option<f64>,
    /// Records ordered by decreasing eps.
    pub records: Vec<SweepRecord>,
    pub checks: Vec<SweepCheck>,
}

impl SweepReport {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failing_eps(&self, field: impl Fn(&SweepRecord) -> Option<bool>) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| field(r) == Some(false))
            .map(|r| r.eps)
            .collect()
    }
}

/// The sweep outcome: the report plus the converged fields for persistence.
pub struct SweepOutcome {
    pub report: SweepReport,
    pub solutions: Vec<Option<SolveResult>>,
    pub config: ExperimentConfig,
}

fn pad_point(v: &[f64]) -> Point {
    let mut p = [0.0; 3];
    for (d, &c) in v.iter().enumerate().take(3) {
        p[d] = c;
    }
    p
}

/// Deterministic default seed center for ground sweeps: near the sampled
/// region boundary, where the concentration energy is smallest. A centered
/// seed would be trapped on the symmetric saddle by exact grid symmetry.
fn default_ground_center(problem: &PenalizedProblem) -> Point {
    let mesh = &problem.mesh;
    let anchor = problem.region.anchor_point();
    let mut best = anchor;
    let mut best_d = -1.0;
    for idx in 0..mesh.node_count() {
        if !problem.in_region[idx] {
            continue;
        }
        let pt = mesh.point(idx);
        let mut d2 = 0.0;
        for k in 0..mesh.dim {
            d2 += (pt[k] - anchor[k]) * (pt[k] - anchor[k]);
        }
        if d2 > best_d {
            best_d = d2;
            best = pt;
        }
    }
    let mut out = [0.0; 3];
    for k in 0..mesh.dim {
        out[k] = anchor[k] + 0.93 * (best[k] - anchor[k]);
    }
    out
}

fn mirror_symmetrize(field: &mut Field) {
    let mesh = Arc::clone(&field.mesh);
    let m = mesh.points_per_axis;
    let n = mesh.node_count();
    let old = field.values.clone();
    for idx in 0..n {
        let ids = mesh.decompose(idx);
        let mut mirrored = 0usize;
        for d in (0..mesh.dim).rev() {
            mirrored = mirrored * m + (m - 1 - ids[d]);
        }
        field.values[idx] = 0.5 * (old[idx] + old[mirrored]);
    }
}

/// Rescale the previous solution about its peak by the ratio of consecutive
/// eps values; the caller re-projects onto the manifold. The seed cutoff is
/// applied so the inherited far tail (whose decay rate belongs to the
/// previous eps) restarts from below, exactly like a cold seed's.
fn warm_start(
    problem: &PenalizedProblem,
    prev: &SolveResult,
    eps_prev: f64,
    cutoff: &SeedSpec,
) -> Field {
    let ratio = eps_prev / problem.eps;
    let peak = prev.peak;
    Field::from_fn(Arc::clone(&problem.mesh), |pt| {
        let eta = cutoff.eta(pt);
        if eta == 0.0 {
            return 0.0;
        }
        let mut src = [0.0; 3];
        for k in 0..3 {
            src[k] = peak[k] + (pt[k] - peak[k]) * ratio;
        }
        eta * problem.mesh.interpolate(&prev.field.values, &src)
    })
}

struct EntryContext<'a> {
    config: &'a ExperimentConfig,
    profile: &'a GroundStateProfile,
    constants: &'a EnergyConstants,
    target: Point,
    seed_template: SeedSpec,
}

fn solve_entry(
    ctx: &EntryContext,
    problem: &PenalizedProblem,
    warm: Option<&Field>,
) -> Result<SolveResult, crate::solver::SolveError> {
    let opts = DescentOptions {
        tol_grad: ctx.config.tolerances.tol_grad,
        max_iter: ctx.config.tolerances.max_iter,
        ..DescentOptions::default()
    };
    let cold_seed = |center: Point| -> Result<Field, crate::solver::SolveError> {
        let seed = SeedSpec {
            center: center[..problem.mesh.dim].to_vec(),
            ..ctx.seed_template.clone()
        };
        Ok(seed_field(problem, &seed, ctx.profile)?.field)
    };
    match ctx.config.sweep.mode {
        SolveMode::Ground => {
            let start = match warm {
                Some(f) => f.clone(),
                None => {
                    let center = ctx
                        .config
                        .sweep
                        .seed_center
                        .as_deref()
                        .map(pad_point)
                        .unwrap_or_else(|| default_ground_center(problem));
                    cold_seed(center)?
                }
            };
            minimize_nehari(problem, &start, &opts)
        }
        SolveMode::Symmetric => {
            let mut start = match warm {
                Some(f) => f.clone(),
                None => cold_seed(
                    ctx.config
                        .sweep
                        .seed_center
                        .as_deref()
                        .map(pad_point)
                        .unwrap_or(ctx.target),
                )?,
            };
            mirror_symmetrize(&mut start);
            minimize_nehari(problem, &start, &opts)
        }
        SolveMode::Pinned => {
            let start = match warm {
                Some(f) => f.clone(),
                None => cold_seed(
                    ctx.config.sweep.seed_center.as_deref().map(pad_point).unwrap_or(ctx.target),
                )?,
            };
            solve_pinned(
                problem,
                ctx.constants,
                &start,
                &PinnedSolveSpec {
                    target: ctx.target,
                    schedule: &DEFAULT_PIN_SCHEDULE,
                    drift_radius: problem.region.rho,
                },
                &opts,
            )
        }
    }
}

fn record_entry(
    ctx: &EntryContext,
    problem: &PenalizedProblem,
    outcome: Result<SolveResult, crate::solver::SolveError>,
) -> (SweepRecord, Option<SolveResult>) {
    let eps = problem.eps;
    let dim = problem.mesh.dim;
    let predicted = ctx
        .constants
        .concentration_energy(ctx.constants_target_value(problem))
        .unwrap_or(f64::NAN);
    let mut record = SweepRecord {
        eps,
        energy: None,
        rescaled_energy: None,
        predicted_energy: predicted,
        peak: None,
        peak_value: None,
        barycenter: None,
        peak_boundary_dist: None,
        certificate_holds: None,
        certificate_margin: None,
        envelope_dominated: None,
        envelope_worst_ratio: None,
        envelope_lambda: None,
        envelope_nu: None,
        nehari_residual: None,
        gradient_norm: None,
        iterations: None,
        converged: None,
        tail_fraction: None,
        rescaled_profile_l2: None,
        path_boundary_level: None,
        path_interior_level: None,
        peak_quotient: None,
        region_energy_rescaled: None,
        boundary_layer_max: None,
        solve_error: None,
    };
    let result = match outcome {
        Ok(result) => result,
        Err(err) => {
            record.solve_error = Some(err.to_string());
            return (record, None);
        }
    };
    let u = &result.field;
    record.energy = Some(result.diagnostics.value);
    record.rescaled_energy = Some(result.diagnostics.value / eps.powi(dim as i32));
    record.peak = Some(result.peak[..dim].to_vec());
    record.peak_value = Some(result.peak_value);
    record.nehari_residual = Some(result.diagnostics.nehari_residual);
    record.gradient_norm = Some(result.diagnostics.gradient_norm);
    record.iterations = Some(result.iterations);
    record.converged = Some(result.converged);

    let cutoff = barycenter_cutoff(problem);
    if let Ok(b) = barycenter(u, &cutoff) {
        record.barycenter = Some(b[..dim].to_vec());
    }
    let (boundary_pts, distances) = region_boundary_distances(problem);
    let mut bd = f64::INFINITY;
    for b in &boundary_pts {
        let mut d2 = 0.0;
        for k in 0..dim {
            d2 += (result.peak[k] - b[k]) * (result.peak[k] - b[k]);
        }
        bd = bd.min(d2.sqrt());
    }
    record.peak_boundary_dist = Some(bd);

    let cert = original_problem_certificate(problem, u);
    record.certificate_holds = Some(cert.holds);
    record.certificate_margin = Some(cert.margin);

    let mode = match problem.potential.decay_class {
        DecayClass::Fast => Some(EnvelopeMode::Fast),
        DecayClass::QuadraticSlow => Some(EnvelopeMode::Slow),
        DecayClass::Nondecaying => None,
    };
    if let Some(mode) = mode {
        let noise_floor = ctx.config.tolerances.tol_grad * result.peak_value.abs();
        if let Ok(check) = decay_envelope_check(problem, u, mode, &result.peak, noise_floor) {
            record.envelope_dominated = Some(check.dominated);
            record.envelope_worst_ratio = Some(check.worst_ratio);
            record.envelope_lambda = Some(check.spec.lambda);
            record.envelope_nu = Some(check.spec.nu);
        }
    }

    // the neighborhood of Λ for the tail law: a fixed dilation wide enough
    // that the boundary-concentrated states sit well inside it
    let circ = problem.region.circumradius(&problem.potential, &problem.mesh);
    record.tail_fraction =
        Some(tail_energy_fraction(problem, u, &distances, 0.3 * circ));
    let nu_target = ctx.constants_target_value(problem);
    record.rescaled_profile_l2 = Some(rescaled_profile_error(
        problem,
        u,
        &result.peak,
        ctx.profile,
        nu_target,
        5.0,
    ));
    let bounds = nehari_lower_bounds(problem, u, ctx.config.tolerances.nehari_tol.max(1e-6));
    record.peak_quotient = Some(bounds.peak_quotient);
    record.region_energy_rescaled = Some(bounds.rescaled_region_energy);
    // post-hoc box check: the largest solution value one layer inside the
    // Dirichlet boundary, relative to the peak
    let mesh = &problem.mesh;
    let m = mesh.points_per_axis;
    let mut layer_max = 0.0f64;
    for (i, &v) in u.values.iter().enumerate() {
        let ids = mesh.decompose(i);
        let near = (0..mesh.dim).any(|d| ids[d] == 1 || ids[d] + 2 == m);
        if near {
            layer_max = layer_max.max(v.abs());
        }
    }
    record.boundary_layer_max = Some(layer_max / result.peak_value.abs().max(f64::MIN_POSITIVE));

    if ctx.config.sweep.path_levels {
        let (boundary, interior) = inset_samples(problem, &distances, 80);
        if !boundary.is_empty() {
            if let Ok(levels) =
                test_path_levels(problem, ctx.profile, &ctx.seed_template, &boundary, &interior)
            {
                record.path_boundary_level = Some(levels.boundary_level);
                record.path_interior_level = Some(levels.interior_level);
            }
        }
    }
    (record, Some(result))
}

impl EntryContext<'_> {
    /// Potential value anchoring the concentration-energy prediction: the
    /// pin target for pinned/symmetric sweeps, the sampled minimum over Λ
    /// for ground sweeps.
    fn constants_target_value(&self, problem: &PenalizedProblem) -> f64 {
        match self.config.sweep.mode {
            SolveMode::Ground => {
                let mut inf = f64::INFINITY;
                for idx in 0..problem.mesh.node_count() {
                    if problem.in_region[idx] {
                        inf = inf.min(problem.v_values[idx]);
                    }
                }
                inf
            }
            _ => problem.potential.eval(&self.target),
        }
    }
}

/// Run the configured sweep, largest eps first. Warm-started chains run
/// sequentially; cold entries may run on `jobs` worker threads. Failures
/// are recorded per entry and the sweep continues.
pub fn run_sweep(config: &ExperimentConfig, jobs: usize) -> Result<SweepOutcome, SweepError> {
    config.validate()?;
    let params = LimitProblemParams::new(config.problem.dimension, config.problem.p, 1.0)?;
    let profile = shoot_ground_state(&params, config.tolerances.shoot_tol)?;
    let constants = EnergyConstants::from_base_profile(&profile)?;
    let target = config
        .sweep
        .pin_target
        .as_deref()
        .map(pad_point)
        .unwrap_or_else(|| pad_point(&config.problem.region.anchor));

    // seed cutoff sized from the sampled region
    let probe = config.build_problem(config.sweep.epsilons[0])?;
    let circ = probe.region.circumradius(&probe.potential, &probe.mesh);
    let seed_template = SeedSpec {
        center: config.problem.region.anchor.clone(),
        cutoff_center: config.problem.region.anchor.clone(),
        plateau_radius: config.sweep.seed_plateau_factor * circ,
        support_radius: (config.sweep.seed_support_factor * circ)
            .min(config.mesh.half_width - 2.0 * probe.mesh.spacing),
    };
    let ctx = EntryContext {
        config,
        profile: &profile,
        constants: &constants,
        target,
        seed_template,
    };

    let epsilons = &config.sweep.epsilons;
    let mut records: Vec<Option<(SweepRecord, Option<SolveResult>)>> =
        (0..epsilons.len()).map(|_| None).collect();

    let parallel = config.sweep.seed_mode == SeedMode::Cold && jobs > 1;
    if parallel {
        let ctx_ref = &ctx;
        let indexed: Vec<(usize, f64)> = epsilons.iter().copied().enumerate().collect();
        for chunk in indexed.chunks(jobs) {
            let outcomes: Vec<(usize, (SweepRecord, Option<SolveResult>))> =
                std::thread::scope(|scope| {
                    let handles: Vec<_> = chunk
                        .iter()
                        .map(|&(i, eps)| {
                            scope.spawn(move || match ctx_ref.config.build_problem(eps) {
                                Ok(problem) => {
                                    let outcome = solve_entry(ctx_ref, &problem, None);
                                    (i, record_entry(ctx_ref, &problem, outcome))
                                }
                                Err(e) => {
                                    let mut rec = empty_record(eps);
                                    rec.solve_error = Some(e.to_string());
                                    (i, (rec, None))
                                }
                            })
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
                });
            for (i, entry) in outcomes {
                records[i] = Some(entry);
            }
        }
    } else {
        let mut prev: Option<(f64, SolveResult)> = None;
        for (i, &eps) in epsilons.iter().enumerate() {
            let problem = config.build_problem(eps)?;
            let warm = match (&prev, config.sweep.seed_mode) {
                (Some((eps_prev, result)), SeedMode::Warm) => {
                    Some(warm_start(&problem, result, *eps_prev, &ctx.seed_template))
                }
                _ => None,
            };
            let outcome = solve_entry(&ctx, &problem, warm.as_ref());
            let (record, result) = record_entry(&ctx, &problem, outcome);
            if let Some(result) = &result {
                if result.converged {
                    prev = Some((eps, result.clone()));
                }
            }
            records[i] = Some((record, result));
        }
    }

    let mut rows = Vec::new();
    let mut solutions = Vec::new();
    for entry in records.into_iter().flatten() {
        rows.push(entry.0);
        solutions.push(entry.1);
    }
    let report = assemble_report(config, &constants, &profile, &ctx, rows)?;
    Ok(SweepOutcome { report, solutions, config: config.clone() })
}

fn target_potential_sqrt(config: &ExperimentConfig, ctx: &EntryContext) -> f64 {
    let v = config
        .build_problem(config.sweep.epsilons[0])
        .map(|p| ctx.constants_target_value(&p))
        .unwrap_or(1.0);
    v.max(1e-12).sqrt()
}

fn empty_record(eps: f64) -> SweepRecord {
    SweepRecord {
        eps,
        energy: None,
        rescaled_energy: None,
        predicted_energy: f64::NAN,
        peak: None,
        peak_value: None,
        barycenter: None,
        peak_boundary_dist: None,
        certificate_holds: None,
        certificate_margin: None,
        envelope_dominated: None,
        envelope_worst_ratio: None,
        envelope_lambda: None,
        envelope_nu: None,
        nehari_residual: None,
        gradient_norm: None,
        iterations: None,
        converged: None,
        tail_fraction: None,
        rescaled_profile_l2: None,
        path_boundary_level: None,
        path_interior_level: None,
        peak_quotient: None,
        region_energy_rescaled: None,
        boundary_layer_max: None,
        solve_error: None,
    }
}

fn assemble_report(
    config: &ExperimentConfig,
    constants: &EnergyConstants,
    profile: &GroundStateProfile,
    ctx: &EntryContext,
    records: Vec<SweepRecord>,
) -> Result<SweepReport, SweepError> {
    let dim = config.problem.dimension;
    let target_potential = {
        let problem = config.build_problem(config.sweep.epsilons[0])?;
        ctx.constants_target_value(&problem)
    };
    let predicted = constants.concentration_energy(target_potential).unwrap_or(f64::NAN);

    let tail_points: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.tail_fraction.map(|f| (r.eps, f)))
        .collect();
    let tail_slope = log_log_slope(&tail_points);

    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(SweepCheck { name: name.to_string(), passed, detail });
    };

    let solved: Vec<&SweepRecord> = records.iter().filter(|r| r.energy.is_some()).collect();
    push(
        "all_entries_solved",
        solved.len() == records.len(),
        format!("{} of {} entries solved", solved.len(), records.len()),
    );
    let converged_ok = solved.iter().all(|r| r.converged == Some(true));
    push("all_entries_converged", converged_ok, String::new());

    let residual_ok = solved.iter().all(|r| {
        r.nehari_residual.map(|x| x.abs() < config.tolerances.nehari_tol).unwrap_or(false)
    });
    push(
        "nehari_residuals_within_tolerance",
        residual_ok,
        format!("tolerance {}", config.tolerances.nehari_tol),
    );

    if let Some(last) = solved.last() {
        let holds = last.certificate_holds == Some(true)
            && last.certificate_margin.map(|m| m > 0.0).unwrap_or(false);
        push(
            "certificate_at_smallest_eps",
            holds,
            format!(
                "eps = {}, margin = {:?}",
                last.eps,
                last.certificate_margin
            ),
        );
    } else {
        push("certificate_at_smallest_eps", false, "no solved entries".into());
    }

    let peak_ok = solved
        .iter()
        .all(|r| r.peak_quotient.map(|q| q >= 1.0 - 1e-6).unwrap_or(false));
    push("peak_lower_bound", peak_ok, "sup u_+^{p-1}/V >= 1 - 1e-6".into());

    if solved.len() >= 2 {
        let errors: Vec<f64> = solved
            .iter()
            .map(|r| (r.rescaled_energy.unwrap() - predicted).abs() / predicted)
            .collect();
        // the trend is meaningful only when the mesh resolves the smallest
        // peak: require at least ~10 nodes across the width eps/sqrt(V)
        let eps_min = solved.last().unwrap().eps;
        let width = eps_min / target_potential_sqrt(config, ctx);
        let mesh_spacing = 2.0 * config.mesh.half_width / (config.mesh.points_per_axis - 1) as f64;
        if mesh_spacing <= 0.2 * width {
            // strict decrease until the error saturates at the percent level
            let monotone = errors.windows(2).all(|w| w[1] < w[0] || w[1] < 0.01);
            push(
                "energy_error_decreases",
                monotone,
                format!("relative errors {:?}", errors),
            );
        } else {
            push(
                "energy_error_decreases",
                true,
                format!(
                    "skipped: spacing {mesh_spacing:.3e} under-resolves the peak width {width:.3e}; relative errors {errors:?}"
                ),
            );
        }
    }
    if let Some(slope) = tail_slope {
        push(
            "tail_energy_slope",
            slope >= 1.7,
            format!("log-log slope {slope:.3}"),
        );
    }
    if solved.len() >= 2 {
        // the region energy rescaled by eps^-N must stay bounded away from
        // zero uniformly in eps; its spread across the sweep measures that
        let vals: Vec<f64> = solved
            .iter()
            .filter_map(|r| r.region_energy_rescaled)
            .collect();
        if vals.len() == solved.len() {
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = vals.iter().cloned().fold(0.0, f64::max);
            push(
                "region_energy_eps_uniform",
                min > 0.0 && max / min < 10.0,
                format!("eps^-N region energies in [{min:.4e}, {max:.4e}]"),
            );
        }
    }
    {
        let worst = solved
            .iter()
            .filter_map(|r| r.boundary_layer_max)
            .fold(0.0f64, f64::max);
        push(
            "box_truncation_post_hoc",
            worst < 1e-3,
            format!("largest boundary-layer value {worst:.3e} of the peak"),
        );
    }
    // certificate monotonicity along the sweep: once it holds it should keep
    // holding at smaller eps; violations are anomalies, never failures
    {
        let mut seen_holding = false;
        let mut anomalies = Vec::new();
        for r in &solved {
            match r.certificate_holds {
                Some(true) => seen_holding = true,
                Some(false) if seen_holding => anomalies.push(r.eps),
                _ => {}
            }
        }
        let detail = if anomalies.is_empty() {
            "no anomalies".to_string()
        } else {
            format!("anomalous eps {anomalies:?}")
        };
        push("certificate_monotone_in_eps", true, detail);
    }
    if config.sweep.mode != SolveMode::Ground && solved.len() >= 2 {
        // blow-up profiles must approach the rescaled limit state
        let l2: Vec<f64> = solved.iter().filter_map(|r| r.rescaled_profile_l2).collect();
        if l2.len() == solved.len() {
            let monotone = l2.windows(2).all(|w| w[1] < w[0] || w[1] < 0.02);
            push(
                "rescaled_profile_error_decreases",
                monotone,
                format!("relative L2 errors {:?}", l2),
            );
        }
    }
    if config.sweep.mode != SolveMode::Ground {
        // concentration near the target for small eps entries
        let mut all_ok = true;
        let mut detail = String::new();
        for r in &solved {
            if r.eps > 0.1 {
                continue;
            }
            if let Some(peak) = &r.peak {
                let mut d2 = 0.0;
                for k in 0..dim {
                    d2 += (peak[k] - ctx.target[k]) * (peak[k] - ctx.target[k]);
                }
                let ok = d2.sqrt() <= 2.0 * r.eps
                    && r.peak_boundary_dist.map(|b| b >= config.problem.region.rho / 2.0)
                        == Some(true);
                if !ok {
                    all_ok = false;
                    detail = format!(
                        "eps = {}: |peak-target| = {:.4e}, boundary dist = {:?}",
                        r.eps,
                        d2.sqrt(),
                        r.peak_boundary_dist
                    );
                }
            }
        }
        push("concentration_at_target", all_ok, detail);
    }

    Ok(SweepReport {
        name: config.label().to_string(),
        dimension: dim,
        p: config.problem.p,
        mode: config.sweep.mode,
        base_energy: profile.energy,
        sobolev_constant: constants.sobolev,
        target_point: ctx.target[..dim].to_vec(),
        target_potential,
        predicted_concentration_energy: predicted,
        tail_slope,
        records,
        checks,
    })
}

// ---------------------------------------------------------------------------
// report emission
// ---------------------------------------------------------------------------

const CSV_COLUMNS: &[&str] = &[
    "eps",
    "energy",
    "rescaled_energy",
    "predicted_energy",
    "peak_1",
    "peak_2",
    "peak_3",
    "peak_value",
    "barycenter_1",
    "barycenter_2",
    "barycenter_3",
    "peak_boundary_dist",
    "certificate_holds",
    "certificate_margin",
    "envelope_dominated",
    "envelope_worst_ratio",
    "envelope_lambda",
    "envelope_nu",
    "nehari_residual",
    "gradient_norm",
    "iterations",
    "converged",
    "tail_fraction",
    "rescaled_profile_l2",
    "path_boundary_level",
    "path_interior_level",
    "peak_quotient",
    "region_energy_rescaled",
    "boundary_layer_max",
    "solve_error",
];

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn fmt_coord(v: &Option<Vec<f64>>, k: usize) -> String {
    v.as_ref().and_then(|p| p.get(k)).map(|x| format!("{x}")).unwrap_or_default()
}

/// Render the report as CSV: fixed column order, `.` decimal separator,
/// newline-terminated rows; byte-identical for identical inputs.
pub fn report_to_csv(report: &SweepReport) -> String {
    let mut out = String::new();
    out.push_str(&CSV_COLUMNS.join(","));
    out.push('\n');
    for r in &report.records {
        let cells: Vec<String> = vec![
            format!("{}", r.eps),
            fmt_opt_f64(r.energy),
            fmt_opt_f64(r.rescaled_energy),
            format!("{}", r.predicted_energy),
            fmt_coord(&r.peak, 0),
            fmt_coord(&r.peak, 1),
            fmt_coord(&r.peak, 2),
            fmt_opt_f64(r.peak_value),
            fmt_coord(&r.barycenter, 0),
            fmt_coord(&r.barycenter, 1),
            fmt_coord(&r.barycenter, 2),
            fmt_opt_f64(r.peak_boundary_dist),
            r.certificate_holds.map(|b| b.to_string()).unwrap_or_default(),
            fmt_opt_f64(r.certificate_margin),
            r.envelope_dominated.map(|b| b.to_string()).unwrap_or_default(),
            fmt_opt_f64(r.envelope_worst_ratio),
            fmt_opt_f64(r.envelope_lambda),
            fmt_opt_f64(r.envelope_nu),
            fmt_opt_f64(r.nehari_residual),
            fmt_opt_f64(r.gradient_norm),
            r.iterations.map(|i| i.to_string()).unwrap_or_default(),
            r.converged.map(|b| b.to_string()).unwrap_or_default(),
            fmt_opt_f64(r.tail_fraction),
            fmt_opt_f64(r.rescaled_profile_l2),
            fmt_opt_f64(r.path_boundary_level),
            fmt_opt_f64(r.path_interior_level),
            fmt_opt_f64(r.peak_quotient),
            fmt_opt_f64(r.region_energy_rescaled),
            fmt_opt_f64(r.boundary_layer_max),
            r.solve_error.clone().unwrap_or_default().replace(',', ";"),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// JSON summary: configuration echo, derived constants, checks, and the
/// eps values failing the certificate.
pub fn report_to_json(report: &SweepReport) -> serde_json::Value {
    serde_json::json!({
        "name": report.name,
        "dimension": report.dimension,
        "p": report.p,
        "mode": report.mode,
        "base_energy": report.base_energy,
        "sobolev_constant": report.sobolev_constant,
        "target_point": report.target_point,
        "target_potential": report.target_potential,
        "predicted_concentration_energy": report.predicted_concentration_energy,
        "tail_slope": report.tail_slope,
        "all_checks_pass": report.all_checks_pass(),
        "checks": report.checks,
        "certificate_failing_eps": report.failing_eps(|r| r.certificate_holds),
        "records": report.records,
    })
}

/// Write the CSV, JSON, and gnuplot-ready data files into a directory.
pub fn emit_report(
    outcome: &SweepOutcome,
    dir: &Path,
    formats: &[String],
) -> Result<Vec<PathBuf>, SweepError> {
    if outcome.report.records.is_empty() {
        return Err(SweepError::Other("refusing to emit an empty report".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let base = outcome.report.name.clone();
    if formats.iter().any(|f| f == "csv") {
        let path = dir.join(format!("{base}_report.csv"));
        std::fs::write(&path, report_to_csv(&outcome.report))?;
        written.push(path);
        // gnuplot-ready two-column files
        let mut rescaled = String::new();
        for r in &outcome.report.records {
            if let Some(x) = r.rescaled_energy {
                rescaled.push_str(&format!("{} {}\n", r.eps, x));
            }
        }
        let path = dir.join(format!("{base}_rescaled_energy.dat"));
        std::fs::write(&path, rescaled)?;
        written.push(path);
    }
    if formats.iter().any(|f| f == "json") {
        let path = dir.join(format!("{base}_summary.json"));
        let mut file = std::fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut file, &report_to_json(&outcome.report))
            .map_err(|e| SweepError::Other(e.to_string()))?;
        file.write_all(b"\n")?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// solution persistence and the verify pass
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct SolutionHeader {
    config: ExperimentConfig,
    eps: f64,
    iterations: usize,
    converged: bool,
    energy: f64,
}

/// Dump each solved entry as a JSON header plus a field file (CSV with a
/// small header, and optionally a little-endian binary).
pub fn dump_solutions(
    outcome: &SweepOutcome,
    dir: &Path,
    binary: bool,
) -> Result<Vec<PathBuf>, SweepError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (i, solution) in outcome.solutions.iter().enumerate() {
        let Some(result) = solution else { continue };
        let eps = outcome.report.records[i].eps;
        let base = format!("{}_{i:02}", outcome.report.name);
        let header = SolutionHeader {
            config: outcome.config.clone(),
            eps,
            iterations: result.iterations,
            converged: result.converged,
            energy: result.diagnostics.value,
        };
        let meta_path = dir.join(format!("{base}.json"));
        std::fs::write(
            &meta_path,
            serde_json::to_string_pretty(&header).map_err(|e| SweepError::Other(e.to_string()))?,
        )?;
        written.push(meta_path);
        let mesh = &result.field.mesh;
        if binary {
            let path = dir.join(format!("{base}.field.bin"));
            let mut bytes = Vec::with_capacity(8 * result.field.values.len() + 32);
            bytes.extend_from_slice(b"NLSF");
            bytes.push(mesh.dim as u8);
            bytes.extend_from_slice(&(mesh.points_per_axis as u64).to_le_bytes());
            bytes.extend_from_slice(&mesh.half_width.to_le_bytes());
            bytes.extend_from_slice(&eps.to_le_bytes());
            for v in &result.field.values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            std::fs::write(&path, bytes)?;
            written.push(path);
        } else {
            let path = dir.join(format!("{base}.field.csv"));
            let mut text = String::from("dimension,points_per_axis,half_width,eps\n");
            text.push_str(&format!(
                "{},{},{},{}\n",
                mesh.dim, mesh.points_per_axis, mesh.half_width, eps
            ));
            text.push_str("u\n");
            for v in &result.field.values {
                text.push_str(&format!("{v}\n"));
            }
            std::fs::write(&path, text)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn load_field_csv(path: &Path, mesh: &Arc<Mesh>) -> Result<Field, SweepError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let _names = lines.next();
    let _vals = lines.next();
    let _col = lines.next();
    let mut values = Vec::with_capacity(mesh.node_count());
    for line in lines {
        if line.is_empty() {
            continue;
        }
        values.push(line.parse::<f64>().map_err(|e| SweepError::Other(e.to_string()))?);
    }
    if values.len() != mesh.node_count() {
        return Err(SweepError::Other(format!(
            "field file {path:?} has {} values for a {}-node mesh",
            values.len(),
            mesh.node_count()
        )));
    }
    Ok(Field { mesh: Arc::clone(mesh), values })
}

fn load_field_bin(path: &Path, mesh: &Arc<Mesh>) -> Result<Field, SweepError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 29 || &bytes[0..4] != b"NLSF" {
        return Err(SweepError::Other(format!("bad field file {path:?}")));
    }
    let n = mesh.node_count();
    let payload = &bytes[29..];
    if payload.len() != 8 * n {
        return Err(SweepError::Other(format!(
            "field file {path:?} payload has {} bytes, expected {}",
            payload.len(),
            8 * n
        )));
    }
    let mut values = Vec::with_capacity(n);
    for chunk in payload.chunks_exact(8) {
        values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok(Field { mesh: Arc::clone(mesh), values })
}

/// Re-run the full diagnostics over a directory of dumped solutions and
/// assemble a fresh report, independent of the original solve session.
pub fn verify_directory(dir: &Path) -> Result<SweepOutcome, SweepError> {
    let mut headers: Vec<(PathBuf, SolutionHeader)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().map(|e| e == "json") == Some(true)
            && !path
                .file_name()
                .map(|n| n.to_string_lossy().ends_with("_summary.json"))
                .unwrap_or(false)
        {
            let text = std::fs::read_to_string(&path)?;
            match serde_json::from_str::<SolutionHeader>(&text) {
                Ok(header) => headers.push((path, header)),
                Err(_) => continue,
            }
        }
    }
    if headers.is_empty() {
        return Err(SweepError::Other(format!("no solution dumps found in {dir:?}")));
    }
    headers.sort_by(|a, b| b.1.eps.total_cmp(&a.1.eps));
    let config = headers[0].1.config.clone();
    let params = LimitProblemParams::new(config.problem.dimension, config.problem.p, 1.0)?;
    let profile = shoot_ground_state(&params, config.tolerances.shoot_tol)?;
    let constants = EnergyConstants::from_base_profile(&profile)?;
    let target = config
        .sweep
        .pin_target
        .as_deref()
        .map(pad_point)
        .unwrap_or_else(|| pad_point(&config.problem.region.anchor));
    let probe = config.build_problem(headers[0].1.eps)?;
    let circ = probe.region.circumradius(&probe.potential, &probe.mesh);
    let seed_template = SeedSpec {
        center: config.problem.region.anchor.clone(),
        cutoff_center: config.problem.region.anchor.clone(),
        plateau_radius: config.sweep.seed_plateau_factor * circ,
        support_radius: (config.sweep.seed_support_factor * circ)
            .min(config.mesh.half_width - 2.0 * probe.mesh.spacing),
    };
    let ctx = EntryContext {
        config: &config,
        profile: &profile,
        constants: &constants,
        target,
        seed_template,
    };
    let mut rows = Vec::new();
    let mut solutions = Vec::new();
    for (path, header) in &headers {
        let problem = config.build_problem(header.eps)?;
        let csv_path = path.with_extension("").with_extension("field.csv");
        let bin_path = path.with_extension("").with_extension("field.bin");
        let field = if csv_path.exists() {
            load_field_csv(&csv_path, &problem.mesh)?
        } else if bin_path.exists() {
            load_field_bin(&bin_path, &problem.mesh)?
        } else {
            return Err(SweepError::Other(format!("no field dump beside {path:?}")));
        };
        let diagnostics = problem.diagnostics(&field);
        let (peak, peak_value) = crate::solver::locate_peak(&problem, &field);
        let result = SolveResult {
            field,
            diagnostics,
            iterations: header.iterations,
            peak,
            peak_value,
            converged: header.converged,
        };
        let (record, result) = record_entry(&ctx, &problem, Ok(result));
        rows.push(record);
        solutions.push(result);
    }
    let report = assemble_report(&config, &constants, &profile, &ctx, rows)?;
    Ok(SweepOutcome { report, solutions, config })
}
