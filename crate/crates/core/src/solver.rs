//! Critical points of the penalized functional: Nehari ground states by
//! projected descent, locally pinned states by barycenter-penalty
//! continuation, and the test-path levels that bracket the minimax value.

use crate::diagnostics::{barycenter, barycenter_cutoff};
use crate::domain::{Field, Point};
use crate::energy::{EnergyError, NehariDiagnostics, PenalizedProblem};
use crate::limit::{EnergyConstants, GroundStateProfile};
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("seed mismatch: {0}")]
    SeedMismatch(String),
    #[error("pin escaped: final barycenter drifted {drift:.4e} from the target (radius {radius:.4e})")]
    PinEscape { drift: f64, radius: f64 },
}

/// Cutoff-and-rescale seed description: a radial plateau of height one
/// covering Λ, ramping to zero inside the support radius.
#[derive(Debug, Clone, Serialize)]
pub struct SeedSpec {
    /// Concentration center `y` (inside Λ).
    pub center: Vec<f64>,
    /// Center of the radial cutoff, normally the region anchor.
    pub cutoff_center: Vec<f64>,
    pub plateau_radius: f64,
    pub support_radius: f64,
}

impl SeedSpec {
    pub fn eta(&self, pt: &Point) -> f64 {
        let mut d2 = 0.0;
        for d in 0..3 {
            let c = self.cutoff_center.get(d).copied().unwrap_or(0.0);
            d2 += (pt[d] - c) * (pt[d] - c);
        }
        let d = d2.sqrt();
        if d <= self.plateau_radius {
            1.0
        } else if d >= self.support_radius {
            0.0
        } else {
            // smooth cosine ramp
            let s = (d - self.plateau_radius) / (self.support_radius - self.plateau_radius);
            0.5 * (1.0 + (std::f64::consts::PI * s).cos())
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeedField {
    pub field: Field,
    /// Nehari scale applied to the raw cutoff profile.
    pub scale: f64,
    /// Set when the rescaled profile was visibly truncated by the cutoff
    /// or the box; expect distorted energies.
    pub clipped: bool,
}

/// Evaluate the rescaled limit profile `U_{V(y)}((y - x)/eps)` through the
/// exact frequency scaling `U_nu(r) = nu^{1/(p-1)} U_1(sqrt(nu) r)`.
fn scaled_profile_value(base: &GroundStateProfile, nu: f64, r: f64) -> f64 {
    let p = base.params.p;
    nu.powf(1.0 / (p - 1.0)) * base.eval(nu.sqrt() * r)
}

/// Build the Nehari-projected test function `w_{eps,y}`.
pub fn seed_field(
    problem: &PenalizedProblem,
    seed: &SeedSpec,
    base_profile: &GroundStateProfile,
) -> Result<SeedField, SolveError> {
    if base_profile.params.dim != problem.mesh.dim {
        return Err(SolveError::SeedMismatch(format!(
            "profile dimension {} vs mesh dimension {}",
            base_profile.params.dim, problem.mesh.dim
        )));
    }
    if (base_profile.params.p - problem.p).abs() > 1e-12 {
        return Err(SolveError::SeedMismatch("profile exponent differs from problem".into()));
    }
    if (base_profile.params.nu - 1.0).abs() > 1e-12 {
        return Err(SolveError::SeedMismatch("seed scaling needs the nu = 1 base profile".into()));
    }
    let mut y = [0.0; 3];
    for d in 0..3 {
        y[d] = seed.center.get(d).copied().unwrap_or(0.0);
    }
    let nu = problem.potential.eval(&y);
    if !(nu > 0.0) {
        return Err(SolveError::SeedMismatch(format!(
            "potential vanishes at the seed center {y:?}"
        )));
    }
    let eps = problem.eps;
    let raw = Field::from_fn(Arc::clone(&problem.mesh), |pt| {
        let eta = seed.eta(pt);
        if eta == 0.0 {
            return 0.0;
        }
        let mut r2 = 0.0;
        for d in 0..3 {
            r2 += (pt[d] - y[d]) * (pt[d] - y[d]);
        }
        eta * scaled_profile_value(base_profile, nu, r2.sqrt() / eps)
    });
    // the peak value survives unclipped when the core of the profile fits
    let expected_peak = scaled_profile_value(base_profile, nu, 0.0);
    let raw_max = raw.values.iter().cloned().fold(0.0, f64::max);
    let clipped = raw_max < 0.9 * expected_peak
        || eps * base_profile.r_max / nu.sqrt() > 4.0 * problem.mesh.half_width;
    let (scale, field) = problem.nehari_project(&raw)?;
    Ok(SeedField { field, scale, clipped })
}

#[derive(Debug, Clone, Copy)]
pub struct DescentOptions {
    pub tol_grad: f64,
    pub max_iter: usize,
    /// Precondition descent directions with the inverse of
    /// `-eps^2 Δ + max(V, inf_Λ V)`; plain raw-gradient steps otherwise.
    pub precondition: bool,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Print per-iteration diagnostics to stderr.
    pub trace: bool,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            tol_grad: 1e-6,
            max_iter: 40_000,
            precondition: true,
            cg_tol: 0.05,
            cg_max_iter: 400,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    #[serde(skip)]
    pub field: Field,
    pub diagnostics: NehariDiagnostics,
    pub iterations: usize,
    pub peak: Point,
    pub peak_value: f64,
    pub converged: bool,
}

/// Conjugate gradients on the floored Riesz operator, matrix-free.
fn riesz_direction(
    problem: &PenalizedProblem,
    rhs: &Field,
    floor: f64,
    tol: f64,
    max_iter: usize,
) -> Field {
    let mesh = &problem.mesh;
    let m = mesh.points_per_axis;
    let h2 = mesh.spacing * mesh.spacing;
    let e2 = problem.eps * problem.eps;
    let n = mesh.node_count();
    let apply = |z: &[f64], out: &mut Vec<f64>| {
        for idx in 0..n {
            let ids = mesh.decompose(idx);
            let mut boundary = false;
            let mut lap = 0.0;
            for d in 0..mesh.dim {
                if ids[d] == 0 || ids[d] == m - 1 {
                    boundary = true;
                    break;
                }
                let stride = mesh.stride(d);
                lap += z[idx + stride] + z[idx - stride] - 2.0 * z[idx];
            }
            out[idx] = if boundary {
                0.0
            } else {
                -e2 * lap / h2 + problem.v_values[idx].max(floor) * z[idx]
            };
        }
    };
    let mut x = vec![0.0; n];
    let mut r: Vec<f64> = (0..n)
        .map(|i| if mesh.is_boundary(i) { 0.0 } else { rhs.values[i] })
        .collect();
    let mut p: Vec<f64> = r.clone();
    let mut ap = vec![0.0; n];
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let rs0 = rs;
    if rs0 > 0.0 {
        for _ in 0..max_iter {
            apply(&p, &mut ap);
            let denom: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if denom <= 0.0 {
                break;
            }
            let alpha = rs / denom;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rs_new: f64 = r.iter().map(|v| v * v).sum();
            if rs_new < tol * tol * rs0 {
                break;
            }
            let beta = rs_new / rs;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            rs = rs_new;
        }
    }
    Field { mesh: Arc::clone(mesh), values: x }
}

/// Barycenter pin: a quadratic penalty `kappa eps^N |β(u) - target|^2`
/// added to the functional during continuation.
struct Pin {
    target: Point,
    cutoff: Field,
    kappa: f64,
    eps_pow: f64,
}

impl Pin {
    fn value(&self, problem: &PenalizedProblem, u: &Field) -> f64 {
        let b = barycenter(u, &self.cutoff).unwrap_or(self.target);
        let mut d2 = 0.0;
        for d in 0..problem.mesh.dim {
            d2 += (b[d] - self.target[d]) * (b[d] - self.target[d]);
        }
        self.kappa * self.eps_pow * d2
    }

    /// Per-axis derivative fields of the barycenter,
    /// `a_k = 2 ψ^2 u (x_k - β_k) / ∫ψ^2u^2`, spanning the Gauss-Newton
    /// Hessian `2 κ eps^N Σ_k a_k a_k^T` of the pin.
    fn hessian_factors(&self, problem: &PenalizedProblem, u: &Field) -> Option<(Vec<Field>, f64)> {
        let b = barycenter(u, &self.cutoff).ok()?;
        let mesh = &problem.mesh;
        let mut mass = 0.0;
        for (i, &v) in u.values.iter().enumerate() {
            let psi = self.cutoff.values[i];
            mass += problem.weights[i] * psi * psi * v * v;
        }
        if mass <= 0.0 {
            return None;
        }
        let mut fields = Vec::with_capacity(mesh.dim);
        for k in 0..mesh.dim {
            let mut a = Field::zeros(Arc::clone(mesh));
            for (i, slot) in a.values.iter_mut().enumerate() {
                if mesh.is_boundary(i) {
                    continue;
                }
                let psi = self.cutoff.values[i];
                if psi == 0.0 {
                    continue;
                }
                let pt = mesh.point(i);
                *slot = 2.0 * psi * psi * u.values[i] * (pt[k] - b[k]) / mass;
            }
            fields.push(a);
        }
        Some((fields, 2.0 * self.kappa * self.eps_pow))
    }

    /// Closed-form derivative of the barycenter quotient.
    fn gradient(&self, problem: &PenalizedProblem, u: &Field, out: &mut Field) {
        let b = match barycenter(u, &self.cutoff) {
            Ok(b) => b,
            Err(_) => return,
        };
        let mut mass = 0.0;
        for (i, &v) in u.values.iter().enumerate() {
            let psi = self.cutoff.values[i];
            mass += problem.weights[i] * psi * psi * v * v;
        }
        if mass <= 0.0 {
            return;
        }
        let mesh = &problem.mesh;
        for (i, slot) in out.values.iter_mut().enumerate() {
            if mesh.is_boundary(i) {
                continue;
            }
            let psi = self.cutoff.values[i];
            if psi == 0.0 {
                continue;
            }
            let pt = mesh.point(i);
            let mut dot = 0.0;
            for d in 0..mesh.dim {
                dot += (b[d] - self.target[d]) * (pt[d] - b[d]);
            }
            *slot += 4.0 * self.kappa * self.eps_pow * psi * psi * u.values[i] * dot / mass;
        }
    }
}

/// Preconditioned direction accounting for the pin's low-rank Hessian via
/// the Woodbury identity: `(R + c Σ a_k a_k^T)^{-1} g` from `R^{-1}` solves
/// and a dim-by-dim dense system, all in the quadrature-weighted pairing.
fn woodbury_direction(
    problem: &PenalizedProblem,
    g: &Field,
    floor: f64,
    opts: &DescentOptions,
    pin: &Pin,
    u: &Field,
) -> Field {
    let z0 = riesz_direction(problem, g, floor, opts.cg_tol, opts.cg_max_iter);
    let Some((factors, coeff)) = pin.hessian_factors(problem, u) else {
        return z0;
    };
    if coeff <= 0.0 {
        return z0;
    }
    let k = factors.len();
    let solves: Vec<Field> = factors
        .iter()
        .map(|a| riesz_direction(problem, a, floor, opts.cg_tol, opts.cg_max_iter))
        .collect();
    // (1/c I + M) y = rhs with M_kl = <a_k, R^{-1} a_l>, rhs_k = <a_k, z0>
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for i in 0..k {
        rhs[i] = problem.pair(&factors[i], &z0);
        for j in 0..k {
            m[i][j] = problem.pair(&factors[i], &solves[j]);
        }
        m[i][i] += 1.0 / coeff;
    }
    // Gaussian elimination on the tiny system
    let mut y = rhs;
    for col in 0..k {
        let mut pivot = col;
        for row in col + 1..k {
            if m[row][col].abs() > m[pivot][col].abs() {
                pivot = row;
            }
        }
        m.swap(col, pivot);
        y.swap(col, pivot);
        let diag = m[col][col];
        if diag.abs() < 1e-300 {
            return z0;
        }
        for row in col + 1..k {
            let f = m[row][col] / diag;
            for cc in col..k {
                m[row][cc] -= f * m[col][cc];
            }
            y[row] -= f * y[col];
        }
    }
    for col in (0..k).rev() {
        for cc in col + 1..k {
            y[col] -= m[col][cc] * y[cc];
        }
        y[col] /= m[col][col];
    }
    let mut d = z0;
    for (i, z) in solves.iter().enumerate() {
        for (dv, zv) in d.values.iter_mut().zip(&z.values) {
            *dv -= y[i] * zv;
        }
    }
    d
}

fn descend(
    problem: &PenalizedProblem,
    start: &Field,
    opts: &DescentOptions,
    pin: Option<&Pin>,
) -> Result<(Field, usize, bool), SolveError> {
    let (_, mut u) = problem.nehari_project(start)?;
    let floor = problem
        .v_values
        .iter()
        .zip(&problem.in_region)
        .filter(|(_, &inside)| inside)
        .map(|(&v, _)| v)
        .fold(f64::INFINITY, f64::min);
    let objective = |u: &Field| -> f64 {
        problem.functional(u) + pin.map_or(0.0, |p| p.value(problem, u))
    };
    let gradient = |u: &Field| -> Field {
        let mut g = problem.gradient(u);
        if let Some(p) = pin {
            p.gradient(problem, u, &mut g);
        }
        g
    };
    let alpha_plain = {
        let sup_v = problem.v_values.iter().cloned().fold(0.0, f64::max);
        let h2 = problem.mesh.spacing * problem.mesh.spacing;
        1.0 / (problem.eps * problem.eps * 8.0 * problem.mesh.dim as f64 / h2 + sup_v)
    };
    let alpha_cap = if opts.precondition { 1.0 } else { alpha_plain };
    let mut alpha = alpha_cap;
    let mut value = objective(&u);
    let mut last_rel_change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let g = gradient(&u);
        let gnorm = problem.gradient_norm(&g);
        let unorm = problem.norm_sq(&u).sqrt();
        if gnorm < opts.tol_grad * unorm && (iterations == 0 || last_rel_change < 1e-10) {
            converged = true;
            break;
        }
        let dir = if opts.precondition {
            match pin {
                Some(p) => woodbury_direction(problem, &g, floor, opts, p, &u),
                None => riesz_direction(problem, &g, floor, opts.cg_tol, opts.cg_max_iter),
            }
        } else {
            g.clone()
        };
        let slope = problem.pair(&g, &dir);
        if !(slope > 0.0) {
            converged = gnorm < opts.tol_grad * unorm;
            break;
        }
        if opts.trace && iterations % 25 == 0 {
            let pin_part = pin.map_or(0.0, |p| p.value(problem, &u));
            eprintln!(
                "iter {iterations}: J = {value:.12e}, pin = {pin_part:.3e}, |grad| = {gnorm:.3e}, |u| = {unorm:.3e}, alpha = {alpha:.2e}"
            );
        }
        alpha = (2.0 * alpha).min(alpha_cap);
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = u.clone();
            for (t, d) in trial.values.iter_mut().zip(&dir.values) {
                *t -= alpha * d;
            }
            match problem.nehari_project(&trial) {
                Ok((_, projected)) => {
                    let trial_value = objective(&projected);
                    if trial_value <= value - 1e-4 * alpha * slope {
                        debug_assert!(trial_value <= value, "descent must be monotone");
                        last_rel_change =
                            (value - trial_value).abs() / value.abs().max(f64::MIN_POSITIVE);
                        u = projected;
                        value = trial_value;
                        accepted = true;
                        break;
                    }
                }
                Err(EnergyError::DegenerateDirection) | Err(EnergyError::BracketFailure(_)) => {}
                Err(e) => return Err(e.into()),
            }
            alpha *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // Armijo exhausted: the iterate is as converged as rounding allows.
            converged = gnorm < 10.0 * opts.tol_grad * unorm;
            break;
        }
    }
    Ok((u, iterations, converged))
}

/// Locate the peak node (lexicographically first maximum) and refine it per
/// axis with a quadratic fit through the neighbors.
pub fn locate_peak(problem: &PenalizedProblem, u: &Field) -> (Point, f64) {
    let mesh = &problem.mesh;
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in u.values.iter().enumerate() {
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    let ids = mesh.decompose(best);
    let mut peak = mesh.point(best);
    for d in 0..mesh.dim {
        if ids[d] == 0 || ids[d] + 1 >= mesh.points_per_axis {
            continue;
        }
        let stride = mesh.stride(d);
        let um = u.values[best - stride];
        let up = u.values[best + stride];
        let denom = um - 2.0 * best_val + up;
        if denom < 0.0 {
            let offset = 0.5 * (um - up) / denom;
            peak[d] += offset.clamp(-0.5, 0.5) * mesh.spacing;
        }
    }
    (peak, best_val)
}

fn finish(problem: &PenalizedProblem, u: Field, iterations: usize, converged: bool) -> SolveResult {
    let diagnostics = problem.diagnostics(&u);
    let (peak, peak_value) = locate_peak(problem, &u);
    SolveResult { field: u, diagnostics, iterations, peak, peak_value, converged }
}

/// Minimize the functional over the Nehari manifold by projected descent
/// with Armijo backtracking; every accepted step re-projects.
pub fn minimize_nehari(
    problem: &PenalizedProblem,
    seed: &Field,
    opts: &DescentOptions,
) -> Result<SolveResult, SolveError> {
    let (u, iterations, converged) = descend(problem, seed, opts, None)?;
    Ok(finish(problem, u, iterations, converged))
}

/// Continuation schedule for the barycenter pin, in units of
/// `eps^{-N} C(V(target)) / rho^2`.
pub const DEFAULT_PIN_SCHEDULE: [f64; 4] = [10.0, 1.0, 0.1, 0.0];

pub struct PinnedSolveSpec<'a> {
    pub target: Point,
    pub schedule: &'a [f64],
    /// Barycenter drift radius accepted after the unpinned polish.
    pub drift_radius: f64,
}

/// Minimize the pinned objective `J + kappa eps^N |β(u) - target|^2` along a
/// decreasing `kappa` schedule ending in an unpinned polish; the pin keeps
/// the iterate on the locally concentrated branch the minimax level selects.
pub fn solve_pinned(
    problem: &PenalizedProblem,
    constants: &EnergyConstants,
    seed: &Field,
    spec: &PinnedSolveSpec,
    opts: &DescentOptions,
) -> Result<SolveResult, SolveError> {
    let v_target = problem.potential.eval(&spec.target);
    let c_target = constants
        .concentration_energy(v_target)
        .map_err(|e| SolveError::SeedMismatch(e.to_string()))?;
    let eps_pow = problem.eps.powi(problem.mesh.dim as i32);
    let unit = c_target / (spec.drift_radius * spec.drift_radius.max(f64::MIN_POSITIVE)) / eps_pow;
    let cutoff = barycenter_cutoff(problem);
    let mut u = seed.clone();
    let mut total_iterations = 0;
    let mut converged = false;
    for (stage, &level) in spec.schedule.iter().enumerate() {
        let pin = if level > 0.0 {
            Some(Pin {
                target: spec.target,
                cutoff: cutoff.clone(),
                kappa: level * unit,
                eps_pow,
            })
        } else {
            None
        };
        let last = stage + 1 == spec.schedule.len();
        let stage_opts = if last {
            *opts
        } else {
            // intermediate stages only need to track the branch
            DescentOptions { tol_grad: (opts.tol_grad * 1e2).min(1e-3), ..*opts }
        };
        let (next, iters, conv) = descend(problem, &u, &stage_opts, pin.as_ref())?;
        u = next;
        total_iterations += iters;
        converged = conv;
    }
    let result = finish(problem, u, total_iterations, converged);
    let b = barycenter(&result.field, &cutoff).unwrap_or(spec.target);
    let mut drift2 = 0.0;
    for d in 0..problem.mesh.dim {
        drift2 += (b[d] - spec.target[d]) * (b[d] - spec.target[d]);
    }
    let drift = drift2.sqrt();
    if drift > spec.drift_radius {
        return Err(SolveError::PinEscape { drift, radius: spec.drift_radius });
    }
    Ok(result)
}

/// The inset width `δ(eps) = sqrt(eps rho)`, which vanishes with `eps` while
/// `δ/eps` diverges.
pub fn inset_width(eps: f64, rho: f64) -> f64 {
    (eps * rho).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct PathLevels {
    pub boundary_level: f64,
    pub interior_level: f64,
    pub inset_width: f64,
    pub boundary_samples: usize,
    pub interior_samples: usize,
}

/// Evaluate the functional on the test family `w_{eps,y}` over an inset
/// domain: the maximum over inset-boundary samples estimates the boundary
/// level `a_eps`, the maximum over all samples is the upper bound for the
/// minimax level `c_eps`.
pub fn test_path_levels(
    problem: &PenalizedProblem,
    base_profile: &GroundStateProfile,
    seed_template: &SeedSpec,
    boundary_points: &[Point],
    interior_points: &[Point],
) -> Result<PathLevels, SolveError> {
    let width = inset_width(problem.eps, problem.region.rho);
    let eval = |y: &Point| -> Result<f64, SolveError> {
        let seed = SeedSpec { center: y[..problem.mesh.dim].to_vec(), ..seed_template.clone() };
        let s = seed_field(problem, &seed, base_profile)?;
        Ok(problem.functional(&s.field))
    };
    let mut boundary_level = f64::NEG_INFINITY;
    for y in boundary_points {
        boundary_level = boundary_level.max(eval(y)?);
    }
    let mut interior_level = boundary_level;
    for y in interior_points {
        interior_level = interior_level.max(eval(y)?);
    }
    Ok(PathLevels {
        boundary_level,
        interior_level,
        inset_width: width,
        boundary_samples: boundary_points.len(),
        interior_samples: interior_points.len(),
    })
}

/// Distance from every node to the sampled boundary of Λ, by brute force
/// against indicator-flip edge midpoints (capped for large grids).
pub fn region_boundary_distances(problem: &PenalizedProblem) -> (Vec<Point>, Vec<f64>) {
    let mesh = &problem.mesh;
    let m = mesh.points_per_axis;
    let mut boundary = Vec::new();
    for axis in 0..mesh.dim {
        let stride = mesh.stride(axis);
        for idx in 0..mesh.node_count() {
            let ids = mesh.decompose(idx);
            if ids[axis] + 1 >= m {
                continue;
            }
            if problem.in_region[idx] != problem.in_region[idx + stride] {
                let a = mesh.point(idx);
                let b = mesh.point(idx + stride);
                boundary.push([(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0]);
            }
        }
    }
    let cap = 600;
    let thinned: Vec<Point> = if boundary.len() > cap {
        let stride = boundary.len() / cap + 1;
        boundary.iter().step_by(stride).copied().collect()
    } else {
        boundary.clone()
    };
    let mut dist = vec![f64::INFINITY; mesh.node_count()];
    for (idx, d) in dist.iter_mut().enumerate() {
        let pt = mesh.point(idx);
        for b in &thinned {
            let mut d2 = 0.0;
            for k in 0..mesh.dim {
                d2 += (pt[k] - b[k]) * (pt[k] - b[k]);
            }
            *d = d.min(d2.sqrt());
        }
    }
    (boundary, dist)
}

/// Build inset sample sets: nodes of Λ deeper than the inset width, with a
/// one-cell shell as the inset boundary.
pub fn inset_samples(
    problem: &PenalizedProblem,
    distances: &[f64],
    max_interior: usize,
) -> (Vec<Point>, Vec<Point>) {
    let mesh = &problem.mesh;
    let width = inset_width(problem.eps, problem.region.rho);
    let shell = 1.5 * mesh.spacing * (mesh.dim as f64).sqrt();
    let mut boundary = Vec::new();
    let mut interior = Vec::new();
    for idx in 0..mesh.node_count() {
        if !problem.in_region[idx] {
            continue;
        }
        let d = distances[idx];
        if d >= width && d < width + shell {
            boundary.push(mesh.point(idx));
        } else if d >= width + shell {
            interior.push(mesh.point(idx));
        }
    }
    if interior.len() > max_interior {
        let stride = interior.len() / max_interior + 1;
        interior = interior.iter().step_by(stride).copied().collect();
    }
    // always probe the deepest point (argmax of the distance)
    let mut best = 0usize;
    let mut best_d = f64::NEG_INFINITY;
    for idx in 0..mesh.node_count() {
        if problem.in_region[idx] && distances[idx] > best_d {
            best_d = distances[idx];
            best = idx;
        }
    }
    interior.push(mesh.point(best));
    (boundary, interior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Mesh, PenalizationMode, PotentialSpec, RegionShape, RegionSpec};
    use crate::limit::{shoot_ground_state, LimitProblemParams};
    use std::sync::OnceLock;

    fn base_profile() -> &'static GroundStateProfile {
        static CELL: OnceLock<GroundStateProfile> = OnceLock::new();
        CELL.get_or_init(|| {
            let params = LimitProblemParams::new(1, 3.0, 1.0).unwrap();
            shoot_ground_state(&params, 1e-13).unwrap()
        })
    }

    fn problem(eps: f64, points: usize) -> PenalizedProblem {
        let mesh = Arc::new(Mesh::new(1, 6.0, points).unwrap());
        let potential = PotentialSpec::builtin("inverse_poly4", 1).unwrap();
        let region = RegionSpec {
            shape: RegionShape::LevelSet { threshold: 0.8 },
            anchor: vec![0.0],
            rho: 0.15,
            rho0: 0.075,
            beta_pen: 1.0,
            mu: 0.4,
            mode: PenalizationMode::LowDim,
        };
        PenalizedProblem::new(mesh, potential, region, 3.0, eps).unwrap()
    }

    fn default_seed(problem: &PenalizedProblem, y: f64) -> SeedSpec {
        let _ = problem;
        SeedSpec {
            center: vec![y],
            cutoff_center: vec![0.0],
            plateau_radius: 1.1,
            support_radius: 1.9,
        }
    }

    #[test]
    fn seed_energy_approaches_concentration_energy() {
        let problem = problem(0.05, 2401);
        let profile = base_profile();
        let seed = seed_field(&problem, &default_seed(&problem, 0.0), profile).unwrap();
        assert!(!seed.clipped);
        let j = problem.functional(&seed.field);
        let expected = profile.energy; // C(argmax V) with V(0) = 1
        let rel = (j / problem.eps - expected).abs() / expected;
        assert!(rel < 0.1, "J/eps = {}, C = {}, rel = {}", j / problem.eps, expected, rel);
    }

    #[test]
    fn seed_concentrates_at_its_center() {
        let problem = problem(0.05, 2401);
        let y = 0.3;
        let seed = seed_field(&problem, &default_seed(&problem, y), base_profile()).unwrap();
        let cutoff = crate::diagnostics::barycenter_cutoff(&problem);
        let b = crate::diagnostics::barycenter(&seed.field, &cutoff).unwrap();
        assert!((b[0] - y).abs() < 2.0 * problem.eps, "barycenter {} vs center {y}", b[0]);
        let (peak, _) = locate_peak(&problem, &seed.field);
        assert!((peak[0] - y).abs() < 2.0 * problem.mesh.spacing);
    }

    #[test]
    fn converged_states_satisfy_manifold_bounds() {
        let problem = problem(0.1, 1201);
        let seed = seed_field(&problem, &default_seed(&problem, 0.68), base_profile()).unwrap();
        let result = minimize_nehari(&problem, &seed.field, &DescentOptions::default()).unwrap();
        let bounds = crate::energy::nehari_lower_bounds(&problem, &result.field, 1e-8);
        assert!(bounds.on_manifold);
        assert!(bounds.power_bound_holds, "region power {}", bounds.region_power);
        assert!(bounds.peak_bound_holds, "peak quotient {}", bounds.peak_quotient);
        assert!(bounds.rescaled_region_energy > 0.0);
    }

    #[test]
    fn seed_clipping_warns() {
        let problem = problem(3.0, 601);
        let seed = seed_field(&problem, &default_seed(&problem, 0.0), base_profile()).unwrap();
        assert!(seed.clipped);
    }

    #[test]
    fn ground_state_converges_and_certifies_descent() {
        let problem = problem(0.1, 1201);
        let seed = seed_field(&problem, &default_seed(&problem, 0.68), base_profile()).unwrap();
        let opts = DescentOptions::default();
        let result = minimize_nehari(&problem, &seed.field, &opts).unwrap();
        assert!(result.converged);
        assert!(result.diagnostics.nehari_residual.abs() < 1e-8);
        let unorm = problem.norm_sq(&result.field).sqrt();
        assert!(result.diagnostics.gradient_norm < opts.tol_grad * unorm);
        // converged states stay positive
        let max = result.peak_value;
        assert!(result.field.values.iter().all(|&v| v > -1e-10 * max));
    }

    #[test]
    fn critical_seed_returns_immediately() {
        let problem = problem(0.1, 1201);
        let seed = seed_field(&problem, &default_seed(&problem, 0.68), base_profile()).unwrap();
        let first = minimize_nehari(&problem, &seed.field, &DescentOptions::default()).unwrap();
        let again =
            minimize_nehari(&problem, &first.field, &DescentOptions::default()).unwrap();
        assert!(again.iterations <= 1, "restart took {} iterations", again.iterations);
        assert!(again.converged);
    }

    #[test]
    fn symmetric_problem_preserves_symmetry() {
        let problem = problem(0.1, 1201);
        let seed = seed_field(&problem, &default_seed(&problem, 0.0), base_profile()).unwrap();
        let result = minimize_nehari(&problem, &seed.field, &DescentOptions::default()).unwrap();
        let n = problem.mesh.node_count();
        let mut asym = 0.0f64;
        for i in 0..n {
            asym = asym.max((result.field.values[i] - result.field.values[n - 1 - i]).abs());
        }
        assert!(asym < 1e-10 * result.peak_value, "asymmetry {asym}");
    }

    #[test]
    fn pinned_and_symmetric_routes_agree() {
        let problem = problem(0.1, 1201);
        let profile = base_profile();
        let constants = EnergyConstants::from_base_profile(profile).unwrap();
        let seed = seed_field(&problem, &default_seed(&problem, 0.0), profile).unwrap();
        let symmetric =
            minimize_nehari(&problem, &seed.field, &DescentOptions::default()).unwrap();
        let pinned = solve_pinned(
            &problem,
            &constants,
            &seed.field,
            &PinnedSolveSpec {
                target: [0.0, 0.0, 0.0],
                schedule: &DEFAULT_PIN_SCHEDULE,
                drift_radius: 0.15,
            },
            &DescentOptions::default(),
        )
        .unwrap();
        let ja = symmetric.diagnostics.value;
        let jb = pinned.diagnostics.value;
        assert!((ja - jb).abs() / ja.abs() < 1e-6, "symmetric {ja} vs pinned {jb}");
    }

    #[test]
    fn unpinned_flow_from_boundary_seed_escapes() {
        let problem = problem(0.1, 1201);
        let profile = base_profile();
        let constants = EnergyConstants::from_base_profile(profile).unwrap();
        let seed = seed_field(&problem, &default_seed(&problem, 0.68), profile).unwrap();
        let outcome = solve_pinned(
            &problem,
            &constants,
            &seed.field,
            &PinnedSolveSpec { target: [0.0, 0.0, 0.0], schedule: &[0.0], drift_radius: 0.15 },
            &DescentOptions::default(),
        );
        assert!(matches!(outcome, Err(SolveError::PinEscape { .. })), "{outcome:?}");
    }

    #[test]
    fn inset_width_obeys_both_limits() {
        let rho = 0.15;
        let mut prev_ratio = 0.0;
        for &eps in &[0.2, 0.1, 0.05, 0.01, 0.001] {
            let w = inset_width(eps, rho);
            assert!(w < inset_width(2.0 * eps, rho));
            let ratio = w / eps;
            assert!(ratio > prev_ratio, "dist/eps must diverge");
            prev_ratio = ratio;
        }
    }

    #[test]
    fn path_levels_order_correctly() {
        let problem = problem(0.05, 2401);
        let profile = base_profile();
        let (_, dist) = region_boundary_distances(&problem);
        let (boundary, interior) = inset_samples(&problem, &dist, 60);
        assert!(!boundary.is_empty() && !interior.is_empty());
        let template = default_seed(&problem, 0.0);
        let levels =
            test_path_levels(&problem, profile, &template, &boundary, &interior).unwrap();
        assert!(levels.interior_level >= levels.boundary_level);
        assert!(levels.interior_level > levels.boundary_level, "strict gap expected");
    }
}
