//! The concentration region Λ, the penalization potential active outside it,
//! and the hypothesis checks for the concentration setup.

use super::mesh::{dirichlet_energy_of, Field, Mesh, Point};
use super::potential::{DecayClass, PotentialSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("penalization mode/dimension mismatch: {0}")]
    ModeDimensionMismatch(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
}

/// Geometric description of Λ.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionShape {
    /// `{ V > threshold }`
    LevelSet { threshold: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenalizationMode {
    /// Hardy-type potential, needs `N >= 3`.
    HighDim,
    /// Power-type potential for `N <= 2` slow-decay problems.
    LowDim,
}

/// Λ with its penalization parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionSpec {
    pub shape: RegionShape,
    /// Interior anchor of the penalization potential.
    pub anchor: Vec<f64>,
    /// Radius of a ball around the anchor contained in Λ.
    pub rho: f64,
    /// Logarithmic scale radius in `(0, rho)`.
    pub rho0: f64,
    /// Penalization exponent `beta > 0`.
    pub beta_pen: f64,
    /// Truncation weight in `(0, 1)`.
    pub mu: f64,
    pub mode: PenalizationMode,
}

fn pad(v: &[f64]) -> Point {
    let mut p = [0.0; 3];
    for (d, &c) in v.iter().enumerate().take(3) {
        p[d] = c;
    }
    p
}

fn dist(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

impl RegionSpec {
    pub fn validate_parameters(&self) -> Result<(), RegionError> {
        if !(self.rho > 0.0) {
            return Err(RegionError::InvalidRegion("rho must be positive".into()));
        }
        if !(self.rho0 > 0.0 && self.rho0 < self.rho) {
            return Err(RegionError::InvalidRegion("rho0 must lie in (0, rho)".into()));
        }
        if !(self.beta_pen > 0.0) {
            return Err(RegionError::InvalidRegion("beta_pen must be positive".into()));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(RegionError::InvalidRegion("mu must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Membership predicate for Λ. A node is inside iff the indicator holds
    /// at the node center; the characteristic function is kept sharp.
    pub fn contains(&self, potential: &PotentialSpec, pt: &Point) -> bool {
        match &self.shape {
            RegionShape::LevelSet { threshold } => potential.eval(pt) > *threshold,
            RegionShape::Ball { center, radius } => dist(pt, &pad(center)) < *radius,
            RegionShape::Annulus { center, inner, outer } => {
                let d = dist(pt, &pad(center));
                d > *inner && d < *outer
            }
        }
    }

    pub fn anchor_point(&self) -> Point {
        pad(&self.anchor)
    }

    /// Radius of the smallest anchor-centered ball covering the sampled Λ.
    pub fn circumradius(&self, potential: &PotentialSpec, mesh: &Mesh) -> f64 {
        let anchor = self.anchor_point();
        let mut r = 0.0f64;
        for idx in 0..mesh.node_count() {
            let pt = mesh.point(idx);
            if self.contains(potential, &pt) {
                r = r.max(dist(&pt, &anchor));
            }
        }
        r
    }

    /// The penalization potential `H` at a point.
    ///
    /// High-dimensional mode:
    /// `H = (1-χ_Λ) (N-2)^2 / (4|x-x0|^2) (log(ρ/ρ0) / log(|x-x0|/ρ0))^{1+β}`.
    /// Low-dimensional mode: `H = (1-χ_Λ) / |x-x0|^{2+β}`.
    pub fn penalization_at(&self, potential: &PotentialSpec, dim: usize, pt: &Point) -> f64 {
        if self.contains(potential, pt) {
            return 0.0;
        }
        let d = dist(pt, &self.anchor_point());
        match self.mode {
            PenalizationMode::HighDim => {
                let n2 = (dim as f64 - 2.0).powi(2);
                let log_ratio = (self.rho / self.rho0).ln() / (d / self.rho0).ln();
                n2 / (4.0 * d * d) * log_ratio.powf(1.0 + self.beta_pen)
            }
            PenalizationMode::LowDim => 1.0 / d.powf(2.0 + self.beta_pen),
        }
    }
}

/// Sample `H` on a mesh, enforcing the mode/dimension contract.
pub fn penalization_potential(
    region: &RegionSpec,
    potential: &PotentialSpec,
    mesh: &Mesh,
) -> Result<Vec<f64>, RegionError> {
    region.validate_parameters()?;
    match region.mode {
        PenalizationMode::HighDim if mesh.dim < 3 => {
            return Err(RegionError::ModeDimensionMismatch(format!(
                "high_dim penalization requires N >= 3, mesh has N = {}",
                mesh.dim
            )));
        }
        PenalizationMode::LowDim if mesh.dim > 2 => {
            return Err(RegionError::ModeDimensionMismatch(format!(
                "low_dim penalization requires N <= 2, mesh has N = {}",
                mesh.dim
            )));
        }
        PenalizationMode::LowDim if potential.decay_class != DecayClass::QuadraticSlow => {
            return Err(RegionError::ModeDimensionMismatch(
                "low_dim penalization requires a quadratically slow potential".into(),
            ));
        }
        _ => {}
    }
    Ok(mesh.sample(|pt| region.penalization_at(potential, mesh.dim, pt)))
}

/// The quadratic form `∫ (|∇u|^2 - H |u|^2)` behind the positivity principle.
pub fn hardy_form(u: &Field, h_values: &[f64], mesh: &Mesh) -> f64 {
    let grad = dirichlet_energy_of(mesh, &u.values);
    let mass: f64 = u
        .values
        .iter()
        .zip(h_values)
        .enumerate()
        .map(|(i, (&v, &h))| mesh.weight(i) * h * v * v)
        .sum();
    grad - mass
}

/// One line of the hypothesis report.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub satisfied: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub sup_v_in_region: f64,
    pub inf_v_in_region: f64,
    pub sup_v_boundary: f64,
    pub inf_v_boundary: f64,
    pub slow_decay_constant: f64,
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.satisfied)
    }
}

/// Boundary sample of Λ. For level sets the exact level value is used; for
/// geometric shapes the boundary is sampled parametrically.
fn boundary_values(region: &RegionSpec, potential: &PotentialSpec, mesh: &Mesh) -> Vec<f64> {
    match &region.shape {
        RegionShape::LevelSet { .. } => {
            // locate the level crossing on each indicator-flip edge by bisection
            let m = mesh.points_per_axis;
            let mut vals = Vec::new();
            for axis in 0..mesh.dim {
                let stride = mesh.stride(axis);
                for idx in 0..mesh.node_count() {
                    let ids = mesh.decompose(idx);
                    if ids[axis] + 1 >= m {
                        continue;
                    }
                    let mut a = mesh.point(idx);
                    let mut b = mesh.point(idx + stride);
                    let ina = region.contains(potential, &a);
                    let inb = region.contains(potential, &b);
                    if ina != inb {
                        for _ in 0..50 {
                            let mid =
                                [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0];
                            if region.contains(potential, &mid) == ina {
                                a = mid;
                            } else {
                                b = mid;
                            }
                        }
                        vals.push(potential.eval(&a));
                    }
                }
            }
            vals
        }
        RegionShape::Ball { center, radius } => sphere_sample(&pad(center), *radius, mesh.dim)
            .iter()
            .map(|p| potential.eval(p))
            .collect(),
        RegionShape::Annulus { center, inner, outer } => {
            let c = pad(center);
            let mut vals: Vec<f64> =
                sphere_sample(&c, *inner, mesh.dim).iter().map(|p| potential.eval(p)).collect();
            vals.extend(sphere_sample(&c, *outer, mesh.dim).iter().map(|p| potential.eval(p)));
            vals
        }
    }
}

fn sphere_sample(center: &Point, radius: f64, dim: usize) -> Vec<Point> {
    let mut pts = Vec::new();
    match dim {
        1 => {
            pts.push([center[0] - radius, 0.0, 0.0]);
            pts.push([center[0] + radius, 0.0, 0.0]);
        }
        2 => {
            let n = 256;
            for k in 0..n {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                pts.push([center[0] + radius * th.cos(), center[1] + radius * th.sin(), 0.0]);
            }
        }
        _ => {
            let n = 48;
            for i in 0..n {
                let phi = std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
                for j in 0..(2 * n) {
                    let th = std::f64::consts::PI * j as f64 / n as f64;
                    pts.push([
                        center[0] + radius * phi.sin() * th.cos(),
                        center[1] + radius * phi.sin() * th.sin(),
                        center[2] + radius * phi.cos(),
                    ]);
                }
            }
        }
    }
    pts
}

/// Sample the concentration hypotheses on Λ; violations are reported,
/// never fatal, so that deliberately failing configurations can be probed.
pub fn validate_hypotheses(
    potential: &PotentialSpec,
    region: &RegionSpec,
    p: f64,
    mesh: &Mesh,
) -> HypothesisReport {
    let mut sup_in = f64::NEG_INFINITY;
    let mut inf_in = f64::INFINITY;
    for idx in 0..mesh.node_count() {
        let pt = mesh.point(idx);
        if region.contains(potential, &pt) {
            let v = potential.eval(&pt);
            sup_in = sup_in.max(v);
            inf_in = inf_in.min(v);
        }
    }
    let bvals = boundary_values(region, potential, mesh);
    let (sup_b, inf_b) = bvals
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(s, i), &v| (s.max(v), i.min(v)));

    let mut checks = Vec::new();
    let mut push = |name: &str, ok: bool, detail: String| {
        checks.push(HypothesisCheck { name: name.to_string(), satisfied: ok, detail });
    };

    push(
        "region_nonempty",
        sup_in > f64::NEG_INFINITY,
        format!("sampled {} boundary points", bvals.len()),
    );
    push(
        "positive_infimum",
        inf_in > 0.0,
        format!("inf over sampled region = {inf_in:.6e}"),
    );
    push(
        "strict_interior_variation",
        sup_in > inf_in,
        format!("sup = {sup_in:.6e}, inf = {inf_in:.6e}"),
    );
    // level-line condition on the boundary, relative to the interior range
    let range = (sup_in - inf_in).max(f64::MIN_POSITIVE);
    let level_defect = (sup_b - inf_b) / range;
    push(
        "boundary_level_line",
        level_defect < 0.05,
        format!("boundary oscillation {:.3e} of the interior range", level_defect),
    );
    // gap condition with theta = (p+1)/(p-1) - N/2
    let theta = (p + 1.0) / (p - 1.0) - mesh.dim as f64 / 2.0;
    let sup_pow = sup_in.max(0.0).powf(theta);
    let inf_pow = inf_in.max(0.0).powf(theta);
    let (gap_ok, gap_detail) = if theta >= 0.0 {
        (sup_pow < 2.0 * inf_pow, format!("sup V^th = {sup_pow:.6e} vs 2 inf V^th = {:.6e}", 2.0 * inf_pow))
    } else {
        // theta < 0 flips the extrema
        (inf_pow < 2.0 * sup_pow, format!("sup V^th = {inf_pow:.6e} vs 2 inf V^th = {:.6e}", 2.0 * sup_pow))
    };
    push("concentration_gap", gap_ok, gap_detail);
    // anchored ball inside the region
    let anchor = region.anchor_point();
    let ball_ok = sphere_sample(&anchor, region.rho, mesh.dim)
        .iter()
        .all(|pt| region.contains(potential, pt));
    push("anchor_ball_inside", ball_ok, format!("B(x0, {}) subset of region", region.rho));
    // quadratic decay sampled on the box boundary when the class claims it
    let c_slow = potential.slow_decay_constant(mesh.half_width, 33);
    let slow_ok = match potential.decay_class {
        DecayClass::QuadraticSlow => c_slow > 0.0,
        _ => true,
    };
    push(
        "quadratic_slow_far_field",
        slow_ok,
        format!("inf V|x|^2 on box boundary = {c_slow:.6e}"),
    );

    HypothesisReport {
        sup_v_in_region: sup_in,
        inf_v_in_region: inf_in,
        sup_v_boundary: sup_b,
        inf_v_boundary: inf_b,
        slow_decay_constant: c_slow,
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn poly_region_1d() -> (PotentialSpec, RegionSpec, Mesh) {
        let v = PotentialSpec::builtin("inverse_poly4", 1).unwrap();
        let region = RegionSpec {
            shape: RegionShape::LevelSet { threshold: 0.8 },
            anchor: vec![0.0],
            rho: 0.15,
            rho0: 0.075,
            beta_pen: 1.0,
            mu: 0.4,
            mode: PenalizationMode::LowDim,
        };
        let mesh = Mesh::new(1, 6.0, 601).unwrap();
        (v, region, mesh)
    }

    #[test]
    fn penalization_vanishes_inside_region() {
        let (v, region, mesh) = poly_region_1d();
        let h = penalization_potential(&region, &v, &mesh).unwrap();
        for idx in 0..mesh.node_count() {
            let pt = mesh.point(idx);
            if region.contains(&v, &pt) {
                assert_eq!(h[idx], 0.0);
            } else {
                assert!(h[idx].is_finite() && h[idx] > 0.0);
            }
        }
    }

    #[test]
    fn high_dim_value_on_the_anchor_sphere() {
        // just outside Λ along a ray with |x-x0| = rho and rho0 = rho/2 the
        // log ratio is exactly 1, so H = (N-2)^2/(4 rho^2).
        let v = PotentialSpec::new(3, DecayClass::Fast, "test", |_: &Point| 0.0);
        let region = RegionSpec {
            shape: RegionShape::Ball { center: vec![0.0, 0.0, 0.0], radius: 0.9 },
            anchor: vec![0.0, 0.0, 0.0],
            rho: 0.4,
            rho0: 0.2,
            beta_pen: 1.0,
            mu: 0.5,
            mode: PenalizationMode::HighDim,
        };
        // V == 0 means the ball indicator decides membership; the point below
        // is outside the ball.
        let region_outside = RegionSpec {
            shape: RegionShape::Ball { center: vec![5.0, 5.0, 5.0], radius: 0.1 },
            ..region.clone()
        };
        let pt = [0.4, 0.0, 0.0];
        let h = region_outside.penalization_at(&v, 3, &pt);
        let expected = 1.0 / (4.0 * 0.4 * 0.4);
        assert!((h - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn high_dim_hardy_envelope() {
        let v = PotentialSpec::builtin("inverse_poly4", 3).unwrap();
        let region = RegionSpec {
            shape: RegionShape::LevelSet { threshold: 0.65 },
            anchor: vec![0.0, 0.0, 0.0],
            rho: 0.3,
            rho0: 0.15,
            beta_pen: 1.0,
            mu: 0.4,
            mode: PenalizationMode::HighDim,
        };
        let mesh = Mesh::new(3, 2.5, 33).unwrap();
        let h = penalization_potential(&region, &v, &mesh).unwrap();
        for idx in 0..mesh.node_count() {
            let pt = mesh.point(idx);
            let d2 = pt[0] * pt[0] + pt[1] * pt[1] + pt[2] * pt[2];
            if !region.contains(&v, &pt) && d2.sqrt() >= region.rho {
                let cap = 1.0 / (4.0 * d2);
                assert!(h[idx] <= cap * (1.0 + 1e-12), "H = {} above Hardy cap {}", h[idx], cap);
            }
        }
    }

    #[test]
    fn mode_dimension_mismatch_rejected() {
        let (v, mut region, mesh) = poly_region_1d();
        region.mode = PenalizationMode::HighDim;
        assert!(matches!(
            penalization_potential(&region, &v, &mesh),
            Err(RegionError::ModeDimensionMismatch(_))
        ));
        let v3 = PotentialSpec::builtin("inverse_poly4", 3).unwrap();
        let mesh3 = Mesh::new(3, 2.5, 17).unwrap();
        let mut region3 = region.clone();
        region3.mode = PenalizationMode::LowDim;
        assert!(penalization_potential(&region3, &v3, &mesh3).is_err());
    }

    #[test]
    fn hardy_form_edge_cases() {
        let (v, region, mesh) = poly_region_1d();
        let mesh = Arc::new(mesh);
        let h = penalization_potential(&region, &v, &mesh).unwrap();
        let zero = Field::zeros(Arc::clone(&mesh));
        assert_eq!(hardy_form(&zero, &h, &mesh), 0.0);
        // supported inside Λ: H vanishes there, form is the pure gradient term
        let bump = Field::from_fn(Arc::clone(&mesh), |p| {
            let d = p[0].abs();
            if d < 0.5 {
                (0.25 - d * d).powi(2)
            } else {
                0.0
            }
        });
        let form = hardy_form(&bump, &h, &mesh);
        assert!((form - bump.dirichlet_energy()).abs() < 1e-14);
        assert!(form >= 0.0);
    }

    #[test]
    fn hypotheses_pass_for_level_set_of_typical_potential() {
        let (v, region, mesh) = poly_region_1d();
        let report = validate_hypotheses(&v, &region, 3.0, &mesh);
        assert!(report.all_pass(), "{:#?}", report.checks);
        // staircase boundary carries O(h) geometric error
        let slack = 2.0 * mesh.spacing;
        assert!((report.inf_v_in_region - 0.8).abs() < slack);
        assert!((report.sup_v_boundary - 0.8).abs() < slack);
    }

    #[test]
    fn constant_potential_fails_strict_variation() {
        let v = PotentialSpec::new(1, DecayClass::Nondecaying, "const", |_: &Point| 1.0);
        let region = RegionSpec {
            shape: RegionShape::Ball { center: vec![0.0], radius: 0.5 },
            anchor: vec![0.0],
            rho: 0.2,
            rho0: 0.1,
            beta_pen: 1.0,
            mu: 0.5,
            mode: PenalizationMode::LowDim,
        };
        let mesh = Mesh::new(1, 2.0, 257).unwrap();
        let report = validate_hypotheses(&v, &region, 3.0, &mesh);
        let strict = report.checks.iter().find(|c| c.name == "strict_interior_variation").unwrap();
        assert!(!strict.satisfied);
    }

    #[test]
    fn two_well_gap_violation_is_flagged() {
        // two wells with value ratio beyond 2^{1/theta} break the gap condition
        let v = PotentialSpec::new(1, DecayClass::Nondecaying, "two wells", |p: &Point| {
            let a = (-(p[0] - 1.5) * (p[0] - 1.5) * 8.0).exp();
            let b = 0.2 * (-(p[0] + 1.5) * (p[0] + 1.5) * 8.0).exp();
            a + b + 1e-3
        });
        let region = RegionSpec {
            shape: RegionShape::LevelSet { threshold: 0.05 },
            anchor: vec![1.5],
            rho: 0.05,
            rho0: 0.025,
            beta_pen: 1.0,
            mu: 0.5,
            mode: PenalizationMode::LowDim,
        };
        let mesh = Mesh::new(1, 4.0, 1001).unwrap();
        let report = validate_hypotheses(&v, &region, 3.0, &mesh);
        let gap = report.checks.iter().find(|c| c.name == "concentration_gap").unwrap();
        assert!(!gap.satisfied, "{}", gap.detail);
    }
}
