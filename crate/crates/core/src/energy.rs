//! The penalized nonlinearity, its primitive, the energy functional, its
//! discrete gradient, and the Nehari-manifold machinery.

use crate::domain::{dirichlet_energy_of, Field, Mesh, PotentialSpec, RegionSpec};
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("degenerate direction: u_+ restricted to the region vanishes")]
    DegenerateDirection,
    #[error("Nehari bracket failure: no sign change up to t = {0:.3e}")]
    BracketFailure(f64),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

/// A fully sampled penalized problem on one mesh at one `eps`.
#[derive(Debug, Clone)]
pub struct PenalizedProblem {
    pub mesh: Arc<Mesh>,
    pub potential: PotentialSpec,
    pub region: RegionSpec,
    pub eps: f64,
    pub p: f64,
    /// `V` at the nodes.
    pub v_values: Vec<f64>,
    /// `H` at the nodes.
    pub h_values: Vec<f64>,
    /// Sharp indicator of Λ at the nodes.
    pub in_region: Vec<bool>,
    /// Per-node quadrature weights.
    pub weights: Vec<f64>,
    /// Linear coefficient `mu (eps^2 H + V)` outside Λ.
    pub linear_cap: Vec<f64>,
    /// Threshold amplitude `cap^{1/(p-1)}` where the truncation kicks in.
    pub threshold: Vec<f64>,
}

impl PenalizedProblem {
    pub fn new(
        mesh: Arc<Mesh>,
        potential: PotentialSpec,
        region: RegionSpec,
        p: f64,
        eps: f64,
    ) -> Result<Self, EnergyError> {
        if !(eps > 0.0) {
            return Err(EnergyError::InvalidProblem(format!("eps = {eps} must be positive")));
        }
        let n = mesh.dim as f64;
        if 1.0 / p <= (n - 2.0) / (n + 2.0) {
            return Err(EnergyError::InvalidProblem(format!(
                "p = {p} violates subcriticality for N = {}",
                mesh.dim
            )));
        }
        let h_values = crate::domain::penalization_potential(&region, &potential, &mesh)
            .map_err(|e| EnergyError::InvalidProblem(e.to_string()))?;
        let v_values = mesh.sample(|pt| potential.eval(pt));
        if let Some(idx) = v_values.iter().position(|v| !(*v >= 0.0)) {
            return Err(EnergyError::InvalidProblem(format!(
                "potential is negative or non-finite at node {:?}",
                mesh.point(idx)
            )));
        }
        let in_region: Vec<bool> =
            (0..mesh.node_count()).map(|i| region.contains(&potential, &mesh.point(i))).collect();
        let weights: Vec<f64> = (0..mesh.node_count()).map(|i| mesh.weight(i)).collect();
        let mu = region.mu;
        let linear_cap: Vec<f64> = v_values
            .iter()
            .zip(&h_values)
            .map(|(&v, &h)| mu * (eps * eps * h + v))
            .collect();
        let threshold: Vec<f64> = linear_cap.iter().map(|&c| c.powf(1.0 / (p - 1.0))).collect();
        Ok(Self {
            mesh,
            potential,
            region,
            eps,
            p,
            v_values,
            h_values,
            in_region,
            weights,
            linear_cap,
            threshold,
        })
    }

    pub fn field_from_fn(&self, f: impl Fn(&crate::domain::Point) -> f64) -> Field {
        Field::from_fn(Arc::clone(&self.mesh), f)
    }

    /// The penalized nonlinearity at node `idx`:
    /// `χ_Λ s_+^p + (1-χ_Λ) min(mu(eps^2 H + V), |s|^{p-1}) s_+`.
    #[inline]
    pub fn g_at(&self, idx: usize, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if self.in_region[idx] || s <= self.threshold[idx] {
            s.powf(self.p)
        } else {
            self.linear_cap[idx] * s
        }
    }

    /// Closed-form primitive `G(x, s) = ∫_0^s g(x, σ) dσ`, split at the
    /// threshold amplitude outside Λ.
    #[inline]
    pub fn g_primitive_at(&self, idx: usize, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let p1 = self.p + 1.0;
        if self.in_region[idx] || s <= self.threshold[idx] {
            s.powf(p1) / p1
        } else {
            let a = self.threshold[idx];
            a.powf(p1) / p1 + self.linear_cap[idx] * (s * s - a * a) / 2.0
        }
    }

    /// The squared weighted norm `∫ (eps^2 |∇u|^2 + V |u|^2)`.
    pub fn norm_sq(&self, u: &Field) -> f64 {
        let grad = dirichlet_energy_of(&self.mesh, &u.values);
        let mass: f64 = u
            .values
            .iter()
            .zip(&self.v_values)
            .zip(&self.weights)
            .map(|((&v, &vv), &w)| w * vv * v * v)
            .sum();
        self.eps * self.eps * grad + mass
    }

    /// `J(u) = 1/2 ∫ (eps^2 |∇u|^2 + V u^2) - ∫ G(x, u)`.
    pub fn functional(&self, u: &Field) -> f64 {
        let mut nonlinear = 0.0;
        for (idx, &v) in u.values.iter().enumerate() {
            if v > 0.0 {
                nonlinear += self.weights[idx] * self.g_primitive_at(idx, v);
            }
        }
        0.5 * self.norm_sq(u) - nonlinear
    }

    /// Node-wise residual `-eps^2 Δ_h u + V u - g(x, u)` with the standard
    /// (2N+1)-point stencil; zero on the Dirichlet boundary. Paired against
    /// directions through the quadrature weights, it reproduces the
    /// directional derivative of `functional` exactly.
    pub fn gradient(&self, u: &Field) -> Field {
        let mesh = &self.mesh;
        let m = mesh.points_per_axis;
        let h2 = mesh.spacing * mesh.spacing;
        let e2 = self.eps * self.eps;
        let mut out = vec![0.0; u.values.len()];
        for (idx, slot) in out.iter_mut().enumerate() {
            let ids = mesh.decompose(idx);
            let mut boundary = false;
            let mut lap = 0.0;
            for d in 0..mesh.dim {
                if ids[d] == 0 || ids[d] == m - 1 {
                    boundary = true;
                    break;
                }
                let stride = mesh.stride(d);
                lap += u.values[idx + stride] + u.values[idx - stride] - 2.0 * u.values[idx];
            }
            if boundary {
                continue;
            }
            let v = u.values[idx];
            *slot = -e2 * lap / h2 + self.v_values[idx] * v - self.g_at(idx, v);
        }
        Field { mesh: Arc::clone(mesh), values: out }
    }

    /// Weighted pairing `⟨a, b⟩ = Σ w_i a_i b_i` realizing the duality
    /// product between gradients and directions.
    pub fn pair(&self, a: &Field, b: &Field) -> f64 {
        a.values.iter().zip(&b.values).zip(&self.weights).map(|((&x, &y), &w)| w * x * y).sum()
    }

    /// Weighted L2 norm of a gradient field.
    pub fn gradient_norm(&self, g: &Field) -> f64 {
        self.pair(g, g).sqrt()
    }

    /// `φ(t) = ⟨J'(tu), tu⟩ = t^2 |u|^2 - ∫ g(x, tu) tu`.
    pub fn nehari_value(&self, t: f64, u: &Field, norm_sq: f64) -> f64 {
        let mut sum = 0.0;
        for (idx, &v) in u.values.iter().enumerate() {
            if v > 0.0 {
                let tv = t * v;
                sum += self.weights[idx] * self.g_at(idx, tv) * tv;
            }
        }
        t * t * norm_sq - sum
    }

    /// Project a field onto the Nehari manifold: bracket the unique zero of
    /// `φ` by doubling/halving from `t = 1`, then bisect to relative width
    /// 1e-12.
    pub fn nehari_project(&self, u: &Field) -> Result<(f64, Field), EnergyError> {
        let positive_on_region = u
            .values
            .iter()
            .zip(&self.in_region)
            .any(|(&v, &inside)| inside && v > 0.0);
        if !positive_on_region {
            return Err(EnergyError::DegenerateDirection);
        }
        let norm_sq = self.norm_sq(u);
        let mut lo;
        let mut hi;
        if self.nehari_value(1.0, u, norm_sq) > 0.0 {
            lo = 1.0;
            hi = 2.0;
            while self.nehari_value(hi, u, norm_sq) > 0.0 {
                lo = hi;
                hi *= 2.0;
                if hi > 1e8 {
                    return Err(EnergyError::BracketFailure(hi));
                }
            }
        } else {
            hi = 1.0;
            lo = 0.5;
            while self.nehari_value(lo, u, norm_sq) <= 0.0 {
                hi = lo;
                lo *= 0.5;
                if lo < 1e-16 {
                    return Err(EnergyError::BracketFailure(lo));
                }
            }
        }
        while hi - lo > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if self.nehari_value(mid, u, norm_sq) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        Ok((t, u.scale(t)))
    }

    /// Relative Nehari residual `⟨J'(u), u⟩ / |u|^2`.
    pub fn nehari_residual(&self, u: &Field) -> f64 {
        let n2 = self.norm_sq(u);
        self.nehari_value(1.0, u, n2) / n2.max(f64::MIN_POSITIVE)
    }

    /// Energy restricted to Λ: `∫_Λ (eps^2 |∇u|^2 + V u^2)`, counting links
    /// whose lower node lies in Λ.
    pub fn region_energy(&self, u: &Field) -> f64 {
        let grad =
            crate::domain::dirichlet_energy_masked(&self.mesh, &u.values, &self.in_region);
        let mass: f64 = u
            .values
            .iter()
            .zip(&self.v_values)
            .zip(&self.weights)
            .zip(&self.in_region)
            .filter(|(_, &inside)| inside)
            .map(|(((&v, &vv), &w), _)| w * vv * v * v)
            .sum();
        self.eps * self.eps * grad + mass
    }

    pub fn diagnostics(&self, u: &Field) -> NehariDiagnostics {
        let value = self.functional(u);
        let nehari_residual = self.nehari_residual(u);
        let g = self.gradient(u);
        NehariDiagnostics { value, nehari_residual, gradient_norm: self.gradient_norm(&g) }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NehariDiagnostics {
    pub value: f64,
    pub nehari_residual: f64,
    pub gradient_norm: f64,
}

/// Result of the three manifold lower-bound checks.
#[derive(Debug, Clone, Serialize)]
pub struct NehariBounds {
    /// Residual gate: the checks only apply on the manifold.
    pub on_manifold: bool,
    pub nehari_residual: f64,
    /// (a) `∫_Λ u_+^{p+1} >= (1 - mu) |u|_eps^2`
    pub region_power: f64,
    pub coercive_floor: f64,
    pub power_bound_holds: bool,
    /// (b) region energy rescaled by `eps^{-N}`, to compare across a sweep.
    pub rescaled_region_energy: f64,
    /// (c) `sup_Λ u_+^{p-1} / V >= 1`
    pub peak_quotient: f64,
    pub peak_bound_holds: bool,
}

/// Evaluate the manifold estimates for a field; when the field sits off the
/// manifold beyond `residual_tol` the checks are skipped and reported as such.
pub fn nehari_lower_bounds(
    problem: &PenalizedProblem,
    u: &Field,
    residual_tol: f64,
) -> NehariBounds {
    let residual = problem.nehari_residual(u);
    let on_manifold = residual.abs() <= residual_tol;
    let mut region_power = 0.0;
    let mut peak_quotient = f64::NEG_INFINITY;
    for (idx, &v) in u.values.iter().enumerate() {
        if problem.in_region[idx] {
            let vp = v.max(0.0);
            region_power += problem.weights[idx] * vp.powf(problem.p + 1.0);
            let q = vp.powf(problem.p - 1.0) / problem.v_values[idx];
            peak_quotient = peak_quotient.max(q);
        }
    }
    let norm_sq = problem.norm_sq(u);
    let coercive_floor = (1.0 - problem.region.mu) * norm_sq;
    let n = problem.mesh.dim as i32;
    NehariBounds {
        on_manifold,
        nehari_residual: residual,
        region_power,
        coercive_floor,
        power_bound_holds: !on_manifold || region_power >= coercive_floor * (1.0 - 1e-9),
        rescaled_region_energy: problem.region_energy(u) / problem.eps.powi(n),
        peak_quotient,
        peak_bound_holds: !on_manifold || peak_quotient >= 1.0 - 1e-6,
    }
}


#[cfg(test)]
mod property_tests {
    use super::tests::problem_1d;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        /// The closed-form primitive agrees with midpoint quadrature of g.
        #[test]
        fn primitive_is_the_integral_of_g(node_frac in 0.0f64..1.0, s in 0.0f64..3.0) {
            let problem = problem_1d(0.1);
            let idx = ((problem.mesh.node_count() - 1) as f64 * node_frac) as usize;
            let steps = 4000;
            let mut acc = 0.0;
            for k in 0..steps {
                let sigma = s * (k as f64 + 0.5) / steps as f64;
                acc += problem.g_at(idx, sigma) * s / steps as f64;
            }
            let closed = problem.g_primitive_at(idx, s);
            prop_assert!((acc - closed).abs() < 1e-5 * closed.abs().max(1e-8));
        }

        /// Scaling the Nehari projection input does not move the projected field.
        #[test]
        fn projection_is_scale_invariant(scale in 0.2f64..5.0) {
            let problem = problem_1d(0.1);
            let u = problem.field_from_fn(|p| {
                let d = p[0].abs();
                if d < 0.5 { (0.25 - d * d).powi(2) } else { 0.0 }
            });
            let (_, proj_a) = problem.nehari_project(&u).unwrap();
            let (_, proj_b) = problem.nehari_project(&u.scale(scale)).unwrap();
            let diff: f64 = proj_a
                .values
                .iter()
                .zip(&proj_b.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            prop_assert!(diff < 1e-9);
        }
    }
}
