//! Tensor grids on `[-L, L]^N` with trapezoid quadrature and homogeneous
//! Dirichlet boundary convention, plus the grid functions living on them.

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Points are padded to three components; trailing entries are zero for
/// dimensions below three.
pub type Point = [f64; 3];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh dimension {0} not in 1..=3")]
    BadDimension(usize),
    #[error("mesh needs at least 16 points per axis, got {0}")]
    TooCoarse(usize),
    #[error("mesh half-width must be positive, got {0}")]
    BadHalfWidth(f64),
    #[error("field has {actual} values but the mesh has {expected} nodes")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("field carries non-finite values")]
    NonFinite,
    #[error("field violates the Dirichlet boundary convention")]
    BoundaryNotZero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mesh {
    pub dim: usize,
    pub half_width: f64,
    pub points_per_axis: usize,
    pub spacing: f64,
    /// 1D trapezoid weights, shared per axis.
    axis_weights: Vec<f64>,
}

impl Mesh {
    pub fn new(dim: usize, half_width: f64, points_per_axis: usize) -> Result<Self, MeshError> {
        if !(1..=3).contains(&dim) {
            return Err(MeshError::BadDimension(dim));
        }
        if points_per_axis < 16 {
            return Err(MeshError::TooCoarse(points_per_axis));
        }
        if !(half_width > 0.0) {
            return Err(MeshError::BadHalfWidth(half_width));
        }
        let spacing = 2.0 * half_width / (points_per_axis - 1) as f64;
        let mut axis_weights = vec![spacing; points_per_axis];
        axis_weights[0] *= 0.5;
        axis_weights[points_per_axis - 1] *= 0.5;
        Ok(Self { dim, half_width, points_per_axis, spacing, axis_weights })
    }

    pub fn node_count(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    /// Strides of the flat index layout `idx = i0 + M (i1 + M i2)`.
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow(axis as u32)
    }

    pub fn axis_coordinate(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }

    #[inline]
    pub fn decompose(&self, idx: usize) -> [usize; 3] {
        let m = self.points_per_axis;
        let mut out = [0usize; 3];
        let mut rest = idx;
        for slot in out.iter_mut().take(self.dim) {
            *slot = rest % m;
            rest /= m;
        }
        out
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let ids = self.decompose(idx);
        let mut pt = [0.0; 3];
        for d in 0..self.dim {
            pt[d] = self.axis_coordinate(ids[d]);
        }
        pt
    }

    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        let ids = self.decompose(idx);
        (0..self.dim).any(|d| ids[d] == 0 || ids[d] == self.points_per_axis - 1)
    }

    /// Trapezoid quadrature weight of a node (tensor product).
    #[inline]
    pub fn weight(&self, idx: usize) -> f64 {
        let ids = self.decompose(idx);
        let mut w = 1.0;
        for d in 0..self.dim {
            w *= self.axis_weights[ids[d]];
        }
        w
    }

    /// Sample a scalar function on every node.
    pub fn sample(&self, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        (0..self.node_count()).map(|i| f(&self.point(i))).collect()
    }

    pub fn integrate(&self, node_values: &[f64]) -> f64 {
        node_values.iter().enumerate().map(|(i, v)| self.weight(i) * v).sum()
    }

    /// Multilinear interpolation of node values at an arbitrary point;
    /// zero outside the box.
    pub fn interpolate(&self, values: &[f64], pt: &Point) -> f64 {
        let m = self.points_per_axis;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for d in 0..self.dim {
            let t = (pt[d] + self.half_width) / self.spacing;
            if t < 0.0 || t > (m - 1) as f64 {
                return 0.0;
            }
            let i = (t.floor() as usize).min(m - 2);
            base[d] = i;
            frac[d] = t - i as f64;
        }
        let corners = 1usize << self.dim;
        let mut acc = 0.0;
        for corner in 0..corners {
            let mut idx = 0usize;
            let mut w = 1.0;
            for d in (0..self.dim).rev() {
                let hi = (corner >> d) & 1;
                idx = idx * m + base[d] + hi;
                w *= if hi == 1 { frac[d] } else { 1.0 - frac[d] };
            }
            // idx was accumulated in reverse axis order; rebuild flat index
            let mut flat = 0usize;
            let mut tmp = idx;
            let mut ids = [0usize; 3];
            for slot in ids.iter_mut().take(self.dim) {
                *slot = tmp % m;
                tmp /= m;
            }
            for d in (0..self.dim).rev() {
                flat = flat * m + ids[d];
            }
            acc += w * values[flat];
        }
        acc
    }
}

/// A real grid function with Dirichlet truncation.
#[derive(Debug, Clone)]
pub struct Field {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.node_count();
        Self { mesh, values: vec![0.0; n] }
    }

    /// Sample a function and clamp the boundary to zero.
    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(&Point) -> f64) -> Self {
        let mut values = mesh.sample(f);
        for (i, v) in values.iter_mut().enumerate() {
            if mesh.is_boundary(i) {
                *v = 0.0;
            }
        }
        Self { mesh, values }
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        if self.values.len() != self.mesh.node_count() {
            return Err(MeshError::LengthMismatch {
                expected: self.mesh.node_count(),
                actual: self.values.len(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(MeshError::NonFinite);
        }
        for (i, &v) in self.values.iter().enumerate() {
            if v != 0.0 && self.mesh.is_boundary(i) {
                return Err(MeshError::BoundaryNotZero);
            }
        }
        Ok(())
    }

    /// `∫ |∇u|^2` with the forward-difference gradient; per-link weight is
    /// the spacing times the transverse trapezoid weights, which makes the
    /// discrete functional and its gradient exactly consistent.
    pub fn dirichlet_energy(&self) -> f64 {
        dirichlet_energy_of(&self.mesh, &self.values)
    }

    pub fn scale(&self, t: f64) -> Field {
        Field { mesh: Arc::clone(&self.mesh), values: self.values.iter().map(|v| t * v).collect() }
    }
}

pub fn dirichlet_energy_of(mesh: &Mesh, values: &[f64]) -> f64 {
    let m = mesh.points_per_axis;
    let h = mesh.spacing;
    let mut total = 0.0;
    for axis in 0..mesh.dim {
        let stride = mesh.stride(axis);
        for (idx, &v) in values.iter().enumerate() {
            let ids = mesh.decompose(idx);
            if ids[axis] + 1 >= m {
                continue;
            }
            let diff = (values[idx + stride] - v) / h;
            let mut w = h;
            for d in 0..mesh.dim {
                if d != axis {
                    w *= mesh.axis_weights[ids[d]];
                }
            }
            total += diff * diff * w;
        }
    }
    total
}

/// Link-resolved Dirichlet energy restricted to links whose lower node
/// satisfies a mask; used for localized energies.
pub fn dirichlet_energy_masked(mesh: &Mesh, values: &[f64], mask: &[bool]) -> f64 {
    let m = mesh.points_per_axis;
    let h = mesh.spacing;
    let mut total = 0.0;
    for axis in 0..mesh.dim {
        let stride = mesh.stride(axis);
        for (idx, &v) in values.iter().enumerate() {
            if !mask[idx] {
                continue;
            }
            let ids = mesh.decompose(idx);
            if ids[axis] + 1 >= m {
                continue;
            }
            let diff = (values[idx + stride] - v) / h;
            let mut w = h;
            for d in 0..mesh.dim {
                if d != axis {
                    w *= mesh.axis_weights[ids[d]];
                }
            }
            total += diff * diff * w;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_integrates_constants_exactly() {
        for dim in 1..=3 {
            let mesh = Mesh::new(dim, 1.5, 17).unwrap();
            let ones = vec![1.0; mesh.node_count()];
            let exact = (2.0 * 1.5f64).powi(dim as i32);
            assert!((mesh.integrate(&ones) - exact).abs() < 1e-12 * exact);
        }
    }

    #[test]
    fn boundary_detection() {
        let mesh = Mesh::new(2, 1.0, 16).unwrap();
        assert!(mesh.is_boundary(0));
        assert!(mesh.is_boundary(15));
        let interior = 1 + 16; // (1,1)
        assert!(!mesh.is_boundary(interior));
    }

    #[test]
    fn field_validation_catches_boundary_violation() {
        let mesh = Arc::new(Mesh::new(1, 1.0, 16).unwrap());
        let mut f = Field::zeros(Arc::clone(&mesh));
        f.values[0] = 1.0;
        assert!(matches!(f.validate(), Err(MeshError::BoundaryNotZero)));
        f.values[0] = 0.0;
        f.values[3] = f64::NAN;
        assert!(matches!(f.validate(), Err(MeshError::NonFinite)));
    }

    #[test]
    fn dirichlet_energy_of_linear_hat() {
        // 1D hat function peaking at the midpoint: energy = 2 * peak^2 / L.
        let mesh = Arc::new(Mesh::new(1, 1.0, 101).unwrap());
        let f = Field::from_fn(Arc::clone(&mesh), |p| 1.0 - p[0].abs());
        let energy = f.dirichlet_energy();
        assert!((energy - 2.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_reproduces_multilinear_functions() {
        let mesh = Mesh::new(2, 1.0, 21).unwrap();
        let vals = mesh.sample(|p| 2.0 + 0.5 * p[0] - 0.25 * p[1] + p[0] * p[1]);
        for pt in [[0.13, -0.41, 0.0], [0.999, 0.999, 0.0], [-0.5, 0.25, 0.0]] {
            let got = mesh.interpolate(&vals, &pt);
            let want = 2.0 + 0.5 * pt[0] - 0.25 * pt[1] + pt[0] * pt[1];
            assert!((got - want).abs() < 1e-10, "at {pt:?}: {got} vs {want}");
        }
        assert_eq!(mesh.interpolate(&vals, &[5.0, 0.0, 0.0]), 0.0);
    }
}
