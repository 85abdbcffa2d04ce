//! Computational domain: meshes, grid functions, potentials, regions, and
//! the penalization potential.

pub mod mesh;
pub mod potential;
pub mod region;

pub use mesh::{dirichlet_energy_masked, dirichlet_energy_of, Field, Mesh, MeshError, Point};
pub use potential::{DecayClass, PotentialError, PotentialSpec};
pub use region::{
    hardy_form, penalization_potential, validate_hypotheses, HypothesisCheck, HypothesisReport,
    PenalizationMode, RegionError, RegionShape, RegionSpec,
};
