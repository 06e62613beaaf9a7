//! Lattice Yang–Mills replacement toolkit.
//!
//! Connections live on 4D cubical lattices as one structure-group element per
//! edge ([`fields::LinkField`]). On top of that representation the crate
//! provides the cochain calculus (coboundary, codifferential, Hodge
//! decomposition with normal or tangential boundary conditions), Coulomb gauge
//! fixing with three boundary treatments, Dirichlet Yang–Mills solves on
//! axis-aligned balls, and the ball-replacement sweep with its energy
//! diagnostics.
//!
//! Supported structure groups are U(1) and SU(2) ([`group`]).

pub mod error;
pub mod fields;
pub mod gauge;
pub mod grid;
pub mod group;
pub mod io;
pub mod linalg;
pub mod reduce;
pub mod replace;
pub mod solver;

pub use error::{Error, Result};
pub use fields::{BoundaryCondition, Cochain, FormSpace, LinkField};
pub use gauge::{GaugeFixReport, VertexGaugeField};
pub use grid::{BallRegion, CellClass, LatticeComplex, Topology};
pub use group::{Algebra, Group, GroupKind, Su2, Su2Alg, U1Alg, U1};
