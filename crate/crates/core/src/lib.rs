//! Reduced discontinuous Galerkin (RDG) spaces on tensor-product meshes.
//!
//! An order-`k` piecewise polynomial is reconstructed on every element from
//! the order-`m` Legendre moments of its 3-wide stencil (`k + 1 = 3(m + 1)`),
//! so the space carries `(k+1)^d / 3^d` unknowns per element while keeping
//! order `k + 1` accuracy. Convection-diffusion-reaction problems are
//! discretized with the local DG method on this space and advanced with a
//! three-stage, third-order IMEX Runge-Kutta scheme.

pub mod error;
pub mod ldg;
pub mod linalg;
pub mod mesh;
pub mod polynomials;
pub mod problems;
pub mod rdg;
pub mod study;
pub mod reconstruction;
pub mod timestepping;

pub use error::{Error, Result};
pub use ldg::{Boundary, PdeProblem, SemiDiscreteSystem};
pub use mesh::{ElementId, Point, Stencil, StencilKind, TensorMesh};
pub use rdg::{LocalPoly, RdgSpace, Side};
pub use reconstruction::{OrderPair, ReconstructionTable};
pub use timestepping::{advance, build_tableau, imex_step, ImexSystem, ImexTableau, LdgImex};
