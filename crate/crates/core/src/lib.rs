//! Constructive solver for nonlocal and fractional Cahn–Hilliard systems.
//!
//! The crate discretizes a bounded box `Ω ⊂ ℝ^d` (`d ≤ 2`) with midpoint
//! quadrature, assembles pairwise interaction weights for a family of
//! singular kernels, and advances the phase field by minimizing movements:
//! every time step minimizes
//!
//! ```text
//! (1/2τ)‖u − u_prev‖²_{𝔏⁻¹} + 𝔉(u) + ∫ Γ_λ(u) + Π(u)
//! ```
//!
//! with a forward–backward (proximal gradient) inner solver whose proximal
//! step is the Moreau–Yosida resolvent of the convex part `Γ` of the
//! potential. The [`diagnostics`] module checks the discrete shadows of the
//! continuum estimates (energy inequality, mass conservation, Poincaré
//! constants, local limit `s → 1`, fractional Neumann extension).

pub mod config;
pub mod diagnostics;
mod error;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod operators;
pub mod potentials;
pub mod quadrature;
pub mod scheme;

pub use error::{Error, Result};
pub use grid::{Grid, Point};
pub use kernels::{KernelFamily, KernelMatrix, KernelSpec, Mode};
pub use operators::{OperatorKind, OperatorL, PhiSpec};
pub use potentials::{ConvexPart, PiPart, Potential, RegularizedPotential, Subdiff};
pub use scheme::{InnerSettings, MassMode, Scheme, SchemeConfig, Trajectory};

/// Nodal values of a scalar field, ordered like [`Grid::nodes`].
pub type Field = nalgebra::DVector<f64>;

/// Functionals acting on fields, stored as their values on the nodal basis
/// (a field `u` is mapped to the dual vector `M u` by the quadrature weights).
pub type Dual = nalgebra::DVector<f64>;
