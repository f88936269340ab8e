//! Heat conducted by clusters of small Dirichlet cavities.
//!
//! The crate computes the exterior heat field generated by a point heat source
//! in the presence of many small cavities, three ways:
//!
//! * [`foldy_lax`]: each cavity is replaced by a point carrying its Newtonian
//!   capacitance ([`laplace_bem`]) and the interaction densities solve a coupled
//!   Volterra system;
//! * [`heat_bem_reference`]: a full space-time boundary-integral solve used as
//!   a brute-force oracle;
//! * [`effective_medium`]: a volume integral equation with a constant
//!   absorption coefficient on the domain hosting the cluster, together with
//!   the effective conductivity obtained from a modified Helmholtz problem.
//!
//! [`experiments`] ties these together behind JSON configurations and rate
//! studies.

pub mod effective_medium;
pub mod error;
pub mod experiments;
pub mod foldy_lax;
pub mod geometry;
pub mod heat_bem_reference;
pub mod heat_kernel;
pub mod laplace_bem;
pub mod quadrature;

pub use error::{Error, Result};

/// Points and vectors in physical space.
pub type Vec3 = nalgebra::Vector3<f64>;
