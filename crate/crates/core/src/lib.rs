//! Stationary linearized Boltzmann transport with diffuse reflection
//! boundary conditions on strictly convex domains.
//!
//! The library is organized around the damped integral form of the
//! transport equation: the distribution `f(x, ζ)` is reconstructed by
//! tracing characteristics back to the boundary, where the diffuse
//! reflection condition couples `f` to the wall flux `ψ`.  Modules:
//!
//! - [`collision`]: Maxwellian, collision frequency, the hard-sphere
//!   gain/loss kernel and the integral operator `K`.
//! - [`geometry`]: implicit-surface convex domains, exit rays, boundary
//!   meshes, surface geodesics, and the geometric inequality checks.
//! - [`grid`]: truncated velocity-space quadrature (spherical product
//!   rule) with half-space rules for boundary moments.
//! - [`flux`]: wall-flux decomposition into temperature, re-emission and
//!   collision-source parts, in both velocity and surface/volume forms.
//! - [`transport`]: Picard iteration of the integral equation, the
//!   scattering-order decomposition, and the mixing source field.
//! - [`probe`]: finite-difference derivative and modulus-of-continuity
//!   sweeps against the expected blow-up laws.

pub mod collision;
pub mod error;
pub mod flux;
pub mod geometry;
pub mod grid;
pub mod interp;
pub mod probe;
pub mod quadrature;
pub mod transport;
pub mod vec3;

pub use error::{Error, Result};
pub use vec3::Vec3;
