//! Polysymplectic, almost 2-Kähler and self-dual structures.
//!
//! Module map:
//! - [`exterior`]: sparse exterior algebra with bitmask bases.
//! - [`polylinear`]: pointwise normal forms, compatibility, `ω_D`, deformations.
//! - [`patch`]: Hessian metrics, the structure on `TY ×_Y TY`, AD calculus.
//! - [`elliptic`]: the 3-manifold `X_{τ,t}` and mirror-pair recovery.
//! - [`fm`]: the fibre-integration transform between the two quotients.
//! - [`liealg`]: the operators `E^α_i`, `L_{αβ}` and their `sl(4)` algebra.
//! - [`derham`]: Fourier-truncated de Rham complex on flat tori.

pub mod derham;
pub mod dual;
pub mod elliptic;
pub mod error;
pub mod exterior;
pub mod fm;
pub mod liealg;
pub mod linalg;
pub mod patch;
pub mod polylinear;
pub mod sampling;

pub use error::{GeometryError, Result};
