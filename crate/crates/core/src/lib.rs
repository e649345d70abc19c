//! Finite-difference solver for the parabolic deformed Hermitian-Yang-Mills
//! flow `∂ₜu = cot Θ(Hess_ℂ u) − cot θ̂` on boxes in ℂⁿ, together with the
//! functionals and invariant monitors that certify its behaviour.

pub mod cone;
pub mod config;
pub mod elliptic;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod grid;
pub mod hessian;
pub mod io;
pub mod matrix;
pub mod monitor;
pub mod source;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{GridSpec, ScalarField};
pub use hessian::HermitianField;
pub use matrix::{CMat, C64};
