//! Landscapes of eigenspace risks on the Stiefel manifold.
//!
//! The crate evaluates the Brockett risk `−½ tr(Xᵀ A X N)` and its
//! Riemannian derivatives, builds surrogate matrices for several
//! low-rank estimation models, probes the local regularity of the empirical
//! landscape and runs a Riemannian descent.

pub mod brockett;
pub mod error;
pub mod landscape;
pub mod linalg;
pub mod manifold;
pub mod measurement;
pub mod optimize;
pub mod rng;

pub use brockett::{CriticalCase, CriticalPoint, Risk, RiskKind, Weights};
pub use error::{Error, Result};
pub use linalg::{Spectrum, SymMatrix};
pub use manifold::{StiefelPoint, TangentVector};
pub use rng::Rng;
