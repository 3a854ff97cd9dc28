//! Inexact Newton-Krylov-Schwarz solver stack for the nonlinear step
//! systems: CSR storage, incomplete/complete sparse factorizations,
//! overlapping additive-Schwarz preconditioning, restarted GMRES, and the
//! globalized Newton driver.

pub mod csr;
pub mod gmres;
pub mod ilu;
pub mod newton;
pub mod schwarz;

pub use csr::CsrMatrix;
pub use gmres::{gmres, GmresOutcome, PrecondSide};
pub use ilu::{FactorError, FillRule, SparseFactor, SubdomainSolver};
pub use newton::{newton_solve, Divergence, NewtonConfig, SolveReport};
pub use schwarz::{
    build_preconditioner, partition, BlockLayout, SchwarzConfig, SchwarzKind,
    SchwarzPreconditioner, Subdomain,
};
