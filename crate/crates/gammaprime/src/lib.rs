//! Phase-field simulation of gamma-prime precipitate microstructure in Ni-based
//! alloys: a conserved composition field `c` coupled to a non-conserved long-range
//! order parameter `eta` and linear cubic elasticity with a composition eigenstrain.
//!
//! The time discretization is a discrete-variational-derivative scheme: the
//! discrete free energy difference over a step equals the inner product of the
//! discrete gradient with the state increment exactly, which makes the method
//! unconditionally energy stable and mass conservative. The nonlinear step system
//! is solved by an inexact Newton-Krylov method with additive-Schwarz
//! preconditioning (classical or restricted, ILU(k)/LU subdomain solves), and the
//! step size is controlled adaptively from the rate of change of the solution.

pub mod analysis;
pub mod config;
pub mod dvd;
pub mod energy;
pub mod grid;
pub mod io;
pub mod jacobian;
pub mod model;
pub mod solver;
pub mod state;
pub mod stepper;
