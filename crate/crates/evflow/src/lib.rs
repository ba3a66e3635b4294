//! Transient Darcy flow on 2D multiblock domains with non-matching
//! rectangular subdomain grids.
//!
//! Subdomains are coupled through an enhanced velocity space: interface
//! fluxes live on the union grid of the two abutting traces, one shared
//! unknown per sub-edge, so normal flux is continuous at sub-edge scale
//! without Lagrange multipliers. The lowest-order Raviart-Thomas pairing with
//! trapezoidal/midpoint quadrature reduces each time step to a cell-centered
//! pressure system solved through its Schur complement. Time integration is
//! the one-parameter theta family (theta = 1 backward Euler, theta = 0
//! Crank-Nicolson), with an optional Newton stepper for slightly compressible
//! fluids.
//!
//! The [`mms`] module carries manufactured solutions, discrete error norms
//! and the convergence-study driver; [`cli`] adds config parsing, CSV
//! reports and VTK field dumps behind the `evflow` binary.

pub mod assembly;
pub mod cli;
pub mod fespace;
pub mod mesh;
pub mod mms;
pub mod quad;
pub mod solver;
