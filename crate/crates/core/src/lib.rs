//! Numerical construction of k-quadrature domains for the Helmholtz operator:
//! partial balayage, segregated multi-phase minimisers, two-phase balayage,
//! quadrature verification and non-scattering contrasts.

pub mod balayage;
pub mod error;
pub mod grid;
pub mod io;
pub mod linsolve;
pub mod multiphase;
pub mod scatter;
pub mod specfun;
pub mod twophase;
pub mod verify;

pub use error::{ErrorClass, QdomError, Result};
pub use grid::{
    deposit_measure, helmholtz_apply, integrate, make_grid, Atom, Grid, GridMeasure, Mask,
    ScalarField,
};
