//! Kinetic gas with random fixed scatterers: collision operators, linearized
//! spectral tools, transport coefficients, the limiting diffusion system and a
//! diffusive-limit kinetic solver.

// NaN has to fail the `!(x > 0.0)` guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collision;
pub mod error;
pub mod grid;
pub mod harness;
pub mod hydro;
pub mod kinetic;
pub mod linops;
mod scalar;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double precision instantiations used by the harness and CLI.
pub type VelocityGrid64 = grid::VelocityGrid<f64>;
pub type Collision64 = collision::Collision<f64>;
pub type ReducedCollision64 = collision::ReducedCollision<f64>;
pub type LinearizedOperator64 = linops::LinearizedOperator<f64>;
pub type DistributionField64 = kinetic::DistributionField<f64>;
pub type KineticSolver64<'a> = kinetic::KineticSolver<'a, f64>;

/// Single precision instantiations.
pub type VelocityGrid32 = grid::VelocityGrid<f32>;
pub type Collision32 = collision::Collision<f32>;
pub type ReducedCollision32 = collision::ReducedCollision<f32>;
pub type LinearizedOperator32 = linops::LinearizedOperator<f32>;
pub type DistributionField32 = kinetic::DistributionField<f32>;
pub type KineticSolver32<'a> = kinetic::KineticSolver<'a, f32>;
