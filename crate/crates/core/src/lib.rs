//! Finite-element/boundary-element solver for a degenerately convex
//! double-well transmission and Signorini contact problem on a 2D polygon.
//!
//! The interior energy uses the convex envelope of the double-well density
//! |∇u-F1|²|∇u-F2|²; the unbounded exterior Laplace part enters through a
//! symmetric boundary-integral Steklov-Poincaré operator. The minimizer of
//! the coupled energy is non-unique, but the stress DW**(∇u), the projected
//! gradient, the microstructure region and the exterior boundary trace are
//! minimizer-independent; those are the quantities this crate computes,
//! together with a residual a posteriori error estimator and an adaptive
//! bisection loop driven by Dörfler marking.

pub mod adaptive;
pub mod bem;
pub mod config;
pub mod energy;
pub mod error;
pub mod estimator;
pub mod expr;
pub mod mesh;
pub mod output;
pub mod potential;
pub mod quadrature;
pub mod region;
pub mod solver;
pub mod steklov;

pub use error::{Error, Result};
