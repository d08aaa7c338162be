//! Attraction-based extraction of hyperbolic Lagrangian coherent structures
//! (LCS) in two-dimensional unsteady flows.
//!
//! One forward integration of a grid yields the flow map and its deformation
//! gradient. The SVD of the gradient gives forward and backward stretching
//! information at once; local maxima of the largest singular value seed short
//! segments that are advected in their attracting time direction, forward from
//! the initial time for attracting LCS and backward from the final time for
//! repelling LCS.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flow_map;
pub mod geom;
pub mod grid;
pub mod ns_solver;
pub mod ode;
pub mod seeding;
pub mod shrinkline;
pub mod svd;
pub mod tracking;
pub mod velocity;

mod binio;

pub use error::{Error, Result};
pub use geom::{Mat2, Vec2};
pub use grid::{Cell, GridSpec, Periodicity, ScalarGrid};
pub use ode::Tolerance;
