//! Chart-based Riemannian geometry for harmonic-map analysis.
//!
//! The crate is organised bottom-up: [`symbolic`] expressions feed the
//! pointwise [`geometry`] kernel, which supports vector-field analysis in
//! [`fields`], map calculus in [`maps`], divergence-identity checks in
//! [`verifier`], and the harmonic-map heat flow in [`heat_flow`].

pub mod catalog;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod heat_flow;
pub mod maps;
pub mod sampling;
pub mod symbolic;
pub mod verifier;

pub use error::{Error, Result};
pub use geometry::{ChartManifold, CovariantTensor, Frame};
pub use symbolic::Expr;
