//! Estimation of continuous pairwise Markov random fields on `[0, 1]^d`.
//!
//! Two estimators share one parameterization (a truncated Legendre series
//! per vertex and per edge):
//!
//! * tree-reweighted variational maximum likelihood with a group-lasso
//!   penalty on edge blocks ([`trw`], [`spantree`], [`optim`]);
//! * regularized score matching, including a coordinate-descent solver for
//!   sparse Gaussian precision matrices ([`quasr`]).
//!
//! [`datagen`] produces the synthetic benchmarks and [`evalmod`] scores fitted
//! models against held-out data and known graphs.

pub mod basis;
pub mod datagen;
pub mod error;
pub mod evalmod;
pub mod graphmodel;
pub mod gridfn;
pub mod optim;
pub mod quasr;
pub mod spantree;
pub mod trw;

pub use basis::BasisSpec;
pub use error::{MrfError, Result};
pub use graphmodel::{Edge, EdgeSet, Graph, ModelDoc, ParamVector};
pub use gridfn::Grid1D;
