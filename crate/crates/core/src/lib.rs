//! Stationary mean-field model of seaborne trade flows between ports, with
//! equilibrium solvers, regression-based calibration and a synthetic data
//! generator. `no_std` with `alloc`.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod equilibrium;
pub mod error;
pub mod inference;
mod linalg;
pub mod model;
pub mod series;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{
    aggregate_occupancy, compute_weights, cost_functional, cost_gradient, realized_flow, ControlPolicy,
    CostParameters, GoodValues, Kernel, MeanField, PortNetwork, WeightMatrix,
};
