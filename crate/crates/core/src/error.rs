use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the solver, inference and synthetic-data paths.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-positive weight denominator r_j + c_n g(T_ij) = {value} for good {good}, route {origin} -> {destination}")]
    NonPositiveDenominator {
        good: usize,
        origin: usize,
        destination: usize,
        value: f64,
    },

    #[error("occupancy of good {good} at port {port} is {value}, below the floor{}", at_iteration(*iteration))]
    ZeroOccupancy {
        good: usize,
        port: usize,
        value: f64,
        iteration: Option<usize>,
    },

    #[error("transition matrix row {row} sums to {sum}, not 1")]
    NotRowStochastic { row: usize, sum: f64 },

    #[error("stationary distribution is not unique for good {good} (second singular value {second_singular_value:e}){}", at_iteration(*iteration))]
    NonUniqueStationary {
        good: usize,
        second_singular_value: f64,
        iteration: Option<usize>,
    },

    #[error("stationary direction of good {good} carries no mass and cannot be normalized")]
    UnnormalizableStationary { good: usize },

    #[error("mean field diverged at iteration {iteration} (|phi| = {magnitude:e})")]
    DivergedField { iteration: usize, magnitude: f64 },

    #[error("fixed point did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("representative system is degenerate (|det| = {determinant:e}, condition {condition:e})")]
    DegenerateSystem { determinant: f64, condition: f64 },

    #[error("not enough history for the crowdedness proxy of port {destination}: {days} days, need more than {needed}")]
    InsufficientHistory {
        destination: usize,
        days: usize,
        needed: usize,
    },

    #[error("no usable samples for route {origin} -> {destination}")]
    EmptyDataset { origin: usize, destination: usize },

    #[error("regression needs at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("design matrix is rank deficient (condition {condition:e}); collinear columns {columns:?}")]
    RankDeficient { condition: f64, columns: Vec<usize> },

    #[error("calibration needs at least {needed} usable routes, got {got}")]
    InsufficientRoutes { needed: usize, got: usize },

    #[error("gauge is infeasible: r_min = {r_min} exceeds the mean congestion {r_bar}")]
    GaugeInfeasible { r_min: f64, r_bar: f64 },

    #[error("no calibration start converged ({starts} tried)")]
    SolverFailure { starts: usize },

    #[error("cannot represent the requested path with nonnegative flows (port {port}, day offset {day})")]
    ProxyInversionFailure { port: usize, day: usize },

    #[error("port label {0:?} is not part of the network")]
    UnknownPort(String),
}

fn at_iteration(iteration: Option<usize>) -> String {
    match iteration {
        Some(it) => alloc::format!(" (iteration {it})"),
        None => String::new(),
    }
}

impl Error {
    /// Attaches a fixed-point iteration index to errors that carry one.
    pub fn at_iteration(self, it: usize) -> Self {
        match self {
            Error::ZeroOccupancy {
                good, port, value, ..
            } => Error::ZeroOccupancy {
                good,
                port,
                value,
                iteration: Some(it),
            },
            Error::NonUniqueStationary {
                good,
                second_singular_value,
                ..
            } => Error::NonUniqueStationary {
                good,
                second_singular_value,
                iteration: Some(it),
            },
            other => other,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
