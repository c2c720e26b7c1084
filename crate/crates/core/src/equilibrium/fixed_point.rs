use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{ControlPolicy, CostParameters, GoodValues, MeanField, PortNetwork};

use super::control::{optimal_control_with_floor, stationarity_defect, DEFAULT_OCCUPANCY_FLOOR};
use super::stationary::{stationary_distribution_with, DEFAULT_RANK_TOLERANCE};
use super::verify::max_projected_gradient;

/// Settings of the damped mean-field iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointConfig {
    /// Damping `alpha` in `(0, 1]`; the upper bound when adaptive.
    pub damping: f64,
    /// Stationarity tolerance on `max |phi Q - phi|`.
    pub tol: f64,
    pub max_iter: usize,
    /// Pick each step's damping to minimize the stationarity defect along
    /// the step, then halve it until the iterate stays positive.
    pub adaptive_damping: bool,
    pub min_damping: f64,
    pub occupancy_floor: f64,
    pub rank_tolerance: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 10_000,
            adaptive_damping: true,
            min_damping: 1e-6,
            occupancy_floor: DEFAULT_OCCUPANCY_FLOOR,
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
        }
    }
}

/// Outcome of [`fixed_point`].
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub field: MeanField,
    pub policy: ControlPolicy,
    /// Number of optimal-control evaluations.
    pub iterations: usize,
    pub stationarity_residual: f64,
    pub optimality_residual: f64,
    pub converged: bool,
    /// Damping in effect when the iteration stopped.
    pub damping: f64,
}

/// Per-good `max_j |(phi Q)_j - phi_j|`, maximized over goods.
pub fn stationarity_residual(field: &MeanField, policy: &ControlPolicy) -> f64 {
    let occ = field.occupancy();
    let mut worst: f64 = 0.0;
    for (n, q) in policy.transitions().iter().enumerate() {
        let row = occ.row(n);
        let image = row * q;
        for j in 0..q.ncols() {
            worst = worst.max((image[j] - row[j]).abs());
        }
    }
    worst
}

/// Damped Jacobi iteration
/// `phi <- (1 - alpha) phi + alpha * stationary(optimal_control(phi))`
/// over all goods at once, until `max |phi Q - phi| <= tol`. Starts from
/// `init`, or from [`MeanField::congestion_balanced`]: away from balanced
/// crowding the controls turn strongly negative and their stationary
/// distributions stop being informative.
pub fn fixed_point(
    params: &CostParameters,
    network: &PortNetwork,
    values: &GoodValues,
    init: Option<&MeanField>,
    config: &FixedPointConfig,
) -> Result<EquilibriumResult> {
    if !(config.damping > 0.0 && config.damping <= 1.0) {
        return Err(Error::InvalidInput(alloc::format!(
            "damping {} must lie in (0, 1]",
            config.damping
        )));
    }
    if !(config.tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let mut phi = match init {
        Some(f) => MeanField::new(f.occupancy().clone(), params)?,
        None => MeanField::congestion_balanced(params),
    };
    let goods = params.goods();
    let capacities = params.capacities();
    let control = |field: &MeanField| {
        optimal_control_with_floor(field, params, network, values, config.occupancy_floor)
    };

    let mut alpha = config.damping;
    let mut last_policy = None;
    let mut last_residual = f64::INFINITY;

    for iteration in 1..=config.max_iter {
        let policy = control(&phi).map_err(|e| e.at_iteration(iteration))?;
        let residual = stationarity_residual(&phi, &policy);
        if residual <= config.tol {
            return Ok(finish(phi, policy, iteration, residual, true, alpha, params, network, values));
        }

        let mut target = DMatrix::zeros(goods, network.size());
        for n in 0..goods {
            let stationary = stationary_distribution_with(policy.good(n), capacities[n], config.rank_tolerance, n)
                .map_err(|e| e.at_iteration(iteration))?;
            target.row_mut(n).copy_from(&stationary.transpose());
        }
        let base = phi.occupancy().clone();
        if config.adaptive_damping {
            alpha = residual_minimizing_damping(&base, &target, params, network, values)?
                .clamp(config.min_damping, config.damping);
        }
        let mut next = &base * (1.0 - alpha) + &target * alpha;
        while config.adaptive_damping && !positive(&next, params, config) && alpha > config.min_damping {
            alpha = (alpha * 0.5).max(config.min_damping);
            next = &base * (1.0 - alpha) + &target * alpha;
        }
        for n in 0..goods {
            let bound = 1e3 * capacities[n];
            let magnitude = next.row(n).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if !(magnitude <= bound) {
                return Err(Error::DivergedField { iteration, magnitude });
            }
        }
        phi = MeanField::from_matrix(next);
        last_policy = Some(policy);
        last_residual = residual;
    }

    // Out of iterations: report the last iterate with its own policy when
    // it can still be evaluated.
    let (policy, residual) = match control(&phi) {
        Ok(p) => {
            let r = stationarity_residual(&phi, &p);
            (p, r)
        }
        Err(_) => (
            last_policy.expect("at least one iteration ran"),
            last_residual,
        ),
    };
    let converged = residual <= config.tol;
    Ok(finish(phi, policy, config.max_iter, residual, converged, alpha, params, network, values))
}

/// The defect `phi Q(phi) - phi` is affine in `phi`, so along the step
/// towards `target` it is `(1 - a) defect(base) + a defect(target)`; returns
/// the `a` minimizing its Euclidean norm (zero when the step does not move
/// the defect).
fn residual_minimizing_damping(
    base: &DMatrix<f64>,
    target: &DMatrix<f64>,
    params: &CostParameters,
    network: &PortNetwork,
    values: &GoodValues,
) -> Result<f64> {
    let start = stationarity_defect(base, params, network, values)?;
    let change = stationarity_defect(target, params, network, values)? - &start;
    let curvature = change.norm_squared();
    if !(curvature > 0.0) {
        return Ok(0.0);
    }
    Ok(-start.dot(&change) / curvature)
}

fn positive(next: &DMatrix<f64>, params: &CostParameters, config: &FixedPointConfig) -> bool {
    (0..next.nrows()).all(|n| {
        let floor = config.occupancy_floor * params.capacities()[n];
        next.row(n).iter().all(|v| *v > floor)
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    field: MeanField,
    policy: ControlPolicy,
    iterations: usize,
    stationarity_residual: f64,
    converged: bool,
    damping: f64,
    params: &CostParameters,
    network: &PortNetwork,
    values: &GoodValues,
) -> EquilibriumResult {
    let optimality_residual = max_projected_gradient(&field, &policy, params, network, values);
    EquilibriumResult {
        field,
        policy,
        iterations,
        stationarity_residual,
        optimality_residual,
        converged,
        damping,
    }
}
