//! Independent checks of a computed equilibrium: stationarity, row sums and
//! first-order optimality of every row against the port objective, both
//! analytically and by central finite differences.

use alloc::vec::Vec;

use crate::model::{cost_functional, cost_gradient, ControlPolicy, CostParameters, GoodValues, MeanField, PortNetwork};

use super::fixed_point::{stationarity_residual, EquilibriumResult};

/// Largest deviation of the objective gradient from its mean over the row,
/// i.e. the gradient projected onto `{sum dq = 0}`, relative to
/// `max(1, max |gradient|)` of the same row.
pub fn max_projected_gradient(
    field: &MeanField,
    policy: &ControlPolicy,
    params: &CostParameters,
    network: &PortNetwork,
    values: &GoodValues,
) -> f64 {
    let mut worst: f64 = 0.0;
    for (n, q) in policy.transitions().iter().enumerate() {
        for i in 0..q.nrows() {
            let row: Vec<f64> = q.row(i).iter().copied().collect();
            let g = cost_gradient(i, n, &row, field, params, network, values);
            worst = worst.max(projected_deviation(&g));
        }
    }
    worst
}

fn projected_deviation(g: &[f64]) -> f64 {
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    let scale = g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    g.iter().fold(0.0_f64, |m, v| m.max((v - mean).abs())) / scale
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub finite_difference_step: f64,
    pub stationarity_tol: f64,
    pub row_sum_tol: f64,
    /// Bound on the relative projected gradient.
    pub optimality_tol: f64,
    /// Bound on analytic-vs-finite-difference disagreement.
    pub gradient_agreement_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            finite_difference_step: 1e-6,
            stationarity_tol: 1e-8,
            row_sum_tol: 1e-10,
            optimality_tol: 1e-5,
            gradient_agreement_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub max_row_sum_deviation: f64,
    pub stationarity_residual: f64,
    pub analytic_optimality: f64,
    pub finite_difference_optimality: f64,
    /// Largest relative gap between analytic and finite-difference gradients.
    pub gradient_disagreement: f64,
    pub negative_entries: usize,
    pub passed: bool,
}

/// Re-derives every equilibrium condition from scratch.
pub fn verify_equilibrium(
    result: &EquilibriumResult,
    params: &CostParameters,
    network: &PortNetwork,
    values: &GoodValues,
    config: &VerifyConfig,
) -> VerificationReport {
    verify_parts(&result.field, &result.policy, params, network, values, config)
}

pub fn verify_parts(
    field: &MeanField,
    policy: &ControlPolicy,
    params: &CostParameters,
    network: &PortNetwork,
    values: &GoodValues,
    config: &VerifyConfig,
) -> VerificationReport {
    let h = config.finite_difference_step;
    let mut fd_worst: f64 = 0.0;
    let mut disagreement: f64 = 0.0;
    for (n, q) in policy.transitions().iter().enumerate() {
        for i in 0..q.nrows() {
            let row: Vec<f64> = q.row(i).iter().copied().collect();
            let analytic = cost_gradient(i, n, &row, field, params, network, values);
            let mut probe = row.clone();
            let numeric: Vec<f64> = (0..row.len())
                .map(|j| {
                    probe[j] = row[j] + h;
                    let up = cost_functional(i, n, &probe, field, params, network, values);
                    probe[j] = row[j] - h;
                    let down = cost_functional(i, n, &probe, field, params, network, values);
                    probe[j] = row[j];
                    (up - down) / (2.0 * h)
                })
                .collect();
            fd_worst = fd_worst.max(projected_deviation(&numeric));
            let scale = analytic.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            for (a, b) in analytic.iter().zip(&numeric) {
                disagreement = disagreement.max((a - b).abs() / scale);
            }
        }
    }
    let max_row_sum_deviation = policy.max_row_sum_deviation();
    let stationarity = stationarity_residual(field, policy);
    let analytic_optimality = max_projected_gradient(field, policy, params, network, values);
    let passed = max_row_sum_deviation <= config.row_sum_tol
        && stationarity <= config.stationarity_tol
        && analytic_optimality <= config.optimality_tol
        && fd_worst <= config.optimality_tol.max(config.gradient_agreement_tol)
        && disagreement <= config.gradient_agreement_tol;
    VerificationReport {
        max_row_sum_deviation,
        stationarity_residual: stationarity,
        analytic_optimality,
        finite_difference_optimality: fd_worst,
        gradient_disagreement: disagreement,
        negative_entries: policy.negative_entries().len(),
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::fixed_point::{fixed_point, FixedPointConfig};
    use crate::model::Kernel;
    use alloc::format;
    use alloc::string::String;
    use alloc::vec;
    use nalgebra::DMatrix;

    fn network(k: usize) -> PortNetwork {
        let labels: Vec<String> = (0..k).map(|i| format!("P{i}")).collect();
        let t = DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { 0.5 + 0.25 * ((i * 3 + j) % 4) as f64 });
        PortNetwork::new(labels, t, Kernel::Linear).unwrap()
    }

    #[test]
    fn symmetric_equilibrium_is_exact() {
        let params = CostParameters::new(vec![1.0; 3], vec![0.5], vec![9.0]).unwrap();
        let values = GoodValues::new(DMatrix::from_element(1, 3, 1.0)).unwrap();
        let t = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 });
        let labels: Vec<String> = (0..3).map(|i| format!("P{i}")).collect();
        let net = PortNetwork::new(labels, t, Kernel::Linear).unwrap();
        let res = fixed_point(&params, &net, &values, None, &FixedPointConfig::default()).unwrap();
        let report = verify_equilibrium(&res, &params, &net, &values, &VerifyConfig::default());
        assert!(report.passed, "{report:?}");
        assert!(report.stationarity_residual <= 1e-10);
        assert!(report.analytic_optimality <= 1e-10);
    }

    #[test]
    fn converged_instance_passes_and_perturbed_fails() {
        let params = CostParameters::new(vec![0.8, 1.2, 1.0, 1.0], vec![0.3], vec![100.0]).unwrap();
        let values = GoodValues::new(DMatrix::from_row_slice(1, 4, &[0.4, -0.6, 0.9, -0.7])).unwrap();
        let net = network(4);
        let res = fixed_point(&params, &net, &values, None, &FixedPointConfig::default()).unwrap();
        assert!(res.converged);
        let report = verify_equilibrium(&res, &params, &net, &values, &VerifyConfig::default());
        assert!(report.passed, "{report:?}");

        // Move mass between two destinations of one row: row sums survive,
        // optimality and stationarity do not.
        let mut q = res.policy.good(0).clone();
        q[(1, 0)] += 1e-3;
        q[(1, 2)] -= 1e-3;
        let nudged = ControlPolicy::new(vec![q]);
        let bad = verify_parts(&res.field, &nudged, &params, &net, &values, &VerifyConfig::default());
        assert!(!bad.passed);
        assert!(bad.analytic_optimality > 1e-5);
        assert!(bad.gradient_disagreement <= 1e-4);
    }
}
