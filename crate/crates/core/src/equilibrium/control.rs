use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::order_free_sum;
use crate::model::{
    aggregate_occupancy, check_shapes, compute_weights, ControlPolicy, CostParameters, GoodValues,
    MeanField, PortNetwork, WeightMatrix,
};

/// Occupancies at or below `floor * F^n` are rejected by [`optimal_control`].
pub const DEFAULT_OCCUPANCY_FLOOR: f64 = 1e-12;

/// Closed-form optimal transition matrices against a fixed mean field.
///
/// For every good `n` and origin `i`,
/// `Q_ij = w_ij / phi_i * (b_j - sum_l wn_il b_l) + wn_ij` with
/// `b_j = M_ij / 2 - r_j phi^bullet_j`. Rows sum to one through the
/// weighted barycenter, negative entries are kept and flagged.
pub fn optimal_control(
    field: &MeanField,
    params: &CostParameters,
    network: &PortNetwork,
    values: &GoodValues,
) -> Result<ControlPolicy> {
    optimal_control_with_floor(field, params, network, values, DEFAULT_OCCUPANCY_FLOOR)
}

pub fn optimal_control_with_floor(
    field: &MeanField,
    params: &CostParameters,
    network: &PortNetwork,
    values: &GoodValues,
    occupancy_floor: f64,
) -> Result<ControlPolicy> {
    check_shapes(params, network, values)?;
    let k = network.size();
    if field.goods() != params.goods() || field.ports() != k {
        return Err(Error::DimensionMismatch {
            what: "mean field shape",
            expected: params.goods() * k,
            got: field.occupancy().len(),
        });
    }
    let crowd = aggregate_occupancy(field);
    let mut transitions = Vec::with_capacity(params.goods());
    let mut bracket = alloc::vec![0.0; k];
    for n in 0..params.goods() {
        let weights = compute_weights(params, network, n)?;
        let floor = occupancy_floor * params.capacities()[n];
        let mut q = DMatrix::zeros(k, k);
        for i in 0..k {
            let phi_i = field.occupancy()[(n, i)];
            if !(phi_i > floor) {
                return Err(Error::ZeroOccupancy {
                    good: n,
                    port: i,
                    value: phi_i,
                    iteration: None,
                });
            }
            centered_brackets(&mut bracket, &weights, n, i, &crowd, params, values);
            for j in 0..k {
                q[(i, j)] = weights.raw[(i, j)] / phi_i * bracket[j] + weights.normalized[(i, j)];
            }
        }
        transitions.push(q);
    }
    Ok(ControlPolicy::new(transitions))
}

/// Fills `bracket` with `b_j - sum_l wn_il b_l` for origin `i` of good `n`.
fn centered_brackets(
    bracket: &mut [f64],
    weights: &WeightMatrix,
    n: usize,
    i: usize,
    crowd: &DVector<f64>,
    params: &CostParameters,
    values: &GoodValues,
) {
    let r = params.congestion();
    for (j, b) in bracket.iter_mut().enumerate() {
        *b = 0.5 * values.margin(n, i, j) - r[j] * crowd[j];
    }
    let total_weight = weights.row_sum(i);
    let weighted = |center: f64| -> f64 {
        order_free_sum(bracket.iter().enumerate().map(|(j, b)| weights.raw[(i, j)] * (b - center)))
    };
    // Barycenter plus one refinement pass, so the centered brackets cancel
    // under the weights to rounding level.
    let mut center = weighted(0.0) / total_weight;
    center += weighted(center) / total_weight;
    bracket.iter_mut().for_each(|b| *b -= center);
}

/// `phi Q(phi) - phi` per good, evaluated through the realized flows
/// `phi_i Q_ij = w_ij (b_j - center_i) + wn_ij phi_i`. No occupancy is
/// divided by, so any finite matrix is accepted, and the defect is affine
/// in the occupancies.
pub(crate) fn stationarity_defect(
    occupancy: &DMatrix<f64>,
    params: &CostParameters,
    network: &PortNetwork,
    values: &GoodValues,
) -> Result<DMatrix<f64>> {
    let k = network.size();
    let crowd = aggregate_occupancy(&MeanField::from_matrix(occupancy.clone()));
    let mut defect = -occupancy.clone();
    let mut bracket = alloc::vec![0.0; k];
    for n in 0..params.goods() {
        let weights = compute_weights(params, network, n)?;
        for i in 0..k {
            centered_brackets(&mut bracket, &weights, n, i, &crowd, params, values);
            let phi_i = occupancy[(n, i)];
            for j in 0..k {
                defect[(n, j)] += weights.raw[(i, j)] * bracket[j] + weights.normalized[(i, j)] * phi_i;
            }
        }
    }
    Ok(defect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{cost_gradient, Kernel};
    use alloc::format;
    use alloc::string::String;
    use alloc::vec;

    fn net(k: usize, t: &[f64]) -> PortNetwork {
        let labels: Vec<String> = (0..k).map(|i| format!("P{i}")).collect();
        PortNetwork::new(labels, DMatrix::from_row_slice(k, k, t), Kernel::Linear).unwrap()
    }

    #[test]
    fn symmetric_two_port_is_uniform() {
        let f = 4.0;
        let params = CostParameters::new(vec![1.0, 1.0], vec![0.0], vec![f]).unwrap();
        let values = GoodValues::new(DMatrix::zeros(1, 2)).unwrap();
        let field = MeanField::uniform(&params);
        let policy = optimal_control(&field, &params, &net(2, &[0.0, 1.0, 1.0, 0.0]), &values).unwrap();
        assert_eq!(policy.good(0), &DMatrix::from_element(2, 2, 0.5));
    }

    #[test]
    fn single_port_keeps_everything() {
        let params = CostParameters::new(vec![2.0], vec![0.4], vec![3.0]).unwrap();
        let values = GoodValues::new(DMatrix::from_element(1, 1, 5.0)).unwrap();
        let field = MeanField::uniform(&params);
        let policy = optimal_control(&field, &params, &net(1, &[0.0]), &values).unwrap();
        assert_eq!(policy.good(0), &DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn zero_occupancy_is_an_error() {
        let params = CostParameters::new(vec![1.0, 1.0], vec![0.0], vec![1.0]).unwrap();
        let values = GoodValues::new(DMatrix::zeros(1, 2)).unwrap();
        let field = MeanField::from_matrix(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        let err = optimal_control(&field, &params, &net(2, &[0.0, 1.0, 1.0, 0.0]), &values).unwrap_err();
        assert!(matches!(err, Error::ZeroOccupancy { good: 0, port: 1, .. }));
    }

    #[test]
    fn rows_are_stationary_points_of_the_objective() {
        let network = net(3, &[0.0, 1.0, 2.0, 1.5, 0.0, 0.7, 2.2, 0.4, 0.0]);
        let params = CostParameters::new(vec![0.8, 1.1, 1.3], vec![0.6, 0.2], vec![6.0, 3.0]).unwrap();
        let values =
            GoodValues::new(DMatrix::from_row_slice(2, 3, &[0.5, -1.0, 0.5, 1.0, 0.0, -1.0])).unwrap();
        let field =
            MeanField::new(DMatrix::from_row_slice(2, 3, &[2.0, 1.5, 2.5, 1.0, 0.5, 1.5]), &params).unwrap();
        let policy = optimal_control(&field, &params, &network, &values).unwrap();
        assert!(policy.max_row_sum_deviation() < 1e-14);
        for n in 0..2 {
            for i in 0..3 {
                let row: Vec<f64> = policy.good(n).row(i).iter().copied().collect();
                let g = cost_gradient(i, n, &row, &field, &params, &network, &values);
                let mean = g.iter().sum::<f64>() / 3.0;
                assert!(g.iter().all(|x| (x - mean).abs() < 1e-12), "{g:?}");
            }
        }
    }
}
