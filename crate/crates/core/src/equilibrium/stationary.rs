use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Default relative threshold on the second-smallest singular value of
/// `Q^T - I` below which the stationary distribution is declared non-unique.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-8;

const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Stationary distribution `phi Q = phi`, `sum phi = capacity`, of a
/// row-affine matrix that may contain negative entries.
///
/// Solved directly as `(Q^T - I) phi = 0` stacked with the mass row, in
/// the least-squares sense; no power iteration.
pub fn stationary_distribution(q: &DMatrix<f64>, capacity: f64) -> Result<DVector<f64>> {
    stationary_distribution_with(q, capacity, DEFAULT_RANK_TOLERANCE, 0)
}

pub fn stationary_distribution_with(
    q: &DMatrix<f64>,
    capacity: f64,
    rank_tolerance: f64,
    good: usize,
) -> Result<DVector<f64>> {
    let k = q.nrows();
    if q.ncols() != k || k == 0 {
        return Err(Error::DimensionMismatch {
            what: "transition matrix must be square",
            expected: k,
            got: q.ncols(),
        });
    }
    for i in 0..k {
        let sum: f64 = q.row(i).iter().sum();
        if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
            return Err(Error::NotRowStochastic { row: i, sum });
        }
    }
    let a = q.transpose() - DMatrix::identity(k, k);
    let singular = linalg::singular_values_ascending(&a);
    if k >= 2 && singular[1] < rank_tolerance * linalg::frobenius(q) {
        return Err(Error::NonUniqueStationary {
            good,
            second_singular_value: singular[1],
            iteration: None,
        });
    }

    let mut stacked = DMatrix::zeros(k + 1, k);
    stacked.view_mut((0, 0), (k, k)).copy_from(&a);
    stacked.row_mut(k).fill(1.0);
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = capacity;
    let phi = linalg::lstsq(&stacked, &rhs).ok_or(Error::UnnormalizableStationary { good })?;

    let mass: f64 = phi.iter().sum();
    let balance = linalg::max_abs_vec(&(&a * &phi));
    let scale = capacity.abs().max(f64::MIN_POSITIVE);
    let mass_ok = (mass - capacity).abs() <= 1e-9 * scale;
    let balance_ok = balance <= 1e-9 * scale * (1.0 + linalg::frobenius(q));
    if !(mass_ok && balance_ok) {
        return Err(Error::UnnormalizableStationary { good });
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn swap_matrix() {
        let q = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let phi = stationary_distribution(&q, 1.0).unwrap();
        assert_relative_eq!(phi[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(phi[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn two_state_chain() {
        // 0.1 phi_1 = 0.5 phi_2 with phi_1 + phi_2 = 1.
        let q = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.5, 0.5]);
        let phi = stationary_distribution(&q, 1.0).unwrap();
        assert_relative_eq!(phi[0], 5.0 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(phi[1], 1.0 / 6.0, epsilon = 1e-14);
    }

    #[test]
    fn identity_is_not_unique() {
        for k in 2..5 {
            let err = stationary_distribution(&DMatrix::identity(k, k), 1.0).unwrap_err();
            assert!(matches!(err, Error::NonUniqueStationary { .. }));
        }
    }

    #[test]
    fn single_state_takes_all_mass() {
        let phi = stationary_distribution(&DMatrix::from_element(1, 1, 1.0), 7.5).unwrap();
        assert_eq!(phi.len(), 1);
        assert_relative_eq!(phi[0], 7.5, epsilon = 1e-14);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let q = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.5, 0.5]);
        assert!(matches!(stationary_distribution(&q, 1.0), Err(Error::NotRowStochastic { row: 0, .. })));
    }

    #[test]
    fn handles_negative_entries() {
        let q = DMatrix::from_row_slice(3, 3, &[1.1, -0.3, 0.2, 0.3, 0.4, 0.3, 0.2, 0.5, 0.3]);
        let phi = stationary_distribution(&q, 2.0).unwrap();
        let back = phi.transpose() * &q;
        for j in 0..3 {
            assert_relative_eq!(back[j], phi[j], epsilon = 1e-12);
        }
        assert_relative_eq!(phi.sum(), 2.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn random_stochastic_rows_are_balanced(
            raw in proptest::collection::vec(0.05f64..1.0, 16),
            capacity in 0.5f64..100.0,
        ) {
            let mut q = DMatrix::from_row_slice(4, 4, &raw);
            for i in 0..4 {
                let s: f64 = q.row(i).iter().sum();
                q.row_mut(i).iter_mut().for_each(|v| *v /= s);
            }
            let phi = stationary_distribution(&q, capacity).unwrap();
            let back = phi.transpose() * &q;
            for j in 0..4 {
                prop_assert!((back[j] - phi[j]).abs() <= 1e-10 * capacity);
            }
            prop_assert!((phi.sum() - capacity).abs() <= 1e-10 * capacity);
        }
    }
}
