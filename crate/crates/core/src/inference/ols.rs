use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Svd;

use super::dataset::RegressionDataset;

/// Largest admissible condition number of the column-scaled design.
pub const MAX_DESIGN_CONDITION: f64 = 1e10;

/// Per-route least-squares fit of `Y = A + sum_l B_l X_l + C Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionCoefficients {
    pub origin: usize,
    pub destination: usize,
    pub good: usize,
    pub intercept: f64,
    pub crowd_slopes: Vec<f64>,
    pub self_slope: f64,
    pub n_obs: usize,
    pub r_squared: f64,
    pub residual_variance: f64,
    /// Intercept, crowd slopes, self slope, in that order.
    pub standard_errors: Vec<f64>,
    pub ridge: f64,
}

impl RegressionCoefficients {
    /// All coefficients in design-column order.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.crowd_slopes.len() + 2);
        out.push(self.intercept);
        out.extend_from_slice(&self.crowd_slopes);
        out.push(self.self_slope);
        out
    }

    pub fn residuals(&self, data: &RegressionDataset) -> Vec<f64> {
        let beta = DVector::from_vec(self.coefficients());
        let fitted = design(data) * beta;
        data.response.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect()
    }
}

/// `[1, X_1 .. X_K, Z]`.
pub fn design(data: &RegressionDataset) -> DMatrix<f64> {
    let n = data.len();
    let k = data.crowdedness.ncols();
    DMatrix::from_fn(n, k + 2, |r, c| match c {
        0 => 1.0,
        c if c <= k => data.crowdedness[(r, c - 1)],
        _ => data.imports[r],
    })
}

/// Ordinary least squares with intercept; `ridge > 0` penalizes the slopes
/// (not the intercept) by `ridge * |slopes|^2`.
pub fn ols_fit(data: &RegressionDataset, ridge: f64) -> Result<RegressionCoefficients> {
    if !(ridge >= 0.0) {
        return Err(Error::InvalidInput("ridge penalty must be nonnegative".into()));
    }
    let x = design(data);
    let (n, p) = x.shape();
    if n < p + 1 {
        return Err(Error::TooFewObservations { needed: p + 1, got: n });
    }
    let y = DVector::from_column_slice(&data.response);

    // Condition is judged on unit-norm columns so that units do not matter.
    let norms: Vec<f64> = (0..p).map(|c| x.column(c).norm()).collect();
    let scaled = DMatrix::from_fn(n, p, |r, c| if norms[c] > 0.0 { x[(r, c)] / norms[c] } else { 0.0 });
    let deficient = |condition| Error::RankDeficient { condition, columns: Vec::new() };
    let svd = Svd::new(&scaled).ok_or(deficient(f64::INFINITY))?;
    let s_max = svd.max();
    let s_min = svd.singular_values.min();
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if !(condition <= MAX_DESIGN_CONDITION) {
        let v_t = &svd.v_t;
        let mut columns = Vec::new();
        for (idx, s) in svd.singular_values.iter().enumerate() {
            if *s * MAX_DESIGN_CONDITION < s_max || *s == 0.0 {
                for c in 0..p {
                    if v_t[(idx, c)].abs() > 0.1 && !columns.contains(&c) {
                        columns.push(c);
                    }
                }
            }
        }
        columns.sort_unstable();
        return Err(Error::RankDeficient { condition, columns });
    }

    // Augmented least squares on the scaled design; the ridge rows act on
    // slopes in original units.
    let extra = if ridge > 0.0 { p - 1 } else { 0 };
    let mut aug = DMatrix::zeros(n + extra, p);
    aug.view_mut((0, 0), (n, p)).copy_from(&scaled);
    let mut rhs = DVector::zeros(n + extra);
    rhs.rows_mut(0, n).copy_from(&y);
    for c in 1..=extra {
        aug[(n + c - 1, c)] = libm::sqrt(ridge) / norms[c];
    }
    let svd = Svd::new(&aug).ok_or(deficient(condition))?;
    let cutoff = svd.max() * 1e-15;
    let gamma = svd.solve(&rhs, cutoff);
    let beta = DVector::from_fn(p, |c, _| gamma[c] / norms[c]);

    let fitted = &x * &beta;
    let residuals = &y - &fitted;
    let rss = residuals.norm_squared();
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else if rss <= f64::EPSILON * y.norm_squared() {
        1.0
    } else {
        0.0
    };
    let residual_variance = rss / (n - p) as f64;

    // Covariance sigma^2 (S^T S)^{-1} in scaled coordinates.
    let v = svd.v_t.transpose();
    let standard_errors = (0..p)
        .map(|c| {
            let var: f64 = (0..p)
                .map(|k| {
                    let s = svd.singular_values[k];
                    if s > cutoff { v[(c, k)] * v[(c, k)] / (s * s) } else { 0.0 }
                })
                .sum();
            libm::sqrt(residual_variance * var) / norms[c]
        })
        .collect();

    Ok(RegressionCoefficients {
        origin: data.origin,
        destination: data.destination,
        good: data.good,
        intercept: beta[0],
        crowd_slopes: beta.rows(1, p - 2).iter().copied().collect(),
        self_slope: beta[p - 1],
        n_obs: n,
        r_squared,
        residual_variance,
        standard_errors,
        ridge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Day;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn dataset(x1: &[f64], x2: &[f64], z: &[f64], y: &[f64]) -> RegressionDataset {
        let n = y.len();
        RegressionDataset {
            origin: 0,
            destination: 1,
            good: 0,
            days: (0..n as i32).map(Day).collect(),
            response: y.to_vec(),
            crowdedness: DMatrix::from_fn(n, 2, |r, c| if c == 0 { x1[r] } else { x2[r] }),
            imports: z.to_vec(),
        }
    }

    fn features(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut draw = || (0..n).map(|_| rng.random_range(5.0..15.0)).collect::<Vec<f64>>();
        (draw(), draw(), draw())
    }

    #[test]
    fn exact_linear_data_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (x1, x2, z) = features(&mut rng, 50);
        let y: Vec<f64> = (0..50).map(|t| 2.0 + 0.5 * x1[t] - 0.1 * x2[t] + 0.3 * z[t]).collect();
        let fit = ols_fit(&dataset(&x1, &x2, &z, &y), 0.0).unwrap();
        for (got, want) in fit.coefficients().iter().zip([2.0, 0.5, -0.1, 0.3]) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
        assert!((fit.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_column_is_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (x1, _, z) = features(&mut rng, 30);
        let y: Vec<f64> = x1.iter().map(|v| v * 2.0).collect();
        let err = ols_fit(&dataset(&x1, &[4.0; 30], &z, &y), 0.0).unwrap_err();
        match err {
            Error::RankDeficient { columns, .. } => assert_eq!(columns, [0, 2]),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        let err = ols_fit(&dataset(&[1.0; 4], &[2.0; 4], &[3.0; 4], &[1.0; 4]), 0.0).unwrap_err();
        assert!(matches!(err, Error::TooFewObservations { needed: 5, got: 4 }));
    }

    #[test]
    fn residuals_are_orthogonal_to_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (x1, x2, z) = features(&mut rng, 80);
        let y: Vec<f64> = (0..80).map(|t| 1.0 + x1[t] - 2.0 * z[t] + rng.random_range(-3.0..3.0) + 0.0 * x2[t]).collect();
        let data = dataset(&x1, &x2, &z, &y);
        let fit = ols_fit(&data, 0.0).unwrap();
        let res = DVector::from_vec(fit.residuals(&data));
        let x = design(&data);
        let y_norm = DVector::from_column_slice(&y).norm();
        for c in 0..x.ncols() {
            let col = x.column(c);
            assert!(col.dot(&res).abs() <= 1e-8 * y_norm * col.norm());
        }
        assert!(fit.r_squared > 0.0 && fit.r_squared < 1.0);
    }

    #[test]
    fn ridge_shrinks_slopes_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (x1, x2, z) = features(&mut rng, 60);
        let y: Vec<f64> = (0..60).map(|t| 3.0 + 0.8 * x1[t] + 0.4 * x2[t] + 0.2 * z[t]).collect();
        let data = dataset(&x1, &x2, &z, &y);
        let plain = ols_fit(&data, 0.0).unwrap();
        let ridged = ols_fit(&data, 1e3).unwrap();
        assert_eq!(ridged.ridge, 1e3);
        let norm = |f: &RegressionCoefficients| f.crowd_slopes.iter().map(|b| b * b).sum::<f64>() + f.self_slope.powi(2);
        assert!(norm(&ridged) < norm(&plain));
    }

    #[test]
    fn noisy_coverage_within_four_standard_errors() {
        let truth = [2.0, 0.5, -0.1, 0.3];
        let mut covered = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let (x1, x2, z) = features(&mut rng, 120);
            let y: Vec<f64> = (0..120)
                .map(|t| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    truth[0] + truth[1] * x1[t] + truth[2] * x2[t] + truth[3] * z[t] + 0.5 * e
                })
                .collect();
            let fit = ols_fit(&dataset(&x1, &x2, &z, &y), 0.0).unwrap();
            let ok = fit
                .coefficients()
                .iter()
                .zip(&fit.standard_errors)
                .zip(truth)
                .all(|((b, se), t)| (b - t).abs() <= 4.0 * se);
            covered += ok as usize;
        }
        assert!(covered >= 190, "covered {covered}/200");
    }
}
