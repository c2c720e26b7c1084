//! Representative-good linear system `Omega phi = m`.
//!
//! With `R_j = 1/r_j + sum_i w_ij`, `m_j = (sum_i w_ij / r_j) Mbar_j` and
//! `C_jl = (sum_i w_ij wn_il) r_l / r_j + wn_lj / r_j`, stationarity of the
//! closed-form control reads `sum_l (R_j 1{j=l} - C_jl) phi_l = m_j`.
//!
//! Mass conservation makes `r^T Omega = 0` and `r^T m = 0` for every
//! instance, so `Omega` alone is always singular. The equilibrium is pinned
//! by the capacity: one row of `Omega` (the one with the largest `r_j`,
//! which the others reproduce with coefficients at most one) is replaced by
//! the mass row `s * 1^T`. Uniqueness is decided on that matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{check_shapes, compute_weights, CostParameters, GoodValues, PortNetwork};

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaSystem {
    /// `R_j`.
    pub diagonal: DVector<f64>,
    /// `m_j`.
    pub rhs: DVector<f64>,
    /// `C_jl`.
    pub coupling: DMatrix<f64>,
    /// `Omega_jl = R_j 1{j=l} - C_jl`.
    pub omega: DMatrix<f64>,
    pub determinant: f64,
    pub condition_estimate: f64,
    /// Determinant of `R_j 1{j=l} - C_lj`.
    pub transposed_determinant: f64,
    /// `max |r^T Omega| / (max r * max |Omega|)`; zero up to rounding.
    pub mass_identity_residual: f64,
    /// Congestion coefficients the system was built with.
    pub congestion: DVector<f64>,
    /// `Omega` with row `replaced_row` swapped for `mass_scale * 1^T`.
    pub constrained: DMatrix<f64>,
    pub replaced_row: usize,
    pub mass_scale: f64,
    pub constrained_determinant: f64,
    pub constrained_condition: f64,
}

impl OmegaSystem {
    pub fn size(&self) -> usize {
        self.diagonal.len()
    }

    /// Multiplies the whole system by `lambda > 0`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let k = self.size() as i32;
        let constrained = &self.constrained * lambda;
        Self {
            diagonal: &self.diagonal * lambda,
            rhs: &self.rhs * lambda,
            coupling: &self.coupling * lambda,
            omega: &self.omega * lambda,
            determinant: self.determinant * libm::pow(lambda, k as f64),
            condition_estimate: self.condition_estimate,
            transposed_determinant: self.transposed_determinant * libm::pow(lambda, k as f64),
            mass_identity_residual: self.mass_identity_residual,
            congestion: self.congestion.clone(),
            constrained_determinant: constrained.determinant(),
            constrained_condition: linalg::condition_number(&constrained),
            constrained,
            replaced_row: self.replaced_row,
            mass_scale: self.mass_scale * lambda,
        }
    }
}

/// Builds the representative-good system from the weights and margins of
/// `good`.
pub fn build_omega(
    params: &CostParameters,
    network: &PortNetwork,
    values: &GoodValues,
    good: usize,
) -> Result<OmegaSystem> {
    check_shapes(params, network, values)?;
    let k = network.size();
    let weights = compute_weights(params, network, good)?;
    let w = &weights.raw;
    let wn = &weights.normalized;
    let r = params.congestion();

    let half_margin = |i: usize, j: usize| 0.5 * values.margin(good, i, j);
    // Relative margin of route (i, j) against the weighted barycenter of i.
    let relative = DMatrix::from_fn(k, k, |i, j| {
        let barycenter: f64 = (0..k).map(|l| wn[(i, l)] * half_margin(i, l)).sum();
        half_margin(i, j) - barycenter
    });

    let column_weight = DVector::from_fn(k, |j, _| w.column(j).sum());
    let diagonal = DVector::from_fn(k, |j, _| 1.0 / r[j] + column_weight[j]);
    let rhs = DVector::from_fn(k, |j, _| {
        // (sum_i w_ij / r_j) * Mbar_j with Mbar_j the w-weighted mean of
        // the relative margins into j.
        let weighted: f64 = (0..k).map(|i| w[(i, j)] * relative[(i, j)]).sum();
        weighted / r[j]
    });
    let coupling = DMatrix::from_fn(k, k, |j, l| {
        let cross: f64 = (0..k).map(|i| w[(i, j)] * wn[(i, l)]).sum();
        cross * r[l] / r[j] + wn[(l, j)] / r[j]
    });
    let omega = DMatrix::from_fn(k, k, |j, l| if j == l { diagonal[j] } else { 0.0 } - coupling[(j, l)]);
    let transposed =
        DMatrix::from_fn(k, k, |j, l| if j == l { diagonal[j] } else { 0.0 } - coupling[(l, j)]);

    let left = r.transpose() * &omega;
    let omega_scale = linalg::max_abs(&omega);
    let r_max = r.iter().fold(0.0_f64, |m, v| m.max(*v));
    let mass_identity_residual = if omega_scale > 0.0 {
        left.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / (r_max * omega_scale)
    } else {
        0.0
    };

    let replaced_row = r.argmax().0;
    let mass_scale = if omega_scale > 0.0 { omega_scale } else { 1.0 };
    let mut constrained = omega.clone();
    constrained.row_mut(replaced_row).fill(mass_scale);

    Ok(OmegaSystem {
        determinant: omega.determinant(),
        condition_estimate: linalg::condition_number(&omega),
        transposed_determinant: transposed.determinant(),
        mass_identity_residual,
        congestion: r.clone(),
        constrained_determinant: constrained.determinant(),
        constrained_condition: linalg::condition_number(&constrained),
        constrained,
        replaced_row,
        mass_scale,
        diagonal,
        rhs,
        coupling,
        omega,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Unique,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExistenceConfig {
    /// Relative determinant threshold: `|det| > tol_det * scale^K`.
    pub tol_det: f64,
    pub condition_cap: f64,
}

impl Default for ExistenceConfig {
    fn default() -> Self {
        Self {
            tol_det: 1e-10,
            condition_cap: 1e12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExistenceReport {
    pub verdict: Verdict,
    /// `|det Omega| / max|Omega|^K` of the unconstrained matrix.
    pub relative_determinant: f64,
    pub raw_determinant_vanishes: bool,
    /// `|det| / scale^K` of the mass-constrained matrix.
    pub constrained_relative_determinant: f64,
    pub constrained_condition: f64,
    pub determinant: f64,
    pub transposed_determinant: f64,
    pub constrained_determinant: f64,
}

fn relative_det(det: f64, m: &DMatrix<f64>) -> f64 {
    let scale = linalg::max_abs(m);
    if scale == 0.0 {
        return 0.0;
    }
    det.abs() / libm::pow(scale, m.nrows() as f64)
}

/// Existence/uniqueness verdict of the representative mean-field
/// equilibrium. Scale-relative, so multiplying the system by a positive
/// constant never flips it.
pub fn existence_check(system: &OmegaSystem, config: &ExistenceConfig) -> ExistenceReport {
    let relative_determinant = relative_det(system.determinant, &system.omega);
    let constrained_relative_determinant =
        relative_det(system.constrained_determinant, &system.constrained);
    let unique = constrained_relative_determinant > config.tol_det
        && system.constrained_condition < config.condition_cap;
    ExistenceReport {
        verdict: if unique { Verdict::Unique } else { Verdict::Degenerate },
        relative_determinant,
        raw_determinant_vanishes: relative_determinant <= config.tol_det,
        constrained_relative_determinant,
        constrained_condition: system.constrained_condition,
        determinant: system.determinant,
        transposed_determinant: system.transposed_determinant,
        constrained_determinant: system.constrained_determinant,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativeSolution {
    pub occupancy: DVector<f64>,
    /// `max |Omega phi - m|`.
    pub residual: f64,
    pub mass: f64,
}

/// Solves `Omega phi = m` together with `sum phi = capacity`.
pub fn representative_solve(
    system: &OmegaSystem,
    capacity: f64,
    config: &ExistenceConfig,
) -> Result<RepresentativeSolution> {
    let report = existence_check(system, config);
    if report.verdict == Verdict::Degenerate {
        return Err(Error::DegenerateSystem {
            determinant: system.constrained_determinant,
            condition: system.constrained_condition,
        });
    }
    let mut rhs = system.rhs.clone();
    rhs[system.replaced_row] = system.mass_scale * capacity;
    let occupancy = system
        .constrained
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(Error::DegenerateSystem {
            determinant: system.constrained_determinant,
            condition: system.constrained_condition,
        })?;
    let residual = linalg::max_abs_vec(&(&system.omega * &occupancy - &system.rhs));
    let bound = 1e-8
        * linalg::max_abs_vec(&system.rhs)
            .max(linalg::max_abs(&system.omega) * linalg::max_abs_vec(&occupancy));
    if !(residual <= bound) {
        return Err(Error::DegenerateSystem {
            determinant: system.constrained_determinant,
            condition: system.constrained_condition,
        });
    }
    Ok(RepresentativeSolution {
        mass: occupancy.sum(),
        occupancy,
        residual,
    })
}
