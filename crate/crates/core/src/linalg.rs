//! Small dense helpers on top of nalgebra.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

/// Sum that does not depend on the order of its terms: they are added in
/// ascending order. Keeps reductions over ports exact under relabeling.
pub(crate) fn order_free_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = terms.into_iter().collect();
    v.sort_unstable_by(f64::total_cmp);
    v.iter().sum()
}

/// Thin singular value decomposition `m = u diag(s) v_t`, singular values
/// in descending order. Computed with faer: nalgebra's bidiagonal SVD can
/// lose several digits on well-conditioned matrices.
pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    /// `None` when the decomposition fails to converge.
    pub fn new(m: &DMatrix<f64>) -> Option<Self> {
        let (rows, cols) = m.shape();
        let rank = rows.min(cols);
        if rank == 0 {
            return Some(Self {
                u: DMatrix::zeros(rows, 0),
                singular_values: DVector::zeros(0),
                v_t: DMatrix::zeros(0, cols),
            });
        }
        let svd = to_faer(m).thin_svd().ok()?;
        let s = svd.S().column_vector();
        Some(Self {
            u: DMatrix::from_fn(rows, rank, |i, j| svd.U()[(i, j)]),
            singular_values: DVector::from_fn(rank, |i, _| s[i]),
            v_t: DMatrix::from_fn(rank, cols, |i, j| svd.V()[(j, i)]),
        })
    }

    pub fn max(&self) -> f64 {
        self.singular_values.iter().fold(0.0, |m, s| m.max(*s))
    }

    /// Minimum-norm least-squares solution of `m x = b`, ignoring singular
    /// values at or below `cutoff`.
    pub fn solve(&self, b: &DVector<f64>, cutoff: f64) -> DVector<f64> {
        let mut coords = self.u.tr_mul(b);
        for (c, s) in coords.iter_mut().zip(self.singular_values.iter()) {
            *c = if *s > cutoff { *c / s } else { 0.0 };
        }
        self.v_t.tr_mul(&coords)
    }
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Singular values sorted in ascending order; NaN entries when the
/// decomposition fails.
pub(crate) fn singular_values_ascending(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = match to_faer(m).singular_values() {
        Ok(s) => s,
        Err(_) => alloc::vec![f64::NAN; m.nrows().min(m.ncols())],
    };
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

/// 2-norm condition number; infinite for singular matrices.
pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values_ascending(m);
    match (s.first(), s.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub(crate) fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub(crate) fn frobenius(m: &DMatrix<f64>) -> f64 {
    libm::sqrt(m.iter().map(|v| v * v).sum())
}

/// Least-squares solve of a (possibly rectangular) system through the SVD.
pub(crate) fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = Svd::new(a)?;
    let cutoff = svd.max() * 1e-15;
    Some(svd.solve(b, cutoff))
}

/// Orthonormal basis of `{x : sum x = 0}` in `R^k` (Helmert contrasts),
/// one basis vector per column.
pub(crate) fn zero_sum_basis(k: usize) -> DMatrix<f64> {
    let mut basis = DMatrix::zeros(k, k.saturating_sub(1));
    for c in 0..k.saturating_sub(1) {
        let len = (c + 1) as f64;
        let norm = libm::sqrt(len * (len + 1.0));
        for r in 0..=c {
            basis[(r, c)] = 1.0 / norm;
        }
        basis[(c + 1, c)] = -len / norm;
    }
    basis
}

/// Minimizes `cost . x` subject to `g x >= h` and `x >= 0` with a dense
/// two-phase tableau simplex under Bland's rule. `None` when the program is
/// infeasible or unbounded.
pub(crate) fn linprog_ge(cost: &[f64], g: &DMatrix<f64>, h: &[f64]) -> Option<Vec<f64>> {
    let (m, n) = g.shape();
    // Columns: x, surplus, artificial, rhs.
    let cols = n + 2 * m;
    let mut t = DMatrix::zeros(m + 1, cols + 1);
    let mut basis = Vec::with_capacity(m);
    for r in 0..m {
        let sign = if h[r] >= 0.0 { 1.0 } else { -1.0 };
        for c in 0..n {
            t[(r, c)] = sign * g[(r, c)];
        }
        t[(r, n + r)] = -sign;
        t[(r, cols)] = sign * h[r];
        if sign > 0.0 {
            t[(r, n + m + r)] = 1.0;
            basis.push(n + m + r);
        } else {
            basis.push(n + r);
        }
    }
    let scale = 1.0 + max_abs(&t);
    let eps = 1e-11 * scale;

    let phase_one: Vec<f64> = (0..cols).map(|c| if c >= n + m { 1.0 } else { 0.0 }).collect();
    set_objective(&mut t, &basis, &phase_one);
    if !simplex(&mut t, &mut basis, cols, eps) || -t[(m, cols)] > 1e-9 * scale {
        return None;
    }
    // Pivot leftover zero-level artificials out where possible.
    for r in 0..m {
        if basis[r] >= n + m {
            if let Some(c) = (0..n + m).find(|&c| t[(r, c)].abs() > eps) {
                pivot(&mut t, r, c);
                basis[r] = c;
            }
        }
    }
    let phase_two: Vec<f64> = (0..cols).map(|c| if c < n { cost[c] } else { 0.0 }).collect();
    set_objective(&mut t, &basis, &phase_two);
    if !simplex(&mut t, &mut basis, n + m, eps) {
        return None;
    }
    let mut x = alloc::vec![0.0; n];
    for (r, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] = t[(r, cols)];
        }
    }
    Some(x)
}

fn set_objective(t: &mut DMatrix<f64>, basis: &[usize], cost: &[f64]) {
    let (rows, width) = t.shape();
    let m = rows - 1;
    for c in 0..width {
        t[(m, c)] = if c < cost.len() { cost[c] } else { 0.0 };
    }
    for (r, &b) in basis.iter().enumerate() {
        let cb = cost[b];
        if cb != 0.0 {
            for c in 0..width {
                t[(m, c)] -= cb * t[(r, c)];
            }
        }
    }
}

fn pivot(t: &mut DMatrix<f64>, row: usize, col: usize) {
    let p = t[(row, col)];
    let width = t.ncols();
    for c in 0..width {
        t[(row, c)] /= p;
    }
    for r in 0..t.nrows() {
        let f = t[(r, col)];
        if r != row && f != 0.0 {
            for c in 0..width {
                t[(r, c)] -= f * t[(row, c)];
            }
        }
    }
}

/// Runs pivots with entering columns restricted to `0..allowed`; false when
/// the objective is unbounded below.
fn simplex(t: &mut DMatrix<f64>, basis: &mut [usize], allowed: usize, eps: f64) -> bool {
    let m = basis.len();
    let rhs = t.ncols() - 1;
    loop {
        let Some(col) = (0..allowed).find(|&c| t[(m, c)] < -eps) else {
            return true;
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            if t[(r, col)] > eps {
                let ratio = t[(r, rhs)] / t[(r, col)];
                let better = match leave {
                    None => true,
                    Some((lr, best)) => ratio < best - eps || (ratio <= best + eps && basis[r] < basis[lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let Some((row, _)) = leave else {
            return false;
        };
        pivot(t, row, col);
        basis[row] = col;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helmert_basis_is_orthonormal_and_centered() {
        for k in 1..6 {
            let b = zero_sum_basis(k);
            let gram = b.transpose() * &b;
            assert!((gram - DMatrix::identity(k - 1, k - 1)).abs().max() < 1e-14);
            for c in 0..k.saturating_sub(1) {
                assert!(b.column(c).sum().abs() < 1e-14);
            }
        }
    }

    #[test]
    fn condition_of_singular_is_infinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(condition_number(&m) > 1e15);
        assert_eq!(condition_number(&DMatrix::identity(3, 3)), 1.0);
    }

    #[test]
    fn linear_program_small_cases() {
        // min x + y  s.t.  x + 2y >= 4, 3x + y >= 6  ->  (1.6, 1.2).
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]);
        let x = linprog_ge(&[1.0, 1.0], &g, &[4.0, 6.0]).unwrap();
        assert!((x[0] - 1.6).abs() < 1e-12 && (x[1] - 1.2).abs() < 1e-12, "{x:?}");
        // Upper bound written as -x >= -3 with a negative-cost variable.
        let g = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert_eq!(linprog_ge(&[-1.0], &g, &[-3.0]).unwrap(), [3.0]);
        // Unbounded and infeasible programs.
        assert!(linprog_ge(&[-1.0], &DMatrix::from_row_slice(1, 1, &[1.0]), &[1.0]).is_none());
        let g = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        assert!(linprog_ge(&[1.0], &g, &[2.0, -1.0]).is_none());
    }

    #[test]
    fn svd_reconstructs_and_solves_a_hard_transition_system() {
        // Transposed transition matrix minus identity, stacked with a mass
        // row: a well-conditioned system on which bidiagonal SVD loses
        // about four digits.
        let q = [
            [0.2919398919244535, 0.10855504233781925, 0.12726357551857895, 0.09865240139446128, 0.16121379633138502, 0.12316971001376631],
            [0.17700711150185952, 0.4383650316628698, 0.12606474720569116, 0.2766282271729117, 0.30316983129165864, 0.122272621677675],
            [0.1668580288187823, 0.10227750942245717, 0.40654209377952877, 0.1137083929269491, 0.18017092379353217, 0.1644059688733356],
            [0.08099656954298595, 0.12189367019597018, 0.07556150620169125, 0.1693804413883452, 0.09735906981948637, 0.15013209243870093],
            [0.1406107350299391, 0.13892167704056305, 0.11955544120957558, 0.10883672793303295, 0.1382698788748584, 0.09405608817881983],
            [0.14258766318197968, 0.08998706934032089, 0.14501263608493445, 0.23279380918430037, 0.11981649988907928, 0.34596351881770154],
        ];
        let m = DMatrix::from_fn(7, 6, |i, j| if i == 6 { 1.0 } else { q[i][j] - if i == j { 1.0 } else { 0.0 } });
        let svd = Svd::new(&m).unwrap();
        let rebuilt = &svd.u * DMatrix::from_diagonal(&svd.singular_values) * &svd.v_t;
        assert!(max_abs(&(rebuilt - &m)) < 1e-13);
        let mut rhs = DVector::zeros(7);
        rhs[6] = 100.0;
        let x = lstsq(&m, &rhs).unwrap();
        assert!(max_abs_vec(&(&m * &x - &rhs)) < 1e-12);
    }
}
