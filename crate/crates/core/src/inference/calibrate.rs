//! Recovery of transport cost, congestion and values from route intercepts
//! by minimizing `sum_{i != j} (A_ij (r_j + c g_ij) - (v_j - v_i))^2`
//! under `sum v = 0`, `sum r = K rbar`, `r >= r_min`, `c >= 0`.
//!
//! Multi-start Levenberg-Marquardt runs in an unconstrained
//! parametrization (`c = gamma^2`, `r = r_min + (K rbar - K r_min)
//! softmax(theta)`, `v` on a zero-sum basis). The residuals are linear in
//! `(c, r, v)`, so the best start is then polished by an exact
//! equality-constrained solve on its active bound set.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::PortNetwork;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteIntercept {
    pub origin: usize,
    pub destination: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub r_min: f64,
    /// Mean congestion fixed by the gauge `sum r = K rbar`.
    pub r_bar: f64,
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Values used (after centering) by the first start.
    pub initial_values: Option<Vec<f64>>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            r_min: 0.1,
            r_bar: 1.0,
            starts: 16,
            seed: 0,
            max_iter: 500,
            initial_values: None,
        }
    }
}

/// Normalizations applied to the recovered parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeRecord {
    pub r_min: f64,
    pub r_bar: f64,
    /// `K * r_bar`.
    pub congestion_total: f64,
    /// `sum v` as returned (zero by construction).
    pub values_sum: f64,
    /// `sum r` as returned.
    pub congestion_sum: f64,
    /// Ports whose congestion sits on `r_min`.
    pub congestion_at_bound: Vec<usize>,
    pub transport_at_bound: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartOutcome {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub transport_cost: f64,
    pub congestion: Vec<f64>,
    pub values: Vec<f64>,
    pub gauge: GaugeRecord,
    pub objective: f64,
    /// `(origin, destination, A (r_j + c g) - (v_j - v_i))`.
    pub route_residuals: Vec<(usize, usize, f64)>,
    /// Routes dropped before fitting (self routes, non-finite intercepts).
    pub excluded_routes: Vec<(usize, usize)>,
    pub starts: Vec<StartOutcome>,
    pub best_start: usize,
    /// Largest relative parameter gap between the best start and any other
    /// start reaching the same objective.
    pub start_spread: f64,
    /// Whether the exact active-set solve replaced the best start.
    pub polished: bool,
    /// Eigenvalues of the objective's Hessian restricted to the gauge
    /// tangent space, ascending.
    pub curvature: Vec<f64>,
    /// Number of (near-)zero curvature directions.
    pub flat_directions: usize,
}

/// Linear residual operator: `residual = J x` with
/// `x = (c, r_0..r_{K-1}, v_0..v_{K-1})`.
struct Problem {
    k: usize,
    routes: Vec<RouteIntercept>,
    jac: DMatrix<f64>,
    r_min: f64,
    r_bar: f64,
}

impl Problem {
    fn dim(&self) -> usize {
        1 + 2 * self.k
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        (&self.jac * x).norm_squared()
    }

    fn congestion_total(&self) -> f64 {
        self.k as f64 * self.r_bar
    }

    /// `x` of the unconstrained parameters `p = (gamma, theta, u)`, plus
    /// `dx/dp`.
    fn map(&self, p: &DVector<f64>, basis: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.k;
        let mut x = DVector::zeros(self.dim());
        let mut d = DMatrix::zeros(self.dim(), p.len());
        let gamma = p[0];
        x[0] = gamma * gamma;
        d[(0, 0)] = 2.0 * gamma;

        let spread = self.congestion_total() - k as f64 * self.r_min;
        let theta = p.rows(1, k);
        let top = theta.max();
        let exp: Vec<f64> = theta.iter().map(|t| libm::exp(t - top)).collect();
        let total: f64 = exp.iter().sum();
        let soft: Vec<f64> = exp.iter().map(|e| e / total).collect();
        for a in 0..k {
            x[1 + a] = self.r_min + spread * soft[a];
            for b in 0..k {
                let delta = if a == b { 1.0 } else { 0.0 };
                d[(1 + a, 1 + b)] = spread * soft[a] * (delta - soft[b]);
            }
        }
        let u = p.rows(1 + k, k - 1);
        let v = basis * u;
        for a in 0..k {
            x[1 + k + a] = v[a];
            for b in 0..k - 1 {
                d[(1 + k + a, 1 + k + b)] = basis[(a, b)];
            }
        }
        (x, d)
    }
}

fn lm(problem: &Problem, start: DVector<f64>, basis: &DMatrix<f64>, max_iter: usize) -> (DVector<f64>, StartOutcome) {
    let mut p = start;
    let (mut x, mut dx) = problem.map(&p, basis);
    let mut res = &problem.jac * &x;
    let mut f = res.norm_squared();
    let mut mu: Option<f64> = None;
    let n = p.len();
    for iteration in 0..max_iter {
        let jp = &problem.jac * &dx;
        let grad = jp.transpose() * &res;
        let jtj = jp.transpose() * &jp;
        let scale = jtj.diagonal().max().max(f64::MIN_POSITIVE);
        if grad.amax() <= 1e-13 * libm::sqrt(scale) * libm::sqrt(f).max(1e-300) || f == 0.0 {
            return (x, StartOutcome { objective: f, iterations: iteration, converged: true });
        }
        let mut damping = *mu.get_or_insert(1e-3 * scale);
        loop {
            let lhs = &jtj + DMatrix::identity(n, n) * damping;
            let Some(step) = lhs.cholesky().map(|c| c.solve(&(-&grad))) else {
                damping *= 4.0;
                continue;
            };
            let trial = &p + &step;
            let (tx, tdx) = problem.map(&trial, basis);
            let tres = &problem.jac * &tx;
            let tf = tres.norm_squared();
            if tf.is_finite() && tf < f {
                let small_step = step.amax() <= 1e-15 * (1.0 + p.amax());
                let small_gain = f - tf <= 1e-15 * f;
                p = trial;
                x = tx;
                dx = tdx;
                res = tres;
                f = tf;
                mu = Some((damping / 3.0).max(1e-15 * scale));
                if small_step || small_gain {
                    return (x, StartOutcome { objective: f, iterations: iteration + 1, converged: true });
                }
                break;
            }
            damping *= 4.0;
            if damping > 1e16 * scale {
                // No descent left at rounding level: a stationary point.
                return (x, StartOutcome { objective: f, iterations: iteration + 1, converged: true });
            }
        }
    }
    (x, StartOutcome { objective: f, iterations: max_iter, converged: false })
}

/// Exact minimizer with the bounds in `at_bound` (congestion ports) and
/// `c_at_bound` held on their limits; all other variables free subject to
/// the two gauge equalities.
fn solve_active(problem: &Problem, at_bound: &[bool], c_at_bound: bool) -> Option<DVector<f64>> {
    let k = problem.k;
    let free: Vec<usize> = (0..k).filter(|&a| !at_bound[a]).collect();
    let fixed_total = problem.r_min * (k - free.len()) as f64;
    let mut xp = DVector::zeros(problem.dim());
    for a in 0..k {
        xp[1 + a] = problem.r_min;
    }
    if free.is_empty() {
        if (fixed_total - problem.congestion_total()).abs() > 1e-12 * problem.congestion_total() {
            return None;
        }
    } else {
        let share = (problem.congestion_total() - fixed_total) / free.len() as f64;
        for &a in &free {
            xp[1 + a] = share;
        }
    }
    let mut cols: Vec<DVector<f64>> = Vec::new();
    if !c_at_bound {
        let mut e = DVector::zeros(problem.dim());
        e[0] = 1.0;
        cols.push(e);
    }
    let hf = linalg::zero_sum_basis(free.len().max(1));
    for c in 0..hf.ncols() {
        let mut e = DVector::zeros(problem.dim());
        for (row, &a) in free.iter().enumerate() {
            e[1 + a] = hf[(row, c)];
        }
        cols.push(e);
    }
    let hv = linalg::zero_sum_basis(k);
    for c in 0..hv.ncols() {
        let mut e = DVector::zeros(problem.dim());
        for a in 0..k {
            e[1 + k + a] = hv[(a, c)];
        }
        cols.push(e);
    }
    if cols.is_empty() {
        return Some(xp);
    }
    let null = DMatrix::from_columns(&cols);
    let jn = &problem.jac * &null;
    let rhs = -(&problem.jac * &xp);
    let svd = linalg::Svd::new(&jn)?;
    let cutoff = svd.max() * 1e-12;
    let z = svd.solve(&rhs, cutoff);
    Some(xp + null * z)
}

/// Active-set refinement seeded with the bounds active at `x`.
fn polish(problem: &Problem, x: &DVector<f64>) -> Option<DVector<f64>> {
    let k = problem.k;
    let tol_r = 1e-7 * problem.r_bar.max(problem.r_min);
    let mut at_bound: Vec<bool> = (0..k).map(|a| x[1 + a] <= problem.r_min + tol_r).collect();
    let mut c_at_bound = x[0] <= 1e-9;
    for _ in 0..4 * (k + 1) {
        let cand = solve_active(problem, &at_bound, c_at_bound)?;
        // Tighten violated bounds.
        let mut changed = false;
        for a in 0..k {
            if !at_bound[a] && cand[1 + a] < problem.r_min {
                at_bound[a] = true;
                changed = true;
            }
        }
        if !c_at_bound && cand[0] < 0.0 {
            c_at_bound = true;
            changed = true;
        }
        if changed {
            continue;
        }
        // Release bounds whose multipliers have the wrong sign.
        let grad = 2.0 * problem.jac.transpose() * (&problem.jac * &cand);
        let free: Vec<usize> = (0..k).filter(|&a| !at_bound[a]).collect();
        let level = if free.is_empty() {
            0.0
        } else {
            free.iter().map(|&a| grad[1 + a]).sum::<f64>() / free.len() as f64
        };
        let gscale = grad.amax().max(f64::MIN_POSITIVE);
        for a in 0..k {
            if at_bound[a] && !free.is_empty() && grad[1 + a] - level < -1e-10 * gscale {
                at_bound[a] = false;
                changed = true;
            }
        }
        if c_at_bound && grad[0] < -1e-10 * gscale {
            c_at_bound = false;
            changed = true;
        }
        if !changed {
            return Some(cand);
        }
    }
    None
}

pub fn calibrate(
    intercepts: &[RouteIntercept],
    network: &PortNetwork,
    config: &CalibrationConfig,
) -> Result<CalibrationResult> {
    let k = network.size();
    if !(config.r_min > 0.0) || !config.r_bar.is_finite() {
        return Err(Error::InvalidInput("r_min must be positive and r_bar finite".into()));
    }
    if config.r_min > config.r_bar {
        return Err(Error::GaugeInfeasible {
            r_min: config.r_min,
            r_bar: config.r_bar,
        });
    }
    if config.starts == 0 {
        return Err(Error::InvalidInput("at least one start is required".into()));
    }
    let mut routes = Vec::new();
    let mut excluded_routes = Vec::new();
    for r in intercepts {
        if r.origin >= k || r.destination >= k {
            return Err(Error::InvalidInput(alloc::format!(
                "route {}->{} outside a {k}-port network",
                r.origin,
                r.destination
            )));
        }
        if r.origin == r.destination || !r.value.is_finite() {
            excluded_routes.push((r.origin, r.destination));
        } else {
            routes.push(*r);
        }
    }
    if routes.len() < k + 1 {
        return Err(Error::InsufficientRoutes {
            needed: k + 1,
            got: routes.len(),
        });
    }

    let mut jac = DMatrix::zeros(routes.len(), 1 + 2 * k);
    for (row, r) in routes.iter().enumerate() {
        let (i, j) = (r.origin, r.destination);
        jac[(row, 0)] = r.value * network.transport_kernel(i, j);
        jac[(row, 1 + j)] = r.value;
        jac[(row, 1 + k + j)] -= 1.0;
        jac[(row, 1 + k + i)] += 1.0;
    }
    let problem = Problem {
        k,
        routes,
        jac,
        r_min: config.r_min,
        r_bar: config.r_bar,
    };
    if let Some(v0) = &config.initial_values {
        if v0.len() != k {
            return Err(Error::DimensionMismatch {
                what: "initial values",
                expected: k,
                got: v0.len(),
            });
        }
    }

    let basis = linalg::zero_sum_basis(k);
    let value_scale = problem.routes.iter().map(|r| r.value.abs()).sum::<f64>() / problem.routes.len() as f64
        * config.r_bar.max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut starts = Vec::with_capacity(config.starts);
    let mut endpoints: Vec<DVector<f64>> = Vec::with_capacity(config.starts);
    for s in 0..config.starts {
        let mut p = DVector::zeros(2 * k);
        if s == 0 {
            p[0] = 0.7;
            if let Some(v0) = &config.initial_values {
                let u = basis.transpose() * DVector::from_column_slice(v0);
                p.rows_mut(1 + k, k - 1).copy_from(&u);
            }
        } else {
            p[0] = rng.random_range(0.2..1.5);
            for a in 0..k {
                let z: f64 = StandardNormal.sample(&mut rng);
                p[1 + a] = 0.5 * z;
            }
            for b in 0..k - 1 {
                let z: f64 = StandardNormal.sample(&mut rng);
                p[1 + k + b] = value_scale * z;
            }
        }
        let (x, outcome) = lm(&problem, p, &basis, config.max_iter);
        starts.push(outcome);
        endpoints.push(x);
    }

    let best_start = (0..starts.len())
        .filter(|&s| starts[s].converged)
        .min_by(|&a, &b| starts[a].objective.total_cmp(&starts[b].objective))
        .ok_or(Error::SolverFailure { starts: config.starts })?;
    let best_f = starts[best_start].objective;
    let best_x = endpoints[best_start].clone();
    let xscale = best_x.amax().max(f64::MIN_POSITIVE);
    let f_scale = problem.objective(&DVector::from_fn(problem.dim(), |a, _| {
        if (1..=k).contains(&a) { config.r_bar } else { 0.0 }
    }));
    let start_spread = (0..starts.len())
        .filter(|&s| starts[s].converged && starts[s].objective <= best_f * (1.0 + 1e-6) + 1e-20 * f_scale.max(1.0))
        .map(|s| (&endpoints[s] - &best_x).amax() / xscale)
        .fold(0.0, f64::max);

    let (mut x, polished) = match polish(&problem, &best_x) {
        Some(px) if problem.objective(&px) <= best_f * (1.0 + 1e-9) + 1e-24 * f_scale.max(1.0) => (px, true),
        _ => (best_x, false),
    };

    // Snap the gauge so the sums hold to the last bit.
    let vsum: f64 = (0..k - 1).map(|a| x[1 + k + a]).sum();
    x[2 * k] = -vsum;
    let tol_r = 1e-9 * config.r_bar;
    let mut congestion_at_bound = Vec::new();
    for a in 0..k {
        if x[1 + a] <= config.r_min + tol_r {
            x[1 + a] = config.r_min;
            congestion_at_bound.push(a);
        }
    }
    if let Some(last_free) = (0..k).rev().find(|a| !congestion_at_bound.contains(a)) {
        let others: f64 = (0..k).filter(|&a| a != last_free).map(|a| x[1 + a]).sum();
        x[1 + last_free] = problem.congestion_total() - others;
    }
    let transport_at_bound = x[0] <= 1e-12 * xscale;
    if transport_at_bound {
        x[0] = 0.0;
    }

    let residual = &problem.jac * &x;
    let route_residuals = problem
        .routes
        .iter()
        .zip(residual.iter())
        .map(|(r, e)| (r.origin, r.destination, *e))
        .collect();

    // Curvature on the gauge tangent space {sum dr = 0, sum dv = 0}.
    let mut tangent = DMatrix::zeros(problem.dim(), 2 * k - 1);
    tangent[(0, 0)] = 1.0;
    for c in 0..k - 1 {
        for a in 0..k {
            tangent[(1 + a, 1 + c)] = basis[(a, c)];
            tangent[(1 + k + a, k + c)] = basis[(a, c)];
        }
    }
    let reduced = &problem.jac * &tangent;
    let hessian = 2.0 * reduced.transpose() * reduced;
    let mut curvature: Vec<f64> = hessian.symmetric_eigenvalues().iter().copied().collect();
    curvature.sort_by(f64::total_cmp);
    let top = curvature.last().copied().unwrap_or(0.0).abs();
    let flat_directions = curvature.iter().filter(|e| e.abs() <= 1e-10 * top || top == 0.0).count();

    let values: Vec<f64> = (0..k).map(|a| x[1 + k + a]).collect();
    let congestion: Vec<f64> = (0..k).map(|a| x[1 + a]).collect();
    let gauge = GaugeRecord {
        r_min: config.r_min,
        r_bar: config.r_bar,
        congestion_total: problem.congestion_total(),
        values_sum: values.iter().sum(),
        congestion_sum: congestion.iter().sum(),
        congestion_at_bound,
        transport_at_bound,
    };
    Ok(CalibrationResult {
        transport_cost: x[0],
        objective: residual.norm_squared(),
        congestion,
        values,
        gauge,
        route_residuals,
        excluded_routes,
        starts,
        best_start,
        start_spread,
        polished,
        curvature,
        flat_directions,
    })
}

/// `A_ij = (v_j - v_i) / (r_j + c g_ij)` over all routes `i != j`.
pub fn forward_intercepts(
    network: &PortNetwork,
    transport_cost: f64,
    congestion: &[f64],
    values: &[f64],
) -> Vec<RouteIntercept> {
    let k = network.size();
    let mut out = vec![];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                out.push(RouteIntercept {
                    origin: i,
                    destination: j,
                    value: (values[j] - values[i]) / (congestion[j] + transport_cost * network.transport_kernel(i, j)),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Kernel;
    use alloc::format;
    use alloc::string::String;
    use approx::assert_relative_eq;

    fn network(k: usize, seed: u64) -> PortNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i + 1..k {
                let v = rng.random_range(0.5..2.0);
                t[(i, j)] = v;
                t[(j, i)] = v;
            }
        }
        let labels: Vec<String> = (0..k).map(|i| format!("P{i}")).collect();
        PortNetwork::new(labels, t, Kernel::Linear).unwrap()
    }

    fn truth(k: usize) -> (f64, Vec<f64>, Vec<f64>) {
        let mut r: Vec<f64> = (0..k).map(|a| 0.6 + 0.17 * ((a * 7) % 5) as f64).collect();
        let s: f64 = r.iter().sum();
        r.iter_mut().for_each(|x| *x *= k as f64 / s);
        let mut v: Vec<f64> = (0..k).map(|a| libm::sin(1.3 * a as f64 + 0.4)).collect();
        let m = v.iter().sum::<f64>() / k as f64;
        v.iter_mut().for_each(|x| *x -= m);
        (0.45, r, v)
    }

    #[test]
    fn exact_intercepts_round_trip() {
        for k in [3, 5, 6] {
            let net = network(k, k as u64);
            let (c, r, v) = truth(k);
            let a = forward_intercepts(&net, c, &r, &v);
            let res = calibrate(&a, &net, &CalibrationConfig::default()).unwrap();
            assert_relative_eq!(res.transport_cost, c, max_relative = 1e-6);
            for p in 0..k {
                assert_relative_eq!(res.congestion[p], r[p], max_relative = 1e-6);
                assert!((res.values[p] - v[p]).abs() <= 1e-6 * v.iter().fold(0.0_f64, |m, x| m.max(x.abs())));
            }
            assert_eq!(res.gauge.values_sum, 0.0);
            assert!((res.gauge.congestion_sum - k as f64).abs() <= 4.0 * f64::EPSILON * k as f64);
            assert!(res.objective < 1e-20);
            assert_eq!(res.flat_directions, 0);
        }
    }

    #[test]
    fn zero_intercepts_flag_flat_directions() {
        let k = 4;
        let net = network(k, 1);
        let a: Vec<RouteIntercept> = forward_intercepts(&net, 0.3, &[1.0; 4], &[0.0; 4]);
        assert!(a.iter().all(|r| r.value == 0.0));
        let res = calibrate(&a, &net, &CalibrationConfig::default()).unwrap();
        assert!(res.values.iter().all(|v| v.abs() < 1e-12));
        assert!(res.objective < 1e-24);
        assert!(res.flat_directions >= k - 1);
        assert_relative_eq!(res.gauge.congestion_sum, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn shifted_truth_gives_identical_intercepts_and_recovery() {
        let k = 4;
        let net = network(k, 2);
        let (c, r, v) = truth(k);
        let shifted: Vec<f64> = v.iter().map(|x| x + 3.0).collect();
        let a = forward_intercepts(&net, c, &r, &v);
        let b = forward_intercepts(&net, c, &r, &shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.value - y.value).abs() <= 1e-14);
        }
        let ra = calibrate(&a, &net, &CalibrationConfig::default()).unwrap();
        let rb = calibrate(&b, &net, &CalibrationConfig::default()).unwrap();
        for p in 0..k {
            assert!((ra.values[p] - rb.values[p]).abs() < 1e-9);
        }
    }

    #[test]
    fn shifted_initialization_leaves_objective_unchanged() {
        let k = 5;
        let net = network(k, 3);
        let (c, r, v) = truth(k);
        let mut a = forward_intercepts(&net, c, &r, &v);
        for (n, route) in a.iter_mut().enumerate() {
            route.value *= 1.0 + 0.05 * libm::sin(n as f64);
        }
        let v0: Vec<f64> = (0..k).map(|p| 0.1 * p as f64).collect();
        let base = CalibrationConfig { initial_values: Some(v0.clone()), ..Default::default() };
        let shifted = CalibrationConfig {
            initial_values: Some(v0.iter().map(|x| x + 10.0).collect()),
            ..Default::default()
        };
        let ra = calibrate(&a, &net, &base).unwrap();
        let rb = calibrate(&a, &net, &shifted).unwrap();
        assert!(ra.polished && rb.polished);
        assert!((ra.objective - rb.objective).abs() <= f64::EPSILON * ra.objective);
    }

    #[test]
    fn infeasible_gauge_and_too_few_routes() {
        let net = network(3, 4);
        let a = forward_intercepts(&net, 0.2, &[1.0; 3], &[0.0, 1.0, -1.0]);
        let cfg = CalibrationConfig { r_min: 2.0, r_bar: 1.0, ..Default::default() };
        assert!(matches!(calibrate(&a, &net, &cfg), Err(Error::GaugeInfeasible { .. })));
        let err = calibrate(&a[..3], &net, &CalibrationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientRoutes { needed: 4, got: 3 }));
    }

    #[test]
    fn bounds_hold_when_data_push_against_them() {
        let k = 4;
        let net = network(k, 5);
        // A port with tiny true congestion relative to the gauge.
        let r = [0.05, 1.3, 1.3, 1.35];
        let v = [0.5, -0.2, 0.1, -0.4];
        let a = forward_intercepts(&net, 0.4, &r, &v);
        let res = calibrate(&a, &net, &CalibrationConfig::default()).unwrap();
        assert!(res.congestion.iter().all(|x| *x >= 0.1));
        assert!(res.transport_cost >= 0.0);
        assert_eq!(res.gauge.congestion_at_bound, [0]);
    }
}
