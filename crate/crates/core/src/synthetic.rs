//! Seeded ground-truth instances and flow series generated from them.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::equilibrium::{build_omega, existence_check, fixed_point, EquilibriumResult, ExistenceConfig, FixedPointConfig, Verdict};
use crate::error::{Error, Result};
use crate::inference::{forward_average, CrowdednessConfig};
use crate::linalg::linprog_ge;
use crate::model::{aggregate_occupancy, compute_weights, CostParameters, GoodValues, Kernel, MeanField, PortNetwork};
use crate::series::{Day, FlowSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationMode {
    /// Flows follow the per-route regression model exactly, with the
    /// crowdedness and import regressors reconstructible from the series.
    RegressionExact,
    /// Flows scatter around the solved equilibrium `phi*_i Q*_ij`.
    EquilibriumConsistent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub ports: usize,
    pub goods: usize,
    pub horizon_days: usize,
    /// Relative standard deviation of the multiplicative flow noise.
    pub noise_sigma: f64,
    pub mode: SimulationMode,
    pub congestion_range: (f64, f64),
    pub transport_range: (f64, f64),
    pub value_range: (f64, f64),
    pub travel_cost_range: (f64, f64),
    pub capacity_range: (f64, f64),
    /// Truth is rescaled so that `sum r = K r_bar`.
    pub r_bar: f64,
    pub start_day: Day,
    /// Relative standard deviation of the daily inflow process.
    pub inflow_variation: f64,
    /// Positivity margin of the regression-exact mean flows, in units of
    /// `inflow_variation`.
    pub flow_margin: f64,
    /// AR(1) coefficient of the inflow process.
    pub persistence: f64,
    pub crowdedness: CrowdednessConfig,
    pub import_window: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            ports: 5,
            goods: 1,
            horizon_days: 1000,
            noise_sigma: 0.0,
            mode: SimulationMode::RegressionExact,
            congestion_range: (0.5, 1.5),
            transport_range: (0.5, 2.0),
            value_range: (-1.0, 1.0),
            travel_cost_range: (0.2, 3.0),
            capacity_range: (80.0, 120.0),
            r_bar: 1.0,
            // 2018-06-01.
            start_day: Day(17683),
            inflow_variation: 0.025,
            flow_margin: 2.0,
            persistence: 0.9,
            crowdedness: CrowdednessConfig::default(),
            import_window: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("synthetic spec: {what}")));
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if self.ports == 0 || self.goods == 0 {
            return bad("need at least one port and one good");
        }
        for (name, range, min) in [
            ("congestion", self.congestion_range, f64::MIN_POSITIVE),
            ("transport", self.transport_range, 0.0),
            ("travel cost", self.travel_cost_range, 0.0),
            ("capacity", self.capacity_range, f64::MIN_POSITIVE),
        ] {
            if !ordered(range) || range.0 < min {
                return bad(&format!("{name} range {range:?} is invalid"));
            }
        }
        if !ordered(self.value_range) {
            return bad("value range is invalid");
        }
        if !(self.r_bar > 0.0) || !(self.noise_sigma >= 0.0) || !(self.inflow_variation >= 0.0) || !(self.flow_margin >= 0.0) {
            return bad("r_bar must be positive; noise, inflow variation and flow margin nonnegative");
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return bad("persistence must lie in [0, 1)");
        }
        self.crowdedness.validate()?;
        if self.import_window == 0 {
            return bad("import window must be at least one day");
        }
        let needed = self.crowdedness.lookahead() + self.ports + 3 + self.import_window - 1;
        if self.horizon_days < needed {
            return bad(&format!("horizon {} shorter than the {needed} days regressions need", self.horizon_days));
        }
        Ok(())
    }

    pub fn port_labels(&self) -> Vec<String> {
        (0..self.ports).map(|i| format!("P{i}")).collect()
    }

    pub fn good_labels(&self) -> Vec<String> {
        (0..self.goods).map(|n| format!("G{n}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub network: PortNetwork,
    pub params: CostParameters,
    pub values: GoodValues,
    /// Draws rejected as degenerate before this one.
    pub resampled: usize,
}

const MAX_RESAMPLES: usize = 1000;

/// Draws an instance with `sum v = 0` per good and `sum r = K r_bar`.
/// Draws whose representative system is degenerate for some good are
/// redrawn and counted.
pub fn generate_instance(spec: &SyntheticSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    let k = spec.ports;
    let n = spec.goods;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo < hi { rng.random_range(lo..hi) } else { lo };
    for resampled in 0..MAX_RESAMPLES {
        let mut r: Vec<f64> = (0..k).map(|_| uniform(&mut rng, spec.congestion_range)).collect();
        let total: f64 = r.iter().sum();
        r.iter_mut().for_each(|x| *x *= k as f64 * spec.r_bar / total);
        let c: Vec<f64> = (0..n).map(|_| uniform(&mut rng, spec.transport_range)).collect();
        let f: Vec<f64> = (0..n).map(|_| uniform(&mut rng, spec.capacity_range)).collect();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i + 1..k {
                let d = uniform(&mut rng, spec.travel_cost_range);
                t[(i, j)] = d;
                t[(j, i)] = d;
            }
        }
        let mut v = DMatrix::from_fn(n, k, |_, _| 0.0);
        for g in 0..n {
            for i in 0..k {
                v[(g, i)] = uniform(&mut rng, spec.value_range);
            }
            let mean = v.row(g).sum() / k as f64;
            for i in 0..k {
                v[(g, i)] -= mean;
            }
        }
        let network = PortNetwork::new(spec.port_labels(), t, Kernel::Linear)?;
        let params = CostParameters::new(r, c, f)?;
        let values = GoodValues::new(v)?;
        let mut generic = true;
        for g in 0..n {
            let system = build_omega(&params, &network, &values, g)?;
            if existence_check(&system, &ExistenceConfig::default()).verdict != Verdict::Unique {
                generic = false;
            }
        }
        if generic {
            return Ok(SyntheticInstance {
                network,
                params,
                values,
                resampled,
            });
        }
    }
    Err(Error::InvalidInput(format!(
        "no generic instance in {MAX_RESAMPLES} draws; widen the parameter ranges"
    )))
}

/// Exact right-hand sides of the per-route regression model for one good:
/// `A_ij = w_ij (Mt_ij - sum_l wn_il Mt_il)`,
/// `B_ijl = w_ij (wn_il - 1{l=j}) r_l`, `C_ij = wn_ij`, with `Mt = M / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoreticalCoefficients {
    pub good: usize,
    pub intercept: DMatrix<f64>,
    crowd: Vec<f64>,
    pub self_slope: DMatrix<f64>,
    /// `A + sum_l B_l phi_l + C phi_i` at the field the coefficients were
    /// built for, which equals `phi_i Q_ij`.
    pub predicted_flow: DMatrix<f64>,
    ports: usize,
}

impl TheoreticalCoefficients {
    pub fn crowd_slope(&self, origin: usize, destination: usize, crowd_port: usize) -> f64 {
        self.crowd[(origin * self.ports + destination) * self.ports + crowd_port]
    }

    pub fn crowd_slopes(&self, origin: usize, destination: usize) -> &[f64] {
        let start = (origin * self.ports + destination) * self.ports;
        &self.crowd[start..start + self.ports]
    }

    /// Model value for given crowdedness and import regressors.
    pub fn predict(&self, origin: usize, destination: usize, crowd: &[f64], imports: f64) -> f64 {
        let slopes = self.crowd_slopes(origin, destination);
        self.intercept[(origin, destination)]
            + slopes.iter().zip(crowd).map(|(b, x)| b * x).sum::<f64>()
            + self.self_slope[(origin, destination)] * imports
    }
}

pub fn theoretical_coefficients(
    params: &CostParameters,
    network: &PortNetwork,
    values: &GoodValues,
    field: &MeanField,
) -> Result<Vec<TheoreticalCoefficients>> {
    let k = network.size();
    let crowd_field = aggregate_occupancy(field);
    let r = params.congestion();
    (0..params.goods())
        .map(|n| {
            let w = compute_weights(params, network, n)?;
            let half = |i: usize, j: usize| 0.5 * values.margin(n, i, j);
            let intercept = DMatrix::from_fn(k, k, |i, j| {
                let center: f64 = (0..k).map(|l| w.normalized[(i, l)] * half(i, l)).sum();
                w.raw[(i, j)] * (half(i, j) - center)
            });
            let mut crowd = vec![0.0; k * k * k];
            for i in 0..k {
                for j in 0..k {
                    for l in 0..k {
                        let delta = if l == j { 1.0 } else { 0.0 };
                        crowd[(i * k + j) * k + l] = w.raw[(i, j)] * (w.normalized[(i, l)] - delta) * r[l];
                    }
                }
            }
            let self_slope = w.normalized.clone();
            let mut coeffs = TheoreticalCoefficients {
                good: n,
                intercept,
                crowd,
                self_slope,
                predicted_flow: DMatrix::zeros(k, k),
                ports: k,
            };
            let crowd_vec: Vec<f64> = crowd_field.iter().copied().collect();
            coeffs.predicted_flow =
                DMatrix::from_fn(k, k, |i, j| coeffs.predict(i, j, &crowd_vec, field.occupancy()[(n, i)]));
            Ok(coeffs)
        })
        .collect()
}

/// Intercepts of the calibration step: `(v_j - v_i) / (r_j + c g_ij)` off
/// the diagonal, zero on it.
pub fn step_two_intercepts(params: &CostParameters, network: &PortNetwork, values: &GoodValues, good: usize) -> DMatrix<f64> {
    let k = network.size();
    let c = params.transport()[good];
    DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            0.0
        } else {
            values.margin(good, i, j) / (params.congestion()[j] + c * network.transport_kernel(i, j))
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSeries {
    pub series: FlowSeries,
    /// Flows truncated at zero.
    pub truncated: usize,
    /// Solved equilibrium the flows scatter around; regression-exact series
    /// do not need one.
    pub equilibrium: Option<EquilibriumResult>,
    /// Coefficients the regression-exact generator used (intercepts are the
    /// calibration-step ones, predicted flows the mean route flows);
    /// theoretical ones otherwise.
    pub coefficients: Vec<TheoreticalCoefficients>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generates daily flows over `[start_day, start_day + horizon)`.
pub fn simulate_series(spec: &SyntheticSpec, instance: &SyntheticInstance) -> Result<SimulatedSeries> {
    spec.validate()?;
    let SyntheticInstance {
        network,
        params,
        values,
        ..
    } = instance;
    if network.size() != spec.ports || params.goods() != spec.goods {
        return Err(Error::DimensionMismatch {
            what: "instance does not match the synthetic spec",
            expected: spec.ports * spec.goods,
            got: network.size() * params.goods(),
        });
    }
    let mut series = FlowSeries::with_labels(network.labels().to_vec(), spec.good_labels());
    let last = spec.start_day.offset(spec.horizon_days as i64 - 1);
    let (equilibrium, coefficients, truncated) = match spec.mode {
        SimulationMode::EquilibriumConsistent => {
            let eq = fixed_point(params, network, values, None, &FixedPointConfig::default())?;
            if !eq.converged {
                return Err(Error::NotConverged {
                    iterations: eq.iterations,
                    residual: eq.stationarity_residual,
                });
            }
            let coefficients = theoretical_coefficients(params, network, values, &eq.field)?;
            let truncated = equilibrium_flows(spec, &eq, &mut series);
            (Some(eq), coefficients, truncated)
        }
        SimulationMode::RegressionExact => {
            if spec.goods != 1 {
                return Err(Error::InvalidInput(
                    "regression-exact simulation supports a single good".into(),
                ));
            }
            // Slopes do not depend on the field; the spread one is a placeholder.
            let k = spec.ports;
            let spread = MeanField::new(DMatrix::from_fn(1, k, |_, _| params.capacities()[0] / k as f64), params)?;
            let mut coeffs = theoretical_coefficients(params, network, values, &spread)?.remove(0);
            coeffs.intercept = step_two_intercepts(params, network, values, 0);
            let mu = inflow_levels(&coeffs, spec.flow_margin * spec.inflow_variation)?;
            let w = spec.import_window as f64;
            coeffs.predicted_flow = DMatrix::from_fn(k, k, |i, j| coeffs.predict(i, j, &mu, w * mu[i]));
            let truncated = regression_flows(spec, &coeffs, &mu, &mut series)?;
            (None, vec![coeffs], truncated)
        }
    };
    series.declare_range(spec.start_day, last)?;
    Ok(SimulatedSeries {
        series,
        truncated,
        equilibrium,
        coefficients,
    })
}

fn equilibrium_flows(spec: &SyntheticSpec, eq: &EquilibriumResult, series: &mut FlowSeries) -> usize {
    let mut noise = stream(spec.seed, 2);
    let k = spec.ports;
    let mut truncated = 0;
    for t in 0..spec.horizon_days {
        let day = spec.start_day.offset(t as i64);
        for n in 0..spec.goods {
            let q = eq.policy.good(n);
            for i in 0..k {
                let phi = eq.field.occupancy()[(n, i)];
                for j in 0..k {
                    let e: f64 = StandardNormal.sample(&mut noise);
                    let mut flow = phi * q[(i, j)] * (1.0 + spec.noise_sigma * e);
                    if flow < 0.0 {
                        truncated += 1;
                        flow = 0.0;
                    }
                    series.add_indexed(day, n, i, j, flow);
                }
            }
        }
    }
    truncated
}

/// Mean inflows for the regression-exact generator. Each mean route flow
/// `Y_ij = A_ij + sum_l B_ijl mu_l + C_ij mu_i` and each self-flow
/// `mu_j - sum_{i != j} Y_ij` must exceed `margin` times its gross
/// sensitivity to the inflows (the sum of absolute coefficients times `mu`),
/// so that relative inflow swings of size `margin` keep every flow positive.
/// Among such levels the one with the least total route flow is taken: the
/// intercepts then stand out most against the flow-proportional noise.
fn inflow_levels(coeffs: &TheoreticalCoefficients, margin: f64) -> Result<Vec<f64>> {
    let k = coeffs.ports;
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(k * k);
    let mut cost = vec![0.0; k];
    // Coefficients of route (i, j) on mu, and of its inflow-sensitivity bound.
    let route = |i: usize, j: usize| {
        let mut coef = coeffs.crowd_slopes(i, j).to_vec();
        let mut gross: Vec<f64> = coef.iter().map(|b| b.abs()).collect();
        coef[i] += coeffs.self_slope[(i, j)];
        gross[i] += coeffs.self_slope[(i, j)].abs();
        (coef, gross)
    };
    for i in 0..k {
        for j in (0..k).filter(|&j| j != i) {
            let (coef, gross) = route(i, j);
            rows.push((coef.iter().zip(&gross).map(|(c, g)| c - margin * g).collect(), -coeffs.intercept[(i, j)]));
            cost.iter_mut().zip(&coef).for_each(|(acc, c)| *acc += c);
        }
    }
    for l in 0..k {
        let mut coef = vec![0.0; k];
        let mut gross = vec![0.0; k];
        coef[l] = 1.0;
        gross[l] = 1.0;
        let mut arriving = 0.0;
        for i in (0..k).filter(|&i| i != l) {
            let (c, _) = route(i, l);
            for p in 0..k {
                coef[p] -= c[p];
                gross[p] += c[p].abs();
            }
            arriving += coeffs.intercept[(i, l)];
        }
        rows.push((coef.iter().zip(&gross).map(|(c, g)| c - margin * g).collect(), arriving));
    }
    let g = DMatrix::from_fn(rows.len(), k, |r, c| rows[r].0[c]);
    let h: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mu = linprog_ge(&cost, &g, &h).ok_or(Error::ProxyInversionFailure { port: 0, day: 0 })?;
    if let Some(port) = (0..k).find(|&j| !(mu[j] > 0.0)) {
        return Err(Error::ProxyInversionFailure { port, day: 0 });
    }
    Ok(mu)
}

/// Inflows `I_l(t) = mu_l (1 + tau xi_l(t))` around [`inflow_levels`],
/// with `xi` a unit-variance AR(1). The crowdedness regressor is
/// the forward average of `I`, the import regressor the trailing sum of
/// `I`; route flows follow the regression model and each port's self-flow
/// fills its inflow up to `I`, so both regressors are read back exactly.
fn regression_flows(
    spec: &SyntheticSpec,
    coeffs: &TheoreticalCoefficients,
    mu: &[f64],
    series: &mut FlowSeries,
) -> Result<usize> {
    let k = spec.ports;
    let h = spec.horizon_days;
    let mut paths = stream(spec.seed, 1);
    let mut noise = stream(spec.seed, 2);
    let innovation = libm::sqrt(1.0 - spec.persistence * spec.persistence);

    let mut inflow = vec![vec![0.0; h]; k];
    for (l, path) in inflow.iter_mut().enumerate() {
        let mut xi: f64 = StandardNormal.sample(&mut paths);
        for (t, slot) in path.iter_mut().enumerate() {
            if t > 0 {
                let e: f64 = StandardNormal.sample(&mut paths);
                xi = spec.persistence * xi + innovation * e;
            }
            *slot = mu[l] * (1.0 + spec.inflow_variation * xi);
            if !(*slot >= 0.0) {
                return Err(Error::ProxyInversionFailure {
                    port: l,
                    day: t,
                });
            }
        }
    }
    let proxies: Vec<Vec<f64>> = inflow.iter().map(|p| forward_average(p, &spec.crowdedness)).collect();
    let w = spec.import_window;

    let mut truncated = 0;
    let mut crowd = vec![0.0; k];
    let mut exports = vec![0.0; k * k];
    for t in 0..h {
        let day = spec.start_day.offset(t as i64);
        for (l, x) in crowd.iter_mut().enumerate() {
            *x = proxies[l].get(t).copied().unwrap_or(mu[l]);
        }
        for i in 0..k {
            let imports = if t + 1 >= w {
                (t + 1 - w..=t).map(|u| inflow[i][u]).sum()
            } else {
                w as f64 * mu[i]
            };
            for j in 0..k {
                if i == j {
                    continue;
                }
                let e: f64 = StandardNormal.sample(&mut noise);
                let mut y = coeffs.predict(i, j, &crowd, imports) * (1.0 + spec.noise_sigma * e);
                if y < 0.0 {
                    truncated += 1;
                    y = 0.0;
                }
                exports[i * k + j] = y;
            }
        }
        for j in 0..k {
            let arriving: f64 = (0..k).filter(|&i| i != j).map(|i| exports[i * k + j]).sum();
            let stay = inflow[j][t] - arriving;
            if stay < 0.0 {
                return Err(Error::ProxyInversionFailure { port: j, day: t });
            }
            for i in 0..k {
                let flow = if i == j { stay } else { exports[i * k + j] };
                series.add_indexed(day, 0, i, j, flow);
            }
        }
    }
    Ok(truncated)
}
