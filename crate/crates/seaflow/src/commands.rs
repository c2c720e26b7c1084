//! The six subcommands. Each one returns its staged outputs; writing them
//! and the manifest is left to the caller.

use std::path::Path;

use nalgebra::DMatrix;
use seaflow_core::equilibrium::{
    build_omega, existence_check, fixed_point, representative_solve, verify_parts, ExistenceConfig, Verdict,
    VerifyConfig,
};
use seaflow_core::inference::infer_pipeline;
use seaflow_core::synthetic::{generate_instance, simulate_series, SimulationMode};
use seaflow_core::{ControlPolicy, Error as ModelError, MeanField};
use serde::Serialize;
use serde_json::Value;

use crate::config::LoadedConfig;
use crate::distances::distances_to_csv;
use crate::error::{CliError, Result};
use crate::flows::{day_to_date, flows_to_csv, load_flows};
use crate::output::Staged;
use crate::tables::{matrix_rows, read_table, write_table, Table};

pub const OCCUPANCY_FILE: &str = "occupancy.csv";
pub const TRANSITIONS_FILE: &str = "transitions.csv";
pub const SOLVE_FILE: &str = "solve.json";
pub const OMEGA_FILE: &str = "omega.csv";
pub const CHECK_FILE: &str = "check.json";
pub const COEFFICIENTS_FILE: &str = "coefficients.csv";
pub const INTERCEPTS_FILE: &str = "intercepts.csv";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const FLOWS_FILE: &str = "flows.csv";
pub const DISTANCES_FILE: &str = "distances.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const REPORT_DIR: &str = "report";

fn note_model_inputs(staged: &mut Staged, cfg: &LoadedConfig) -> Result<()> {
    let c = &cfg.config;
    staged.read_input(c.require_distances()?)?;
    if let Some(table) = c.model.as_ref().and_then(|m| m.kernel_table.as_deref()) {
        staged.read_input(table)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct NegativeEntry {
    good: String,
    origin: String,
    destination: String,
    probability: f64,
}

#[derive(Serialize)]
struct RepresentativeSummary {
    occupancy: Vec<f64>,
    residual: f64,
    mass: f64,
    /// Largest gap to the iterated occupancy, relative to its largest entry.
    relative_gap: Option<f64>,
}

#[derive(Serialize)]
struct SolveSummary {
    ports: Vec<String>,
    goods: Vec<String>,
    converged: bool,
    iterations: usize,
    stationarity_residual: f64,
    optimality_residual: f64,
    damping: f64,
    max_row_sum_deviation: f64,
    negative_entries: Vec<NegativeEntry>,
    representative: Option<RepresentativeSummary>,
    representative_error: Option<String>,
}

pub fn solve(cfg: &LoadedConfig) -> Result<Staged> {
    let mut staged = Staged::default();
    note_model_inputs(&mut staged, cfg)?;
    let c = &cfg.config;
    let goods = c.require_model()?.goods.clone();
    let network = c.network()?;
    let ports = network.labels().to_vec();
    let (params, values) = c.model_parameters(network.size())?;
    let eq = fixed_point(&params, &network, &values, None, &c.fixed_point_config())?;
    log::info!(
        "fixed point: converged={} after {} iterations, residual {:e}",
        eq.converged,
        eq.iterations,
        eq.stationarity_residual
    );

    let occupancy = eq.field.occupancy();
    let mut occ = Table::new(["good", "port", "occupancy"]);
    for (n, g) in goods.iter().enumerate() {
        for (i, p) in ports.iter().enumerate() {
            occ.push([g.clone(), p.clone(), occupancy[(n, i)].to_string()]);
        }
    }
    let mut trans = Table::new(["good", "origin", "destination", "probability"]);
    for (n, q) in eq.policy.transitions().iter().enumerate() {
        for (i, o) in ports.iter().enumerate() {
            for (j, d) in ports.iter().enumerate() {
                trans.push([goods[n].clone(), o.clone(), d.clone(), q[(i, j)].to_string()]);
            }
        }
    }

    let (representative, representative_error) = if goods.len() == 1 {
        let outcome = build_omega(&params, &network, &values, 0)
            .and_then(|sys| representative_solve(&sys, params.capacities()[0], &ExistenceConfig::default()));
        match outcome {
            Ok(sol) => {
                let scale = occupancy.row(0).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let gap = (0..ports.len()).map(|i| (sol.occupancy[i] - occupancy[(0, i)]).abs()).fold(0.0, f64::max);
                let summary = RepresentativeSummary {
                    occupancy: sol.occupancy.iter().copied().collect(),
                    residual: sol.residual,
                    mass: sol.mass,
                    relative_gap: eq.converged.then_some(gap / scale),
                };
                (Some(summary), None)
            }
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };

    let summary = SolveSummary {
        negative_entries: eq
            .policy
            .negative_entries()
            .into_iter()
            .map(|(n, i, j)| NegativeEntry {
                good: goods[n].clone(),
                origin: ports[i].clone(),
                destination: ports[j].clone(),
                probability: eq.policy.good(n)[(i, j)],
            })
            .collect(),
        ports,
        goods,
        converged: eq.converged,
        iterations: eq.iterations,
        stationarity_residual: eq.stationarity_residual,
        optimality_residual: eq.optimality_residual,
        damping: eq.damping,
        max_row_sum_deviation: eq.policy.max_row_sum_deviation(),
        representative,
        representative_error,
    };
    staged.add(OCCUPANCY_FILE, write_table(&occ)?);
    staged.add(TRANSITIONS_FILE, write_table(&trans)?);
    staged.add_json(SOLVE_FILE, &summary)?;
    if !eq.converged {
        staged.failure = Some(CliError::Model(ModelError::NotConverged {
            iterations: eq.iterations,
            residual: eq.stationarity_residual,
        }));
    }
    Ok(staged)
}

#[derive(Serialize)]
struct GoodCheck {
    good: String,
    verdict: &'static str,
    determinant: f64,
    transposed_determinant: f64,
    relative_determinant: f64,
    raw_determinant_vanishes: bool,
    constrained_determinant: f64,
    constrained_relative_determinant: f64,
    constrained_condition: f64,
    condition_estimate: f64,
    mass_identity_residual: f64,
}

#[derive(Serialize)]
struct CheckSummary {
    ports: Vec<String>,
    tol_det: f64,
    condition_cap: f64,
    goods: Vec<GoodCheck>,
}

/// Degenerate systems are findings: they are reported, not raised.
pub fn check(cfg: &LoadedConfig) -> Result<Staged> {
    let mut staged = Staged::default();
    note_model_inputs(&mut staged, cfg)?;
    let c = &cfg.config;
    let goods = c.require_model()?.goods.clone();
    let network = c.network()?;
    let ports = network.labels().to_vec();
    let (params, values) = c.model_parameters(network.size())?;
    let config = ExistenceConfig::default();

    let mut omega = Table::new(["good", "row", "column", "omega", "transposed"]);
    let mut checks = Vec::new();
    for (n, g) in goods.iter().enumerate() {
        let sys = build_omega(&params, &network, &values, n)?;
        let report = existence_check(&sys, &config);
        for (j, row) in ports.iter().enumerate() {
            for (l, col) in ports.iter().enumerate() {
                omega.push([
                    g.clone(),
                    row.clone(),
                    col.clone(),
                    sys.omega[(j, l)].to_string(),
                    sys.omega[(l, j)].to_string(),
                ]);
            }
        }
        log::info!("good {g}: verdict {:?}, relative determinant {:e}", report.verdict, report.relative_determinant);
        checks.push(GoodCheck {
            good: g.clone(),
            verdict: match report.verdict {
                Verdict::Unique => "unique",
                Verdict::Degenerate => "degenerate",
            },
            determinant: report.determinant,
            transposed_determinant: report.transposed_determinant,
            relative_determinant: report.relative_determinant,
            raw_determinant_vanishes: report.raw_determinant_vanishes,
            constrained_determinant: report.constrained_determinant,
            constrained_relative_determinant: report.constrained_relative_determinant,
            constrained_condition: report.constrained_condition,
            condition_estimate: sys.condition_estimate,
            mass_identity_residual: sys.mass_identity_residual,
        });
    }
    staged.add(OMEGA_FILE, write_table(&omega)?);
    staged.add_json(
        CHECK_FILE,
        &CheckSummary {
            ports,
            tol_det: config.tol_det,
            condition_cap: config.condition_cap,
            goods: checks,
        },
    )?;
    Ok(staged)
}

#[derive(Serialize)]
struct RouteSummary {
    origin: String,
    destination: String,
    status: &'static str,
    error: Option<String>,
    n_obs: Option<usize>,
    r_squared: Option<f64>,
    residual_variance: Option<f64>,
    implied_crowd_slopes: Option<Vec<f64>>,
    implied_self_slope: Option<f64>,
}

#[derive(Serialize)]
struct RouteResidual {
    origin: String,
    destination: String,
    residual: f64,
}

#[derive(Serialize)]
struct StartSummary {
    objective: f64,
    iterations: usize,
    converged: bool,
}

#[derive(Serialize)]
struct GaugeSummary {
    r_min: f64,
    r_bar: f64,
    congestion_total: f64,
    values_sum: f64,
    congestion_sum: f64,
    congestion_at_bound: Vec<String>,
    transport_at_bound: bool,
}

#[derive(Serialize)]
struct GoodCalibration {
    good: String,
    transport_cost: f64,
    congestion: Vec<f64>,
    values: Vec<f64>,
    objective: f64,
    gauge: GaugeSummary,
    best_start: usize,
    start_spread: f64,
    polished: bool,
    curvature: Vec<f64>,
    flat_directions: usize,
    starts: Vec<StartSummary>,
    route_residuals: Vec<RouteResidual>,
    excluded_routes: Vec<[String; 2]>,
    routes: Vec<RouteSummary>,
}

#[derive(Serialize)]
struct CalibrationSummary {
    ports: Vec<String>,
    first_date: String,
    days: usize,
    goods: Vec<GoodCalibration>,
}

pub fn infer(cfg: &LoadedConfig) -> Result<Staged> {
    let mut staged = Staged::default();
    let c = &cfg.config;
    note_model_inputs(&mut staged, cfg)?;
    let flows_path = c.require_flows()?;
    staged.read_input(flows_path)?;
    let flows = load_flows(flows_path)?;
    let network = c.network()?;
    let ports = network.labels().to_vec();
    let report = infer_pipeline(&flows.series, &network, &c.inference_config()?)?;

    let mut coefficients = Table::new(["good", "origin", "destination", "term", "estimate", "std_error"]);
    let mut intercepts = Table::new(["good", "origin", "destination", "intercept"]);
    let mut goods = Vec::new();
    for g in &report.goods {
        let mut routes = Vec::new();
        for route in &g.routes {
            let (o, d) = (&ports[route.origin], &ports[route.destination]);
            let mut summary = RouteSummary {
                origin: o.clone(),
                destination: d.clone(),
                status: "ok",
                error: None,
                n_obs: None,
                r_squared: None,
                residual_variance: None,
                implied_crowd_slopes: route.implied_crowd_slopes.clone(),
                implied_self_slope: route.implied_self_slope,
            };
            match &route.fit {
                Ok(fit) => {
                    let terms = std::iter::once("intercept".to_string())
                        .chain(ports.iter().map(|p| format!("crowd:{p}")))
                        .chain(std::iter::once("imports".to_string()));
                    for ((term, estimate), se) in terms.zip(fit.coefficients()).zip(&fit.standard_errors) {
                        coefficients.push([g.good.clone(), o.clone(), d.clone(), term, estimate.to_string(), se.to_string()]);
                    }
                    intercepts.push([g.good.clone(), o.clone(), d.clone(), fit.intercept.to_string()]);
                    summary.n_obs = Some(fit.n_obs);
                    summary.r_squared = Some(fit.r_squared);
                    summary.residual_variance = Some(fit.residual_variance);
                }
                Err(e) => {
                    log::warn!("route {o} -> {d} ({}): {e}", g.good);
                    summary.status = "failed";
                    summary.error = Some(e.to_string());
                }
            }
            routes.push(summary);
        }
        let cal = &g.calibration;
        goods.push(GoodCalibration {
            good: g.good.clone(),
            transport_cost: cal.transport_cost,
            congestion: cal.congestion.clone(),
            values: cal.values.clone(),
            objective: cal.objective,
            gauge: GaugeSummary {
                r_min: cal.gauge.r_min,
                r_bar: cal.gauge.r_bar,
                congestion_total: cal.gauge.congestion_total,
                values_sum: cal.gauge.values_sum,
                congestion_sum: cal.gauge.congestion_sum,
                congestion_at_bound: cal.gauge.congestion_at_bound.iter().map(|&i| ports[i].clone()).collect(),
                transport_at_bound: cal.gauge.transport_at_bound,
            },
            best_start: cal.best_start,
            start_spread: cal.start_spread,
            polished: cal.polished,
            curvature: cal.curvature.clone(),
            flat_directions: cal.flat_directions,
            starts: cal
                .starts
                .iter()
                .map(|s| StartSummary {
                    objective: s.objective,
                    iterations: s.iterations,
                    converged: s.converged,
                })
                .collect(),
            route_residuals: cal
                .route_residuals
                .iter()
                .map(|&(i, j, r)| RouteResidual {
                    origin: ports[i].clone(),
                    destination: ports[j].clone(),
                    residual: r,
                })
                .collect(),
            excluded_routes: cal.excluded_routes.iter().map(|&(i, j)| [ports[i].clone(), ports[j].clone()]).collect(),
            routes,
        });
    }
    staged.add(COEFFICIENTS_FILE, write_table(&coefficients)?);
    staged.add(INTERCEPTS_FILE, write_table(&intercepts)?);
    staged.add_json(
        CALIBRATION_FILE,
        &CalibrationSummary {
            ports,
            first_date: day_to_date(report.first_day).to_string(),
            days: report.days,
            goods,
        },
    )?;
    Ok(staged)
}

#[derive(Serialize)]
struct GoodTruth {
    good: String,
    intercept: Vec<Vec<f64>>,
    self_slope: Vec<Vec<f64>>,
    /// `[origin][destination][crowd port]`.
    crowd_slopes: Vec<Vec<Vec<f64>>>,
    predicted_flow: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Truth {
    mode: &'static str,
    seed: u64,
    ports: Vec<String>,
    goods: Vec<String>,
    transport: Vec<f64>,
    congestion: Vec<f64>,
    capacities: Vec<f64>,
    values: Vec<Vec<f64>>,
    resampled: usize,
    truncated: usize,
    coefficients: Vec<GoodTruth>,
}

pub fn simulate(cfg: &LoadedConfig) -> Result<Staged> {
    let mut staged = Staged::default();
    let spec = cfg.config.synthetic_spec()?;
    let inst = generate_instance(&spec)?;
    let sim = simulate_series(&spec, &inst)?;
    log::info!("simulated {} records, {} truncated", sim.series.len(), sim.truncated);
    let ports = inst.network.labels().to_vec();
    let goods = spec.good_labels();
    let k = ports.len();
    let truth = Truth {
        mode: match spec.mode {
            SimulationMode::RegressionExact => "regression_exact",
            SimulationMode::EquilibriumConsistent => "equilibrium_consistent",
        },
        seed: spec.seed,
        transport: inst.params.transport().iter().copied().collect(),
        congestion: inst.params.congestion().iter().copied().collect(),
        capacities: inst.params.capacities().iter().copied().collect(),
        values: matrix_rows(inst.values.values()),
        resampled: inst.resampled,
        truncated: sim.truncated,
        coefficients: sim
            .coefficients
            .iter()
            .map(|t| GoodTruth {
                good: goods[t.good].clone(),
                intercept: matrix_rows(&t.intercept),
                self_slope: matrix_rows(&t.self_slope),
                crowd_slopes: (0..k).map(|i| (0..k).map(|j| t.crowd_slopes(i, j).to_vec()).collect()).collect(),
                predicted_flow: matrix_rows(&t.predicted_flow),
            })
            .collect(),
        ports: ports.clone(),
        goods,
    };
    staged.add(FLOWS_FILE, flows_to_csv(&sim.series)?);
    staged.add(DISTANCES_FILE, distances_to_csv(&ports, inst.network.travel_cost())?);
    staged.add_json(TRUTH_FILE, &truth)?;
    Ok(staged)
}

/// Reads a long `good,<row>,[<column>,]value` table into one matrix per good,
/// ordered by `goods` and `ports`.
fn read_saved_matrices(staged: &mut Staged, path: &Path, goods: &[String], ports: &[String], square: bool) -> Result<Vec<DMatrix<f64>>> {
    let bytes = staged.read_input(path)?;
    let table = read_table(&bytes, path)?;
    let width = if square { 4 } else { 3 };
    if table.header.len() != width {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected {width} columns"),
        });
    }
    let k = ports.len();
    let mut out = vec![DMatrix::from_element(if square { k } else { 1 }, k, f64::NAN); goods.len()];
    let index = |labels: &[String], name: &str, line: u64| {
        labels.iter().position(|l| l == name).ok_or_else(|| CliError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("unknown label {name:?}"),
        })
    };
    for (line, row) in table.rows() {
        let n = index(goods, &row[0], line)?;
        let value = table.number(line, &row[width - 1])?;
        if square {
            out[n][(index(ports, &row[1], line)?, index(ports, &row[2], line)?)] = value;
        } else {
            out[n][(0, index(ports, &row[1], line)?)] = value;
        }
    }
    if out.iter().any(|m| m.iter().any(|v| v.is_nan())) {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "table does not cover every good and port".into(),
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct ValidationSummary {
    source: String,
    passed: bool,
    max_row_sum_deviation: f64,
    stationarity_residual: f64,
    analytic_optimality: f64,
    finite_difference_optimality: f64,
    gradient_disagreement: f64,
    negative_entries: usize,
    row_sum_tol: f64,
    stationarity_tol: f64,
    optimality_tol: f64,
    gradient_agreement_tol: f64,
}

/// Re-checks a saved solution (from `from`, default the output directory)
/// against the model in the config.
pub fn validate(cfg: &LoadedConfig, from: &Path) -> Result<Staged> {
    let mut staged = Staged::default();
    note_model_inputs(&mut staged, cfg)?;
    let c = &cfg.config;
    let goods = c.require_model()?.goods.clone();
    let network = c.network()?;
    let ports = network.labels().to_vec();
    let (params, values) = c.model_parameters(network.size())?;

    let occ = read_saved_matrices(&mut staged, &from.join(OCCUPANCY_FILE), &goods, &ports, false)?;
    let occupancy = DMatrix::from_fn(goods.len(), ports.len(), |n, i| occ[n][(0, i)]);
    let transitions = read_saved_matrices(&mut staged, &from.join(TRANSITIONS_FILE), &goods, &ports, true)?;
    let field = MeanField::from_matrix(occupancy);
    let policy = ControlPolicy::new(transitions);
    let vc = VerifyConfig {
        stationarity_tol: c.solver.tol,
        ..VerifyConfig::default()
    };
    let report = verify_parts(&field, &policy, &params, &network, &values, &vc);
    staged.add_json(
        VALIDATION_FILE,
        &ValidationSummary {
            source: from.display().to_string(),
            passed: report.passed,
            max_row_sum_deviation: report.max_row_sum_deviation,
            stationarity_residual: report.stationarity_residual,
            analytic_optimality: report.analytic_optimality,
            finite_difference_optimality: report.finite_difference_optimality,
            gradient_disagreement: report.gradient_disagreement,
            negative_entries: report.negative_entries,
            row_sum_tol: vc.row_sum_tol,
            stationarity_tol: vc.stationarity_tol,
            optimality_tol: vc.optimality_tol,
            gradient_agreement_tol: vc.gradient_agreement_tol,
        },
    )?;
    if !report.passed {
        staged.failure = Some(CliError::Verification(format!(
            "row sums {:e}, stationarity {:e}, optimality {:e}, gradient disagreement {:e}",
            report.max_row_sum_deviation,
            report.stationarity_residual,
            report.analytic_optimality,
            report.gradient_disagreement
        )));
    }
    Ok(staged)
}

/// Labels in order of first appearance.
fn first_seen<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for v in values {
        if !out.iter().any(|o| o == v) {
            out.push(v.to_string());
        }
    }
    out
}

/// Wide `port,<good...>` bar-chart table from per-good port vectors.
fn bars(ports: &[String], series: &[(String, Vec<String>)]) -> Table {
    let mut t = Table::new(std::iter::once("port".to_string()).chain(series.iter().map(|(g, _)| g.clone())));
    for (i, p) in ports.iter().enumerate() {
        t.push(std::iter::once(p.clone()).chain(series.iter().map(|(_, v)| v.get(i).cloned().unwrap_or_default())));
    }
    t
}

/// Plot-ready tables derived from whatever saved outputs exist in `from`.
/// Reads only those files; nothing is recomputed.
pub fn report(from: &Path) -> Result<Staged> {
    let mut staged = Staged::default();
    let mut produced = 0;
    let at = |name: &str| from.join(name);

    if at(OCCUPANCY_FILE).is_file() {
        let path = at(OCCUPANCY_FILE);
        let table = read_table(&staged.read_input(&path)?, &path)?;
        let goods = first_seen(table.data.iter().map(|(_, r)| r[0].as_str()));
        let ports = first_seen(table.data.iter().map(|(_, r)| r[1].as_str()));
        let mut series: Vec<(String, Vec<String>)> = goods.iter().map(|g| (g.clone(), vec![String::new(); ports.len()])).collect();
        for (_, row) in table.rows() {
            let n = goods.iter().position(|g| *g == row[0]).expect("seen");
            let i = ports.iter().position(|p| *p == row[1]).expect("seen");
            series[n].1[i] = row[2].clone();
        }
        staged.add(format!("{REPORT_DIR}/occupancy_bars.csv"), write_table(&bars(&ports, &series))?);
        produced += 1;
    }

    if at(INTERCEPTS_FILE).is_file() {
        let path = at(INTERCEPTS_FILE);
        let table = read_table(&staged.read_input(&path)?, &path)?;
        let goods = first_seen(table.data.iter().map(|(_, r)| r[0].as_str()));
        let ports = first_seen(table.data.iter().flat_map(|(_, r)| [r[1].as_str(), r[2].as_str()]));
        for g in &goods {
            let mut grid = vec![vec![String::new(); ports.len()]; ports.len()];
            for (_, row) in table.rows().filter(|(_, r)| r[0] == *g) {
                let i = ports.iter().position(|p| *p == row[1]).expect("seen");
                let j = ports.iter().position(|p| *p == row[2]).expect("seen");
                grid[i][j] = row[3].clone();
            }
            let mut t = Table::new(std::iter::once("origin".to_string()).chain(ports.iter().cloned()));
            for (i, p) in ports.iter().enumerate() {
                t.push(std::iter::once(p.clone()).chain(grid[i].iter().cloned()));
            }
            staged.add(format!("{REPORT_DIR}/intercepts.{g}.csv"), write_table(&t)?);
        }
        produced += 1;
    }

    if at(COEFFICIENTS_FILE).is_file() {
        let path = at(COEFFICIENTS_FILE);
        let table = read_table(&staged.read_input(&path)?, &path)?;
        let terms = first_seen(table.data.iter().map(|(_, r)| r[3].as_str()));
        let mut routes: Vec<(&[String], Vec<String>)> = Vec::new();
        for (_, row) in table.rows() {
            let pos = match routes.iter().position(|(key, _)| *key == &row[..3]) {
                Some(p) => p,
                None => {
                    routes.push((&row[..3], vec![String::new(); terms.len()]));
                    routes.len() - 1
                }
            };
            routes[pos].1[terms.iter().position(|x| *x == row[3]).expect("seen")] = row[4].clone();
        }
        let mut t = Table::new(["good", "origin", "destination"].into_iter().map(String::from).chain(terms.iter().cloned()));
        for (key, cells) in routes {
            t.push(key.iter().cloned().chain(cells));
        }
        staged.add(format!("{REPORT_DIR}/route_coefficients.csv"), write_table(&t)?);
        produced += 1;
    }

    if at(CALIBRATION_FILE).is_file() {
        let path = at(CALIBRATION_FILE);
        let bytes = staged.read_input(&path)?;
        let doc: Value = serde_json::from_slice(&bytes).map_err(|e| CliError::Parse {
            path: path.clone(),
            line: e.line() as u64,
            message: e.to_string(),
        })?;
        let malformed = || CliError::Parse {
            path: path.clone(),
            line: 0,
            message: "unexpected calibration document layout".into(),
        };
        let ports: Vec<String> = doc["ports"]
            .as_array()
            .ok_or_else(malformed)?
            .iter()
            .map(|v| v.as_str().map(String::from).ok_or_else(malformed))
            .collect::<Result<_>>()?;
        let goods = doc["goods"].as_array().ok_or_else(malformed)?;
        let column = |key: &str| -> Result<Vec<(String, Vec<String>)>> {
            goods
                .iter()
                .map(|g| {
                    let name = g["good"].as_str().ok_or_else(malformed)?.to_string();
                    let vals = g[key].as_array().ok_or_else(malformed)?.iter().map(json_number).collect();
                    Ok((name, vals))
                })
                .collect()
        };
        staged.add(format!("{REPORT_DIR}/congestion_bars.csv"), write_table(&bars(&ports, &column("congestion")?))?);
        staged.add(format!("{REPORT_DIR}/value_bars.csv"), write_table(&bars(&ports, &column("values")?))?);
        let mut t = Table::new(["good", "transport_cost", "objective"]);
        for g in goods {
            t.push([
                g["good"].as_str().ok_or_else(malformed)?.to_string(),
                json_number(&g["transport_cost"]),
                json_number(&g["objective"]),
            ]);
        }
        staged.add(format!("{REPORT_DIR}/transport_cost.csv"), write_table(&t)?);
        produced += 1;
    }

    if produced == 0 {
        return Err(CliError::Config(format!("no saved outputs to report on in {}", from.display())));
    }
    Ok(staged)
}

/// Decimal text of a JSON number exactly as saved; empty for null.
fn json_number(v: &Value) -> String {
    match v {
        Value::Number(n) => n.as_f64().map_or_else(|| n.to_string(), |x| x.to_string()),
        _ => String::new(),
    }
}
