//! Model symbols of the stationary maritime-flow game: the port network,
//! cost parameters, per-good values, the mean field and the transition
//! policy, together with the weight algebra shared by the solver and the
//! calibration code.
//!
//! Matrices are dense `nalgebra` matrices. Goods index rows of the `N x K`
//! matrices (`occupancy`, `values`); ports index columns.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Transport kernel `g` applied to travel costs.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `g(T) = T`.
    Linear,
    /// `g(T) = T^p`, `p > 0`.
    Power(f64),
    /// Explicit per-pair values, indexed `[origin, destination]`.
    Table(DMatrix<f64>),
}

impl Kernel {
    fn eval(&self, origin: usize, destination: usize, travel: f64) -> f64 {
        match self {
            Kernel::Linear => travel,
            Kernel::Power(p) => libm::pow(travel, *p),
            Kernel::Table(t) => t[(origin, destination)],
        }
    }
}

/// Ports, the pairwise travel-cost matrix and the transport kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct PortNetwork {
    labels: Vec<String>,
    travel_cost: DMatrix<f64>,
    kernel: Kernel,
    kernel_values: DMatrix<f64>,
}

impl PortNetwork {
    pub fn new(labels: Vec<String>, travel_cost: DMatrix<f64>, kernel: Kernel) -> Result<Self> {
        let k = labels.len();
        if k == 0 {
            return Err(Error::InvalidInput("a network needs at least one port".into()));
        }
        if travel_cost.nrows() != k || travel_cost.ncols() != k {
            return Err(Error::DimensionMismatch {
                what: "travel cost matrix",
                expected: k,
                got: travel_cost.nrows().max(travel_cost.ncols()),
            });
        }
        for i in 0..k {
            for j in 0..k {
                let t = travel_cost[(i, j)];
                if !t.is_finite() || t < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "travel cost T[{i},{j}] = {t} must be finite and nonnegative"
                    )));
                }
                if i == j && t != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "travel cost diagonal T[{i},{i}] = {t} must be zero"
                    )));
                }
            }
        }
        match &kernel {
            Kernel::Power(p) if !(*p > 0.0 && p.is_finite()) => {
                return Err(Error::InvalidInput(format!("power kernel exponent {p} must be positive")));
            }
            Kernel::Table(t) if t.nrows() != k || t.ncols() != k => {
                return Err(Error::DimensionMismatch {
                    what: "kernel table",
                    expected: k,
                    got: t.nrows().max(t.ncols()),
                });
            }
            _ => {}
        }
        let kernel_values =
            DMatrix::from_fn(k, k, |i, j| kernel.eval(i, j, travel_cost[(i, j)]));
        if let Some(bad) = kernel_values.iter().find(|g| !g.is_finite() || **g < 0.0) {
            return Err(Error::InvalidInput(format!(
                "kernel value {bad} must be finite and nonnegative"
            )));
        }
        Ok(Self {
            labels,
            travel_cost,
            kernel,
            kernel_values,
        })
    }

    /// Number of ports `K`.
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn port_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn travel_cost(&self) -> &DMatrix<f64> {
        &self.travel_cost
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// `g(T_ij)`.
    pub fn transport_kernel(&self, origin: usize, destination: usize) -> f64 {
        self.kernel_values[(origin, destination)]
    }

    /// Number of unordered pairs with `T_ij != T_ji`. Asymmetry is allowed.
    pub fn asymmetric_pairs(&self) -> usize {
        let k = self.size();
        (0..k)
            .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
            .filter(|&(i, j)| self.travel_cost[(i, j)] != self.travel_cost[(j, i)])
            .count()
    }

    /// Relabels ports so that new port `p` is old port `perm[p]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.size())?;
        let k = self.size();
        let labels = perm.iter().map(|&p| self.labels[p].clone()).collect();
        let travel = DMatrix::from_fn(k, k, |i, j| self.travel_cost[(perm[i], perm[j])]);
        let kernel = match &self.kernel {
            Kernel::Table(t) => Kernel::Table(DMatrix::from_fn(k, k, |i, j| t[(perm[i], perm[j])])),
            other => other.clone(),
        };
        Self::new(labels, travel, kernel)
    }
}

pub(crate) fn check_permutation(perm: &[usize], k: usize) -> Result<()> {
    let mut seen = alloc::vec![false; k];
    if perm.len() != k {
        return Err(Error::DimensionMismatch {
            what: "permutation",
            expected: k,
            got: perm.len(),
        });
    }
    for &p in perm {
        if p >= k || seen[p] {
            return Err(Error::InvalidInput(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Congestion coefficients `r_j`, transport coefficients `c_n` and
/// capacities `F^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParameters {
    congestion: DVector<f64>,
    transport: DVector<f64>,
    capacities: DVector<f64>,
}

impl CostParameters {
    pub fn new(congestion: Vec<f64>, transport: Vec<f64>, capacities: Vec<f64>) -> Result<Self> {
        if congestion.is_empty() {
            return Err(Error::InvalidInput("congestion vector is empty".into()));
        }
        if transport.len() != capacities.len() || transport.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "transport coefficients vs capacities",
                expected: capacities.len(),
                got: transport.len(),
            });
        }
        if let Some(r) = congestion.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidInput(format!("congestion coefficient {r} must be positive")));
        }
        if let Some(c) = transport.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
            return Err(Error::InvalidInput(format!("transport coefficient {c} must be nonnegative")));
        }
        if let Some(f) = capacities.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
            return Err(Error::InvalidInput(format!("capacity {f} must be positive")));
        }
        Ok(Self {
            congestion: DVector::from_vec(congestion),
            transport: DVector::from_vec(transport),
            capacities: DVector::from_vec(capacities),
        })
    }

    pub fn ports(&self) -> usize {
        self.congestion.len()
    }

    pub fn goods(&self) -> usize {
        self.transport.len()
    }

    pub fn congestion(&self) -> &DVector<f64> {
        &self.congestion
    }

    pub fn transport(&self) -> &DVector<f64> {
        &self.transport
    }

    pub fn capacities(&self) -> &DVector<f64> {
        &self.capacities
    }

    /// Multiplies every congestion and transport coefficient by `lambda`.
    pub fn scaled_costs(&self, lambda: f64) -> Result<Self> {
        Self::new(
            self.congestion.iter().map(|r| r * lambda).collect(),
            self.transport.iter().map(|c| c * lambda).collect(),
            self.capacities.iter().copied().collect(),
        )
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.ports())?;
        Self::new(
            perm.iter().map(|&p| self.congestion[p]).collect(),
            self.transport.iter().copied().collect(),
            self.capacities.iter().copied().collect(),
        )
    }
}

/// Per-good, per-port values `v_i^n` (`N x K`). Margins are value
/// differences, so they are antisymmetric and path consistent by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodValues {
    values: DMatrix<f64>,
}

impl GoodValues {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("good values must be finite".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// `M^n_{ij} = v_j^n - v_i^n`.
    pub fn margin(&self, good: usize, origin: usize, destination: usize) -> f64 {
        self.values[(good, destination)] - self.values[(good, origin)]
    }

    /// Adds `kappa` to every value.
    pub fn shifted(&self, kappa: f64) -> Self {
        Self {
            values: self.values.map(|v| v + kappa),
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.values.ncols())?;
        Ok(Self {
            values: DMatrix::from_fn(self.values.nrows(), perm.len(), |n, i| self.values[(n, perm[i])]),
        })
    }
}

/// Occupancies `phi^n_i` (`N x K`).
#[derive(Debug, Clone, PartialEq)]
pub struct MeanField {
    occupancy: DMatrix<f64>,
}

impl MeanField {
    /// Relative tolerance on the per-good mass `sum_i phi^n_i = F^n`.
    pub const MASS_TOLERANCE: f64 = 1e-9;

    /// Builds a field and checks its per-good mass against the capacities.
    pub fn new(occupancy: DMatrix<f64>, params: &CostParameters) -> Result<Self> {
        if occupancy.nrows() != params.goods() {
            return Err(Error::DimensionMismatch {
                what: "mean field goods",
                expected: params.goods(),
                got: occupancy.nrows(),
            });
        }
        if occupancy.ncols() != params.ports() {
            return Err(Error::DimensionMismatch {
                what: "mean field ports",
                expected: params.ports(),
                got: occupancy.ncols(),
            });
        }
        if occupancy.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mean field entries must be finite".into()));
        }
        for (n, f) in params.capacities().iter().enumerate() {
            let mass: f64 = occupancy.row(n).iter().sum();
            if (mass - f).abs() > Self::MASS_TOLERANCE * f {
                return Err(Error::InvalidInput(format!(
                    "mass of good {n} is {mass}, capacity is {f}"
                )));
            }
        }
        Ok(Self { occupancy })
    }

    /// Builds a field without any mass check. Used for off-equilibrium
    /// probes and intermediate iterates.
    pub fn from_matrix(occupancy: DMatrix<f64>) -> Self {
        Self { occupancy }
    }

    /// `phi^n_i = F^n / K`.
    pub fn uniform(params: &CostParameters) -> Self {
        let k = params.ports() as f64;
        Self {
            occupancy: DMatrix::from_fn(params.goods(), params.ports(), |n, _| {
                params.capacities()[n] / k
            }),
        }
    }

    /// `phi^n_i = F^n (1 / r_i) / sum_l (1 / r_l)`: every port equally
    /// crowded when all goods are stacked. Equals [`MeanField::uniform`]
    /// under uniform congestion.
    pub fn congestion_balanced(params: &CostParameters) -> Self {
        let r = params.congestion();
        let total = crate::linalg::order_free_sum(r.iter().map(|r| 1.0 / r));
        Self {
            occupancy: DMatrix::from_fn(params.goods(), params.ports(), |n, i| {
                params.capacities()[n] * (1.0 / r[i] / total)
            }),
        }
    }

    pub fn occupancy(&self) -> &DMatrix<f64> {
        &self.occupancy
    }

    pub fn goods(&self) -> usize {
        self.occupancy.nrows()
    }

    pub fn ports(&self) -> usize {
        self.occupancy.ncols()
    }

    pub fn has_negative(&self) -> bool {
        self.occupancy.iter().any(|v| *v < 0.0)
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.ports())?;
        Ok(Self {
            occupancy: DMatrix::from_fn(self.goods(), perm.len(), |n, i| self.occupancy[(n, perm[i])]),
        })
    }
}

/// Per-good transition matrices `Q^n` with feasibility diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPolicy {
    transitions: Vec<DMatrix<f64>>,
    row_sum_residual: DMatrix<f64>,
    has_negative: bool,
}

impl ControlPolicy {
    pub fn new(transitions: Vec<DMatrix<f64>>) -> Self {
        let goods = transitions.len();
        let ports = transitions.first().map_or(0, |q| q.nrows());
        let row_sum_residual = DMatrix::from_fn(goods, ports, |n, i| {
            transitions[n].row(i).iter().sum::<f64>() - 1.0
        });
        let has_negative = transitions.iter().any(|q| q.iter().any(|v| *v < 0.0));
        Self {
            transitions,
            row_sum_residual,
            has_negative,
        }
    }

    pub fn transitions(&self) -> &[DMatrix<f64>] {
        &self.transitions
    }

    pub fn good(&self, n: usize) -> &DMatrix<f64> {
        &self.transitions[n]
    }

    /// `sum_j Q^n_ij - 1`, indexed `[good, origin]`.
    pub fn row_sum_residual(&self) -> &DMatrix<f64> {
        &self.row_sum_residual
    }

    pub fn max_row_sum_deviation(&self) -> f64 {
        self.row_sum_residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn has_negative(&self) -> bool {
        self.has_negative
    }

    /// Triples `(good, origin, destination)` with a negative transition.
    pub fn negative_entries(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (n, q) in self.transitions.iter().enumerate() {
            for i in 0..q.nrows() {
                for j in 0..q.ncols() {
                    if q[(i, j)] < 0.0 {
                        out.push((n, i, j));
                    }
                }
            }
        }
        out
    }
}

/// Raw weights `w_ij = 1 / (r_j + c_n g(T_ij) 1{j != i})` and their
/// row-normalized version.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub raw: DMatrix<f64>,
    pub normalized: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn row_sum(&self, origin: usize) -> f64 {
        crate::linalg::order_free_sum(self.raw.row(origin).iter().copied())
    }
}

pub(crate) fn check_shapes(
    params: &CostParameters,
    network: &PortNetwork,
    values: &GoodValues,
) -> Result<()> {
    if params.ports() != network.size() {
        return Err(Error::DimensionMismatch {
            what: "congestion coefficients vs ports",
            expected: network.size(),
            got: params.ports(),
        });
    }
    if values.values().nrows() != params.goods() || values.values().ncols() != network.size() {
        return Err(Error::DimensionMismatch {
            what: "good values shape",
            expected: params.goods() * network.size(),
            got: values.values().len(),
        });
    }
    Ok(())
}

pub fn compute_weights(
    params: &CostParameters,
    network: &PortNetwork,
    good: usize,
) -> Result<WeightMatrix> {
    let k = network.size();
    if params.ports() != k {
        return Err(Error::DimensionMismatch {
            what: "congestion coefficients vs ports",
            expected: k,
            got: params.ports(),
        });
    }
    if good >= params.goods() {
        return Err(Error::InvalidInput(format!("good index {good} out of range")));
    }
    let c = params.transport()[good];
    let mut raw = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let transport = if i == j { 0.0 } else { c * network.transport_kernel(i, j) };
            let denom = params.congestion()[j] + transport;
            if !(denom > 0.0) {
                return Err(Error::NonPositiveDenominator {
                    good,
                    origin: i,
                    destination: j,
                    value: denom,
                });
            }
            raw[(i, j)] = 1.0 / denom;
        }
    }
    let mut normalized = raw.clone();
    for i in 0..k {
        let s = crate::linalg::order_free_sum(raw.row(i).iter().copied());
        normalized.row_mut(i).iter_mut().for_each(|w| *w /= s);
    }
    Ok(WeightMatrix { raw, normalized })
}

/// `phi^bullet_j = sum_m phi^m_j`.
pub fn aggregate_occupancy(field: &MeanField) -> DVector<f64> {
    let occ = field.occupancy();
    DVector::from_fn(occ.ncols(), |j, _| occ.column(j).iter().sum())
}

/// `Phi^n_ij = phi^n_i Q^n_ij`, one `K x K` matrix per good.
pub fn realized_flow(field: &MeanField, policy: &ControlPolicy) -> Vec<DMatrix<f64>> {
    policy
        .transitions()
        .iter()
        .enumerate()
        .map(|(n, q)| DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| field.occupancy()[(n, i)] * q[(i, j)]))
        .collect()
}

/// Mean-field reduced objective of the coordinator at `origin` shipping
/// `good` with transition row `row`:
///
/// `sum_j phi_i q_j M_ij - sum_j r_j (phi^bullet_j + phi_i q_j)^2
///  - c_n sum_{j != i} (phi_i q_j)^2 g(T_ij)`.
///
/// `row` need not lie on the simplex.
pub fn cost_functional(
    origin: usize,
    good: usize,
    row: &[f64],
    field: &MeanField,
    params: &CostParameters,
    network: &PortNetwork,
    values: &GoodValues,
) -> f64 {
    let occ = field.occupancy();
    let phi_i = occ[(good, origin)];
    let c = params.transport()[good];
    let mut total = 0.0;
    for (j, &q) in row.iter().enumerate() {
        let sent = phi_i * q;
        let background: f64 = occ.column(j).iter().sum();
        let crowd = background + sent;
        total += sent * values.margin(good, origin, j) - params.congestion()[j] * crowd * crowd;
        if j != origin {
            total -= c * sent * sent * network.transport_kernel(origin, j);
        }
    }
    total
}

/// Gradient of [`cost_functional`] with respect to the row.
pub fn cost_gradient(
    origin: usize,
    good: usize,
    row: &[f64],
    field: &MeanField,
    params: &CostParameters,
    network: &PortNetwork,
    values: &GoodValues,
) -> Vec<f64> {
    let occ = field.occupancy();
    let phi_i = occ[(good, origin)];
    let c = params.transport()[good];
    row.iter()
        .enumerate()
        .map(|(j, &q)| {
            let background: f64 = occ.column(j).iter().sum();
            let mut g = phi_i * values.margin(good, origin, j)
                - 2.0 * params.congestion()[j] * phi_i * (background + phi_i * q);
            if j != origin {
                g -= 2.0 * c * network.transport_kernel(origin, j) * phi_i * phi_i * q;
            }
            g
        })
        .collect()
}
