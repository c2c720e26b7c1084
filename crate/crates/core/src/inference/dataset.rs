use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::series::{Day, DenseFlows};

use super::proxy::{CrowdednessConfig, CrowdednessProxies};

/// Regression sample for one route and good: `Y_t` on
/// `(X_1,t .. X_K,t, Z_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub origin: usize,
    pub destination: usize,
    pub good: usize,
    pub days: Vec<Day>,
    /// Exports on the route.
    pub response: Vec<f64>,
    /// Crowdedness proxies, one column per destination.
    pub crowdedness: DMatrix<f64>,
    /// Imports of the good into the origin.
    pub imports: Vec<f64>,
}

impl RegressionDataset {
    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }
}

/// Builds the dataset of route `origin -> destination` for `good`.
///
/// `import_window` is the number of trailing days (ending at `t`) summed
/// into the import regressor; 1 means same-day imports.
pub fn build_regression_dataset(
    flows: &DenseFlows,
    config: &CrowdednessConfig,
    origin: usize,
    destination: usize,
    good: usize,
    import_window: usize,
) -> Result<RegressionDataset> {
    let proxies = match CrowdednessProxies::compute(flows, config) {
        Ok(p) => p,
        Err(Error::InsufficientHistory { .. }) => return Err(Error::EmptyDataset { origin, destination }),
        Err(e) => return Err(e),
    };
    dataset_from_proxies(flows, &proxies, origin, destination, good, import_window)
}

/// Same as [`build_regression_dataset`] with proxies computed once for all
/// routes.
pub fn dataset_from_proxies(
    flows: &DenseFlows,
    proxies: &CrowdednessProxies,
    origin: usize,
    destination: usize,
    good: usize,
    import_window: usize,
) -> Result<RegressionDataset> {
    let k = flows.ports();
    if origin >= k || destination >= k || good >= flows.goods() {
        return Err(Error::InvalidInput(alloc::format!(
            "route {origin}->{destination} / good {good} outside a {k}-port, {}-good series",
            flows.goods()
        )));
    }
    if import_window == 0 {
        return Err(Error::InvalidInput("import window must be at least one day".into()));
    }
    let admissible: Vec<usize> = (import_window - 1..proxies.len()).collect();
    if admissible.is_empty() {
        return Err(Error::EmptyDataset { origin, destination });
    }
    let rows = admissible.len();
    let crowdedness = DMatrix::from_fn(rows, k, |r, l| proxies.series[l][admissible[r]]);
    let imports = admissible
        .iter()
        .map(|&t| (t + 1 - import_window..=t).map(|u| flows.imports(u, good, origin)).sum())
        .collect();
    Ok(RegressionDataset {
        origin,
        destination,
        good,
        days: admissible.iter().map(|&t| flows.day(t)).collect(),
        response: admissible.iter().map(|&t| flows.flow(t, good, origin, destination)).collect(),
        crowdedness,
        imports,
    })
}
