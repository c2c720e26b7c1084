use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::series::DenseFlows;

/// Forward-shifted moving average used as the expected-congestion proxy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrowdednessConfig {
    /// Days between the decision and the start of the averaging window.
    pub shift_days: usize,
    /// Width of the averaging window.
    pub window_days: usize,
}

impl Default for CrowdednessConfig {
    fn default() -> Self {
        Self {
            shift_days: 60,
            window_days: 20,
        }
    }
}

impl CrowdednessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_days == 0 {
            return Err(Error::InvalidInput("crowdedness window must be at least one day".into()));
        }
        Ok(())
    }

    /// Days lost at the end of a series: `s + m`.
    pub fn lookahead(&self) -> usize {
        self.shift_days + self.window_days
    }
}

/// `proxy(t) = (1/m) sum_{tau=1..m} inflow_j(t + s + tau)` for every day
/// `t` of the grid whose window is covered. Index `t` of the result is day
/// `t` of `flows`; the result has `days - (s + m)` entries.
pub fn crowdedness_proxy(flows: &DenseFlows, config: &CrowdednessConfig, destination: usize) -> Result<Vec<f64>> {
    config.validate()?;
    let needed = config.lookahead() + 1;
    if flows.days() < needed {
        return Err(Error::InsufficientHistory {
            destination,
            days: flows.days(),
            needed,
        });
    }
    let inflow: Vec<f64> = (0..flows.days()).map(|t| flows.inflow_total(t, destination)).collect();
    Ok(forward_average(&inflow, config))
}

/// The proxy applied to a plain daily inflow path.
pub fn forward_average(inflow: &[f64], config: &CrowdednessConfig) -> Vec<f64> {
    let s = config.shift_days;
    let m = config.window_days;
    let len = inflow.len().saturating_sub(s + m);
    (0..len)
        .map(|t| inflow[t + s + 1..=t + s + m].iter().sum::<f64>() / m as f64)
        .collect()
}

/// Proxies for every destination of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct CrowdednessProxies {
    pub config: CrowdednessConfig,
    /// `series[j][t]`.
    pub series: Vec<Vec<f64>>,
}

impl CrowdednessProxies {
    pub fn compute(flows: &DenseFlows, config: &CrowdednessConfig) -> Result<Self> {
        let series = (0..flows.ports())
            .map(|j| crowdedness_proxy(flows, config, j))
            .collect::<Result<_>>()?;
        Ok(Self { config: *config, series })
    }

    /// Number of days with a defined proxy.
    pub fn len(&self) -> usize {
        self.series.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
