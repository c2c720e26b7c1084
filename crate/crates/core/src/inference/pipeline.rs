use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{compute_weights, CostParameters, PortNetwork};
use crate::series::{Day, FlowSeries};

use super::calibrate::{calibrate, CalibrationConfig, CalibrationResult, RouteIntercept};
use super::dataset::dataset_from_proxies;
use super::ols::{ols_fit, RegressionCoefficients};
use super::proxy::{CrowdednessConfig, CrowdednessProxies};

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub crowdedness: CrowdednessConfig,
    /// Trailing days summed into the import regressor.
    pub import_window: usize,
    pub ridge: f64,
    /// Inclusive date filter applied before anything else.
    pub window: Option<(Day, Day)>,
    pub calibration: CalibrationConfig,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            crowdedness: CrowdednessConfig::default(),
            import_window: 1,
            ridge: 0.0,
            window: None,
            calibration: CalibrationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteOutcome {
    pub origin: usize,
    pub destination: usize,
    pub fit: core::result::Result<RegressionCoefficients, Error>,
    /// Crowd and self slopes implied by the calibrated parameters, for
    /// comparison with the fitted ones.
    pub implied_crowd_slopes: Option<Vec<f64>>,
    pub implied_self_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoodInference {
    pub good: String,
    pub routes: Vec<RouteOutcome>,
    pub intercepts: Vec<RouteIntercept>,
    pub calibration: CalibrationResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    pub ports: Vec<String>,
    pub first_day: Day,
    pub days: usize,
    pub goods: Vec<GoodInference>,
}

/// Proxies, per-route regressions, then calibration of each good on its
/// intercepts. Route failures are recorded; the run fails only when a good
/// cannot be calibrated.
pub fn infer_pipeline(series: &FlowSeries, network: &PortNetwork, config: &InferenceConfig) -> Result<InferenceReport> {
    let mut series = series.reindexed(network.labels())?;
    if let Some((first, last)) = config.window {
        series = series.restricted(first, last)?;
    }
    if series.is_empty() {
        return Err(Error::InvalidInput("flow series is empty".into()));
    }
    let flows = series.dense();
    let proxies = CrowdednessProxies::compute(&flows, &config.crowdedness)?;
    let k = network.size();

    let mut goods = Vec::new();
    for (n, label) in series.goods().iter().enumerate() {
        let mut routes = Vec::new();
        let mut intercepts = Vec::new();
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let fit = dataset_from_proxies(&flows, &proxies, i, j, n, config.import_window)
                    .and_then(|ds| ols_fit(&ds, config.ridge));
                if let Ok(f) = &fit {
                    intercepts.push(RouteIntercept {
                        origin: i,
                        destination: j,
                        value: f.intercept,
                    });
                }
                routes.push(RouteOutcome {
                    origin: i,
                    destination: j,
                    fit,
                    implied_crowd_slopes: None,
                    implied_self_slope: None,
                });
            }
        }
        let calibration = calibrate(&intercepts, network, &config.calibration)?;
        if let Ok(params) = CostParameters::new(calibration.congestion.clone(), alloc::vec![calibration.transport_cost], alloc::vec![1.0]) {
            if let Ok(w) = compute_weights(&params, network, 0) {
                for route in &mut routes {
                    let (i, j) = (route.origin, route.destination);
                    route.implied_crowd_slopes = Some(
                        (0..k)
                            .map(|l| {
                                let delta = if l == j { 1.0 } else { 0.0 };
                                w.raw[(i, j)] * (w.normalized[(i, l)] - delta) * calibration.congestion[l]
                            })
                            .collect(),
                    );
                    route.implied_self_slope = Some(w.normalized[(i, j)]);
                }
            }
        }
        goods.push(GoodInference {
            good: label.clone(),
            routes,
            intercepts,
            calibration,
        });
    }
    Ok(InferenceReport {
        ports: network.labels().to_vec(),
        first_day: flows.first_day(),
        days: flows.days(),
        goods,
    })
}
