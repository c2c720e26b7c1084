//! Two-step calibration from flow time series: crowdedness proxies and
//! per-route regressions, then recovery of `(c, r, v)` from the
//! regression intercepts.

mod calibrate;
mod dataset;
mod ols;
mod pipeline;
mod proxy;

pub use calibrate::{
    calibrate, forward_intercepts, CalibrationConfig, CalibrationResult, GaugeRecord, RouteIntercept, StartOutcome,
};
pub use dataset::{build_regression_dataset, dataset_from_proxies, RegressionDataset};
pub use ols::{design, ols_fit, RegressionCoefficients, MAX_DESIGN_CONDITION};
pub use pipeline::{infer_pipeline, GoodInference, InferenceConfig, InferenceReport, RouteOutcome};
pub use proxy::{crowdedness_proxy, forward_average, CrowdednessConfig, CrowdednessProxies};
