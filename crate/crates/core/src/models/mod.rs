//! Built-in model families: moment constraints in statistical mechanics,
//! approximate-constraint linear regression, and quantal response statistical
//! equilibrium. Each family is a residual-model factory plus its fitting
//! conveniences, all sharing the generic CME and posterior machinery.

pub mod qrse;
pub mod regression;
pub mod statmech;

pub use qrse::{
    default_outcome_grid, fit_qrse, qrse_conditional_entry, qrse_distribution, qrse_log_kernel,
    QrseDistribution, QrseFamily, QrseFit, QrseParams,
};
pub use regression::{
    fit_regression_map, regression_residual_model, RegressionFamily, RegressionFit,
    RegressionModel,
};
pub use statmech::{canonical_ensemble, statmech_residual_model, EnergyModel, StatMechFamily};
