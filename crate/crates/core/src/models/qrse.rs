//! Quantal response statistical equilibrium: a joint model of a continuous
//! outcome and a binary entry/exit action with logistic conditional action
//! probabilities and a tanh feedback constraint.
//!
//! The marginal outcome density combines the conditional action entropy with
//! the feedback penalty:
//!
//! `f[x] ∝ exp(H_b[p_entry(x)]) * exp(-tanh((x - mu)/T) (x - alpha)/S)`
//!
//! Note the temperature conventions: the conditional probabilities use the
//! logistic `1/(1 + e^{-(x-mu)/T})`, whose entry/exit difference is
//! `tanh((x-mu)/(2T))`, while the density's feedback term uses
//! `tanh((x-mu)/T)`. The two displays differ by a factor 2 in the tanh
//! argument; both are implemented literally as written.

use crate::error::{Error, Result};
use crate::numeric::coordinate_descent_max;
use crate::par;
use crate::posterior::{
    sample_parameter_posterior, ChainResult, EvidenceMode, HyperPrior, McmcConfig, ModelFamily,
};
use crate::prob::{ObservedCounts, SimplexDistribution, StateGrid};

/// Floor on the behavioral temperature in all evaluations, guarding the
/// logistic against overflow.
pub const MIN_TEMPERATURE: f64 = 1e-8;

/// Tail-mass rule: the kernel at both grid ends must sit at least this many
/// nats below its maximum, else the distribution is flagged as truncated.
pub const TAIL_CLEARANCE_NATS: f64 = 12.0;

/// Cells in the default data-driven grid.
pub const DEFAULT_GRID_CELLS: usize = 512;

/// QRSE parameters, all in outcome units: indifference point `mu`,
/// behavioral temperature `temperature`, competitive central tendency
/// `alpha`, and competitive scale `scale` (the inverse Lagrange multiplier).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QrseParams {
    pub mu: f64,
    pub temperature: f64,
    pub alpha: f64,
    pub scale: f64,
}

impl QrseParams {
    pub fn new(mu: f64, temperature: f64, alpha: f64, scale: f64) -> Result<Self> {
        if !mu.is_finite() || !alpha.is_finite() {
            return Err(Error::InvalidModel("mu and alpha must be finite".into()));
        }
        if !temperature.is_finite() || temperature <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::InvalidModel(format!("scale must be positive, got {scale}")));
        }
        Ok(Self {
            mu,
            temperature,
            alpha,
            scale,
        })
    }
}

/// Conditional entry probability `1/(1 + e^{-(x - mu)/T})`; the exit
/// probability is its complement.
pub fn qrse_conditional_entry(x: f64, mu: f64, temperature: f64) -> Result<f64> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::InvalidModel(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let t = temperature.max(MIN_TEMPERATURE);
    Ok(1.0 / (1.0 + (-(x - mu) / t).exp()))
}

/// Binary entropy of the conditional action distribution at logit `u`,
/// computed from `|u|` for stability.
fn binary_entropy_from_logit(u: f64) -> f64 {
    let a = (-u.abs()).exp();
    a.ln_1p() + u.abs() * a / (1.0 + a)
}

/// Log of the unnormalized QRSE outcome density:
/// `H_b[p_entry(x)] - tanh((x - mu)/T) (x - alpha)/S`. Finite for all finite
/// `x` and valid parameters.
pub fn qrse_log_kernel(x: f64, params: &QrseParams) -> f64 {
    let t = params.temperature.max(MIN_TEMPERATURE);
    let u = (x - params.mu) / t;
    binary_entropy_from_logit(u) - u.tanh() * (x - params.alpha) / params.scale
}

/// A QRSE outcome distribution on a grid, with the tail-mass diagnostic.
#[derive(Debug, Clone)]
pub struct QrseDistribution {
    pub density: SimplexDistribution,
    /// Nats by which the kernel maximum clears the smaller of the two grid
    /// ends.
    pub tail_clearance: f64,
    /// Set when the clearance falls below [`TAIL_CLEARANCE_NATS`]: the grid
    /// likely truncates visible probability mass.
    pub truncated: bool,
}

/// Exponentiate the kernel at the cell centers, weight by cell widths, and
/// normalize.
pub fn qrse_distribution(grid: &StateGrid, params: &QrseParams) -> Result<QrseDistribution> {
    if grid.dim() != 1 {
        return Err(Error::InvalidGrid(format!(
            "QRSE needs a one-dimensional grid, got {} coordinates",
            grid.dim()
        )));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidGrid("QRSE grid needs at least two cells".into()));
    }
    let kernel: Vec<f64> =
        par::map_slice(grid.cells(), |c| qrse_log_kernel(c.coords[0], params));
    let max_kernel = kernel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail_clearance = (max_kernel - kernel[0]).min(max_kernel - kernel[kernel.len() - 1]);
    let log_mass: Vec<f64> = kernel
        .iter()
        .zip(grid.cells())
        .map(|(k, c)| k + c.widths[0].ln())
        .collect();
    let m = log_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_mass.iter().map(|v| (v - m).exp()).collect();
    Ok(QrseDistribution {
        density: SimplexDistribution::from_unnormalized(weights)?,
        tail_clearance,
        truncated: tail_clearance < TAIL_CLEARANCE_NATS,
    })
}

/// Data-driven default grid: `[min - 5 sd, max + 5 sd]` with
/// [`DEFAULT_GRID_CELLS`] cells; the tail-mass check makes under-coverage
/// visible downstream.
pub fn default_outcome_grid(data: &[f64]) -> Result<StateGrid> {
    if data.len() < 2 {
        return Err(Error::InvalidGrid("need at least two observations to size a grid".into()));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid("observations must be finite".into()));
    }
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    let sd =
        (data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / data.len() as f64).sqrt();
    let scale = if sd > 0.0 { sd } else { hi.abs().max(1.0) * 0.1 };
    StateGrid::regular_1d(lo - 5.0 * scale, hi + 5.0 * scale, DEFAULT_GRID_CELLS)
}

/// Parameter family over `(mu, T, alpha, S)` on a fixed outcome grid.
#[derive(Debug, Clone)]
pub struct QrseFamily {
    grid: StateGrid,
}

impl QrseFamily {
    pub fn new(grid: StateGrid) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::InvalidGrid("QRSE needs a one-dimensional grid".into()));
        }
        Ok(Self { grid })
    }
}

impl ModelFamily for QrseFamily {
    fn grid(&self) -> &StateGrid {
        &self.grid
    }

    fn param_names(&self) -> Vec<String> {
        ["mu", "temperature", "alpha", "scale"].map(String::from).to_vec()
    }

    fn log_weights(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                actual: theta.len(),
            });
        }
        let params = QrseParams::new(theta[0], theta[1], theta[2], theta[3])?;
        Ok(self
            .grid
            .cells()
            .iter()
            .map(|c| qrse_log_kernel(c.coords[0], &params) + c.widths[0].ln())
            .collect())
    }
}

/// Fit output: parameter chain, polished MAP, and the implied feedback
/// moment.
#[derive(Debug, Clone)]
pub struct QrseFit {
    pub chain: ChainResult,
    pub map: QrseParams,
    pub map_log_posterior: f64,
    /// The achieved feedback constraint level: `sum_k tanh((x_k - mu)/T)
    /// (x_k - alpha) f_k` at the MAP. Reported, never set.
    pub implied_feedback: f64,
    /// Equilibrium distribution at the MAP.
    pub equilibrium: QrseDistribution,
}

/// Sample the QRSE parameter posterior and polish the MAP by coordinate
/// descent within the prior box.
///
/// The hyperprior covers `(mu, T, alpha, S)` in that order; its bounds must
/// respect `T > 0` and `S > 0`.
pub fn fit_qrse(
    grid: &StateGrid,
    counts: &ObservedCounts,
    hyper: &HyperPrior,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<QrseFit> {
    if hyper.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            actual: hyper.dim(),
        });
    }
    for (name, idx) in [("temperature", 1usize), ("scale", 3)] {
        let (lo, _) = hyper.params()[idx].bounds();
        if lo <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "{name} prior must have a positive lower bound"
            )));
        }
    }
    let family = QrseFamily::new(grid.clone())?;
    let chain = sample_parameter_posterior(
        counts,
        &family,
        hyper,
        EvidenceMode::SaddlePoint,
        cfg,
        seed,
    )?;

    let objective = |theta: &[f64]| -> f64 {
        let prior = hyper.log_density(theta);
        if prior == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        match family.saddle_log_evidence(theta, counts) {
            Ok(ev) => prior + ev,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let bounds: Vec<(f64, f64)> = hyper.params().iter().map(|p| p.bounds()).collect();
    let (theta, map_log_posterior) =
        coordinate_descent_max(objective, &chain.map_point, &bounds, 1e-10, 60);

    let map = QrseParams::new(theta[0], theta[1], theta[2], theta[3])?;
    let equilibrium = qrse_distribution(grid, &map)?;
    let t = map.temperature.max(MIN_TEMPERATURE);
    let implied_feedback: f64 = grid
        .cells()
        .iter()
        .zip(equilibrium.density.weights())
        .map(|(c, &w)| {
            let x = c.coords[0];
            ((x - map.mu) / t).tanh() * (x - map.alpha) * w
        })
        .sum();

    Ok(QrseFit {
        chain,
        map,
        map_log_posterior,
        implied_feedback,
        equilibrium,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn params(mu: f64, t: f64, alpha: f64, s: f64) -> QrseParams {
        QrseParams::new(mu, t, alpha, s).unwrap()
    }

    #[test]
    fn entry_probability_at_indifference_is_exactly_half() {
        assert_eq!(qrse_conditional_entry(0.3, 0.3, 0.7).unwrap(), 0.5);
    }

    #[test]
    fn entry_probability_monotone_limits() {
        let (mu, t) = (0.1, 0.4);
        let hi = qrse_conditional_entry(mu + 50.0 * t, mu, t).unwrap();
        let lo = qrse_conditional_entry(mu - 50.0 * t, mu, t).unwrap();
        assert!(hi > 1.0 - 1e-15);
        assert!(lo < 1e-15);
    }

    #[test]
    fn entry_and_exit_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let x = rng.gen_range(-50.0..50.0);
            let mu = rng.gen_range(-5.0..5.0);
            let t = rng.gen_range(0.01..5.0);
            let entry = qrse_conditional_entry(x, mu, t).unwrap();
            let exit = qrse_conditional_entry(-(x - mu) + mu, mu, t).unwrap();
            assert!((entry + exit - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn nonpositive_temperature_is_rejected() {
        assert!(qrse_conditional_entry(0.0, 0.0, 0.0).is_err());
        assert!(qrse_conditional_entry(0.0, 0.0, -1.0).is_err());
        assert!(QrseParams::new(0.0, -0.5, 0.0, 1.0).is_err());
        assert!(QrseParams::new(0.0, 0.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn kernel_at_indifference_with_centered_alpha_is_log_two() {
        let p = params(0.4, 0.9, 0.4, 1.3);
        assert!((qrse_log_kernel(0.4, &p) - 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kernel_is_even_about_mu_when_alpha_equals_mu() {
        let p = params(-0.2, 0.6, -0.2, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let h = rng.gen_range(0.0..10.0);
            let a = qrse_log_kernel(-0.2 + h, &p);
            let b = qrse_log_kernel(-0.2 - h, &p);
            assert!((a - b).abs() < 1e-12, "h={h}: {a} vs {b}");
        }
    }

    #[test]
    fn small_temperature_limit_matches_linear_decay() {
        // For x above both mu and alpha the entropy term vanishes and tanh
        // saturates, leaving -(x - alpha)/S.
        let p = params(0.0, 1e-6, 0.2, 0.7);
        let x = 1.5;
        let limit = -(x - p.alpha) / p.scale;
        assert!((qrse_log_kernel(x, &p) - limit).abs() < 1e-6);
    }

    #[test]
    fn kernel_is_lipschitz_in_temperature() {
        let xs: Vec<f64> = (0..101).map(|i| -3.0 + 0.06 * i as f64).collect();
        let base = params(0.1, 0.5, -0.2, 0.9);
        let bumped = params(0.1, 0.5 + 1e-6, -0.2, 0.9);
        for &x in &xs {
            let d = (qrse_log_kernel(x, &base) - qrse_log_kernel(x, &bumped)).abs();
            assert!(d < 1e-4, "unstable at x={x}: {d}");
        }
    }

    #[test]
    fn distribution_is_normalized_and_symmetric_for_centered_alpha() {
        let grid = StateGrid::regular_1d(-6.0, 6.0, 512).unwrap();
        let p = params(0.0, 0.5, 0.0, 0.5);
        let d = qrse_distribution(&grid, &p).unwrap();
        let sum: f64 = d.density.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(!d.truncated, "clearance {}", d.tail_clearance);
        let k = d.density.len();
        for i in 0..k / 2 {
            let a = d.density.get(i);
            let b = d.density.get(k - 1 - i);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_refinement_leaves_aggregated_masses_stable() {
        let coarse = StateGrid::regular_1d(-6.0, 6.0, 1024).unwrap();
        let fine = StateGrid::regular_1d(-6.0, 6.0, 2048).unwrap();
        let p = params(0.0, 0.5, 0.0, 0.5);
        let dc = qrse_distribution(&coarse, &p).unwrap();
        assert!(!dc.truncated, "clearance {}", dc.tail_clearance);
        let df = qrse_distribution(&fine, &p).unwrap();
        for i in 0..1024 {
            let aggregated = df.density.get(2 * i) + df.density.get(2 * i + 1);
            assert!(
                (aggregated - dc.density.get(i)).abs() < 1e-6,
                "cell {i}: {aggregated} vs {}",
                dc.density.get(i)
            );
        }
    }

    #[test]
    fn narrow_grid_triggers_truncation_warning() {
        let grid = StateGrid::regular_1d(-0.5, 0.5, 64).unwrap();
        let p = params(0.0, 0.5, 0.0, 2.0);
        let d = qrse_distribution(&grid, &p).unwrap();
        assert!(d.truncated);
    }

    #[test]
    fn default_grid_covers_data_with_margin() {
        let data = vec![-1.0, 0.0, 0.5, 2.0];
        let grid = default_outcome_grid(&data).unwrap();
        assert_eq!(grid.len(), DEFAULT_GRID_CELLS);
        let first = grid.cell(0).coords[0];
        let last = grid.cell(grid.len() - 1).coords[0];
        assert!(first < -1.0 && last > 2.0);
    }
}
