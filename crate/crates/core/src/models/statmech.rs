//! Moment constraints in statistical mechanics: a mean-energy constraint
//! whose CME solution is the Gibbs canonical ensemble `q ∝ exp(-lambda E)`.
//!
//! The energy constraint embeds into the squared-residual framework via
//! `g = sqrt(E)`, so `|g|^2 = E` and the generic dual solver reproduces the
//! canonical ensemble; this requires `E >= 0`.

use crate::cme::{self, CmeSolution, ResidualModel};
use crate::error::{Error, Result};
use crate::posterior::ModelFamily;
use crate::prob::StateGrid;

/// A per-cell energy function with an optional target mean energy.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    energy: Vec<f64>,
    target_mean: Option<f64>,
}

impl EnergyModel {
    pub fn new(energy: Vec<f64>, target_mean: Option<f64>) -> Result<Self> {
        if energy.is_empty() {
            return Err(Error::InvalidModel("energy vector must be non-empty".into()));
        }
        if energy.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::InvalidModel(
                "energies must be finite and non-negative".into(),
            ));
        }
        if let Some(target) = target_mean {
            let lo = energy.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(target > lo && target < hi) {
                return Err(Error::InfeasibleTarget {
                    dim: 0,
                    target,
                    lo,
                    hi,
                });
            }
        }
        Ok(Self { energy, target_mean })
    }

    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    pub fn target_mean(&self) -> Option<f64> {
        self.target_mean
    }
}

/// Residual model realizing the energy constraint: `g[0][k] = sqrt(E_k)`.
pub fn statmech_residual_model(energy: &[f64]) -> Result<ResidualModel> {
    if energy.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(Error::InvalidModel(
            "square-root embedding requires non-negative finite energies".into(),
        ));
    }
    ResidualModel::new(vec![energy.iter().map(|e| e.sqrt()).collect()], vec![])
}

/// Solve for the canonical ensemble at mean energy `mean_energy`.
pub fn canonical_ensemble(energy: &[f64], mean_energy: f64) -> Result<CmeSolution> {
    let model = statmech_residual_model(energy)?;
    cme::solve_cme(&model, &[mean_energy])
}

/// Parameter family over the constraint tolerance: `q_hat ∝ exp(-E/sigma^2)`
/// with the single free parameter `sigma`.
#[derive(Debug, Clone)]
pub struct StatMechFamily {
    grid: StateGrid,
    energy: Vec<f64>,
}

impl StatMechFamily {
    pub fn new(grid: StateGrid, energy: Vec<f64>) -> Result<Self> {
        if grid.len() != energy.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: energy.len(),
            });
        }
        if energy.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::InvalidModel(
                "energies must be finite and non-negative".into(),
            ));
        }
        Ok(Self { grid, energy })
    }
}

impl ModelFamily for StatMechFamily {
    fn grid(&self) -> &StateGrid {
        &self.grid
    }

    fn param_names(&self) -> Vec<String> {
        vec!["sigma".into()]
    }

    fn log_weights(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: theta.len(),
            });
        }
        let sigma = theta[0];
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::InvalidModel(format!("sigma must be positive, got {sigma}")));
        }
        let lambda = 1.0 / (sigma * sigma);
        Ok(self.energy.iter().map(|e| -lambda * e).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::relative_entropy;
    use crate::prob::SimplexDistribution;

    #[test]
    fn two_state_quarter_mean_energy() {
        let solution = canonical_ensemble(&[0.0, 1.0], 0.25).unwrap();
        assert!((solution.lambda[0] - 3.0f64.ln()).abs() < 1e-9);
        assert!((solution.q_hat.get(0) - 0.75).abs() < 1e-10);
        assert!((solution.q_hat.get(1) - 0.25).abs() < 1e-10);
    }

    #[test]
    fn two_state_multiplier_matches_closed_form() {
        // lambda = log((1 - Ebar)/Ebar) for energies {0, 1}.
        for ebar in [0.1, 0.25, 0.4] {
            let solution = canonical_ensemble(&[0.0, 1.0], ebar).unwrap();
            let analytic = ((1.0 - ebar) / ebar).ln();
            assert!(
                (solution.lambda[0] - analytic).abs() < 1e-8,
                "ebar {ebar}: {} vs {analytic}",
                solution.lambda[0]
            );
        }
    }

    #[test]
    fn constant_energy_constraint_is_vacuous() {
        let model = statmech_residual_model(&[2.0, 2.0, 2.0]).unwrap();
        let solution = cme::solve_cme(&model, &[2.0]).unwrap();
        assert_eq!(solution.lambda[0], 0.0);
        for &w in solution.q_hat.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_energy_reproduces_gibbs_kernel() {
        let xs: Vec<f64> = (0..201).map(|i| -5.0 + 0.05 * i as f64).collect();
        let energy: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let solution = canonical_ensemble(&energy, 1.0).unwrap();
        let lambda = solution.lambda[0];
        let kernel: Vec<f64> = energy.iter().map(|e| (-lambda * e).exp()).collect();
        let reference = SimplexDistribution::from_unnormalized(kernel).unwrap();
        let div = relative_entropy(&reference, &solution.q_hat).unwrap();
        assert!(div < 1e-10, "divergence {div}");
        assert!((solution.achieved_moments[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn negative_energy_is_rejected() {
        assert!(statmech_residual_model(&[0.5, -0.1]).is_err());
        assert!(EnergyModel::new(vec![1.0, -1.0], None).is_err());
    }

    #[test]
    fn energy_model_target_must_be_attainable() {
        assert!(EnergyModel::new(vec![0.0, 1.0], Some(0.5)).is_ok());
        assert!(EnergyModel::new(vec![0.0, 1.0], Some(1.5)).is_err());
    }

    #[test]
    fn family_weights_follow_inverse_variance_convention() {
        let grid = StateGrid::regular_1d(0.0, 1.0, 2).unwrap();
        let family = StatMechFamily::new(grid, vec![0.0, 1.0]).unwrap();
        let q = family.equilibrium_distribution(&[1.0]).unwrap();
        // lambda = 1: q1/q0 = e^{-1}.
        let ratio = q.get(1) / q.get(0);
        assert!((ratio - (-1.0f64).exp()).abs() < 1e-12);
    }
}
