//! Posterior densities over hypothesis distributions and model parameters,
//! evidence computations, and the MCMC samplers for both levels.
//!
//! The hypothesis-level posterior combines the entropy-favoring prior, an
//! optional squared-residual constraint penalty, and the multinomial
//! likelihood, all against the flat measure on the simplex.

mod evidence;
mod mcmc;

pub use evidence::{
    brute_force_log_evidence, brute_force_log_evidence_weighted, saddle_point_log_evidence,
    simplex_lattice, EvidenceMethod, EvidenceReport, MAX_BRUTE_FORCE_STATES,
    MIN_LATTICE_RESOLUTION,
};
pub use mcmc::{
    mc_standard_error, quantile, random_walk_metropolis, sample_hypothesis_posterior,
    sample_parameter_posterior, ChainResult, EvidenceMode, McmcConfig, ModelFamily, TuningRecord,
};

use crate::cme::{self, ResidualModel, ToleranceSpec};
use crate::error::{Error, Result};
use crate::prob::{
    multinomial_log_likelihood, relative_entropy, shannon_entropy, ObservedCounts,
    SimplexDistribution,
};

/// Prior over one free model parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamPrior {
    /// Flat on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Flat in `log theta` on `[lo, hi]`, requiring `lo > 0`. This is the
    /// `d beta / sigma` style prior for scale parameters.
    LogUniform { lo: f64, hi: f64 },
}

impl ParamPrior {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds();
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidConfig(format!("invalid prior bounds [{lo}, {hi}]")));
        }
        if matches!(self, ParamPrior::LogUniform { .. }) && lo <= 0.0 {
            return Err(Error::InvalidConfig(
                "log-uniform prior requires a positive lower bound".into(),
            ));
        }
        Ok(())
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            ParamPrior::Uniform { lo, hi } | ParamPrior::LogUniform { lo, hi } => (lo, hi),
        }
    }
}

/// Independent per-parameter priors for the model parameters and tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperPrior {
    params: Vec<ParamPrior>,
}

impl HyperPrior {
    pub fn new(params: Vec<ParamPrior>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidConfig("hyperprior must cover at least one parameter".into()));
        }
        for p in &params {
            p.validate()?;
        }
        Ok(Self { params })
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[ParamPrior] {
        &self.params
    }

    /// Unnormalized log density at `theta`; `-inf` outside the bounds.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if theta.len() != self.params.len() {
            return f64::NEG_INFINITY;
        }
        let mut sum = 0.0;
        for (p, &t) in self.params.iter().zip(theta) {
            let (lo, hi) = p.bounds();
            if !(t >= lo && t <= hi) {
                return f64::NEG_INFINITY;
            }
            if let ParamPrior::LogUniform { .. } = p {
                sum -= t.ln();
            }
        }
        sum
    }

    /// A central starting point: interval midpoint for uniform components,
    /// geometric midpoint for log-uniform ones.
    pub fn central_point(&self) -> Vec<f64> {
        self.params
            .iter()
            .map(|p| match *p {
                ParamPrior::Uniform { lo, hi } => 0.5 * (lo + hi),
                ParamPrior::LogUniform { lo, hi } => (0.5 * (lo.ln() + hi.ln())).exp(),
            })
            .collect()
    }
}

/// Which algebraic form of the constrained entropy-favoring prior to
/// evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorForm {
    /// `H[q] - sum_d (g_d/sigma_d)^2 . q`: entropy traded off against the
    /// constraint penalty.
    Direct,
    /// `-H[q || q_hat]`: divergence from the CME benchmark. Differs from the
    /// direct form by the `q`-independent constant `log Z(q_hat)`.
    Divergence,
}

/// Log of the constrained entropy-favoring prior at `q`, in either of its
/// two equivalent formulations.
pub fn log_constrained_prior(
    q: &SimplexDistribution,
    model: &ResidualModel,
    tol: &ToleranceSpec,
    form: PriorForm,
) -> Result<f64> {
    if q.len() != model.state_count() {
        return Err(Error::DimensionMismatch {
            expected: model.state_count(),
            actual: q.len(),
        });
    }
    if tol.len() != model.residual_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.residual_dim(),
            actual: tol.len(),
        });
    }
    match form {
        PriorForm::Direct => {
            let penalty = constraint_penalty(q, model, tol)?;
            Ok(shannon_entropy(q) - penalty)
        }
        PriorForm::Divergence => {
            let q_hat = cme::gibbs_from_multipliers(model, &tol.multipliers())?;
            Ok(-relative_entropy(q, &q_hat)?)
        }
    }
}

/// The penalty term `sum_d lambda_d sum_k g[d][k]^2 q_k` with
/// `lambda = 1/sigma^2`.
fn constraint_penalty(
    q: &SimplexDistribution,
    model: &ResidualModel,
    tol: &ToleranceSpec,
) -> Result<f64> {
    let moments = cme::achieved_moments(q, model)?;
    Ok(tol
        .multipliers()
        .iter()
        .zip(&moments)
        .map(|(l, m)| l * m)
        .sum())
}

/// Unnormalized log posterior over hypothesis distributions:
/// `H[q] - penalty(q) - N H[p||q]` up to a `q`-independent constant.
///
/// With no constraint the density reduces to the entropy-favoring prior times
/// the likelihood; with no data (`N = 0`) the likelihood term drops and the
/// prior alone remains. Support violations yield `-inf`.
pub fn log_posterior_q(
    q: &SimplexDistribution,
    counts: &ObservedCounts,
    constraint: Option<(&ResidualModel, &ToleranceSpec)>,
) -> Result<f64> {
    if q.len() != counts.len() {
        return Err(Error::DimensionMismatch {
            expected: counts.len(),
            actual: q.len(),
        });
    }
    let mut value = shannon_entropy(q);
    if let Some((model, tol)) = constraint {
        if tol.len() != model.residual_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.residual_dim(),
                actual: tol.len(),
            });
        }
        value -= constraint_penalty(q, model, tol)?;
    }
    if counts.total() > 0 {
        // N (p . log q), the likelihood exponent up to the data-only
        // constant; -inf on support violation.
        let ll = multinomial_log_likelihood(counts, q)?;
        if ll == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        value += ll;
    }
    Ok(value)
}
