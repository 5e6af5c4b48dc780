//! Random-walk Metropolis samplers for the two inference levels: hypothesis
//! distributions on the simplex (via the multinomial-logit transform) and
//! model parameters under the saddle-point or exact evidence.
//!
//! Chains are seed-deterministic: identical seed and configuration produce
//! bitwise-identical samples. Step-size adaptation runs during burn-in only
//! and is frozen afterwards, preserving detailed balance in the sampling
//! phase.

use crate::cme::gibbs_with_log_z;
use crate::error::{Error, Result};
use crate::posterior::evidence::brute_force_log_evidence_weighted;
use crate::posterior::{log_posterior_q, HyperPrior, ParamPrior};
use crate::prob::{relative_entropy, ObservedCounts, SimplexDistribution, StateGrid};
use crate::cme::{ResidualModel, ToleranceSpec};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random-walk Metropolis settings.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    /// Steps discarded before sampling; the only phase where the step size
    /// adapts.
    pub burn_in: usize,
    /// Number of retained samples.
    pub samples: usize,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
    /// Initial proposal step size (scales the per-coordinate proposal widths).
    pub initial_step: f64,
    /// Acceptance rate the burn-in adaptation steers towards.
    pub target_acceptance: f64,
    /// Burn-in steps between step-size adjustments.
    pub adapt_interval: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            burn_in: 5_000,
            samples: 20_000,
            thin: 1,
            initial_step: 0.5,
            target_acceptance: 0.3,
            adapt_interval: 100,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidConfig("sample count must be positive".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thinning must be at least 1".into()));
        }
        if !self.initial_step.is_finite() || self.initial_step <= 0.0 {
            return Err(Error::InvalidConfig("initial step must be positive".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::InvalidConfig("target acceptance must lie in (0, 1)".into()));
        }
        if self.adapt_interval == 0 {
            return Err(Error::InvalidConfig("adapt interval must be positive".into()));
        }
        Ok(())
    }
}

/// Step-size adaptation record for a finished chain.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningRecord {
    pub initial_step: f64,
    pub final_step: f64,
    pub burn_in_acceptance: f64,
}

/// Output of one chain: retained samples, their target log densities, and
/// bookkeeping for reproducibility.
#[derive(Debug, Clone)]
pub struct ChainResult {
    pub samples: Vec<Vec<f64>>,
    /// Target log density of each retained sample, in the chain's sampling
    /// coordinates (transform Jacobians included where applicable).
    pub log_density: Vec<f64>,
    /// Acceptance rate over the post-burn-in phase.
    pub acceptance_rate: f64,
    pub seed: u64,
    pub tuning: TuningRecord,
    /// Best point seen across all evaluations, burn-in included.
    pub map_point: Vec<f64>,
    pub map_log_density: f64,
}

impl ChainResult {
    /// Values of component `i` across the retained samples.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[i]).collect()
    }
}

/// Generic componentwise Gaussian random-walk Metropolis over an
/// unconstrained coordinate space.
///
/// `scales` fixes the relative proposal width per coordinate; the global step
/// size multiplying them adapts toward `target_acceptance` during burn-in and
/// is then frozen. The returned chain lives in the sampling coordinates.
pub fn random_walk_metropolis<F>(
    initial: &[f64],
    scales: &[f64],
    target: F,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<ChainResult>
where
    F: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    if initial.is_empty() || initial.len() != scales.len() {
        return Err(Error::InvalidConfig(
            "initial point and scales must be non-empty and of equal length".into(),
        ));
    }
    if scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::InvalidConfig("proposal scales must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = initial.to_vec();
    let mut fx = target(&x);
    if fx == f64::NEG_INFINITY {
        return Err(Error::TuningFailure(
            "target density is -inf at the initial point".into(),
        ));
    }
    let mut map_point = x.clone();
    let mut map_value = fx;
    let mut step = cfg.initial_step;

    let dim = x.len();
    let mut proposal = vec![0.0; dim];
    let mut mh_step = |x: &mut Vec<f64>,
                       fx: &mut f64,
                       step: f64,
                       rng: &mut ChaCha8Rng,
                       map_point: &mut Vec<f64>,
                       map_value: &mut f64|
     -> bool {
        for i in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            proposal[i] = x[i] + step * scales[i] * z;
        }
        let fy = target(&proposal);
        if fy > *map_value {
            *map_value = fy;
            map_point.clone_from_slice(&proposal);
        }
        let u: f64 = rng.gen();
        if u.ln() < fy - *fx {
            x.clone_from_slice(&proposal);
            *fx = fy;
            true
        } else {
            false
        }
    };

    let mut burn_accepts = 0usize;
    let mut window_accepts = 0usize;
    for i in 0..cfg.burn_in {
        if mh_step(&mut x, &mut fx, step, &mut rng, &mut map_point, &mut map_value) {
            burn_accepts += 1;
            window_accepts += 1;
        }
        if (i + 1) % cfg.adapt_interval == 0 {
            let rate = window_accepts as f64 / cfg.adapt_interval as f64;
            if rate > cfg.target_acceptance + 0.05 {
                step *= 1.1;
            } else if rate < cfg.target_acceptance - 0.05 {
                step *= 0.9;
            }
            step = step.clamp(1e-8, 1e4);
            window_accepts = 0;
        }
    }

    let total = cfg.samples * cfg.thin;
    let mut samples = Vec::with_capacity(cfg.samples);
    let mut log_density = Vec::with_capacity(cfg.samples);
    let mut accepts = 0usize;
    for i in 0..total {
        if mh_step(&mut x, &mut fx, step, &mut rng, &mut map_point, &mut map_value) {
            accepts += 1;
        }
        if (i + 1) % cfg.thin == 0 {
            samples.push(x.clone());
            log_density.push(fx);
        }
    }
    if accepts == 0 {
        return Err(Error::TuningFailure(format!(
            "zero acceptance over {total} post-burn-in steps (step size {step:e})"
        )));
    }

    Ok(ChainResult {
        samples,
        log_density,
        acceptance_rate: accepts as f64 / total as f64,
        seed,
        tuning: TuningRecord {
            initial_step: cfg.initial_step,
            final_step: step,
            burn_in_acceptance: if cfg.burn_in > 0 {
                burn_accepts as f64 / cfg.burn_in as f64
            } else {
                0.0
            },
        },
        map_point,
        map_log_density: map_value,
    })
}

/// Map logit coordinates `z` (length `K-1`, anchored at the last cell) to a
/// point on the `K`-simplex.
pub fn logit_to_simplex(z: &[f64]) -> Vec<f64> {
    let k = z.len() + 1;
    let mut w = Vec::with_capacity(k);
    w.extend_from_slice(z);
    w.push(0.0);
    let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = w.iter().map(|v| (v - m).exp()).sum();
    w.iter().map(|v| (v - m).exp() / sum).collect()
}

/// Log Jacobian of the logit-simplex transform: `sum_k log q_k`, so a chain
/// in `z` with this correction targets the flat-measure density on the
/// simplex.
pub fn logit_simplex_log_jacobian(q: &[f64]) -> f64 {
    q.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).sum()
}

/// Sample the hypothesis-level posterior over the simplex by random-walk
/// Metropolis in the multinomial-logit transform.
///
/// Retained samples are the simplex points themselves (length `K`); the
/// recorded log density is the chain's target in logit coordinates, i.e. the
/// flat-measure posterior plus the transform Jacobian.
pub fn sample_hypothesis_posterior(
    counts: &ObservedCounts,
    constraint: Option<(&ResidualModel, &ToleranceSpec)>,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<ChainResult> {
    let k = counts.len();
    if k < 2 {
        return Err(Error::InvalidConfig(
            "hypothesis sampling needs at least two states".into(),
        ));
    }
    let target = |z: &[f64]| -> f64 {
        let q = logit_to_simplex(z);
        let jac = logit_simplex_log_jacobian(&q);
        if jac == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let q = match SimplexDistribution::new(q) {
            Ok(q) => q,
            Err(_) => return f64::NEG_INFINITY,
        };
        match log_posterior_q(&q, counts, constraint) {
            Ok(v) => v + jac,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let initial = vec![0.0; k - 1];
    let scales = vec![1.0; k - 1];
    let chain = random_walk_metropolis(&initial, &scales, target, cfg, seed)?;
    Ok(ChainResult {
        samples: chain.samples.iter().map(|z| logit_to_simplex(z)).collect(),
        map_point: logit_to_simplex(&chain.map_point),
        ..chain
    })
}

/// A parametric family whose members are CME-form distributions over a fixed
/// grid: each parameter vector yields per-cell log weights `phi` with
/// `q_hat ∝ e^phi`.
pub trait ModelFamily {
    fn grid(&self) -> &StateGrid;
    fn param_names(&self) -> Vec<String>;

    /// Per-cell log weights at `theta`. Families whose state space is too
    /// large to materialize may decline.
    fn log_weights(&self, theta: &[f64]) -> Result<Vec<f64>>;

    fn equilibrium_distribution(&self, theta: &[f64]) -> Result<SimplexDistribution> {
        let phi = self.log_weights(theta)?;
        let exponent: Vec<f64> = phi.iter().map(|p| -p).collect();
        Ok(gibbs_with_log_z(&exponent).0)
    }

    /// Saddle-point log evidence `-N H[p||q_hat_theta]`; zero when there is
    /// no data.
    fn saddle_log_evidence(&self, theta: &[f64], counts: &ObservedCounts) -> Result<f64> {
        if counts.total() == 0 {
            return Ok(0.0);
        }
        let q_hat = self.equilibrium_distribution(theta)?;
        let p = counts.to_data_distribution()?;
        Ok(-(counts.total() as f64) * relative_entropy(&p, &q_hat)?)
    }
}

/// Which evidence enters the parameter-level target density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvidenceMode {
    /// Saddle-point evidence; valid near statistical equilibrium.
    SaddlePoint,
    /// Brute-force simplex quadrature (state count at most 4).
    Exact { resolution: usize },
}

/// Sample the parameter-level posterior `P[theta] * evidence(theta)` by
/// random-walk Metropolis.
///
/// Log-uniform parameters are proposed in log space, so each prior is flat in
/// its sampling coordinate and bound enforcement reduces to rejection.
/// Retained samples and the MAP point are reported in natural coordinates.
pub fn sample_parameter_posterior(
    counts: &ObservedCounts,
    family: &dyn ModelFamily,
    hyper: &HyperPrior,
    mode: EvidenceMode,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<ChainResult> {
    let dim = hyper.dim();
    if family.param_names().len() != dim {
        return Err(Error::DimensionMismatch {
            expected: family.param_names().len(),
            actual: dim,
        });
    }
    if let EvidenceMode::Exact { .. } = mode {
        if counts.len() > crate::posterior::MAX_BRUTE_FORCE_STATES {
            return Err(Error::Unsupported(format!(
                "exact evidence supports at most {} states, got {}",
                crate::posterior::MAX_BRUTE_FORCE_STATES,
                counts.len()
            )));
        }
    }

    // Sampling coordinates: identity for uniform priors, log for log-uniform.
    let to_natural = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(hyper.params())
            .map(|(&v, p)| match p {
                ParamPrior::Uniform { .. } => v,
                ParamPrior::LogUniform { .. } => v.exp(),
            })
            .collect()
    };
    let bounds: Vec<(f64, f64)> = hyper
        .params()
        .iter()
        .map(|p| match *p {
            ParamPrior::Uniform { lo, hi } => (lo, hi),
            ParamPrior::LogUniform { lo, hi } => (lo.ln(), hi.ln()),
        })
        .collect();

    let target = |u: &[f64]| -> f64 {
        for (v, (lo, hi)) in u.iter().zip(&bounds) {
            if !(v >= lo && v <= hi) {
                return f64::NEG_INFINITY;
            }
        }
        let theta = to_natural(u);
        let evidence = match mode {
            EvidenceMode::SaddlePoint => family.saddle_log_evidence(&theta, counts),
            EvidenceMode::Exact { resolution } => family
                .log_weights(&theta)
                .and_then(|phi| brute_force_log_evidence_weighted(counts, Some(&phi), resolution))
                .map(|r| r.log_evidence),
        };
        // Priors are flat in the sampling coordinates; out-of-domain
        // parameter values reject.
        evidence.unwrap_or(f64::NEG_INFINITY)
    };

    let central = hyper.central_point();
    let initial: Vec<f64> = central
        .iter()
        .zip(hyper.params())
        .map(|(&t, p)| match p {
            ParamPrior::Uniform { .. } => t,
            ParamPrior::LogUniform { .. } => t.ln(),
        })
        .collect();
    let scales: Vec<f64> = bounds.iter().map(|(lo, hi)| (hi - lo) / 20.0).collect();

    let chain = random_walk_metropolis(&initial, &scales, target, cfg, seed)?;
    Ok(ChainResult {
        samples: chain.samples.iter().map(|u| to_natural(u)).collect(),
        map_point: to_natural(&chain.map_point),
        ..chain
    })
}

/// Monte Carlo standard error of the mean of a correlated series, by batch
/// means with `floor(sqrt(n))` batches.
pub fn mc_standard_error(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return f64::NAN;
    }
    let b = (n as f64).sqrt().floor() as usize;
    let m = n / b;
    let means: Vec<f64> = (0..b)
        .map(|i| series[i * m..(i + 1) * m].iter().sum::<f64>() / m as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>() / (b as f64 - 1.0);
    (var / b as f64).sqrt()
}

/// Empirical quantile with linear interpolation; `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty() && (0.0..=1.0).contains(&q));
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}
