//! The constrained maximum entropy (CME) problem.
//!
//! Residual models define expected-squared-residual constraints on
//! distributions over a state grid. Maximizing Shannon entropy subject to
//! those constraints yields a Gibbs-form distribution parameterized by
//! Lagrange multipliers; this module houses that distribution, the convex
//! dual, and a Newton solver that matches target moments.
//!
//! Multipliers follow the inverse-variance convention `lambda = 1 / sigma^2`
//! with no factor 1/2, so the implied kernel is `exp(-(g/sigma)^2)`. A fitted
//! `sigma` therefore absorbs a factor `sqrt(2)` relative to the usual
//! Gaussian parameterization.

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use crate::par;
use crate::prob::SimplexDistribution;
use nalgebra::{Cholesky, DMatrix, DVector};

/// Gradient sup-norm at which the dual solve is declared converged.
pub const DUAL_GRADIENT_TOLERANCE: f64 = 1e-10;
/// Newton iteration cap; past this the solver errors with its last iterate.
pub const MAX_NEWTON_ITERATIONS: usize = 200;
/// Gradient-descent iteration cap used when the Hessian is singular.
pub const MAX_GRADIENT_ITERATIONS: usize = 500;

const ARMIJO_SLOPE: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;

/// A `D x K` matrix of residual values `g[d][k]` over the grid cells,
/// together with the parameter vector that produced it.
#[derive(Debug, Clone)]
pub struct ResidualModel {
    rows: Vec<Vec<f64>>,
    squared: Vec<Vec<f64>>,
    theta: Vec<f64>,
}

impl ResidualModel {
    pub fn new(rows: Vec<Vec<f64>>, theta: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidModel("residual matrix needs at least one row".into()));
        }
        let k = rows[0].len();
        if k == 0 {
            return Err(Error::InvalidModel("residual matrix needs at least one column".into()));
        }
        for (d, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidModel(format!(
                    "residual row {d} has {} columns, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|g| !g.is_finite()) {
                return Err(Error::InvalidModel(format!("residual row {d} has non-finite entries")));
            }
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter vector".into()));
        }
        let squared = rows
            .iter()
            .map(|row| row.iter().map(|g| g * g).collect())
            .collect();
        Ok(Self { rows, squared, theta })
    }

    /// Number of residual dimensions `D`.
    pub fn residual_dim(&self) -> usize {
        self.rows.len()
    }

    /// Number of grid cells `K`.
    pub fn state_count(&self) -> usize {
        self.rows[0].len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.rows[d]
    }

    /// Row of squared residuals `g[d][.]^2`.
    pub fn squared_row(&self, d: usize) -> &[f64] {
        &self.squared[d]
    }
}

/// Per-dimension constraint tolerances `sigma > 0`.
#[derive(Debug, Clone)]
pub struct ToleranceSpec {
    sigma: Vec<f64>,
}

impl ToleranceSpec {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::InvalidModel("tolerance vector must be non-empty".into()));
        }
        if sigma.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidModel("tolerances must be finite and positive".into()));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multipliers under the paper-convention `lambda = 1 / sigma^2`.
    pub fn multipliers(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| 1.0 / (s * s)).collect()
    }
}

/// Output of a CME solve: multipliers, the Gibbs distribution, achieved
/// moments, and the dual objective value.
#[derive(Debug, Clone)]
pub struct CmeSolution {
    pub lambda: Vec<f64>,
    pub q_hat: SimplexDistribution,
    pub achieved_moments: Vec<f64>,
    pub dual_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Penalty exponent `c_k = sum_d lambda_d g[d][k]^2`.
pub(crate) fn penalty_exponent(model: &ResidualModel, lambda: &[f64]) -> Result<Vec<f64>> {
    if lambda.len() != model.residual_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.residual_dim(),
            actual: lambda.len(),
        });
    }
    if lambda.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidModel("non-finite multiplier vector".into()));
    }
    let k = model.state_count();
    Ok(par::map_collect(k, |j| {
        lambda
            .iter()
            .enumerate()
            .map(|(d, &l)| l * model.squared_row(d)[j])
            .sum()
    }))
}

/// Softmax of `-exponent` with max subtraction; returns the normalized
/// distribution and the log partition sum.
pub(crate) fn gibbs_with_log_z(exponent: &[f64]) -> (SimplexDistribution, f64) {
    let neg: Vec<f64> = exponent.iter().map(|c| -c).collect();
    let log_z = log_sum_exp(&neg);
    let weights: Vec<f64> = neg.iter().map(|v| (v - log_z).exp()).collect();
    let q = SimplexDistribution::from_unnormalized(weights)
        .expect("softmax weights are non-negative with positive sum");
    (q, log_z)
}

/// The Gibbs distribution `q_k ∝ exp(-sum_d lambda_d g[d][k]^2)` for given
/// multipliers, computed in the log domain.
pub fn gibbs_from_multipliers(model: &ResidualModel, lambda: &[f64]) -> Result<SimplexDistribution> {
    let exponent = penalty_exponent(model, lambda)?;
    Ok(gibbs_with_log_z(&exponent).0)
}

/// Achieved moments `m_d = sum_k g[d][k]^2 q_k`.
pub fn achieved_moments(q: &SimplexDistribution, model: &ResidualModel) -> Result<Vec<f64>> {
    if q.len() != model.state_count() {
        return Err(Error::DimensionMismatch {
            expected: model.state_count(),
            actual: q.len(),
        });
    }
    Ok((0..model.residual_dim())
        .map(|d| {
            model
                .squared_row(d)
                .iter()
                .zip(q.weights())
                .map(|(sq, w)| sq * w)
                .sum()
        })
        .collect())
}

/// Convex dual of the CME problem: `psi(lambda) = log Z(lambda) + lambda .
/// target`, whose gradient is `target - achieved_moments(lambda)`.
fn dual_value(model: &ResidualModel, lambda: &[f64], target: &[f64]) -> Result<f64> {
    let exponent = penalty_exponent(model, lambda)?;
    let neg: Vec<f64> = exponent.iter().map(|c| -c).collect();
    let dot: f64 = lambda.iter().zip(target).map(|(l, t)| l * t).sum();
    Ok(log_sum_exp(&neg) + dot)
}

struct DualState {
    q: SimplexDistribution,
    log_z: f64,
    moments: Vec<f64>,
}

fn dual_state(model: &ResidualModel, lambda: &[f64]) -> Result<DualState> {
    let exponent = penalty_exponent(model, lambda)?;
    let (q, log_z) = gibbs_with_log_z(&exponent);
    let moments = achieved_moments(&q, model)?;
    Ok(DualState { q, log_z, moments })
}

/// Covariance matrix of the squared residuals under `q`, the Hessian of the
/// dual restricted to `active` dimensions.
fn dual_hessian(model: &ResidualModel, q: &SimplexDistribution, active: &[usize]) -> DMatrix<f64> {
    let moments = achieved_moments(q, model).expect("dimensions checked by caller");
    let a = active.len();
    let mut h = DMatrix::zeros(a, a);
    for (i, &d) in active.iter().enumerate() {
        for (j, &e) in active.iter().enumerate().skip(i) {
            let mut cov = 0.0;
            for (k, &w) in q.weights().iter().enumerate() {
                cov += w * (model.squared_row(d)[k] - moments[d]) * (model.squared_row(e)[k] - moments[e]);
            }
            h[(i, j)] = cov;
            h[(j, i)] = cov;
        }
    }
    h
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Tolerance used to classify a residual dimension as degenerate (squared
/// residuals constant across cells).
const DEGENERATE_SPREAD_TOLERANCE: f64 = 1e-12;

/// Solve the CME problem by minimizing the convex dual: find multipliers so
/// the Gibbs distribution matches the target expected squared residuals.
///
/// Each target must lie strictly inside the attainable interval
/// `(min_k g[d][k]^2, max_k g[d][k]^2)`. A dimension whose squared residuals
/// are constant is vacuous when the target equals that constant (multiplier
/// pinned to zero, with a warning) and infeasible otherwise.
///
/// Newton steps with Armijo backtracking from `lambda = 0`; if the Hessian
/// becomes singular the solver falls back to gradient descent. Non-convergence
/// is an error carrying the last iterate.
pub fn solve_cme(model: &ResidualModel, target_moments: &[f64]) -> Result<CmeSolution> {
    let d_total = model.residual_dim();
    if target_moments.len() != d_total {
        return Err(Error::DimensionMismatch {
            expected: d_total,
            actual: target_moments.len(),
        });
    }
    if target_moments.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidModel("non-finite target moments".into()));
    }

    let mut warnings = Vec::new();
    let mut active = Vec::new();
    for d in 0..d_total {
        let sq = model.squared_row(d);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in sq {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let spread_tol = DEGENERATE_SPREAD_TOLERANCE * hi.abs().max(1.0);
        if hi - lo <= spread_tol {
            if (target_moments[d] - lo).abs() <= spread_tol.max(1e-8 * lo.abs().max(1.0)) {
                warnings.push(format!(
                    "residual dimension {d} is constant; constraint is vacuous and its multiplier is pinned to 0"
                ));
                continue;
            }
            return Err(Error::InfeasibleTarget {
                dim: d,
                target: target_moments[d],
                lo,
                hi,
            });
        }
        if target_moments[d] <= lo || target_moments[d] >= hi {
            return Err(Error::InfeasibleTarget {
                dim: d,
                target: target_moments[d],
                lo,
                hi,
            });
        }
        active.push(d);
    }

    let mut lambda = vec![0.0; d_total];
    let mut iterations = 0usize;

    if active.is_empty() {
        let state = dual_state(model, &lambda)?;
        let dual = dual_value(model, &lambda, target_moments)?;
        return Ok(CmeSolution {
            lambda,
            q_hat: state.q,
            achieved_moments: state.moments,
            dual_value: dual,
            converged: true,
            iterations,
            warnings,
        });
    }

    let gradient = |state: &DualState| -> Vec<f64> {
        active
            .iter()
            .map(|&d| target_moments[d] - state.moments[d])
            .collect()
    };
    let psi = |state: &DualState, lambda: &[f64]| -> f64 {
        let dot: f64 = lambda.iter().zip(target_moments).map(|(l, t)| l * t).sum();
        state.log_z + dot
    };

    let mut state = dual_state(model, &lambda)?;
    let mut grad = gradient(&state);
    let mut use_gradient_descent = false;

    loop {
        if sup_norm(&grad) <= DUAL_GRADIENT_TOLERANCE {
            let dual = psi(&state, &lambda);
            return Ok(CmeSolution {
                lambda,
                q_hat: state.q,
                achieved_moments: state.moments,
                dual_value: dual,
                converged: true,
                iterations,
                warnings,
            });
        }
        let cap = if use_gradient_descent {
            MAX_NEWTON_ITERATIONS + MAX_GRADIENT_ITERATIONS
        } else {
            MAX_NEWTON_ITERATIONS
        };
        if iterations >= cap {
            if !use_gradient_descent {
                use_gradient_descent = true;
                continue;
            }
            return Err(Error::NoConvergence {
                iterations,
                grad_norm: sup_norm(&grad),
                last_lambda: lambda,
            });
        }
        iterations += 1;

        // Descent direction for the dual: -H^{-1} grad(psi), or -grad(psi)
        // when the Hessian is unusable.
        let direction: Vec<f64> = if use_gradient_descent {
            grad.iter().map(|g| -g).collect()
        } else {
            let h = dual_hessian(model, &state.q, &active);
            let g = DVector::from_vec(grad.clone());
            match Cholesky::new(h) {
                Some(chol) => chol.solve(&g).iter().map(|d| -d).collect(),
                None => {
                    use_gradient_descent = true;
                    warnings.push(format!(
                        "dual Hessian singular at iteration {iterations}; falling back to gradient descent"
                    ));
                    grad.iter().map(|g| -g).collect()
                }
            }
        };

        // Directional derivative of psi, negative by construction.
        let slope: f64 = grad.iter().zip(&direction).map(|(g, d)| g * d).sum::<f64>();
        let current = psi(&state, &lambda);
        // Once the predicted decrease drops to the rounding noise of the dual
        // value, sufficient decrease is no longer measurable; the allowance
        // lets the final full Newton step through instead of stalling.
        let noise = 1e-14 * (1.0 + current.abs());
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..80 {
            let trial: Vec<f64> = lambda
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    if let Some(pos) = active.iter().position(|&d| d == i) {
                        l + step * direction[pos]
                    } else {
                        l
                    }
                })
                .collect();
            let trial_state = dual_state(model, &trial)?;
            let trial_value = psi(&trial_state, &trial);
            if trial_value <= current + ARMIJO_SLOPE * step * slope + noise {
                lambda = trial;
                state = trial_state;
                accepted = true;
                break;
            }
            step *= ARMIJO_SHRINK;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations,
                grad_norm: sup_norm(&grad),
                last_lambda: lambda,
            });
        }
        grad = gradient(&state);
    }
}

/// The known-tolerances path: pin `lambda_d = 1 / sigma_d^2` and evaluate the
/// Gibbs distribution directly; `converged` is trivially true.
pub fn cme_from_tolerances(model: &ResidualModel, tol: &ToleranceSpec) -> Result<CmeSolution> {
    if tol.len() != model.residual_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.residual_dim(),
            actual: tol.len(),
        });
    }
    let lambda = tol.multipliers();
    let exponent = penalty_exponent(model, &lambda)?;
    let (q_hat, log_z) = gibbs_with_log_z(&exponent);
    let moments = achieved_moments(&q_hat, model)?;
    let dual = log_z + lambda.iter().zip(&moments).map(|(l, m)| l * m).sum::<f64>();
    Ok(CmeSolution {
        lambda,
        q_hat,
        achieved_moments: moments,
        dual_value: dual,
        converged: true,
        iterations: 0,
        warnings: Vec::new(),
    })
}
