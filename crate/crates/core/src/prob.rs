//! Finite-state probability primitives: state grids, distributions on the
//! simplex, entropies, divergences, and the multinomial log-likelihood.
//!
//! All entropies are in nats. The convention `0 * log 0 = 0` applies
//! throughout, and support violations return signed-infinity sentinels rather
//! than errors so samplers can reject such states gracefully.

use crate::error::{Error, Result};

/// Absolute tolerance on the weight sum of a valid [`SimplexDistribution`].
pub const SIMPLEX_SUM_TOLERANCE: f64 = 1e-12;

/// Distributions whose weight sum deviates by no more than this are
/// renormalized on construction; larger deviations are rejected.
pub const SIMPLEX_RENORMALIZE_TOLERANCE: f64 = 1e-9;

/// One cell of a coarse-grained state space: a representative point and the
/// cell width along each coordinate (used as quadrature weights).
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub coords: Vec<f64>,
    pub widths: Vec<f64>,
}

/// A finite coarse-grained state space with `K` cells in `R` dimensions.
///
/// Cell ordering is fixed at construction; every `K`-vector elsewhere in the
/// crate indexes against it.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    cells: Vec<GridCell>,
    dim: usize,
}

impl StateGrid {
    pub fn new(cells: Vec<GridCell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidGrid("grid must have at least one cell".into()));
        }
        let dim = cells[0].coords.len();
        if dim == 0 {
            return Err(Error::InvalidGrid("cells must have at least one coordinate".into()));
        }
        for (k, cell) in cells.iter().enumerate() {
            if cell.coords.len() != dim || cell.widths.len() != dim {
                return Err(Error::InvalidGrid(format!(
                    "cell {k} has inconsistent dimensionality"
                )));
            }
            if cell.coords.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidGrid(format!("cell {k} has non-finite coordinates")));
            }
            if cell.widths.iter().any(|w| !w.is_finite() || *w <= 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "cell {k} has non-positive or non-finite widths"
                )));
            }
        }
        Ok(Self { cells, dim })
    }

    /// Equal-width one-dimensional grid of `k` cells over `[lo, hi]`, with
    /// cell midpoints as representatives.
    pub fn regular_1d(lo: f64, hi: f64, k: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidGrid(format!("invalid range [{lo}, {hi}]")));
        }
        if k == 0 {
            return Err(Error::InvalidGrid("cell count must be positive".into()));
        }
        let width = (hi - lo) / k as f64;
        let cells = (0..k)
            .map(|i| GridCell {
                coords: vec![lo + (i as f64 + 0.5) * width],
                widths: vec![width],
            })
            .collect();
        Self::new(cells)
    }

    /// Grid where each row of observed coordinates occupies its own unit
    /// cell, in row order.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cells = rows
            .iter()
            .map(|r| GridCell {
                coords: r.clone(),
                widths: vec![1.0; r.len()],
            })
            .collect();
        Self::new(cells)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// State dimensionality `R`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    pub fn cell(&self, k: usize) -> &GridCell {
        &self.cells[k]
    }

    /// Values of coordinate `axis` across all cells.
    pub fn axis_values(&self, axis: usize) -> Vec<f64> {
        self.cells.iter().map(|c| c.coords[axis]).collect()
    }
}

/// A normalized assignment of frequency weights over the `K` grid cells: a
/// point on the unit simplex. Holds both hypothesis distributions `q` and
/// data distributions `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexDistribution {
    weights: Vec<f64>,
}

impl SimplexDistribution {
    /// Validates non-negativity and normalization. Weight sums within
    /// [`SIMPLEX_RENORMALIZE_TOLERANCE`] of one are renormalized to absorb
    /// round-off; anything further off is rejected.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty weight vector".into()));
        }
        for (k, w) in weights.iter().enumerate() {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "weight {k} is {w}, expected a finite non-negative value"
                )));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_RENORMALIZE_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {sum}, outside the renormalization tolerance"
            )));
        }
        let mut weights = weights;
        if (sum - 1.0).abs() > 0.0 {
            for w in &mut weights {
                *w /= sum;
            }
        }
        Ok(Self { weights })
    }

    /// Normalize an arbitrary non-negative weight vector with positive sum.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "unnormalized weights sum to {sum}"
            )));
        }
        let weights = weights.into_iter().map(|w| w / sum).collect();
        Self::new(weights)
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            weights: vec![1.0 / k as f64; k],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, k: usize) -> f64 {
        self.weights[k]
    }
}

/// The macrostate of `N` exchangeable observations: per-cell counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedCounts {
    counts: Vec<u64>,
    total: u64,
}

impl ObservedCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidDistribution("empty count vector".into()));
        }
        let total = counts.iter().sum();
        Ok(Self { counts, total })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Total number of observations `N`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Relative frequencies `p_k = n_k / N`; requires at least one
    /// observation.
    pub fn to_data_distribution(&self) -> Result<SimplexDistribution> {
        if self.total == 0 {
            return Err(Error::InvalidDistribution(
                "cannot form a data distribution from zero observations".into(),
            ));
        }
        let n = self.total as f64;
        SimplexDistribution::new(self.counts.iter().map(|&c| c as f64 / n).collect())
    }
}

fn check_same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

/// Shannon entropy `H[q] = -sum_k q_k log q_k` in nats; lies in `[0, log K]`.
pub fn shannon_entropy(q: &SimplexDistribution) -> f64 {
    -q.weights()
        .iter()
        .map(|&w| if w > 0.0 { w * w.ln() } else { 0.0 })
        .sum::<f64>()
}

/// Relative entropy (Kullback-Leibler divergence) `H[p||q] = sum_k p_k
/// log(p_k / q_k)`.
///
/// Returns `+inf` when `p` puts mass where `q` has none; otherwise
/// non-negative and zero iff `p = q`.
pub fn relative_entropy(p: &SimplexDistribution, q: &SimplexDistribution) -> Result<f64> {
    check_same_len(p.len(), q.len())?;
    let mut sum = 0.0;
    for (&pk, &qk) in p.weights().iter().zip(q.weights()) {
        if pk > 0.0 {
            if qk <= 0.0 {
                return Ok(f64::INFINITY);
            }
            sum += pk * (pk / qk).ln();
        }
    }
    // Guard against tiny negative round-off so callers can rely on >= 0.
    Ok(sum.max(0.0))
}

/// Multinomial log-likelihood `sum_k n_k log q_k = N (p . log q)`.
///
/// Equals `-N H[p||q]` up to the data-only constant `N sum_k p_k log p_k`.
/// Returns `-inf` when any observed cell has zero hypothesis weight.
pub fn multinomial_log_likelihood(counts: &ObservedCounts, q: &SimplexDistribution) -> Result<f64> {
    check_same_len(counts.len(), q.len())?;
    let mut sum = 0.0;
    for (&nk, &qk) in counts.counts().iter().zip(q.weights()) {
        if nk > 0 {
            if qk <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            sum += nk as f64 * qk.ln();
        }
    }
    Ok(sum)
}

/// Log of the unnormalized entropy-favoring prior density `e^{H[q]}`, taken
/// against the flat measure on the simplex; numerically just `H[q]`.
pub fn entropy_log_prior(q: &SimplexDistribution) -> f64 {
    shannon_entropy(q)
}
