//! Evidence (marginal likelihood) over the hypothesis simplex: a brute-force
//! midpoint quadrature oracle for small `K`, and the saddle-point
//! approximation that replaces the integral by its value at the CME
//! distribution.

use crate::cme::{self, ResidualModel, ToleranceSpec};
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use crate::par;
use crate::prob::{relative_entropy, ObservedCounts, SimplexDistribution};

/// Largest state count accepted by the brute-force quadrature.
pub const MAX_BRUTE_FORCE_STATES: usize = 4;

/// Smallest accepted lattice resolution (points per free dimension).
pub const MIN_LATTICE_RESOLUTION: usize = 50;

/// How a log evidence value was computed.
#[derive(Debug, Clone, PartialEq)]
pub enum EvidenceMethod {
    BruteForce { resolution: usize, nodes: usize },
    /// Saddle-point value `-N H[p||q_hat]`. The `q`-independent Gaussian
    /// curvature prefactor of the full Laplace expansion is dropped, so the
    /// value is comparable to the brute-force integral only up to an additive
    /// constant that vanishes per observation as `N` grows.
    SaddlePoint,
}

/// A log evidence value with the approximation metadata needed to interpret
/// it.
#[derive(Debug, Clone)]
pub struct EvidenceReport {
    pub log_evidence: f64,
    pub method: EvidenceMethod,
    /// The CME distribution the saddle point evaluates at.
    pub equilibrium: Option<SimplexDistribution>,
    /// `H[p||q_hat]` when data is present.
    pub divergence: Option<f64>,
}

/// Midpoint lattice over the `K`-simplex: nodes are the shifted barycentric
/// points `q_c = (i_c + 1/2) / (M + K/2)` over all compositions
/// `i_1 + ... + i_K = M` with `M = resolution - 1`, each carrying equal flat
/// measure `1/(K-1)! / nodes`. All nodes are strictly interior.
#[derive(Debug, Clone)]
pub struct SimplexLattice {
    k: usize,
    coords: Vec<f64>,
    log_node_weight: f64,
}

impl SimplexLattice {
    pub fn node_count(&self) -> usize {
        self.coords.len() / self.k
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.k..(i + 1) * self.k]
    }

    /// Log of the flat-measure weight carried by each node.
    pub fn log_node_weight(&self) -> f64 {
        self.log_node_weight
    }
}

/// Build the quadrature lattice for `k <= 4` states.
pub fn simplex_lattice(k: usize, resolution: usize) -> Result<SimplexLattice> {
    if !(2..=MAX_BRUTE_FORCE_STATES).contains(&k) {
        return Err(Error::Unsupported(format!(
            "brute-force quadrature supports 2..={MAX_BRUTE_FORCE_STATES} states, got {k}"
        )));
    }
    if resolution < MIN_LATTICE_RESOLUTION {
        return Err(Error::InvalidConfig(format!(
            "lattice resolution {resolution} is below the minimum {MIN_LATTICE_RESOLUTION}"
        )));
    }
    let m = resolution - 1;
    let denom = m as f64 + k as f64 / 2.0;
    let mut coords = Vec::new();
    match k {
        2 => {
            for i in 0..=m {
                coords.push((i as f64 + 0.5) / denom);
                coords.push(((m - i) as f64 + 0.5) / denom);
            }
        }
        3 => {
            for i in 0..=m {
                for j in 0..=(m - i) {
                    coords.push((i as f64 + 0.5) / denom);
                    coords.push((j as f64 + 0.5) / denom);
                    coords.push(((m - i - j) as f64 + 0.5) / denom);
                }
            }
        }
        4 => {
            for i in 0..=m {
                for j in 0..=(m - i) {
                    for l in 0..=(m - i - j) {
                        coords.push((i as f64 + 0.5) / denom);
                        coords.push((j as f64 + 0.5) / denom);
                        coords.push((l as f64 + 0.5) / denom);
                        coords.push(((m - i - j - l) as f64 + 0.5) / denom);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    let nodes = coords.len() / k;
    let log_volume = -(1..k).map(|i| (i as f64).ln()).sum::<f64>();
    Ok(SimplexLattice {
        k,
        coords,
        log_node_weight: log_volume - (nodes as f64).ln(),
    })
}

/// Brute-force log evidence with an explicit per-cell log-weight vector
/// `phi`, integrating `exp(H[q] + phi . q - N H[p||q])` over the flat simplex
/// measure. `phi = None` means no constraint term.
pub fn brute_force_log_evidence_weighted(
    counts: &ObservedCounts,
    phi: Option<&[f64]>,
    resolution: usize,
) -> Result<EvidenceReport> {
    let k = counts.len();
    if let Some(phi) = phi {
        if phi.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: phi.len(),
            });
        }
    }
    let lattice = simplex_lattice(k, resolution)?;
    let n = counts.total() as f64;
    let counts_f: Vec<f64> = counts.counts().iter().map(|&c| c as f64).collect();
    // -N sum p log p, the data-only part of -N H[p||q].
    let data_entropy_term: f64 = if counts.total() > 0 {
        let logn = n.ln();
        -counts_f
            .iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| c * ((c).ln() - logn))
            .sum::<f64>()
    } else {
        0.0
    };

    let values = par::map_collect(lattice.node_count(), |i| {
        let q = lattice.node(i);
        let mut v = 0.0;
        for (j, &qj) in q.iter().enumerate() {
            let lq = qj.ln();
            v -= qj * lq; // H[q]; nodes are strictly interior so q > 0
            if let Some(phi) = phi {
                v += phi[j] * qj;
            }
            if counts_f[j] > 0.0 {
                v += counts_f[j] * lq; // N p . log q
            }
        }
        v + data_entropy_term
    });
    let log_evidence = log_sum_exp(&values) + lattice.log_node_weight();
    Ok(EvidenceReport {
        log_evidence,
        method: EvidenceMethod::BruteForce {
            resolution,
            nodes: lattice.node_count(),
        },
        equilibrium: None,
        divergence: None,
    })
}

/// Brute-force log evidence for an optional squared-residual constraint: the
/// quadrature oracle against which the saddle point is validated.
pub fn brute_force_log_evidence(
    counts: &ObservedCounts,
    constraint: Option<(&ResidualModel, &ToleranceSpec)>,
    resolution: usize,
) -> Result<EvidenceReport> {
    let phi = match constraint {
        Some((model, tol)) => {
            if model.state_count() != counts.len() {
                return Err(Error::DimensionMismatch {
                    expected: counts.len(),
                    actual: model.state_count(),
                });
            }
            let penalty = cme::penalty_exponent(model, &tol.multipliers())?;
            Some(penalty.iter().map(|c| -c).collect::<Vec<f64>>())
        }
        None => None,
    };
    brute_force_log_evidence_weighted(counts, phi.as_deref(), resolution)
}

/// Saddle-point log evidence `-N H[p||q_hat]` at the CME distribution for
/// the given tolerances (the peaked-prior approximation of the simplex
/// integral, with the constant curvature prefactor dropped).
pub fn saddle_point_log_evidence(
    counts: &ObservedCounts,
    model: &ResidualModel,
    tol: &ToleranceSpec,
) -> Result<EvidenceReport> {
    if model.state_count() != counts.len() {
        return Err(Error::DimensionMismatch {
            expected: counts.len(),
            actual: model.state_count(),
        });
    }
    let q_hat = cme::gibbs_from_multipliers(model, &tol.multipliers())?;
    if counts.total() == 0 {
        return Ok(EvidenceReport {
            log_evidence: 0.0,
            method: EvidenceMethod::SaddlePoint,
            equilibrium: Some(q_hat),
            divergence: None,
        });
    }
    let p = counts.to_data_distribution()?;
    let divergence = relative_entropy(&p, &q_hat)?;
    Ok(EvidenceReport {
        log_evidence: -(counts.total() as f64) * divergence,
        method: EvidenceMethod::SaddlePoint,
        equilibrium: Some(q_hat),
        divergence: Some(divergence),
    })
}
