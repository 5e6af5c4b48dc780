//! Numerical inference engine unifying Bayesian updating with constrained
//! maximum entropy priors over finite coarse-grained state spaces.
//!
//! Hypotheses are distributions on the `K`-simplex; theoretical information
//! enters through expected-squared-residual constraints that shape an
//! entropy-favoring prior, and observations enter through the multinomial
//! likelihood. Posteriors over hypotheses and over model parameters are
//! evaluated exactly (brute-force simplex quadrature for small `K`) or under
//! the saddle-point approximation valid near statistical equilibrium, with
//! random-walk Metropolis samplers for both levels. Three built-in model
//! families cover mean-energy constraints, approximate-constraint linear
//! regression, and quantal response statistical equilibrium.
//!
//! Data-parallel inner loops (quadrature, batch density evaluation) run on
//! rayon when the `parallel` feature is enabled (the default) and fall back
//! to sequential loops otherwise; results are bit-identical either way.

pub mod cme;
pub mod error;
pub mod ingest;
pub mod models;
pub mod numeric;
pub mod par;
pub mod posterior;
pub mod prob;

pub use error::{Error, Result};
