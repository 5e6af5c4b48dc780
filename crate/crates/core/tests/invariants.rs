//! Structural invariants: duality certificates for the CME solver,
//! divergence identities connecting likelihood and relative entropy, and
//! relabeling symmetry of the evidence computations.

use cme_core::cme::{
    achieved_moments, gibbs_from_multipliers, solve_cme, ResidualModel, ToleranceSpec,
};
use cme_core::posterior::{brute_force_log_evidence, saddle_point_log_evidence};
use cme_core::prob::{
    multinomial_log_likelihood, relative_entropy, shannon_entropy, ObservedCounts,
    SimplexDistribution,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> SimplexDistribution {
    let raw: Vec<f64> = (0..k).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    SimplexDistribution::from_unnormalized(raw).unwrap()
}

fn random_model(rng: &mut ChaCha8Rng, d: usize, k: usize) -> ResidualModel {
    let rows = (0..d)
        .map(|_| (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    ResidualModel::new(rows, vec![]).unwrap()
}

/// Targets drawn as the moments of a random interior distribution are always
/// strictly attainable.
fn attainable_targets(rng: &mut ChaCha8Rng, model: &ResidualModel) -> Vec<f64> {
    let q = random_simplex(rng, model.state_count());
    achieved_moments(&q, model).unwrap()
}

#[test]
fn kl_nonnegative_over_many_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..10_000 {
        let k = rng.gen_range(2..8);
        let p = random_simplex(&mut rng, k);
        let q = random_simplex(&mut rng, k);
        let d = relative_entropy(&p, &q).unwrap();
        assert!(d >= 0.0);
    }
}

#[test]
fn kl_zero_iff_equal() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..200 {
        let p = random_simplex(&mut rng, 5);
        assert_eq!(relative_entropy(&p, &p).unwrap(), 0.0);
        let q = random_simplex(&mut rng, 5);
        let max_gap = p
            .weights()
            .iter()
            .zip(q.weights())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if max_gap > 1e-6 {
            assert!(relative_entropy(&p, &q).unwrap() > 0.0);
        }
    }
}

#[test]
fn likelihood_exponent_identity() {
    // n . log q + N H[p] = -N H[p||q] whenever p has full support in q.
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..500 {
        let k = rng.gen_range(2..7);
        let counts: Vec<u64> = (0..k).map(|_| rng.gen_range(1..40u64)).collect();
        let counts = ObservedCounts::new(counts).unwrap();
        let q = random_simplex(&mut rng, k);
        let p = counts.to_data_distribution().unwrap();
        let n = counts.total() as f64;
        let lhs = multinomial_log_likelihood(&counts, &q).unwrap() + n * shannon_entropy(&p);
        let rhs = -n * relative_entropy(&p, &q).unwrap();
        assert!((lhs - rhs).abs() < 1e-9, "identity violated by {}", (lhs - rhs).abs());
    }
}

#[test]
fn likelihood_scales_linearly_in_counts() {
    let counts = ObservedCounts::new(vec![3, 5, 2]).unwrap();
    let scaled = ObservedCounts::new(vec![12, 20, 8]).unwrap();
    let q = SimplexDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
    let base = multinomial_log_likelihood(&counts, &q).unwrap();
    let big = multinomial_log_likelihood(&scaled, &q).unwrap();
    assert!((big - 4.0 * base).abs() < 1e-9);
}

#[test]
fn kkt_stationarity_of_solutions() {
    // log q_k + sum_d lambda_d g~2[d][k] must be constant across cells.
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..25 {
        let d = rng.gen_range(1..4);
        let k = rng.gen_range(3..25);
        let model = random_model(&mut rng, d, k);
        let targets = attainable_targets(&mut rng, &model);
        let solution = solve_cme(&model, &targets).unwrap();
        let values: Vec<f64> = (0..k)
            .map(|j| {
                let mut v = solution.q_hat.get(j).ln();
                for dd in 0..d {
                    v += solution.lambda[dd] * model.squared_row(dd)[j];
                }
                v
            })
            .collect();
        let mean = values.iter().sum::<f64>() / k as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k as f64;
        assert!(var < 1e-16, "stationarity variance {var}");
    }
}

#[test]
fn lagrangian_dominance_certificate() {
    // H[q] - lambda . m(q) <= H[q_hat] - lambda . s^2 for every q.
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for _ in 0..10 {
        let d = rng.gen_range(1..3);
        let k = rng.gen_range(3..15);
        let model = random_model(&mut rng, d, k);
        let targets = attainable_targets(&mut rng, &model);
        let solution = solve_cme(&model, &targets).unwrap();
        let bound = shannon_entropy(&solution.q_hat)
            - solution
                .lambda
                .iter()
                .zip(&targets)
                .map(|(l, t)| l * t)
                .sum::<f64>();
        for _ in 0..1000 {
            let q = random_simplex(&mut rng, k);
            let m = achieved_moments(&q, &model).unwrap();
            let value = shannon_entropy(&q)
                - solution.lambda.iter().zip(&m).map(|(l, mv)| l * mv).sum::<f64>();
            assert!(value <= bound + 1e-9, "dominance violated: {value} > {bound}");
        }
    }
}

#[test]
fn dual_gradient_matches_finite_differences() {
    // Analytic gradient of psi is target - m(lambda); central differences on
    // psi must agree to 1e-6 relative over random models and multipliers.
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let h = 1e-6;
    for _ in 0..100 {
        let d = rng.gen_range(1..4);
        let k = rng.gen_range(3..20);
        let model = random_model(&mut rng, d, k);
        let targets = attainable_targets(&mut rng, &model);
        let lambda: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..2.0)).collect();

        let psi = |lam: &[f64]| -> f64 {
            let q = gibbs_from_multipliers(&model, lam).unwrap();
            // log Z recovered from any cell of the normalized Gibbs form.
            let mut exponent0 = 0.0;
            for dd in 0..d {
                exponent0 += lam[dd] * model.squared_row(dd)[0];
            }
            let log_z = -exponent0 - q.get(0).ln();
            log_z + lam.iter().zip(&targets).map(|(l, t)| l * t).sum::<f64>()
        };

        let q = gibbs_from_multipliers(&model, &lambda).unwrap();
        let moments = achieved_moments(&q, &model).unwrap();
        for dd in 0..d {
            let analytic = targets[dd] - moments[dd];
            let mut up = lambda.clone();
            up[dd] += h;
            let mut down = lambda.clone();
            down[dd] -= h;
            let numeric = (psi(&up) - psi(&down)) / (2.0 * h);
            let scale = analytic.abs().max(1e-3);
            assert!(
                (analytic - numeric).abs() / scale < 1e-6,
                "d={dd}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }
}

#[test]
fn relabeling_invariance_of_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let k = 9;
    let model = random_model(&mut rng, 2, k);
    let targets = attainable_targets(&mut rng, &model);
    let solution = solve_cme(&model, &targets).unwrap();

    let mut perm: Vec<usize> = (0..k).collect();
    perm.shuffle(&mut rng);
    let permuted_rows: Vec<Vec<f64>> = (0..2)
        .map(|d| perm.iter().map(|&j| model.row(d)[j]).collect())
        .collect();
    let permuted = ResidualModel::new(permuted_rows, vec![]).unwrap();
    let permuted_solution = solve_cme(&permuted, &targets).unwrap();
    for (d, l) in solution.lambda.iter().enumerate() {
        assert!((l - permuted_solution.lambda[d]).abs() < 1e-8);
    }
    for (pos, &j) in perm.iter().enumerate() {
        assert!(
            (permuted_solution.q_hat.get(pos) - solution.q_hat.get(j)).abs() < 1e-10,
            "cell {pos} vs source {j}"
        );
    }
}

#[test]
fn evidence_invariant_under_simultaneous_permutation() {
    let counts = ObservedCounts::new(vec![9, 4, 2]).unwrap();
    let model = ResidualModel::new(vec![vec![0.3, -1.0, 1.7]], vec![]).unwrap();
    let tol = ToleranceSpec::new(vec![1.1]).unwrap();

    let perm = [2usize, 0, 1];
    let permuted_counts =
        ObservedCounts::new(perm.iter().map(|&j| counts.counts()[j]).collect()).unwrap();
    let permuted_model =
        ResidualModel::new(vec![perm.iter().map(|&j| model.row(0)[j]).collect()], vec![]).unwrap();

    let bf_a = brute_force_log_evidence(&counts, Some((&model, &tol)), 120).unwrap();
    let bf_b = brute_force_log_evidence(&permuted_counts, Some((&permuted_model, &tol)), 120).unwrap();
    assert!((bf_a.log_evidence - bf_b.log_evidence).abs() < 1e-12);

    let sp_a = saddle_point_log_evidence(&counts, &model, &tol).unwrap();
    let sp_b = saddle_point_log_evidence(&permuted_counts, &permuted_model, &tol).unwrap();
    assert!((sp_a.log_evidence - sp_b.log_evidence).abs() < 1e-12);
}

proptest! {
    #[test]
    fn entropy_bounds_hold(raw in prop::collection::vec(1e-9..1.0f64, 2..12)) {
        let k = raw.len();
        let q = SimplexDistribution::from_unnormalized(raw).unwrap();
        let h = shannon_entropy(&q);
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (k as f64).ln() + 1e-12);
    }

    #[test]
    fn gibbs_is_normalized_for_any_multipliers(
        gs in prop::collection::vec(-3.0..3.0f64, 2..10),
        lambda in -5.0..5.0f64,
    ) {
        let model = ResidualModel::new(vec![gs], vec![]).unwrap();
        let q = gibbs_from_multipliers(&model, &[lambda]).unwrap();
        let sum: f64 = q.weights().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }
}
