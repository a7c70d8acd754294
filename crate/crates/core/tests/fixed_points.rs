//! Cross-module checks: solver roots are BP fixed points and the other way
//! round, trees are exact, Jacobians match finite differences.

use bpfix::analysis::{bethe_free_energy, bp_jacobian, bp_jacobian_fd, evaluate_fixed_points, stability, StabilityClass};
use bpfix::bp::{beliefs, bp_step, pairwise_beliefs, run_bp, BpInit, BpOptions, BpStatus};
use bpfix::codes::{build_hamming, codeword_posterior, flipped_word};
use bpfix::exact::{enumerate_exact, enumerate_exact_factor};
use bpfix::homotopy::{SolveOptions, Solver};
use bpfix::model::{uniform_grid, PairwiseModel};
use bpfix::polysys::{build_bp_system, max_residual, messages_to_point, point_to_messages};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tree(n: usize, seed: u64) -> PairwiseModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<_> = (1..n).map(|i| (rng.gen_range(0..i), i, rng.gen_range(-1.5..1.5))).collect();
    let fields: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    PairwiseModel::new(n, &edges, &fields).unwrap()
}

fn loopy_models() -> Vec<PairwiseModel> {
    vec![
        PairwiseModel::new(3, &[(0, 1, 1.3), (1, 2, 1.3), (0, 2, 1.3)], &[0.05; 3]).unwrap(),
        PairwiseModel::new(4, &[(0, 1, -0.8), (0, 2, 0.6), (0, 3, 1.1), (1, 2, -0.4), (1, 3, 0.9)], &[0.3, -0.2, 0.1, 0.4]).unwrap(),
        uniform_grid(2, 2, 1.5, 0.1).unwrap(),
        uniform_grid(2, 3, -0.9, 0.6).unwrap(),
    ]
}

/// Brute-force P(X_i = +1), written independently of the library's enumerator.
fn brute_marginals(m: &PairwiseModel) -> Vec<f64> {
    let n = m.node_count();
    let mut plus = vec![0.0; n];
    let mut z = 0.0;
    for bits in 0..1u32 << n {
        let s: Vec<f64> = (0..n).map(|i| if bits >> i & 1 == 0 { 1.0 } else { -1.0 }).collect();
        let mut e = 0.0;
        for (k, &(a, b)) in m.edges().iter().enumerate() {
            e += m.coupling(k) * s[a] * s[b];
        }
        for i in 0..n {
            e += m.field(i) * s[i];
        }
        let w = e.exp();
        z += w;
        for i in 0..n {
            if s[i] > 0.0 {
                plus[i] += w;
            }
        }
    }
    plus.iter().map(|p| p / z).collect()
}

#[test]
fn enumeration_matches_brute_force() {
    for m in loopy_models() {
        let ex = enumerate_exact(&m).unwrap();
        for (a, b) in ex.marginals.iter().zip(brute_marginals(&m)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn positive_roots_are_bp_fixed_points() {
    let solver = Solver::default();
    for m in loopy_models() {
        let sys = build_bp_system(&m);
        let sols = solver.solve(&sys, 1, &SolveOptions::default()).unwrap();
        // the positive solution set is never empty
        assert!(!sols.positive_real.is_empty());
        for s in sols.positive() {
            let msgs = point_to_messages(&m, &s.point).unwrap();
            let next = bp_step(&m, &msgs).unwrap();
            assert!(next.distance(&msgs) < 1e-8, "moved by {}", next.distance(&msgs));
        }
    }
}

#[test]
fn converged_bp_solves_the_system() {
    for m in loopy_models() {
        let sys = build_bp_system(&m);
        for seed in 0..5 {
            let opts = BpOptions { init: BpInit::Random(seed), damping: 0.3, ..Default::default() };
            let run = run_bp(&m, &opts).unwrap();
            if run.status == BpStatus::Converged {
                let x = messages_to_point(&run.final_messages);
                assert!(max_residual(&sys, &x).unwrap() < 1e-8);
            }
        }
    }
}

#[test]
fn bp_limits_are_stable_or_marginal() {
    let m = uniform_grid(2, 3, 1.4, 0.05).unwrap();
    let sols = Solver::default().solve(&build_bp_system(&m), 2, &SolveOptions::default()).unwrap();
    let reports = evaluate_fixed_points(&m, &sols).unwrap();
    for seed in 0..30 {
        let run = run_bp(&m, &BpOptions { init: BpInit::Random(seed), ..Default::default() }).unwrap();
        if run.status != BpStatus::Converged {
            continue;
        }
        let near = reports.iter().find(|r| r.messages.distance(&run.final_messages) < 1e-6).expect("BP limit is a root");
        assert!(near.stable || near.stability == StabilityClass::Marginal);
    }
}

#[test]
fn trees_are_exact() {
    let solver = Solver::default();
    for seed in 0..10 {
        let m = random_tree(3 + (seed as usize % 5), seed);
        let exact = enumerate_exact(&m).unwrap();
        let run = run_bp(&m, &BpOptions::default()).unwrap();
        assert_eq!(run.status, BpStatus::Converged);
        let bp_b = beliefs(&m, &run.final_messages).unwrap();
        let sols = solver.solve(&build_bp_system(&m), seed, &SolveOptions::default()).unwrap();
        assert_eq!(sols.positive_real.len(), 1);
        let fp = point_to_messages(&m, &sols.positive().next().unwrap().point).unwrap();
        let fp_b = beliefs(&m, &fp).unwrap();
        for i in 0..m.node_count() {
            assert!((bp_b[i] - exact.marginals[i]).abs() < 1e-6);
            assert!((fp_b[i] - exact.marginals[i]).abs() < 1e-6);
            assert!((fp_b[i] - bp_b[i]).abs() < 1e-6);
        }
        let pw = pairwise_beliefs(&m, &fp).unwrap();
        let log_z = -bethe_free_energy(&m, &fp_b, &pw).unwrap();
        assert!((log_z - exact.log_partition).abs() <= 1e-8 * exact.log_partition.abs().max(1.0));
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let solver = Solver::default();
    let mut checked = 0;
    for m in loopy_models() {
        let sols = solver.solve(&build_bp_system(&m), 3, &SolveOptions::default()).unwrap();
        for s in sols.positive() {
            let msgs = point_to_messages(&m, &s.point).unwrap();
            let a = bp_jacobian(&m, &msgs.mu);
            let f = bp_jacobian_fd(&m, &msgs.mu, 1e-6);
            assert!((a - f).amax() < 1e-5);
            checked += 1;
        }
    }
    assert!(checked >= 4);
}

#[test]
fn stability_of_ferromagnetic_k4() {
    // strong coupling, small field: the near-symmetric point is unstable and
    // the two polarized points are stable
    let m = bpfix::model::build_complete(4, 1.0, 0.05).unwrap();
    let sols = Solver::default().solve(&build_bp_system(&m), 1, &SolveOptions::default()).unwrap();
    let reports = evaluate_fixed_points(&m, &sols).unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports.iter().filter(|r| r.stable).count(), 2);
    for r in &reports {
        let st = stability(&m, &r.messages).unwrap();
        assert_eq!(st.stable(), r.stable);
    }
}

#[test]
fn codeword_posterior_matches_factor_enumeration() {
    for flip in 1..=7 {
        for eps in [0.03, 0.11, 0.27, 0.45] {
            let code = build_hamming(flipped_word(flip).unwrap(), eps).unwrap();
            let ex = enumerate_exact_factor(&code.graph).unwrap();
            for bit in 0..7 {
                let p = codeword_posterior(code.received, eps, bit).unwrap();
                assert!((ex.marginals[bit][0] - p).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bp_step_keeps_messages_normalized(seed in 0u64..1000, j in -2.0f64..2.0, theta in -2.0f64..2.0) {
        let m = uniform_grid(2, 3, j, theta).unwrap();
        let start = bpfix::bp::MessageSet::random(&m, seed);
        let next = bp_step(&m, &start).unwrap();
        for p in &next.mu {
            prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
            prop_assert!(p[0] > 0.0 && p[1] > 0.0);
        }
    }

    #[test]
    fn flipping_fields_mirrors_marginals(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges: Vec<_> = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)].iter().map(|&(a, b)| (a, b, rng.gen_range(-2.0..2.0))).collect();
        let fields: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let neg: Vec<f64> = fields.iter().map(|t| -t).collect();
        let a = enumerate_exact(&PairwiseModel::new(4, &edges, &fields).unwrap()).unwrap();
        let b = enumerate_exact(&PairwiseModel::new(4, &edges, &neg).unwrap()).unwrap();
        for (p, q) in a.marginals.iter().zip(&b.marginals) {
            prop_assert!((p + q - 1.0).abs() < 1e-12);
        }
        prop_assert!((a.log_partition - b.log_partition).abs() < 1e-10);
    }

    #[test]
    fn tree_bp_beliefs_are_exact(seed in 0u64..10_000, n in 2usize..9) {
        let m = random_tree(n, seed);
        let run = run_bp(&m, &BpOptions::default()).unwrap();
        prop_assert_eq!(run.status, BpStatus::Converged);
        let b = beliefs(&m, &run.final_messages).unwrap();
        for (x, y) in b.iter().zip(brute_marginals(&m)) {
            prop_assert!((x - y).abs() < 1e-8);
        }
    }
}
