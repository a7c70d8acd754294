//! End-to-end solves checked against elimination oracles written here from
//! scratch (resultants, companion matrices) rather than through the solver.

use bpfix::homotopy::{bkk_bound, bkk_bound_with, count_real, solve_all, CellRegistry, SolveOptions, SolutionSet};
use bpfix::model::PairwiseModel;
use bpfix::polysys::{build_bp_system, max_residual, PolynomialSystem, Term};
use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn term(c: f64, exps: &[u32]) -> Term {
    Term { coeff: C::new(c, 0.0), exps: exps.to_vec() }
}

fn system(n: usize, eqs: Vec<Vec<Term>>) -> PolynomialSystem {
    PolynomialSystem::new((1..=n).map(|i| format!("x{i}")).collect(), eqs).unwrap()
}

/// Real polynomial in ascending powers.
type Poly = Vec<f64>;

fn pmul(a: &Poly, b: &Poly) -> Poly {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn padd(a: &Poly, b: &Poly, s: f64) -> Poly {
    (0..a.len().max(b.len())).map(|i| a.get(i).copied().unwrap_or(0.0) + s * b.get(i).copied().unwrap_or(0.0)).collect()
}

fn peval(p: &Poly, x: C) -> C {
    p.iter().rev().fold(C::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Roots as eigenvalues of the companion matrix.
fn roots(p: &Poly) -> Vec<C> {
    let mut p = p.clone();
    while p.last().is_some_and(|c| c.abs() < 1e-14) {
        p.pop();
    }
    let d = p.len() - 1;
    let lead = p[d];
    let mut m = DMatrix::<f64>::zeros(d, d);
    for i in 1..d {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..d {
        m[(i, d - 1)] = -p[i] / lead;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Every oracle point is within `tol` of some solution and the counts agree.
fn assert_same_points(found: &[Vec<C>], oracle: &[Vec<C>], tol: f64) {
    assert_eq!(found.len(), oracle.len(), "found {found:?}\noracle {oracle:?}");
    for o in oracle {
        let best = found
            .iter()
            .map(|f| f.iter().zip(o).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        assert!(best < tol, "oracle point {o:?} missed by {best}");
    }
}

fn points(s: &SolutionSet) -> Vec<Vec<C>> {
    s.distinct_complex.iter().map(|x| x.point.clone()).collect()
}

#[test]
fn worked_example_with_unit_coefficients() {
    // 1 + x1 + x1^2 x2^2 = 0, 1 + x1 + x2 + x1 x2^2 = 0
    let sys = system(
        2,
        vec![
            vec![term(1.0, &[0, 0]), term(1.0, &[1, 0]), term(1.0, &[2, 2])],
            vec![term(1.0, &[0, 0]), term(1.0, &[1, 0]), term(1.0, &[0, 1]), term(1.0, &[1, 2])],
        ],
    );
    assert_eq!(bkk_bound(&sys, 3).unwrap().0, 4);
    let sols = solve_all(&sys, 3, &SolveOptions::default()).unwrap();

    // second equation gives x1 = -(1 + x2) / (1 + x2^2); clear denominators in the first
    let num: Poly = vec![-1.0, -1.0];
    let den: Poly = vec![1.0, 0.0, 1.0];
    let x2sq: Poly = vec![0.0, 0.0, 1.0];
    let quartic = padd(&padd(&pmul(&den, &den), &pmul(&num, &den), 1.0), &pmul(&pmul(&num, &num), &x2sq), 1.0);
    let oracle: Vec<Vec<C>> = roots(&quartic).into_iter().map(|y| vec![-(y + 1.0) / (y * y + 1.0), y]).collect();
    assert_same_points(&points(&sols), &oracle, 1e-8);
    for s in &sols.distinct_complex {
        assert!(max_residual(&sys, &s.point).unwrap() < 1e-8);
    }
}

/// Coefficients of a quadratic in (x, y) grouped by powers of y.
fn y_coefficients(c: &[f64; 6]) -> [Poly; 3] {
    // c: 1, x, y, x^2, xy, y^2
    [vec![c[0], c[1], c[3]], vec![c[2], c[4]], vec![c[5]]]
}

#[test]
fn dense_quadratics_match_elimination() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let exps = [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]];
    for trial in 0..4 {
        let f: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        let g: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        let eq = |c: &[f64; 6]| exps.iter().zip(c).map(|(e, &v)| term(v, e)).collect();
        let sys = system(2, vec![eq(&f), eq(&g)]);
        let sols = solve_all(&sys, trial, &SolveOptions::default()).unwrap();

        // Sylvester resultant in y of two quadratics
        let [a0, a1, a2] = y_coefficients(&f);
        let [b0, b1, b2] = y_coefficients(&g);
        let p = padd(&pmul(&a2, &b0), &pmul(&a0, &b2), -1.0);
        let q = padd(&pmul(&a2, &b1), &pmul(&a1, &b2), -1.0);
        let r = padd(&pmul(&a1, &b0), &pmul(&a0, &b1), -1.0);
        let res = padd(&pmul(&p, &p), &pmul(&q, &r), -1.0);
        let oracle: Vec<Vec<C>> = roots(&res)
            .into_iter()
            .map(|x| {
                // y from the linear combination b2 f - a2 g
                let y = -peval(&p, x) / peval(&q, x);
                vec![x, y]
            })
            .collect();
        assert_eq!(oracle.len(), 4);
        assert_same_points(&points(&sols), &oracle, 1e-6);
    }
}

#[test]
fn real_counts_of_squares() {
    let minus = system(1, vec![vec![term(1.0, &[2]), term(-1.0, &[0])]]);
    let plus = system(1, vec![vec![term(1.0, &[2]), term(1.0, &[0])]]);
    let opts = SolveOptions::default();
    let m = solve_all(&minus, 1, &opts).unwrap();
    let p = solve_all(&plus, 1, &opts).unwrap();
    assert_eq!(count_real(&m), 2);
    assert_eq!(m.positive_real.len(), 1);
    assert_eq!(count_real(&p), 0);
    assert_eq!(p.distinct_complex.len(), 2);
}

#[test]
fn univariate_bound_is_degree() {
    let sys = system(1, vec![(0..=5).map(|k| term(1.0 + k as f64, &[k])).collect()]);
    assert_eq!(bkk_bound(&sys, 1).unwrap().0, 5);
}

fn triangle(j: f64, theta: f64) -> PairwiseModel {
    PairwiseModel::new(3, &[(0, 1, j), (1, 2, j), (0, 2, j)], &[theta; 3]).unwrap()
}

fn k4_minus_edge(j: f64, theta: f64) -> PairwiseModel {
    let edges = [(0, 1, j), (0, 2, j), (0, 3, j), (1, 2, j), (1, 3, j)];
    PairwiseModel::new(4, &edges, &[theta, -0.3 * theta, theta, 0.5 * theta]).unwrap()
}

#[test]
fn seed_invariance() {
    let sys = build_bp_system(&triangle(0.8, 0.3));
    let runs: Vec<SolutionSet> = [1, 2, 3].iter().map(|&s| solve_all(&sys, s, &SolveOptions::default()).unwrap()).collect();
    for r in &runs {
        assert_eq!(r.bkk, runs[0].bkk);
        assert_eq!(r.distinct_complex.len(), runs[0].distinct_complex.len());
        assert_same_points(&points(r), &points(&runs[0]), 1e-6);
    }
    let bounds: Vec<u64> = [5, 6, 7].iter().map(|&s| bkk_bound(&sys, s).unwrap().0).collect();
    assert!(bounds.iter().all(|&b| b == bounds[0]));
}

fn positive_points(s: &SolutionSet) -> Vec<Vec<C>> {
    s.positive().map(|x| x.point.clone()).collect()
}

#[test]
fn reduced_and_full_systems_agree() {
    for model in [triangle(1.2, 0.1), triangle(-0.7, 0.4), k4_minus_edge(0.9, 0.2)] {
        let sys = build_bp_system(&model);
        let reduced = solve_all(&sys, 4, &SolveOptions::default()).unwrap();
        let full = solve_all(&sys, 4, &SolveOptions { reduce: false, ..Default::default() }).unwrap();
        assert_same_points(&positive_points(&reduced), &positive_points(&full), 1e-6);
        assert!(!reduced.positive_real.is_empty());
    }
}

#[test]
fn cell_strategies_agree_on_bp_bound() {
    let registry = CellRegistry::with_defaults();
    let sys = build_bp_system(&triangle(0.5, 0.5));
    let (z, _) = bkk_bound_with(&sys, 2, &registry, "zonotope").unwrap();
    let (l, _) = bkk_bound_with(&sys, 2, &registry, "lifting-dfs").unwrap();
    assert_eq!(z, l);
}

#[test]
fn solution_count_never_exceeds_bound() {
    for model in [triangle(2.0, 0.0), k4_minus_edge(-1.5, 0.7)] {
        let s = solve_all(&build_bp_system(&model), 9, &SolveOptions::default()).unwrap();
        assert!(s.distinct_complex.len() as u64 <= s.bkk);
        for x in &s.distinct_complex {
            assert!(x.residual < 1e-8);
        }
    }
}
