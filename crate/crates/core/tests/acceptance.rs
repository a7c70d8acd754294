//! Acceptance run: one PASS/FAIL line per criterion with the measured values.
//!
//! Runs without the libtest harness so the lines always reach the output.
//! Exits non-zero when a criterion fails that is not listed in
//! `KNOWN_UNATTAINABLE`.

use std::time::Instant;

use bpfix::analysis::{bethe_free_energy, bp_jacobian, bp_jacobian_fd, classify_region, evaluate_fixed_points, PhaseRegion};
use bpfix::bp::{beliefs, bp_step, pairwise_beliefs, run_bp, BpInit, BpOptions, BpStatus};
use bpfix::codes::{decode_threshold, default_eps_grid, DecodeMethod};
use bpfix::exact::{enumerate_exact, mse};
use bpfix::experiments::{random_grid_trial, summarize, sweep, Axis, ModelKind, SweepSpec};
use bpfix::homotopy::{bkk_bound, SolveOptions, Solver};
use bpfix::model::{build_complete, uniform_grid, PairwiseModel};
use bpfix::polysys::{build_bp_system, max_residual, messages_to_point, point_to_messages, PolynomialSystem, Term};
use bpfix::Result;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 1;

/// Criteria this implementation does not meet; see the README.
const KNOWN_UNATTAINABLE: &[&str] = &["bkk_tightness"];

// pinned tolerances
const ROUND_TRIP_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-8;
const ORDER_SLACK: f64 = 1e-6;
const TREE_TOL: f64 = 1e-6;
const TREE_LOGZ_REL: f64 = 1e-8;
const JACOBIAN_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn worked_example() -> PolynomialSystem {
    let t = |exps: &[u32]| Term { coeff: Complex64::new(1.0, 0.0), exps: exps.to_vec() };
    PolynomialSystem::new(
        vec!["x1".into(), "x2".into()],
        vec![vec![t(&[0, 0]), t(&[1, 0]), t(&[2, 2])], vec![t(&[0, 0]), t(&[1, 0]), t(&[0, 1]), t(&[1, 2])]],
    )
    .unwrap()
}

fn bkk_bounds() -> Result<Outcome> {
    let mut slowest = 0.0f64;
    let mut timed = |sys: &PolynomialSystem| -> Result<u64> {
        let t = Instant::now();
        let b = bkk_bound(sys, SEED)?.0;
        slowest = slowest.max(t.elapsed().as_secs_f64());
        Ok(b)
    };
    let grid = timed(&build_bp_system(&uniform_grid(3, 3, 1.0, 0.5)?))?;
    let k4 = timed(&build_bp_system(&build_complete(4, 1.0, 0.5)?))?;
    let eq = timed(&worked_example())?;
    outcome(
        grid == 608 && k4 == 120 && eq == 4 && slowest < 300.0,
        format!("grid 3x3 {grid} (608), K4 {k4} (120), worked example {eq} (4); slowest {slowest:.2} s"),
    )
}

fn bkk_tightness(solver: &Solver) -> Result<Outcome> {
    let mut pass = true;
    let mut parts = vec![];
    for (name, m) in [("grid 3x3", uniform_grid(3, 3, 1.0, 0.5)?), ("K4", build_complete(4, 1.0, 0.5)?)] {
        let opts = SolveOptions { max_unresolved: 1.0, ..Default::default() };
        let s = solver.solve(&build_bp_system(&m), SEED, &opts)?;
        let worst = s.distinct_complex.iter().map(|x| x.residual).fold(0.0, f64::max);
        let ok = s.distinct_complex.len() as u64 == s.bkk && s.success_fraction() >= 0.95 && worst < RESIDUAL_TOL;
        pass &= ok;
        parts.push(format!(
            "{name}: {} distinct of BKK {}, path success {:.1}%, singular endpoints {}, max residual {worst:.1e}",
            s.distinct_complex.len(),
            s.bkk,
            100.0 * s.success_fraction(),
            s.diagnostics.singular_endpoints
        ));
    }
    outcome(pass, parts.join("; "))
}

fn region_counts(solver: &Solver, models: &mut Vec<PairwiseModel>) -> Result<Outcome> {
    let points = [
        (PhaseRegion::III, 0.2, 0.5, 1),
        (PhaseRegion::III, -0.3, 1.0, 1),
        (PhaseRegion::III, 0.5, -1.5, 1),
        (PhaseRegion::I, 1.0, 0.05, 3),
        (PhaseRegion::I, 1.5, 0.1, 3),
        (PhaseRegion::I, 2.0, -0.2, 3),
        (PhaseRegion::II, -1.0, 0.05, 3),
        (PhaseRegion::II, -1.5, -0.1, 3),
        (PhaseRegion::II, -2.0, 0.2, 3),
    ];
    let mut pass = true;
    let mut parts = vec![];
    for (region, j, theta, want) in points {
        let m = uniform_grid(3, 3, j, theta)?;
        let label = classify_region(j, theta, m.default_branching());
        let got = solver.solve(&build_bp_system(&m), SEED, &SolveOptions::default())?.positive_real.len();
        pass &= got == want && label == region;
        parts.push(format!("({j},{theta}) {} {got}/{want}", label.name()));
        models.push(m);
    }
    let k4 = build_complete(4, -2.0, 0.0)?;
    let label = classify_region(-2.0, 0.0, 2);
    let got = solver.solve(&build_bp_system(&k4), SEED, &SolveOptions::default())?.positive_real.len();
    pass &= got == 1 && label == PhaseRegion::II;
    parts.push(format!("K4 (-2,0) {} {got}/1", label.name()));
    models.push(k4);
    outcome(pass, parts.join(", "))
}

fn round_trip(solver: &Solver, models: &[PairwiseModel]) -> Result<Outcome> {
    let (mut roots, mut roots_ok, mut runs, mut runs_ok) = (0, 0, 0, 0);
    let mut worst_step = 0.0f64;
    let mut worst_res = 0.0f64;
    for m in models {
        let sys = build_bp_system(m);
        let sols = solver.solve(&sys, SEED, &SolveOptions::default())?;
        for s in sols.positive() {
            let msgs = point_to_messages(m, &s.point)?;
            let d = bp_step(m, &msgs)?.distance(&msgs);
            worst_step = worst_step.max(d);
            roots += 1;
            roots_ok += usize::from(d < ROUND_TRIP_TOL);
        }
        let inits = [BpInit::Uniform, BpInit::Random(SEED), BpInit::Random(SEED + 1), BpInit::Random(SEED + 2)];
        for init in inits {
            let run = run_bp(m, &BpOptions { init, ..Default::default() })?;
            if run.status == BpStatus::Converged {
                let r = max_residual(&sys, &messages_to_point(&run.final_messages))?;
                worst_res = worst_res.max(r);
                runs += 1;
                runs_ok += usize::from(r < RESIDUAL_TOL);
            }
        }
    }
    outcome(
        roots > 0 && roots_ok == roots && runs_ok == runs,
        format!(
            "{roots_ok}/{roots} positive roots fixed under bp_step (worst {worst_step:.1e}); \
             {runs_ok}/{runs} converged runs solve the system (worst {worst_res:.1e}); {} models",
            models.len()
        ),
    )
}

fn unique_nonconvergent(solver: &Solver) -> Result<Outcome> {
    let m = build_complete(4, -2.0, 0.0)?;
    // uniform messages are exactly the symmetric fixed point at zero field
    let run = run_bp(&m, &BpOptions { init: BpInit::Random(SEED), max_iters: 10_000, ..Default::default() })?;
    let exact = enumerate_exact(&m)?;
    let bp_mse = mse(&exact.marginals, &beliefs(&m, &run.final_messages)?)?;
    let sols = solver.solve(&build_bp_system(&m), SEED, &SolveOptions::default())?;
    let reports = evaluate_fixed_points(&m, &sols)?;
    let nonconv = run.status != BpStatus::Converged;
    let (unstable, fp_mse) = match reports.as_slice() {
        [r] => (!r.stable, r.mse_vs_exact),
        _ => (false, f64::NAN),
    };
    outcome(
        nonconv && reports.len() == 1 && unstable && fp_mse < 0.01 && bp_mse > 0.1,
        format!(
            "BP {} after {} iterations, BP MSE {bp_mse:.3}; {} positive fixed point(s), unstable {unstable}, \
             spectral radius {:.3}, MSE {fp_mse:.2e}",
            run.status.name(),
            run.iterations,
            reports.len(),
            reports.first().map_or(f64::NAN, |r| r.spectral_radius)
        ),
    )
}

fn table_ordering(solver: &Solver) -> Result<Outcome> {
    let t = Instant::now();
    let axis = Axis { lo: -2.0, hi: 2.0, count: 9, offset: true };
    let spec = SweepSpec {
        kind: ModelKind::Grid { rows: 3, cols: 3 },
        j: axis,
        theta: axis,
        seed: SEED,
        solve: SolveOptions::default(),
        bp: BpOptions::default(),
        branching: None,
    };
    let rows: Vec<_> = sweep(&spec, solver)?.into_iter().map(|p| p.row).collect();
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let minutes = t.elapsed().as_secs_f64() / 60.0;
    let Some(s) = summarize(&rows) else { return outcome(false, "no usable sweep rows".into()) };
    outcome(
        s.stable <= s.all + ORDER_SLACK && s.all <= s.max + ORDER_SLACK && s.min <= s.bp + ORDER_SLACK && failed == 0 && minutes < 30.0,
        format!(
            "{} points: STABLE {:.4} ALL {:.4} MAX {:.4} MIN {:.4} BP {:.4}; {failed} failed solves; {minutes:.1} min",
            s.rows, s.stable, s.all, s.max, s.min, s.bp
        ),
    )
}

fn random_trials(solver: &Solver) -> Result<Outcome> {
    let (_, s) = random_grid_trial(20, 3.0, SEED, &SolveOptions::default(), solver)?;
    outcome(
        s.unique_fixed_point == s.trials && s.failed == 0 && s.bp_converged >= 19,
        format!("{}/{} trials with one positive fixed point, BP converged {}/{}, {} failed", s.unique_fixed_point, s.trials, s.bp_converged, s.trials, s.failed),
    )
}

fn hamming() -> Result<Outcome> {
    let grid = default_eps_grid();
    let exact = decode_threshold(1, DecodeMethod::Exact, &grid, SEED)?;
    let bp1 = decode_threshold(1, DecodeMethod::Bp, &grid, SEED)?;
    let nphc1 = decode_threshold(1, DecodeMethod::Nphc, &grid, SEED)?;
    let bp6 = decode_threshold(6, DecodeMethod::Bp, &grid, SEED)?;
    let nphc6 = decode_threshold(6, DecodeMethod::Nphc, &grid, SEED)?;
    let within = |t: Option<f64>, lo: f64, hi: f64| t.is_some_and(|t| t >= lo - 1e-12 && t <= hi + 1e-12);
    let never = |c: &bpfix::codes::DecodeCurve| c.points.iter().all(|p| p.p_bit_zero <= 0.5);
    let single_stable = |c: &bpfix::codes::DecodeCurve| c.points.iter().all(|p| p.fixed_points == Some(1) && p.stable == Some(true));
    let fmt = |t: Option<f64>| t.map_or("none".into(), |t| format!("{t:.2}"));
    outcome(
        within(exact.threshold(), 0.20, 0.22)
            && within(bp1.threshold(), 0.12, 0.14)
            && within(nphc1.threshold(), 0.12, 0.14)
            && never(&bp6)
            && never(&nphc6)
            && single_stable(&nphc1)
            && single_stable(&nphc6),
        format!(
            "Y1 thresholds exact {} BP {} NPHC {}; Y6 corrected at no eps: BP {} NPHC {}; one stable fixed point per eps: Y1 {} Y6 {}",
            fmt(exact.threshold()),
            fmt(bp1.threshold()),
            fmt(nphc1.threshold()),
            never(&bp6),
            never(&nphc6),
            single_stable(&nphc1),
            single_stable(&nphc6)
        ),
    )
}

fn random_tree(rng: &mut ChaCha8Rng) -> Result<PairwiseModel> {
    let n = rng.gen_range(2..=12);
    let edges: Vec<_> = (1..n).map(|i| (rng.gen_range(0..i), i, rng.gen_range(-2.0..2.0))).collect();
    let fields: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    PairwiseModel::new(n, &edges, &fields)
}

fn tree_suite(solver: &Solver, models: &mut Vec<PairwiseModel>) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut ok, mut worst, mut worst_rel) = (0, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let m = random_tree(&mut rng)?;
        let exact = enumerate_exact(&m)?;
        let run = run_bp(&m, &BpOptions::default())?;
        let bp_b = beliefs(&m, &run.final_messages)?;
        let sols = solver.solve(&build_bp_system(&m), SEED, &SolveOptions::default())?;
        let pos: Vec<_> = sols.positive().collect();
        if pos.len() != 1 {
            continue;
        }
        let fp = point_to_messages(&m, &pos[0].point)?;
        let fp_b = beliefs(&m, &fp)?;
        let mut gap = 0.0f64;
        for i in 0..m.node_count() {
            let (b, f, e) = (bp_b[i], fp_b[i], exact.marginals[i]);
            gap = gap.max((b - f).abs()).max((b - e).abs()).max((f - e).abs());
        }
        let log_z = -bethe_free_energy(&m, &fp_b, &pairwise_beliefs(&m, &fp)?)?;
        let rel = (log_z - exact.log_partition).abs() / exact.log_partition.abs().max(1e-300);
        worst = worst.max(gap);
        worst_rel = worst_rel.max(rel);
        ok += usize::from(gap < TREE_TOL && rel < TREE_LOGZ_REL && run.status == BpStatus::Converged);
        models.push(m);
    }
    outcome(ok == 50, format!("{ok}/50 trees agree; worst marginal gap {worst:.1e}, worst relative log Z error {worst_rel:.1e}"))
}

fn jacobian_check(solver: &Solver) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut points, mut ok, mut worst) = (0, 0, 0.0f64);
    while points < 20 {
        let n = rng.gen_range(3..=4);
        let edges: Vec<_> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).map(|(a, b)| (a, b, rng.gen_range(-1.5..1.5))).collect();
        let fields: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = PairwiseModel::new(n, &edges, &fields)?;
        let sols = solver.solve(&build_bp_system(&m), SEED, &SolveOptions::default())?;
        for s in sols.positive().take(20 - points) {
            let msgs = point_to_messages(&m, &s.point)?;
            let err = (bp_jacobian(&m, &msgs.mu) - bp_jacobian_fd(&m, &msgs.mu, FD_STEP)).amax();
            worst = worst.max(err);
            ok += usize::from(err < JACOBIAN_TOL);
            points += 1;
        }
    }
    outcome(ok == 20, format!("{ok}/20 fixed points within {JACOBIAN_TOL:.0e}; worst entry gap {worst:.1e}"))
}

fn main() {
    let solver = Solver::default();
    let mut models = Vec::new();
    let mut unexpected = Vec::new();
    let mut passed = 0;
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Result<Outcome>| {
        let t = Instant::now();
        let o = f().unwrap_or_else(|e| Outcome { pass: false, detail: format!("error: {e}") });
        let known = KNOWN_UNATTAINABLE.contains(&name);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("{tag} {name}: {} [{:.1} s]", o.detail, t.elapsed().as_secs_f64());
        if o.pass {
            passed += 1;
        } else if !known {
            unexpected.push(name);
        }
    };
    run("bkk_bounds", &mut bkk_bounds);
    run("bkk_tightness", &mut || bkk_tightness(&solver));
    run("region_counts", &mut || region_counts(&solver, &mut models));
    run("tree_suite", &mut || tree_suite(&solver, &mut models));
    let snapshot = models.clone();
    run("prop1_round_trip", &mut || round_trip(&solver, &snapshot));
    run("unique_but_nonconvergent", &mut || unique_nonconvergent(&solver));
    run("jacobian_check", &mut || jacobian_check(&solver));
    run("random_trials", &mut || random_trials(&solver));
    run("hamming_thresholds", &mut hamming);
    run("table_ordering", &mut || table_ordering(&solver));
    println!("acceptance: {passed}/10 criteria pass");
    if !unexpected.is_empty() {
        println!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
