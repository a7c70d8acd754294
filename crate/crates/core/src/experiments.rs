//! Experiment drivers behind the command line: parameter sweeps over uniform
//! models, magnetization slices, random spin-glass trials and timing.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{classify_region, combine_marginals, evaluate_with_exact, CombineMode, FixedPointReport, PhaseRegion};
use crate::bp::{beliefs, run_bp, BpOptions, BpRun, BpStatus};
use crate::error::{Error, Result};
use crate::exact::{enumerate_exact, mean_magnetization, mse};
use crate::homotopy::{SolutionSet, SolveOptions, Solver, Timings};
use crate::model::{build_complete, uniform_grid, PairwiseModel};
use crate::polysys::build_bp_system;

/// Uniform model family of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelKind {
    Grid { rows: usize, cols: usize },
    Complete { n: usize },
}

impl ModelKind {
    pub fn build(&self, j: f64, theta: f64) -> Result<PairwiseModel> {
        match *self {
            Self::Grid { rows, cols } => uniform_grid(rows, cols, j, theta),
            Self::Complete { n } => build_complete(n, j, theta),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Grid { rows, cols } => format!("grid{rows}x{cols}"),
            Self::Complete { n } => format!("complete{n}"),
        }
    }
}

/// `count` values covering `[lo, hi]`. With `offset` they are the centers
/// of `count` equal cells, which keeps them off the cell edges (and so off
/// phase boundaries that pass through round numbers); otherwise they
/// include both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub offset: bool,
}

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.count == 0 || !(self.hi >= self.lo) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidOption(format!("empty or invalid range [{}, {}] x {}", self.lo, self.hi, self.count)));
        }
        let n = self.count as f64;
        Ok((0..self.count)
            .map(|k| {
                let k = k as f64;
                if self.offset {
                    self.lo + (k + 0.5) * (self.hi - self.lo) / n
                } else if self.count == 1 {
                    self.lo
                } else {
                    self.lo + k * (self.hi - self.lo) / (n - 1.0)
                }
            })
            .collect())
    }

    pub fn single(v: f64) -> Self {
        Self { lo: v, hi: v, count: 1, offset: false }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub kind: ModelKind,
    pub j: Axis,
    pub theta: Axis,
    pub seed: u64,
    pub solve: SolveOptions,
    pub bp: BpOptions,
    /// Branching for region labels; `None` uses the model's default.
    pub branching: Option<u32>,
}

/// One (J, theta) grid point of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub j: f64,
    pub theta: f64,
    pub region: PhaseRegion,
    pub bp_status: String,
    pub bp_iterations: usize,
    pub bp_mse: f64,
    pub distinct: usize,
    pub real: usize,
    pub positive: usize,
    pub stable: usize,
    pub mse_all: f64,
    pub mse_stable: Option<f64>,
    pub mse_max: f64,
    pub mse_min: f64,
    pub unresolved_paths: usize,
    /// Set when the solver failed; the other solver columns are then empty.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub row: SweepRow,
    pub reports: Vec<FixedPointReport>,
}

/// Everything computed for one uniform model.
#[derive(Debug, Clone)]
pub struct PointAnalysis {
    pub model: PairwiseModel,
    pub bp: BpRun,
    pub bp_beliefs: Vec<f64>,
    pub exact_marginals: Vec<f64>,
    pub solutions: SolutionSet,
    pub reports: Vec<FixedPointReport>,
}

/// Runs BP, the exact oracle and the solver on one model.
pub fn analyze_model(model: &PairwiseModel, solver: &Solver, seed: u64, solve: &SolveOptions, bp: &BpOptions) -> Result<PointAnalysis> {
    let exact = enumerate_exact(model)?;
    let run = run_bp(model, bp)?;
    let bp_beliefs = beliefs(model, &run.final_messages)?;
    let solutions = solver.solve(&build_bp_system(model), seed, solve)?;
    let reports = evaluate_with_exact(model, &solutions, &exact)?;
    Ok(PointAnalysis { model: model.clone(), bp: run, bp_beliefs, exact_marginals: exact.marginals, solutions, reports })
}

fn sweep_point(spec: &SweepSpec, solver: &Solver, j: f64, theta: f64) -> Result<SweepPoint> {
    let model = spec.kind.build(j, theta)?;
    let d = spec.branching.unwrap_or_else(|| model.default_branching());
    let region = classify_region(j, theta, d);
    let exact = enumerate_exact(&model)?;
    let run = run_bp(&model, &spec.bp)?;
    let bp_mse = mse(&exact.marginals, &beliefs(&model, &run.final_messages)?)?;
    let mut row = SweepRow {
        j,
        theta,
        region,
        bp_status: run.status.name(),
        bp_iterations: run.iterations,
        bp_mse,
        distinct: 0,
        real: 0,
        positive: 0,
        stable: 0,
        mse_all: f64::NAN,
        mse_stable: None,
        mse_max: f64::NAN,
        mse_min: f64::NAN,
        unresolved_paths: 0,
        error: None,
    };
    let solved = solver
        .solve(&build_bp_system(&model), spec.seed, &spec.solve)
        .and_then(|sols| Ok((evaluate_with_exact(&model, &sols, &exact)?, sols)));
    let (reports, sols) = match solved {
        Ok(x) => x,
        Err(e) => {
            row.error = Some(e.to_string());
            return Ok(SweepPoint { row, reports: vec![] });
        }
    };
    row.distinct = sols.distinct_complex.len();
    row.real = sols.real_solutions.len();
    row.positive = sols.positive_real.len();
    row.unresolved_paths = sols.diagnostics.unresolved();
    if reports.is_empty() {
        row.error = Some("no positive fixed point".into());
        return Ok(SweepPoint { row, reports });
    }
    row.stable = reports.iter().filter(|r| r.stable).count();
    let score = |mode| -> Result<f64> { mse(&exact.marginals, &combine_marginals(&reports, mode)?) };
    row.mse_all = score(CombineMode::All)?;
    row.mse_max = score(CombineMode::Max)?;
    row.mse_stable = if row.stable > 0 { Some(score(CombineMode::Stable)?) } else { None };
    row.mse_min = reports.iter().map(|r| r.mse_vs_exact).fold(f64::INFINITY, f64::min);
    Ok(SweepPoint { row, reports })
}

/// Sweeps a uniform model family over a (J, theta) grid, ordered by J then
/// theta. Solver failures are recorded in the row and the sweep continues.
/// Paths are tracked in parallel inside each solve; the mixed cells and
/// start system are computed once and reused across the grid.
pub fn sweep(spec: &SweepSpec, solver: &Solver) -> Result<Vec<SweepPoint>> {
    let js = spec.j.values()?;
    let thetas = spec.theta.values()?;
    let mut out = Vec::with_capacity(js.len() * thetas.len());
    for &j in &js {
        for &t in &thetas {
            out.push(sweep_point(spec, solver, j, t)?);
        }
    }
    Ok(out)
}

/// Means of the MSE columns over the rows where every mode is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseSummary {
    pub rows: usize,
    pub stable: f64,
    pub all: f64,
    pub max: f64,
    pub min: f64,
    pub bp: f64,
}

pub fn summarize(rows: &[SweepRow]) -> Option<MseSummary> {
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.error.is_none() && r.mse_stable.is_some()).collect();
    if ok.is_empty() {
        return None;
    }
    let n = ok.len() as f64;
    let mean = |f: &dyn Fn(&SweepRow) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / n;
    Some(MseSummary {
        rows: ok.len(),
        stable: mean(&|r| r.mse_stable.unwrap_or(f64::NAN)),
        all: mean(&|r| r.mse_all),
        max: mean(&|r| r.mse_max),
        min: mean(&|r| r.mse_min),
        bp: mean(&|r| r.bp_mse),
    })
}

/// One fixed point on a magnetization slice.
#[derive(Debug, Clone, Serialize)]
pub struct SliceRow {
    pub j: f64,
    pub theta: f64,
    pub exact_magnetization: f64,
    pub fp_index: usize,
    pub magnetization: f64,
    pub stable: bool,
    pub spectral_radius: f64,
    pub bethe_log_z: f64,
    /// Whether this fixed point has the largest Bethe partition function.
    pub is_max: bool,
}

/// Mean magnetization of every fixed point along a line of couplings.
pub fn slice(kind: ModelKind, theta: f64, j: &Axis, seed: u64, solve: &SolveOptions, solver: &Solver) -> Result<Vec<SliceRow>> {
    let mut out = vec![];
    for jv in j.values()? {
        let model = kind.build(jv, theta)?;
        let exact = enumerate_exact(&model)?;
        let sols = solver.solve(&build_bp_system(&model), seed, solve)?;
        let reports = evaluate_with_exact(&model, &sols, &exact)?;
        let best = reports.iter().enumerate().max_by(|a, b| a.1.bethe_log_z.total_cmp(&b.1.bethe_log_z)).map(|(i, _)| i);
        let m_exact = mean_magnetization(&exact.marginals);
        for (i, r) in reports.iter().enumerate() {
            out.push(SliceRow {
                j: jv,
                theta,
                exact_magnetization: m_exact,
                fp_index: i,
                magnetization: r.mean_magnetization,
                stable: r.stable,
                spectral_radius: r.spectral_radius,
                bethe_log_z: r.bethe_log_z,
                is_max: Some(i) == best,
            });
        }
    }
    Ok(out)
}

/// Outcome of one random spin-glass instance.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub bp_status: String,
    pub bp_converged: bool,
    pub bp_mse: f64,
    pub positive: usize,
    pub stable: usize,
    pub best_mse: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub bp_converged: usize,
    pub unique_fixed_point: usize,
    pub failed: usize,
}

/// 3x3 grids with couplings and fields drawn from U(-k, k).
pub fn random_grid_trial(count: usize, k: f64, seed: u64, solve: &SolveOptions, solver: &Solver) -> Result<(Vec<TrialRow>, TrialSummary)> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::InvalidOption(format!("parameter range {k} must be finite and non-negative")));
    }
    let base = uniform_grid(3, 3, 0.0, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(count);
    for trial in 0..count {
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| if k > 0.0 { rng.gen_range(-k..k) } else { 0.0 }).collect() };
        let js = draw(base.edge_count());
        let ts = draw(base.node_count());
        let model = base.with_parameters(&js, &ts)?;
        let exact = enumerate_exact(&model)?;
        let run = run_bp(&model, &BpOptions::default())?;
        let bp_mse = mse(&exact.marginals, &beliefs(&model, &run.final_messages)?)?;
        let mut row = TrialRow {
            trial,
            bp_status: run.status.name(),
            bp_converged: run.status == BpStatus::Converged,
            bp_mse,
            positive: 0,
            stable: 0,
            best_mse: f64::NAN,
            error: None,
        };
        match solver.solve(&build_bp_system(&model), seed, solve).and_then(|s| evaluate_with_exact(&model, &s, &exact)) {
            Ok(reports) => {
                row.positive = reports.len();
                row.stable = reports.iter().filter(|r| r.stable).count();
                row.best_mse = reports.iter().map(|r| r.mse_vs_exact).fold(f64::INFINITY, f64::min);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    let summary = TrialSummary {
        trials: count,
        bp_converged: rows.iter().filter(|r| r.bp_converged).count(),
        unique_fixed_point: rows.iter().filter(|r| r.error.is_none() && r.positive == 1).count(),
        failed: rows.iter().filter(|r| r.error.is_some()).count(),
    };
    Ok((rows, summary))
}

/// Wall-clock phases of solving one model twice: the second solve of the
/// same structure reuses the mixed cells and start system.
#[derive(Debug, Clone, Serialize)]
pub struct TimingReport {
    pub model: String,
    pub mixed_volume: Duration,
    pub start_system: Duration,
    pub tracking: Duration,
    pub post_processing: Duration,
    pub bp: Duration,
    pub total: Duration,
    pub reuse: Timings,
    pub reuse_total: Duration,
}

pub fn timing_report(kind: ModelKind, j: f64, theta: f64, seed: u64, solve: &SolveOptions) -> Result<TimingReport> {
    let solver = Solver::default();
    let model = kind.build(j, theta)?;
    let t_all = Instant::now();
    let t = Instant::now();
    run_bp(&model, &BpOptions::default())?;
    let bp = t.elapsed();
    let sys = build_bp_system(&model);
    let sols = solver.solve(&sys, seed, solve)?;
    let t = Instant::now();
    evaluate_with_exact(&model, &sols, &enumerate_exact(&model)?)?;
    let post_processing = t.elapsed();
    let total = t_all.elapsed();
    // same structure, different parameters
    let other = kind.build(j * 0.9 + 0.05, theta * 0.9 + 0.05)?;
    let t = Instant::now();
    let again = solver.solve(&build_bp_system(&other), seed, solve)?;
    let reuse_total = t.elapsed();
    Ok(TimingReport {
        model: kind.name(),
        mixed_volume: sols.timings.cells,
        start_system: sols.timings.start,
        tracking: sols.timings.tracking,
        post_processing,
        bp,
        total,
        reuse: again.timings,
        reuse_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_values() {
        let a = Axis { lo: -2.0, hi: 2.0, count: 4, offset: true };
        assert_eq!(a.values().unwrap(), vec![-1.5, -0.5, 0.5, 1.5]);
        let b = Axis { lo: -2.0, hi: 2.0, count: 5, offset: false };
        assert_eq!(b.values().unwrap(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(Axis::single(0.3).values().unwrap(), vec![0.3]);
        assert!(Axis { lo: 1.0, hi: 0.0, count: 3, offset: false }.values().is_err());
        assert!(Axis { lo: 0.0, hi: 1.0, count: 0, offset: false }.values().is_err());
    }

    #[test]
    fn tree_sweep_single_point() {
        let spec = SweepSpec {
            kind: ModelKind::Grid { rows: 1, cols: 4 },
            j: Axis::single(0.8),
            theta: Axis::single(-0.3),
            seed: 1,
            solve: SolveOptions::default(),
            bp: BpOptions::default(),
            branching: None,
        };
        let pts = sweep(&spec, &Solver::default()).unwrap();
        assert_eq!(pts.len(), 1);
        let r = &pts[0].row;
        assert_eq!(r.positive, 1);
        assert!(r.mse_min < 1e-12, "{}", r.mse_min);
        assert_eq!(r.bp_status, "converged");
    }

    #[test]
    fn zero_coupling_slice_is_tanh() {
        let rows = slice(ModelKind::Complete { n: 3 }, 0.4, &Axis::single(0.0), 2, &SolveOptions::default(), &Solver::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].magnetization - 0.4f64.tanh()).abs() < 1e-9);
        assert!(rows[0].is_max && rows[0].stable);
    }

    #[test]
    fn zero_range_trial_is_uniform() {
        let (rows, s) = random_grid_trial(1, 0.0, 3, &SolveOptions::default(), &Solver::default()).unwrap();
        assert_eq!(s.unique_fixed_point, 1);
        assert!(rows[0].best_mse < 1e-12 && rows[0].bp_mse < 1e-12);
    }
}
