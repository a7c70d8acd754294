//! Polyhedral homotopy continuation.
//!
//! [`solve_all`] finds every isolated solution in the complex torus of a
//! square system:
//!
//! 1. BP systems are rewritten in message ratios and trivially fixed
//!    variables are substituted out ([`reduce`]); neither step changes the
//!    mixed volume.
//! 2. Mixed cells of the remaining supports are enumerated by a strategy from
//!    the [`CellRegistry`]; their volumes sum to the BKK bound.
//! 3. The start system has random unit-circle coefficients. For generic
//!    supports each cell's binomial system is solved and tracked by the
//!    polyhedral homotopy to the start system; for zonotopal supports the
//!    start system factors and its roots come directly from the cells.
//! 4. A linear homotopy with a random `gamma` carries the start roots to the
//!    target system, and endpoints are mapped back, polished on the original
//!    system, deduplicated and classified.
//!
//! The combinatorial and start-system work depends only on the supports and
//! the seed, so a [`Solver`] caches it across parameter values.

pub mod cells;
pub mod eval;
pub mod linalg;
pub mod reduce;
pub mod smith;
pub mod track;

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use cells::{CellEnumerator, CellRegistry, MixedCell, MixedCellDecomposition, Support};
pub use eval::{CompiledSystem, Homotopy, LinearHomotopy, ProductSystem, SystemEval};
pub use track::{PathResult, PathStatus, TrackOptions};

use crate::error::{Error, Result};
use crate::polysys::PolynomialSystem;
use eval::{Monomial, PolyhedralHomotopy};
use reduce::{Equations, Presolved, Reduction};

/// Per-equation monomial supports of a system.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonPolytopeSet {
    pub supports: Vec<Support>,
}

impl NewtonPolytopeSet {
    pub fn of(sys: &PolynomialSystem) -> Result<Self> {
        let supports = sys.supports();
        if supports.iter().any(|s| s.is_empty()) {
            return Err(Error::Empty("equation without terms"));
        }
        Ok(Self { supports })
    }
}

/// Options of [`solve_all`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Cell enumeration strategy name or `auto`.
    pub cells: String,
    pub track: TrackOptions,
    pub real_tol: f64,
    pub pos_tol: f64,
    pub dedup_tol: f64,
    /// Residual on the original system required of a successful endpoint.
    pub residual_tol: f64,
    /// Fraction of unresolved paths tolerated before the run fails.
    pub max_unresolved: f64,
    /// Rewrite BP systems in message ratios before solving.
    pub reduce: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            cells: "auto".into(),
            track: TrackOptions::default(),
            real_tol: 1e-6,
            pos_tol: 1e-8,
            dedup_tol: 1e-6,
            residual_tol: 1e-8,
            max_unresolved: 0.05,
            reduce: true,
        }
    }
}

/// A deduplicated solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub point: Vec<C>,
    pub residual: f64,
    /// Number of paths that ended here.
    pub multiplicity: usize,
}

impl Solution {
    pub fn real_point(&self) -> Vec<f64> {
        self.point.iter().map(|c| c.re).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub success: usize,
    pub diverged: usize,
    /// Paths ending at singular solutions (multiple roots or points of
    /// positive-dimensional components).
    pub singular_endpoints: usize,
    /// Singular paths the tracker could not resolve.
    pub singular: usize,
    pub step_limit: usize,
    /// Paths whose endpoint coincided with an earlier one.
    pub duplicates: usize,
    /// Positive solutions whose normalizers were not positive.
    pub nonpositive_normalizers: usize,
}

impl Diagnostics {
    pub fn unresolved(&self) -> usize {
        self.singular + self.step_limit
    }
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct Timings {
    pub cells: Duration,
    pub start: Duration,
    pub tracking: Duration,
    /// Whether cells and start roots came from the cache.
    pub reused: bool,
}

/// All solutions found by [`solve_all`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    pub raw_paths: Vec<PathResult>,
    pub distinct_complex: Vec<Solution>,
    /// Indices into `distinct_complex`.
    pub real_solutions: Vec<usize>,
    /// Indices into `distinct_complex`, a subset of `real_solutions`.
    pub positive_real: Vec<usize>,
    pub bkk: u64,
    pub strategy: String,
    pub diagnostics: Diagnostics,
    pub timings: Timings,
}

impl SolutionSet {
    pub fn real(&self) -> impl Iterator<Item = &Solution> {
        self.real_solutions.iter().map(|&i| &self.distinct_complex[i])
    }

    pub fn positive(&self) -> impl Iterator<Item = &Solution> {
        self.positive_real.iter().map(|&i| &self.distinct_complex[i])
    }

    pub fn success_fraction(&self) -> f64 {
        if self.raw_paths.is_empty() {
            return 1.0;
        }
        self.diagnostics.success as f64 / self.raw_paths.len() as f64
    }
}

/// Number of real solutions.
pub fn count_real(sols: &SolutionSet) -> usize {
    sols.real_solutions.len()
}

/// A system after message reduction and presolve.
#[derive(Debug, Clone)]
pub struct Prepared {
    reduction: Option<Reduction>,
    pub presolved: Presolved,
}

impl Prepared {
    pub fn new(sys: &PolynomialSystem) -> Result<Self> {
        Self::with_reduction(sys, true)
    }

    pub fn with_reduction(sys: &PolynomialSystem, reduce: bool) -> Result<Self> {
        NewtonPolytopeSet::of(sys)?;
        let reduction = if reduce { Reduction::new(sys) } else { None };
        let (n, eqs): (usize, Equations) = match &reduction {
            Some(r) => (r.dim(), r.equations.clone()),
            None => (
                sys.num_vars(),
                sys.equations().iter().map(|eq| eq.iter().map(|t| (t.coeff, t.exps.clone())).collect()).collect(),
            ),
        };
        Ok(Self { reduction, presolved: Presolved::new(n, &eqs)? })
    }

    pub fn is_reduced(&self) -> bool {
        self.reduction.is_some()
    }

    pub fn supports(&self) -> &[Support] {
        &self.presolved.supports
    }

    /// Original-coordinate point from presolved coordinates.
    pub fn lift(&self, y: &[C]) -> Option<Vec<C>> {
        let x = self.presolved.expand(y);
        match &self.reduction {
            Some(r) => r.back_map(&x),
            None => Some(x),
        }
    }
}

fn enumerate_cells(registry: &CellRegistry, name: &str, supports: &[Support], seed: u64) -> Result<MixedCellDecomposition> {
    let strategy = registry.select(name, supports);
    if supports.is_empty() {
        return Ok(MixedCellDecomposition::trivial(strategy.map(|s| s.name()).unwrap_or(name)));
    }
    strategy?.enumerate(supports, seed)
}

/// BKK bound of a square system and the mixed cells realizing it.
pub fn bkk_bound(sys: &PolynomialSystem, seed: u64) -> Result<(u64, MixedCellDecomposition)> {
    bkk_bound_with(sys, seed, &CellRegistry::with_defaults(), "auto")
}

/// [`bkk_bound`] with an explicit strategy.
pub fn bkk_bound_with(sys: &PolynomialSystem, seed: u64, registry: &CellRegistry, strategy: &str) -> Result<(u64, MixedCellDecomposition)> {
    let prep = Prepared::new(sys)?;
    let d = enumerate_cells(registry, strategy, prep.supports(), seed)?;
    Ok((d.mixed_volume(), d))
}

fn unit_circle(rng: &mut ChaCha8Rng) -> C {
    C::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))
}

/// Random gamma of the linear homotopy.
pub fn gamma_for(seed: u64) -> C {
    unit_circle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c908))
}

/// A start system with the start points of the continuation.
#[derive(Debug, Clone)]
pub enum StartSystem {
    /// Factored start system; the points are its roots.
    Product(ProductSystem),
    /// Generic-coefficient system Q; the points solve the cells' binomial
    /// systems and still have to be carried to Q by the polyhedral homotopy.
    Polyhedral { q: CompiledSystem, coeffs: Vec<Vec<C>> },
}

impl StartSystem {
    pub fn as_eval(&self) -> &dyn SystemEval {
        match self {
            StartSystem::Product(p) => p,
            StartSystem::Polyhedral { q, .. } => q,
        }
    }
}

/// Random start system on the decomposition's supports with one start point
/// per unit of cell volume, grouped by cell.
pub fn start_system(cells: &MixedCellDecomposition, seed: u64) -> Result<(StartSystem, Vec<Vec<Vec<C>>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbb67_ae85_84ca_a73b);
    let n = cells.supports.len();
    if let Some(z) = &cells.zonotope {
        let consts: Vec<Vec<C>> = z.generators.iter().map(|g| g.iter().map(|_| unit_circle(&mut rng)).collect()).collect();
        let sys = ProductSystem {
            n,
            shifts: z.shifts.iter().map(|s| Monomial::from_dense(&s.iter().map(|&e| i64::from(e)).collect::<Vec<_>>())).collect(),
            factors: z
                .generators
                .iter()
                .zip(&consts)
                .map(|(gs, cs)| gs.iter().zip(cs).map(|(g, &c)| (Monomial::from_dense(g), c)).collect())
                .collect(),
        };
        let points = cells
            .cells
            .iter()
            .map(|cell| {
                let choice = cell.generators.as_ref().ok_or(Error::InvalidModel("zonotope cell without generators".into()))?;
                let a: Vec<Vec<i64>> = (0..n).map(|k| z.generators[k][choice[k]].clone()).collect();
                let b: Vec<C> = (0..n).map(|k| consts[k][choice[k]]).collect();
                smith::solve_binomial(&a, &b)
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok((StartSystem::Product(sys), points));
    }
    let coeffs: Vec<Vec<C>> = cells.supports.iter().map(|s| s.iter().map(|_| unit_circle(&mut rng)).collect()).collect();
    let parts: Vec<Vec<(C, Vec<u32>)>> =
        cells.supports.iter().zip(&coeffs).map(|(s, c)| c.iter().copied().zip(s.iter().cloned()).collect()).collect();
    let q = CompiledSystem::from_parts(n, &parts);
    let points = cells
        .cells
        .iter()
        .map(|cell| {
            let a: Vec<Vec<i64>> = cell
                .pairs
                .iter()
                .enumerate()
                .map(|(k, &(p, r))| {
                    cells.supports[k][p].iter().zip(&cells.supports[k][r]).map(|(&x, &y)| i64::from(x) - i64::from(y)).collect()
                })
                .collect();
            let b: Vec<C> = cell.pairs.iter().enumerate().map(|(k, &(p, r))| -coeffs[k][r] / coeffs[k][p]).collect();
            smith::solve_binomial(&a, &b)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((StartSystem::Polyhedral { q, coeffs }, points))
}

/// Tracks one path of `(1 - t) gamma G + t F` from t = 0 to 1.
pub fn track_path(start: &dyn SystemEval, target: &dyn SystemEval, gamma: C, x0: &[C], opts: &TrackOptions) -> PathResult {
    let h = LinearHomotopy { start, target, gamma };
    track::track(&h, x0, 0.0, 1.0, opts)
}

/// Newton polish of `x` on a fixed system; returns the final residual.
pub fn newton_polish(sys: &dyn SystemEval, x: &mut [C], tol: f64, iters: usize) -> f64 {
    let h = LinearHomotopy { start: sys, target: sys, gamma: C::new(1.0, 0.0) };
    track::polish(&h, x, 1.0, tol, iters)
}

const PHASE_ONE_START: f64 = -20.0;

/// Carries the binomial start points of every cell to roots of Q.
fn polyhedral_phase(cells: &MixedCellDecomposition, q: &CompiledSystem, starts: &[Vec<Vec<C>>], opts: &TrackOptions) -> Vec<PathResult> {
    let n = cells.supports.len();
    let jobs: Vec<(usize, &Vec<C>)> = starts.iter().enumerate().flat_map(|(c, pts)| pts.iter().map(move |p| (c, p))).collect();
    jobs.par_iter()
        .map(|&(ci, y0)| {
            let cell = &cells.cells[ci];
            let mut exps: Vec<Vec<f64>> = (0..n)
                .map(|k| {
                    let h = |i: usize| -> f64 {
                        cells.lifting[k][i] as f64
                            + cells.supports[k][i].iter().zip(&cell.normal).map(|(&e, b)| f64::from(e) * b).sum::<f64>()
                    };
                    let (p, r) = cell.pairs[k];
                    let base = h(p);
                    (0..cells.supports[k].len()).map(|i| if i == p || i == r { 0.0 } else { (h(i) - base).max(0.0) }).collect()
                })
                .collect();
            let min_pos = exps.iter().flatten().copied().filter(|&e| e > 0.0).fold(f64::INFINITY, f64::min);
            if min_pos.is_finite() {
                exps.iter_mut().flatten().for_each(|e| *e /= min_pos);
            }
            let h = PolyhedralHomotopy { system: q, exponents: exps };
            // Q has generic coefficients, so every path ends at a finite regular root
            let opts = TrackOptions { endgame: false, ..opts.clone() };
            let mut y = y0.clone();
            track::polish(&h, &mut y, PHASE_ONE_START, 1e-13, 8);
            track::track(&h, &y, PHASE_ONE_START, 0.0, &opts)
        })
        .collect()
}

struct StartData {
    decomposition: MixedCellDecomposition,
    system: StartSystem,
    /// Roots of the start system (after phase one for generic supports),
    /// `None` where phase one failed.
    roots: Vec<Option<Vec<C>>>,
    cells_time: Duration,
    start_time: Duration,
}

/// Solver with a cache of cells and start roots keyed by support structure
/// and seed.
pub struct Solver {
    registry: CellRegistry,
    cache: Mutex<HashMap<u64, Arc<StartData>>>,
}

impl Default for Solver {
    fn default() -> Self {
        Self::new(CellRegistry::with_defaults())
    }
}

impl Solver {
    pub fn new(registry: CellRegistry) -> Self {
        Self { registry, cache: Mutex::new(HashMap::new()) }
    }

    pub fn registry(&self) -> &CellRegistry {
        &self.registry
    }

    pub fn clear_cache(&self) {
        self.cache.lock().expect("cache lock").clear();
    }

    fn start_data(&self, supports: &[Support], seed: u64, opts: &SolveOptions) -> Result<(Arc<StartData>, bool)> {
        let mut hasher = DefaultHasher::new();
        supports.hash(&mut hasher);
        seed.hash(&mut hasher);
        opts.cells.hash(&mut hasher);
        opts.reduce.hash(&mut hasher);
        let key = hasher.finish();
        if let Some(d) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok((d.clone(), true));
        }
        let t0 = Instant::now();
        let decomposition = enumerate_cells(&self.registry, &opts.cells, supports, seed)?;
        let cells_time = t0.elapsed();
        let t1 = Instant::now();
        let (system, roots) = if supports.is_empty() {
            (StartSystem::Product(ProductSystem { n: 0, shifts: vec![], factors: vec![] }), vec![Some(vec![])])
        } else {
            let (system, points) = start_system(&decomposition, seed)?;
            let roots = match &system {
                StartSystem::Product(_) => points.into_iter().flatten().map(Some).collect(),
                StartSystem::Polyhedral { q, .. } => polyhedral_phase(&decomposition, q, &points, &opts.track)
                    .into_iter()
                    .map(|r| (r.status == PathStatus::Success).then_some(r.endpoint))
                    .collect(),
            };
            (system, roots)
        };
        let data = Arc::new(StartData { decomposition, system, roots, cells_time, start_time: t1.elapsed() });
        self.cache.lock().expect("cache lock").insert(key, data.clone());
        Ok((data, false))
    }

    /// Solves `sys`; see [`solve_all`].
    pub fn solve(&self, sys: &PolynomialSystem, seed: u64, opts: &SolveOptions) -> Result<SolutionSet> {
        let prep = Prepared::with_reduction(sys, opts.reduce)?;
        let (data, reused) = self.start_data(prep.supports(), seed, opts)?;
        let n = prep.presolved.dim();
        let mut target = CompiledSystem::from_parts(n, &prep.presolved.equations());
        let scale: Vec<f64> = target.row_max().iter().map(|&m| if m > 0.0 { 1.0 / m } else { 1.0 }).collect();
        target.scale_rows(&scale);
        let original = CompiledSystem::new(sys.num_vars(), sys.equations());
        let gamma = gamma_for(seed);

        let t0 = Instant::now();
        let raw_paths: Vec<PathResult> = data
            .roots
            .par_iter()
            .map(|root| {
                let Some(root) = root else {
                    return PathResult { endpoint: vec![], status: PathStatus::Singular, final_residual: f64::INFINITY, steps: 0, resolved: false };
                };
                let r = if n == 0 {
                    PathResult { endpoint: vec![], status: PathStatus::Success, final_residual: 0.0, steps: 0, resolved: true }
                } else {
                    track_path(data.system.as_eval(), &target, gamma, root, &opts.track)
                };
                let r = if r.status == PathStatus::Singular && !r.resolved {
                    match classify_unresolved(&target, &r.endpoint) {
                        Some(status) => PathResult { status, resolved: true, ..r },
                        None => r,
                    }
                } else {
                    r
                };
                if r.status != PathStatus::Success {
                    return r;
                }
                match prep.lift(&r.endpoint) {
                    None => PathResult { status: PathStatus::Diverged, ..r },
                    Some(mut x) => {
                        let res = newton_polish(&original, &mut x, opts.residual_tol * 1e-3, 4);
                        let big = x.iter().any(|c| c.norm() > opts.track.divergence_bound);
                        let status = if big {
                            PathStatus::Diverged
                        } else if res < opts.residual_tol {
                            PathStatus::Success
                        } else {
                            PathStatus::Singular
                        };
                        PathResult { endpoint: x, status, final_residual: res, steps: r.steps, resolved: status != PathStatus::Singular }
                    }
                }
            })
            .collect();
        let tracking = t0.elapsed();

        let mut diagnostics = Diagnostics::default();
        for r in &raw_paths {
            match r.status {
                PathStatus::Success => diagnostics.success += 1,
                PathStatus::Diverged => diagnostics.diverged += 1,
                PathStatus::Singular if r.resolved => diagnostics.singular_endpoints += 1,
                PathStatus::Singular => diagnostics.singular += 1,
                PathStatus::StepLimit => diagnostics.step_limit += 1,
            }
        }
        let total = raw_paths.len();
        if diagnostics.unresolved() as f64 > opts.max_unresolved * total as f64 {
            return Err(Error::TooManyFailures { failed: diagnostics.unresolved(), total });
        }

        let mut distinct: Vec<Solution> = Vec::new();
        for r in raw_paths.iter().filter(|r| r.status == PathStatus::Success) {
            let scale = r.endpoint.iter().map(|c| c.norm()).fold(1.0, f64::max);
            let hit = distinct.iter_mut().find(|s| {
                s.point.iter().zip(&r.endpoint).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) <= opts.dedup_tol * scale
            });
            match hit {
                Some(s) => {
                    s.multiplicity += 1;
                    diagnostics.duplicates += 1;
                    if r.final_residual < s.residual {
                        s.point = r.endpoint.clone();
                        s.residual = r.final_residual;
                    }
                }
                None => distinct.push(Solution { point: r.endpoint.clone(), residual: r.final_residual, multiplicity: 1 }),
            }
        }
        distinct.sort_by(|a, b| {
            a.point.iter().zip(&b.point).map(|(x, y)| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im))).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        let message_vars = sys.message_vars();
        let normalizers: Vec<usize> = sys.layout().map(|l| l.blocks.iter().map(|b| b.alpha).collect()).unwrap_or_default();
        let mut real_solutions = vec![];
        let mut positive_real = vec![];
        for (i, s) in distinct.iter().enumerate() {
            if s.point.iter().all(|c| c.im.abs() < opts.real_tol) {
                real_solutions.push(i);
                if message_vars.iter().all(|&v| s.point[v].re > opts.pos_tol) {
                    positive_real.push(i);
                    if normalizers.iter().any(|&v| s.point[v].re <= 0.0) {
                        diagnostics.nonpositive_normalizers += 1;
                    }
                }
            }
        }
        Ok(SolutionSet {
            raw_paths,
            distinct_complex: distinct,
            real_solutions,
            positive_real,
            bkk: data.decomposition.mixed_volume(),
            strategy: data.decomposition.strategy.clone(),
            diagnostics,
            timings: Timings {
                cells: if reused { Duration::ZERO } else { data.cells_time },
                start: if reused { Duration::ZERO } else { data.start_time },
                tracking,
                reused,
            },
        })
    }
}

/// Backward error a badly scaled but nonsingular endpoint must reach.
const RESCUE_BACKWARD_ERROR: f64 = 1e-12;
/// Scaled inverse condition number separating isolated from singular roots.
const RESCUE_CONDITION: f64 = 1e-8;
/// Backward error below which a failed path is taken to sit at a solution.
const NEAR_SOLUTION: f64 = 1e-4;
/// Scaled inverse condition below which that solution counts as singular.
const NEAR_SINGULAR: f64 = 1e-5;

/// Second look at a path the tracker left unresolved, judged on the target
/// system alone:
/// - a badly scaled but nonsingular solution (absolute residual missed the
///   tolerance, backward error is at rounding level) becomes `Success`;
/// - an approximate solution with a nearly singular Jacobian becomes a
///   resolved singular endpoint;
/// - a point far from any solution with coordinates escaping to 0 or
///   infinity becomes `Diverged`.
fn classify_unresolved(target: &CompiledSystem, x: &[C]) -> Option<PathStatus> {
    if !x.iter().all(|c| c.norm().is_finite()) {
        return Some(PathStatus::Diverged);
    }
    let be = target.backward_error(x);
    if be < NEAR_SOLUTION && x.iter().all(|c| c.norm() > 0.0) {
        let cond = target.scaled_inverse_condition(x);
        if be < RESCUE_BACKWARD_ERROR && cond > RESCUE_CONDITION {
            return Some(PathStatus::Success);
        }
        if cond < NEAR_SINGULAR {
            return Some(PathStatus::Singular);
        }
        return None;
    }
    let escaping = x.iter().any(|c| c.norm() < 1e-10 || c.norm() > 1e6);
    (be > 1e-2 && escaping).then_some(PathStatus::Diverged)
}

/// All isolated solutions of `sys` in the complex torus.
pub fn solve_all(sys: &PolynomialSystem, seed: u64, opts: &SolveOptions) -> Result<SolutionSet> {
    Solver::default().solve(sys, seed, opts)
}
