//! Mixed cells of a tuple of supports and the strategies that find them.
//!
//! Two enumerators are registered by default:
//!
//! * `zonotope`: applies when every support is exactly the set of subset sums
//!   of a few generators (as for reduced BP systems). The lifting is a sum of
//!   random per-generator values, so every nonsingular choice of one generator
//!   per equation is a mixed cell and the search is purely combinatorial.
//! * `lifting-dfs`: any supports. A random integer lifting, a depth-first
//!   search over lower edges pruned by LP feasibility, and exact rational
//!   verification of every leaf.

use std::collections::HashMap;

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Solution, SolveOutcome, Variable};
use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::smith::det_i64;
use crate::error::{Error, Result};

/// Exponent vectors of one equation.
pub type Support = Vec<Vec<u32>>;

const LIFT_RANGE: i64 = 1 << 16;
const MAX_ATTEMPTS: usize = 16;

/// One mixed cell: a pair of support points per equation.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedCell {
    pub pairs: Vec<(usize, usize)>,
    pub volume: u64,
    /// Inner normal `beta` of the lower facet (x scales as t^beta).
    pub normal: Vec<f64>,
    /// For zonotope cells, the chosen generator of every equation.
    pub generators: Option<Vec<usize>>,
}

/// Generator structure of zonotopal supports.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonotopeStructure {
    /// Monomial dividing every term of the equation.
    pub shifts: Vec<Vec<u32>>,
    pub generators: Vec<Vec<Vec<i64>>>,
    /// Per support point, the bitmask of generators summing to it.
    pub subsets: Vec<Vec<u32>>,
    pub generator_lifting: Vec<Vec<i64>>,
}

/// Mixed cells with the lifting that induced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedCellDecomposition {
    pub strategy: String,
    pub supports: Vec<Support>,
    /// Lifting value per support point.
    pub lifting: Vec<Vec<i64>>,
    pub cells: Vec<MixedCell>,
    pub zonotope: Option<ZonotopeStructure>,
}

impl MixedCellDecomposition {
    /// Sum of the cell volumes.
    pub fn mixed_volume(&self) -> u64 {
        self.cells.iter().map(|c| c.volume).sum()
    }

    pub fn cell_volumes(&self) -> Vec<u64> {
        self.cells.iter().map(|c| c.volume).collect()
    }

    /// Decomposition of the empty system: one cell of volume one.
    pub fn trivial(strategy: &str) -> Self {
        Self {
            strategy: strategy.into(),
            supports: vec![],
            lifting: vec![],
            cells: vec![MixedCell { pairs: vec![], volume: 1, normal: vec![], generators: None }],
            zonotope: None,
        }
    }
}

/// A way of enumerating mixed cells.
pub trait CellEnumerator: Send + Sync {
    fn name(&self) -> &'static str;
    /// Whether the strategy can handle these supports.
    fn applies(&self, supports: &[Support]) -> bool;
    fn enumerate(&self, supports: &[Support], seed: u64) -> Result<MixedCellDecomposition>;
}

/// Named cell enumerators; `auto` picks the first applicable one in
/// registration order.
pub struct CellRegistry {
    strategies: Vec<Box<dyn CellEnumerator>>,
}

impl Default for CellRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl CellRegistry {
    pub fn empty() -> Self {
        Self { strategies: vec![] }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(ZonotopeCells));
        r.register(Box::new(LiftingDfs));
        r
    }

    pub fn register(&mut self, s: Box<dyn CellEnumerator>) {
        self.strategies.retain(|x| x.name() != s.name());
        self.strategies.push(s);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.strategies.iter().map(|s| s.name()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&dyn CellEnumerator> {
        self.strategies.iter().find(|s| s.name() == name).map(|b| b.as_ref())
    }

    /// Resolves `name` (or `auto`) against the supports.
    pub fn select(&self, name: &str, supports: &[Support]) -> Result<&dyn CellEnumerator> {
        if name == "auto" {
            return self
                .strategies
                .iter()
                .find(|s| s.applies(supports))
                .map(|b| b.as_ref())
                .ok_or_else(|| Error::StrategyNotApplicable("auto".into()));
        }
        let s = self.get(name).ok_or_else(|| Error::UnknownStrategy(name.into()))?;
        if !s.applies(supports) {
            return Err(Error::StrategyNotApplicable(name.into()));
        }
        Ok(s)
    }
}

fn check_square(supports: &[Support]) -> Result<usize> {
    let n = supports.len();
    for s in supports {
        if s.is_empty() {
            return Err(Error::Empty("support"));
        }
        if s.iter().any(|p| p.len() != n) {
            return Err(Error::NotSquare { equations: n, variables: s[0].len() });
        }
    }
    Ok(n)
}

fn diff(a: &[u32], b: &[u32]) -> Vec<i64> {
    a.iter().zip(b).map(|(&x, &y)| i64::from(x) - i64::from(y)).collect()
}

fn random_lifting(supports: &[Support], seed: u64) -> Vec<Vec<i64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    supports.iter().map(|s| s.iter().map(|_| rng.gen_range(0..LIFT_RANGE)).collect()).collect()
}

// ---------------------------------------------------------------------------
// Zonotope strategy

/// Generators of a zonotopal support, or `None`.
pub fn detect_zonotope(support: &[Vec<u32>]) -> Option<(Vec<u32>, Vec<Vec<i64>>, Vec<u32>)> {
    let n = support.first()?.len();
    let has_zero = support.iter().any(|p| p.iter().all(|&e| e == 0));
    let shift: Vec<u32> =
        if has_zero { vec![0; n] } else { (0..n).map(|k| support.iter().map(|p| p[k]).min().unwrap_or(0)).collect() };
    let mut pts: Vec<Vec<i64>> = support.iter().map(|p| diff(p, &shift)).collect();
    if !pts.iter().any(|p| p.iter().all(|&e| e == 0)) {
        return None;
    }
    pts.sort_by(|a, b| a.iter().sum::<i64>().cmp(&b.iter().sum::<i64>()).then_with(|| a.cmp(b)));
    let mut sums: HashMap<Vec<i64>, u32> = HashMap::from([(vec![0; n], 0)]);
    let mut gens: Vec<Vec<i64>> = vec![];
    for p in &pts {
        if sums.contains_key(p) {
            continue;
        }
        if gens.len() >= 20 {
            return None;
        }
        let bit = 1u32 << gens.len();
        let new: Vec<(Vec<i64>, u32)> =
            sums.iter().map(|(s, m)| (s.iter().zip(p).map(|(a, b)| a + b).collect(), m | bit)).collect();
        for (s, m) in new {
            if sums.insert(s, m).is_some() {
                return None;
            }
        }
        gens.push(p.clone());
    }
    if sums.len() != support.len() {
        return None;
    }
    let masks = support.iter().map(|p| sums.get(&diff(p, &shift)).copied()).collect::<Option<Vec<u32>>>()?;
    Some((shift, gens, masks))
}

/// Cells of zonotopal supports (see the module docs).
pub struct ZonotopeCells;

impl CellEnumerator for ZonotopeCells {
    fn name(&self) -> &'static str {
        "zonotope"
    }

    fn applies(&self, supports: &[Support]) -> bool {
        check_square(supports).is_ok() && supports.iter().all(|s| detect_zonotope(s).is_some())
    }

    fn enumerate(&self, supports: &[Support], seed: u64) -> Result<MixedCellDecomposition> {
        let n = check_square(supports)?;
        let mut shifts = vec![];
        let mut generators = vec![];
        let mut subsets = vec![];
        for s in supports {
            let (sh, g, m) = detect_zonotope(s).ok_or_else(|| Error::StrategyNotApplicable(self.name().into()))?;
            shifts.push(sh);
            generators.push(g);
            subsets.push(m);
        }
        let choices = nonsingular_choices(&generators)?;
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64 * 0x9e37_79b9));
            let glift: Vec<Vec<i64>> =
                generators.iter().map(|g| g.iter().map(|_| rng.gen_range(1..LIFT_RANGE)).collect()).collect();
            let lifting: Vec<Vec<i64>> = subsets
                .iter()
                .zip(&glift)
                .map(|(ms, w)| {
                    ms.iter().map(|m| (0..w.len()).filter(|b| m >> b & 1 == 1).map(|b| w[b]).sum()).collect()
                })
                .collect();
            let index: Vec<HashMap<u32, usize>> =
                subsets.iter().map(|ms| ms.iter().enumerate().map(|(i, &m)| (m, i)).collect()).collect();
            let mut cells = Vec::with_capacity(choices.len());
            let mut ok = true;
            for (choice, volume) in &choices {
                let a = DMatrix::from_fn(n, n, |k, j| generators[k][choice[k]][j] as f64);
                let rhs = DVector::from_fn(n, |k, _| -(glift[k][choice[k]] as f64));
                let Some(beta) = a.lu().solve(&rhs) else {
                    ok = false;
                    break;
                };
                let mut pairs = Vec::with_capacity(n);
                for k in 0..n {
                    let mut t = 0u32;
                    for (h, g) in generators[k].iter().enumerate() {
                        if h == choice[k] {
                            continue;
                        }
                        let v: f64 = g.iter().zip(beta.iter()).map(|(&x, b)| x as f64 * b).sum::<f64>() + glift[k][h] as f64;
                        if v.abs() < 1e-7 * (1.0 + glift[k][h] as f64) {
                            ok = false;
                        }
                        if v < 0.0 {
                            t |= 1 << h;
                        }
                    }
                    pairs.push((index[k][&t], index[k][&(t | 1 << choice[k])]));
                }
                if !ok {
                    break;
                }
                cells.push(MixedCell { pairs, volume: *volume, normal: beta.iter().copied().collect(), generators: Some(choice.clone()) });
            }
            if ok {
                return Ok(MixedCellDecomposition {
                    strategy: self.name().into(),
                    supports: supports.to_vec(),
                    lifting,
                    cells,
                    zonotope: Some(ZonotopeStructure { shifts, generators, subsets, generator_lifting: glift }),
                });
            }
        }
        Err(Error::DegenerateLifting(MAX_ATTEMPTS))
    }
}

/// Maximum bipartite matching size of rows to column bitmasks.
fn matching_size(rows: &[u128], ncols: usize) -> usize {
    fn augment(r: usize, rows: &[u128], seen: &mut u128, owner: &mut [Option<usize>]) -> bool {
        let mut cand = rows[r] & !*seen;
        while cand != 0 {
            let c = cand.trailing_zeros() as usize;
            cand &= cand - 1;
            *seen |= 1 << c;
            if owner[c].map_or(true, |o| augment(o, rows, seen, owner)) {
                owner[c] = Some(r);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; ncols];
    let mut size = 0;
    for r in 0..rows.len() {
        let mut seen = 0u128;
        if augment(r, rows, &mut seen, &mut owner) {
            size += 1;
        }
    }
    size
}

/// All choices of one generator per equation with nonzero determinant, with
/// their absolute determinants.
pub fn nonsingular_choices(generators: &[Vec<Vec<i64>>]) -> Result<Vec<(Vec<usize>, u64)>> {
    let n = generators.len();
    if n > 128 {
        return Err(Error::InvalidOption("zonotope strategy supports at most 128 variables".into()));
    }
    let pattern = |g: &[i64]| -> u128 { g.iter().enumerate().filter(|(_, &x)| x != 0).fold(0, |m, (j, _)| m | 1 << j) };
    let unions: Vec<u128> = generators.iter().map(|gs| gs.iter().map(|g| pattern(g)).fold(0, |a, b| a | b)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&k| (generators[k].len(), k));

    struct Search<'a> {
        gens: &'a [Vec<Vec<i64>>],
        unions: &'a [u128],
        order: Vec<usize>,
        n: usize,
        choice: Vec<usize>,
        // Echelon rows (pivot column, reduced row).
        basis: Vec<(usize, Vec<f64>)>,
        out: Vec<(Vec<usize>, u64)>,
    }

    impl Search<'_> {
        fn reduce(&self, g: &[i64]) -> Option<(usize, Vec<f64>)> {
            let mut v: Vec<f64> = g.iter().map(|&x| x as f64).collect();
            for (p, row) in &self.basis {
                let f = v[*p];
                if f != 0.0 {
                    v.iter_mut().zip(row).for_each(|(a, b)| *a -= f * b);
                }
            }
            let (p, m) = v.iter().enumerate().fold((0, 0.0), |acc, (j, x)| if x.abs() > acc.1 { (j, x.abs()) } else { acc });
            if m < 1e-9 {
                return None;
            }
            let piv = v[p];
            v.iter_mut().for_each(|a| *a /= piv);
            Some((p, v))
        }

        fn structurally_ok(&self, depth: usize, chosen_patterns: &[u128]) -> bool {
            let mut rows: Vec<u128> = chosen_patterns.to_vec();
            rows.extend(self.order[depth..].iter().map(|&k| self.unions[k]));
            matching_size(&rows, self.n) == self.n
        }

        fn run(&mut self, depth: usize, patterns: &mut Vec<u128>) -> Result<()> {
            if depth == self.n {
                let rows: Vec<Vec<i64>> = (0..self.n).map(|k| self.gens[k][self.choice[k]].clone()).collect();
                let d = det_i64(&rows)?;
                if d != 0 {
                    self.out.push((self.choice.clone(), d.unsigned_abs() as u64));
                }
                return Ok(());
            }
            let k = self.order[depth];
            for gi in 0..self.gens[k].len() {
                let g = &self.gens[k][gi];
                let Some(row) = self.reduce(g) else { continue };
                let pat = g.iter().enumerate().filter(|(_, &x)| x != 0).fold(0u128, |m, (j, _)| m | 1 << j);
                patterns.push(pat);
                if self.structurally_ok(depth + 1, patterns) {
                    // Keep earlier rows reduced against the new pivot so
                    // that reduction stays a single pass.
                    let (p, r) = row;
                    let saved = self.basis.clone();
                    for (_, b) in self.basis.iter_mut() {
                        let f = b[p];
                        if f != 0.0 {
                            b.iter_mut().zip(&r).for_each(|(a, c)| *a -= f * c);
                        }
                    }
                    self.basis.push((p, r));
                    self.choice[k] = gi;
                    self.run(depth + 1, patterns)?;
                    self.basis = saved;
                }
                patterns.pop();
            }
            Ok(())
        }
    }

    let mut s = Search { gens: generators, unions: &unions, order, n, choice: vec![0; n], basis: vec![], out: vec![] };
    if !s.structurally_ok(0, &[]) {
        return Ok(vec![]);
    }
    s.run(0, &mut vec![])?;
    s.out.sort();
    Ok(s.out)
}

// ---------------------------------------------------------------------------
// Generic lifting strategy

/// Random-lifting mixed cells by LP-pruned depth-first search.
pub struct LiftingDfs;

impl CellEnumerator for LiftingDfs {
    fn name(&self) -> &'static str {
        "lifting-dfs"
    }

    fn applies(&self, supports: &[Support]) -> bool {
        check_square(supports).is_ok()
    }

    fn enumerate(&self, supports: &[Support], seed: u64) -> Result<MixedCellDecomposition> {
        check_square(supports)?;
        for attempt in 0..MAX_ATTEMPTS as u64 {
            let lifting = random_lifting(supports, seed.wrapping_add(attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
            if let Some(cells) = cells_for_lifting(supports, &lifting)? {
                return Ok(MixedCellDecomposition {
                    strategy: self.name().into(),
                    supports: supports.to_vec(),
                    lifting,
                    cells,
                    zonotope: None,
                });
            }
        }
        Err(Error::DegenerateLifting(MAX_ATTEMPTS))
    }
}

struct Lp {
    vars: Vec<Variable>,
    slack: Variable,
    root: Solution,
}

impl Lp {
    fn new(n: usize) -> Result<Self> {
        let mut pb = Problem::new(OptimizationDirection::Maximize);
        let vars = (0..n).map(|_| pb.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
        let slack = pb.add_var(1.0, (f64::NEG_INFINITY, 1.0));
        match pb.solve() {
            Ok(SolveOutcome::Solution(root)) => Ok(Self { vars, slack, root }),
            _ => Err(Error::InvalidModel("root LP failed".into())),
        }
    }

    fn expr(&self, a: &[u32], b: &[u32]) -> LinearExpr {
        let mut e = LinearExpr::empty();
        for (k, (&x, &y)) in a.iter().zip(b).enumerate() {
            if x != y {
                e.add(self.vars[k], f64::from(x) - f64::from(y));
            }
        }
        e
    }

    /// Adds "edge (p, q) of support m is on the lower hull" and reports
    /// whether it stays strictly feasible.
    fn add_edge(&self, sol: Solution, sup: &[Vec<u32>], lift: &[i64], (p, q): (usize, usize)) -> Option<Solution> {
        let r = sol.add_constraint(self.expr(&sup[p], &sup[q]), ComparisonOp::Eq, (lift[q] - lift[p]) as f64);
        let mut cur = match r {
            Ok(SolveOutcome::Solution(x)) => x,
            _ => return None,
        };
        for c in 0..sup.len() {
            if c == p || c == q {
                continue;
            }
            let mut e = self.expr(&sup[c], &sup[p]);
            e.add(self.slack, -1.0);
            cur = match cur.add_constraint(e, ComparisonOp::Ge, (lift[p] - lift[c]) as f64) {
                Ok(SolveOutcome::Solution(x)) => x,
                _ => return None,
            };
        }
        (cur.objective() > 1e-7).then_some(cur)
    }
}

/// Cells for a given lifting; `Ok(None)` when the lifting turns out not to
/// be generic.
pub fn cells_for_lifting(supports: &[Support], lifting: &[Vec<i64>]) -> Result<Option<Vec<MixedCell>>> {
    let n = check_square(supports)?;
    if n == 0 {
        return Ok(Some(MixedCellDecomposition::trivial("").cells));
    }
    if lifting.len() != n || lifting.iter().zip(supports).any(|(l, s)| l.len() != s.len()) {
        return Err(Error::Dimension { expected: n, got: lifting.len() });
    }
    let lp = Lp::new(n)?;
    // Candidate lower edges per support.
    let mut edges: Vec<Vec<(usize, usize)>> = Vec::with_capacity(n);
    for m in 0..n {
        let s = &supports[m];
        let mut e = vec![];
        for p in 0..s.len() {
            for q in p + 1..s.len() {
                if lp.add_edge(lp.root.clone(), s, &lifting[m], (p, q)).is_some() {
                    e.push((p, q));
                }
            }
        }
        if e.is_empty() {
            return Ok(Some(vec![]));
        }
        edges.push(e);
    }
    // compat[m][e][m2] = bitset of edges of m2 jointly feasible with edge e of m.
    let words = |m: usize| edges[m].len().div_ceil(64);
    let mut compat: Vec<Vec<Vec<Vec<u64>>>> = Vec::with_capacity(n);
    for m in 0..n {
        let mut rows = Vec::with_capacity(edges[m].len());
        for &ed in &edges[m] {
            let base = lp.add_edge(lp.root.clone(), &supports[m], &lifting[m], ed).expect("edge was feasible");
            let mut row = Vec::with_capacity(n);
            for m2 in 0..n {
                let mut bits = vec![0u64; words(m2)];
                for (k, &e2) in edges[m2].iter().enumerate() {
                    if m2 == m || lp.add_edge(base.clone(), &supports[m2], &lifting[m2], e2).is_some() {
                        bits[k / 64] |= 1 << (k % 64);
                    }
                }
                row.push(bits);
            }
            rows.push(row);
        }
        compat.push(rows);
    }

    struct Dfs<'a> {
        lp: &'a Lp,
        supports: &'a [Support],
        lifting: &'a [Vec<i64>],
        edges: &'a [Vec<(usize, usize)>],
        compat: &'a [Vec<Vec<Vec<u64>>>],
        assigned: Vec<Option<usize>>,
        leaves: Vec<Vec<usize>>,
    }

    impl Dfs<'_> {
        fn run(&mut self, sol: Solution) {
            let n = self.supports.len();
            let mut best: Option<(usize, Vec<u64>, u32)> = None;
            for m in 0..n {
                if self.assigned[m].is_some() {
                    continue;
                }
                let ne = self.edges[m].len();
                let mut mask: Vec<u64> =
                    (0..ne.div_ceil(64)).map(|w| if ne - w * 64 >= 64 { !0 } else { (1u64 << (ne - w * 64)) - 1 }).collect();
                for m2 in 0..n {
                    if let Some(e2) = self.assigned[m2] {
                        mask.iter_mut().zip(&self.compat[m2][e2][m]).for_each(|(a, b)| *a &= b);
                    }
                }
                let c: u32 = mask.iter().map(|w| w.count_ones()).sum();
                if c == 0 {
                    return;
                }
                if best.as_ref().map_or(true, |b| c < b.2) {
                    best = Some((m, mask, c));
                }
            }
            let Some((m, mask, _)) = best else {
                self.leaves.push(self.assigned.iter().map(|a| a.expect("complete")).collect());
                return;
            };
            for k in 0..self.edges[m].len() {
                if mask[k / 64] >> (k % 64) & 1 == 0 {
                    continue;
                }
                if let Some(next) = self.lp.add_edge(sol.clone(), &self.supports[m], &self.lifting[m], self.edges[m][k]) {
                    self.assigned[m] = Some(k);
                    self.run(next);
                    self.assigned[m] = None;
                }
            }
        }
    }

    let mut dfs = Dfs { lp: &lp, supports, lifting, edges: &edges, compat: &compat, assigned: vec![None; n], leaves: vec![] };
    dfs.run(lp.root.clone());

    let mut cells = Vec::with_capacity(dfs.leaves.len());
    for leaf in dfs.leaves {
        let pairs: Vec<(usize, usize)> = leaf.iter().enumerate().map(|(m, &k)| edges[m][k]).collect();
        match verify_cell(supports, lifting, &pairs)? {
            Some(c) => cells.push(c),
            None => return Ok(None),
        }
    }
    Ok(Some(cells))
}

/// Exact check that `pairs` spans a mixed cell of the lifted supports, with
/// all other points strictly above. `None` signals a non-generic lifting.
fn verify_cell(supports: &[Support], lifting: &[Vec<i64>], pairs: &[(usize, usize)]) -> Result<Option<MixedCell>> {
    let n = supports.len();
    let rows: Vec<Vec<i64>> = pairs.iter().enumerate().map(|(m, &(p, q))| diff(&supports[m][p], &supports[m][q])).collect();
    let det = det_i64(&rows)?;
    if det == 0 {
        return Ok(None);
    }
    // Rational solve of <beta, a_p - a_q> = w_q - w_p.
    let big = |x: i64| BigRational::from_integer(BigInt::from(x));
    let mut a: Vec<Vec<BigRational>> = rows
        .iter()
        .zip(pairs.iter().enumerate())
        .map(|(r, (m, &(p, q)))| {
            let mut row: Vec<BigRational> = r.iter().map(|&x| big(x)).collect();
            row.push(big(lifting[m][q] - lifting[m][p]));
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).find(|&r| !a[r][c].is_zero()).expect("nonsingular");
        a.swap(c, piv);
        let pv = a[c][c].clone();
        for j in c..=n {
            a[c][j] = &a[c][j] / &pv;
        }
        for r in 0..n {
            if r != c && !a[r][c].is_zero() {
                let f = a[r][c].clone();
                for j in c..=n {
                    let t = &f * &a[c][j];
                    a[r][j] -= t;
                }
            }
        }
    }
    let beta: Vec<BigRational> = (0..n).map(|r| a[r][n].clone()).collect();
    let height = |m: usize, i: usize| -> BigRational {
        supports[m][i].iter().zip(&beta).fold(big(lifting[m][i]), |acc, (&e, b)| acc + b * big(i64::from(e)))
    };
    for (m, &(p, _)) in pairs.iter().enumerate() {
        let h0 = height(m, p);
        for i in 0..supports[m].len() {
            if i == pairs[m].0 || i == pairs[m].1 {
                continue;
            }
            if !(height(m, i) - &h0).is_positive() {
                return Ok(None);
            }
        }
    }
    let normal = beta
        .iter()
        .map(|b| {
            use num_traits::ToPrimitive;
            b.to_f64().unwrap_or(f64::NAN)
        })
        .collect();
    Ok(Some(MixedCell { pairs: pairs.to_vec(), volume: det.unsigned_abs() as u64, normal, generators: None }))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn eq18_supports() -> Vec<Support> {
        vec![vec![vec![0, 0], vec![1, 0], vec![2, 2]], vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 2]]]
    }

    #[test]
    fn eq18_mixed_volume() {
        let d = LiftingDfs.enumerate(&eq18_supports(), 1).unwrap();
        assert_eq!(d.mixed_volume(), 4);
        assert!(!ZonotopeCells.applies(&eq18_supports()));
    }

    #[test]
    fn eq18_with_fixed_lifting() {
        let cells = cells_for_lifting(&eq18_supports(), &[vec![0, 0, 0], vec![0, 1, 1, 3]]).unwrap().unwrap();
        assert_eq!(cells.len(), 2);
        assert!(cells.iter().all(|c| c.volume == 2));
    }

    #[test]
    fn univariate_is_degree() {
        for d in 1..7u32 {
            let s: Vec<Support> = vec![(0..=d).map(|k| vec![k]).collect()];
            assert_eq!(LiftingDfs.enumerate(&s, 3).unwrap().mixed_volume(), u64::from(d));
        }
    }

    #[test]
    fn dense_quadratics_bezout() {
        let q: Support = vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]];
        let d = LiftingDfs.enumerate(&[q.clone(), q], 5).unwrap();
        assert_eq!(d.mixed_volume(), 4);
    }

    #[test]
    fn zonotope_detection() {
        let (_, g, _) = detect_zonotope(&[vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]]).unwrap();
        assert_eq!(g.len(), 2);
        assert!(detect_zonotope(&[vec![0, 0], vec![1, 0], vec![2, 2]]).is_none());
        // Shifted square.
        let (s, g, _) = detect_zonotope(&[vec![1, 1], vec![2, 1], vec![1, 2], vec![2, 2]]).unwrap();
        assert_eq!(s, vec![1, 1]);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn strategies_agree_on_boxes() {
        // x y + a x + b y + c and x + y^2-type boxes.
        let s1: Support = vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]];
        let s2: Support = vec![vec![0, 0], vec![2, 0], vec![0, 1], vec![2, 1]];
        let sup = vec![s1, s2];
        let z = ZonotopeCells.enumerate(&sup, 2).unwrap();
        let l = LiftingDfs.enumerate(&sup, 2).unwrap();
        assert_eq!(z.mixed_volume(), l.mixed_volume());
        assert_eq!(z.mixed_volume(), 3);
    }

    #[test]
    fn registry_selection() {
        let r = CellRegistry::with_defaults();
        assert_eq!(r.names(), vec!["zonotope", "lifting-dfs"]);
        assert_eq!(r.select("auto", &eq18_supports()).unwrap().name(), "lifting-dfs");
        assert!(matches!(r.select("zonotope", &eq18_supports()), Err(Error::StrategyNotApplicable(_))));
        assert!(matches!(r.select("nope", &eq18_supports()), Err(Error::UnknownStrategy(_))));
    }
}
