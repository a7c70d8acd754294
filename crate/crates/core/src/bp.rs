//! Synchronous sum-product belief propagation for pairwise models and
//! factor graphs, with damping and limit-cycle detection.

use std::collections::hash_map::DefaultHasher;
use std::collections::VecDeque;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{FactorGraph, PairwiseModel, SPIN};

/// Messages on every directed edge of a pairwise model.
///
/// `mu[e] = [mu(+1), mu(-1)]` for directed edge `edges[e] = (i, j)`, the
/// message from node i to node j; `alpha[e]` is the normalizer that was used
/// to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet {
    pub edges: Vec<(usize, usize)>,
    pub mu: Vec<[f64; 2]>,
    pub alpha: Vec<f64>,
}

impl MessageSet {
    /// All messages (1/2, 1/2) with unit normalizers.
    pub fn uniform(model: &PairwiseModel) -> Self {
        let edges = model.directed_edges();
        let n = edges.len();
        Self { edges, mu: vec![[0.5, 0.5]; n], alpha: vec![1.0; n] }
    }

    /// Messages drawn uniformly from [0.05, 0.95] for mu(+1).
    pub fn random(model: &PairwiseModel, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::uniform(model);
        for p in &mut m.mu {
            let a: f64 = rng.gen_range(0.05..0.95);
            *p = [a, 1.0 - a];
        }
        m
    }

    /// Sup-norm distance between the message values of two sets.
    pub fn distance(&self, other: &Self) -> f64 {
        sup_distance(&self.mu, &other.mu)
    }
}

fn sup_distance(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x[0] - y[0]).abs().max((x[1] - y[1]).abs()))
        .fold(0.0, f64::max)
}

/// Precomputed directed-edge structure of a pairwise model.
#[derive(Debug, Clone)]
pub struct BpGraph {
    pub edges: Vec<(usize, usize)>,
    /// For directed edge (i, j): indices of the directed edges (k, i), k != j.
    pub incoming: Vec<Vec<usize>>,
    /// For node i: indices of all directed edges (k, i).
    pub into_node: Vec<Vec<usize>>,
    /// Undirected edge index of each directed edge.
    pub undirected: Vec<usize>,
}

impl BpGraph {
    pub fn new(model: &PairwiseModel) -> Self {
        let edges = model.directed_edges();
        let index = |a: usize, b: usize| edges.binary_search(&(a, b)).expect("directed edge exists");
        let mut into_node = vec![Vec::new(); model.node_count()];
        for (e, &(_, j)) in edges.iter().enumerate() {
            into_node[j].push(e);
        }
        let incoming = edges
            .iter()
            .map(|&(i, j)| model.neighbors(i).iter().filter(|&&(k, _)| k != j).map(|&(k, _)| index(k, i)).collect())
            .collect();
        let undirected = edges.iter().map(|&(i, j)| model.edge_index(i, j).expect("edge exists")).collect();
        Self { edges, incoming, into_node, undirected }
    }

    fn check(&self, msgs: &MessageSet) -> Result<()> {
        if msgs.edges != self.edges || msgs.mu.len() != self.edges.len() {
            return Err(Error::Dimension { expected: self.edges.len(), got: msgs.mu.len() });
        }
        Ok(())
    }

    /// Unnormalized update for one directed edge: the sum over x_i of
    /// `Phi_ij(x_i, x_j) Phi_i(x_i) prod_k mu_ki(x_i)` for both x_j.
    pub fn raw_message(&self, model: &PairwiseModel, mu: &[[f64; 2]], e: usize) -> [f64; 2] {
        let (i, _) = self.edges[e];
        let j_c = model.coupling(self.undirected[e]);
        let th = model.field(i);
        let mut prod = [1.0f64; 2];
        for &k in &self.incoming[e] {
            prod[0] *= mu[k][0];
            prod[1] *= mu[k][1];
        }
        let mut out = [0.0; 2];
        for (b, o) in out.iter_mut().enumerate() {
            for a in 0..2 {
                *o += (j_c * SPIN[a] * SPIN[b] + th * SPIN[a]).exp() * prod[a];
            }
        }
        out
    }

    /// One synchronous update of every message, normalized per edge.
    pub fn step(&self, model: &PairwiseModel, mu: &[[f64; 2]]) -> (Vec<[f64; 2]>, Vec<f64>) {
        let mut out = Vec::with_capacity(mu.len());
        let mut alpha = Vec::with_capacity(mu.len());
        for e in 0..self.edges.len() {
            let s = self.raw_message(model, mu, e);
            let a = 1.0 / (s[0] + s[1]);
            out.push([s[0] * a, s[1] * a]);
            alpha.push(a);
        }
        (out, alpha)
    }
}

/// One synchronous BP update (every message computed from the previous
/// iteration's messages) with per-edge normalization.
pub fn bp_step(model: &PairwiseModel, msgs: &MessageSet) -> Result<MessageSet> {
    let g = BpGraph::new(model);
    g.check(msgs)?;
    let (mu, alpha) = g.step(model, &msgs.mu);
    Ok(MessageSet { edges: g.edges, mu, alpha })
}

/// How a BP run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpStatus {
    Converged,
    MaxIters,
    LimitCycle(usize),
}

impl BpStatus {
    pub fn name(&self) -> String {
        match self {
            BpStatus::Converged => "converged".into(),
            BpStatus::MaxIters => "max_iters".into(),
            BpStatus::LimitCycle(p) => format!("limit_cycle({p})"),
        }
    }
}

/// Message initialization.
#[derive(Debug, Clone, PartialEq)]
pub enum BpInit {
    Uniform,
    Random(u64),
    Explicit(MessageSet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpOptions {
    pub max_iters: usize,
    /// Sup-norm threshold on the change of messages between iterations.
    pub tolerance: f64,
    /// Weight of the previous messages in the damped update.
    pub damping: f64,
    pub init: BpInit,
    /// Number of past states searched for a repeat.
    pub cycle_window: usize,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self { max_iters: 10_000, tolerance: 1e-10, damping: 0.0, init: BpInit::Uniform, cycle_window: 64 }
    }
}

impl BpOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidOption("tolerance must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidOption("damping must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BpRun {
    pub status: BpStatus,
    pub iterations: usize,
    pub final_messages: MessageSet,
    pub residual_history: Vec<f64>,
}

/// Quantization step of the limit-cycle hash.
const CYCLE_QUANTUM: f64 = 1e-8;

fn state_hash(mu: &[[f64; 2]]) -> u64 {
    let mut h = DefaultHasher::new();
    for p in mu {
        ((p[0] / CYCLE_QUANTUM).round() as i64).hash(&mut h);
    }
    h.finish()
}

struct DriveResult {
    status: BpStatus,
    iterations: usize,
    mu: Vec<[f64; 2]>,
    alpha: Vec<f64>,
    history: Vec<f64>,
}

/// Shared iteration loop: damping, convergence test, cycle detection.
fn drive(
    init: Vec<[f64; 2]>,
    opts: &BpOptions,
    mut update: impl FnMut(&[[f64; 2]]) -> (Vec<[f64; 2]>, Vec<f64>),
) -> DriveResult {
    let eps = opts.damping;
    let mut mu = init;
    let mut alpha = vec![1.0; mu.len()];
    let mut history = Vec::new();
    let mut window: VecDeque<(u64, usize, Vec<[f64; 2]>)> = VecDeque::new();
    for it in 1..=opts.max_iters {
        let (bp, a) = update(&mu);
        let next: Vec<[f64; 2]> = bp
            .iter()
            .zip(&mu)
            .map(|(n, o)| [(1.0 - eps) * n[0] + eps * o[0], (1.0 - eps) * n[1] + eps * o[1]])
            .collect();
        let change = sup_distance(&next, &mu);
        history.push(change);
        mu = next;
        alpha = a;
        if change < opts.tolerance {
            // Confirm against a fresh undamped evaluation at the new state.
            let (fresh, fa) = update(&mu);
            if sup_distance(&fresh, &mu) < opts.tolerance {
                alpha = fa;
                return DriveResult { status: BpStatus::Converged, iterations: it, mu, alpha, history };
            }
        }
        if opts.cycle_window > 0 {
            let h = state_hash(&mu);
            // A repeat only counts as a cycle while the messages still move
            // visibly; tiny oscillations around a fixed point are left to
            // the convergence test.
            if change > 100.0 * CYCLE_QUANTUM {
                if let Some((_, at, _)) =
                    window.iter().rev().find(|(wh, _, s)| *wh == h && sup_distance(s, &mu) < CYCLE_QUANTUM)
                {
                    let period = it - at;
                    if period >= 2 {
                        return DriveResult { status: BpStatus::LimitCycle(period), iterations: it, mu, alpha, history };
                    }
                }
            }
            window.push_back((h, it, mu.clone()));
            if window.len() > opts.cycle_window {
                window.pop_front();
            }
        }
    }
    DriveResult { status: BpStatus::MaxIters, iterations: opts.max_iters, mu, alpha, history }
}

/// Runs damped synchronous BP until convergence, a detected limit cycle, or
/// the iteration limit.
pub fn run_bp(model: &PairwiseModel, opts: &BpOptions) -> Result<BpRun> {
    opts.validate()?;
    let g = BpGraph::new(model);
    let init = match &opts.init {
        BpInit::Uniform => MessageSet::uniform(model),
        BpInit::Random(seed) => MessageSet::random(model, *seed),
        BpInit::Explicit(m) => {
            g.check(m)?;
            m.clone()
        }
    };
    let r = drive(init.mu, opts, |mu| g.step(model, mu));
    Ok(BpRun {
        status: r.status,
        iterations: r.iterations,
        final_messages: MessageSet { edges: g.edges, mu: r.mu, alpha: r.alpha },
        residual_history: r.history,
    })
}

/// Beliefs P(X_i = +1) from normalized messages.
pub fn beliefs(model: &PairwiseModel, msgs: &MessageSet) -> Result<Vec<f64>> {
    let g = BpGraph::new(model);
    g.check(msgs)?;
    Ok(beliefs_with(&g, model, &msgs.mu))
}

pub(crate) fn beliefs_with(g: &BpGraph, model: &PairwiseModel, mu: &[[f64; 2]]) -> Vec<f64> {
    (0..model.node_count())
        .map(|i| {
            let th = model.field(i);
            let mut b = [th.exp(), (-th).exp()];
            for &k in &g.into_node[i] {
                b[0] *= mu[k][0];
                b[1] *= mu[k][1];
            }
            b[0] / (b[0] + b[1])
        })
        .collect()
}

/// Pairwise beliefs per undirected edge, `table[a][b]` for spins
/// `(SPIN[a], SPIN[b])` of the edge's `(i, j)`.
pub fn pairwise_beliefs(model: &PairwiseModel, msgs: &MessageSet) -> Result<Vec<[[f64; 2]; 2]>> {
    let g = BpGraph::new(model);
    g.check(msgs)?;
    Ok(pairwise_beliefs_with(&g, model, &msgs.mu))
}

pub(crate) fn pairwise_beliefs_with(g: &BpGraph, model: &PairwiseModel, mu: &[[f64; 2]]) -> Vec<[[f64; 2]; 2]> {
    let index = |a: usize, b: usize| g.edges.binary_search(&(a, b)).expect("directed edge exists");
    model
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let ij = index(i, j);
            let ji = index(j, i);
            let mut pi = [1.0f64; 2];
            for &k in &g.incoming[ij] {
                pi[0] *= mu[k][0];
                pi[1] *= mu[k][1];
            }
            let mut pj = [1.0f64; 2];
            for &k in &g.incoming[ji] {
                pj[0] *= mu[k][0];
                pj[1] *= mu[k][1];
            }
            let (jc, ti, tj) = (model.coupling(e), model.field(i), model.field(j));
            let mut t = [[0.0; 2]; 2];
            let mut z = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    let v = (jc * SPIN[a] * SPIN[b] + ti * SPIN[a] + tj * SPIN[b]).exp() * pi[a] * pj[b];
                    t[a][b] = v;
                    z += v;
                }
            }
            for row in &mut t {
                for v in row.iter_mut() {
                    *v /= z;
                }
            }
            t
        })
        .collect()
}

/// Messages of a factor graph, one entry per (variable, factor) incidence.
///
/// `q[e][y]` is the variable-to-factor message and `r[e][y]` the
/// factor-to-variable message for `edges[e] = (variable, factor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMessages {
    pub edges: Vec<(usize, usize)>,
    pub q: Vec<[f64; 2]>,
    pub r: Vec<[f64; 2]>,
    pub alpha: Vec<f64>,
}

/// Incidence structure of a factor graph.
#[derive(Debug, Clone)]
pub struct FactorBpGraph {
    /// `(variable, factor)` incidences, sorted.
    pub edges: Vec<(usize, usize)>,
    /// For each factor, the incidence index of each of its variables in order.
    pub factor_edges: Vec<Vec<usize>>,
    /// For each variable, its incidence indices.
    pub var_edges: Vec<Vec<usize>>,
}

impl FactorBpGraph {
    pub fn new(fg: &FactorGraph) -> Self {
        let mut edges: Vec<(usize, usize)> = fg
            .factors()
            .iter()
            .enumerate()
            .flat_map(|(f, fac)| fac.vars.iter().map(move |&v| (v, f)))
            .collect();
        edges.sort();
        let index = |v: usize, f: usize| edges.binary_search(&(v, f)).expect("incidence exists");
        let factor_edges = fg.factors().iter().enumerate().map(|(f, fac)| fac.vars.iter().map(|&v| index(v, f)).collect()).collect();
        let mut var_edges = vec![Vec::new(); fg.variable_count()];
        for (e, &(v, _)) in edges.iter().enumerate() {
            var_edges[v].push(e);
        }
        Self { edges, factor_edges, var_edges }
    }

    /// Factor-to-variable messages (unnormalized sum-product) from the
    /// variable-to-factor messages `q`.
    pub fn factor_to_var(&self, fg: &FactorGraph, q: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let mut r = vec![[0.0; 2]; self.edges.len()];
        for (f, fac) in fg.factors().iter().enumerate() {
            let inc = &self.factor_edges[f];
            let k = fac.vars.len();
            for (pos, &e) in inc.iter().enumerate() {
                let mut out = [0.0; 2];
                for (idx, &t) in fac.table.iter().enumerate() {
                    if t == 0.0 {
                        continue;
                    }
                    let mut w = t;
                    for (p2, &e2) in inc.iter().enumerate() {
                        if p2 != pos {
                            w *= q[e2][(idx >> (k - 1 - p2)) & 1];
                        }
                    }
                    out[(idx >> (k - 1 - pos)) & 1] += w;
                }
                r[e] = out;
            }
        }
        r
    }

    /// Normalized variable-to-factor messages from factor-to-variable ones.
    pub fn var_to_factor(&self, r: &[[f64; 2]]) -> (Vec<[f64; 2]>, Vec<f64>) {
        let mut q = vec![[0.0; 2]; self.edges.len()];
        let mut alpha = vec![0.0; self.edges.len()];
        for inc in &self.var_edges {
            for &e in inc {
                let mut p = [1.0f64; 2];
                for &g in inc {
                    if g != e {
                        p[0] *= r[g][0];
                        p[1] *= r[g][1];
                    }
                }
                let a = 1.0 / (p[0] + p[1]);
                q[e] = [p[0] * a, p[1] * a];
                alpha[e] = a;
            }
        }
        (q, alpha)
    }

    pub fn uniform(&self) -> FactorMessages {
        let n = self.edges.len();
        FactorMessages { edges: self.edges.clone(), q: vec![[0.5, 0.5]; n], r: vec![[1.0, 1.0]; n], alpha: vec![1.0; n] }
    }
}

/// One synchronous factor-graph update: r from the current q, then the new
/// normalized q from that r.
pub fn factor_bp_step(fg: &FactorGraph, msgs: &FactorMessages) -> Result<FactorMessages> {
    let g = FactorBpGraph::new(fg);
    if msgs.edges != g.edges {
        return Err(Error::Dimension { expected: g.edges.len(), got: msgs.edges.len() });
    }
    let r = g.factor_to_var(fg, &msgs.q);
    let (q, alpha) = g.var_to_factor(&r);
    Ok(FactorMessages { edges: g.edges, q, r, alpha })
}

#[derive(Debug, Clone)]
pub struct FactorBpRun {
    pub status: BpStatus,
    pub iterations: usize,
    pub final_messages: FactorMessages,
    pub residual_history: Vec<f64>,
}

/// Runs damped synchronous BP on a factor graph. An `Explicit` init is not
/// available for factor graphs; it is treated as uniform.
pub fn run_factor_bp(fg: &FactorGraph, opts: &BpOptions) -> Result<FactorBpRun> {
    opts.validate()?;
    let g = FactorBpGraph::new(fg);
    let mut init = g.uniform().q;
    if let BpInit::Random(seed) = opts.init {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut init {
            let a: f64 = rng.gen_range(0.05..0.95);
            *p = [a, 1.0 - a];
        }
    }
    let d = drive(init, opts, |q| {
        let r = g.factor_to_var(fg, q);
        g.var_to_factor(&r)
    });
    let r = g.factor_to_var(fg, &d.mu);
    Ok(FactorBpRun {
        status: d.status,
        iterations: d.iterations,
        final_messages: FactorMessages { edges: g.edges, q: d.mu, r, alpha: d.alpha },
        residual_history: d.history,
    })
}

/// Variable beliefs `b[v][y]` from factor-graph messages.
pub fn factor_beliefs(fg: &FactorGraph, msgs: &FactorMessages) -> Vec<[f64; 2]> {
    let g = FactorBpGraph::new(fg);
    let r = g.factor_to_var(fg, &msgs.q);
    g.var_edges
        .iter()
        .map(|inc| {
            let mut p = [1.0f64; 2];
            for &e in inc {
                p[0] *= r[e][0];
                p[1] *= r[e][1];
            }
            let z = p[0] + p[1];
            [p[0] / z, p[1] / z]
        })
        .collect()
}
