//! Exact inference by enumerating all assignments.
//!
//! Weights are accumulated relative to the largest log-weight with
//! compensated summation, so couplings of magnitude 30 and more do not
//! overflow and the result does not depend on summation order beyond 1e-12.

use crate::error::{Error, Result};
use crate::model::{FactorGraph, PairwiseModel};

/// Hard cap on the number of variables accepted for enumeration.
pub const MAX_EXACT_VARS: usize = 25;

/// Exact partition function and marginals of a pairwise model.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    pub log_partition: f64,
    /// P(X_i = +1) per node.
    pub marginals: Vec<f64>,
    /// Per edge, `table[a][b]` = P(X_i = s_a, X_j = s_b) with s = [+1, -1].
    pub pairwise_marginals: Vec<[[f64; 2]; 2]>,
}

/// Exact partition function and marginals of a factor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorExactResult {
    pub log_partition: f64,
    /// `marginals[v][y]` = P(Y_v = y).
    pub marginals: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Visits all spin assignments in Gray-code order, passing the spins and
/// their log-weight.
fn for_each_state(model: &PairwiseModel, mut visit: impl FnMut(&[i8], f64)) {
    let n = model.node_count();
    let mut spins = vec![-1i8; n];
    let mut lw = model.log_weight(&spins).expect("length matches");
    visit(&spins, lw);
    for step in 1u64..(1u64 << n) {
        let k = step.trailing_zeros() as usize;
        let local: f64 = model.field(k)
            + model.neighbors(k).iter().map(|&(nb, e)| model.coupling(e) * f64::from(spins[nb])).sum::<f64>();
        lw -= 2.0 * f64::from(spins[k]) * local;
        spins[k] = -spins[k];
        visit(&spins, lw);
    }
}

/// Brute-force partition function and marginals of a pairwise model.
pub fn enumerate_exact(model: &PairwiseModel) -> Result<ExactResult> {
    let n = model.node_count();
    if n > MAX_EXACT_VARS {
        return Err(Error::Capacity(n, MAX_EXACT_VARS));
    }
    let mut max = f64::NEG_INFINITY;
    for_each_state(model, |_, lw| max = max.max(lw));

    let edges = model.edges();
    let mut z = Neumaier::default();
    let mut node = vec![Neumaier::default(); n];
    let mut pair = vec![[[Neumaier::default(); 2]; 2]; edges.len()];
    for_each_state(model, |spins, lw| {
        let w = (lw - max).exp();
        z.add(w);
        for (i, acc) in node.iter_mut().enumerate() {
            if spins[i] > 0 {
                acc.add(w);
            }
        }
        for (e, &(i, j)) in edges.iter().enumerate() {
            let a = usize::from(spins[i] < 0);
            let b = usize::from(spins[j] < 0);
            pair[e][a][b].add(w);
        }
    });
    let zv = z.value();
    Ok(ExactResult {
        log_partition: max + zv.ln(),
        marginals: node.iter().map(|s| s.value() / zv).collect(),
        pairwise_marginals: pair
            .iter()
            .map(|t| {
                let mut out = [[0.0; 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        out[a][b] = t[a][b].value() / zv;
                    }
                }
                out
            })
            .collect(),
    })
}

/// Brute-force partition function and marginals of a factor graph.
pub fn enumerate_exact_factor(fg: &FactorGraph) -> Result<FactorExactResult> {
    let n = fg.variable_count();
    if n > MAX_EXACT_VARS {
        return Err(Error::Capacity(n, MAX_EXACT_VARS));
    }
    let log_weight = |y: &[u8]| -> f64 { fg.factors().iter().map(|f| f.value(y).ln()).sum() };
    let mut y = vec![0u8; n];
    let mut max = f64::NEG_INFINITY;
    let mut logs = Vec::with_capacity(1 << n);
    for s in 0u64..(1u64 << n) {
        for (v, slot) in y.iter_mut().enumerate() {
            *slot = ((s >> v) & 1) as u8;
        }
        let lw = log_weight(&y);
        max = max.max(lw);
        logs.push(lw);
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::InvalidModel("all assignments have zero weight".into()));
    }
    let mut z = Neumaier::default();
    let mut acc = vec![[Neumaier::default(); 2]; n];
    for (s, &lw) in logs.iter().enumerate() {
        let w = (lw - max).exp();
        if w == 0.0 {
            continue;
        }
        z.add(w);
        for (v, a) in acc.iter_mut().enumerate() {
            a[(s >> v) & 1].add(w);
        }
    }
    let zv = z.value();
    Ok(FactorExactResult {
        log_partition: max + zv.ln(),
        marginals: acc.iter().map(|a| [a[0].value() / zv, a[1].value() / zv]).collect(),
    })
}

/// Mean magnetization `(1/N) sum_i (2 P_i - 1)` from per-node P(+1).
pub fn mean_magnetization(marginals: &[f64]) -> f64 {
    if marginals.is_empty() {
        return 0.0;
    }
    marginals.iter().map(|p| 2.0 * p - 1.0).sum::<f64>() / marginals.len() as f64
}

/// Mean squared error with the factor 2/N: `(2/N) sum_i |P_i - Q_i|^2`.
pub fn mse(exact: &[f64], approx: &[f64]) -> Result<f64> {
    if exact.len() != approx.len() {
        return Err(Error::Dimension { expected: exact.len(), got: approx.len() });
    }
    if exact.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = exact.iter().zip(approx).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(2.0 * s / exact.len() as f64)
}
