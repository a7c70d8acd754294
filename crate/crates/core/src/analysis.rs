//! Post-processing of BP fixed points: Bethe free energy, local stability of
//! the normalized BP map, phase regions of uniform Ising models, and the
//! Bethe-weighted combination of several fixed points.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::bp::{beliefs, pairwise_beliefs, BpGraph, FactorBpGraph, FactorMessages, MessageSet};
use crate::error::{Error, Result};
use crate::exact::{enumerate_exact, mean_magnetization, mse, ExactResult};
use crate::homotopy::SolutionSet;
use crate::model::{FactorGraph, PairwiseModel, SPIN};
use crate::polysys::point_to_messages;

/// Tolerance on marginal consistency accepted by [`bethe_free_energy`].
pub const CONSISTENCY_TOL: f64 = 1e-6;

/// Margin around spectral radius 1 inside which a fixed point is marginal.
pub const STABILITY_MARGIN: f64 = 1e-9;

fn xlnx(x: f64) -> f64 {
    if x < 1e-300 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Bethe free energy of singleton beliefs `P(X_i = +1)` and pairwise tables
/// (indexed as in [`pairwise_beliefs`]).
pub fn bethe_free_energy(model: &PairwiseModel, beliefs: &[f64], pairwise: &[[[f64; 2]; 2]]) -> Result<f64> {
    let n = model.node_count();
    if beliefs.len() != n {
        return Err(Error::Dimension { expected: n, got: beliefs.len() });
    }
    if pairwise.len() != model.edge_count() {
        return Err(Error::Dimension { expected: model.edge_count(), got: pairwise.len() });
    }
    let single = |i: usize| [beliefs[i], 1.0 - beliefs[i]];
    let mut f = 0.0;
    for (e, &(i, j)) in model.edges().iter().enumerate() {
        let t = &pairwise[e];
        let (bi, bj) = (single(i), single(j));
        for a in 0..2 {
            let row = t[a][0] + t[a][1];
            let col = t[0][a] + t[1][a];
            if (row - bi[a]).abs() > CONSISTENCY_TOL || (col - bj[a]).abs() > CONSISTENCY_TOL {
                return Err(Error::Inconsistent(format!("edge ({i}, {j}) does not marginalize to its node beliefs")));
            }
        }
        let jc = model.coupling(e);
        for a in 0..2 {
            for b in 0..2 {
                // P ln(P / Phi) with ln Phi = J x_i x_j.
                f += xlnx(t[a][b]) - t[a][b] * jc * SPIN[a] * SPIN[b];
            }
        }
    }
    for i in 0..n {
        let b = single(i);
        let th = model.field(i);
        let d = model.degree(i) as f64;
        for a in 0..2 {
            f -= b[a] * th * SPIN[a];
            f -= (d - 1.0) * xlnx(b[a]);
        }
    }
    Ok(f)
}

/// Jacobian of the normalized synchronous BP map in the coordinates
/// `m_e = mu_e(+1)` (one per directed edge, `mu_e(-1) = 1 - m_e`).
pub fn bp_jacobian(model: &PairwiseModel, mu: &[[f64; 2]]) -> DMatrix<f64> {
    let g = BpGraph::new(model);
    let ne = g.edges.len();
    let mut jac = DMatrix::zeros(ne, ne);
    for e in 0..ne {
        let (i, _) = g.edges[e];
        let jc = model.coupling(g.undirected[e]);
        let th = model.field(i);
        let phi = |a: usize, b: usize| (jc * SPIN[a] * SPIN[b] + th * SPIN[a]).exp();
        let raw = g.raw_message(model, mu, e);
        let s = raw[0] + raw[1];
        for &k in &g.incoming[e] {
            // product over the other incoming messages, per x_i
            let mut rest = [1.0f64; 2];
            for &l in &g.incoming[e] {
                if l != k {
                    rest[0] *= mu[l][0];
                    rest[1] *= mu[l][1];
                }
            }
            let mut draw = [0.0; 2];
            for (b, d) in draw.iter_mut().enumerate() {
                *d = phi(0, b) * rest[0] - phi(1, b) * rest[1];
            }
            jac[(e, k)] = (draw[0] * s - raw[0] * (draw[0] + draw[1])) / (s * s);
        }
    }
    jac
}

/// The same Jacobian by central finite differences of the BP map.
pub fn bp_jacobian_fd(model: &PairwiseModel, mu: &[[f64; 2]], h: f64) -> DMatrix<f64> {
    let g = BpGraph::new(model);
    let ne = g.edges.len();
    let mut jac = DMatrix::zeros(ne, ne);
    let mut x = mu.to_vec();
    for k in 0..ne {
        let m = mu[k][0];
        x[k] = [m + h, 1.0 - m - h];
        let (up, _) = g.step(model, &x);
        x[k] = [m - h, 1.0 - m + h];
        let (down, _) = g.step(model, &x);
        x[k] = mu[k];
        for e in 0..ne {
            jac[(e, k)] = (up[e][0] - down[e][0]) / (2.0 * h);
        }
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StabilityClass {
    Stable,
    Marginal,
    Unstable,
}

#[derive(Debug, Clone)]
pub struct Stability {
    pub spectral_radius: f64,
    pub class: StabilityClass,
    pub eigenvalues: Vec<Complex64>,
}

impl Stability {
    pub fn stable(&self) -> bool {
        self.class == StabilityClass::Stable
    }

    /// Spectral radius of the damped map `(1 - eps) BP + eps I`, whose
    /// eigenvalues are `(1 - eps) lambda + eps`.
    pub fn damped_radius(&self, eps: f64) -> f64 {
        self.eigenvalues.iter().map(|l| (l * (1.0 - eps) + eps).norm()).fold(0.0, f64::max)
    }
}

/// Eigenvalues by a real Schur decomposition with a bounded iteration count
/// (the unbounded variant can cycle forever, e.g. on the zero matrix).
fn eigenvalues(jac: DMatrix<f64>) -> Result<Vec<Complex64>> {
    if jac.iter().all(|&v| v == 0.0) {
        return Ok(vec![Complex64::default(); jac.nrows()]);
    }
    let schur = nalgebra::Schur::try_new(jac, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::InvalidOption("eigenvalue iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

fn classify_radius(r: f64) -> StabilityClass {
    if r < 1.0 - STABILITY_MARGIN {
        StabilityClass::Stable
    } else if r <= 1.0 + STABILITY_MARGIN {
        StabilityClass::Marginal
    } else {
        StabilityClass::Unstable
    }
}

/// Local stability of a fixed point of the undamped normalized BP map.
pub fn stability(model: &PairwiseModel, fp: &MessageSet) -> Result<Stability> {
    let ne = model.directed_edges().len();
    if fp.mu.len() != ne {
        return Err(Error::Dimension { expected: ne, got: fp.mu.len() });
    }
    if ne == 0 {
        return Ok(Stability { spectral_radius: 0.0, class: StabilityClass::Stable, eigenvalues: vec![] });
    }
    let jac = bp_jacobian(model, &fp.mu);
    let eigenvalues = eigenvalues(jac)?;
    let spectral_radius = eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
    Ok(Stability { spectral_radius, class: classify_radius(spectral_radius), eigenvalues })
}

/// Stability of a factor-graph fixed point under the synchronous q -> q map,
/// with the Jacobian in the coordinates `q_e(0)` taken by central
/// differences (step `1e-6`).
pub fn factor_stability(fg: &FactorGraph, fp: &FactorMessages) -> Result<Stability> {
    let g = FactorBpGraph::new(fg);
    let ne = g.edges.len();
    if fp.q.len() != ne {
        return Err(Error::Dimension { expected: ne, got: fp.q.len() });
    }
    let h = 1e-6;
    let map = |q: &[[f64; 2]]| g.var_to_factor(&g.factor_to_var(fg, q)).0;
    let mut jac = DMatrix::zeros(ne, ne);
    let mut q = fp.q.clone();
    for k in 0..ne {
        let m = fp.q[k][0];
        q[k] = [m + h, 1.0 - m - h];
        let up = map(&q);
        q[k] = [m - h, 1.0 - m + h];
        let down = map(&q);
        q[k] = fp.q[k];
        for e in 0..ne {
            jac[(e, k)] = (up[e][0] - down[e][0]) / (2.0 * h);
        }
    }
    let eigenvalues = eigenvalues(jac)?;
    let spectral_radius = eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
    Ok(Stability { spectral_radius, class: classify_radius(spectral_radius), eigenvalues })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PhaseRegion {
    I,
    II,
    III,
}

impl PhaseRegion {
    pub fn name(&self) -> &'static str {
        match self {
            Self::I => "I",
            Self::II => "II",
            Self::III => "III",
        }
    }
}

/// `p(J, d)` of the Cayley-tree phase boundary, or `None` when |J| is below
/// the critical coupling arccoth(d) and the square roots leave the domain.
pub fn phase_boundary(j: f64, d: u32) -> Option<f64> {
    let d = f64::from(d);
    let w = j.abs().tanh();
    if w <= 0.0 || d * w <= 1.0 {
        return None;
    }
    let a = ((d * w - 1.0) / (d / w - 1.0)).sqrt();
    let b = ((d - 1.0 / w) / (d - w)).sqrt();
    if !(a < 1.0 && b < 1.0) {
        return None;
    }
    let critical = (1.0 / d).atanh();
    Some(if j > critical { d * a.atanh() - b.atanh() } else { d * a.atanh() + b.atanh() })
}

/// Phase region of a uniform Ising model with branching `d`.
///
/// The coupling thresholds are the critical couplings `+-arccoth(d)`; the
/// field threshold is `p(J, d)`.
pub fn classify_region(j: f64, theta: f64, d: u32) -> PhaseRegion {
    if d < 2 {
        return PhaseRegion::III;
    }
    let Some(p) = phase_boundary(j, d) else { return PhaseRegion::III };
    let critical = (1.0 / f64::from(d)).atanh();
    if j > critical && theta.abs() <= p {
        PhaseRegion::I
    } else if j < -critical && theta.abs() < p {
        PhaseRegion::II
    } else {
        PhaseRegion::III
    }
}

/// Everything known about one fixed point.
#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub messages: MessageSet,
    pub beliefs: Vec<f64>,
    pub pairwise_beliefs: Vec<[[f64; 2]; 2]>,
    pub bethe_f: f64,
    /// `-bethe_f`, kept separately since `bethe_z` overflows for large models.
    pub bethe_log_z: f64,
    pub bethe_z: f64,
    pub spectral_radius: f64,
    pub stability: StabilityClass,
    pub stable: bool,
    pub mse_vs_exact: f64,
    pub mean_magnetization: f64,
}

/// Report for one fixed point against a precomputed exact result.
pub fn report(model: &PairwiseModel, messages: MessageSet, exact: &ExactResult) -> Result<FixedPointReport> {
    let b = beliefs(model, &messages)?;
    let pw = pairwise_beliefs(model, &messages)?;
    let bethe_f = bethe_free_energy(model, &b, &pw)?;
    let st = stability(model, &messages)?;
    Ok(FixedPointReport {
        mse_vs_exact: mse(&exact.marginals, &b)?,
        mean_magnetization: mean_magnetization(&b),
        beliefs: b,
        pairwise_beliefs: pw,
        bethe_f,
        bethe_log_z: -bethe_f,
        bethe_z: (-bethe_f).exp(),
        spectral_radius: st.spectral_radius,
        stability: st.class,
        stable: st.stable(),
        messages,
    })
}

/// One report per positive real solution of a pairwise BP system.
pub fn evaluate_fixed_points(model: &PairwiseModel, sols: &SolutionSet) -> Result<Vec<FixedPointReport>> {
    let exact = enumerate_exact(model)?;
    evaluate_with_exact(model, sols, &exact)
}

pub fn evaluate_with_exact(model: &PairwiseModel, sols: &SolutionSet, exact: &ExactResult) -> Result<Vec<FixedPointReport>> {
    sols.positive().map(|s| report(model, point_to_messages(model, &s.point)?, exact)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CombineMode {
    All,
    Stable,
    Max,
}

impl CombineMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::All => "all",
            Self::Stable => "stable",
            Self::Max => "max",
        }
    }
}

/// Combines the beliefs of several fixed points: the Bethe-Z weighted mean
/// over all or over the stable ones, or the beliefs with the largest Z.
pub fn combine_marginals(reports: &[FixedPointReport], mode: CombineMode) -> Result<Vec<f64>> {
    if reports.is_empty() {
        return Err(Error::Empty("fixed point reports"));
    }
    let chosen: Vec<&FixedPointReport> = match mode {
        CombineMode::All | CombineMode::Max => reports.iter().collect(),
        CombineMode::Stable => reports.iter().filter(|r| r.stable).collect(),
    };
    if chosen.is_empty() {
        return Err(Error::NoStableFixedPoint);
    }
    if mode == CombineMode::Max {
        let best = chosen.iter().max_by(|a, b| a.bethe_log_z.total_cmp(&b.bethe_log_z)).expect("nonempty");
        return Ok(best.beliefs.clone());
    }
    // weights relative to the largest log Z avoid overflow
    let top = chosen.iter().map(|r| r.bethe_log_z).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = chosen.iter().map(|r| (r.bethe_log_z - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let n = chosen[0].beliefs.len();
    Ok((0..n).map(|i| chosen.iter().zip(&weights).map(|(r, w)| w * r.beliefs[i]).sum::<f64>() / total).collect())
}
