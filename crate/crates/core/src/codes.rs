//! The (7,4) Hamming code over a binary symmetric channel, decoded by exact
//! enumeration, by BP, and by enumerating all BP fixed points.

use serde::Serialize;

use crate::analysis::factor_stability;
use crate::bp::{factor_beliefs, run_factor_bp, BpOptions};
use crate::error::{Error, Result};
use crate::exact::enumerate_exact_factor;
use crate::homotopy::{SolveOptions, Solver};
use crate::model::{Factor, FactorGraph};
use crate::polysys::{build_factor_bp_system, point_to_factor_messages};

/// Parity checks of the code, 0-based variable indices.
pub const PARITY_CHECKS: [[usize; 4]; 3] = [[0, 1, 2, 4], [1, 2, 3, 5], [0, 2, 3, 6]];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BscChannel {
    pub epsilon: f64,
}

impl BscChannel {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&epsilon) {
            return Err(Error::InvalidOption(format!("crossover probability {epsilon} outside [0, 0.5]")));
        }
        Ok(Self { epsilon })
    }

    /// `P(y | x)` as a table over x in {0, 1}.
    pub fn likelihood(&self, y: u8) -> [f64; 2] {
        let e = self.epsilon;
        if y == 0 {
            [1.0 - e, e]
        } else {
            [e, 1.0 - e]
        }
    }
}

#[derive(Debug, Clone)]
pub struct CodeInstance {
    pub received: [u8; 7],
    pub channel: BscChannel,
    pub graph: FactorGraph,
}

/// Factor graph of the posterior of the transmitted word given `y`: seven
/// channel factors and three even-parity indicators. Zero entries of the
/// indicators are replaced by `soft` (0 keeps them hard).
pub fn build_hamming_soft(y: [u8; 7], eps: f64, soft: f64) -> Result<CodeInstance> {
    if y.iter().any(|&b| b > 1) {
        return Err(Error::InvalidOption("received word must be binary".into()));
    }
    let channel = BscChannel::new(eps)?;
    let mut factors: Vec<Factor> =
        (0..7).map(|i| Factor { vars: vec![i], table: channel.likelihood(y[i]).to_vec() }).collect();
    for check in PARITY_CHECKS {
        let table = (0..16u32).map(|idx| if idx.count_ones() % 2 == 0 { 1.0 } else { soft }).collect();
        factors.push(Factor { vars: check.to_vec(), table });
    }
    Ok(CodeInstance { received: y, channel, graph: FactorGraph::new(7, factors)? })
}

pub fn build_hamming(y: [u8; 7], eps: f64) -> Result<CodeInstance> {
    build_hamming_soft(y, eps, 0.0)
}

/// Received word with a single flipped bit (1-based position) of the
/// all-zeros codeword.
pub fn flipped_word(position: usize) -> Result<[u8; 7]> {
    if !(1..=7).contains(&position) {
        return Err(Error::InvalidOption(format!("flip position {position} outside 1..=7")));
    }
    let mut y = [0u8; 7];
    y[position - 1] = 1;
    Ok(y)
}

/// The 16 codewords.
pub fn codewords() -> Vec<[u8; 7]> {
    (0..128u32)
        .map(|w| std::array::from_fn(|i| ((w >> i) & 1) as u8))
        .filter(|x: &[u8; 7]| PARITY_CHECKS.iter().all(|c| c.iter().map(|&i| x[i]).sum::<u8>() % 2 == 0))
        .collect()
}

/// `P(X_bit = 0 | y)` summed over codewords weighted by channel likelihood.
/// Independent of the factor graph; serves as its oracle.
pub fn codeword_posterior(y: [u8; 7], eps: f64, bit: usize) -> Result<f64> {
    let ch = BscChannel::new(eps)?;
    let (mut zero, mut total) = (0.0, 0.0);
    for x in codewords() {
        let w: f64 = (0..7).map(|i| ch.likelihood(y[i])[usize::from(x[i])]).product();
        total += w;
        if x[bit] == 0 {
            zero += w;
        }
    }
    Ok(zero / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecodeMethod {
    Exact,
    Bp,
    Nphc,
}

impl DecodeMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Bp => "bp",
            Self::Nphc => "nphc",
        }
    }
}

impl std::str::FromStr for DecodeMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "bp" => Ok(Self::Bp),
            "nphc" => Ok(Self::Nphc),
            _ => Err(Error::InvalidOption(format!("unknown decoding method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecodePoint {
    pub epsilon: f64,
    pub p_bit_zero: f64,
    /// BP status name, for the BP method.
    pub bp_status: Option<String>,
    /// Number of positive real fixed points, for the NPHC method.
    pub fixed_points: Option<usize>,
    /// Whether every fixed point found is stable, for the NPHC method.
    pub stable: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecodeCurve {
    pub flip_position: usize,
    pub method: DecodeMethod,
    pub points: Vec<DecodePoint>,
}

impl DecodeCurve {
    /// Largest grid epsilon at which the flipped bit is decoded correctly.
    pub fn threshold(&self) -> Option<f64> {
        self.points.iter().filter(|p| p.p_bit_zero > 0.5).map(|p| p.epsilon).fold(None, |a, e| Some(a.map_or(e, |a: f64| a.max(e))))
    }
}

/// The default grid 0.01, 0.02, ..., 0.49.
pub fn default_eps_grid() -> Vec<f64> {
    (1..50).map(|k| f64::from(k) / 100.0).collect()
}

/// Posterior probability that the flipped bit was a 0, per epsilon.
pub fn decode_threshold(flip_position: usize, method: DecodeMethod, eps_grid: &[f64], seed: u64) -> Result<DecodeCurve> {
    let y = flipped_word(flip_position)?;
    let bit = flip_position - 1;
    let solver = Solver::default();
    let mut points = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        if method != DecodeMethod::Exact && !(eps > 0.0 && eps < 0.5) {
            return Err(Error::InvalidOption(format!("epsilon {eps} must lie in (0, 0.5) for iterative decoding")));
        }
        let code = build_hamming(y, eps)?;
        let point = match method {
            DecodeMethod::Exact => {
                let ex = enumerate_exact_factor(&code.graph)?;
                DecodePoint { epsilon: eps, p_bit_zero: ex.marginals[bit][0], bp_status: None, fixed_points: None, stable: None }
            }
            DecodeMethod::Bp => {
                let run = run_factor_bp(&code.graph, &BpOptions::default())?;
                let b = factor_beliefs(&code.graph, &run.final_messages);
                DecodePoint {
                    epsilon: eps,
                    p_bit_zero: b[bit][0],
                    bp_status: Some(run.status.name()),
                    fixed_points: None,
                    stable: None,
                }
            }
            DecodeMethod::Nphc => {
                let sys = build_factor_bp_system(&code.graph)?;
                let sols = solver.solve(&sys, seed, &SolveOptions::default())?;
                let mut best: Option<(f64, f64)> = None;
                let mut all_stable = true;
                for s in sols.positive() {
                    let m = point_to_factor_messages(&code.graph, &s.point)?;
                    let st = factor_stability(&code.graph, &m)?;
                    all_stable &= st.stable();
                    let p = factor_beliefs(&code.graph, &m)[bit][0];
                    // with several fixed points report the most stable one
                    if best.map_or(true, |(r, _)| st.spectral_radius < r) {
                        best = Some((st.spectral_radius, p));
                    }
                }
                let (_, p) = best.ok_or(Error::Empty("positive fixed points"))?;
                DecodePoint {
                    epsilon: eps,
                    p_bit_zero: p,
                    bp_status: None,
                    fixed_points: Some(sols.positive_real.len()),
                    stable: Some(all_stable),
                }
            }
        };
        points.push(point);
    }
    Ok(DecodeCurve { flip_position, method, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_codewords() {
        let cw = codewords();
        assert_eq!(cw.len(), 16);
        assert!(cw.contains(&[0; 7]));
    }

    #[test]
    fn graph_shape() {
        let c = build_hamming(flipped_word(1).unwrap(), 0.1).unwrap();
        let f = c.graph.factors();
        assert_eq!(f.len(), 10);
        assert_eq!(f[7].vars, vec![0, 1, 2, 4]);
        assert_eq!(f[0].table, vec![0.9, 0.1][..].iter().rev().copied().collect::<Vec<_>>());
        assert_eq!(f[1].table, vec![0.9, 0.1]);
    }

    #[test]
    fn bad_inputs() {
        assert!(flipped_word(0).is_err());
        assert!(build_hamming([0; 7], 0.7).is_err());
        assert!("viterbi".parse::<DecodeMethod>().is_err());
    }
}
