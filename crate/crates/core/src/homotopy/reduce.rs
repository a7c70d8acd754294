//! Root-count-preserving simplifications applied before cell enumeration.
//!
//! **Message reduction.** In a BP system every message contributes two
//! residual equations `c_s mu_s + alpha G_s(mu) = 0` and a normalization
//! `n_0 mu_0 + n_1 mu_1 + n_c = 0`. When every `G_s` is homogeneous of the
//! same degree in each incoming message pair, the triple can be replaced by
//! the single ratio `rho = mu_0 / mu_1`:
//!
//! ```text
//! c_0 rho G_1(rho) - c_1 G_0(rho) = 0,
//! ```
//!
//! where `G(rho)` substitutes `mu_{k,0} -> rho_k`, `mu_{k,1} -> 1`. Torus
//! solutions correspond one to one (away from `n_0 rho + n_1 = 0`), and the
//! mixed volume of the reduced system equals that of the original, which is
//! also what the reduced system's BKK count reports.
//!
//! **Presolve.** An equation with support `{0, e_v}` fixes `x_v`; it is
//! substituted into the other equations. Supports are tracked as families
//! (points are kept even when substituted coefficients happen to cancel), so
//! the mixed volume is unchanged and the result is independent of the
//! parameter values.

use std::collections::BTreeMap;

use num_complex::Complex64 as C;

use super::cells::Support;
use crate::error::{Error, Result};
use crate::polysys::{MessageBlock, PolynomialSystem};

/// Equations as lists of `(coefficient, exponent vector)`.
pub type Equations = Vec<Vec<(C, Vec<u32>)>>;

#[derive(Debug, Clone)]
struct BlockData {
    block: MessageBlock,
    c: [C; 2],
    /// `G_s` with the normalizer removed, over the full variable set.
    g: [Vec<(C, Vec<u32>)>; 2],
    norm: [C; 3],
}

/// A BP system rewritten in message ratios.
#[derive(Debug, Clone)]
pub struct Reduction {
    n_full: usize,
    blocks: Vec<BlockData>,
    pub equations: Equations,
}

fn is_unit(e: &[u32], v: usize) -> bool {
    e.iter().enumerate().all(|(k, &x)| x == u32::from(k == v))
}

impl Reduction {
    /// Reduces a system with a message layout, or returns `None` when the
    /// structure does not allow it.
    pub fn new(sys: &PolynomialSystem) -> Option<Self> {
        let layout = sys.layout()?;
        let n = sys.num_vars();
        let nb = layout.blocks.len();
        if nb == 0 || 3 * nb != n {
            return None;
        }
        let mut role = vec![None; n];
        let mut eq_seen = vec![false; n];
        for (m, b) in layout.blocks.iter().enumerate() {
            for (v, r) in [(b.vars[0], 0), (b.vars[1], 1), (b.alpha, 2)] {
                if role[v].is_some() {
                    return None;
                }
                role[v] = Some((m, r));
            }
            for e in [b.residual_eqs[0], b.residual_eqs[1], b.norm_eq] {
                if eq_seen[e] {
                    return None;
                }
                eq_seen[e] = true;
            }
        }
        let eqs = sys.equations();
        let mut blocks = Vec::with_capacity(nb);
        for b in &layout.blocks {
            let mut c = [C::default(); 2];
            let mut g: [Vec<(C, Vec<u32>)>; 2] = [vec![], vec![]];
            for s in 0..2 {
                let mut found = false;
                for t in &eqs[b.residual_eqs[s]] {
                    if is_unit(&t.exps, b.vars[s]) && !found {
                        c[s] = t.coeff;
                        found = true;
                        continue;
                    }
                    if t.exps[b.alpha] != 1 {
                        return None;
                    }
                    let ok = t.exps.iter().enumerate().all(|(v, &e)| {
                        e == 0 || v == b.alpha || matches!(role[v], Some((_, r)) if r < 2)
                    });
                    if !ok {
                        return None;
                    }
                    let mut e = t.exps.clone();
                    e[b.alpha] = 0;
                    g[s].push((t.coeff, e));
                }
                if !found || g[s].is_empty() {
                    return None;
                }
            }
            // Same degree in every message pair across both G's.
            let mut deg: BTreeMap<usize, u32> = BTreeMap::new();
            for (_, e) in g[0].iter().chain(&g[1]) {
                let mut here: BTreeMap<usize, u32> = BTreeMap::new();
                for (v, &x) in e.iter().enumerate() {
                    if x > 0 {
                        *here.entry(role[v].expect("message var").0).or_default() += x;
                    }
                }
                for (&k, &d) in &here {
                    if *deg.entry(k).or_insert(d) != d {
                        return None;
                    }
                }
                if deg.keys().any(|k| !here.contains_key(k)) {
                    return None;
                }
            }
            let mut norm = [C::default(); 3];
            let ne = &eqs[b.norm_eq];
            if ne.len() != 3 {
                return None;
            }
            for t in ne {
                if is_unit(&t.exps, b.vars[0]) {
                    norm[0] = t.coeff;
                } else if is_unit(&t.exps, b.vars[1]) {
                    norm[1] = t.coeff;
                } else if t.exps.iter().all(|&x| x == 0) {
                    norm[2] = t.coeff;
                } else {
                    return None;
                }
            }
            if norm.iter().any(|x| x.norm() == 0.0) {
                return None;
            }
            blocks.push(BlockData { block: *b, c, g, norm });
        }
        // Reduced equations over rho_0..rho_{nb-1}.
        let to_rho = |e: &[u32]| -> Vec<u32> {
            let mut r = vec![0u32; nb];
            for (v, &x) in e.iter().enumerate() {
                if x > 0 {
                    if let Some((k, 0)) = role[v] {
                        r[k] += x;
                    }
                }
            }
            r
        };
        let mut equations = Vec::with_capacity(nb);
        for (m, bd) in blocks.iter().enumerate() {
            let mut eq = Vec::new();
            for (coef, e) in &bd.g[1] {
                let mut r = to_rho(e);
                r[m] += 1;
                eq.push((bd.c[0] * coef, r));
            }
            for (coef, e) in &bd.g[0] {
                eq.push((-bd.c[1] * coef, to_rho(e)));
            }
            equations.push(merge(eq));
        }
        Some(Self { n_full: n, blocks, equations })
    }

    pub fn dim(&self) -> usize {
        self.blocks.len()
    }

    /// Recovers the full point from message ratios. `None` if the point
    /// lies at infinity of the original system.
    pub fn back_map(&self, rho: &[C]) -> Option<Vec<C>> {
        let mut x = vec![C::default(); self.n_full];
        for (bd, &r) in self.blocks.iter().zip(rho) {
            let den = bd.norm[0] * r + bd.norm[1];
            if den.norm() < 1e-13 * (bd.norm[0].norm() * r.norm() + bd.norm[1].norm()) {
                return None;
            }
            let m1 = -bd.norm[2] / den;
            x[bd.block.vars[0]] = r * m1;
            x[bd.block.vars[1]] = m1;
        }
        let eval = |terms: &[(C, Vec<u32>)], x: &[C]| -> C {
            terms.iter().map(|(c, e)| e.iter().enumerate().filter(|(_, &p)| p > 0).fold(*c, |m, (v, &p)| m * x[v].powu(p))).sum()
        };
        for bd in &self.blocks {
            let g0 = eval(&bd.g[0], &x);
            let g1 = eval(&bd.g[1], &x);
            // Use the better-conditioned residual equation.
            let a0 = -bd.c[0] * x[bd.block.vars[0]];
            let a1 = -bd.c[1] * x[bd.block.vars[1]];
            let alpha = if g0.norm() * a1.norm().max(1e-300) >= g1.norm() * a0.norm().max(1e-300) && g0.norm() > 0.0 {
                a0 / g0
            } else if g1.norm() > 0.0 {
                a1 / g1
            } else {
                return None;
            };
            if !alpha.re.is_finite() || !alpha.im.is_finite() {
                return None;
            }
            x[bd.block.alpha] = alpha;
        }
        Some(x)
    }
}

fn merge(eq: Vec<(C, Vec<u32>)>) -> Vec<(C, Vec<u32>)> {
    let mut map: BTreeMap<Vec<u32>, C> = BTreeMap::new();
    for (c, e) in eq {
        *map.entry(e).or_default() += c;
    }
    map.into_iter().map(|(e, c)| (c, e)).collect()
}

/// Result of eliminating variables fixed by two-term linear equations.
#[derive(Debug, Clone)]
pub struct Presolved {
    n: usize,
    /// Original indices of the remaining variables.
    pub kept: Vec<usize>,
    /// Eliminated variables and their values.
    pub fixed: Vec<(usize, C)>,
    /// Family supports over the kept variables.
    pub supports: Vec<Support>,
    /// Coefficient per support point (may be zero after cancellation).
    pub coeffs: Vec<Vec<C>>,
}

impl Presolved {
    pub fn new(n: usize, equations: &Equations) -> Result<Self> {
        if equations.len() != n {
            return Err(Error::NotSquare { equations: equations.len(), variables: n });
        }
        let mut eqs: Vec<Option<BTreeMap<Vec<u32>, C>>> = equations
            .iter()
            .map(|eq| {
                let mut m: BTreeMap<Vec<u32>, C> = BTreeMap::new();
                for (c, e) in eq {
                    *m.entry(e.clone()).or_default() += c;
                }
                Some(m)
            })
            .collect();
        let mut alive = vec![true; n];
        let mut fixed = Vec::new();
        loop {
            let mut hit = None;
            for (k, eq) in eqs.iter().enumerate() {
                let Some(eq) = eq else { continue };
                if eq.len() != 2 {
                    continue;
                }
                let keys: Vec<&Vec<u32>> = eq.keys().collect();
                if keys[0].iter().all(|&x| x == 0) {
                    if let Some(v) = (0..n).find(|&v| is_unit(keys[1], v)) {
                        hit = Some((k, v));
                        break;
                    }
                }
            }
            let Some((k, v)) = hit else { break };
            let eq = eqs[k].take().expect("alive");
            let mut it = eq.values();
            let c0 = *it.next().expect("two terms");
            let c1 = *it.next().expect("two terms");
            if c1.norm() == 0.0 || c0.norm() == 0.0 {
                return Err(Error::InvalidModel("fixed variable is zero or undetermined".into()));
            }
            let val = -c0 / c1;
            alive[v] = false;
            fixed.push((v, val));
            for eq in eqs.iter_mut().flatten() {
                let old = std::mem::take(eq);
                for (mut e, c) in old {
                    let p = e[v];
                    e[v] = 0;
                    *eq.entry(e).or_default() += c * val.powu(p);
                }
            }
        }
        let kept: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
        let mut supports = Vec::with_capacity(kept.len());
        let mut coeffs = Vec::with_capacity(kept.len());
        for eq in eqs.into_iter().flatten() {
            let mut s = Vec::with_capacity(eq.len());
            let mut c = Vec::with_capacity(eq.len());
            for (e, v) in eq {
                s.push(kept.iter().map(|&k| e[k]).collect());
                c.push(v);
            }
            supports.push(s);
            coeffs.push(c);
        }
        Ok(Self { n, kept, fixed, supports, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.kept.len()
    }

    /// Equations over the kept variables.
    pub fn equations(&self) -> Equations {
        self.supports.iter().zip(&self.coeffs).map(|(s, c)| c.iter().copied().zip(s.iter().cloned()).collect()).collect()
    }

    /// Full point from values of the kept variables.
    pub fn expand(&self, y: &[C]) -> Vec<C> {
        let mut x = vec![C::default(); self.n];
        for (&k, &v) in self.kept.iter().zip(y) {
            x[k] = v;
        }
        for &(v, val) in &self.fixed {
            x[v] = val;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_complete, uniform_grid, PairwiseModel};
    use crate::polysys::{build_bp_system, max_residual};

    fn c(x: f64) -> C {
        C::new(x, 0.0)
    }

    #[test]
    fn reduction_applies_to_bp_systems() {
        let m = uniform_grid(3, 3, 1.0, 0.5).unwrap();
        let r = Reduction::new(&build_bp_system(&m)).unwrap();
        assert_eq!(r.dim(), 24);
        let k4 = build_complete(4, 1.0, 0.5).unwrap();
        assert_eq!(Reduction::new(&build_bp_system(&k4)).unwrap().dim(), 12);
    }

    #[test]
    fn back_map_solves_chain() {
        // On a chain BP is exact and the unique fixed point has explicit
        // messages; check the reduced system vanishes at its ratios and the
        // back-mapped point solves the full system.
        let m = PairwiseModel::new(3, &[(0, 1, 0.8), (1, 2, -0.5)], &[0.3, -0.2, 0.1]).unwrap();
        let sys = build_bp_system(&m);
        let run = crate::bp::run_bp(&m, &Default::default()).unwrap();
        let x: Vec<C> = crate::polysys::messages_to_point(&run.final_messages);
        let r = Reduction::new(&sys).unwrap();
        let rho: Vec<C> = r.blocks.iter().map(|b| x[b.block.vars[0]] / x[b.block.vars[1]]).collect();
        for eq in &r.equations {
            let v: C = eq.iter().map(|(cf, e)| e.iter().zip(&rho).fold(*cf, |a, (&p, &y)| a * y.powu(p))).sum();
            assert!(v.norm() < 1e-9);
        }
        let back = r.back_map(&rho).unwrap();
        assert!(max_residual(&sys, &back).unwrap() < 1e-9);
    }

    #[test]
    fn presolve_eliminates_chain() {
        // x0 = 2; x1 * x0 - 3 = 0 -> x1 = 1.5.
        let eqs = vec![vec![(c(1.0), vec![1, 0]), (c(-2.0), vec![0, 0])], vec![(c(1.0), vec![1, 1]), (c(-3.0), vec![0, 0])]];
        let p = Presolved::new(2, &eqs).unwrap();
        assert_eq!(p.dim(), 0);
        let x = p.expand(&[]);
        assert!((x[0] - c(2.0)).norm() < 1e-15 && (x[1] - c(1.5)).norm() < 1e-15);
    }

    #[test]
    fn presolve_keeps_cancelled_points() {
        // x0 = 1 makes the x0 y and -y terms cancel numerically, but the
        // family support keeps both exponents.
        let eqs = vec![
            vec![(c(1.0), vec![1, 0]), (c(-1.0), vec![0, 0])],
            vec![(c(1.0), vec![1, 1]), (c(-1.0), vec![0, 1]), (c(1.0), vec![0, 2]), (c(-4.0), vec![0, 0])],
        ];
        let p = Presolved::new(2, &eqs).unwrap();
        assert_eq!(p.dim(), 1);
        assert_eq!(p.supports[0].len(), 3);
    }
}
