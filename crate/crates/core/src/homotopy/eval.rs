//! Sparse evaluation of polynomial systems and their Jacobians, plus the
//! homotopies tracked by the path tracker.

use std::cell::RefCell;

use num_complex::Complex64 as C;

use super::linalg::Mat;
use crate::polysys::Term;

#[derive(Debug, Clone)]
struct SparseTerm {
    coeff: C,
    vars: Vec<(usize, u32)>,
}

/// A polynomial system compiled for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CompiledSystem {
    n: usize,
    eqs: Vec<Vec<SparseTerm>>,
}

fn powu(x: C, e: u32) -> C {
    match e {
        0 => C::new(1.0, 0.0),
        1 => x,
        2 => x * x,
        _ => x.powu(e),
    }
}

impl CompiledSystem {
    pub fn new(n: usize, equations: &[Vec<Term>]) -> Self {
        let eqs = equations
            .iter()
            .map(|eq| {
                eq.iter()
                    .map(|t| SparseTerm {
                        coeff: t.coeff,
                        vars: t.exps.iter().enumerate().filter(|&(_, &e)| e > 0).map(|(v, &e)| (v, e)).collect(),
                    })
                    .collect()
            })
            .collect();
        Self { n, eqs }
    }

    /// Builds from `(coefficient, exponent vector)` lists.
    pub fn from_parts(n: usize, equations: &[Vec<(C, Vec<u32>)>]) -> Self {
        let eqs: Vec<Vec<Term>> =
            equations.iter().map(|eq| eq.iter().map(|(c, e)| Term { coeff: *c, exps: e.clone() }).collect()).collect();
        Self::new(n, &eqs)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn num_equations(&self) -> usize {
        self.eqs.len()
    }

    /// Multiplies every equation by a real factor.
    pub fn scale_rows(&mut self, factors: &[f64]) {
        for (eq, &s) in self.eqs.iter_mut().zip(factors) {
            for t in eq.iter_mut() {
                t.coeff *= s;
            }
        }
    }

    /// Largest coefficient magnitude per equation.
    pub fn row_max(&self) -> Vec<f64> {
        self.eqs.iter().map(|eq| eq.iter().map(|t| t.coeff.norm()).fold(0.0, f64::max)).collect()
    }

    pub fn eval(&self, x: &[C], f: &mut [C]) {
        for (k, eq) in self.eqs.iter().enumerate() {
            let mut s = C::new(0.0, 0.0);
            for t in eq {
                let mut m = t.coeff;
                for &(v, e) in &t.vars {
                    m *= powu(x[v], e);
                }
                s += m;
            }
            f[k] = s;
        }
    }

    /// Largest `|f_k(x)| / sum_t |c_t x^a_t|`: the residual relative to the
    /// size of the terms that cancel, i.e. a backward error.
    pub fn backward_error(&self, x: &[C]) -> f64 {
        self.eqs
            .iter()
            .map(|eq| {
                let (mut s, mut size) = (C::new(0.0, 0.0), 0.0);
                for t in eq {
                    let m = t.vars.iter().fold(t.coeff, |m, &(v, e)| m * powu(x[v], e));
                    s += m;
                    size += m.norm();
                }
                if size > 0.0 {
                    s.norm() / size
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// Smallest over largest singular value of the Jacobian in logarithmic
    /// coordinates with rows scaled by their term sizes. Near zero at
    /// singular or non-isolated solutions, independent of how the
    /// variables and equations happen to be scaled.
    pub fn scaled_inverse_condition(&self, x: &[C]) -> f64 {
        let n = self.n;
        let mut f = vec![C::default(); self.eqs.len()];
        let mut jac = Mat::zeros(n);
        self.eval_jac(x, &mut f, &mut jac);
        let mut m = jac.to_nalgebra();
        for (k, eq) in self.eqs.iter().enumerate() {
            let size: f64 = eq.iter().map(|t| t.vars.iter().fold(t.coeff, |m, &(v, e)| m * powu(x[v], e)).norm()).sum();
            for v in 0..n {
                m[(k, v)] *= x[v].norm() / size.max(f64::MIN_POSITIVE);
            }
        }
        let sv = m.singular_values();
        let max = sv.iter().copied().fold(0.0, f64::max);
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if max > 0.0 {
            min / max
        } else {
            0.0
        }
    }

    /// Values and Jacobian (`jac[(k, v)] = d f_k / d x_v`).
    pub fn eval_jac(&self, x: &[C], f: &mut [C], jac: &mut Mat) {
        jac.fill_zero();
        let mut pw: Vec<C> = Vec::with_capacity(8);
        for (k, eq) in self.eqs.iter().enumerate() {
            let mut s = C::new(0.0, 0.0);
            for t in eq {
                pw.clear();
                pw.extend(t.vars.iter().map(|&(v, e)| powu(x[v], e)));
                let mut m = t.coeff;
                for p in &pw {
                    m *= p;
                }
                s += m;
                for (a, &(v, e)) in t.vars.iter().enumerate() {
                    let mut d = t.coeff * f64::from(e) * powu(x[v], e - 1);
                    for (b, p) in pw.iter().enumerate() {
                        if a != b {
                            d *= p;
                        }
                    }
                    jac[(k, v)] += d;
                }
            }
            f[k] = s;
        }
    }
}

/// A square system that can be evaluated with its Jacobian.
pub trait SystemEval: Send + Sync {
    fn dim(&self) -> usize;
    fn eval_jac(&self, x: &[C], f: &mut [C], jac: &mut Mat);
}

impl SystemEval for CompiledSystem {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval_jac(&self, x: &[C], f: &mut [C], jac: &mut Mat) {
        CompiledSystem::eval_jac(self, x, f, jac)
    }
}

/// Sparse monomial with integer (possibly negative) exponents.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub vars: Vec<(usize, i64)>,
}

impl Monomial {
    pub fn from_dense(e: &[i64]) -> Self {
        Self { vars: e.iter().enumerate().filter(|&(_, &k)| k != 0).map(|(v, &k)| (v, k)).collect() }
    }

    pub fn eval(&self, x: &[C]) -> C {
        self.vars.iter().fold(C::new(1.0, 0.0), |m, &(v, k)| m * x[v].powi(k as i32))
    }
}

/// System whose equation k is `x^shift_k * prod_g (x^g - c_g)`.
#[derive(Debug, Clone)]
pub struct ProductSystem {
    pub n: usize,
    pub shifts: Vec<Monomial>,
    pub factors: Vec<Vec<(Monomial, C)>>,
}

impl SystemEval for ProductSystem {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval_jac(&self, x: &[C], f: &mut [C], jac: &mut Mat) {
        jac.fill_zero();
        let zero = C::new(0.0, 0.0);
        let mut mons = [C::default(); 32];
        let mut vals = [C::default(); 32];
        for k in 0..self.factors.len() {
            let fac = &self.factors[k];
            let nf = fac.len();
            for (a, (g, c)) in fac.iter().enumerate() {
                mons[a] = g.eval(x);
                vals[a] = mons[a] - c;
            }
            let vals = &vals[..nf];
            let shift = self.shifts[k].eval(x);
            let prod: C = vals.iter().product();
            f[k] = shift * prod;
            // d(x^m)/dx_v = m_v x^m / x_v, written with a direct power to
            // stay finite near x_v = 0.
            let dmon = |mon: &Monomial, v: usize, k: i64| -> C {
                let mut d = C::new(k as f64, 0.0) * x[v].powi((k - 1) as i32);
                for &(w, kw) in &mon.vars {
                    if w != v {
                        d *= x[w].powi(kw as i32);
                    }
                }
                d
            };
            for &(v, kv) in &self.shifts[k].vars {
                jac[(k, v)] += dmon(&self.shifts[k], v, kv) * prod;
            }
            for (a, (g, _)) in fac.iter().enumerate() {
                let mut others = shift;
                for (b, val) in vals.iter().enumerate() {
                    if a != b {
                        others *= val;
                    }
                }
                if others == zero {
                    continue;
                }
                for &(v, kv) in &g.vars {
                    jac[(k, v)] += others * dmon(g, v, kv);
                }
            }
        }
    }
}

/// A homotopy H(x, tau) tracked in a real parameter tau.
pub trait Homotopy: Send + Sync {
    fn dim(&self) -> usize;
    /// Fills `h = H(x, tau)`, `hx = dH/dx` and `ht = dH/dtau`.
    fn eval(&self, x: &[C], tau: f64, h: &mut [C], hx: &mut Mat, ht: &mut [C]);
}

thread_local! {
    static SCRATCH: RefCell<(Vec<C>, Mat)> = RefCell::new((vec![], Mat::zeros(0)));
}

/// `H(x, t) = (1 - t) * gamma * G(x) + t * F(x)` for t in [0, 1].
pub struct LinearHomotopy<'a> {
    pub start: &'a dyn SystemEval,
    pub target: &'a dyn SystemEval,
    pub gamma: C,
}

impl Homotopy for LinearHomotopy<'_> {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn eval(&self, x: &[C], t: f64, h: &mut [C], hx: &mut Mat, ht: &mut [C]) {
        let n = self.dim();
        SCRATCH.with(|cell| {
            let mut scratch = cell.borrow_mut();
            let (g, gj) = &mut *scratch;
            if gj.n() != n {
                *g = vec![C::default(); n];
                *gj = Mat::zeros(n);
            }
            self.start.eval_jac(x, g, gj);
            self.target.eval_jac(x, h, hx);
            let a = self.gamma * (1.0 - t);
            for k in 0..n {
                ht[k] = h[k] - self.gamma * g[k];
                h[k] = a * g[k] + t * h[k];
            }
            hx.scale(C::new(t, 0.0));
            hx.add_scaled(gj, a);
        });
    }
}

/// Phase-one polyhedral homotopy of one mixed cell in the coordinates
/// y = x t^(-beta), tracked in s = ln t from a negative start value to 0:
/// `H_k(y, s) = sum_a c_a y^a exp(s * e_a)`, where `e_a >= 0` are the
/// lifted inner products shifted by their per-equation minimum (zero on the
/// cell's pair) and rescaled so the smallest positive one is 1.
pub struct PolyhedralHomotopy<'a> {
    pub system: &'a CompiledSystem,
    /// Per equation, per term (same order as the compiled system).
    pub exponents: Vec<Vec<f64>>,
}

impl Homotopy for PolyhedralHomotopy<'_> {
    fn dim(&self) -> usize {
        self.system.n
    }

    fn eval(&self, x: &[C], s: f64, h: &mut [C], hx: &mut Mat, ht: &mut [C]) {
        hx.fill_zero();
        let mut pw: Vec<C> = Vec::with_capacity(8);
        for (k, eq) in self.system.eqs.iter().enumerate() {
            let mut sum = C::new(0.0, 0.0);
            let mut dsum = C::new(0.0, 0.0);
            for (t, &e) in eq.iter().zip(&self.exponents[k]) {
                let w = if e == 0.0 { 1.0 } else { (s * e).exp() };
                if w == 0.0 {
                    continue;
                }
                let c = t.coeff * w;
                pw.clear();
                pw.extend(t.vars.iter().map(|&(v, p)| powu(x[v], p)));
                let mut m = c;
                for p in &pw {
                    m *= p;
                }
                sum += m;
                dsum += m * e;
                for (a, &(v, p)) in t.vars.iter().enumerate() {
                    let mut d = c * f64::from(p) * powu(x[v], p - 1);
                    for (b, q) in pw.iter().enumerate() {
                        if a != b {
                            d *= q;
                        }
                    }
                    hx[(k, v)] += d;
                }
            }
            h[k] = sum;
            ht[k] = dsum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let sys = CompiledSystem::from_parts(
            2,
            &[
                vec![(c(1.0, 0.5), vec![2, 1]), (c(-2.0, 0.0), vec![0, 3]), (c(0.3, 0.0), vec![0, 0])],
                vec![(c(0.7, -1.0), vec![1, 1]), (c(1.0, 0.0), vec![3, 0])],
            ],
        );
        let x = [c(0.4, -0.2), c(-1.1, 0.3)];
        let mut f = [C::default(); 2];
        let mut j = Mat::zeros(2);
        sys.eval_jac(&x, &mut f, &mut j);
        let h = 1e-7;
        for v in 0..2 {
            let mut xp = x;
            xp[v] += h;
            let mut fp = [C::default(); 2];
            sys.eval(&xp, &mut fp);
            for k in 0..2 {
                assert!(((fp[k] - f[k]) / h - j[(k, v)]).norm() < 1e-5);
            }
        }
    }

    #[test]
    fn product_jacobian_matches_expanded() {
        // (x y - 2)(x - 3) expanded: x^2 y - 3 x y - 2 x + 6; second eq y - 1.
        let prod = ProductSystem {
            n: 2,
            shifts: vec![Monomial { vars: vec![] }, Monomial { vars: vec![] }],
            factors: vec![
                vec![(Monomial { vars: vec![(0, 1), (1, 1)] }, c(2.0, 0.0)), (Monomial { vars: vec![(0, 1)] }, c(3.0, 0.0))],
                vec![(Monomial { vars: vec![(1, 1)] }, c(1.0, 0.0))],
            ],
        };
        let exp = CompiledSystem::from_parts(
            2,
            &[
                vec![(c(1.0, 0.0), vec![2, 1]), (c(-3.0, 0.0), vec![1, 1]), (c(-2.0, 0.0), vec![1, 0]), (c(6.0, 0.0), vec![0, 0])],
                vec![(c(1.0, 0.0), vec![0, 1]), (c(-1.0, 0.0), vec![0, 0])],
            ],
        );
        let x = [c(0.3, 0.9), c(-0.5, 0.2)];
        let (mut f1, mut f2) = ([C::default(); 2], [C::default(); 2]);
        let (mut j1, mut j2) = (Mat::zeros(2), Mat::zeros(2));
        SystemEval::eval_jac(&prod, &x, &mut f1, &mut j1);
        exp.eval_jac(&x, &mut f2, &mut j2);
        for k in 0..2 {
            assert!((f1[k] - f2[k]).norm() < 1e-12);
            for v in 0..2 {
                assert!((j1[(k, v)] - j2[(k, v)]).norm() < 1e-12);
            }
        }
    }
}
