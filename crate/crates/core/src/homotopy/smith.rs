//! Integer linear algebra: exact determinants, unimodular diagonalization
//! and closed-form solution of binomial systems.

use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Exact determinant by fraction-free (Bareiss) elimination.
pub fn det_i64(rows: &[Vec<i64>]) -> Result<i128> {
    let n = rows.len();
    if n == 0 {
        return Ok(1);
    }
    let mut m: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&x| i128::from(x)).collect()).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if m[k][k] == 0 {
            match (k + 1..n).find(|&r| m[r][k] != 0) {
                Some(r) => {
                    m.swap(k, r);
                    sign = -sign;
                }
                None => return Ok(0),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = m[i][j]
                    .checked_mul(m[k][k])
                    .and_then(|a| m[i][k].checked_mul(m[k][j]).and_then(|b| a.checked_sub(b)))
                    .ok_or(Error::Overflow("determinant"))?;
                m[i][j] = v / prev;
            }
            m[i][k] = 0;
        }
        prev = m[k][k];
    }
    Ok(sign * m[n - 1][n - 1])
}

/// Unimodular diagonalization `U A V = D` of a square integer matrix.
///
/// `D` is diagonal but the divisibility chain of the Smith form is not
/// enforced; `prod |d_i| = |det A|` either way, which is all the binomial
/// solver needs.
#[derive(Debug, Clone)]
pub struct Diagonalization {
    pub u: Vec<Vec<i128>>,
    pub v: Vec<Vec<i128>>,
    pub d: Vec<i128>,
}

pub fn diagonalize(a: &[Vec<i64>]) -> Result<Diagonalization> {
    let n = a.len();
    let mut m: Vec<Vec<i128>> = a.iter().map(|r| r.iter().map(|&x| i128::from(x)).collect()).collect();
    let id = |n: usize| -> Vec<Vec<i128>> { (0..n).map(|i| (0..n).map(|j| i128::from(i == j)).collect()).collect() };
    let mut u = id(n);
    let mut v = id(n);
    let ovf = || Error::Overflow("diagonalization");
    for t in 0..n {
        loop {
            // Smallest nonzero entry of the trailing block becomes the pivot.
            let mut best: Option<(usize, usize)> = None;
            for i in t..n {
                for j in t..n {
                    if m[i][j] != 0 && best.map_or(true, |(bi, bj)| m[i][j].abs() < m[bi][bj].abs()) {
                        best = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = best else {
                return Err(Error::InvalidModel("singular exponent matrix".into()));
            };
            m.swap(t, pi);
            u.swap(t, pi);
            for row in m.iter_mut() {
                row.swap(t, pj);
            }
            for row in v.iter_mut() {
                row.swap(t, pj);
            }
            let p = m[t][t];
            let mut clean = true;
            for i in t + 1..n {
                let q = m[i][t] / p;
                if q != 0 {
                    for j in 0..n {
                        m[i][j] = m[i][j].checked_sub(q.checked_mul(m[t][j]).ok_or_else(ovf)?).ok_or_else(ovf)?;
                        u[i][j] = u[i][j].checked_sub(q.checked_mul(u[t][j]).ok_or_else(ovf)?).ok_or_else(ovf)?;
                    }
                }
                clean &= m[i][t] == 0;
            }
            for j in t + 1..n {
                let q = m[t][j] / p;
                if q != 0 {
                    for i in 0..n {
                        m[i][j] = m[i][j].checked_sub(q.checked_mul(m[i][t]).ok_or_else(ovf)?).ok_or_else(ovf)?;
                        v[i][j] = v[i][j].checked_sub(q.checked_mul(v[i][t]).ok_or_else(ovf)?).ok_or_else(ovf)?;
                    }
                }
                clean &= m[t][j] == 0;
            }
            if clean {
                break;
            }
        }
    }
    let d = (0..n).map(|i| m[i][i]).collect();
    Ok(Diagonalization { u, v, d })
}

/// All `|det A|` solutions in the torus of `x^{a_k} = b_k`, k = 1..n, where
/// `a_k` are the rows of `a`. Each is Newton-polished on the relative
/// residual `x^{a_k} / b_k - 1`.
pub fn solve_binomial(a: &[Vec<i64>], b: &[C]) -> Result<Vec<Vec<C>>> {
    let n = a.len();
    if b.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension { expected: n, got: b.len() });
    }
    if b.iter().any(|c| c.norm() == 0.0 || !c.norm().is_finite()) {
        return Err(Error::InvalidModel("binomial right-hand side must be nonzero".into()));
    }
    if n == 0 {
        return Ok(vec![vec![]]);
    }
    let dg = diagonalize(a)?;
    let logb: Vec<C> = b.iter().map(|c| c.ln()).collect();
    let rhs: Vec<C> = (0..n).map(|i| (0..n).map(|k| logb[k] * dg.u[i][k] as f64).sum()).collect();
    let counts: Vec<u64> = dg.d.iter().map(|d| d.unsigned_abs() as u64).collect();
    let total: u64 = counts.iter().product();
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![0u64; n];
    for _ in 0..total {
        let w: Vec<C> = (0..n).map(|i| (rhs[i] + C::new(0.0, 2.0 * PI * idx[i] as f64)) / dg.d[i] as f64).collect();
        let mut x: Vec<C> = (0..n).map(|j| (0..n).map(|i| w[i] * dg.v[j][i] as f64).sum::<C>().exp()).collect();
        polish_binomial(a, b, &mut x);
        out.push(x);
        for i in 0..n {
            idx[i] += 1;
            if idx[i] < counts[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    Ok(out)
}

fn mono(row: &[i64], x: &[C]) -> C {
    row.iter().zip(x).filter(|(&e, _)| e != 0).fold(C::new(1.0, 0.0), |m, (&e, xi)| m * xi.powi(e as i32))
}

/// Largest relative residual `|x^{a_k} / b_k - 1|`.
pub fn binomial_residual(a: &[Vec<i64>], b: &[C], x: &[C]) -> f64 {
    a.iter().zip(b).map(|(r, bk)| (mono(r, x) / bk - 1.0).norm()).fold(0.0, f64::max)
}

fn polish_binomial(a: &[Vec<i64>], b: &[C], x: &mut [C]) {
    let n = a.len();
    for _ in 0..4 {
        if binomial_residual(a, b, x) < 1e-15 {
            return;
        }
        let mut jac = DMatrix::<C>::zeros(n, n);
        let mut f = nalgebra::DVector::<C>::zeros(n);
        for k in 0..n {
            let m = mono(&a[k], x) / b[k];
            f[k] = -(m - 1.0);
            for j in 0..n {
                if a[k][j] != 0 {
                    jac[(k, j)] = m * a[k][j] as f64 / x[j];
                }
            }
        }
        match jac.lu().solve(&f) {
            Some(dx) => x.iter_mut().zip(dx.iter()).for_each(|(xi, d)| *xi += d),
            None => return,
        }
    }
}
