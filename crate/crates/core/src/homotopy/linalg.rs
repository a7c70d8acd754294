//! Dense square complex matrices for the tracker's inner loop.
//!
//! Row-major storage and an in-place LU solve with partial pivoting; the
//! tracker factors a fresh small Jacobian several times per step, so this
//! avoids the allocation and generic overhead of a general-purpose library.

use std::ops::{Index, IndexMut};

use num_complex::Complex64 as C;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    n: usize,
    data: Vec<C>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![C::default(); n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(C::default());
    }

    pub fn scale(&mut self, s: C) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Mat, s: C) {
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += s * b);
    }

    pub fn copy_from(&mut self, other: &Mat) {
        self.data.copy_from_slice(&other.data);
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<C> {
        nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    /// Solves `self * x = b` in place (`b` becomes `x`), destroying the
    /// matrix. Returns false for a numerically singular matrix.
    pub fn solve_in_place(&mut self, b: &mut [C]) -> bool {
        let n = self.n;
        let a = &mut self.data;
        for k in 0..n {
            let (mut p, mut best) = (k, a[k * n + k].norm_sqr());
            for r in k + 1..n {
                let v = a[r * n + k].norm_sqr();
                if v > best {
                    p = r;
                    best = v;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return false;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                b.swap(k, p);
            }
            let inv = 1.0 / a[k * n + k];
            for r in k + 1..n {
                let f = a[r * n + k] * inv;
                if f == C::default() {
                    continue;
                }
                a[r * n + k] = f;
                let (top, bottom) = a.split_at_mut(r * n);
                let pivot_row = &top[k * n + k + 1..k * n + n];
                for (x, y) in bottom[k + 1..n].iter_mut().zip(pivot_row) {
                    *x -= f * y;
                }
                let bk = b[k];
                b[r] -= f * bk;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..n {
                s -= a[k * n + j] * b[j];
            }
            b[k] = s / a[k * n + k];
        }
        b.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = C;
    fn index(&self, (r, c): (usize, usize)) -> &C {
        &self.data[r * self.n + c]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C {
        &mut self.data[r * self.n + c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_nalgebra(vals in proptest::collection::vec(-3.0f64..3.0, 2 * 25 + 10)) {
            let n = 5;
            let mut m = Mat::zeros(n);
            for r in 0..n {
                for c in 0..n {
                    m[(r, c)] = C::new(vals[2 * (r * n + c)], vals[2 * (r * n + c) + 1]);
                }
            }
            let b: Vec<C> = (0..n).map(|i| C::new(vals[50 + 2 * i], vals[51 + 2 * i])).collect();
            let reference = m.to_nalgebra().lu().solve(&nalgebra::DVector::from_vec(b.clone()));
            let mut x = b.clone();
            let ok = m.clone().solve_in_place(&mut x);
            if let Some(r) = reference {
                prop_assume!(ok);
                let scale = r.iter().map(|c| c.norm()).fold(1.0, f64::max);
                for i in 0..n {
                    prop_assert!((x[i] - r[i]).norm() < 1e-8 * scale);
                }
            }
        }
    }

    #[test]
    fn singular_detected() {
        let mut m = Mat::zeros(2);
        m[(0, 0)] = C::new(1.0, 0.0);
        m[(0, 1)] = C::new(2.0, 0.0);
        m[(1, 0)] = C::new(2.0, 0.0);
        m[(1, 1)] = C::new(4.0, 0.0);
        let mut b = vec![C::new(1.0, 0.0); 2];
        assert!(!m.solve_in_place(&mut b));
    }
}
