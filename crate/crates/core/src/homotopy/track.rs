//! Predictor-corrector path tracking.

use num_complex::Complex64 as C;
use serde::Serialize;

use super::eval::Homotopy;
use super::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PathStatus {
    Success,
    Diverged,
    Singular,
    StepLimit,
}

impl PathStatus {
    pub fn name(self) -> &'static str {
        match self {
            PathStatus::Success => "success",
            PathStatus::Diverged => "diverged",
            PathStatus::Singular => "singular",
            PathStatus::StepLimit => "step_limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub endpoint: Vec<C>,
    pub status: PathStatus,
    pub final_residual: f64,
    pub steps: usize,
    /// The path's end behaviour was determined: always true for `Success`
    /// and `Diverged`; for `Singular` it means the path converged to a
    /// singular solution rather than the tracker giving up.
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOptions {
    /// Initial step as a fraction of the parameter interval.
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
    /// Relative Newton update the corrector must reach.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub grow_after: usize,
    pub growth: f64,
    pub divergence_bound: f64,
    /// Residual the final polish must reach for `Success`.
    pub residual_tol: f64,
    /// Classify paths heading to infinity or to singular endpoints before
    /// the end of the interval. Pointless when every endpoint is known to
    /// be finite and regular.
    pub endgame: bool,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.01,
            max_step: 0.1,
            min_step: 1e-13,
            max_steps: 50_000,
            newton_tol: 1e-10,
            max_newton: 3,
            grow_after: 4,
            growth: 1.5,
            divergence_bound: 1e8,
            residual_tol: 1e-10,
            endgame: true,
        }
    }
}

struct Work {
    h: Vec<C>,
    ht: Vec<C>,
    hx: Mat,
    rhs: Vec<C>,
}

impl Work {
    fn new(n: usize) -> Self {
        Self { h: vec![C::default(); n], ht: vec![C::default(); n], hx: Mat::zeros(n), rhs: vec![C::default(); n] }
    }
}

fn norm_inf(v: &[C]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Newton iterations at fixed `tau`; returns whether the update fell below
/// `tol` relative to `|x|`.
fn correct(h: &dyn Homotopy, x: &mut [C], tau: f64, iters: usize, tol: f64, w: &mut Work) -> bool {
    for _ in 0..iters {
        h.eval(x, tau, &mut w.h, &mut w.hx, &mut w.ht);
        w.rhs.iter_mut().zip(&w.h).for_each(|(r, v)| *r = -v);
        if !w.hx.solve_in_place(&mut w.rhs) {
            return false;
        }
        let mut dn = 0.0f64;
        for (xi, d) in x.iter_mut().zip(w.rhs.iter()) {
            *xi += d;
            dn = dn.max(d.norm());
        }
        if !dn.is_finite() {
            return false;
        }
        if dn <= tol * norm_inf(x).max(1.0) {
            return true;
        }
    }
    false
}

/// Residual `|H(x, tau)|_inf`.
pub fn residual_at(h: &dyn Homotopy, x: &[C], tau: f64) -> f64 {
    let mut w = Work::new(x.len());
    h.eval(x, tau, &mut w.h, &mut w.hx, &mut w.ht);
    norm_inf(&w.h)
}

/// Newton polish at `tau` until the residual is below `tol`; returns the
/// final residual.
pub fn polish(h: &dyn Homotopy, x: &mut [C], tau: f64, tol: f64, max_iters: usize) -> f64 {
    let mut w = Work::new(x.len());
    let mut best = x.to_vec();
    h.eval(x, tau, &mut w.h, &mut w.hx, &mut w.ht);
    let mut best_res = norm_inf(&w.h);
    for _ in 0..max_iters {
        if best_res < tol * 1e-3 {
            break;
        }
        w.rhs.iter_mut().zip(&w.h).for_each(|(r, v)| *r = -v);
        if !w.hx.solve_in_place(&mut w.rhs) {
            break;
        }
        x.iter_mut().zip(w.rhs.iter()).for_each(|(xi, d)| *xi += d);
        h.eval(x, tau, &mut w.h, &mut w.hx, &mut w.ht);
        let r = norm_inf(&w.h);
        if !(r < best_res) {
            if r.is_finite() && r < 2.0 * best_res {
                continue;
            }
            break;
        }
        best_res = r;
        best.copy_from_slice(x);
    }
    x.copy_from_slice(&best);
    best_res
}

/// Largest exponent `|d ln|x_i| / d ln(dist)|` between two points at
/// distances `d0 > d1` from the end of the path. Paths converging to a
/// finite torus point have slope near 0; paths to toric infinity
/// (|x_i| -> inf or 0) behave like dist^(w/m) with a nonzero rational slope.
fn end_slope(x0: &[C], d0: f64, x1: &[C], d1: f64) -> f64 {
    let den = (d0 / d1).ln();
    if den <= 0.0 {
        return 0.0;
    }
    x0.iter()
        .zip(x1)
        .map(|(a, b)| {
            let (na, nb) = (a.norm(), b.norm());
            if na == 0.0 || nb == 0.0 {
                f64::INFINITY
            } else {
                (nb.ln() - na.ln()).abs() / den
            }
        })
        .fold(0.0, f64::max)
}

const ENDGAME_SLOPE: f64 = 0.05;

/// Tracks `H(x, tau) = 0` from `tau0` to `tau1` starting at `x0`.
///
/// Close to `tau1` the path is sampled once per decade of the remaining
/// distance. Two consecutive decades with a clearly nonzero and consistent
/// log-slope end the path early as `Diverged` (it heads to a root at
/// infinity of the torus); a failure inside the endgame is classified the
/// same way.
pub fn track(h: &dyn Homotopy, x0: &[C], tau0: f64, tau1: f64, opts: &TrackOptions) -> PathResult {
    let n = x0.len();
    let mut w = Work::new(n);
    let mut x = x0.to_vec();
    let span = tau1 - tau0;
    let dir = span.signum();
    let mut tau = tau0;
    let mut step = opts.initial_step * span.abs();
    let max_step = opts.max_step * span.abs();
    let mut successes = 0;
    let mut steps = 0;
    let mut marks: Vec<(f64, Vec<C>)> = Vec::new();
    let mut next_mark = 1e-2 * span.abs();
    let fail = |x: Vec<C>, status, steps, resolved| PathResult { endpoint: x, status, final_residual: f64::INFINITY, steps, resolved };
    while (tau1 - tau) * dir > 0.0 {
        if steps >= opts.max_steps {
            return fail(x, PathStatus::StepLimit, steps, false);
        }
        steps += 1;
        let dt = step.min((tau1 - tau).abs()) * dir;
        let next = if (tau + dt - tau1) * dir >= -1e-15 * span.abs() { tau1 } else { tau + dt };
        // Euler predictor along the tangent dx/dtau = -H_x^{-1} H_tau.
        h.eval(&x, tau, &mut w.h, &mut w.hx, &mut w.ht);
        w.rhs.iter_mut().zip(&w.ht).for_each(|(r, v)| *r = -v);
        let mut ok = false;
        let mut xp = x.clone();
        if w.hx.solve_in_place(&mut w.rhs) {
            xp.iter_mut().zip(w.rhs.iter()).for_each(|(xi, d)| *xi += d * (next - tau));
            ok = correct(h, &mut xp, next, opts.max_newton, opts.newton_tol, &mut w);
        }
        if ok {
            x = xp;
            tau = next;
            if norm_inf(&x) > opts.divergence_bound {
                return fail(x, PathStatus::Diverged, steps, true);
            }
            successes += 1;
            if successes >= opts.grow_after {
                step = (step * opts.growth).min(max_step);
                successes = 0;
            }
            let dist = (tau1 - tau).abs();
            if dist > 0.0 && dist <= next_mark {
                marks.push((dist, x.clone()));
                while next_mark >= dist {
                    next_mark *= 0.1;
                }
                if let Some(status) = endgame(&marks, span.abs()).filter(|_| opts.endgame) {
                    return fail(x, status, steps, true);
                }
            }
        } else {
            successes = 0;
            step *= 0.5;
            if step < opts.min_step * span.abs().max(1.0) {
                let dist = (tau1 - tau).abs();
                let big = norm_inf(&x) > opts.divergence_bound.sqrt();
                let (status, resolved) = match marks.last() {
                    _ if big => (PathStatus::Diverged, true),
                    Some((d0, a)) if opts.endgame && dist > 0.0 && dist < *d0 => {
                        if end_slope(a, *d0, &x, dist) > ENDGAME_SLOPE {
                            (PathStatus::Diverged, true)
                        } else {
                            (PathStatus::Singular, converging(&marks, &x))
                        }
                    }
                    _ => (PathStatus::Singular, false),
                };
                return fail(x, status, steps, resolved);
            }
        }
    }
    let res = polish(h, &mut x, tau1, opts.residual_tol, 8);
    let status = if norm_inf(&x) > opts.divergence_bound {
        PathStatus::Diverged
    } else if res < opts.residual_tol {
        PathStatus::Success
    } else {
        PathStatus::Singular
    };
    let resolved = status != PathStatus::Singular || converging(&marks, &x);
    PathResult { endpoint: x, status, final_residual: res, steps, resolved }
}

fn dist_inf(a: &[C], b: &[C]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Whether the decade samples (plus the current point) contract.
fn converging(marks: &[(f64, Vec<C>)], x: &[C]) -> bool {
    let mut pts: Vec<&[C]> = marks.iter().map(|(_, p)| p.as_slice()).collect();
    pts.push(x);
    if pts.len() < 3 {
        return false;
    }
    let k = pts.len();
    let d1 = dist_inf(pts[k - 3], pts[k - 2]);
    let d2 = dist_inf(pts[k - 2], pts[k - 1]);
    d2 < d1 && d2 <= 1e-2 * norm_inf(x).max(1.0)
}

/// Early classification from the last three decade samples, once the
/// remaining distance is at most 1e-5 of the interval. A consistent
/// nonzero log-slope means the path runs to a root at infinity of the
/// torus; slowly contracting increments mean a singular endpoint.
fn endgame(marks: &[(f64, Vec<C>)], span: f64) -> Option<PathStatus> {
    let [.., (d0, a), (d1, b), (d2, c)] = marks else { return None };
    if *d2 > 1e-5 * span {
        return None;
    }
    let s1 = end_slope(a, *d0, b, *d1);
    let s2 = end_slope(b, *d1, c, *d2);
    if s1 > 2.0 * ENDGAME_SLOPE && s2 > 2.0 * ENDGAME_SLOPE && (s1 - s2).abs() < 0.25 * s1.max(s2) {
        return Some(PathStatus::Diverged);
    }
    // With x = x* + k dist^q the increments give q; nonsingular endpoints
    // have q = 1, endpoints of winding number m have q = 1/m.
    let (e1, e2) = (dist_inf(a, b), dist_inf(b, c));
    if s1 < ENDGAME_SLOPE && s2 < ENDGAME_SLOPE && e2 < e1 && e2 > 1e-9 * norm_inf(c).max(1.0) {
        let q = (e1 / e2).ln() / (d0 / d1).ln();
        if q < 0.7 {
            return Some(PathStatus::Singular);
        }
    }
    None
}
