//! Polynomial systems whose positive real solutions are BP fixed points.
//!
//! For every directed edge (i -> j) of a pairwise model the system holds
//!
//! ```text
//! -mu_ij(x_j) + alpha_ij * sum_{x_i} Phi_ij(x_i, x_j) Phi_i(x_i) prod_{k in N(i)\j} mu_ki(x_i) = 0   (x_j = +1, -1)
//! mu_ij(+1) + mu_ij(-1) - 1 = 0
//! ```
//!
//! Variables are ordered by directed edge (lexicographic), message pairs
//! `(mu(+1), mu(-1))` first and then all normalizers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_complex::Complex64;

use crate::bp::{BpGraph, FactorBpGraph};
use crate::error::{Error, Result};
use crate::model::{FactorGraph, PairwiseModel, MAX_FACTOR_ARITY, SPIN};

/// One monomial with its coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: Complex64,
    pub exps: Vec<u32>,
}

impl Term {
    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }
}

/// Variables and equations belonging to one message of a BP system.
///
/// `vars[s]` is the message value for state s, `residual_eqs[s]` the
/// equation `c_s * vars[s] + alpha * G_s = 0`, and `norm_eq` the linear
/// normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageBlock {
    pub vars: [usize; 2],
    pub alpha: usize,
    pub residual_eqs: [usize; 2],
    pub norm_eq: usize,
}

/// Message structure of a system produced by the BP builders.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MessageLayout {
    pub blocks: Vec<MessageBlock>,
}

impl MessageLayout {
    /// Whether variable `v` is a message coordinate (not a normalizer).
    pub fn is_message_var(&self, v: usize) -> bool {
        self.blocks.iter().any(|b| b.vars.contains(&v))
    }
}

/// Square sparse polynomial system over complex coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialSystem {
    var_names: Vec<String>,
    equations: Vec<Vec<Term>>,
    layout: Option<MessageLayout>,
}

impl PolynomialSystem {
    /// Builds a square system. Terms with equal exponents are merged and
    /// zero coefficients dropped; terms within an equation are sorted by
    /// exponent vector.
    pub fn new(var_names: Vec<String>, equations: Vec<Vec<Term>>) -> Result<Self> {
        let n = var_names.len();
        if equations.len() != n {
            return Err(Error::NotSquare { equations: equations.len(), variables: n });
        }
        let mut eqs = Vec::with_capacity(n);
        for eq in equations {
            let mut map: BTreeMap<Vec<u32>, Complex64> = BTreeMap::new();
            for t in eq {
                if t.exps.len() != n {
                    return Err(Error::Dimension { expected: n, got: t.exps.len() });
                }
                if !(t.coeff.re.is_finite() && t.coeff.im.is_finite()) {
                    return Err(Error::InvalidModel("non-finite coefficient".into()));
                }
                *map.entry(t.exps).or_default() += t.coeff;
            }
            eqs.push(map.into_iter().filter(|(_, c)| *c != Complex64::new(0.0, 0.0)).map(|(exps, coeff)| Term { coeff, exps }).collect());
        }
        Ok(Self { var_names, equations: eqs, layout: None })
    }

    /// Attaches message structure; block indices must be in range.
    pub fn with_layout(mut self, layout: MessageLayout) -> Result<Self> {
        let n = self.var_names.len();
        for b in &layout.blocks {
            let idx = [b.vars[0], b.vars[1], b.alpha, b.residual_eqs[0], b.residual_eqs[1], b.norm_eq];
            if idx.iter().any(|&i| i >= n) {
                return Err(Error::InvalidModel("message layout index out of range".into()));
            }
        }
        self.layout = Some(layout);
        Ok(self)
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn equations(&self) -> &[Vec<Term>] {
        &self.equations
    }

    pub fn layout(&self) -> Option<&MessageLayout> {
        self.layout.as_ref()
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    /// Deduplicated monomial support of every equation.
    pub fn supports(&self) -> Vec<Vec<Vec<u32>>> {
        self.equations.iter().map(|eq| eq.iter().map(|t| t.exps.clone()).collect()).collect()
    }

    /// Indices of the variables that count as message coordinates for the
    /// positivity test: all message variables when a layout is present,
    /// otherwise every variable.
    pub fn message_vars(&self) -> Vec<usize> {
        match &self.layout {
            Some(l) => {
                let mut v: Vec<usize> = l.blocks.iter().flat_map(|b| b.vars).collect();
                v.sort();
                v
            }
            None => (0..self.num_vars()).collect(),
        }
    }
}

/// Evaluates every equation at `point` by direct powering.
pub fn residual(sys: &PolynomialSystem, point: &[Complex64]) -> Result<Vec<Complex64>> {
    if point.len() != sys.num_vars() {
        return Err(Error::Dimension { expected: sys.num_vars(), got: point.len() });
    }
    Ok(sys
        .equations
        .iter()
        .map(|eq| {
            eq.iter()
                .map(|t| {
                    let mut m = t.coeff;
                    for (v, &e) in t.exps.iter().enumerate() {
                        if e > 0 {
                            m *= point[v].powu(e);
                        }
                    }
                    m
                })
                .sum()
        })
        .collect())
}

/// Largest absolute residual.
pub fn max_residual(sys: &PolynomialSystem, point: &[Complex64]) -> Result<f64> {
    Ok(residual(sys, point)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

fn unit(n: usize, pairs: &[(usize, u32)]) -> Vec<u32> {
    let mut e = vec![0; n];
    for &(v, k) in pairs {
        e[v] += k;
    }
    e
}

fn real(c: f64) -> Complex64 {
    Complex64::new(c, 0.0)
}

/// Fixed-point system of synchronous BP on a pairwise model.
pub fn build_bp_system(model: &PairwiseModel) -> PolynomialSystem {
    let g = BpGraph::new(model);
    let ne = g.edges.len();
    let n = 3 * ne;
    let mut names = Vec::with_capacity(n);
    for &(i, j) in &g.edges {
        names.push(format!("mu_{i}_{j}_p"));
        names.push(format!("mu_{i}_{j}_m"));
    }
    for &(i, j) in &g.edges {
        names.push(format!("alpha_{i}_{j}"));
    }
    let mut eqs = Vec::with_capacity(n);
    let mut blocks = Vec::with_capacity(ne);
    for e in 0..ne {
        let (i, _) = g.edges[e];
        let jc = model.coupling(g.undirected[e]);
        let th = model.field(i);
        let alpha = 2 * ne + e;
        for b in 0..2 {
            let mut eq = vec![Term { coeff: real(-1.0), exps: unit(n, &[(2 * e + b, 1)]) }];
            for a in 0..2 {
                let mut pairs = vec![(alpha, 1)];
                pairs.extend(g.incoming[e].iter().map(|&k| (2 * k + a, 1)));
                let coeff = (jc * SPIN[a] * SPIN[b] + th * SPIN[a]).exp();
                eq.push(Term { coeff: real(coeff), exps: unit(n, &pairs) });
            }
            eqs.push(eq);
        }
        eqs.push(vec![
            Term { coeff: real(1.0), exps: unit(n, &[(2 * e, 1)]) },
            Term { coeff: real(1.0), exps: unit(n, &[(2 * e + 1, 1)]) },
            Term { coeff: real(-1.0), exps: vec![0; n] },
        ]);
        blocks.push(MessageBlock { vars: [2 * e, 2 * e + 1], alpha, residual_eqs: [3 * e, 3 * e + 1], norm_eq: 3 * e + 2 });
    }
    PolynomialSystem::new(names, eqs)
        .and_then(|s| s.with_layout(MessageLayout { blocks }))
        .expect("BP system is well formed")
}

type SparsePoly = BTreeMap<Vec<u32>, f64>;

fn poly_mul(a: &SparsePoly, b: &SparsePoly) -> SparsePoly {
    let mut out = SparsePoly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(e).or_default() += ca * cb;
        }
    }
    out
}

/// Fixed-point system of synchronous BP on a factor graph, in the
/// variable-to-factor messages q.
///
/// The factor-to-variable messages are substituted into the q update, so
/// only q and its normalizer are unknowns. Unary factors act as local
/// evidence: messages are kept for incidences with factors of arity two or
/// more. Variable order: incidences `(variable, factor)` sorted, the pair
/// `(q(0), q(1))` for each, then all normalizers.
pub fn build_factor_bp_system(fg: &FactorGraph) -> Result<PolynomialSystem> {
    if let Some(f) = fg.factors().iter().find(|f| f.arity() > MAX_FACTOR_ARITY) {
        return Err(Error::InvalidModel(format!("factor arity {} exceeds {MAX_FACTOR_ARITY}", f.arity())));
    }
    let inc = FactorBpGraph::new(fg);
    let msgs: Vec<(usize, usize)> = inc.edges.iter().copied().filter(|&(_, f)| fg.factors()[f].arity() >= 2).collect();
    let ne = msgs.len();
    let n = 3 * ne;
    let index = |v: usize, f: usize| msgs.binary_search(&(v, f)).expect("message exists");
    let mut names = Vec::with_capacity(n);
    for &(v, f) in &msgs {
        names.push(format!("q_{v}_{f}_0"));
        names.push(format!("q_{v}_{f}_1"));
    }
    for &(v, f) in &msgs {
        names.push(format!("alpha_{v}_{f}"));
    }
    let factors = fg.factors();
    let mut eqs = Vec::with_capacity(n);
    let mut blocks = Vec::with_capacity(ne);
    for (e, &(v, f)) in msgs.iter().enumerate() {
        let alpha = 2 * ne + e;
        for y in 0..2usize {
            let evidence: f64 = factors.iter().filter(|h| h.arity() == 1 && h.vars[0] == v).map(|h| h.table[y]).product();
            let mut poly: SparsePoly = [(unit(n, &[(alpha, 1)]), evidence)].into_iter().collect();
            for (g, fac) in factors.iter().enumerate() {
                if g == f || fac.arity() < 2 || !fac.vars.contains(&v) {
                    continue;
                }
                let k = fac.arity();
                let pos = fac.vars.iter().position(|&w| w == v).expect("variable in factor");
                let mut r = SparsePoly::new();
                for (idx, &t) in fac.table.iter().enumerate() {
                    if t == 0.0 || (idx >> (k - 1 - pos)) & 1 != y {
                        continue;
                    }
                    let pairs: Vec<(usize, u32)> = fac
                        .vars
                        .iter()
                        .enumerate()
                        .filter(|&(p, _)| p != pos)
                        .map(|(p, &w)| (2 * index(w, g) + ((idx >> (k - 1 - p)) & 1), 1))
                        .collect();
                    *r.entry(unit(n, &pairs)).or_default() += t;
                }
                poly = poly_mul(&poly, &r);
            }
            let mut eq = vec![Term { coeff: real(-1.0), exps: unit(n, &[(2 * e + y, 1)]) }];
            eq.extend(poly.into_iter().map(|(exps, c)| Term { coeff: real(c), exps }));
            eqs.push(eq);
        }
        eqs.push(vec![
            Term { coeff: real(1.0), exps: unit(n, &[(2 * e, 1)]) },
            Term { coeff: real(1.0), exps: unit(n, &[(2 * e + 1, 1)]) },
            Term { coeff: real(-1.0), exps: vec![0; n] },
        ]);
        blocks.push(MessageBlock { vars: [2 * e, 2 * e + 1], alpha, residual_eqs: [3 * e, 3 * e + 1], norm_eq: 3 * e + 2 });
    }
    PolynomialSystem::new(names, eqs)?.with_layout(MessageLayout { blocks })
}

/// Size and degree summary of a system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemStats {
    pub num_equations: usize,
    /// Equations per total degree.
    pub degree_profile: BTreeMap<u32, usize>,
    /// Product of the equations' total degrees.
    pub total_degree: BigUint,
    /// Equations per degree counted in message variables only (normalizers
    /// excluded); equal to `degree_profile` for systems without a layout.
    pub message_degree_profile: BTreeMap<u32, usize>,
    pub message_total_degree: BigUint,
}

pub fn stats(sys: &PolynomialSystem) -> SystemStats {
    let msg = sys.message_vars();
    let mut is_msg = vec![false; sys.num_vars()];
    for v in msg {
        is_msg[v] = true;
    }
    let mut profile = BTreeMap::new();
    let mut mprofile = BTreeMap::new();
    let mut total = BigUint::from(1u32);
    let mut mtotal = BigUint::from(1u32);
    for eq in sys.equations() {
        let d = eq.iter().map(Term::degree).max().unwrap_or(0);
        let md = eq
            .iter()
            .map(|t| t.exps.iter().enumerate().filter(|&(v, _)| is_msg[v]).map(|(_, &e)| e).sum::<u32>())
            .max()
            .unwrap_or(0);
        *profile.entry(d).or_insert(0) += 1;
        *mprofile.entry(md).or_insert(0) += 1;
        total *= d;
        mtotal *= md;
    }
    SystemStats {
        num_equations: sys.equations().len(),
        degree_profile: profile,
        total_degree: total,
        message_degree_profile: mprofile,
        message_total_degree: mtotal,
    }
}

/// Writes the system in the plain-text exchange format.
///
/// ```text
/// variables <n>
/// <name_1> ... <name_n>
/// equations <n>
/// <re> <im> : <e_1> ... <e_n> ; <re> <im> : ... ; ...
/// message_blocks <k>            (optional)
/// <var_0> <var_1> <alpha> <res_0> <res_1> <norm>
/// ```
///
/// Lines starting with `#` are comments. Coefficients are written with
/// round-trip precision.
pub fn write_system(sys: &PolynomialSystem) -> String {
    let mut out = String::new();
    let n = sys.num_vars();
    let _ = writeln!(out, "variables {n}");
    let _ = writeln!(out, "{}", sys.var_names.join(" "));
    let _ = writeln!(out, "equations {}", sys.equations.len());
    for eq in &sys.equations {
        let terms: Vec<String> = eq
            .iter()
            .map(|t| {
                let exps: Vec<String> = t.exps.iter().map(u32::to_string).collect();
                format!("{:?} {:?} : {}", t.coeff.re, t.coeff.im, exps.join(" "))
            })
            .collect();
        let _ = writeln!(out, "{}", terms.join(" ; "));
    }
    if let Some(l) = &sys.layout {
        let _ = writeln!(out, "message_blocks {}", l.blocks.len());
        for b in &l.blocks {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {}",
                b.vars[0], b.vars[1], b.alpha, b.residual_eqs[0], b.residual_eqs[1], b.norm_eq
            );
        }
    }
    out
}

/// Parses the format produced by [`write_system`].
pub fn parse_system(text: &str) -> Result<PolynomialSystem> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let bad = |m: &str| Error::Parse(m.to_string());
    let header = |line: Option<&str>, key: &str| -> Result<usize> {
        let line = line.ok_or_else(|| bad(&format!("missing `{key}` line")))?;
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(bad(&format!("expected `{key}`, found `{line}`")));
        }
        it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(&format!("bad count in `{line}`")))
    };
    let n = header(lines.next(), "variables")?;
    let names: Vec<String> = lines.next().ok_or_else(|| bad("missing variable names"))?.split_whitespace().map(String::from).collect();
    if names.len() != n {
        return Err(Error::Dimension { expected: n, got: names.len() });
    }
    let m = header(lines.next(), "equations")?;
    let mut eqs = Vec::with_capacity(m);
    for _ in 0..m {
        let line = lines.next().ok_or_else(|| bad("missing equation line"))?;
        let mut eq = Vec::new();
        for term in line.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let (c, e) = term.split_once(':').ok_or_else(|| bad(&format!("term without `:`: `{term}`")))?;
            let c: Vec<f64> = c.split_whitespace().map(|x| x.parse().map_err(|_| bad(&format!("bad coefficient `{x}`")))).collect::<Result<_>>()?;
            if c.len() != 2 {
                return Err(bad(&format!("coefficient needs re and im: `{term}`")));
            }
            let exps: Vec<u32> = e.split_whitespace().map(|x| x.parse().map_err(|_| bad(&format!("bad exponent `{x}`")))).collect::<Result<_>>()?;
            eq.push(Term { coeff: Complex64::new(c[0], c[1]), exps });
        }
        eqs.push(eq);
    }
    let sys = PolynomialSystem::new(names, eqs)?;
    match lines.next() {
        None => Ok(sys),
        Some(line) => {
            let k = header(Some(line), "message_blocks")?;
            let mut blocks = Vec::with_capacity(k);
            for _ in 0..k {
                let line = lines.next().ok_or_else(|| bad("missing message block"))?;
                let v: Vec<usize> = line.split_whitespace().map(|x| x.parse().map_err(|_| bad(&format!("bad index `{x}`")))).collect::<Result<_>>()?;
                if v.len() != 6 {
                    return Err(bad(&format!("message block needs 6 indices: `{line}`")));
                }
                blocks.push(MessageBlock { vars: [v[0], v[1]], alpha: v[2], residual_eqs: [v[3], v[4]], norm_eq: v[5] });
            }
            sys.with_layout(MessageLayout { blocks })
        }
    }
}

/// Message values and normalizers of a pairwise BP state as a point of the
/// system built by [`build_bp_system`].
pub fn messages_to_point(msgs: &crate::bp::MessageSet) -> Vec<Complex64> {
    let ne = msgs.mu.len();
    let mut x = vec![Complex64::new(0.0, 0.0); 3 * ne];
    for e in 0..ne {
        x[2 * e] = real(msgs.mu[e][0]);
        x[2 * e + 1] = real(msgs.mu[e][1]);
        x[2 * ne + e] = real(msgs.alpha[e]);
    }
    x
}

/// Inverse of [`messages_to_point`], taking real parts.
pub fn point_to_messages(model: &PairwiseModel, x: &[Complex64]) -> Result<crate::bp::MessageSet> {
    let edges = model.directed_edges();
    let ne = edges.len();
    if x.len() != 3 * ne {
        return Err(Error::Dimension { expected: 3 * ne, got: x.len() });
    }
    Ok(crate::bp::MessageSet {
        edges,
        mu: (0..ne).map(|e| [x[2 * e].re, x[2 * e + 1].re]).collect(),
        alpha: (0..ne).map(|e| x[2 * ne + e].re).collect(),
    })
}

/// Reads the q messages of a factor-graph system solution into a full
/// message set. Incidences with unary factors carry no unknown and get
/// uniform q, which no other message depends on.
pub fn point_to_factor_messages(fg: &FactorGraph, x: &[Complex64]) -> Result<crate::bp::FactorMessages> {
    let g = FactorBpGraph::new(fg);
    let kept: Vec<usize> = (0..g.edges.len()).filter(|&e| fg.factors()[g.edges[e].1].arity() >= 2).collect();
    if x.len() != 3 * kept.len() {
        return Err(Error::Dimension { expected: 3 * kept.len(), got: x.len() });
    }
    let mut m = g.uniform();
    for (k, &e) in kept.iter().enumerate() {
        m.q[e] = [x[2 * k].re, x[2 * k + 1].re];
        m.alpha[e] = x[2 * kept.len() + k].re;
    }
    m.r = g.factor_to_var(fg, &m.q);
    Ok(m)
}
