//! Binary pairwise (Ising) models and generic factor graphs.
//!
//! Spins of a pairwise model take values in {+1, -1}. Wherever a pair of
//! numbers is attached to a spin (messages, beliefs, 2x2 tables) index 0 is
//! the +1 state and index 1 the -1 state, see [`SPIN`]. Factor-graph variables
//! take values in {0, 1} and use the value itself as index.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spin value for each index of a per-spin pair: `[+1, -1]`.
pub const SPIN: [f64; 2] = [1.0, -1.0];

/// Largest factor arity accepted anywhere in the crate.
pub const MAX_FACTOR_ARITY: usize = 8;

/// Undirected graph with Ising couplings on edges and fields on nodes.
///
/// The joint weight of a spin assignment x is
/// `exp(sum_(i,j) J_ij x_i x_j + sum_i theta_i x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseModel {
    n: usize,
    edges: Vec<(usize, usize)>,
    couplings: Vec<f64>,
    fields: Vec<f64>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl PairwiseModel {
    /// Builds a model from `(i, j, J_ij)` triples and one field per node.
    ///
    /// Edges are normalized to `i < j` and stored in lexicographic order.
    pub fn new(n: usize, edges: &[(usize, usize, f64)], fields: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidModel("model needs at least one node".into()));
        }
        if fields.len() != n {
            return Err(Error::Dimension { expected: n, got: fields.len() });
        }
        if let Some(t) = fields.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidModel(format!("non-finite field {t}")));
        }
        let mut list: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len());
        for &(a, b, j) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidModel(format!("edge ({a},{b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::InvalidModel(format!("self-loop on node {a}")));
            }
            if !j.is_finite() {
                return Err(Error::InvalidModel(format!("non-finite coupling on ({a},{b})")));
            }
            list.push((a.min(b), a.max(b), j));
        }
        list.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        if list.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::InvalidModel("duplicate edge".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (e, &(i, j, _)) in list.iter().enumerate() {
            adjacency[i].push((j, e));
            adjacency[j].push((i, e));
        }
        for adj in &mut adjacency {
            adj.sort();
        }
        Ok(Self {
            n,
            edges: list.iter().map(|&(i, j, _)| (i, j)).collect(),
            couplings: list.iter().map(|e| e.2).collect(),
            fields: fields.to_vec(),
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Undirected edges `(i, j)` with `i < j`, lexicographically sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn coupling(&self, edge: usize) -> f64 {
        self.couplings[edge]
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn field(&self, node: usize) -> f64 {
        self.fields[node]
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    /// `(neighbor, edge index)` pairs of `node`, sorted by neighbor.
    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).ok()
    }

    /// Coupling between two nodes, zero when they are not adjacent.
    pub fn coupling_between(&self, a: usize, b: usize) -> f64 {
        self.edge_index(a, b).map_or(0.0, |e| self.couplings[e])
    }

    /// Both orientations of every edge, sorted lexicographically.
    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        let mut d: Vec<(usize, usize)> = self.edges.iter().flat_map(|&(i, j)| [(i, j), (j, i)]).collect();
        d.sort();
        d
    }

    /// Copy of the model with new couplings (in edge order) and fields.
    pub fn with_parameters(&self, couplings: &[f64], fields: &[f64]) -> Result<Self> {
        if couplings.len() != self.edges.len() {
            return Err(Error::Dimension { expected: self.edges.len(), got: couplings.len() });
        }
        let triples: Vec<_> = self.edges.iter().zip(couplings).map(|(&(i, j), &c)| (i, j, c)).collect();
        Self::new(self.n, &triples, fields)
    }

    /// Copy with every coupling set to `j` and every field to `theta`.
    pub fn with_uniform(&self, j: f64, theta: f64) -> Result<Self> {
        self.with_parameters(&vec![j; self.edges.len()], &vec![theta; self.n])
    }

    /// Exponent of the Boltzmann weight, `sum J x_i x_j + sum theta x_i`.
    pub fn log_weight(&self, spins: &[i8]) -> Result<f64> {
        if spins.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: spins.len() });
        }
        let mut s = 0.0;
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            s += self.couplings[e] * f64::from(spins[i]) * f64::from(spins[j]);
        }
        for (i, &x) in spins.iter().enumerate() {
            s += self.fields[i] * f64::from(x);
        }
        Ok(s)
    }

    /// Unnormalized Boltzmann weight of a spin assignment.
    pub fn unnormalized_weight(&self, spins: &[i8]) -> Result<f64> {
        if let Some(bad) = spins.iter().find(|&&x| x != 1 && x != -1) {
            return Err(Error::InvalidModel(format!("spin {bad} not in {{-1,+1}}")));
        }
        Ok(self.log_weight(spins)?.exp())
    }

    /// Factor graph with one unary factor per node and one pairwise factor
    /// per edge. Factor-graph state 0 stands for spin -1, state 1 for +1.
    pub fn to_factor_graph(&self) -> FactorGraph {
        let mut factors = Vec::with_capacity(self.n + self.edges.len());
        for (i, &t) in self.fields.iter().enumerate() {
            factors.push(Factor { vars: vec![i], table: vec![(-t).exp(), t.exp()] });
        }
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            let c = self.couplings[e];
            let table = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
                .iter()
                .map(|&(a, b): &(f64, f64)| (c * a * b).exp())
                .collect();
            factors.push(Factor { vars: vec![i, j], table });
        }
        FactorGraph { cards: vec![2; self.n], factors }
    }

    /// Mean degree minus one rounded to the nearest integer, at least 2.
    /// Used as the default Cayley-tree branching for region classification.
    pub fn default_branching(&self) -> u32 {
        if self.n == 0 {
            return 2;
        }
        let mean = 2.0 * self.edges.len() as f64 / self.n as f64;
        ((mean - 1.0).round() as i64).max(2) as u32
    }
}

/// Undirected edges of a `rows x cols` 4-neighbor lattice in model order.
pub fn grid_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                e.push((i, i + 1));
            }
            if r + 1 < rows {
                e.push((i, i + cols));
            }
        }
    }
    e.sort();
    e
}

/// Grid model; `couplings` follows the order of [`grid_edges`] and `fields`
/// is row-major.
pub fn build_grid(rows: usize, cols: usize, couplings: &[f64], fields: &[f64]) -> Result<PairwiseModel> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidModel("grid needs at least one row and column".into()));
    }
    let edges = grid_edges(rows, cols);
    if couplings.len() != edges.len() {
        return Err(Error::Dimension { expected: edges.len(), got: couplings.len() });
    }
    let triples: Vec<_> = edges.iter().zip(couplings).map(|(&(i, j), &c)| (i, j, c)).collect();
    PairwiseModel::new(rows * cols, &triples, fields)
}

/// Grid with uniform coupling and field.
pub fn uniform_grid(rows: usize, cols: usize, j: f64, theta: f64) -> Result<PairwiseModel> {
    let ne = rows * cols.saturating_sub(1) + cols * rows.saturating_sub(1);
    build_grid(rows, cols, &vec![j; ne], &vec![theta; rows * cols])
}

/// Complete graph on `n` nodes with uniform parameters.
pub fn build_complete(n: usize, j: f64, theta: f64) -> Result<PairwiseModel> {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            edges.push((a, b, j));
        }
    }
    PairwiseModel::new(n, &edges, &vec![theta; n])
}

/// A factor over binary variables with a dense table.
///
/// Entry index of a joint state is `sum_k y_k 2^(arity-1-k)`: the first
/// variable is the most significant bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub vars: Vec<usize>,
    pub table: Vec<f64>,
}

impl Factor {
    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    /// Table value for the states of this factor's variables, taken from a
    /// full assignment.
    pub fn value(&self, assignment: &[u8]) -> f64 {
        let mut idx = 0;
        for &v in &self.vars {
            idx = (idx << 1) | usize::from(assignment[v]);
        }
        self.table[idx]
    }
}

/// Factor graph over binary variables.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    cards: Vec<usize>,
    factors: Vec<Factor>,
}

impl FactorGraph {
    pub fn new(variable_count: usize, factors: Vec<Factor>) -> Result<Self> {
        if variable_count == 0 {
            return Err(Error::InvalidModel("factor graph needs at least one variable".into()));
        }
        for (k, f) in factors.iter().enumerate() {
            if f.vars.is_empty() {
                return Err(Error::InvalidModel(format!("factor {k} has no variables")));
            }
            if f.vars.len() > MAX_FACTOR_ARITY {
                return Err(Error::InvalidModel(format!(
                    "factor {k} has arity {} (limit {MAX_FACTOR_ARITY})",
                    f.vars.len()
                )));
            }
            if let Some(&v) = f.vars.iter().find(|&&v| v >= variable_count) {
                return Err(Error::InvalidModel(format!("factor {k} uses unknown variable {v}")));
            }
            let mut sorted = f.vars.clone();
            sorted.sort();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidModel(format!("factor {k} repeats a variable")));
            }
            let want = 1usize << f.vars.len();
            if f.table.len() != want {
                return Err(Error::InvalidModel(format!(
                    "factor {k} table has {} entries, expected {want}",
                    f.table.len()
                )));
            }
            if f.table.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidModel(format!("factor {k} has a negative or non-finite entry")));
            }
            if f.table.iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidModel(format!("factor {k} is identically zero")));
            }
        }
        Ok(Self { cards: vec![2; variable_count], factors })
    }

    pub fn variable_count(&self) -> usize {
        self.cards.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Product of all factor values at a {0,1} assignment.
    pub fn weight(&self, assignment: &[u8]) -> Result<f64> {
        if assignment.len() != self.cards.len() {
            return Err(Error::Dimension { expected: self.cards.len(), got: assignment.len() });
        }
        Ok(self.factors.iter().map(|f| f.value(assignment)).product())
    }

    /// Indices of the factors touching `var`.
    pub fn factors_of(&self, var: usize) -> Vec<usize> {
        (0..self.factors.len()).filter(|&f| self.factors[f].vars.contains(&var)).collect()
    }
}

/// Pairwise model kind recorded in model files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseKind {
    Grid,
    Complete,
    Custom,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelFile {
    Grid(PairwiseFile),
    Complete(PairwiseFile),
    Custom(PairwiseFile),
    FactorGraph { vars: usize, factors: Vec<Factor> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairwiseFile {
    nodes: usize,
    edges: Vec<(usize, usize, f64)>,
    fields: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

/// Contents of a model file.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Pairwise { model: PairwiseModel, kind: PairwiseKind, seed: Option<u64> },
    Factor(FactorGraph),
}

/// Parses a model from JSON text. Non-finite numbers are rejected.
pub fn parse_model(text: &str) -> Result<LoadedModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    let pairwise = |p: PairwiseFile, kind| -> Result<LoadedModel> {
        let model = PairwiseModel::new(p.nodes, &p.edges, &p.fields)?;
        Ok(LoadedModel::Pairwise { model, kind, seed: p.seed })
    };
    match file {
        ModelFile::Grid(p) => pairwise(p, PairwiseKind::Grid),
        ModelFile::Complete(p) => pairwise(p, PairwiseKind::Complete),
        ModelFile::Custom(p) => pairwise(p, PairwiseKind::Custom),
        ModelFile::FactorGraph { vars, factors } => Ok(LoadedModel::Factor(FactorGraph::new(vars, factors)?)),
    }
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    parse_model(&std::fs::read_to_string(path)?)
}

/// Serializes a pairwise model in the model-file format.
pub fn pairwise_to_json(model: &PairwiseModel, kind: PairwiseKind, seed: Option<u64>) -> String {
    let p = PairwiseFile {
        nodes: model.node_count(),
        edges: model.edges().iter().enumerate().map(|(e, &(i, j))| (i, j, model.coupling(e))).collect(),
        fields: model.fields().to_vec(),
        seed,
    };
    let file = match kind {
        PairwiseKind::Grid => ModelFile::Grid(p),
        PairwiseKind::Complete => ModelFile::Complete(p),
        PairwiseKind::Custom => ModelFile::Custom(p),
    };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}

pub fn factor_graph_to_json(fg: &FactorGraph) -> String {
    let file = ModelFile::FactorGraph { vars: fg.variable_count(), factors: fg.factors().to_vec() };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        let g = uniform_grid(3, 3, 0.5, 0.1).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (9, 12));
        assert_eq!(uniform_grid(1, 1, 0.0, 0.0).unwrap().edge_count(), 0);
        assert_eq!(uniform_grid(2, 2, 0.0, 0.0).unwrap().edge_count(), 4);
    }

    #[test]
    fn complete_counts() {
        let k4 = build_complete(4, 1.0, 0.0).unwrap();
        assert_eq!(k4.edge_count(), 6);
        assert!((0..4).all(|i| k4.degree(i) == 3));
        assert_eq!(build_complete(1, 1.0, 0.0).unwrap().edge_count(), 0);
        assert_eq!(build_complete(5, 1.0, 0.0).unwrap().edge_count(), 10);
    }

    #[test]
    fn two_node_weights() {
        let m = PairwiseModel::new(2, &[(0, 1, 1.0)], &[1.0, 1.0]).unwrap();
        assert!((m.unnormalized_weight(&[1, 1]).unwrap() - 3f64.exp()).abs() < 1e-12);
        assert!((m.unnormalized_weight(&[1, -1]).unwrap() - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn factor_tables() {
        let m = PairwiseModel::new(2, &[(0, 1, 1.0)], &[0.0, 0.0]).unwrap();
        let fg = m.to_factor_graph();
        assert_eq!(fg.factors().len(), 3);
        let e = 1f64.exp();
        let t = &fg.factors()[2].table;
        for (a, b) in t.iter().zip([e, 1.0 / e, 1.0 / e, e]) {
            assert!((a - b).abs() < 1e-12);
        }
        let single = PairwiseModel::new(1, &[], &[0.0]).unwrap().to_factor_graph();
        assert_eq!(single.factors()[0].table, vec![1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(PairwiseModel::new(2, &[(0, 0, 1.0)], &[0.0, 0.0]).is_err());
        assert!(PairwiseModel::new(2, &[(0, 1, 1.0), (1, 0, 2.0)], &[0.0, 0.0]).is_err());
        assert!(PairwiseModel::new(2, &[(0, 2, 1.0)], &[0.0, 0.0]).is_err());
        assert!(PairwiseModel::new(2, &[(0, 1, f64::NAN)], &[0.0, 0.0]).is_err());
        assert!(PairwiseModel::new(2, &[], &[0.0, f64::INFINITY]).is_err());
        assert!(build_grid(2, 2, &[1.0; 3], &[0.0; 4]).is_err());
        assert!(FactorGraph::new(2, vec![Factor { vars: vec![0, 1], table: vec![1.0; 3] }]).is_err());
        assert!(FactorGraph::new(1, vec![Factor { vars: vec![0], table: vec![0.0, 0.0] }]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = uniform_grid(2, 3, -0.5, 0.25).unwrap();
        let text = pairwise_to_json(&g, PairwiseKind::Grid, Some(7));
        match parse_model(&text).unwrap() {
            LoadedModel::Pairwise { model, kind, seed } => {
                assert_eq!(model, g);
                assert_eq!(kind, PairwiseKind::Grid);
                assert_eq!(seed, Some(7));
            }
            LoadedModel::Factor(_) => panic!("wrong kind"),
        }
        let fg = g.to_factor_graph();
        match parse_model(&factor_graph_to_json(&fg)).unwrap() {
            LoadedModel::Factor(back) => assert_eq!(back, fg),
            LoadedModel::Pairwise { .. } => panic!("wrong kind"),
        }
    }

    #[test]
    fn json_rejects_non_finite() {
        let text = r#"{"kind":"custom","nodes":2,"edges":[[0,1,1e400]],"fields":[0,0]}"#;
        assert!(parse_model(text).is_err());
        let text = r#"{"kind":"custom","nodes":2,"edges":[[0,1,NaN]],"fields":[0,0]}"#;
        assert!(parse_model(text).is_err());
    }
}
