//! Weighted 2-CSP instances over an alphabet `[k]`.
//!
//! Constraints are kept as a weighted list; the constraint graph is derived by
//! summing weights per unordered vertex pair. Every constraint is stored with
//! `i < j`, and for bijective relations `pi[a]` is the label of `j` that
//! satisfies the constraint when `i` has label `a`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

/// Relative tolerance for the regularity check.
pub const REGULARITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Undirected weighted graph with one entry per vertex pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintGraph {
    n: usize,
    edges: Vec<Edge>,
    normalized: bool,
}

impl ConstraintGraph {
    /// Builds a regular graph, merging parallel edges. Fails on irregular input.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let g = Self::with_regularity(n, edges, false)?;
        if !g.normalized {
            let d = g.degrees();
            let (min, max) = min_max(&d);
            return Err(Error::NotRegular { min, max });
        }
        Ok(g)
    }

    /// Builds a graph; irregular input is accepted when `allow_irregular` is set.
    pub fn with_regularity(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
        allow_irregular: bool,
    ) -> Result<Self> {
        if n == 0 {
            return input("graph must have at least one vertex");
        }
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return input(format!("edge ({i},{j}) out of range for n={n}"));
            }
            if i == j {
                return input(format!("self-loop at vertex {i}"));
            }
            if !(w.is_finite() && w >= 0.0) {
                return input(format!("edge ({i},{j}) has invalid weight {w}"));
            }
            *merged.entry((i.min(j), i.max(j))).or_insert(0.0) += w;
        }
        let edges: Vec<Edge> = merged
            .into_iter()
            .filter(|&(_, w)| w > 0.0)
            .map(|((i, j), w)| Edge { i, j, w })
            .collect();
        let total: f64 = edges.iter().map(|e| e.w).sum();
        if total <= 0.0 {
            return input("graph has no positive edge weight");
        }
        let mut g = ConstraintGraph {
            n,
            edges,
            normalized: false,
        };
        let d = g.degrees();
        let (min, max) = min_max(&d);
        g.normalized = max - min <= REGULARITY_TOL * max.abs();
        if !g.normalized && !allow_irregular {
            return Err(Error::NotRegular { min, max });
        }
        Ok(g)
    }

    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return input("cycle needs n >= 3");
        }
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n, 1.0)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return input("complete graph needs n >= 2");
        }
        let mut e = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                e.push((i, j, 1.0));
            }
        }
        Self::new(n, e)
    }

    /// `t` vertex-disjoint copies of `self`; copy `c` uses vertices `c*n..(c+1)*n`.
    pub fn disjoint_copies(&self, t: usize) -> Result<Self> {
        if t == 0 {
            return input("need at least one copy");
        }
        let n = self.n;
        let e = (0..t).flat_map(|c| self.edges.iter().map(move |e| (e.i + c * n, e.j + c * n, e.w)));
        Self::with_regularity(n * t, e, !self.normalized)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// True when all weighted degrees agree within [`REGULARITY_TOL`].
    pub fn is_regular(&self) -> bool {
        self.normalized
    }

    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for e in &self.edges {
            d[e.i] += e.w;
            d[e.j] += e.w;
        }
        d
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w).sum()
    }

    /// `E_{ij~G} f(i,j)` with edges drawn proportionally to weight.
    pub fn edge_expectation(&self, mut f: impl FnMut(usize, usize) -> f64) -> f64 {
        let total = self.total_weight();
        self.edges.iter().map(|e| e.w * f(e.i, e.j)).sum::<f64>() / total
    }

    pub fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// Relation `Π ⊆ [k]×[k]`, row index is the label of the lower endpoint.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Relation {
    k: usize,
    table: Vec<bool>,
}

impl Relation {
    pub fn from_table(k: usize, rows: &[Vec<bool>]) -> Result<Self> {
        if k == 0 || rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return input(format!("relation table must be {k}x{k}"));
        }
        Ok(Relation {
            k,
            table: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_fn(k: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut table = Vec::with_capacity(k * k);
        for a in 0..k {
            for b in 0..k {
                table.push(f(a, b));
            }
        }
        Relation { k, table }
    }

    pub fn from_bijection(pi: &[usize]) -> Result<Self> {
        check_bijection(pi)?;
        Ok(Self::from_fn(pi.len(), |a, b| pi[a] == b))
    }

    /// The inequality relation `{(a,b) : a != b}`.
    pub fn inequality(k: usize) -> Self {
        Self::from_fn(k, |a, b| a != b)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.table[a * self.k + b]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.k, |a, b| self.contains(b, a))
    }

    pub fn rows(&self) -> Vec<Vec<bool>> {
        self.table.chunks(self.k).map(|r| r.to_vec()).collect()
    }

    /// Returns `pi` if every row and column has exactly one member.
    pub fn as_bijection(&self) -> Option<Vec<usize>> {
        let k = self.k;
        let mut pi = Vec::with_capacity(k);
        for a in 0..k {
            let mut hits = (0..k).filter(|&b| self.contains(a, b));
            let b = hits.next()?;
            if hits.next().is_some() {
                return None;
            }
            pi.push(b);
        }
        check_bijection(&pi).ok()?;
        Some(pi)
    }
}

fn check_bijection(pi: &[usize]) -> Result<()> {
    let k = pi.len();
    let mut seen = vec![false; k];
    for &b in pi {
        if b >= k || seen[b] {
            return input(format!("{pi:?} is not a permutation of [{k}]"));
        }
        seen[b] = true;
    }
    Ok(())
}

pub fn invert_permutation(pi: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; pi.len()];
    for (a, &b) in pi.iter().enumerate() {
        inv[b] = a;
    }
    inv
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub relation: Relation,
    /// Bijection for unique-games constraints.
    pub pi: Option<Vec<usize>>,
}

impl Constraint {
    pub fn new(i: usize, j: usize, weight: f64, relation: Relation) -> Self {
        let pi = relation.as_bijection();
        Constraint {
            i,
            j,
            weight,
            relation,
            pi,
        }
    }

    pub fn bijection(i: usize, j: usize, weight: f64, pi: Vec<usize>) -> Result<Self> {
        let relation = Relation::from_bijection(&pi)?;
        Ok(Constraint {
            i,
            j,
            weight,
            relation,
            pi: Some(pi),
        })
    }

    pub fn satisfied(&self, a: usize, b: usize) -> bool {
        self.relation.contains(a, b)
    }

    /// Swaps endpoints so that `i < j`.
    fn oriented(mut self) -> Self {
        if self.i > self.j {
            std::mem::swap(&mut self.i, &mut self.j);
            self.relation = self.relation.transpose();
            self.pi = self.pi.map(|p| invert_permutation(&p));
        }
        self
    }
}

/// Length-`n` labeling with entries in `[k]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn labels(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for Assignment {
    fn from(v: Vec<usize>) -> Self {
        Assignment(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Csp2Instance {
    n: usize,
    k: usize,
    unique_games: bool,
    constraints: Vec<Constraint>,
    graph: ConstraintGraph,
}

impl Csp2Instance {
    /// Validates and orients the constraints. With `unique_games` set every
    /// relation must be a bijection.
    pub fn new(n: usize, k: usize, constraints: Vec<Constraint>, unique_games: bool) -> Result<Self> {
        Self::build(n, k, constraints, unique_games, false)
    }

    pub fn build(
        n: usize,
        k: usize,
        constraints: Vec<Constraint>,
        unique_games: bool,
        allow_irregular: bool,
    ) -> Result<Self> {
        if k == 0 {
            return input("alphabet must be nonempty");
        }
        if constraints.is_empty() {
            return input("instance has no constraints");
        }
        let mut cs = Vec::with_capacity(constraints.len());
        for (index, c) in constraints.into_iter().enumerate() {
            if c.relation.k() != k {
                return input(format!("constraint {index} has alphabet {} != {k}", c.relation.k()));
            }
            if c.i >= n || c.j >= n || c.i == c.j {
                return input(format!("constraint {index} has endpoints ({}, {})", c.i, c.j));
            }
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return input(format!("constraint {index} has weight {}", c.weight));
            }
            if unique_games && c.relation.as_bijection().is_none() {
                return Err(Error::NotBijection { index });
            }
            cs.push(c.oriented());
        }
        let graph = ConstraintGraph::with_regularity(n, cs.iter().map(|c| (c.i, c.j, c.weight)), allow_irregular)?;
        Ok(Csp2Instance {
            n,
            k,
            unique_games,
            constraints: cs,
            graph,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Whether the instance was built as a unique-games instance.
    pub fn flagged_unique_games(&self) -> bool {
        self.unique_games
    }

    pub fn total_weight(&self) -> f64 {
        self.constraints.iter().map(|c| c.weight).sum()
    }

    /// Fraction of constraint weight satisfied by `x`.
    pub fn value(&self, x: &Assignment) -> Result<f64> {
        self.check_assignment(x.labels())?;
        Ok(self.value_of(x.labels()))
    }

    pub fn check_assignment(&self, x: &[usize]) -> Result<()> {
        if x.len() != self.n {
            return input(format!("assignment has length {} != {}", x.len(), self.n));
        }
        if let Some(p) = x.iter().position(|&a| a >= self.k) {
            return input(format!("label {} at vertex {p} is outside [{}]", x[p], self.k));
        }
        Ok(())
    }

    /// Unchecked value of a label slice.
    pub fn value_of(&self, x: &[usize]) -> f64 {
        let mut sat = 0.0;
        for c in &self.constraints {
            if c.satisfied(x[c.i], x[c.j]) {
                sat += c.weight;
            }
        }
        sat / self.total_weight()
    }

    /// Value computed through the stored bijections. `None` if some
    /// constraint has no bijection.
    pub fn value_via_bijections(&self, x: &[usize]) -> Option<f64> {
        let mut sat = 0.0;
        for c in &self.constraints {
            let pi = c.pi.as_ref()?;
            if pi[x[c.i]] == x[c.j] {
                sat += c.weight;
            }
        }
        Some(sat / self.total_weight())
    }

    /// Expected value when `(x_i, x_j)` is drawn from `pair(i, j)` for every
    /// constraint; `pair` returns a row-major `k×k` table.
    pub fn expected_value_with(&self, mut pair: impl FnMut(usize, usize) -> Result<Vec<f64>>) -> Result<f64> {
        let k = self.k;
        let mut total = 0.0;
        for c in &self.constraints {
            let p = pair(c.i, c.j)?;
            let mut s = 0.0;
            for a in 0..k {
                for b in 0..k {
                    if c.satisfied(a, b) {
                        s += p[a * k + b];
                    }
                }
            }
            total += c.weight * s;
        }
        Ok(total / self.total_weight())
    }

    pub fn graph(&self) -> &ConstraintGraph {
        &self.graph
    }
}

/// Max-Cut as a 2-CSP: `k = 2` with the inequality relation on every edge.
pub fn max_cut_instance(graph: &ConstraintGraph) -> Csp2Instance {
    let cs = graph
        .edges()
        .iter()
        .map(|e| Constraint::new(e.i, e.j, e.w, Relation::inequality(2)))
        .collect();
    Csp2Instance::build(graph.n(), 2, cs, false, !graph.is_regular()).expect("graph already validated")
}

/// Unique-games instance with one bijection per edge of `graph`. Keys of
/// `permutations` are `(i, j)` with `i < j`; `pi` maps the label of `i` to
/// the label of `j`.
pub fn unique_games_instance(
    graph: &ConstraintGraph,
    k: usize,
    permutations: &BTreeMap<(usize, usize), Vec<usize>>,
) -> Result<Csp2Instance> {
    let mut cs = Vec::with_capacity(graph.edges().len());
    for (index, e) in graph.edges().iter().enumerate() {
        let pi = permutations
            .get(&(e.i, e.j))
            .ok_or_else(|| Error::Input(format!("no permutation for edge ({}, {})", e.i, e.j)))?;
        if pi.len() != k {
            return input(format!("permutation for edge ({}, {}) has length {}", e.i, e.j, pi.len()));
        }
        let c = Constraint::bijection(e.i, e.j, e.w, pi.clone()).map_err(|_| Error::NotBijection { index })?;
        cs.push(c);
    }
    Csp2Instance::build(graph.n(), k, cs, true, !graph.is_regular())
}

pub fn is_unique_games(instance: &Csp2Instance) -> bool {
    instance.constraints.iter().all(|c| c.relation.as_bijection().is_some())
}

pub fn constraint_graph(instance: &Csp2Instance) -> ConstraintGraph {
    instance.graph.clone()
}

// ---------------------------------------------------------------------------
// JSON format

/// Weight as written in a file: a number or a decimal string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightRepr {
    Number(f64),
    Text(String),
}

impl WeightRepr {
    fn value(&self) -> Result<f64> {
        match self {
            WeightRepr::Number(w) => Ok(*w),
            WeightRepr::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("weight {s:?} is not a decimal number"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintFile {
    pub i: usize,
    pub j: usize,
    pub w: WeightRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<Vec<bool>>>,
}

/// On-disk instance format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub k: usize,
    #[serde(default)]
    pub unique_games: bool,
    /// Accept a constraint graph whose weighted degrees differ.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_irregular: bool,
    pub constraints: Vec<ConstraintFile>,
}

impl InstanceFile {
    pub fn from_instance(inst: &Csp2Instance) -> Self {
        let constraints = inst
            .constraints
            .iter()
            .map(|c| ConstraintFile {
                i: c.i,
                j: c.j,
                w: WeightRepr::Number(c.weight),
                pi: if inst.unique_games { c.pi.clone() } else { None },
                table: if inst.unique_games { None } else { Some(c.relation.rows()) },
            })
            .collect();
        InstanceFile {
            n: inst.n,
            k: inst.k,
            unique_games: inst.unique_games,
            allow_irregular: !inst.graph.is_regular(),
            constraints,
        }
    }

    pub fn to_instance(&self) -> Result<Csp2Instance> {
        let mut cs = Vec::with_capacity(self.constraints.len());
        for (index, c) in self.constraints.iter().enumerate() {
            let w = c.w.value()?;
            let con = match (&c.pi, &c.table) {
                (Some(pi), None) => {
                    if pi.len() != self.k {
                        return input(format!("constraint {index}: permutation length {} != k", pi.len()));
                    }
                    Constraint::bijection(c.i, c.j, w, pi.clone()).map_err(|_| Error::NotBijection { index })?
                }
                (None, Some(t)) => Constraint::new(c.i, c.j, w, Relation::from_table(self.k, t)?),
                _ => return input(format!("constraint {index} needs exactly one of \"pi\" or \"table\"")),
            };
            cs.push(con);
        }
        Csp2Instance::build(self.n, self.k, cs, self.unique_games, self.allow_irregular)
    }
}

impl Csp2Instance {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceFile::from_instance(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<InstanceFile>(s)?.to_instance()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k2() -> ConstraintGraph {
        ConstraintGraph::new(2, [(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn single_edge_cut() {
        let inst = max_cut_instance(&k2());
        assert_eq!(inst.value(&vec![0, 1].into()).unwrap(), 1.0);
        assert_eq!(inst.value(&vec![1, 1].into()).unwrap(), 0.0);
    }

    #[test]
    fn triangle_two_of_three() {
        let inst = max_cut_instance(&ConstraintGraph::complete(3).unwrap());
        let v = inst.value(&vec![0, 1, 0].into()).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identity_ug_constant_assignment() {
        let g = ConstraintGraph::cycle(5).unwrap();
        let perms = g.edges().iter().map(|e| ((e.i, e.j), vec![0, 1, 2])).collect();
        let inst = unique_games_instance(&g, 3, &perms).unwrap();
        for a in 0..3 {
            assert_eq!(inst.value(&vec![a; 5].into()).unwrap(), 1.0);
        }
    }

    #[test]
    fn input_errors() {
        let inst = max_cut_instance(&k2());
        assert!(inst.value(&vec![0].into()).is_err());
        assert!(inst.value(&vec![0, 2].into()).is_err());
    }

    #[test]
    fn irregular_rejected() {
        let r = ConstraintGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]);
        assert!(matches!(r, Err(Error::NotRegular { .. })));
        assert!(ConstraintGraph::with_regularity(3, [(0, 1, 1.0), (1, 2, 1.0)], true).is_ok());
    }

    #[test]
    fn self_loop_rejected() {
        assert!(ConstraintGraph::new(2, [(0, 0, 1.0), (0, 1, 1.0)]).is_err());
    }

    #[test]
    fn unique_games_detection() {
        let mc2 = max_cut_instance(&k2());
        assert!(is_unique_games(&mc2));
        let c = Constraint::new(0, 1, 1.0, Relation::inequality(3));
        let mc3 = Csp2Instance::new(2, 3, vec![c], false).unwrap();
        assert!(!is_unique_games(&mc3));
        // projection [3] -> [3] collapsing labels 1 and 2
        let proj = Relation::from_fn(3, |a, b| b == a.min(1));
        let lc = Csp2Instance::new(2, 3, vec![Constraint::new(0, 1, 1.0, proj)], false).unwrap();
        assert!(!is_unique_games(&lc));
    }

    #[test]
    fn orientation_is_normalized() {
        // constraint written as (1,0) with pi mapping label of 1 to label of 0
        let c = Constraint::bijection(1, 0, 1.0, vec![1, 2, 0]).unwrap();
        let inst = Csp2Instance::new(2, 3, vec![c], true).unwrap();
        let s = &inst.constraints()[0];
        assert_eq!((s.i, s.j), (0, 1));
        assert_eq!(s.pi.as_deref(), Some(&[2, 0, 1][..]));
        // x_1 = 0 -> x_0 = 1 satisfies the original
        assert_eq!(inst.value_of(&[1, 0]), 1.0);
    }

    #[test]
    fn json_round_trip_with_string_weights() {
        let s = r#"{"n":2,"k":2,"unique_games":false,
            "constraints":[{"i":0,"j":1,"w":"0.1","table":[[false,true],[true,false]]},
                           {"i":1,"j":0,"w":0.2,"table":[[true,false],[false,false]]}]}"#;
        let inst = Csp2Instance::from_json(s).unwrap();
        assert_eq!(inst.constraints()[0].weight, 0.1);
        let back = Csp2Instance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn disjoint_copies_shift_vertices() {
        let g = k2().disjoint_copies(3).unwrap();
        assert_eq!(g.n(), 6);
        assert_eq!(g.edges().len(), 3);
        assert!(g.is_regular());
        assert!(!g.is_connected());
    }
}
