use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::basis::{advance_range, subsets_up_to, BasisElement, MomentBasis};
use super::{Hierarchy, RelaxationConfig};
use crate::csp::Csp2Instance;
use crate::error::{input, Error, Result};
use crate::pseudodist::{advance, Table};

/// Cap on the total number of table entries across all materialized sets.
pub const TABLE_ENTRY_CAP: f64 = 4e6;

/// `constant + Σ coeff · x[var]`.
#[derive(Clone, Debug, Default)]
pub(crate) struct Affine {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl Affine {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }
}

/// Moment relaxation of a 2-CSP instance.
///
/// Unknowns are `z(U, γ) = Pr[X_U = γ]` for every materialized set `U` and
/// every `γ` using labels `1..k` only. Full tables follow by
/// inclusion–exclusion, so every table sums to one and all tables are
/// marginals of each other by construction. The PSD condition is imposed on
/// the moment matrix over the reduced basis.
#[derive(Clone, Debug)]
pub struct RelaxationProblem {
    instance: Csp2Instance,
    config: RelaxationConfig,
    psd_depth: usize,
    table_size: usize,
    sets: Vec<Vec<usize>>,
    set_index: HashMap<Vec<usize>, usize>,
    offsets: Vec<usize>,
    num_vars: usize,
    reduced_basis: MomentBasis,
    full_basis_size: usize,
    tables: Vec<Vec<Affine>>,
    objective: Affine,
}

impl RelaxationProblem {
    /// Lasserre relaxation of depth `d` with the default basis cap.
    pub fn lasserre(instance: &Csp2Instance, depth: usize) -> Result<Self> {
        Self::new(instance, RelaxationConfig::lasserre(depth))
    }

    pub fn new(instance: &Csp2Instance, config: RelaxationConfig) -> Result<Self> {
        let (n, k) = (instance.n(), instance.k());
        if k < 2 {
            return input("relaxation needs an alphabet of at least two labels");
        }
        let psd_depth = config.hierarchy.psd_depth();
        if psd_depth == 0 {
            return input("depth must be at least 1");
        }
        let full = MomentBasis::full_size(n, k, psd_depth);
        if full > config.basis_cap as f64 {
            return Err(Error::Cap {
                what: "moment basis size",
                size: full,
                cap: config.basis_cap as f64,
            });
        }
        let table_size = config.hierarchy.table_size(n);
        let sets = materialized_sets(n, table_size, &config)?;
        let entries: f64 = sets.iter().map(|s| (k as f64).powi(s.len() as i32)).sum();
        if entries > TABLE_ENTRY_CAP {
            return Err(Error::Cap {
                what: "table entry count",
                size: entries,
                cap: TABLE_ENTRY_CAP,
            });
        }
        let set_index: HashMap<Vec<usize>, usize> = sets.iter().cloned().enumerate().map(|(p, s)| (s, p)).collect();
        let mut offsets = Vec::with_capacity(sets.len());
        let mut num_vars = 0;
        for s in &sets {
            offsets.push(num_vars);
            num_vars += (k - 1).pow(s.len() as u32);
        }
        let mut p = RelaxationProblem {
            instance: instance.clone(),
            config,
            psd_depth,
            table_size,
            sets,
            set_index,
            offsets,
            num_vars,
            reduced_basis: MomentBasis::reduced(n, k, psd_depth),
            full_basis_size: full as usize,
            tables: Vec::new(),
            objective: Affine::default(),
        };
        p.tables = p.sets.iter().map(|s| p.table_exprs(s)).collect();
        p.objective = p.objective_expr()?;
        Ok(p)
    }

    pub fn instance(&self) -> &Csp2Instance {
        &self.instance
    }

    pub fn config(&self) -> &RelaxationConfig {
        &self.config
    }

    pub fn hierarchy(&self) -> Hierarchy {
        self.config.hierarchy
    }

    pub fn psd_depth(&self) -> usize {
        self.psd_depth
    }

    /// Largest materialized set size.
    pub fn table_size(&self) -> usize {
        self.table_size
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn reduced_basis(&self) -> &MomentBasis {
        &self.reduced_basis
    }

    /// Size of the full moment basis over labels `0..k`.
    pub fn basis_size(&self) -> usize {
        self.full_basis_size
    }

    pub(crate) fn table_exprs_of(&self, set: usize) -> &[Affine] {
        &self.tables[set]
    }

    pub(crate) fn objective_affine(&self) -> &Affine {
        &self.objective
    }

    /// Variable index of `z(set, labels)`; labels must all be nonzero.
    pub fn var_index(&self, set: &[usize], labels: &[usize]) -> Option<usize> {
        let s = *self.set_index.get(set)?;
        let k = self.instance.k();
        let mut idx = 0;
        for &a in labels {
            if a == 0 || a >= k {
                return None;
            }
            idx = idx * (k - 1) + (a - 1);
        }
        Some(self.offsets[s] + idx)
    }

    /// Expressions for every entry of the full table on `set`.
    fn table_exprs(&self, set: &[usize]) -> Vec<Affine> {
        let k = self.instance.k();
        let s = set.len();
        let mut out = Vec::with_capacity(k.pow(s as u32));
        let mut alpha = vec![0; s];
        loop {
            let nz: Vec<usize> = (0..s).filter(|&p| alpha[p] != 0).collect();
            let zeros: Vec<usize> = (0..s).filter(|&p| alpha[p] == 0).collect();
            let mut expr = Affine::default();
            for mask in 0u32..(1 << zeros.len()) {
                let extra: Vec<usize> = (0..zeros.len()).filter(|b| mask >> b & 1 == 1).map(|b| zeros[b]).collect();
                let sign = if extra.len() % 2 == 0 { 1.0 } else { -1.0 };
                let mut pos: Vec<usize> = nz.iter().chain(&extra).copied().collect();
                pos.sort_unstable();
                if pos.is_empty() {
                    expr.constant += sign;
                    continue;
                }
                let sub: Vec<usize> = pos.iter().map(|&p| set[p]).collect();
                let mut delta = vec![1; extra.len()];
                loop {
                    let labels: Vec<usize> = pos
                        .iter()
                        .map(|&p| match extra.iter().position(|&e| e == p) {
                            Some(t) => delta[t],
                            None => alpha[p],
                        })
                        .collect();
                    let v = self.var_index(&sub, &labels).expect("materialized sets are downward closed");
                    expr.terms.push((v, sign));
                    if !advance_range(&mut delta, 1, k) {
                        break;
                    }
                }
            }
            out.push(expr);
            if !advance(&mut alpha, k) {
                break;
            }
        }
        out
    }

    fn objective_expr(&self) -> Result<Affine> {
        let k = self.instance.k();
        let w = self.instance.total_weight();
        let mut acc: HashMap<usize, f64> = HashMap::new();
        let mut constant = 0.0;
        for c in self.instance.constraints() {
            let s = self.set_index[&vec![c.i, c.j]];
            for a in 0..k {
                for b in 0..k {
                    if c.satisfied(a, b) {
                        let e = &self.tables[s][a * k + b];
                        constant += c.weight * e.constant / w;
                        for &(v, co) in &e.terms {
                            *acc.entry(v).or_insert(0.0) += c.weight * co / w;
                        }
                    }
                }
            }
        }
        let mut terms: Vec<(usize, f64)> = acc.into_iter().filter(|(_, c)| *c != 0.0).collect();
        terms.sort_unstable_by_key(|t| t.0);
        Ok(Affine { constant, terms })
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// The independent uniform distribution, a strictly feasible point.
    pub fn uniform_point(&self) -> Vec<f64> {
        let k = self.instance.k() as f64;
        let mut x = vec![0.0; self.num_vars];
        for (s, set) in self.sets.iter().enumerate() {
            let cnt = (self.instance.k() - 1).pow(set.len() as u32);
            let val = k.powi(-(set.len() as i32));
            x[self.offsets[s]..self.offsets[s] + cnt].iter_mut().for_each(|v| *v = val);
        }
        x
    }

    /// Point whose tables are the marginals returned by `marginal`.
    pub fn point_from(&self, mut marginal: impl FnMut(&[usize]) -> Result<Table>) -> Result<Vec<f64>> {
        let k = self.instance.k();
        let mut x = vec![0.0; self.num_vars];
        for (s, set) in self.sets.iter().enumerate() {
            let t = marginal(set)?;
            let mut g = vec![1; set.len()];
            let mut idx = self.offsets[s];
            loop {
                x[idx] = t.prob(&g);
                idx += 1;
                if !advance_range(&mut g, 1, k) {
                    break;
                }
            }
        }
        Ok(x)
    }

    /// Full tables at `x`.
    pub fn tables_at(&self, x: &[f64]) -> Vec<Table> {
        let k = self.instance.k();
        self.sets
            .iter()
            .zip(&self.tables)
            .map(|(set, exprs)| {
                Table::new(set.clone(), k, exprs.iter().map(|e| e.eval(x)).collect()).expect("shape by construction")
            })
            .collect()
    }

    /// Entries of the reduced moment matrix as affine expressions, upper
    /// triangle in row-major order.
    pub(crate) fn reduced_entries(&self) -> Vec<(usize, usize, Affine)> {
        let el = self.reduced_basis.elements();
        let mut out = Vec::with_capacity(el.len() * (el.len() + 1) / 2);
        for p in 0..el.len() {
            for q in p..el.len() {
                let mut e = Affine::default();
                if let Some(m) = el[p].merge(&el[q]) {
                    if m.set.is_empty() {
                        e.constant = 1.0;
                    } else {
                        let v = self.var_index(&m.set, &m.labels).expect("psd support is materialized");
                        e.terms.push((v, 1.0));
                    }
                }
                out.push((p, q, e));
            }
        }
        out
    }

    pub fn reduced_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.reduced_basis.len();
        let mut m = DMatrix::zeros(n, n);
        for (p, q, e) in self.reduced_entries() {
            let v = e.eval(x);
            m[(p, q)] = v;
            m[(q, p)] = v;
        }
        m
    }

    /// Objective read off the pair entries `M[({i},a),({j},b)]` of a full
    /// moment matrix.
    pub fn objective_of_moments(&self, m: &super::MomentMatrix) -> Result<f64> {
        let k = self.instance.k();
        let basis = m.basis();
        let mut total = 0.0;
        for c in self.instance.constraints() {
            for a in 0..k {
                for b in 0..k {
                    if c.satisfied(a, b) {
                        let p = basis.singleton_position(c.i, a).ok_or_else(|| Error::Input("basis has no singletons".into()))?;
                        let q = basis.singleton_position(c.j, b).ok_or_else(|| Error::Input("basis has no singletons".into()))?;
                        total += c.weight * m.matrix()[(p, q)];
                    }
                }
            }
        }
        Ok(total / self.instance.total_weight())
    }

    /// Reduced basis element of `({i}, a)` for `a ≥ 1`.
    pub fn reduced_singleton(&self, i: usize, a: usize) -> Option<usize> {
        self.reduced_basis.position(&BasisElement {
            set: vec![i],
            labels: vec![a],
        })
    }
}

fn materialized_sets(n: usize, table_size: usize, config: &RelaxationConfig) -> Result<Vec<Vec<usize>>> {
    // Lasserre needs every set under 2d for the PSD block, so sampling only
    // thins the local tables above pairs.
    let sampled = config
        .sampled_sets
        .filter(|_| table_size > 2 && matches!(config.hierarchy, Hierarchy::Local { .. }));
    let Some(sample_cfg) = sampled else {
        return Ok(subsets_up_to(n, table_size));
    };
    let mut chosen: BTreeSet<Vec<usize>> = subsets_up_to(n, 2).into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sample_cfg.seed);
    for _ in 0..sample_cfg.count {
        let mut s = sample(&mut rng, n, table_size).into_vec();
        s.sort_unstable();
        for mask in 1u32..(1 << s.len()) {
            let sub: Vec<usize> = (0..s.len()).filter(|b| mask >> b & 1 == 1).map(|b| s[b]).collect();
            chosen.insert(sub);
        }
    }
    let mut out: Vec<Vec<usize>> = chosen.into_iter().collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(out)
}
