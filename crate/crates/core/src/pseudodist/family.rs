use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::joint::JointDistribution;
use super::table::Table;
use crate::error::{input, Error, Result};

/// Conditioning events lighter than this are rejected.
pub const ZERO_MASS: f64 = 1e-12;

/// Read access to marginal tables of a (possibly local) distribution.
pub trait Marginals {
    fn n(&self) -> usize;
    fn k(&self) -> usize;

    /// Marginal on distinct `vars` (any order); the result is keyed by the
    /// sorted variables.
    fn marginal(&self, vars: &[usize]) -> Result<Table>;

    fn singleton(&self, i: usize) -> Result<Vec<f64>> {
        Ok(self.marginal(&[i])?.into_probs())
    }

    fn singletons(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.n()).map(|i| self.singleton(i)).collect()
    }

    /// Row-major `k×k` table of `(X_i, X_j)`. For `i == j` the diagonal.
    fn pair(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        let k = self.k();
        if i == j {
            let p = self.singleton(i)?;
            let mut out = vec![0.0; k * k];
            for a in 0..k {
                out[a * k + a] = p[a];
            }
            return Ok(out);
        }
        let t = self.marginal(&[i.min(j), i.max(j)])?.into_probs();
        if i < j {
            return Ok(t);
        }
        let mut out = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                out[a * k + b] = t[b * k + a];
            }
        }
        Ok(out)
    }
}

/// Where a family's tables come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ExactDistribution,
    Solver,
    Fitted,
}

#[derive(Clone, Debug)]
enum Source {
    Tables(BTreeMap<Vec<usize>, Table>),
    Joint(JointDistribution),
    Product(Vec<Vec<f64>>),
}

/// Consistent local distributions on every subset of at most `max_set`
/// vertices. The conditioning order is `max_set − 2`.
#[derive(Clone, Debug)]
pub struct LocalDistributionFamily {
    n: usize,
    k: usize,
    max_set: usize,
    provenance: Provenance,
    source: Source,
}

fn canonical(vars: &[usize]) -> Result<Vec<usize>> {
    let mut v = vars.to_vec();
    v.sort_unstable();
    if v.windows(2).any(|w| w[0] == w[1]) {
        return input(format!("repeated vertex in {vars:?}"));
    }
    Ok(v)
}

impl LocalDistributionFamily {
    /// Family from explicit tables. Each table must be nonnegative and sum to
    /// one within 1e-8. `max_set` is the largest table size.
    pub fn from_tables(n: usize, k: usize, tables: Vec<Table>, provenance: Provenance) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut max_set = 0;
        for t in tables {
            if t.k() != k || t.vars().iter().any(|&v| v >= n) {
                return input(format!("table over {:?} does not fit n={n}, k={k}", t.vars()));
            }
            let bad = t.validity_violation();
            if bad > 1e-8 {
                return input(format!("table over {:?} is not a distribution (violation {bad:e})", t.vars()));
            }
            max_set = max_set.max(t.vars().len());
            map.insert(t.vars().to_vec(), t);
        }
        Ok(LocalDistributionFamily {
            n,
            k,
            max_set,
            provenance,
            source: Source::Tables(map),
        })
    }

    /// The marginals of a true joint distribution, available on every subset.
    pub fn from_joint(joint: JointDistribution) -> Self {
        LocalDistributionFamily {
            n: joint.n(),
            k: joint.k(),
            max_set: joint.n(),
            provenance: Provenance::ExactDistribution,
            source: Source::Joint(joint),
        }
    }

    /// Independent vertices with the given marginals.
    pub fn product(k: usize, marginals: Vec<Vec<f64>>) -> Result<Self> {
        for (i, p) in marginals.iter().enumerate() {
            if p.len() != k || p.iter().any(|&x| x < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-8 {
                return input(format!("marginal {i} is not a distribution over [{k}]"));
            }
        }
        Ok(LocalDistributionFamily {
            n: marginals.len(),
            k,
            max_set: marginals.len(),
            provenance: Provenance::ExactDistribution,
            source: Source::Product(marginals),
        })
    }

    pub fn point_mass(k: usize, x: &[usize]) -> Result<Self> {
        Ok(Self::from_joint(JointDistribution::point_mass(k, x)?))
    }

    pub fn max_set(&self) -> usize {
        self.max_set
    }

    /// Conditioning budget `m` with tables on sets of size `m + 2`.
    pub fn order(&self) -> usize {
        self.max_set.saturating_sub(2)
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn joint(&self) -> Option<&JointDistribution> {
        match &self.source {
            Source::Joint(j) => Some(j),
            _ => None,
        }
    }

    /// Stored subsets for table-backed families, `None` when every subset is
    /// derivable.
    pub fn stored_subsets(&self) -> Option<Vec<Vec<usize>>> {
        match &self.source {
            Source::Tables(m) => Some(m.keys().cloned().collect()),
            _ => None,
        }
    }

    pub fn tables(&self) -> Option<impl Iterator<Item = &Table>> {
        match &self.source {
            Source::Tables(m) => Some(m.values()),
            _ => None,
        }
    }

    /// Largest `ℓ1` gap between a stored table marginalized onto a stored
    /// subset (one variable fewer) and that subset's table.
    pub fn consistency_violation(&self) -> f64 {
        let Source::Tables(map) = &self.source else {
            return 0.0;
        };
        let mut worst: f64 = 0.0;
        for (vars, t) in map {
            for drop in 0..vars.len() {
                let mut sub = vars.clone();
                sub.remove(drop);
                if let Some(s) = map.get(&sub) {
                    let m = t.marginalize(&sub).expect("subset of own vars");
                    worst = worst.max(m.l1_distance(s).expect("same vars"));
                }
            }
        }
        worst
    }

    /// Checks table validity (1e-8) and consistency (1e-7).
    pub fn validate(&self) -> Result<()> {
        if let Source::Tables(map) = &self.source {
            for t in map.values() {
                let bad = t.validity_violation();
                if bad > 1e-8 {
                    return Err(Error::Invariant(format!("table over {:?} has violation {bad:e}", t.vars())));
                }
            }
        }
        let c = self.consistency_violation();
        if c > 1e-7 {
            return Err(Error::Invariant(format!("family is inconsistent by {c:e}")));
        }
        Ok(())
    }

    /// Conditions on `X_seeds = values`. Seeds may repeat if their values agree.
    pub fn condition(&self, seeds: &[usize], values: &[usize]) -> Result<ConditionedFamily<'_>> {
        if seeds.len() != values.len() {
            return input("seed and value lists differ in length");
        }
        let mut pairs: BTreeMap<usize, usize> = BTreeMap::new();
        for (&s, &a) in seeds.iter().zip(values) {
            if s >= self.n || a >= self.k {
                return input(format!("seed ({s}, {a}) out of range"));
            }
            if let Some(&b) = pairs.get(&s) {
                if a != b {
                    return Err(Error::ZeroProbability(0.0));
                }
            }
            pairs.insert(s, a);
        }
        let seeds: Vec<usize> = pairs.keys().copied().collect();
        let values: Vec<usize> = pairs.values().copied().collect();
        if seeds.len() > self.max_set {
            return Err(Error::Budget {
                needed: seeds.len(),
                available: self.max_set,
            });
        }
        if let Source::Joint(j) = &self.source {
            let (cond, mass) = j.condition(&seeds, &values).ok_or(Error::ZeroProbability(0.0))?;
            if mass <= ZERO_MASS {
                return Err(Error::ZeroProbability(mass));
            }
            return Ok(ConditionedFamily {
                base: self,
                seeds,
                values,
                mass,
                joint: Some(cond),
            });
        }
        let mass = self.marginal(&seeds)?.prob(&values);
        if mass <= ZERO_MASS {
            return Err(Error::ZeroProbability(mass));
        }
        Ok(ConditionedFamily {
            base: self,
            seeds,
            values,
            mass,
            joint: None,
        })
    }

    /// All seed assignments of positive mass with their conditioned views.
    /// `seeds` are deduplicated.
    pub fn partition(&self, seeds: &[usize]) -> Result<Vec<ConditionedFamily<'_>>> {
        let seeds = {
            let mut s = seeds.to_vec();
            s.sort_unstable();
            s.dedup();
            s
        };
        if seeds.len() > self.max_set {
            return Err(Error::Budget {
                needed: seeds.len(),
                available: self.max_set,
            });
        }
        if let Source::Joint(j) = &self.source {
            return Ok(j
                .partition(&seeds)
                .into_iter()
                .filter(|(_, mass, _)| *mass > ZERO_MASS)
                .map(|(values, mass, cond)| ConditionedFamily {
                    base: self,
                    seeds: seeds.clone(),
                    values,
                    mass,
                    joint: Some(cond),
                })
                .collect());
        }
        let t = self.marginal(&seeds)?;
        Ok(t
            .probs()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > ZERO_MASS)
            .map(|(idx, &mass)| ConditionedFamily {
                base: self,
                seeds: seeds.clone(),
                values: t.labels_of(idx),
                mass,
                joint: None,
            })
            .collect())
    }

    /// Serializable snapshot.
    pub fn dump(&self) -> FamilyDump {
        let body = match &self.source {
            Source::Tables(m) => FamilyBody::Tables(m.values().cloned().collect()),
            Source::Joint(j) => FamilyBody::Joint(j.clone()),
            Source::Product(p) => FamilyBody::Product(p.clone()),
        };
        FamilyDump {
            n: self.n,
            k: self.k,
            max_set: self.max_set,
            provenance: self.provenance,
            body,
        }
    }

    pub fn from_dump(d: FamilyDump) -> Result<Self> {
        let mut f = match d.body {
            FamilyBody::Tables(t) => Self::from_tables(d.n, d.k, t, d.provenance)?,
            FamilyBody::Joint(j) => Self::from_joint(j),
            FamilyBody::Product(p) => Self::product(d.k, p)?,
        };
        f.provenance = d.provenance;
        Ok(f)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyBody {
    Tables(Vec<Table>),
    Joint(JointDistribution),
    Product(Vec<Vec<f64>>),
}

/// JSON form of a family: subset tables, a joint support, or product marginals.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyDump {
    pub n: usize,
    pub k: usize,
    pub max_set: usize,
    pub provenance: Provenance,
    pub body: FamilyBody,
}

impl Marginals for LocalDistributionFamily {
    fn n(&self) -> usize {
        self.n
    }

    fn k(&self) -> usize {
        self.k
    }

    fn marginal(&self, vars: &[usize]) -> Result<Table> {
        let vars = canonical(vars)?;
        if let Some(&v) = vars.iter().find(|&&v| v >= self.n) {
            return input(format!("vertex {v} out of range"));
        }
        if vars.len() > self.max_set {
            return Err(Error::Budget {
                needed: vars.len(),
                available: self.max_set,
            });
        }
        match &self.source {
            Source::Joint(j) => j.marginal(&vars),
            Source::Product(p) => {
                let ms: Vec<&[f64]> = vars.iter().map(|&v| p[v].as_slice()).collect();
                Table::product(vars, self.k, &ms)
            }
            Source::Tables(map) => {
                if vars.is_empty() {
                    return Table::new(vec![], self.k, vec![1.0]);
                }
                if let Some(t) = map.get(&vars) {
                    return Ok(t.clone());
                }
                let sup = map
                    .iter()
                    .filter(|(key, _)| key.len() > vars.len() && vars.iter().all(|v| key.binary_search(v).is_ok()))
                    .min_by_key(|(key, _)| key.len());
                match sup {
                    Some((_, t)) => t.marginalize(&vars),
                    None => Err(Error::UnavailableSubset(vars)),
                }
            }
        }
    }

    fn singletons(&self) -> Result<Vec<Vec<f64>>> {
        match &self.source {
            Source::Joint(j) => Ok(j.singletons()),
            Source::Product(p) => Ok(p.clone()),
            Source::Tables(_) => (0..self.n).map(|i| self.singleton(i)).collect(),
        }
    }
}

/// `{X | X_S = x_S}` as a view on a base family.
#[derive(Clone, Debug)]
pub struct ConditionedFamily<'a> {
    base: &'a LocalDistributionFamily,
    seeds: Vec<usize>,
    values: Vec<usize>,
    mass: f64,
    joint: Option<JointDistribution>,
}

impl<'a> ConditionedFamily<'a> {
    pub fn seeds(&self) -> &[usize] {
        &self.seeds
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    /// `μ_S(x_S)`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn base(&self) -> &'a LocalDistributionFamily {
        self.base
    }

    pub fn joint(&self) -> Option<&JointDistribution> {
        self.joint.as_ref()
    }

    pub fn seed_value(&self, v: usize) -> Option<usize> {
        self.seeds.binary_search(&v).ok().map(|p| self.values[p])
    }
}

impl Marginals for ConditionedFamily<'_> {
    fn n(&self) -> usize {
        self.base.n
    }

    fn k(&self) -> usize {
        self.base.k
    }

    fn marginal(&self, vars: &[usize]) -> Result<Table> {
        let vars = canonical(vars)?;
        if let Some(j) = &self.joint {
            return j.marginal(&vars);
        }
        let mut union = vars.clone();
        union.extend(self.seeds.iter().copied().filter(|s| vars.binary_search(s).is_err()));
        union.sort_unstable();
        if union.len() > self.base.max_set {
            return Err(Error::Budget {
                needed: union.len(),
                available: self.base.max_set,
            });
        }
        let full = self.base.marginal(&union)?;
        let k = self.base.k;
        let mut out = Table::uniform(vars.clone(), k)?;
        let pos: Vec<usize> = vars.iter().map(|v| full.position(*v).expect("in union")).collect();
        let mut labels = vec![0usize; union.len()];
        for (s, &a) in self.seeds.iter().zip(&self.values) {
            labels[full.position(*s).expect("in union")] = a;
        }
        let mut total = 0.0;
        for idx in 0..out.len() {
            let t_labels = out.labels_of(idx);
            let consistent = vars.iter().zip(&t_labels).all(|(v, &a)| self.seed_value(*v).is_none_or(|b| a == b));
            let p = if consistent {
                for (&p, &a) in pos.iter().zip(&t_labels) {
                    labels[p] = a;
                }
                full.prob(&labels)
            } else {
                0.0
            };
            out.probs_mut()[idx] = p;
            total += p;
        }
        if total <= ZERO_MASS {
            return Err(Error::ZeroProbability(total));
        }
        Ok(out.scaled(1.0 / total))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn correlated_bits() -> LocalDistributionFamily {
        LocalDistributionFamily::from_joint(
            JointDistribution::from_weights(2, 2, [(vec![0, 0], 1.0), (vec![1, 1], 1.0)]).unwrap(),
        )
    }

    #[test]
    fn product_marginal_is_product() {
        let f = LocalDistributionFamily::product(2, vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let t = f.marginal(&[1, 0]).unwrap();
        assert_eq!(t.vars(), &[0, 1]);
        assert!((t.prob(&[1, 0]) - 0.42).abs() < 1e-15);
        let c = f.condition(&[0], &[1]).unwrap();
        assert!((c.singleton(1).unwrap()[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn point_mass_marginal() {
        let f = LocalDistributionFamily::point_mass(3, &[2, 0, 1]).unwrap();
        let t = f.marginal(&[0, 2]).unwrap();
        assert_eq!(t.prob(&[2, 1]), 1.0);
    }

    #[test]
    fn conditioning_correlated_bits() {
        let f = correlated_bits();
        let c = f.condition(&[0], &[0]).unwrap();
        assert_eq!(c.singleton(1).unwrap(), vec![1.0, 0.0]);
        assert!((c.mass() - 0.5).abs() < 1e-15);
        assert!(matches!(f.condition(&[0, 1], &[0, 1]), Err(Error::ZeroProbability(_))));
    }

    #[test]
    fn table_family_consistency_and_budget() {
        let pair = Table::new(vec![0, 1], 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let s0 = Table::new(vec![0], 2, vec![0.5, 0.5]).unwrap();
        let s1 = Table::new(vec![1], 2, vec![0.5, 0.5]).unwrap();
        let f = LocalDistributionFamily::from_tables(3, 2, vec![pair, s0, s1], Provenance::Solver).unwrap();
        assert_eq!(f.max_set(), 2);
        assert_eq!(f.order(), 0);
        assert!(f.consistency_violation() < 1e-15);
        let c = f.condition(&[1], &[1]).unwrap();
        assert_eq!(c.singleton(0).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(f.marginal(&[0, 1, 2]), Err(Error::Budget { .. })));
        let parts = f.partition(&[0]).unwrap();
        assert_eq!(parts.len(), 2);
    }

    #[test]
    fn inconsistent_tables_detected() {
        let pair = Table::new(vec![0, 1], 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let s0 = Table::new(vec![0], 2, vec![0.9, 0.1]).unwrap();
        let f = LocalDistributionFamily::from_tables(2, 2, vec![pair, s0], Provenance::Solver).unwrap();
        assert!((f.consistency_violation() - 0.8).abs() < 1e-12);
        assert!(f.validate().is_err());
    }

    #[test]
    fn dump_round_trip() {
        let f = correlated_bits();
        let s = serde_json::to_string(&f.dump()).unwrap();
        let g = LocalDistributionFamily::from_dump(serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(g.pair(0, 1).unwrap(), f.pair(0, 1).unwrap());
    }
}
