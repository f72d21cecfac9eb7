use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Index `(S, α)` of a moment vector `v_{S,α}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisElement {
    pub set: Vec<usize>,
    pub labels: Vec<usize>,
}

impl BasisElement {
    pub fn empty() -> Self {
        BasisElement {
            set: vec![],
            labels: vec![],
        }
    }

    /// The event `X_S = α ∧ X_T = β` as a single `(S ∪ T, merged)` pair, or
    /// `None` when the two assign different labels to a shared vertex.
    pub fn merge(&self, other: &BasisElement) -> Option<BasisElement> {
        let (mut p, mut q) = (0, 0);
        let mut set = Vec::with_capacity(self.set.len() + other.set.len());
        let mut labels = Vec::with_capacity(set.capacity());
        while p < self.set.len() || q < other.set.len() {
            let take_self = q >= other.set.len() || (p < self.set.len() && self.set[p] < other.set[q]);
            let take_other = p >= self.set.len() || (q < other.set.len() && other.set[q] < self.set[p]);
            if take_self {
                set.push(self.set[p]);
                labels.push(self.labels[p]);
                p += 1;
            } else if take_other {
                set.push(other.set[q]);
                labels.push(other.labels[q]);
                q += 1;
            } else {
                if self.labels[p] != other.labels[q] {
                    return None;
                }
                set.push(self.set[p]);
                labels.push(self.labels[p]);
                p += 1;
                q += 1;
            }
        }
        Some(BasisElement { set, labels })
    }
}

/// Ordered moment basis: subsets of size at most `depth` ordered by size then
/// lexicographically, each with its label assignments in lexicographic order.
/// A reduced basis uses only labels `1..k`.
#[derive(Clone, Debug)]
pub struct MomentBasis {
    n: usize,
    k: usize,
    depth: usize,
    reduced: bool,
    elements: Vec<BasisElement>,
    index: HashMap<BasisElement, usize>,
}

impl MomentBasis {
    pub fn full(n: usize, k: usize, depth: usize) -> Self {
        Self::build(n, k, depth, false)
    }

    pub fn reduced(n: usize, k: usize, depth: usize) -> Self {
        Self::build(n, k, depth, true)
    }

    fn build(n: usize, k: usize, depth: usize, reduced: bool) -> Self {
        let lo = usize::from(reduced);
        let mut elements = vec![BasisElement::empty()];
        for set in subsets_up_to(n, depth) {
            let s = set.len();
            let mut labels = vec![lo; s];
            loop {
                elements.push(BasisElement {
                    set: set.clone(),
                    labels: labels.clone(),
                });
                if !advance_range(&mut labels, lo, k) {
                    break;
                }
            }
        }
        let index = elements.iter().cloned().enumerate().map(|(p, e)| (e, p)).collect();
        MomentBasis {
            n,
            k,
            depth,
            reduced,
            elements,
            index,
        }
    }

    /// `Σ_{s ≤ d} C(n, s) k^s` without building the basis.
    pub fn full_size(n: usize, k: usize, depth: usize) -> f64 {
        let mut total = 0.0;
        let mut binom = 1.0;
        for s in 0..=depth.min(n) {
            total += binom * (k as f64).powi(s as i32);
            binom = binom * (n - s) as f64 / (s + 1) as f64;
        }
        total
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[BasisElement] {
        &self.elements
    }

    pub fn position(&self, e: &BasisElement) -> Option<usize> {
        self.index.get(e).copied()
    }

    /// Position of `({i}, a)`.
    pub fn singleton_position(&self, i: usize, a: usize) -> Option<usize> {
        self.position(&BasisElement {
            set: vec![i],
            labels: vec![a],
        })
    }
}

/// Nonempty subsets of `[n]` with at most `max` elements, by size then
/// lexicographically.
pub fn subsets_up_to(n: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for s in 1..=max.min(n) {
        let mut c: Vec<usize> = (0..s).collect();
        loop {
            out.push(c.clone());
            let mut p = s;
            while p > 0 && c[p - 1] == n - s + p - 1 {
                p -= 1;
            }
            if p == 0 {
                break;
            }
            c[p - 1] += 1;
            for q in p..s {
                c[q] = c[q - 1] + 1;
            }
        }
    }
    out
}

/// Odometer over `lo..k` per slot.
pub(crate) fn advance_range(labels: &mut [usize], lo: usize, k: usize) -> bool {
    for slot in labels.iter_mut().rev() {
        *slot += 1;
        if *slot < k {
            return true;
        }
        *slot = lo;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_sizes() {
        assert_eq!(MomentBasis::full(2, 2, 1).len(), 5);
        assert_eq!(MomentBasis::full(3, 2, 2).len(), 19);
        assert_eq!(MomentBasis::full_size(3, 2, 2), 19.0);
        assert_eq!(MomentBasis::full_size(12, 3, 2), 631.0);
        assert_eq!(MomentBasis::reduced(3, 2, 2).len(), 7);
    }

    #[test]
    fn canonical_order() {
        let b = MomentBasis::full(3, 2, 2);
        let e = b.elements();
        assert_eq!(e[0], BasisElement::empty());
        assert_eq!(e[1].set, vec![0]);
        assert!(e.windows(2).all(|w| (w[0].set.len(), &w[0].set, &w[0].labels) < (w[1].set.len(), &w[1].set, &w[1].labels)));
    }

    #[test]
    fn merging() {
        let a = BasisElement {
            set: vec![0, 2],
            labels: vec![1, 0],
        };
        let b = BasisElement {
            set: vec![1, 2],
            labels: vec![1, 0],
        };
        let m = a.merge(&b).unwrap();
        assert_eq!(m.set, vec![0, 1, 2]);
        assert_eq!(m.labels, vec![1, 1, 0]);
        let c = BasisElement {
            set: vec![2],
            labels: vec![1],
        };
        assert!(a.merge(&c).is_none());
    }

    #[test]
    fn subset_enumeration() {
        let s = subsets_up_to(4, 2);
        assert_eq!(s.len(), 4 + 6);
        assert_eq!(s[4], vec![0, 1]);
        assert_eq!(s[9], vec![2, 3]);
    }
}
