//! Sparse storage for symmetric tensors keyed by canonical sorted index,
//! rank-one assembly, the zero-entry dominance screen, and seeded random
//! instance generators (ChaCha8, so tables reproduce across platforms).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CpError, Result};

/// Values this close to zero are snapped to exact zero when stored; the
/// zero pattern drives clique generation and must not contain dust.
pub const ZERO_SNAP: f64 = 1e-12;

/// A canonical (sorted non-decreasing) index tuple of length m with
/// 1-based entries.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexTuple {
    entries: Vec<usize>,
}

impl IndexTuple {
    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    /// Distinct elements, sorted ascending.
    pub fn distinct(&self) -> Vec<usize> {
        let mut d = self.entries.clone();
        d.dedup();
        d
    }

    /// Number of distinct permutations of this tuple: m! / prod(mult_i!).
    pub fn orbit_size(&self) -> u64 {
        let m = self.entries.len();
        let mut size = factorial(m);
        let mut run = 1usize;
        for j in 1..m {
            if self.entries[j] == self.entries[j - 1] {
                run += 1;
            } else {
                size /= factorial(run);
                run = 1;
            }
        }
        size / factorial(run)
    }
}

fn factorial(k: usize) -> u64 {
    (1..=k as u64).product::<u64>().max(1)
}

/// Sorts a raw index into its canonical representative, checking range.
pub fn canonical_index(raw: &[usize], dim: usize) -> Result<IndexTuple> {
    for &e in raw {
        if e < 1 || e > dim {
            return Err(CpError::InvalidIndex { entry: e, dim });
        }
    }
    let mut entries = raw.to_vec();
    entries.sort_unstable();
    Ok(IndexTuple { entries })
}

/// All canonical index tuples (1 <= i_1 <= ... <= i_m <= n) in
/// non-decreasing lexicographic order.
pub fn canonical_indices(dim: usize, order: usize) -> Vec<IndexTuple> {
    let mut out = Vec::new();
    let mut cur = vec![1usize; order];
    loop {
        out.push(IndexTuple {
            entries: cur.clone(),
        });
        // advance to the next non-decreasing tuple
        let mut j = order;
        loop {
            if j == 0 {
                return out;
            }
            j -= 1;
            if cur[j] < dim {
                cur[j] += 1;
                for k in j + 1..order {
                    cur[k] = cur[j];
                }
                break;
            }
        }
    }
}

/// C(n+m-1, m): the number of canonical indices of an order-m
/// dimension-n symmetric tensor.
pub fn canonical_count(dim: usize, order: usize) -> u64 {
    binomial((dim + order - 1) as u64, order as u64)
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Order-m dimension-n symmetric tensor stored as a sparse map from
/// canonical index to value; absent entries are zero. Immutable after
/// construction via the builder-style setters.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTensor {
    order: usize,
    dim: usize,
    entries: BTreeMap<IndexTuple, f64>,
}

impl SymmetricTensor {
    pub fn zeros(order: usize, dim: usize) -> Self {
        assert!(order >= 2 && dim >= 1, "require m >= 2, n >= 1");
        SymmetricTensor {
            order,
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored (nonzero) canonical entries in lexicographic order.
    pub fn entries(&self) -> impl Iterator<Item = (&IndexTuple, f64)> {
        self.entries.iter().map(|(k, &v)| (k, v))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Sets the entry at any permutation of a canonical index.
    /// Values with |v| <= 1e-12 are stored as exact zeros.
    pub fn set(&mut self, raw: &[usize], value: f64) -> Result<()> {
        if raw.len() != self.order {
            return Err(CpError::WrongOrder {
                got: raw.len(),
                expected: self.order,
            });
        }
        let idx = canonical_index(raw, self.dim)?;
        if !value.is_finite() {
            return Err(CpError::NonFiniteEntry {
                index: idx.entries.clone(),
            });
        }
        if value.abs() <= ZERO_SNAP {
            self.entries.remove(&idx);
        } else {
            self.entries.insert(idx, value);
        }
        Ok(())
    }

    pub fn add(&mut self, raw: &[usize], value: f64) -> Result<()> {
        let idx = canonical_index(raw, self.dim)?;
        let cur = self.entries.get(&idx).copied().unwrap_or(0.0);
        self.set(raw, cur + value)
    }

    /// Entry lookup under any permutation of the index.
    pub fn get(&self, raw: &[usize]) -> Result<f64> {
        let idx = canonical_index(raw, self.dim)?;
        Ok(self.entries.get(&idx).copied().unwrap_or(0.0))
    }

    pub fn get_canonical(&self, idx: &IndexTuple) -> f64 {
        self.entries.get(idx).copied().unwrap_or(0.0)
    }

    /// Errors with the offending entry if any stored value is negative.
    pub fn check_nonnegative(&self) -> Result<()> {
        for (idx, v) in self.entries() {
            if v < 0.0 {
                return Err(CpError::NotNonnegative {
                    index: idx.entries.clone(),
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Entrywise 1-norm distance over the full m-way array: each canonical
    /// index weighted by its permutation-orbit size.
    pub fn l1_distance(&self, other: &SymmetricTensor) -> Result<f64> {
        if self.order != other.order || self.dim != other.dim {
            return Err(CpError::ShapeError {
                m1: self.order,
                n1: self.dim,
                m2: other.order,
                n2: other.dim,
            });
        }
        let mut sum = 0.0;
        for (idx, v) in self.entries() {
            let w = other.get_canonical(idx);
            sum += idx.orbit_size() as f64 * (v - w).abs();
        }
        for (idx, w) in other.entries() {
            if !self.entries.contains_key(idx) {
                sum += idx.orbit_size() as f64 * w.abs();
            }
        }
        Ok(sum)
    }
}

/// m-fold symmetric outer power v^{⊗m}, stored sparsely over Supp(v).
pub fn outer_power(v: &[f64], order: usize) -> SymmetricTensor {
    assert!(order >= 2);
    let dim = v.len();
    let mut t = SymmetricTensor::zeros(order, dim);
    let support: Vec<usize> = (0..dim).filter(|&i| v[i] != 0.0).collect();
    if support.is_empty() {
        return t;
    }
    // canonical tuples over the support only
    let mut pick = vec![0usize; order]; // positions into `support`, non-decreasing
    loop {
        let idx: Vec<usize> = pick.iter().map(|&p| support[p] + 1).collect();
        let val: f64 = pick.iter().map(|&p| v[support[p]]).product();
        t.add(&idx, val).expect("in-range by construction");
        let mut j = order;
        loop {
            if j == 0 {
                return t;
            }
            j -= 1;
            if pick[j] + 1 < support.len() {
                pick[j] += 1;
                for k in j + 1..order {
                    pick[k] = pick[j];
                }
                break;
            }
        }
    }
}

/// One weighted rank-one term of a completely positive decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub vector: Vec<f64>,
    /// Maximal clique the atom was extracted from, when known (1-based).
    pub clique: Option<Vec<usize>>,
}

/// Weighted atoms (lambda_r, v_r) with v_r >= 0 and unit 2-norm;
/// reassembles A = sum_r lambda_r v_r^{⊗m}.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub order: usize,
    pub dim: usize,
    pub atoms: Vec<Atom>,
}

impl Decomposition {
    pub fn empty(order: usize, dim: usize) -> Self {
        Decomposition {
            order,
            dim,
            atoms: Vec::new(),
        }
    }

    /// Weights absorbed into the vectors: v'_r = lambda_r^{1/m} v_r, the
    /// unweighted sum-of-outer-powers form.
    pub fn absorbed(&self) -> Vec<Vec<f64>> {
        self.atoms
            .iter()
            .map(|a| {
                let s = a.weight.powf(1.0 / self.order as f64);
                a.vector.iter().map(|&x| s * x).collect()
            })
            .collect()
    }

    pub fn check_invariants(&self) -> Result<()> {
        for a in &self.atoms {
            if a.weight <= 0.0 {
                return Err(CpError::NumericalFailure(format!(
                    "non-positive atom weight {}",
                    a.weight
                )));
            }
            if a.vector.len() != self.dim {
                return Err(CpError::ShapeError {
                    m1: self.order,
                    n1: self.dim,
                    m2: self.order,
                    n2: a.vector.len(),
                });
            }
            if a.vector.iter().any(|&x| x < 0.0) {
                return Err(CpError::NumericalFailure(
                    "atom vector has a negative component".into(),
                ));
            }
            let norm = a.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-8 {
                return Err(CpError::NumericalFailure(format!(
                    "atom vector norm {norm} is not 1"
                )));
            }
            if let Some(clique) = &a.clique {
                for (i, &x) in a.vector.iter().enumerate() {
                    if x != 0.0 && !clique.contains(&(i + 1)) {
                        return Err(CpError::NumericalFailure(format!(
                            "atom support {} outside tagged clique {:?}",
                            i + 1,
                            clique
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Sum of weighted outer powers; an empty atom list gives the zero tensor.
pub fn from_decomposition(d: &Decomposition) -> SymmetricTensor {
    let mut t = SymmetricTensor::zeros(d.order, d.dim);
    for atom in &d.atoms {
        let term = outer_power(&atom.vector, d.order);
        for (idx, v) in term.entries() {
            t.add(idx.entries(), atom.weight * v)
                .expect("shapes agree by construction");
        }
    }
    t
}

/// A zero entry whose distinct-element set is dominated by a positive
/// entry's, contradicting complete positivity (zero-entry dominance).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DominanceViolation {
    pub zero_index: IndexTuple,
    pub positive_index: IndexTuple,
}

/// Scans every canonical index (structural zeros included) and reports
/// each (zero, positive) pair where the zero's distinct set is contained
/// in the positive's. Empty output is necessary, not sufficient, for
/// complete positivity.
pub fn dominance_violations(a: &SymmetricTensor) -> Result<Vec<DominanceViolation>> {
    a.check_nonnegative()?;
    let positives: Vec<(&IndexTuple, Vec<usize>)> = a
        .entries()
        .filter(|&(_, v)| v > 0.0)
        .map(|(idx, _)| (idx, idx.distinct()))
        .collect();
    let mut out = Vec::new();
    for zero in canonical_indices(a.dim(), a.order()) {
        if a.get_canonical(&zero) > 0.0 {
            continue;
        }
        let zd = zero.distinct();
        for (pidx, pd) in &positives {
            if is_subset(&zd, pd) {
                out.push(DominanceViolation {
                    zero_index: zero.clone(),
                    positive_index: (*pidx).clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Both inputs sorted ascending.
pub(crate) fn is_subset(small: &[usize], big: &[usize]) -> bool {
    if small.len() > big.len() {
        return false;
    }
    let mut j = 0;
    for &s in small {
        while j < big.len() && big[j] < s {
            j += 1;
        }
        if j == big.len() || big[j] != s {
            return false;
        }
        j += 1;
    }
    true
}

/// Draws a random completely positive tensor together with its witness
/// decomposition. Atoms have uniformly random support of size <=
/// max_support, entries uniform in (0,1] on the support (then normalized
/// to unit 2-norm), and weights uniform in (0.5, 2).
pub fn random_cp(
    dim: usize,
    order: usize,
    num_atoms: usize,
    max_support: usize,
    seed: u64,
) -> (SymmetricTensor, Decomposition) {
    assert!(max_support >= 1 && max_support <= dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut decomp = Decomposition::empty(order, dim);
    for _ in 0..num_atoms {
        let support_size = rng.gen_range(1..=max_support);
        let mut verts: Vec<usize> = (0..dim).collect();
        verts.shuffle(&mut rng);
        verts.truncate(support_size);
        let mut v = vec![0.0; dim];
        for &i in &verts {
            v[i] = 1.0 - rng.gen::<f64>(); // uniform in (0, 1]
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
        let weight = rng.gen_range(0.5..2.0);
        decomp.atoms.push(Atom {
            weight,
            vector: v,
            clique: None,
        });
    }
    (from_decomposition(&decomp), decomp)
}

/// Random symmetric binary tensor with unit diagonal and exactly
/// ceil(nzd * (C(n+m-1,m) - n)) additional off-diagonal ones, positions
/// uniform without replacement.
pub fn random_binary_sparse(dim: usize, order: usize, nzd: f64, seed: u64) -> SymmetricTensor {
    assert!((0.0..=1.0).contains(&nzd));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = SymmetricTensor::zeros(order, dim);
    let mut offdiag: Vec<IndexTuple> = Vec::new();
    for idx in canonical_indices(dim, order) {
        let d = idx.distinct();
        if d.len() == 1 {
            t.set(idx.entries(), 1.0).unwrap();
        } else {
            offdiag.push(idx);
        }
    }
    let count = (nzd * offdiag.len() as f64).ceil() as usize;
    let picks = rand::seq::index::sample(&mut rng, offdiag.len(), count.min(offdiag.len()));
    for p in picks {
        t.set(offdiag[p].entries(), 1.0).unwrap();
    }
    t
}
