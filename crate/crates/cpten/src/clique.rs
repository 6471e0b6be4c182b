//! Maximal cliques of the support multi-hypergraph of a symmetric
//! nonnegative tensor, via the split procedure: walk canonical indices in
//! lexicographic order, and at every zero entry remove each candidate set
//! containing its distinct elements, proposing the one-vertex-smaller
//! replacements. What survives are exactly the maximal subsets of [n]
//! containing no zero-entry index set, which is also a necessary
//! condition screen for complete positivity.

use std::fmt::Write as _;

use crate::error::{CpError, Result};
use crate::tensor::{canonical_indices, is_subset, IndexTuple, SymmetricTensor};

/// Fixed-width bitset over vertices 1..=n.
#[derive(Debug, Clone, PartialEq, Eq)]
struct VertexSet {
    words: Vec<u64>,
}

impl VertexSet {
    fn full(n: usize) -> Self {
        let nwords = n.div_ceil(64);
        let mut words = vec![u64::MAX; nwords];
        let rem = n % 64;
        if rem != 0 {
            words[nwords - 1] = (1u64 << rem) - 1;
        }
        VertexSet { words }
    }

    fn from_vertices(vertices: &[usize], n: usize) -> Self {
        let mut s = VertexSet {
            words: vec![0; n.div_ceil(64)],
        };
        for &v in vertices {
            s.words[(v - 1) / 64] |= 1 << ((v - 1) % 64);
        }
        s
    }

    fn contains_all(&self, other: &VertexSet) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| b & !a == 0)
    }

    fn remove(&mut self, vertex: usize) {
        self.words[(vertex - 1) / 64] &= !(1 << ((vertex - 1) % 64));
    }

    fn vertices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (w, &word) in self.words.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                out.push(w * 64 + b + 1);
                bits &= bits - 1;
            }
        }
        out
    }

    fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
}

/// An antichain of vertex subsets of {1..n}: the maximal cliques
/// V_1..V_p of a support multi-hypergraph. Sorted by size descending,
/// then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliqueSet {
    pub n: usize,
    pub cliques: Vec<Vec<usize>>,
}

impl CliqueSet {
    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }

    /// Index of the first clique containing all the given (sorted) vertices.
    pub fn covering(&self, distinct: &[usize]) -> Option<usize> {
        self.cliques.iter().position(|c| is_subset(distinct, c))
    }

    /// Text form: one line `k: i_1 i_2 ... i_s` per clique.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, c) in self.cliques.iter().enumerate() {
            let verts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}: {}", k + 1, verts.join(" "));
        }
        s
    }
}

fn sort_cliques(mut cliques: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    cliques.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    cliques
}

/// Generates the maximal subsets of {1..n} containing no distinct-index
/// set of a zero entry of `a`.
pub fn maximal_cliques(a: &SymmetricTensor) -> Result<CliqueSet> {
    a.check_nonnegative()?;
    let n = a.dim();
    let mut candidates = vec![VertexSet::full(n)];
    for idx in canonical_indices(n, a.order()) {
        if a.get_canonical(&idx) != 0.0 {
            continue;
        }
        let distinct = idx.distinct();
        let dset = VertexSet::from_vertices(&distinct, n);
        if !candidates.iter().any(|s| s.contains_all(&dset)) {
            continue; // earlier splits already exclude this index set
        }
        let mut additions: Vec<VertexSet> = Vec::new();
        candidates.retain(|s| {
            if s.contains_all(&dset) {
                for &k in &distinct {
                    let mut smaller = s.clone();
                    smaller.remove(k);
                    additions.push(smaller);
                }
                false
            } else {
                true
            }
        });
        for cand in additions {
            if cand.len() > 0 && !candidates.iter().any(|s| s.contains_all(&cand)) {
                candidates.push(cand);
            }
        }
    }
    Ok(CliqueSet {
        n,
        cliques: sort_cliques(candidates.iter().map(|s| s.vertices()).collect()),
    })
}

/// Outcome of the coverage screen: every positive entry's distinct-index
/// set must lie in some maximal clique, or the tensor cannot be
/// completely positive.
#[derive(Debug, Clone, PartialEq)]
pub struct NecessaryConditionReport {
    pub passed: bool,
    pub uncovered: Vec<IndexTuple>,
}

pub fn necessary_condition(a: &SymmetricTensor, c: &CliqueSet) -> NecessaryConditionReport {
    let mut uncovered = Vec::new();
    for (idx, v) in a.entries() {
        if v > 0.0 && c.covering(&idx.distinct()).is_none() {
            uncovered.push(idx.clone());
        }
    }
    NecessaryConditionReport {
        passed: uncovered.is_empty(),
        uncovered,
    }
}

/// Test oracle: enumerates all 2^n subsets and keeps the maximal ones
/// containing no zero-entry distinct-index set.
pub fn brute_force_cliques(a: &SymmetricTensor) -> Result<CliqueSet> {
    const BOUND: usize = 20;
    a.check_nonnegative()?;
    let n = a.dim();
    if n > BOUND {
        return Err(CpError::DimensionTooLarge { n, bound: BOUND });
    }
    let mut forbidden = vec![false; 1 << n]; // subsets containing some zero index set
    for idx in canonical_indices(n, a.order()) {
        if a.get_canonical(&idx) == 0.0 {
            let mask: usize = idx.distinct().iter().map(|&v| 1usize << (v - 1)).sum();
            forbidden[mask] = true;
        }
    }
    for s in 1usize..(1 << n) {
        if !forbidden[s] {
            continue;
        }
        // propagate to supersets one added vertex at a time
        for v in 0..n {
            forbidden[s | (1 << v)] = true;
        }
    }
    let mut cliques = Vec::new();
    'subset: for s in 1usize..(1 << n) {
        if forbidden[s] {
            continue;
        }
        for v in 0..n {
            if s & (1 << v) == 0 && !forbidden[s | (1 << v)] {
                continue 'subset; // extendable, not maximal
            }
        }
        cliques.push(
            (0..n)
                .filter(|v| s & (1 << v) != 0)
                .map(|v| v + 1)
                .collect(),
        );
    }
    Ok(CliqueSet {
        n,
        cliques: sort_cliques(cliques),
    })
}
