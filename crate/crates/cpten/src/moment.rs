//! Monomial bookkeeping and assembly of the dense moment relaxation and
//! its ideal-sparse counterpart as block-structured conic problems.
//!
//! A truncated moment sequence (tms) z stands in for the moments of a
//! measure on the sphere-intersected nonnegative orthant. The dense model
//! has one tms over all n variables; the sparse model has one small tms
//! per maximal clique, coupled through the tensor-entry equalities.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::clique::{necessary_condition, CliqueSet};
use crate::conic::{Block, ConicProblem, Equality, LinExpr, VarGroup};
use crate::error::{CpError, Result};
use crate::tensor::{canonical_indices, IndexTuple, SymmetricTensor};

pub type Exponent = Vec<u32>;

pub fn degree_of(expo: &[u32]) -> u32 {
    expo.iter().sum()
}

/// All exponents alpha with |alpha| <= t in k variables, graded
/// lexicographic (constant first; within a grade, earlier variables
/// carry higher powers first).
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    pub nvars: usize,
    pub degree: usize,
    list: Vec<Exponent>,
    index: HashMap<Exponent, usize>,
}

fn exponents_of_degree(k: usize, d: u32, prefix: &mut Exponent, out: &mut Vec<Exponent>) {
    if k == 1 {
        prefix.push(d);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=d).rev() {
        prefix.push(e);
        exponents_of_degree(k - 1, d - e, prefix, out);
        prefix.pop();
    }
}

pub fn monomial_basis(nvars: usize, degree: usize) -> MonomialBasis {
    assert!(nvars >= 1);
    let mut list = Vec::new();
    for d in 0..=degree as u32 {
        exponents_of_degree(nvars, d, &mut Vec::new(), &mut list);
    }
    let index = list
        .iter()
        .enumerate()
        .map(|(i, e)| (e.clone(), i))
        .collect();
    MonomialBasis {
        nvars,
        degree,
        list,
        index,
    }
}

impl MonomialBasis {
    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn exponents(&self) -> &[Exponent] {
        &self.list
    }

    pub fn position(&self, expo: &[u32]) -> Option<usize> {
        self.index.get(expo).copied()
    }
}

/// Sparse polynomial: exponent -> nonzero coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub nvars: usize,
    pub terms: BTreeMap<Exponent, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(nvars);
        p.add_term(&vec![0; nvars], c);
        p
    }

    /// x_j (1-based).
    pub fn variable(nvars: usize, j: usize) -> Self {
        let mut expo = vec![0u32; nvars];
        expo[j - 1] = 1;
        let mut p = Polynomial::zero(nvars);
        p.add_term(&expo, 1.0);
        p
    }

    /// x^T x - 1.
    pub fn sphere(nvars: usize) -> Self {
        let mut p = Polynomial::constant(nvars, -1.0);
        for j in 0..nvars {
            let mut expo = vec![0u32; nvars];
            expo[j] = 2;
            p.add_term(&expo, 1.0);
        }
        p
    }

    pub fn add_term(&mut self, expo: &[u32], coeff: f64) {
        debug_assert_eq!(expo.len(), self.nvars);
        let entry = self.terms.entry(expo.to_vec()).or_insert(0.0);
        *entry += coeff;
        if *entry == 0.0 {
            self.terms.remove(expo);
        }
    }

    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| degree_of(e) as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(x)
                    .map(|(&p, &v)| v.powi(p as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Drops every monomial with support outside V (sorted 1-based) and
    /// re-indexes the survivors by position in V.
    pub fn restrict(&self, v: &[usize]) -> Polynomial {
        assert!(!v.is_empty());
        let mut out = Polynomial::zero(v.len());
        'term: for (expo, &coeff) in &self.terms {
            let mut local = vec![0u32; v.len()];
            for (i, &p) in expo.iter().enumerate() {
                if p == 0 {
                    continue;
                }
                match v.binary_search(&(i + 1)) {
                    Ok(pos) => local[pos] = p,
                    Err(_) => continue 'term,
                }
            }
            out.add_term(&local, coeff);
        }
        out
    }
}

/// Objective F = [x]_{d/2}^T (G^T G + eps I) [x]_{d/2} with G standard
/// normal (seeded ChaCha8) and eps = 1e-2, so F is interior to the SOS
/// cone along with every restriction of it.
pub fn random_sos_objective(nvars: usize, degree: usize, seed: u64) -> Result<Polynomial> {
    if degree < 2 || !degree.is_multiple_of(2) {
        return Err(CpError::InvalidDegree(degree));
    }
    const EPS: f64 = 1e-2;
    let half = monomial_basis(nvars, degree / 2);
    let nb = half.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(nb, nb, |_, _| StandardNormal.sample(&mut rng));
    let mut gram = g.transpose() * &g;
    for i in 0..nb {
        gram[(i, i)] += EPS;
    }
    let mut f = Polynomial::zero(nvars);
    for i in 0..nb {
        for j in 0..nb {
            let expo: Exponent = half.exponents()[i]
                .iter()
                .zip(&half.exponents()[j])
                .map(|(a, b)| a + b)
                .collect();
            f.add_term(&expo, gram[(i, j)]);
        }
    }
    Ok(f)
}

/// Truncated moment sequence of even degree 2t in k variables, aligned
/// with `monomial_basis(k, degree)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tms {
    pub nvars: usize,
    pub degree: usize,
    pub values: Vec<f64>,
}

impl Tms {
    pub fn zeros(nvars: usize, degree: usize) -> Self {
        Tms {
            nvars,
            degree,
            values: vec![0.0; monomial_basis(nvars, degree).len()],
        }
    }

    /// Exact tms of the finitely atomic measure sum_i lambda_i delta_{u_i}.
    pub fn from_atoms(nvars: usize, degree: usize, atoms: &[(f64, Vec<f64>)]) -> Self {
        let basis = monomial_basis(nvars, degree);
        let values = basis
            .exponents()
            .iter()
            .map(|expo| {
                atoms
                    .iter()
                    .map(|(w, u)| {
                        w * expo
                            .iter()
                            .zip(u)
                            .map(|(&p, &x)| x.powi(p as i32))
                            .product::<f64>()
                    })
                    .sum()
            })
            .collect();
        Tms {
            nvars,
            degree,
            values,
        }
    }

    pub fn value(&self, basis: &MonomialBasis, expo: &[u32]) -> f64 {
        self.values[basis.position(expo).expect("exponent within degree")]
    }

    /// Moment matrix M_s evaluated from this tms (2s <= degree).
    pub fn moment_matrix(&self, s: usize) -> DMatrix<f64> {
        assert!(2 * s <= self.degree);
        let rows = monomial_basis(self.nvars, s);
        let full = monomial_basis(self.nvars, self.degree);
        DMatrix::from_fn(rows.len(), rows.len(), |i, j| {
            let expo: Exponent = rows.exponents()[i]
                .iter()
                .zip(&rows.exponents()[j])
                .map(|(a, b)| a + b)
                .collect();
            self.values[full.position(&expo).unwrap()]
        })
    }
}

/// Moment-matrix index map: cell (beta, gamma) references z_{beta+gamma}.
/// Variables are offsets into the group's tms, shifted by `offset`.
pub fn moment_matrix_structure(
    nvars: usize,
    t: usize,
    z_basis: &MonomialBasis,
    offset: usize,
    group: usize,
) -> Block {
    let rows = monomial_basis(nvars, t);
    let mut block = Block::new(rows.len(), group);
    for i in 0..rows.len() {
        for j in i..rows.len() {
            let expo: Exponent = rows.exponents()[i]
                .iter()
                .zip(&rows.exponents()[j])
                .map(|(a, b)| a + b)
                .collect();
            let var = offset + z_basis.position(&expo).expect("2t covers beta+gamma");
            block.set_cell(i, j, LinExpr::var(var));
        }
    }
    block
}

/// Localizing-matrix index map of q at level t: cell (beta, gamma) is the
/// linear form sum_alpha q_alpha z_{alpha+beta+gamma}, with rows indexed
/// by the basis of degree t - ceil(deg(q)/2).
pub fn localizing_structure(
    q: &Polynomial,
    t: usize,
    z_basis: &MonomialBasis,
    offset: usize,
    group: usize,
) -> Result<Block> {
    let dq = q.degree();
    if dq > 2 * t {
        return Err(CpError::LevelTooLow { t, required: dq });
    }
    let w = t - dq.div_ceil(2);
    let rows = monomial_basis(q.nvars, w);
    let mut block = Block::new(rows.len(), group);
    for i in 0..rows.len() {
        for j in i..rows.len() {
            let mut terms: Vec<(usize, f64)> = q
                .terms
                .iter()
                .map(|(alpha, &c)| {
                    let expo: Exponent = alpha
                        .iter()
                        .zip(&rows.exponents()[i])
                        .zip(&rows.exponents()[j])
                        .map(|((a, b), g)| a + b + g)
                        .collect();
                    (offset + z_basis.position(&expo).unwrap(), c)
                })
                .collect();
            terms.sort_by_key(|&(v, _)| v);
            block.set_cell(i, j, LinExpr { terms });
        }
    }
    Ok(block)
}

/// Exponent vector e_{i_1} + ... + e_{i_m} of a canonical index, over the
/// ambient n variables.
pub fn ambient_exponent(idx: &IndexTuple, nvars: usize) -> Exponent {
    let mut expo = vec![0u32; nvars];
    for &i in idx.entries() {
        expo[i - 1] += 1;
    }
    expo
}

/// Same, re-indexed to the clique-local variables; requires the distinct
/// set of `idx` to lie inside `clique` (sorted).
pub fn local_exponent(idx: &IndexTuple, clique: &[usize]) -> Exponent {
    let mut expo = vec![0u32; clique.len()];
    for &i in idx.entries() {
        let pos = clique.binary_search(&i).expect("index inside clique");
        expo[pos] += 1;
    }
    expo
}

fn check_levels(a: &SymmetricTensor, f: &Polynomial, t: usize) -> Result<()> {
    if 2 * t < a.order() {
        return Err(CpError::LevelTooLow {
            t,
            required: a.order(),
        });
    }
    if 2 * t < f.degree() {
        return Err(CpError::LevelTooLow {
            t,
            required: f.degree(),
        });
    }
    Ok(())
}

fn group_blocks(
    nvars: usize,
    t: usize,
    z_basis: &MonomialBasis,
    offset: usize,
    group: usize,
) -> Result<(Vec<Block>, Block)> {
    let mut psd = vec![moment_matrix_structure(nvars, t, z_basis, offset, group)];
    for j in 1..=nvars {
        psd.push(localizing_structure(
            &Polynomial::variable(nvars, j),
            t,
            z_basis,
            offset,
            group,
        )?);
    }
    let sphere = localizing_structure(&Polynomial::sphere(nvars), t, z_basis, offset, group)?;
    Ok((psd, sphere))
}

/// The dense moment relaxation of level t: one tms over n variables,
/// equalities z_alpha = A_{i_1..i_m} for every canonical index (zeros
/// included), moment and per-variable localizing PSD blocks, and the
/// sphere localizing block constrained to zero.
pub fn assemble_dense(a: &SymmetricTensor, f: &Polynomial, t: usize) -> Result<ConicProblem> {
    let n = a.dim();
    assert_eq!(f.nvars, n, "objective variable count must match tensor dim");
    check_levels(a, f, t)?;
    let z_basis = monomial_basis(n, 2 * t);
    let num_vars = z_basis.len();
    let mut objective = vec![0.0; num_vars];
    for (expo, &c) in &f.terms {
        objective[z_basis.position(expo).unwrap()] = c;
    }
    let equalities = canonical_indices(n, a.order())
        .iter()
        .map(|idx| Equality {
            expr: LinExpr::var(z_basis.position(&ambient_exponent(idx, n)).unwrap()),
            rhs: a.get_canonical(idx),
        })
        .collect();
    let (psd_blocks, sphere) = group_blocks(n, t, &z_basis, 0, 0)?;
    let problem = ConicProblem {
        num_vars,
        objective,
        equalities,
        psd_blocks,
        zero_blocks: vec![sphere],
        groups: vec![VarGroup {
            clique: None,
            nvars: n,
            degree: 2 * t,
            offset: 0,
            len: num_vars,
        }],
    };
    problem.validate()?;
    Ok(problem)
}

/// The ideal-sparse relaxation of level t: one tms per maximal clique
/// with its own moment/localizing/sphere blocks, coupled by one equality
/// per positive tensor entry summing the hosting cliques' moments. Zero
/// entries impose no equalities because no clique hosts them.
pub fn assemble_sparse(
    a: &SymmetricTensor,
    f: &Polynomial,
    cliques: &CliqueSet,
    t: usize,
) -> Result<ConicProblem> {
    let n = a.dim();
    assert_eq!(f.nvars, n, "objective variable count must match tensor dim");
    check_levels(a, f, t)?;
    let report = necessary_condition(a, cliques);
    if let Some(idx) = report.uncovered.first() {
        return Err(CpError::UncoveredPositiveEntry {
            index: idx.entries().to_vec(),
        });
    }

    let mut groups = Vec::new();
    let mut bases = Vec::new();
    let mut offset = 0usize;
    for clique in &cliques.cliques {
        let k = clique.len();
        let basis = monomial_basis(k, 2 * t);
        groups.push(VarGroup {
            clique: Some(clique.clone()),
            nvars: k,
            degree: 2 * t,
            offset,
            len: basis.len(),
        });
        offset += basis.len();
        bases.push(basis);
    }
    let num_vars = offset;

    let mut objective = vec![0.0; num_vars];
    for (g, clique) in cliques.cliques.iter().enumerate() {
        let restricted = f.restrict(clique);
        for (expo, &c) in &restricted.terms {
            objective[groups[g].offset + bases[g].position(expo).unwrap()] += c;
        }
    }

    // coupling equalities in canonical index order; clique terms in clique order
    let mut equalities = Vec::new();
    for (idx, value) in a.entries() {
        if value <= 0.0 {
            continue;
        }
        let distinct = idx.distinct();
        let terms: Vec<(usize, f64)> = cliques
            .cliques
            .iter()
            .enumerate()
            .filter(|(_, c)| crate::tensor::is_subset(&distinct, c))
            .map(|(g, c)| {
                (
                    groups[g].offset + bases[g].position(&local_exponent(idx, c)).unwrap(),
                    1.0,
                )
            })
            .collect();
        equalities.push(Equality {
            expr: LinExpr { terms },
            rhs: value,
        });
    }

    let mut psd_blocks = Vec::new();
    let mut zero_blocks = Vec::new();
    for (g, clique) in cliques.cliques.iter().enumerate() {
        let (psd, sphere) = group_blocks(clique.len(), t, &bases[g], groups[g].offset, g)?;
        psd_blocks.extend(psd);
        zero_blocks.push(sphere);
    }

    let problem = ConicProblem {
        num_vars,
        objective,
        equalities,
        psd_blocks,
        zero_blocks,
        groups,
    };
    problem.validate()?;
    Ok(problem)
}
