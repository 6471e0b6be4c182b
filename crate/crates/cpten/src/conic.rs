//! Block-diagonal conic problem container: linear equalities over a
//! concatenated moment-sequence variable plus PSD and entrywise-zero
//! constraints on structured matrix blocks. Assembly lives in `moment`;
//! this layer owns validation, numeric evaluation of a candidate point,
//! and the sparse text format used for debugging and external-solver
//! bridges.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{CpError, Result};

/// Sparse linear functional over the scalar variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
}

impl LinExpr {
    pub fn var(v: usize) -> Self {
        LinExpr {
            terms: vec![(v, 1.0)],
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * z[v]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equality {
    pub expr: LinExpr,
    pub rhs: f64,
}

/// Square symmetric index-map; cells stored for the upper triangle
/// row-major, cell (i,j) with i <= j at position i*size - i(i-1)/2 + j - i.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub size: usize,
    pub cells: Vec<LinExpr>,
    /// Variable group (clique) this block constrains.
    pub group: usize,
}

impl Block {
    pub fn new(size: usize, group: usize) -> Self {
        Block {
            size,
            cells: vec![LinExpr { terms: vec![] }; size * (size + 1) / 2],
            group,
        }
    }

    pub fn tri_index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * (2 * self.size - i + 1) / 2 + (j - i)
    }

    pub fn cell(&self, i: usize, j: usize) -> &LinExpr {
        &self.cells[self.tri_index(i, j)]
    }

    pub fn set_cell(&mut self, i: usize, j: usize, expr: LinExpr) {
        let at = self.tri_index(i, j);
        self.cells[at] = expr;
    }

    /// Evaluates the block at a point into a dense symmetric matrix.
    pub fn evaluate(&self, z: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for i in 0..self.size {
            for j in i..self.size {
                let v = self.cell(i, j).eval(z);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

/// One truncated moment sequence's slot in the concatenated variable
/// vector, tagged with the clique it lives on (None = ambient space).
#[derive(Debug, Clone, PartialEq)]
pub struct VarGroup {
    pub clique: Option<Vec<usize>>,
    pub nvars: usize,
    pub degree: usize,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub equalities: Vec<Equality>,
    pub psd_blocks: Vec<Block>,
    pub zero_blocks: Vec<Block>,
    pub groups: Vec<VarGroup>,
}

impl ConicProblem {
    pub fn validate(&self) -> Result<()> {
        let check_expr = |e: &LinExpr| -> Result<()> {
            for &(v, c) in &e.terms {
                if v >= self.num_vars || !c.is_finite() {
                    return Err(CpError::NumericalFailure(format!(
                        "bad term ({v}, {c}) for {} variables",
                        self.num_vars
                    )));
                }
            }
            Ok(())
        };
        if self.objective.len() != self.num_vars {
            return Err(CpError::NumericalFailure(
                "objective length mismatch".into(),
            ));
        }
        for eq in &self.equalities {
            check_expr(&eq.expr)?;
        }
        for b in self.psd_blocks.iter().chain(&self.zero_blocks) {
            for c in &b.cells {
                check_expr(c)?;
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, z: &[f64]) -> f64 {
        self.objective.iter().zip(z).map(|(c, x)| c * x).sum()
    }

    /// Infinity norm of the equality residuals at a point.
    pub fn equality_residual(&self, z: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|eq| (eq.expr.eval(z) - eq.rhs).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue over all PSD blocks at a point.
    pub fn min_psd_eigenvalue(&self, z: &[f64]) -> f64 {
        self.psd_blocks
            .iter()
            .map(|b| crate::linalg::min_eigenvalue(&b.evaluate(z)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute entry over all zero blocks at a point.
    pub fn zero_block_residual(&self, z: &[f64]) -> f64 {
        self.zero_blocks
            .iter()
            .flat_map(|b| b.cells.iter())
            .map(|c| c.eval(z).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_psd_block_size(&self) -> usize {
        self.psd_blocks.iter().map(|b| b.size).max().unwrap_or(0)
    }

    /// Sparse text form. Layout:
    /// ```text
    /// conic 1
    /// vars N
    /// group <nvars> <degree> <offset> <len> [clique verts... | ambient]
    /// obj var:coeff ...
    /// eq <rhs> var:coeff ...
    /// psd <group> <size>
    /// cell <i> <j> var:coeff ...
    /// zero <group> <size>
    /// cell ...
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "conic 1");
        let _ = writeln!(s, "vars {}", self.num_vars);
        for g in &self.groups {
            let tag = match &g.clique {
                Some(c) => c
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
                None => "ambient".to_string(),
            };
            let _ = writeln!(
                s,
                "group {} {} {} {} {}",
                g.nvars, g.degree, g.offset, g.len, tag
            );
        }
        let obj: Vec<String> = self
            .objective
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c != 0.0)
            .map(|(v, c)| format!("{v}:{c:e}"))
            .collect();
        let _ = writeln!(s, "obj {}", obj.join(" "));
        for eq in &self.equalities {
            let terms: Vec<String> = eq
                .expr
                .terms
                .iter()
                .map(|(v, c)| format!("{v}:{c:e}"))
                .collect();
            let _ = writeln!(s, "eq {:e} {}", eq.rhs, terms.join(" "));
        }
        for (kind, blocks) in [("psd", &self.psd_blocks), ("zero", &self.zero_blocks)] {
            for b in blocks {
                let _ = writeln!(s, "{kind} {} {}", b.group, b.size);
                for i in 0..b.size {
                    for j in i..b.size {
                        let cell = b.cell(i, j);
                        if cell.terms.is_empty() {
                            continue;
                        }
                        let terms: Vec<String> = cell
                            .terms
                            .iter()
                            .map(|(v, c)| format!("{v}:{c:e}"))
                            .collect();
                        let _ = writeln!(s, "cell {i} {j} {}", terms.join(" "));
                    }
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<ConicProblem> {
        let parse_err = |line: usize, msg: &str| CpError::Parse {
            line,
            msg: msg.to_string(),
        };
        let parse_terms = |line: usize, parts: &[&str]| -> Result<LinExpr> {
            let mut terms = Vec::new();
            for p in parts {
                let (v, c) = p
                    .split_once(':')
                    .ok_or_else(|| parse_err(line, "expected var:coeff"))?;
                terms.push((
                    v.parse().map_err(|_| parse_err(line, "bad var index"))?,
                    c.parse().map_err(|_| parse_err(line, "bad coefficient"))?,
                ));
            }
            Ok(LinExpr { terms })
        };
        let mut problem = ConicProblem {
            num_vars: 0,
            objective: vec![],
            equalities: vec![],
            psd_blocks: vec![],
            zero_blocks: vec![],
            groups: vec![],
        };
        let mut current: Option<(bool, Block)> = None; // (is_psd, block)
        let flush = |cur: &mut Option<(bool, Block)>, p: &mut ConicProblem| {
            if let Some((is_psd, b)) = cur.take() {
                if is_psd {
                    p.psd_blocks.push(b);
                } else {
                    p.zero_blocks.push(b);
                }
            }
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let parts: Vec<&str> = raw.split_whitespace().collect();
            if parts.is_empty() {
                continue;
            }
            match parts[0] {
                "conic" => {}
                "vars" => {
                    problem.num_vars = parts
                        .get(1)
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| parse_err(line, "bad vars count"))?;
                    problem.objective = vec![0.0; problem.num_vars];
                }
                "group" => {
                    if parts.len() < 6 {
                        return Err(parse_err(line, "group needs 5 fields"));
                    }
                    let nums: Vec<usize> = parts[1..5]
                        .iter()
                        .map(|p| p.parse().map_err(|_| parse_err(line, "bad group field")))
                        .collect::<Result<_>>()?;
                    let clique = if parts[5] == "ambient" {
                        None
                    } else {
                        Some(
                            parts[5..]
                                .iter()
                                .map(|p| p.parse().map_err(|_| parse_err(line, "bad vertex")))
                                .collect::<Result<_>>()?,
                        )
                    };
                    problem.groups.push(VarGroup {
                        clique,
                        nvars: nums[0],
                        degree: nums[1],
                        offset: nums[2],
                        len: nums[3],
                    });
                }
                "obj" => {
                    for (v, c) in parse_terms(line, &parts[1..])?.terms {
                        if v >= problem.num_vars {
                            return Err(parse_err(line, "objective var out of range"));
                        }
                        problem.objective[v] = c;
                    }
                }
                "eq" => {
                    let rhs = parts
                        .get(1)
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| parse_err(line, "bad rhs"))?;
                    problem.equalities.push(Equality {
                        expr: parse_terms(line, &parts[2..])?,
                        rhs,
                    });
                }
                "psd" | "zero" => {
                    flush(&mut current, &mut problem);
                    let group = parts
                        .get(1)
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| parse_err(line, "bad block group"))?;
                    let size = parts
                        .get(2)
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| parse_err(line, "bad block size"))?;
                    current = Some((parts[0] == "psd", Block::new(size, group)));
                }
                "cell" => {
                    let (_, block) = current
                        .as_mut()
                        .ok_or_else(|| parse_err(line, "cell outside block"))?;
                    let i: usize = parts
                        .get(1)
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| parse_err(line, "bad cell row"))?;
                    let j: usize = parts
                        .get(2)
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| parse_err(line, "bad cell col"))?;
                    if i >= block.size || j >= block.size {
                        return Err(parse_err(line, "cell out of range"));
                    }
                    let expr = parse_terms(line, &parts[3..])?;
                    block.set_cell(i, j, expr);
                }
                other => return Err(parse_err(line, &format!("unknown record '{other}'"))),
            }
        }
        flush(&mut current, &mut problem);
        problem.validate()?;
        Ok(problem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_problem() -> ConicProblem {
        let mut block = Block::new(2, 0);
        block.set_cell(0, 0, LinExpr::var(0));
        block.set_cell(0, 1, LinExpr::var(1));
        block.set_cell(1, 1, LinExpr::var(2));
        let mut zero = Block::new(1, 0);
        zero.set_cell(
            0,
            0,
            LinExpr {
                terms: vec![(0, 1.0), (2, 1.0), (1, -2.0)],
            },
        );
        ConicProblem {
            num_vars: 3,
            objective: vec![1.0, 0.0, 0.5],
            equalities: vec![Equality {
                expr: LinExpr::var(0),
                rhs: 2.0,
            }],
            psd_blocks: vec![block],
            zero_blocks: vec![zero],
            groups: vec![VarGroup {
                clique: Some(vec![1, 2]),
                nvars: 2,
                degree: 2,
                offset: 0,
                len: 3,
            }],
        }
    }

    #[test]
    fn triangle_indexing_symmetric() {
        let b = Block::new(3, 0);
        assert_eq!(b.tri_index(0, 2), b.tri_index(2, 0));
        assert_eq!(b.tri_index(1, 1), 3);
        assert_eq!(b.tri_index(2, 2), 5);
    }

    #[test]
    fn evaluate_block() {
        let p = tiny_problem();
        let m = p.psd_blocks[0].evaluate(&[1.0, 2.0, 5.0]);
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m[(1, 0)], 2.0);
        assert_eq!(m[(1, 1)], 5.0);
    }

    #[test]
    fn residuals() {
        let p = tiny_problem();
        let z = [2.0, 1.5, 1.0];
        assert_eq!(p.equality_residual(&z), 0.0);
        assert_eq!(p.zero_block_residual(&z), 0.0);
        assert!((p.objective_value(&z) - 2.5).abs() < 1e-15);
        assert_eq!(p.equality_residual(&[3.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn text_roundtrip() {
        let p = tiny_problem();
        let q = ConicProblem::from_text(&p.to_text()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn parse_error_carries_line() {
        let err = ConicProblem::from_text("conic 1\nvars 2\nbogus record").unwrap_err();
        match err {
            CpError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
