//! Solves assembled conic problems and classifies outcomes into the
//! three behaviors the hierarchy relies on: optimal point, infeasibility
//! certificate, or inconclusive. Backed by Clarabel behind an internal
//! lowering boundary; infeasibility is only ever reported together with
//! a dual improving ray that this module re-verifies itself, and solver
//! divergence maps to Unknown, never to a verdict about the tensor.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::DMatrix;

use crate::conic::{ConicProblem, Equality, LinExpr};
use crate::error::{CpError, Result};
use crate::moment::Tms;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iterations: u32,
    /// Feasibility tolerance.
    pub eps_feas: f64,
    /// Duality-gap tolerance.
    pub eps_gap: f64,
    /// Wall-clock limit in seconds; 0 disables the limit.
    pub time_limit: f64,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 200,
            eps_feas: 1e-8,
            eps_gap: 1e-8,
            time_limit: 0.0,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    Unknown,
}

/// Dual improving ray over the lowered constraint rows, proving the
/// primal infeasible: A^T y = 0, b^T y < 0, y in the dual cone.
#[derive(Debug, Clone)]
pub struct InfeasibilityCertificate {
    pub dual_ray: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    /// Full variable vector (all groups concatenated), when available.
    pub z: Vec<f64>,
    /// Per-block-group tms values, when available.
    pub group_tms: Vec<Tms>,
    pub certificate: Option<InfeasibilityCertificate>,
    pub wall_time: f64,
    /// The backend stopped at its reduced tolerances; the point passed
    /// the residual gate but the objective may be less accurate.
    pub reduced_accuracy: bool,
    /// Backend diagnostics for Unknown outcomes.
    pub message: String,
}

/// The lowered form min q'x s.t. Ax + s = b, s in (Zero x PSD...).
/// Rebuilt deterministically from a problem, so certificates can be
/// re-verified without trusting the backend.
pub struct Lowered {
    pub a: CscMatrix<f64>,
    pub b: Vec<f64>,
    pub cones: Vec<SupportedConeT<f64>>,
    /// (offset, size) of each PSD block's svec segment in the rows.
    pub psd_segments: Vec<(usize, usize)>,
    pub num_rows: usize,
}

/// Exact-duplicate removal, zero-row handling and unit inf-norm row
/// scaling for the equalities. A zero row with nonzero rhs is an
/// immediate contradiction, reported via the second return value.
fn presolve_equalities(equalities: &[Equality]) -> (Vec<Equality>, Option<usize>) {
    let mut seen: Vec<Equality> = Vec::new();
    for eq in equalities {
        let scale = eq
            .expr
            .terms
            .iter()
            .map(|&(_, c)| c.abs())
            .fold(0.0, f64::max);
        if scale == 0.0 {
            if eq.rhs != 0.0 {
                seen.push(eq.clone());
                return (seen.clone(), Some(seen.len() - 1));
            }
            continue;
        }
        let scaled = Equality {
            expr: LinExpr {
                terms: eq.expr.terms.iter().map(|&(v, c)| (v, c / scale)).collect(),
            },
            rhs: eq.rhs / scale,
        };
        if !seen.contains(&scaled) {
            seen.push(scaled);
        }
    }
    (seen, None)
}

pub fn lower(problem: &ConicProblem) -> (Lowered, Option<usize>) {
    let (equalities, contradiction) = presolve_equalities(&problem.equalities);

    // rows: presolved equalities, zero-block cells, then svec'd PSD blocks
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for eq in &equalities {
        rows.push((eq.expr.terms.clone(), eq.rhs));
    }
    let mut zero_rows = 0usize;
    for block in &problem.zero_blocks {
        for i in 0..block.size {
            for j in i..block.size {
                let cell = block.cell(i, j);
                if cell.terms.is_empty() {
                    continue;
                }
                rows.push((cell.terms.clone(), 0.0));
                zero_rows += 1;
            }
        }
    }
    let sqrt2 = 2.0_f64.sqrt();
    let mut psd_segments = Vec::new();
    for block in &problem.psd_blocks {
        psd_segments.push((rows.len(), block.size));
        // svec: column-major upper triangle, off-diagonals scaled by sqrt(2)
        for j in 0..block.size {
            for i in 0..=j {
                let scale = if i == j { 1.0 } else { sqrt2 };
                let terms = block
                    .cell(i, j)
                    .terms
                    .iter()
                    .map(|&(v, c)| (v, -c * scale))
                    .collect();
                rows.push((terms, 0.0));
            }
        }
    }

    let num_rows = rows.len();
    let b: Vec<f64> = rows.iter().map(|(_, rhs)| *rhs).collect();
    // triplets to CSC
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); problem.num_vars];
    for (r, (terms, _)) in rows.iter().enumerate() {
        for &(v, c) in terms {
            cols[v].push((r, c));
        }
    }
    let mut colptr = Vec::with_capacity(problem.num_vars + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col in &mut cols {
        col.sort_by_key(|&(r, _)| r);
        for &(r, c) in col.iter() {
            rowval.push(r);
            nzval.push(c);
        }
        colptr.push(rowval.len());
    }
    let a = CscMatrix::new(num_rows, problem.num_vars, colptr, rowval, nzval);

    let mut cones = vec![SupportedConeT::ZeroConeT(equalities.len() + zero_rows)];
    for block in &problem.psd_blocks {
        cones.push(SupportedConeT::PSDTriangleConeT(block.size));
    }
    (
        Lowered {
            a,
            b,
            cones,
            psd_segments,
            num_rows,
        },
        contradiction,
    )
}

/// Unpacks one svec segment (column-major upper triangle, off-diagonals
/// scaled by sqrt(2)) into a dense symmetric matrix.
fn svec_to_matrix(seg: &[f64], size: usize) -> DMatrix<f64> {
    let sqrt2 = 2.0_f64.sqrt();
    let mut m = DMatrix::zeros(size, size);
    let mut at = 0;
    for j in 0..size {
        for i in 0..=j {
            let v = if i == j { seg[at] } else { seg[at] / sqrt2 };
            m[(i, j)] = v;
            m[(j, i)] = v;
            at += 1;
        }
    }
    m
}

/// Checks a claimed dual improving ray: after normalizing to b^T y = -1,
/// requires ||A^T y||_inf <= tol and every PSD segment of y to be PSD to
/// tolerance. Zero-cone components are free.
pub fn certificate_is_valid(problem: &ConicProblem, ray: &[f64], tol: f64) -> bool {
    let (lowered, _) = lower(problem);
    if ray.len() != lowered.num_rows {
        return false;
    }
    let by: f64 = lowered.b.iter().zip(ray).map(|(b, y)| b * y).sum();
    if !by.is_finite() || by >= 0.0 {
        return false;
    }
    let y: Vec<f64> = ray.iter().map(|v| v / -by).collect();
    // A^T y
    let mut aty = vec![0.0; lowered.a.n];
    for (col, out) in aty.iter_mut().enumerate() {
        for at in lowered.a.colptr[col]..lowered.a.colptr[col + 1] {
            *out += lowered.a.nzval[at] * y[lowered.a.rowval[at]];
        }
    }
    if aty.iter().any(|v| v.abs() > tol) {
        return false;
    }
    for &(offset, size) in &lowered.psd_segments {
        let m = svec_to_matrix(&y[offset..offset + size * (size + 1) / 2], size);
        if crate::linalg::min_eigenvalue(&m) < -tol {
            return false;
        }
    }
    true
}

pub fn solve(problem: &ConicProblem, options: &SolveOptions) -> Result<SolveResult> {
    problem.validate()?;
    let start = Instant::now();
    let (lowered, contradiction) = lower(problem);

    if let Some(row) = contradiction {
        // presolve found 0 = c with c != 0; synthesize the one-row ray
        let mut ray = vec![0.0; lowered.num_rows];
        ray[row] = -lowered.b[row].signum();
        return Ok(SolveResult {
            status: SolveStatus::PrimalInfeasible,
            objective: None,
            z: vec![],
            group_tms: vec![],
            certificate: Some(InfeasibilityCertificate { dual_ray: ray }),
            wall_time: start.elapsed().as_secs_f64(),
            reduced_accuracy: false,
            message: "contradictory equality found in presolve".into(),
        });
    }

    let p = CscMatrix::<f64>::zeros((problem.num_vars, problem.num_vars));
    let settings = DefaultSettings {
        max_iter: options.max_iterations,
        time_limit: if options.time_limit > 0.0 {
            options.time_limit
        } else {
            f64::INFINITY
        },
        verbose: options.verbose,
        tol_feas: options.eps_feas,
        tol_gap_abs: options.eps_gap,
        tol_gap_rel: options.eps_gap,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(
        &p,
        &problem.objective,
        &lowered.a,
        &lowered.b,
        &lowered.cones,
        settings,
    )
    .map_err(|e| CpError::NumericalFailure(format!("backend rejected problem: {e:?}")))?;
    solver.solve();
    let solution = &solver.solution;
    let wall_time = start.elapsed().as_secs_f64();

    let tms_groups = |z: &[f64]| -> Vec<Tms> {
        problem
            .groups
            .iter()
            .map(|g| Tms {
                nvars: g.nvars,
                degree: g.degree,
                values: z[g.offset..g.offset + g.len].to_vec(),
            })
            .collect()
    };

    let result = match solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            let z = solution.x.clone();
            // re-check feasibility independently of the backend
            let eq_res = problem
                .equality_residual(&z)
                .max(problem.zero_block_residual(&z));
            let min_eig = problem.min_psd_eigenvalue(&z);
            // Moment matrices are rank-deficient at atomic optima, so even
            // good solves carry eigenvalues slightly below zero; gate on a
            // scale-aware tolerance rather than the raw solver feasibility.
            let scale = z.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            let tol = (10.0 * options.eps_feas).max(1e-6 * scale);
            if eq_res <= tol && min_eig >= -tol {
                SolveResult {
                    status: SolveStatus::Optimal,
                    objective: Some(solution.obj_val),
                    group_tms: tms_groups(&z),
                    z,
                    certificate: None,
                    wall_time,
                    reduced_accuracy: solution.status == SolverStatus::AlmostSolved,
                    message: String::new(),
                }
            } else {
                SolveResult {
                    status: SolveStatus::Unknown,
                    objective: None,
                    z,
                    group_tms: vec![],
                    certificate: None,
                    wall_time,
                    reduced_accuracy: false,
                    message: format!(
                        "backend reported {:?} but residual {eq_res:.2e} / min eig {min_eig:.2e} \
                         fail the contract",
                        solution.status
                    ),
                }
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            let ray = solution.z.clone();
            if certificate_is_valid(problem, &ray, 1e-6) {
                SolveResult {
                    status: SolveStatus::PrimalInfeasible,
                    objective: None,
                    z: vec![],
                    group_tms: vec![],
                    certificate: Some(InfeasibilityCertificate { dual_ray: ray }),
                    wall_time,
                    reduced_accuracy: false,
                    message: String::new(),
                }
            } else {
                SolveResult {
                    status: SolveStatus::Unknown,
                    objective: None,
                    z: vec![],
                    group_tms: vec![],
                    certificate: None,
                    wall_time,
                    reduced_accuracy: false,
                    message: "backend claimed infeasibility without a verifiable ray".into(),
                }
            }
        }
        other => SolveResult {
            status: SolveStatus::Unknown,
            objective: None,
            z: vec![],
            group_tms: vec![],
            certificate: None,
            wall_time,
            reduced_accuracy: false,
            message: format!("backend status {other:?}"),
        },
    };
    Ok(result)
}

/// Independent residual check of an Optimal result.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub equality_residual: f64,
    pub zero_block_residual: f64,
    pub min_psd_eigenvalue: f64,
}

pub fn verify_result(problem: &ConicProblem, result: &SolveResult) -> ResidualReport {
    assert_eq!(
        result.status,
        SolveStatus::Optimal,
        "verify requires Optimal"
    );
    ResidualReport {
        equality_residual: problem.equality_residual(&result.z),
        zero_block_residual: problem.zero_block_residual(&result.z),
        min_psd_eigenvalue: problem.min_psd_eigenvalue(&result.z),
    }
}

/// Result-file bridge for external solver processes. Format:
/// line 1 `status optimal|infeasible|unknown`; for optimal, line 2
/// `objective <v>` followed by one variable value per line.
pub fn read_result_file(problem: &ConicProblem, path: &std::path::Path) -> Result<SolveResult> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, status_line) = lines.next().ok_or(CpError::Parse {
        line: 1,
        msg: "empty result file".into(),
    })?;
    let status = match status_line.trim() {
        "status optimal" => SolveStatus::Optimal,
        "status infeasible" => SolveStatus::PrimalInfeasible,
        "status unknown" => SolveStatus::Unknown,
        other => {
            return Err(CpError::Parse {
                line: 1,
                msg: format!("unknown status line '{other}'"),
            })
        }
    };
    if status != SolveStatus::Optimal {
        return Ok(SolveResult {
            status,
            objective: None,
            z: vec![],
            group_tms: vec![],
            certificate: None,
            wall_time: 0.0,
            reduced_accuracy: false,
            message: "external result".into(),
        });
    }
    let (lineno, obj_line) = lines.next().ok_or(CpError::Parse {
        line: 2,
        msg: "missing objective".into(),
    })?;
    let objective: f64 = obj_line
        .trim()
        .strip_prefix("objective ")
        .and_then(|v| v.parse().ok())
        .ok_or(CpError::Parse {
            line: lineno + 1,
            msg: "bad objective line".into(),
        })?;
    let mut z = Vec::with_capacity(problem.num_vars);
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        z.push(line.trim().parse().map_err(|_| CpError::Parse {
            line: lineno + 1,
            msg: "bad value".into(),
        })?);
    }
    if z.len() != problem.num_vars {
        return Err(CpError::Parse {
            line: 0,
            msg: format!("expected {} values, got {}", problem.num_vars, z.len()),
        });
    }
    let group_tms = problem
        .groups
        .iter()
        .map(|g| Tms {
            nvars: g.nvars,
            degree: g.degree,
            values: z[g.offset..g.offset + g.len].to_vec(),
        })
        .collect();
    Ok(SolveResult {
        status,
        objective: Some(objective),
        z,
        group_tms,
        certificate: None,
        wall_time: 0.0,
        reduced_accuracy: false,
        message: "external result".into(),
    })
}
