//! Clique-generation benchmark grid: seeded random binary tensors over a
//! (dimension, order, off-diagonal density) grid, timing the split
//! procedure and tallying how often the coverage screen passes.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::clique::{maximal_cliques, necessary_condition};
use crate::tensor::random_binary_sparse;

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    pub orders: Vec<usize>,
    /// Off-diagonal nonzero densities in [0, 1].
    pub densities: Vec<f64>,
    pub instances_per_cell: usize,
    pub seed: u64,
}

/// The default grid: moderate dimensions, orders 4..8, sparse through
/// near-dense support.
impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            dims: vec![10, 12, 14],
            orders: vec![4, 6, 8],
            densities: vec![0.4, 0.8, 0.98],
            instances_per_cell: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub dim: usize,
    pub order: usize,
    pub density: f64,
    pub instances: usize,
    pub num_cliques_min: usize,
    pub num_cliques_max: usize,
    pub max_clique_size: usize,
    /// Worst single-instance clique-generation wall time (seconds).
    pub max_clique_time: f64,
    pub mean_clique_time: f64,
    pub screen_passes: usize,
    pub screen_failures: usize,
}

/// Runs every cell of the grid, instances within a cell in parallel.
pub fn run_grid(spec: &GridSpec) -> Vec<CellResult> {
    let mut cells = Vec::new();
    for &dim in &spec.dims {
        for &order in &spec.orders {
            for &density in &spec.densities {
                cells.push((dim, order, density));
            }
        }
    }
    cells
        .into_iter()
        .map(|(dim, order, density)| {
            let per_instance: Vec<(usize, usize, f64, bool)> = (0..spec.instances_per_cell)
                .into_par_iter()
                .map(|i| {
                    // decorrelate cells without overlapping seed streams
                    let seed = spec.seed
                        ^ (dim as u64) << 40
                        ^ (order as u64) << 32
                        ^ ((density * 1000.0) as u64) << 16
                        ^ i as u64;
                    let a = random_binary_sparse(dim, order, density, seed);
                    let start = Instant::now();
                    let cliques = maximal_cliques(&a).expect("nonnegative by construction");
                    let elapsed = start.elapsed().as_secs_f64();
                    let screen = necessary_condition(&a, &cliques);
                    let max_size = cliques.cliques.iter().map(|c| c.len()).max().unwrap_or(0);
                    (cliques.len(), max_size, elapsed, screen.passed)
                })
                .collect();
            let times: Vec<f64> = per_instance.iter().map(|r| r.2).collect();
            let passes = per_instance.iter().filter(|r| r.3).count();
            CellResult {
                dim,
                order,
                density,
                instances: per_instance.len(),
                num_cliques_min: per_instance.iter().map(|r| r.0).min().unwrap_or(0),
                num_cliques_max: per_instance.iter().map(|r| r.0).max().unwrap_or(0),
                max_clique_size: per_instance.iter().map(|r| r.1).max().unwrap_or(0),
                max_clique_time: times.iter().copied().fold(0.0, f64::max),
                mean_clique_time: times.iter().sum::<f64>() / times.len().max(1) as f64,
                screen_passes: passes,
                screen_failures: per_instance.len() - passes,
            }
        })
        .collect()
}

pub fn grid_to_text(results: &[CellResult]) -> String {
    let mut s = String::from(
        "dim order density cliques_min cliques_max max_size max_time_s mean_time_s pass fail\n",
    );
    for r in results {
        s.push_str(&format!(
            "{} {} {:.2} {} {} {} {:.4} {:.4} {} {}\n",
            r.dim,
            r.order,
            r.density,
            r.num_cliques_min,
            r.num_cliques_max,
            r.max_clique_size,
            r.max_clique_time,
            r.mean_clique_time,
            r.screen_passes,
            r.screen_failures
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_grid_runs() {
        let spec = GridSpec {
            dims: vec![5, 6],
            orders: vec![3],
            densities: vec![0.3, 1.0],
            instances_per_cell: 2,
            seed: 7,
        };
        let results = run_grid(&spec);
        assert_eq!(results.len(), 4);
        for r in &results {
            assert_eq!(r.instances, 2);
            assert_eq!(r.screen_passes + r.screen_failures, 2);
            assert!(r.num_cliques_min <= r.num_cliques_max);
        }
        // a fully dense support has exactly the one full clique
        let dense = results.iter().find(|r| r.density == 1.0).unwrap();
        assert_eq!(dense.num_cliques_max, 1);
        assert_eq!(dense.max_clique_size, dense.dim);
        assert_eq!(dense.screen_passes, 2);
    }

    #[test]
    fn grid_deterministic() {
        let spec = GridSpec {
            dims: vec![6],
            orders: vec![3],
            densities: vec![0.5],
            instances_per_cell: 3,
            seed: 11,
        };
        let a = run_grid(&spec);
        let b = run_grid(&spec);
        assert_eq!(a[0].num_cliques_min, b[0].num_cliques_min);
        assert_eq!(a[0].num_cliques_max, b[0].num_cliques_max);
        assert_eq!(a[0].screen_passes, b[0].screen_passes);
    }

    #[test]
    fn text_table_shape() {
        let spec = GridSpec {
            dims: vec![5],
            orders: vec![3],
            densities: vec![0.5],
            instances_per_cell: 1,
            seed: 0,
        };
        let text = grid_to_text(&run_grid(&spec));
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("dim order density"));
    }
}
