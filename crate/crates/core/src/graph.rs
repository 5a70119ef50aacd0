//! Weighted undirected communication graphs and their Laplacians.
//!
//! The stacked Laplacian `L ⊗ I_q` is never materialized. Every consumer
//! applies `L` per coordinate through [`Graph::neighbor_sum`], which walks the
//! neighbor list of one node in ascending index order so that floating-point
//! summation order is fixed.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Graphs up to this many nodes get a dense symmetric eigendecomposition.
pub const DENSE_EIGEN_LIMIT: usize = 256;

const POWER_ITER_TOL: f64 = 1e-9;
const POWER_ITER_MAX: usize = 10_000;

/// An undirected edge between 1-based node indices, as written in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    weights: Array2<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
    connected: bool,
}

impl Graph {
    /// Validates a dense weight matrix and derives neighbor lists from its nonzero entries.
    pub fn from_weights(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NotSquare {
                    row: r,
                    len: row.len(),
                    expected: n,
                });
            }
        }
        let mut weights = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let w = rows[i][j];
                if !w.is_finite() {
                    return Err(Error::NonFiniteWeight { i, j });
                }
                weights[[i, j]] = w;
            }
        }
        Self::from_matrix(weights)
    }

    /// Builds a graph on `n` nodes from 1-based edges. Repeated edges add up.
    pub fn from_edges(n: usize, edges: &[Edge]) -> Result<Self> {
        let mut weights = Array2::zeros((n, n));
        for e in edges {
            if e.i == 0 || e.j == 0 || e.i > n || e.j > n {
                return Err(Error::EdgeOutOfRange { i: e.i, j: e.j, n });
            }
            if !e.weight.is_finite() {
                return Err(Error::NonFiniteWeight { i: e.i - 1, j: e.j - 1 });
            }
            let (i, j) = (e.i - 1, e.j - 1);
            if i == j {
                return Err(Error::NonzeroDiagonal { i, weight: e.weight });
            }
            weights[[i, j]] += e.weight;
            weights[[j, i]] += e.weight;
        }
        Self::from_matrix(weights)
    }

    fn from_matrix(weights: Array2<f64>) -> Result<Self> {
        let n = weights.nrows();
        for i in 0..n {
            let d = weights[[i, i]];
            if d != 0.0 {
                return Err(Error::NonzeroDiagonal { i, weight: d });
            }
            for j in 0..n {
                let w = weights[[i, j]];
                if w < 0.0 {
                    return Err(Error::NegativeWeight { i, j, weight: w });
                }
                if j > i && w != weights[[j, i]] {
                    return Err(Error::Asymmetric {
                        i,
                        j,
                        a_ij: w,
                        a_ji: weights[[j, i]],
                    });
                }
            }
        }
        let neighbors: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| weights[[i, j]] > 0.0)
                    .map(|j| (j, weights[[i, j]]))
                    .collect()
            })
            .collect();
        let connected = reachable_from_first(&neighbors);
        Ok(Graph {
            n,
            weights,
            neighbors,
            connected,
        })
    }

    /// Unit-weight path `1 - 2 - ... - n`.
    pub fn path(n: usize) -> Self {
        let edges: Vec<Edge> = (1..n)
            .map(|i| Edge {
                i,
                j: i + 1,
                weight: 1.0,
            })
            .collect();
        Self::from_edges(n, &edges).expect("path graph is valid")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[[i, j]]
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// Neighbors of node `i` (0-based) with their weights, ascending by index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// Edges as 1-based records with `i < j`.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for &(j, w) in &self.neighbors[i] {
                if j > i {
                    out.push(Edge {
                        i: i + 1,
                        j: j + 1,
                        weight: w,
                    });
                }
            }
        }
        out
    }

    /// Breadth-first reachability from the first node.
    pub fn is_connected(&self) -> bool {
        self.connected
    }

    /// Writes `Σ_j a_ij (u_i − u_j)` for row `i` of `u` into `out`.
    pub fn neighbor_sum(&self, i: usize, u: ArrayView2<f64>, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let ui = u.row(i);
        for &(j, a) in &self.neighbors[i] {
            let uj = u.row(j);
            for (k, o) in out.iter_mut().enumerate() {
                *o += a * (ui[k] - uj[k]);
            }
        }
    }

    /// `(L ⊗ I_q) u` with `u` stored as one row per node.
    pub fn apply_laplacian(&self, u: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(u.raw_dim());
        let q = u.ncols();
        let mut buf = vec![0.0; q];
        for i in 0..self.n {
            self.neighbor_sum(i, u, &mut buf);
            out.row_mut(i).iter_mut().zip(&buf).for_each(|(o, b)| *o = *b);
        }
        out
    }

    /// `uᵀ (L ⊗ I_q) w`.
    pub fn bilinear(&self, u: ArrayView2<f64>, w: ArrayView2<f64>) -> f64 {
        let lw = self.apply_laplacian(w);
        u.iter().zip(lw.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn laplacian(&self) -> Result<LaplacianData> {
        let n = self.n;
        let mut matrix = Array2::zeros((n, n));
        for i in 0..n {
            let mut degree = 0.0;
            for &(j, a) in &self.neighbors[i] {
                matrix[[i, j]] = -a;
                degree += a;
            }
            matrix[[i, i]] = degree;
        }
        if n == 0 {
            return Ok(LaplacianData {
                matrix,
                lambda_max: 0.0,
                spectrum: Some(Spectrum {
                    values: Array1::zeros(0),
                    vectors: Array2::zeros((0, 0)),
                }),
            });
        }
        if n <= DENSE_EIGEN_LIMIT {
            let dense = DMatrix::from_fn(n, n, |i, j| matrix[[i, j]]);
            let eig = SymmetricEigen::new(dense);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let values = Array1::from_iter(order.iter().map(|&k| eig.eigenvalues[k]));
            let mut vectors = Array2::zeros((n, n));
            for (col, &k) in order.iter().enumerate() {
                for r in 0..n {
                    vectors[[r, col]] = eig.eigenvectors[(r, k)];
                }
            }
            let lambda_max = values[n - 1].max(0.0);
            Ok(LaplacianData {
                matrix,
                lambda_max,
                spectrum: Some(Spectrum { values, vectors }),
            })
        } else {
            let lambda_max = self.lambda_max_power_iteration()?;
            Ok(LaplacianData {
                matrix,
                lambda_max,
                spectrum: None,
            })
        }
    }

    /// Largest Laplacian eigenvalue by power iteration with Rayleigh-quotient stopping.
    pub fn lambda_max_power_iteration(&self) -> Result<f64> {
        let n = self.n;
        if self.neighbors.iter().all(Vec::is_empty) {
            return Ok(0.0);
        }
        // alternating start vector; orthogonal-ish to the constant kernel
        let mut x = Array2::from_shape_fn((n, 1), |(i, _)| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 + i as f64 / n as f64)
        });
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.mapv_inplace(|v| v / norm);
        let mut rho_prev = f64::NAN;
        for _ in 0..POWER_ITER_MAX {
            let y = self.apply_laplacian(x.view());
            let rho: f64 = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if ny == 0.0 {
                return Ok(0.0);
            }
            if (rho - rho_prev).abs() <= POWER_ITER_TOL * rho.abs() {
                return Ok(rho);
            }
            rho_prev = rho;
            x = y / ny;
        }
        Err(Error::EigenNonConvergence {
            iterations: POWER_ITER_MAX,
        })
    }
}

fn reachable_from_first(neighbors: &[Vec<(usize, f64)>]) -> bool {
    let n = neighbors.len();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &(j, _) in &neighbors[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Eigenvalues ascending, eigenvectors as matching columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianData {
    pub matrix: Array2<f64>,
    pub lambda_max: f64,
    /// Present when the graph is small enough for a dense decomposition.
    pub spectrum: Option<Spectrum>,
}

impl LaplacianData {
    pub fn eigenvalues(&self) -> Option<ArrayView1<'_, f64>> {
        self.spectrum.as_ref().map(|s| s.values.view())
    }

    /// Minimum-norm solution of `L y = b`, one column per coordinate.
    ///
    /// Components of `b` outside `range(L)` are discarded; callers that need
    /// an exact solve should check that each column of `b` sums to zero.
    pub fn solve_min_norm(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let n = self.matrix.nrows();
        let spectrum = match &self.spectrum {
            Some(s) => s,
            None => return self.solve_cg(b),
        };
        let tol = 1e-9 * self.lambda_max.max(1.0);
        let mut y = Array2::zeros(b.raw_dim());
        for k in 0..n {
            let lambda = spectrum.values[k];
            if lambda.abs() <= tol {
                continue;
            }
            let u = spectrum.vectors.column(k);
            for c in 0..b.ncols() {
                let coef = u.dot(&b.column(c)) / lambda;
                for r in 0..n {
                    y[[r, c]] += coef * u[r];
                }
            }
        }
        y
    }

    // Conjugate gradients from zero stays in range(L) and so converges to the
    // minimum-norm solution for consistent right-hand sides.
    fn solve_cg(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let n = self.matrix.nrows();
        let mut y = Array2::zeros(b.raw_dim());
        for c in 0..b.ncols() {
            let mean = b.column(c).sum() / n as f64;
            let rhs = b.column(c).mapv(|v| v - mean);
            let mut x = Array1::<f64>::zeros(n);
            let mut r = rhs.clone();
            let mut p = r.clone();
            let mut rs = r.dot(&r);
            let stop = 1e-28 * rhs.dot(&rhs).max(1e-300);
            for _ in 0..10 * n {
                if rs <= stop {
                    break;
                }
                let ap = self.matrix.dot(&p);
                let alpha = rs / p.dot(&ap);
                x.scaled_add(alpha, &p);
                r.scaled_add(-alpha, &ap);
                let rs_new = r.dot(&r);
                p = &r + &(p * (rs_new / rs));
                rs = rs_new;
            }
            y.column_mut(c).assign(&x);
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn path4() -> Graph {
        Graph::from_weights(&[
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn path4_neighbor_lists() {
        let g = path4();
        let lists: Vec<Vec<usize>> = (0..4)
            .map(|i| g.neighbors(i).iter().map(|&(j, _)| j + 1).collect())
            .collect();
        assert_eq!(lists, vec![vec![2], vec![1, 3], vec![2, 4], vec![3]]);
        assert_eq!(g, Graph::path(4));
    }

    #[test]
    fn single_node() {
        let g = Graph::from_weights(&[vec![0.0]]).unwrap();
        assert!(g.neighbors(0).is_empty());
        assert!(g.is_connected());
        let l = g.laplacian().unwrap();
        assert_eq!(l.matrix, array![[0.0]]);
        assert_eq!(l.lambda_max, 0.0);
    }

    #[test]
    fn rejects_bad_matrices() {
        let err = Graph::from_weights(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::Asymmetric { i: 0, j: 1, .. }));
        let err = Graph::from_weights(&[vec![0.0, -1.0], vec![-1.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NegativeWeight { i: 0, j: 1, .. }));
        let err = Graph::from_weights(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NonzeroDiagonal { i: 0, .. }));
        let err = Graph::from_weights(&[vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::NotSquare { .. }));
        let err = Graph::from_weights(&[vec![0.0, f64::NAN], vec![f64::NAN, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteWeight { .. }));
        let err = Graph::from_edges(2, &[Edge { i: 1, j: 3, weight: 1.0 }]).unwrap_err();
        assert!(matches!(err, Error::EdgeOutOfRange { .. }));
    }

    #[test]
    fn path4_laplacian_and_spectrum() {
        let l = path4().laplacian().unwrap();
        assert_eq!(
            l.matrix,
            array![
                [1.0, -1.0, 0.0, 0.0],
                [-1.0, 2.0, -1.0, 0.0],
                [0.0, -1.0, 2.0, -1.0],
                [0.0, 0.0, -1.0, 1.0]
            ]
        );
        let ev = l.eigenvalues().unwrap();
        for (got, want) in ev.iter().zip([0.0, 0.586, 2.0, 3.414]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-3);
        }
        assert_abs_diff_eq!(l.lambda_max, 2.0 + 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn connectivity() {
        assert!(path4().is_connected());
        let g = Graph::from_weights(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(!g.is_connected());
    }

    #[test]
    fn power_iteration_matches_dense() {
        let g = Graph::path(12);
        let dense = g.laplacian().unwrap().lambda_max;
        let power = g.lambda_max_power_iteration().unwrap();
        assert!((dense - power).abs() <= 1e-6 * dense, "{dense} vs {power}");
    }

    #[test]
    fn large_graph_uses_power_iteration() {
        let n = DENSE_EIGEN_LIMIT + 4;
        let mut edges: Vec<Edge> = (1..n).map(|i| Edge { i, j: i + 1, weight: 1.0 }).collect();
        edges.push(Edge { i: n, j: 1, weight: 1.0 });
        let g = Graph::from_edges(n, &edges).unwrap();
        let l = g.laplacian().unwrap();
        assert!(l.spectrum.is_none());
        // cycle graph: lambda_max = 2 - 2 cos(2π⌊n/2⌋/n) = 4 for even n
        assert!((l.lambda_max - 4.0).abs() < 1e-4, "{}", l.lambda_max);
    }

    #[test]
    fn min_norm_solve_path4() {
        let l = path4().laplacian().unwrap();
        let b = array![[-3.0], [-1.0], [1.0], [3.0]];
        let y = l.solve_min_norm(b.view());
        let back = l.matrix.dot(&y);
        for (a, c) in back.iter().zip(b.iter()) {
            assert_abs_diff_eq!(*a, *c, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(y.sum(), 0.0, epsilon = 1e-12);
        let cg = l.solve_cg(b.view());
        for (a, c) in cg.iter().zip(y.iter()) {
            assert_abs_diff_eq!(*a, *c, epsilon = 1e-10);
        }
    }
}
