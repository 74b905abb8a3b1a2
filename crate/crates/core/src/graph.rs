//! Undirected graphs with node embeddings, degrees and the normalized Laplacian.
//!
//! Adjacency is stored dense; [`SparseMatrix`] is derived on demand for the
//! polynomial (Chebyshev) operator path where only matrix-vector products
//! against the Laplacian are needed.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An undirected graph `G = {V, E, H}` with a symmetric non-negative adjacency
/// matrix and an `N x C` node embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: DMatrix<f64>,
    embeddings: DMatrix<f64>,
}

impl Graph {
    pub fn new(adjacency: DMatrix<f64>, embeddings: DMatrix<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        if adjacency.ncols() != n {
            return Err(Error::InvalidGraph(format!(
                "adjacency is {}x{}, expected square",
                n,
                adjacency.ncols()
            )));
        }
        if embeddings.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "embedding rows",
                expected: n,
                found: embeddings.nrows(),
            });
        }
        for i in 0..n {
            let d = adjacency[(i, i)];
            if d != 0.0 && d != 1.0 {
                return Err(Error::InvalidGraph(format!(
                    "diagonal entry {i} is {d}; self-loops must have weight 0 or 1"
                )));
            }
            for j in 0..n {
                let w = adjacency[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidGraph(format!(
                        "adjacency[{i}][{j}] = {w} is negative or not finite"
                    )));
                }
                if w != adjacency[(j, i)] {
                    return Err(Error::InvalidGraph(format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGraph("embeddings contain non-finite values".into()));
        }
        Ok(Self {
            adjacency,
            embeddings,
        })
    }

    /// Builds a graph from an edge list. Each unordered pair is listed once and
    /// mirrored; listing a pair twice is allowed only with the same weight.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], embeddings: DMatrix<f64>) -> Result<Self> {
        let mut adjacency = DMatrix::zeros(n, n);
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) references a node outside 0..{n}"
                )));
            }
            let current: f64 = adjacency[(i, j)];
            if current != 0.0 && current != w {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) listed with conflicting weights {current} and {w}"
                )));
            }
            adjacency[(i, j)] = w;
            adjacency[(j, i)] = w;
        }
        Self::new(adjacency, embeddings)
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn embeddings(&self) -> &DMatrix<f64> {
        &self.embeddings
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.n()).any(|i| self.adjacency[(i, i)] != 0.0)
    }

    /// Upper-triangular edge list `(i, j, w)` with `i <= j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i..n {
                let w = self.adjacency[(i, j)];
                if w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// Number of undirected edges, counting self-loops once.
    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// Same topology, different node embeddings.
    pub fn with_embeddings(&self, embeddings: DMatrix<f64>) -> Result<Self> {
        Self::new(self.adjacency.clone(), embeddings)
    }

    /// Relabels nodes so that new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                context: "permutation length",
                expected: n,
                found: perm.len(),
            });
        }
        let adjacency = DMatrix::from_fn(n, n, |a, b| self.adjacency[(perm[a], perm[b])]);
        let embeddings =
            DMatrix::from_fn(n, self.embedding_dim(), |a, c| self.embeddings[(perm[a], c)]);
        Self::new(adjacency, embeddings)
    }

    /// Hop distance from `source` to every node (`None` when unreachable).
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let n = self.n();
        let mut dist = vec![None; n];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for v in 0..n {
                if v != u && self.adjacency[(u, v)] != 0.0 && dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.hop_distances(0).iter().all(Option::is_some)
    }
}

/// `D_ii = sum_j A_ij`.
pub fn degree_matrix(g: &Graph) -> DVector<f64> {
    let a = g.adjacency();
    DVector::from_fn(g.n(), |i, _| a.row(i).iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianKind {
    Normalized,
}

/// Symmetric normalized Laplacian `L = I - D^{-1/2} A D^{-1/2}`, kept in both
/// dense and compressed-row form.
#[derive(Debug, Clone)]
pub struct LaplacianMatrix {
    matrix: DMatrix<f64>,
    sparse: SparseMatrix,
    kind: LaplacianKind,
}

impl LaplacianMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn sparse(&self) -> &SparseMatrix {
        &self.sparse
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Wraps an arbitrary symmetric matrix, e.g. for solver tests.
    pub fn from_symmetric(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "laplacian must be square, got {}x{}",
                n,
                matrix.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 {
                    return Err(Error::ShapeMismatch(format!(
                        "laplacian is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let sparse = SparseMatrix::from_dense(&matrix);
        Ok(Self {
            matrix,
            sparse,
            kind: LaplacianKind::Normalized,
        })
    }
}

pub fn normalized_laplacian(g: &Graph) -> Result<LaplacianMatrix> {
    let deg = degree_matrix(g);
    if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::ZeroDegreeNode(i));
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let n = g.n();
    let a = g.adjacency();
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        let off = inv_sqrt[i] * a[(i, j)] * inv_sqrt[j];
        if i == j {
            1.0 - off
        } else {
            -off
        }
    });
    let sparse = SparseMatrix::from_dense(&matrix);
    Ok(LaplacianMatrix {
        matrix,
        sparse,
        kind: LaplacianKind::Normalized,
    })
}

/// Compressed sparse row matrix, used for the `O(k|E|)` operator path.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let (nrows, ncols) = m.shape();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..nrows {
            for j in 0..ncols {
                let v = m[(i, j)];
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    /// Largest absolute row sum, an upper bound on the spectral radius.
    pub fn gershgorin_bound(&self) -> f64 {
        (0..self.nrows)
            .map(|i| {
                self.values[self.row_ptr[i]..self.row_ptr[i + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// On-disk graph document. `embeddings` is either inline rows or a path to a
/// CSV file resolved relative to the JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphJson {
    #[serde(default = "format_version", skip_serializing_if = "Option::is_none")]
    pub format: Option<u32>,
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub embeddings: EmbeddingsJson,
}

fn format_version() -> Option<u32> {
    Some(1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EmbeddingsJson {
    Path(String),
    Inline(Vec<Vec<f64>>),
}

impl GraphJson {
    pub fn from_graph(g: &Graph) -> Self {
        let rows = g
            .embeddings()
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        Self {
            format: Some(1),
            n: g.n(),
            edges: g.edges(),
            embeddings: EmbeddingsJson::Inline(rows),
        }
    }

    /// Resolves embeddings (reading the CSV when given as a path) and validates.
    pub fn into_graph(self, base_dir: Option<&Path>) -> Result<Graph> {
        if let Some(v) = self.format {
            if v != 1 {
                return Err(Error::InvalidGraph(format!("unsupported graph format {v}")));
            }
        }
        let rows = match self.embeddings {
            EmbeddingsJson::Inline(rows) => rows,
            EmbeddingsJson::Path(p) => {
                let path = match base_dir {
                    Some(dir) => dir.join(&p),
                    None => p.into(),
                };
                read_embeddings_csv(&path)?
            }
        };
        let embeddings = rows_to_matrix(&rows, self.n)?;
        Graph::from_edges(self.n, &self.edges, embeddings)
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n {
        return Err(Error::DimensionMismatch {
            context: "embedding rows",
            expected: n,
            found: rows.len(),
        });
    }
    let width = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::DimensionMismatch {
            context: "embedding columns",
            expected: width,
            found: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(n, width, |i, j| rows[i][j]))
}

pub fn read_embeddings_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(lineno, line)| {
            line.split(',')
                .map(|field| {
                    field.trim().parse::<f64>().map_err(|e| {
                        Error::InvalidGraph(format!(
                            "{}:{}: bad value {:?}: {e}",
                            path.display(),
                            lineno + 1,
                            field
                        ))
                    })
                })
                .collect()
        })
        .collect()
}

pub fn load_graph(path: &Path) -> Result<Graph> {
    let text = std::fs::read_to_string(path)?;
    let doc: GraphJson = serde_json::from_str(&text)?;
    doc.into_graph(path.parent())
}

pub fn save_graph(g: &Graph, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&GraphJson::from_graph(g))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Path graph `0 - 1 - ... - (n-1)` with unit weights and no self-loops.
pub fn path_graph(n: usize, embeddings: DMatrix<f64>) -> Result<Graph> {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
    Graph::from_edges(n, &edges, embeddings)
}

/// 4-neighbour lattice on a `height x width` grid, node id `row * width + col`.
pub fn grid_graph(height: usize, width: usize, self_loops: bool, embeddings: DMatrix<f64>) -> Result<Graph> {
    let mut edges = Vec::new();
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if self_loops {
                edges.push((i, i, 1.0));
            }
            if c + 1 < width {
                edges.push((i, i + 1, 1.0));
            }
            if r + 1 < height {
                edges.push((i, i + width, 1.0));
            }
        }
    }
    Graph::from_edges(height * width, &edges, embeddings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn empty(n: usize) -> DMatrix<f64> {
        DMatrix::zeros(n, 1)
    }

    #[test]
    fn degrees_of_small_graphs() {
        let k2 = Graph::from_edges(2, &[(0, 1, 1.0)], empty(2)).unwrap();
        assert_eq!(degree_matrix(&k2).as_slice(), &[1.0, 1.0]);
        let single = Graph::from_edges(1, &[(0, 0, 1.0)], empty(1)).unwrap();
        assert_eq!(degree_matrix(&single).as_slice(), &[1.0]);
        let path = path_graph(3, empty(3)).unwrap();
        assert_eq!(degree_matrix(&path).as_slice(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn laplacian_of_k2_and_self_loop() {
        let k2 = Graph::from_edges(2, &[(0, 1, 1.0)], empty(2)).unwrap();
        let l = normalized_laplacian(&k2).unwrap();
        assert_eq!(l.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));

        let single = Graph::from_edges(1, &[(0, 0, 1.0)], empty(1)).unwrap();
        assert_eq!(normalized_laplacian(&single).unwrap().matrix()[(0, 0)], 0.0);
    }

    #[test]
    fn laplacian_of_path3() {
        let l = normalized_laplacian(&path_graph(3, empty(3)).unwrap()).unwrap();
        let m = l.matrix();
        let r = -1.0 / 2f64.sqrt();
        for i in 0..3 {
            assert_abs_diff_eq!(m[(i, i)], 1.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(m[(0, 1)], r, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 0)], r, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 2)], r, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(2, 1)], r, epsilon = 1e-15);
        assert_eq!(m[(0, 2)], 0.0);
    }

    #[test]
    fn isolated_node_is_rejected() {
        let g = Graph::from_edges(3, &[(0, 1, 1.0)], empty(3)).unwrap();
        assert!(matches!(normalized_laplacian(&g), Err(Error::ZeroDegreeNode(2))));
    }

    #[test]
    fn invalid_adjacency_is_rejected() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(Graph::new(asym, empty(2)).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert!(Graph::new(neg, empty(2)).is_err());
        let heavy_loop = DMatrix::from_row_slice(1, 1, &[2.0]);
        assert!(Graph::new(heavy_loop, empty(1)).is_err());
        let k2 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            Graph::new(k2, empty(3)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Graph::from_edges(2, &[(0, 2, 1.0)], empty(2)).is_err());
        assert!(Graph::from_edges(2, &[(0, 1, 1.0), (1, 0, 2.0)], empty(2)).is_err());
    }

    #[test]
    fn sparse_matches_dense() {
        let g = grid_graph(3, 4, true, empty(12)).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut y = vec![0.0; 12];
        l.sparse().mul_vec(&x, &mut y);
        let dense = l.matrix() * DVector::from_column_slice(&x);
        for i in 0..12 {
            assert_abs_diff_eq!(y[i], dense[i], epsilon = 1e-14);
        }
        // 12 self-loops + 17 lattice edges stored twice
        assert_eq!(l.sparse().nnz(), 12 + 2 * 17);
    }

    #[test]
    fn json_round_trip_with_csv_embeddings() {
        let dir = std::env::temp_dir().join(format!("msgwnn-graph-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("emb.csv"), "1.0, 2.0\n3.5,-4\n0,0\n").unwrap();
        std::fs::write(
            dir.join("g.json"),
            r#"{"n": 3, "edges": [[0, 1, 1.0], [1, 2, 1.0], [2, 2, 1.0]], "embeddings": "emb.csv"}"#,
        )
        .unwrap();
        let g = load_graph(&dir.join("g.json")).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.adjacency()[(1, 0)], 1.0);
        assert_eq!(g.embeddings()[(1, 1)], -4.0);

        save_graph(&g, &dir.join("out.json")).unwrap();
        assert_eq!(load_graph(&dir.join("out.json")).unwrap(), g);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn hop_distances_on_path() {
        let g = path_graph(5, empty(5)).unwrap();
        let d = g.hop_distances(2);
        assert_eq!(d, vec![Some(2), Some(1), Some(0), Some(1), Some(2)]);
        assert!(g.is_connected());
    }
}
