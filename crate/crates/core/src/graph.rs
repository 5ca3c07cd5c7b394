//! Undirected simple graphs stored as symmetric compressed adjacency rows.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lanczos::SymmetricOperator;

/// Undirected graph without self-loops or multi-edges.
///
/// Each node's neighbour list is sorted; every edge appears in both rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymmetricGraph {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl SymmetricGraph {
    pub fn empty(n: usize) -> Self {
        SymmetricGraph { n, offsets: vec![0; n + 1], neighbors: Vec::new() }
    }

    /// Builds a graph from unordered pairs. Duplicates (in either
    /// orientation) collapse; self-loops and out-of-range ids are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut upper: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidInput(format!("self-loop at node {u}")));
            }
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            upper[a].push(b);
        }
        for row in upper.iter_mut() {
            row.sort_unstable();
            row.dedup();
        }
        Ok(Self::from_upper_rows(n, upper))
    }

    /// `upper[i]` holds the sorted, distinct neighbours `j > i` of node `i`.
    pub(crate) fn from_upper_rows(n: usize, upper: Vec<Vec<usize>>) -> Self {
        let mut degree = vec![0usize; n];
        for (i, row) in upper.iter().enumerate() {
            degree[i] += row.len();
            for &j in row {
                degree[j] += 1;
            }
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0usize; offsets[n]];
        // lower neighbours first: visiting rows in order keeps each list sorted
        for (i, row) in upper.iter().enumerate() {
            for &j in row {
                neighbors[fill[j]] = i;
                fill[j] += 1;
            }
        }
        for (i, row) in upper.iter().enumerate() {
            for &j in row {
                neighbors[fill[i]] = j;
                fill[i] += 1;
            }
        }
        SymmetricGraph { n, offsets, neighbors }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i).iter().copied().filter(move |&j| j > i).map(move |j| (i, j))
        })
    }

    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.degree(i) == 0).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (i, j) in self.edges() {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// Subgraph induced by `nodes`, relabelled `0..nodes.len()` in the given order.
    pub fn induced(&self, nodes: &[usize]) -> Result<Self> {
        let mut local = vec![usize::MAX; self.n];
        for (k, &v) in nodes.iter().enumerate() {
            if v >= self.n {
                return Err(Error::InvalidInput(format!("node {v} out of range")));
            }
            local[v] = k;
        }
        let edges = nodes.iter().enumerate().flat_map(|(k, &v)| {
            let local = &local;
            self.neighbors(v)
                .iter()
                .filter_map(move |&u| (local[u] != usize::MAX && local[u] > k).then_some((k, local[u])))
        });
        SymmetricGraph::from_edges(nodes.len(), edges.collect::<Vec<_>>())
    }
}

impl SymmetricOperator for SymmetricGraph {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            *yi = self.neighbors(i).iter().map(|&j| x[j]).sum();
        });
    }
}

/// Reads `u<TAB>v` lines with 0-based ids. `#` lines and blank lines are
/// skipped. The node count is `max id + 1`, raised to `min_nodes` or a
/// `# nodes N` header if either is larger.
pub fn read_edge_list<R: BufRead>(reader: R, min_nodes: usize) -> Result<SymmetricGraph> {
    let mut edges = Vec::new();
    let mut max_id = None::<usize>;
    let mut declared = min_nodes;
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if let Some(count) = trimmed.strip_prefix("# nodes ") {
            if let Ok(count) = count.trim().parse::<usize>() {
                declared = declared.max(count);
            }
            continue;
        }
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split('\t');
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse { line: lineno, msg: "expected `u<TAB>v`".into() });
        };
        let parse = |s: &str| {
            s.trim().parse::<usize>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("`{s}` is not a non-negative integer node id"),
            })
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if u == v {
            return Err(Error::Parse { line: lineno, msg: format!("self-loop at node {u}") });
        }
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
    }
    let n = max_id.map_or(0, |m| m + 1).max(declared);
    SymmetricGraph::from_edges(n, edges)
}

pub fn write_edge_list<W: Write>(graph: &SymmetricGraph, mut out: W) -> Result<()> {
    writeln!(out, "# nodes {}", graph.n())?;
    for (i, j) in graph.edges() {
        writeln!(out, "{i}\t{j}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_symmetric_rows() {
        let g = SymmetricGraph::from_edges(4, [(0, 1), (2, 1), (1, 0), (3, 0)]).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.neighbors(0), &[1, 3]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert!(g.has_edge(2, 1) && !g.has_edge(2, 3));
        let a = g.to_dense();
        assert_eq!(a, a.transpose());
        assert_eq!(a.diagonal().sum(), 0.0);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 3), (1, 2)]);
    }

    #[test]
    fn rejects_self_loop() {
        assert!(SymmetricGraph::from_edges(3, [(1, 1)]).is_err());
    }

    #[test]
    fn parses_edge_list() {
        let text = "# comment\n0\t1\n1\t0\n2\t3\n\n";
        let g = read_edge_list(text.as_bytes(), 0).unwrap();
        assert_eq!(g.n(), 4);
        assert_eq!(g.edge_count(), 2);
        let g = read_edge_list(text.as_bytes(), 10).unwrap();
        assert_eq!(g.n(), 10);
    }

    #[test]
    fn self_loop_error_names_line() {
        let err = read_edge_list("0\t1\n# x\n2\t2\n".as_bytes(), 0).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            read_edge_list("0 1\n".as_bytes(), 0),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = SymmetricGraph::from_edges(5, [(0, 4), (1, 2), (2, 3)]).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let back = read_edge_list(buf.as_slice(), 5).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn header_keeps_trailing_isolated_nodes() {
        let g = SymmetricGraph::from_edges(7, [(0, 1)]).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        assert_eq!(read_edge_list(buf.as_slice(), 0).unwrap().n(), 7);
    }

    #[test]
    fn operator_matches_dense() {
        let g = SymmetricGraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0];
        let mut y = [0.0; 4];
        g.apply(&x, &mut y);
        let dense = g.to_dense() * nalgebra::DVector::from_row_slice(&x);
        assert_eq!(y.to_vec(), dense.as_slice().to_vec());
    }

    #[test]
    fn induced_subgraph() {
        let g = SymmetricGraph::from_edges(5, [(0, 1), (1, 2), (3, 4), (0, 4)]).unwrap();
        let h = g.induced(&[4, 0, 1]).unwrap();
        assert_eq!(h.n(), 3);
        assert!(h.has_edge(0, 1) && h.has_edge(1, 2) && !h.has_edge(0, 2));
    }
}
