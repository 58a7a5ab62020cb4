//! Symmetric sparse matrices and a profile Cholesky factorization.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Entries below this magnitude are not stored.
pub const DROP_TOLERANCE: f64 = 1e-15;

/// A symmetric sparse matrix.
///
/// Logically the upper triangle `(row ≤ col)` defines the matrix; both
/// triangles are kept in CSR form so products need no special casing.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSymmetric {
    /// Builds from `(row, col, value)` triplets. Each triplet stands for the
    /// symmetric pair; duplicates are summed and `row > col` is mirrored.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut upper: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "entry ({i}, {j}) outside {n}×{n}"
                )));
            }
            upper.push(if i <= j { (i, j, v) } else { (j, i, v) });
        }
        upper.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(upper.len());
        for (i, j, v) in upper {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        merged.retain(|e| e.2.abs() >= DROP_TOLERANCE);

        let mut full: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * merged.len());
        for &(i, j, v) in &merged {
            full.push((i, j, v));
            if i != j {
                full.push((j, i, v));
            }
        }
        full.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in &full {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseSymmetric {
            n,
            row_ptr,
            cols: full.iter().map(|e| e.1).collect(),
            vals: full.iter().map(|e| e.2).collect(),
        })
    }

    pub fn diagonal_matrix(diag: &[f64]) -> Result<Self> {
        Self::from_triplets(diag.len(), diag.iter().enumerate().map(|(i, &d)| (i, i, d)))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of row `i` as `(col, value)`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// Upper-triangle entries `(row, col, value)` with `row ≤ col`.
    pub fn upper_entries(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n)
            .flat_map(|i| {
                self.row(i)
                    .filter(move |&(j, _)| j >= i)
                    .map(move |(j, v)| (i, j, v))
            })
            .collect()
    }

    pub fn nnz_upper(&self) -> usize {
        (0..self.n)
            .map(|i| self.row(i).filter(|&(j, _)| j >= i).count())
            .sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    /// Sum of every entry of the full matrix.
    pub fn total_sum(&self) -> f64 {
        self.vals.iter().sum()
    }

    /// `y = M x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `x' M y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>())
            .sum()
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &SparseSymmetric, b: f64) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::InvalidArgument("matrix dimensions differ".into()));
        }
        let mut t = Vec::with_capacity(self.vals.len() + other.vals.len());
        for (m, s) in [(self, a), (other, b)] {
            for (i, j, v) in m.upper_entries() {
                t.push((i, j, s * v));
            }
        }
        Self::from_triplets(self.n, t)
    }

    /// Diagonal matrix of row sums (mass lumping).
    pub fn lumped(&self) -> Result<Self> {
        Self::diagonal_matrix(&self.row_sums())
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.vals.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[i][j] = v;
            }
        }
        d
    }

    /// Writes `row col value` lines (0-based, upper triangle).
    pub fn write_coordinate(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "% symmetric {} {} {}", self.n, self.n, self.nnz_upper())?;
        for (i, j, v) in self.upper_entries() {
            writeln!(w, "{i} {j} {v}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reverse Cuthill–McKee ordering of the adjacency graph: `order[k]` is
    /// the original index placed at position `k`.
    pub fn rcm_order(&self) -> Vec<usize> {
        let n = self.n;
        let degree: Vec<usize> = (0..n)
            .map(|i| self.row(i).filter(|&(j, _)| j != i).count())
            .collect();
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut by_degree: Vec<usize> = (0..n).collect();
        by_degree.sort_by_key(|&i| (degree[i], i));
        for &seed in &by_degree {
            if visited[seed] {
                continue;
            }
            let start = self.pseudo_peripheral(seed, &degree);
            visited[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                let mut nbrs: Vec<usize> = self
                    .row(v)
                    .map(|(j, _)| j)
                    .filter(|&j| !visited[j])
                    .collect();
                nbrs.sort_by_key(|&j| (degree[j], j));
                for j in nbrs {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        order.reverse();
        order
    }

    /// Level structure of a BFS from `root`: (eccentricity, last level).
    fn bfs_levels(&self, root: usize) -> (usize, Vec<usize>) {
        let mut level = vec![usize::MAX; self.n];
        level[root] = 0;
        let mut frontier = vec![root];
        let mut depth = 0;
        loop {
            let mut next = Vec::new();
            for &v in &frontier {
                for (j, _) in self.row(v) {
                    if level[j] == usize::MAX {
                        level[j] = depth + 1;
                        next.push(j);
                    }
                }
            }
            if next.is_empty() {
                return (depth, frontier);
            }
            depth += 1;
            frontier = next;
        }
    }

    fn pseudo_peripheral(&self, seed: usize, degree: &[usize]) -> usize {
        let mut root = seed;
        let (mut ecc, mut last) = self.bfs_levels(root);
        loop {
            let cand = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            let (e, l) = self.bfs_levels(cand);
            if e <= ecc {
                return root;
            }
            root = cand;
            ecc = e;
            last = l;
        }
    }
}

/// Cholesky factor `P M P' = L L'` stored by rows over the envelope of the
/// RCM-reordered matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    /// `perm[old] = new`.
    perm: Vec<usize>,
    order: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl Cholesky {
    pub fn factor(m: &SparseSymmetric) -> Result<Self> {
        let n = m.dim();
        let order = m.rcm_order();
        let mut perm = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            perm[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in order.iter().enumerate() {
            for (j, _) in m.row(old) {
                let pj = perm[j];
                if pj < first[new] {
                    first[new] = pj;
                }
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0; start[n]];
        for (new, &old) in order.iter().enumerate() {
            for (j, v) in m.row(old) {
                let pj = perm[j];
                if pj <= new {
                    values[start[new] + pj - first[new]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let ri = start[i] - fi;
                let rj = start[j] - fj;
                let mut s = values[ri + j];
                for k in lo..j {
                    s -= values[ri + k] * values[rj + k];
                }
                values[ri + j] = s / values[rj + j];
            }
            let ri = start[i] - fi;
            let mut d = values[ri + i];
            for k in fi..i {
                d -= values[ri + k] * values[ri + k];
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    pivot: order[i],
                    value: d,
                });
            }
            values[ri + i] = d.sqrt();
        }
        Ok(Cholesky {
            n,
            perm,
            order,
            first,
            start,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    /// Solves `M x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.order.iter().map(|&old| b[old]).collect();
        for i in 0..self.n {
            let ri = self.start[i] - self.first[i];
            let mut s = y[i];
            for k in self.first[i]..i {
                s -= self.values[ri + k] * y[k];
            }
            y[i] = s / self.values[ri + i];
        }
        for i in (0..self.n).rev() {
            let ri = self.start[i] - self.first[i];
            y[i] /= self.values[ri + i];
            let yi = y[i];
            for k in self.first[i]..i {
                y[k] -= self.values[ri + k] * yi;
            }
        }
        for (old, bi) in b.iter_mut().enumerate() {
            *bi = y[self.perm[old]];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
