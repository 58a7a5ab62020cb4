//! Low end of the generalized symmetric spectrum `Cψ = λAψ`.
//!
//! The default route is a block Krylov iteration with the shift-inverted
//! operator `(C − sA)⁻¹A`, full A-reorthogonalization and Rayleigh–Ritz
//! extraction on `C`. A block is used because symmetric meshes (the
//! icosphere in particular) carry exactly repeated eigenvalues that a
//! single-vector iteration cannot resolve. When the requested pairs make up
//! a large share of the spectrum the Krylov space would approach the full
//! space anyway, and a dense reduction is cheaper.

use std::path::Path;

use faer::{Mat, MatRef, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{assemble_cotan, assemble_mass};
use crate::mesh::{MeshId, ScalarField, TriangleMesh};
use crate::sparse::{Cholesky, SparseSymmetric};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    /// Krylov iteration unless the request covers a large part of the spectrum.
    Auto,
    Krylov,
    Dense,
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Bound on `‖Cψ − λAψ‖ / ‖Aψ‖` for every returned pair.
    pub tolerance: f64,
    pub method: EigenMethod,
    pub block_size: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tolerance: DEFAULT_TOLERANCE,
            method: EigenMethod::Auto,
            block_size: 8,
            seed: 0x5eed,
        }
    }
}

/// Eigenvalues in ascending order with A-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    eigenvalues: Vec<f64>,
    /// Column-major `n × (k+1)`.
    vectors: Vec<f64>,
    n: usize,
    residual_norms: Vec<f64>,
    mesh_id: Option<MeshId>,
}

impl EigenBasis {
    /// Assembles `A` and `C` on `mesh` and solves for `k + 1` pairs.
    pub fn compute(mesh: &TriangleMesh, k: usize, options: &EigenOptions) -> Result<Self> {
        let a = assemble_mass(mesh)?;
        let c = assemble_cotan(mesh)?;
        let mut basis = solve_smallest_with(&a, &c, k, options)?;
        basis.mesh_id = Some(mesh.id());
        Ok(basis)
    }

    pub fn from_parts(
        eigenvalues: Vec<f64>,
        vectors: Vec<f64>,
        n: usize,
        residual_norms: Vec<f64>,
        mesh_id: Option<MeshId>,
    ) -> Result<Self> {
        let k1 = eigenvalues.len();
        if vectors.len() != n * k1 || residual_norms.len() != k1 {
            return Err(Error::InvalidArgument(
                "eigenbasis parts have inconsistent sizes".into(),
            ));
        }
        Ok(EigenBasis {
            eigenvalues,
            vectors,
            n,
            residual_norms,
            mesh_id,
        })
    }

    pub fn bind(mut self, mesh: &TriangleMesh) -> Result<Self> {
        if mesh.vertex_count() != self.n {
            return Err(Error::MeshMismatch);
        }
        self.mesh_id = Some(mesh.id());
        Ok(self)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.eigenvalues[j]
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }

    /// Eigenvectors as an `n × (k+1)` matrix view.
    pub fn matrix(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.vectors, self.n, self.len())
    }

    pub fn residual_norms(&self) -> &[f64] {
        &self.residual_norms
    }

    /// Number of eigenpairs (`k + 1`).
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn mesh_id(&self) -> Option<MeshId> {
        self.mesh_id
    }

    /// The first `count` pairs.
    pub fn truncated(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate {} pairs to {count}",
                self.len()
            )));
        }
        Ok(EigenBasis {
            eigenvalues: self.eigenvalues[..count].to_vec(),
            vectors: self.vectors[..count * self.n].to_vec(),
            n: self.n,
            residual_norms: self.residual_norms[..count].to_vec(),
            mesh_id: self.mesh_id,
        })
    }

    pub(crate) fn check_field(&self, field: &ScalarField) -> Result<()> {
        match self.mesh_id {
            Some(id) => field.check_bound(id),
            None if field.len() == self.n => Ok(()),
            None => Err(Error::MeshMismatch),
        }
    }

    /// Writes `index,lambda,residual` rows.
    pub fn write_eigenvalues_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "lambda", "residual"])?;
        for (j, (l, r)) in self
            .eigenvalues
            .iter()
            .zip(&self.residual_norms)
            .enumerate()
        {
            w.write_record([j.to_string(), l.to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes one row per vertex with columns `psi0 … psik`.
    pub fn write_eigenvectors_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record((0..self.len()).map(|j| format!("psi{j}")))?;
        for i in 0..self.n {
            w.write_record((0..self.len()).map(|j| self.vectors[j * self.n + i].to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the pair of files written by the two CSV writers.
    pub fn read_csv(eigenvalues: impl AsRef<Path>, eigenvectors: impl AsRef<Path>) -> Result<Self> {
        let mut values = Vec::new();
        let mut residuals = Vec::new();
        let path = eigenvalues.as_ref();
        for (row, rec) in csv::Reader::from_path(path)?.records().enumerate() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::format(path, row + 2, "malformed eigenvalue row"))
            };
            values.push(parse(1)?);
            residuals.push(parse(2)?);
        }
        let k1 = values.len();
        let path = eigenvectors.as_ref();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (row, rec) in csv::Reader::from_path(path)?.records().enumerate() {
            let rec = rec?;
            let r: Option<Vec<f64>> = rec.iter().map(|s| s.trim().parse().ok()).collect();
            match r {
                Some(r) if r.len() == k1 => rows.push(r),
                _ => {
                    return Err(Error::format(
                        path,
                        row + 2,
                        format!("expected {k1} numeric columns"),
                    ))
                }
            }
        }
        let n = rows.len();
        let mut vectors = vec![0.0; n * k1];
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                vectors[j * n + i] = *v;
            }
        }
        Self::from_parts(values, vectors, n, residuals, None)
    }
}

/// Solves for the `k + 1` smallest eigenpairs with default options and the
/// given residual tolerance.
pub fn solve_smallest(
    a: &SparseSymmetric,
    c: &SparseSymmetric,
    k: usize,
    tol: f64,
) -> Result<EigenBasis> {
    solve_smallest_with(
        a,
        c,
        k,
        &EigenOptions {
            tolerance: tol,
            ..EigenOptions::default()
        },
    )
}

pub fn solve_smallest_with(
    a: &SparseSymmetric,
    c: &SparseSymmetric,
    k: usize,
    options: &EigenOptions,
) -> Result<EigenBasis> {
    let n = a.dim();
    if c.dim() != n {
        return Err(Error::InvalidArgument("A and C differ in dimension".into()));
    }
    let k1 = k + 1;
    let dense = match options.method {
        EigenMethod::Dense => true,
        EigenMethod::Krylov => false,
        EigenMethod::Auto => n <= 400 || 4 * k1 > n,
    };
    let limit = if dense { n } else { n / 2 };
    if k1 > limit {
        return Err(Error::InvalidArgument(format!(
            "{k1} eigenpairs requested but at most {limit} are supported for {n} vertices"
        )));
    }
    let (values, vectors) = if dense {
        dense_pairs(a, c, k1)?
    } else {
        krylov_pairs(a, c, k1, options)?
    };
    finish(a, c, values, vectors, n, options.tolerance)
}

/// `1/√(1ᵀA1)` at every vertex when the constant vector spans a null
/// direction of `C`, as it does for the cotan Laplacian.
fn constant_null_vector(a: &SparseSymmetric, c: &SparseSymmetric) -> Option<Vec<f64>> {
    let n = a.dim();
    let scale = c.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let defect = c.row_sums().iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let mass = a.total_sum();
    (defect <= 1e-12 * scale && mass > 0.0).then(|| vec![1.0 / mass.sqrt(); n])
}

/// Orders, fixes signs and records residuals; fails if any residual is
/// above tolerance.
fn finish(
    a: &SparseSymmetric,
    c: &SparseSymmetric,
    values: Vec<f64>,
    mut vectors: Vec<f64>,
    n: usize,
    tol: f64,
) -> Result<EigenBasis> {
    let mut values = values;
    // Replace the computed null pair by the exact one when it is the constant.
    if let Some(constant) = constant_null_vector(a, c) {
        let av = a.mul_vec(&vectors[..n]);
        let overlap: f64 = constant.iter().zip(&av).map(|(x, y)| x * y).sum();
        if (overlap.abs() - 1.0).abs() < 1e-6 {
            vectors[..n].copy_from_slice(&constant);
            values[0] = 0.0;
        }
    }
    for col in vectors.chunks_mut(n) {
        let mean = col.iter().sum::<f64>() / n as f64;
        let flip = if mean.abs() >= 1e-12 {
            mean < 0.0
        } else {
            let big = col
                .iter()
                .copied()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            big < 0.0
        };
        if flip {
            col.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let residual_norms: Vec<f64> = values
        .iter()
        .zip(vectors.chunks(n))
        .map(|(&l, v)| pair_residual(a, c, l, v))
        .collect();
    let worst = residual_norms.iter().copied().fold(0.0, f64::max);
    if !(worst < tol) {
        return Err(Error::NoConvergence {
            iterations: 0,
            worst_residual: worst,
            residuals: residual_norms,
        });
    }
    EigenBasis::from_parts(values, vectors, n, residual_norms, None)
}

fn pair_residual(a: &SparseSymmetric, c: &SparseSymmetric, lambda: f64, v: &[f64]) -> f64 {
    let av = a.mul_vec(v);
    let cv = c.mul_vec(v);
    let r: f64 = cv
        .iter()
        .zip(&av)
        .map(|(x, y)| (x - lambda * y).powi(2))
        .sum();
    let d: f64 = av.iter().map(|y| y * y).sum();
    (r / d).sqrt()
}

fn to_dense_mat(m: &SparseSymmetric) -> Mat<f64> {
    let mut d = Mat::<f64>::zeros(m.dim(), m.dim());
    for i in 0..m.dim() {
        for (j, v) in m.row(i) {
            d[(i, j)] = v;
        }
    }
    d
}

/// Dense reduction `L⁻¹ C L⁻ᵀ` with `A = L Lᵀ`.
fn dense_pairs(
    a: &SparseSymmetric,
    c: &SparseSymmetric,
    k1: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.dim();
    let llt = to_dense_mat(a)
        .llt(Side::Lower)
        .map_err(|_| Error::Numerical("mass matrix is not positive definite".into()))?;
    let l = llt.L();
    let mut m = to_dense_mat(c);
    l.solve_lower_triangular_in_place(&mut m);
    let mut mt = m.transpose().to_owned();
    l.solve_lower_triangular_in_place(&mut mt);
    let sym = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (mt[(i, j)] + mt[(j, i)]));
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("dense eigensolver failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let mut y = evd.U().subcols(0, k1).to_owned();
    l.transpose().solve_upper_triangular_in_place(&mut y);
    let values = (0..k1).map(|j| s[j]).collect();
    let mut vectors = Vec::with_capacity(n * k1);
    for j in 0..k1 {
        vectors.extend((0..n).map(|i| y[(i, j)]));
    }
    Ok((values, vectors))
}

/// Growing A-orthonormal basis with cached `A·V` and `C·V`.
struct KrylovBasis<'a> {
    a: &'a SparseSymmetric,
    c: &'a SparseSymmetric,
    n: usize,
    v: Vec<f64>,
    av: Vec<f64>,
    cv: Vec<f64>,
}

impl KrylovBasis<'_> {
    fn len(&self) -> usize {
        self.v.len() / self.n
    }

    fn view<'b>(&self, data: &'b [f64]) -> MatRef<'b, f64> {
        MatRef::from_column_major_slice(data, self.n, data.len() / self.n)
    }

    /// A-orthogonalizes `w` against the basis (twice) and appends it unless
    /// it collapses. Returns whether it was kept.
    fn push(&mut self, mut w: Vec<f64>) -> bool {
        let n = self.n;
        let before = self.a.bilinear(&w, &w).sqrt();
        if !(before > 0.0) {
            return false;
        }
        for _ in 0..2 {
            if self.len() == 0 {
                break;
            }
            let wm = MatRef::from_column_major_slice(&w, n, 1);
            let coef = self.view(&self.av).transpose() * wm;
            let proj = self.view(&self.v) * &coef;
            for (x, p) in w.iter_mut().zip(proj.col(0).iter()) {
                *x -= p;
            }
        }
        let aw = self.a.mul_vec(&w);
        let norm = w.iter().zip(&aw).map(|(x, y)| x * y).sum::<f64>().sqrt();
        if !(norm > 1e-10 * before) {
            return false;
        }
        let inv = 1.0 / norm;
        w.iter_mut().for_each(|x| *x *= inv);
        let aw: Vec<f64> = aw.iter().map(|x| x * inv).collect();
        let cw = self.c.mul_vec(&w);
        self.v.extend_from_slice(&w);
        self.av.extend_from_slice(&aw);
        self.cv.extend_from_slice(&cw);
        true
    }

    /// Rayleigh–Ritz on `C` for the lowest `k1` pairs. Returns values,
    /// vectors (column-major) and residual norms.
    fn ritz(&self, k1: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (v, av, cv) = (self.view(&self.v), self.view(&self.av), self.view(&self.cv));
        let m = self.len();
        let h = v.transpose() * cv;
        let h = Mat::<f64>::from_fn(m, m, |i, j| 0.5 * (h[(i, j)] + h[(j, i)]));
        let evd = h
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("projected eigensolver failed: {e:?}")))?;
        let s = evd.S().column_vector();
        let y = evd.U().subcols(0, k1);
        let psi = v * y;
        let apsi = av * y;
        let cpsi = cv * y;
        let mut values = Vec::with_capacity(k1);
        let mut vectors = Vec::with_capacity(self.n * k1);
        let mut residuals = Vec::with_capacity(k1);
        for j in 0..k1 {
            let l = s[j];
            let (mut r, mut d) = (0.0, 0.0);
            for i in 0..self.n {
                r += (cpsi[(i, j)] - l * apsi[(i, j)]).powi(2);
                d += apsi[(i, j)].powi(2);
            }
            values.push(l);
            residuals.push((r / d).sqrt());
            vectors.extend(psi.col(j).iter().copied());
        }
        Ok((values, vectors, residuals))
    }
}

fn factor_shifted(a: &SparseSymmetric, c: &SparseSymmetric) -> Result<Cholesky> {
    let n = a.dim() as f64;
    let mut shift = -1e-8 * (c.trace() / n);
    let mut last = None;
    for _ in 0..8 {
        match Cholesky::factor(&c.combine(1.0, a, -shift)?) {
            Ok(f) => return Ok(f),
            Err(e) => {
                last = Some(e);
                shift *= 10.0;
            }
        }
    }
    Err(last.unwrap_or_else(|| Error::Numerical("shifted factorization failed".into())))
}

fn krylov_pairs(
    a: &SparseSymmetric,
    c: &SparseSymmetric,
    k1: usize,
    options: &EigenOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.dim();
    let solver = factor_shifted(a, c)?;
    let block = options.block_size.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let random_vec =
        |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(rng)).collect() };

    let mut basis = KrylovBasis {
        a,
        c,
        n,
        v: Vec::new(),
        av: Vec::new(),
        cv: Vec::new(),
    };
    // The known null vector goes in first so the near-singular solves cannot
    // smear it across the other directions.
    if let Some(constant) = constant_null_vector(a, c) {
        basis.push(constant);
    }
    let mut frontier: Vec<usize> = Vec::new();
    while frontier.len() < block {
        if basis.push(random_vec(&mut rng)) {
            frontier.push(basis.len() - 1);
        }
    }

    let budget = 50 * k1;
    let mut next_check = (2 * k1 + block).min(n);
    let mut worst = f64::INFINITY;
    let mut residuals = Vec::new();
    for step in 0..budget {
        let mut added = Vec::new();
        for &j in &frontier {
            if basis.len() >= n {
                break;
            }
            let mut w = basis.av[j * n..(j + 1) * n].to_vec();
            solver.solve_in_place(&mut w);
            if basis.push(w) {
                added.push(basis.len() - 1);
            }
        }
        while added.len() < frontier.len() && basis.len() < n {
            // the block lost rank; refill with fresh directions
            if basis.push(random_vec(&mut rng)) {
                added.push(basis.len() - 1);
            }
        }
        frontier = added;

        let m = basis.len();
        if m >= next_check || m >= n || frontier.is_empty() {
            let (values, vectors, res) = basis.ritz(k1)?;
            worst = res.iter().copied().fold(0.0, f64::max);
            log::debug!("krylov step {step}: dimension {m}, worst residual {worst:e}");
            if worst < 0.1 * options.tolerance || m >= n || frontier.is_empty() {
                if worst < options.tolerance {
                    return Ok((values, vectors));
                }
                return Err(Error::NoConvergence {
                    iterations: step + 1,
                    worst_residual: worst,
                    residuals: res,
                });
            }
            residuals = res;
            next_check = (m + block.max(k1 / 2)).min(n);
        }
    }
    Err(Error::NoConvergence {
        iterations: budget,
        worst_residual: worst,
        residuals,
    })
}

/// Largest A-orthonormality defect and largest residual of a basis.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BasisReport {
    pub orthonormality_defect: f64,
    pub max_residual: f64,
}

pub fn verify_basis(
    basis: &EigenBasis,
    a: &SparseSymmetric,
    c: &SparseSymmetric,
) -> Result<BasisReport> {
    if a.dim() != basis.vertex_count() || c.dim() != basis.vertex_count() {
        return Err(Error::InvalidArgument(
            "basis and matrices differ in dimension".into(),
        ));
    }
    let n = basis.vertex_count();
    let av: Vec<f64> = (0..basis.len())
        .flat_map(|j| a.mul_vec(basis.vector(j)))
        .collect();
    let gram = basis.matrix().transpose() * MatRef::from_column_major_slice(&av, n, basis.len());
    let mut defect = 0.0f64;
    for i in 0..basis.len() {
        for j in 0..basis.len() {
            let target = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((gram[(i, j)] - target).abs());
        }
    }
    let max_residual = (0..basis.len())
        .map(|j| pair_residual(a, c, basis.eigenvalue(j), basis.vector(j)))
        .fold(0.0, f64::max);
    Ok(BasisReport {
        orthonormality_defect: defect,
        max_residual,
    })
}
