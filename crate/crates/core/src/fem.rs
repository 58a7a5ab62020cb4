//! Linear FEM matrices of the cotan discretization.
//!
//! `A` (called the stiffness matrix in the literature this follows, although
//! it plays the role of a mass matrix) has off-diagonal entries
//! `(|T⁺| + |T⁻|)/12` over the two triangles sharing an edge. `C` is the
//! cotan matrix with off-diagonal entries `−(cot θ + cot φ)/2`. Both
//! diagonals are defined from the off-diagonal row sums, so `C·1 = 0`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::sparse::SparseSymmetric;

fn require_closed(mesh: &TriangleMesh) -> Result<()> {
    for ((i, j), tris) in mesh.edge_triangles() {
        if tris.len() != 2 {
            return Err(Error::UnsupportedTopology(format!(
                "edge ({i}, {j}) belongs to {} triangle(s); a closed 2-manifold is required",
                tris.len()
            )));
        }
    }
    Ok(())
}

/// Adds the diagonal `diag_sign · Σ_{j≠i} M_ij` to the off-diagonal triplets.
fn with_row_sum_diagonal(
    n: usize,
    offdiag: Vec<(usize, usize, f64)>,
    diag_sign: f64,
) -> Result<SparseSymmetric> {
    let mut diag = vec![0.0; n];
    for &(i, j, v) in &offdiag {
        diag[i] += v;
        diag[j] += v;
    }
    let mut t = offdiag;
    t.extend(
        diag.into_iter()
            .enumerate()
            .map(|(i, d)| (i, i, diag_sign * d)),
    );
    SparseSymmetric::from_triplets(n, t)
}

pub fn assemble_mass(mesh: &TriangleMesh) -> Result<SparseSymmetric> {
    require_closed(mesh)?;
    let offdiag: Vec<(usize, usize, f64)> = mesh
        .triangles()
        .par_iter()
        .zip(mesh.triangle_areas().par_iter())
        .flat_map_iter(|(t, &area)| (0..3).map(move |a| (t[a], t[(a + 1) % 3], area / 12.0)))
        .collect();
    with_row_sum_diagonal(mesh.vertex_count(), offdiag, 1.0)
}

pub fn assemble_cotan(mesh: &TriangleMesh) -> Result<SparseSymmetric> {
    require_closed(mesh)?;
    let per_triangle: Vec<Result<[(usize, usize, f64); 3]>> = mesh
        .triangles()
        .par_iter()
        .enumerate()
        .map(|(index, t)| {
            let mut out = [(0, 0, 0.0); 3];
            for (a, slot) in out.iter_mut().enumerate() {
                let (i, j, k) = (t[a], t[(a + 1) % 3], t[(a + 2) % 3]);
                let cot = opposite_cot(mesh, i, j, k).ok_or(Error::DegenerateTriangle {
                    index,
                    area: mesh.triangle_areas()[index],
                })?;
                *slot = (i, j, -0.5 * cot);
            }
            Ok(out)
        })
        .collect();
    let mut offdiag = Vec::with_capacity(3 * mesh.triangle_count());
    for r in per_triangle {
        offdiag.extend_from_slice(&r?);
    }
    with_row_sum_diagonal(mesh.vertex_count(), offdiag, -1.0)
}

/// Cotangent of the angle at `k` opposite edge `(i, j)`.
fn opposite_cot(mesh: &TriangleMesh, i: usize, j: usize, k: usize) -> Option<f64> {
    let u = mesh.vertex(i) - mesh.vertex(k);
    let v = mesh.vertex(j) - mesh.vertex(k);
    let cross = u.cross(&v).norm();
    if cross < 2.0 * crate::mesh::DEGENERATE_AREA {
        return None;
    }
    let angle = cross.atan2(u.dot(&v));
    Some(angle.cos() / angle.sin())
}
