use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{ScalarField, TriangleMesh};

/// Normalized truncated Gaussian weights of `p` and its one-ring at
/// bandwidth `sigma`, center first. Distances are Euclidean edge lengths.
pub fn ring_weights(mesh: &TriangleMesh, p: usize, sigma: f64) -> Result<Vec<(usize, f64)>> {
    let ring = mesh.one_ring(p);
    if ring.is_empty() {
        return Err(Error::Validation(format!("vertex {p} has no neighbors")));
    }
    let center = mesh.vertex(p);
    let mut w: Vec<(usize, f64)> = std::iter::once((p, 0.0))
        .chain(
            ring.iter()
                .map(|&q| (q, (mesh.vertex(q) - center).norm_squared() / (4.0 * sigma))),
        )
        .collect();
    // The center's exponent is 0, so tiny bandwidths underflow only the
    // neighbors and the total stays at least 1.
    let total: f64 = w
        .iter_mut()
        .map(|(_, e)| {
            *e = (-*e).exp();
            *e
        })
        .sum();
    for (_, e) in &mut w {
        *e /= total;
    }
    Ok(w)
}

/// `m` passes of one-ring kernel smoothing with per-pass bandwidth `σ/m`.
pub fn iterated_kernel_smooth(
    mesh: &TriangleMesh,
    field: &ScalarField,
    sigma: f64,
    iterations: usize,
) -> Result<ScalarField> {
    field.check_bound(mesh.id())?;
    if iterations == 0 {
        return Err(Error::InvalidArgument(
            "iterations must be at least 1".into(),
        ));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {sigma}"
        )));
    }
    let per_pass = sigma / iterations as f64;
    let weights = (0..mesh.vertex_count())
        .into_par_iter()
        .map(|p| ring_weights(mesh, p, per_pass))
        .collect::<Result<Vec<_>>>()?;
    let mut current = field.values().to_vec();
    for _ in 0..iterations {
        current = weights
            .par_iter()
            .map(|w| w.iter().map(|&(q, wq)| wq * current[q]).sum())
            .collect();
    }
    field.with_values(current)
}
