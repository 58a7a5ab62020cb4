use faer::linalg::solvers::{Qr, SolveLstsq};
use faer::Mat;

use crate::eigen::EigenBasis;
use crate::error::{Error, Result};
use crate::mesh::{MeshId, ScalarField};
use crate::sparse::SparseSymmetric;

/// Fourier coefficients `β_j` of a field in an eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    beta: Vec<f64>,
    mesh_id: MeshId,
}

impl CoefficientVector {
    pub fn new(beta: Vec<f64>, mesh_id: MeshId) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numerical("non-finite coefficient".into()));
        }
        Ok(CoefficientVector { beta, mesh_id })
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh_id
    }

    /// Coefficients after diffusion for time `sigma`: `e^{−λ_j σ} β_j`.
    pub fn diffused(&self, basis: &EigenBasis, sigma: f64) -> Self {
        let beta = self
            .beta
            .iter()
            .zip(basis.eigenvalues())
            .map(|(b, l)| (-l * sigma).exp() * b)
            .collect();
        CoefficientVector {
            beta,
            mesh_id: self.mesh_id,
        }
    }

    /// Writes `index,beta` rows.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "beta"])?;
        for (j, b) in self.beta.iter().enumerate() {
            w.write_record([j.to_string(), b.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMethod {
    /// Vertexwise least squares `min ‖Y − Ψβ‖²`.
    #[default]
    LeastSquares,
    /// `β_j = ψ_j' A Y`, exact for an A-orthonormal basis.
    MassProjection,
}

/// Householder QR of the `n × (k+1)` design matrix, reusable across fields.
pub struct LeastSquaresFitter {
    qr: Qr<f64>,
    n: usize,
    len: usize,
    mesh_id: Option<MeshId>,
}

impl LeastSquaresFitter {
    pub fn new(basis: &EigenBasis) -> Result<Self> {
        let (n, k1) = (basis.vertex_count(), basis.len());
        if k1 > n {
            return Err(Error::InvalidArgument(format!(
                "{k1} basis functions for {n} vertices"
            )));
        }
        let qr = basis.matrix().qr();
        let r = qr.thin_R();
        let diag: Vec<f64> = (0..k1).map(|i| r[(i, i)].abs()).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 1e-10 * max) {
            return Err(Error::RankDeficient(format!(
                "smallest |R_ii| = {min:e}, largest {max:e}"
            )));
        }
        Ok(LeastSquaresFitter {
            qr,
            n,
            len: k1,
            mesh_id: basis.mesh_id(),
        })
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn fit(&self, field: &ScalarField) -> Result<CoefficientVector> {
        match self.mesh_id {
            Some(id) => field.check_bound(id)?,
            None if field.len() == self.n => {}
            None => return Err(Error::MeshMismatch),
        }
        let beta = self
            .fit_columns(&[field.values()])
            .pop()
            .expect("one column");
        CoefficientVector::new(beta, field.mesh_id())
    }

    /// Fits several value vectors at once; each must have one entry per vertex.
    pub fn fit_columns(&self, columns: &[&[f64]]) -> Vec<Vec<f64>> {
        let rhs = Mat::<f64>::from_fn(self.n, columns.len(), |i, j| columns[j][i]);
        let sol = self.qr.solve_lstsq(&rhs);
        (0..columns.len())
            .map(|j| (0..self.len).map(|i| sol[(i, j)]).collect())
            .collect()
    }
}

/// Least-squares coefficients of `field`.
pub fn fit_coefficients(basis: &EigenBasis, field: &ScalarField) -> Result<CoefficientVector> {
    LeastSquaresFitter::new(basis)?.fit(field)
}

/// Coefficients by A-weighted projection.
pub fn fit_coefficients_mass(
    basis: &EigenBasis,
    a: &SparseSymmetric,
    field: &ScalarField,
) -> Result<CoefficientVector> {
    basis.check_field(field)?;
    if a.dim() != basis.vertex_count() {
        return Err(Error::InvalidArgument(
            "mass matrix dimension differs from basis".into(),
        ));
    }
    let ay = a.mul_vec(field.values());
    let beta = (0..basis.len())
        .map(|j| basis.vector(j).iter().zip(&ay).map(|(p, y)| p * y).sum())
        .collect();
    CoefficientVector::new(beta, field.mesh_id())
}

pub fn fit_with(
    method: FitMethod,
    basis: &EigenBasis,
    a: &SparseSymmetric,
    field: &ScalarField,
) -> Result<CoefficientVector> {
    match method {
        FitMethod::LeastSquares => fit_coefficients(basis, field),
        FitMethod::MassProjection => fit_coefficients_mass(basis, a, field),
    }
}

/// `Σ_j e^{−λ_j σ} β_j ψ_j` at every vertex.
pub fn heat_kernel_smooth(
    basis: &EigenBasis,
    coeffs: &CoefficientVector,
    sigma: f64,
) -> Result<ScalarField> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be nonnegative, got {sigma}"
        )));
    }
    if coeffs.len() != basis.len() {
        return Err(Error::InvalidArgument(
            "coefficient count differs from basis size".into(),
        ));
    }
    let weighted = coeffs.diffused(basis, sigma);
    let values = reconstruct(basis, &[weighted.beta()])
        .pop()
        .expect("one column");
    ScalarField::with_id(coeffs.mesh_id(), basis.vertex_count(), values)
}

/// `Ψ β` for several coefficient vectors.
pub fn reconstruct(basis: &EigenBasis, betas: &[&[f64]]) -> Vec<Vec<f64>> {
    let b = Mat::<f64>::from_fn(basis.len(), betas.len(), |i, j| betas[j][i]);
    let out = basis.matrix() * &b;
    (0..betas.len())
        .map(|j| out.col(j).iter().copied().collect())
        .collect()
}

/// Truncated heat kernel `Σ_j e^{−λ_j σ} ψ_j(p) ψ_j(q)`.
pub fn heat_kernel_eval(basis: &EigenBasis, sigma: f64, p: usize, q: usize) -> Result<f64> {
    let n = basis.vertex_count();
    if p >= n || q >= n {
        return Err(Error::InvalidArgument(format!(
            "vertex index out of range ({p}, {q})"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {sigma}"
        )));
    }
    // Pair the factors symmetrically so K(p, q) and K(q, p) round identically.
    Ok((0..basis.len())
        .map(|j| {
            let v = basis.vector(j);
            (-basis.eigenvalue(j) * sigma).exp() * (v[p] * v[q])
        })
        .sum())
}

/// `K_σ(·, q)` over all vertices.
pub fn heat_kernel_column(basis: &EigenBasis, sigma: f64, q: usize) -> Result<Vec<f64>> {
    if q >= basis.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "vertex index {q} out of range"
        )));
    }
    let weights: Vec<f64> = (0..basis.len())
        .map(|j| (-basis.eigenvalue(j) * sigma).exp() * basis.vector(j)[q])
        .collect();
    Ok(reconstruct(basis, &[&weights]).pop().expect("one column"))
}

/// Diffusion wavelet transform `⟨W_{σ,q}, Y⟩` with scale function
/// `g(λσ) = e^{−λσ}`, integrated against the mass matrix.
pub fn wavelet_transform(
    basis: &EigenBasis,
    a: &SparseSymmetric,
    field: &ScalarField,
    sigma: f64,
    q: usize,
) -> Result<f64> {
    basis.check_field(field)?;
    let wavelet = heat_kernel_column(basis, sigma, q)?;
    Ok(a.bilinear(&wavelet, field.values()))
}

/// `Σ_j λ_j e^{−2λ_j σ} β_j²`, the Dirichlet energy of the smoothed field
/// in coefficient space.
pub fn spectral_energy(basis: &EigenBasis, coeffs: &CoefficientVector, sigma: f64) -> f64 {
    coeffs
        .beta()
        .iter()
        .zip(basis.eigenvalues())
        .map(|(b, l)| l * (-2.0 * l * sigma).exp() * b * b)
        .sum()
}
