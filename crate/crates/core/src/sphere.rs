//! Real spherical harmonics and the Gibbs ringing experiment on the unit sphere.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{EigenBasis, EigenOptions};
use crate::error::{Error, Result};
use crate::fem::{assemble_cotan, assemble_mass};
use crate::mesh::{ScalarField, TriangleMesh};

pub const MAX_DEGREE: usize = 100;
/// Allowed deviation of a vertex radius from 1.
pub const SPHERE_TOLERANCE: f64 = 1e-6;
pub const BAND: (f64, f64) = (0.125, 0.25);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HarmonicIndex {
    pub degree: usize,
    pub order: i64,
}

impl HarmonicIndex {
    pub fn new(degree: usize, order: i64) -> Result<Self> {
        if order.unsigned_abs() as usize > degree {
            return Err(Error::InvalidArgument(format!(
                "order {order} exceeds degree {degree}"
            )));
        }
        Ok(HarmonicIndex { degree, order })
    }

    /// Position `l² + l + m` in degree-major order.
    pub fn linear(&self) -> usize {
        ((self.degree * self.degree + self.degree) as i64 + self.order) as usize
    }

    pub fn from_linear(index: usize) -> Self {
        let degree = (index as f64).sqrt().floor() as usize;
        let degree = if (degree + 1) * (degree + 1) <= index {
            degree + 1
        } else {
            degree
        };
        HarmonicIndex {
            degree,
            order: index as i64 - (degree * degree + degree) as i64,
        }
    }

    /// Eigenvalue `l(l+1)` of the spherical Laplacian.
    pub fn eigenvalue(&self) -> f64 {
        (self.degree * (self.degree + 1)) as f64
    }
}

/// Number of harmonics of degree at most `degree`.
pub fn harmonic_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Polar angle from +z and azimuth in `(−π, π]`.
pub fn polar_angles(p: &Point3<f64>) -> (f64, f64) {
    let r = p.coords.norm();
    let theta = (p.z / r).clamp(-1.0, 1.0).acos();
    (theta, p.y.atan2(p.x))
}

fn check_degree(degree: usize) -> Result<()> {
    if degree > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "degree {degree} exceeds the supported maximum {MAX_DEGREE}"
        )));
    }
    Ok(())
}

/// Fully normalized associated Legendre values `P̄_l^m(cos θ)` for
/// `0 ≤ m ≤ l ≤ degree`, stored at `l(l+1)/2 + m`, without the
/// Condon–Shortley phase. `P̄_0^0 = 1/√(4π)`.
fn normalized_legendre(degree: usize, theta: f64) -> Vec<f64> {
    let (x, s) = (theta.cos(), theta.sin());
    let at = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut p = vec![0.0; (degree + 1) * (degree + 2) / 2];
    p[0] = 1.0 / (4.0 * PI).sqrt();
    for m in 1..=degree {
        let mf = m as f64;
        p[at(m, m)] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * p[at(m - 1, m - 1)];
    }
    for m in 0..degree {
        p[at(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * x * p[at(m, m)];
    }
    for m in 0..=degree {
        let mf = m as f64;
        for l in (m + 2)..=degree {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let lm1 = lf - 1.0;
            let b = ((lm1 * lm1 - mf * mf) / (4.0 * lm1 * lm1 - 1.0)).sqrt();
            p[at(l, m)] = a * (x * p[at(l - 1, m)] - b * p[at(l - 2, m)]);
        }
    }
    p
}

/// All real orthonormal harmonics of degree ≤ `degree` at `(θ, φ)`, in
/// `l² + l + m` order. Negative orders use `sin(|m|φ)`.
pub fn spherical_harmonics_upto(degree: usize, theta: f64, phi: f64) -> Result<Vec<f64>> {
    check_degree(degree)?;
    let p = normalized_legendre(degree, theta);
    let mut out = vec![0.0; harmonic_count(degree)];
    let root2 = 2f64.sqrt();
    for l in 0..=degree {
        let base = l * l + l;
        out[base] = p[l * (l + 1) / 2];
        for m in 1..=l {
            let plm = root2 * p[l * (l + 1) / 2 + m];
            let (sin, cos) = (m as f64 * phi).sin_cos();
            out[base + m] = plm * cos;
            out[base - m] = plm * sin;
        }
    }
    Ok(out)
}

/// Real orthonormal spherical harmonic `Y_lm(θ, φ)`.
pub fn real_spherical_harmonic(degree: usize, order: i64, theta: f64, phi: f64) -> Result<f64> {
    HarmonicIndex::new(degree, order)?;
    check_degree(degree)?;
    let p = normalized_legendre(degree, theta);
    let m = order.unsigned_abs() as usize;
    let plm = p[degree * (degree + 1) / 2 + m];
    Ok(match order.cmp(&0) {
        std::cmp::Ordering::Equal => plm,
        std::cmp::Ordering::Greater => 2f64.sqrt() * plm * (m as f64 * phi).cos(),
        std::cmp::Ordering::Less => 2f64.sqrt() * plm * (m as f64 * phi).sin(),
    })
}

/// Samples `Y_lm` at every vertex.
pub fn harmonic_field(mesh: &TriangleMesh, degree: usize, order: i64) -> Result<ScalarField> {
    HarmonicIndex::new(degree, order)?;
    check_degree(degree)?;
    let values = mesh
        .vertices()
        .par_iter()
        .map(|p| {
            let (t, f) = polar_angles(p);
            real_spherical_harmonic(degree, order, t, f)
        })
        .collect::<Result<Vec<_>>>()?;
    ScalarField::new(mesh, values)
}

/// `n × (L+1)²` matrix of harmonics sampled at the vertices.
pub fn harmonic_design(mesh: &TriangleMesh, degree: usize) -> Result<Mat<f64>> {
    check_degree(degree)?;
    let rows = mesh
        .vertices()
        .par_iter()
        .map(|p| {
            let (t, f) = polar_angles(p);
            spherical_harmonics_upto(degree, t, f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Mat::from_fn(rows.len(), harmonic_count(degree), |i, j| {
        rows[i][j]
    }))
}

fn require_unit_sphere(mesh: &TriangleMesh) -> Result<()> {
    for (i, p) in mesh.vertices().iter().enumerate() {
        let r = p.coords.norm();
        if (r - 1.0).abs() > SPHERE_TOLERANCE {
            return Err(Error::Validation(format!(
                "vertex {i} has radius {r}, not on the unit sphere"
            )));
        }
    }
    Ok(())
}

/// 1 on the band `1/8 < θ < 1/4`, 0 elsewhere.
pub fn band_step_field(mesh: &TriangleMesh) -> Result<ScalarField> {
    require_unit_sphere(mesh)?;
    let values = mesh
        .vertices()
        .iter()
        .map(|p| {
            let theta = polar_angles(p).0;
            if theta > BAND.0 && theta < BAND.1 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    ScalarField::new(mesh, values)
}

/// Mean of the band indicator over the unit sphere.
pub fn band_mean() -> f64 {
    (BAND.0.cos() - BAND.1.cos()) / 2.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GibbsReport {
    pub degree: usize,
    pub sigma: f64,
    pub vertex_count: usize,
    pub lse_overshoot: f64,
    pub hk_overshoot: f64,
    /// `lse_overshoot / hk_overshoot`.
    pub overshoot_ratio: f64,
    pub lse_residual_ss: f64,
    pub hk_residual_ss: f64,
}

#[derive(Debug, Clone)]
pub struct GibbsOutcome {
    pub report: GibbsReport,
    pub step: ScalarField,
    pub lse_field: ScalarField,
    pub hk_field: ScalarField,
    pub coefficients: Vec<f64>,
}

/// Largest positive excess of `field` over the step on the zero region.
pub fn overshoot(step: &ScalarField, field: &ScalarField) -> f64 {
    step.values()
        .iter()
        .zip(field.values())
        .filter(|(s, _)| **s == 0.0)
        .map(|(_, f)| *f)
        .fold(0.0, f64::max)
}

fn residual_ss(step: &ScalarField, field: &ScalarField) -> f64 {
    step.values()
        .iter()
        .zip(field.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum()
}

/// Fits the band step by least squares in harmonics up to `degree` and
/// compares the plain expansion with the `e^{−l(l+1)σ}`-weighted one.
pub fn gibbs_experiment(mesh: &TriangleMesh, degree: usize, sigma: f64) -> Result<GibbsOutcome> {
    check_degree(degree)?;
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be nonnegative, got {sigma}"
        )));
    }
    let count = harmonic_count(degree);
    if count >= mesh.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "{count} harmonics need more than {} vertices; use a finer mesh",
            mesh.vertex_count()
        )));
    }
    let step = band_step_field(mesh)?;
    let design = harmonic_design(mesh, degree)?;
    let qr = design.qr();
    {
        let r = qr.thin_R();
        let diag: Vec<f64> = (0..count).map(|i| r[(i, i)].abs()).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 1e-10 * max) {
            return Err(Error::RankDeficient(format!(
                "harmonic design matrix is rank deficient (|R_ii| down to {min:e}); use a finer mesh"
            )));
        }
    }
    let y = Mat::from_fn(mesh.vertex_count(), 1, |i, _| step.values()[i]);
    let beta = qr.solve_lstsq(&y);
    let coefficients: Vec<f64> = (0..count).map(|j| beta[(j, 0)]).collect();
    let damped = Mat::from_fn(count, 1, |j, _| {
        (-HarmonicIndex::from_linear(j).eigenvalue() * sigma).exp() * coefficients[j]
    });
    let lse = &design * &beta;
    let hk = &design * &damped;
    let lse_field = step.with_values(lse.col(0).iter().copied().collect())?;
    let hk_field = step.with_values(hk.col(0).iter().copied().collect())?;
    let (lse_overshoot, hk_overshoot) = (overshoot(&step, &lse_field), overshoot(&step, &hk_field));
    let report = GibbsReport {
        degree,
        sigma,
        vertex_count: mesh.vertex_count(),
        lse_overshoot,
        hk_overshoot,
        overshoot_ratio: lse_overshoot / hk_overshoot,
        lse_residual_ss: residual_ss(&step, &lse_field),
        hk_residual_ss: residual_ss(&step, &hk_field),
    };
    Ok(GibbsOutcome {
        report,
        step,
        lse_field,
        hk_field,
        coefficients,
    })
}

/// Writes `gibbs_report.json`, `gibbs_profile.csv` (vertex, theta, phi,
/// step, lse, hk) and `gibbs.gp` into `dir`; returns the written paths.
pub fn write_gibbs_outputs(
    dir: impl AsRef<Path>,
    mesh: &TriangleMesh,
    outcome: &GibbsOutcome,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let report = dir.join("gibbs_report.json");
    std::fs::write(
        &report,
        serde_json::to_string_pretty(&outcome.report)? + "\n",
    )?;

    let profile = dir.join("gibbs_profile.csv");
    let mut w = csv::Writer::from_path(&profile)?;
    w.write_record(["vertex", "theta", "phi", "step", "lse", "hk"])?;
    for (i, p) in mesh.vertices().iter().enumerate() {
        let (t, f) = polar_angles(p);
        w.write_record([
            i.to_string(),
            t.to_string(),
            f.to_string(),
            outcome.step.values()[i].to_string(),
            outcome.lse_field.values()[i].to_string(),
            outcome.hk_field.values()[i].to_string(),
        ])?;
    }
    w.flush()?;

    let script = dir.join("gibbs.gp");
    let mut f = std::fs::File::create(&script)?;
    writeln!(f, "set datafile separator ','")?;
    writeln!(f, "set terminal pngcairo size 1000,600")?;
    writeln!(f, "set output 'gibbs.png'")?;
    writeln!(f, "set xlabel 'polar angle (rad)'")?;
    writeln!(f, "set ylabel 'value'")?;
    writeln!(f, "set xrange [0:0.6]")?;
    writeln!(
        f,
        "set title 'degree {} expansion, sigma = {}'",
        outcome.report.degree, outcome.report.sigma
    )?;
    writeln!(
        f,
        "plot 'gibbs_profile.csv' every ::1 using 2:4 with points pt 7 ps 0.3 title 'step', \\\n     \
         '' every ::1 using 2:5 with points pt 7 ps 0.3 title 'least squares', \\\n     \
         '' every ::1 using 2:6 with points pt 7 ps 0.3 title 'heat kernel'"
    )?;
    Ok(vec![report, profile, script])
}

/// Eigenvalues of one harmonic degree.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DegreeCluster {
    pub degree: usize,
    pub multiplicity: usize,
    pub expected: f64,
    pub mean: f64,
    /// `|mean − l(l+1)| / l(l+1)`; absolute for degree 0.
    pub relative_error: f64,
    pub spread: f64,
}

/// Discrete spectrum and sampled harmonics of a unit-sphere mesh against
/// the analytic Laplacian.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpectrumReport {
    pub max_degree: usize,
    pub vertex_count: usize,
    pub clusters: Vec<DegreeCluster>,
    /// Every cluster lies strictly below the next one.
    pub clusters_separated: bool,
    pub max_cluster_error: f64,
    /// Largest entry of `|YᵀAY − I|` over the sampled harmonics.
    pub harmonic_orthonormality_defect: f64,
    /// Largest `|Yᵀ C Y / Yᵀ A Y − l(l+1)| / l(l+1)` for `l ≥ 1`.
    pub max_rayleigh_error: f64,
}

/// Groups the `(L+1)²` smallest eigenvalues by degree and checks the
/// sampled harmonics up to `L` for A-orthonormality and Rayleigh quotients.
pub fn validate_spectrum(
    mesh: &TriangleMesh,
    max_degree: usize,
    options: &EigenOptions,
) -> Result<SpectrumReport> {
    check_degree(max_degree)?;
    require_unit_sphere(mesh)?;
    let count = harmonic_count(max_degree);
    if count >= mesh.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "{count} eigenpairs need more than {} vertices",
            mesh.vertex_count()
        )));
    }
    let basis = EigenBasis::compute(mesh, count - 1, options)?;
    let values = basis.eigenvalues();
    let clusters: Vec<DegreeCluster> = (0..=max_degree)
        .map(|l| {
            let block = &values[l * l..(l + 1) * (l + 1)];
            let mean = block.iter().sum::<f64>() / block.len() as f64;
            let lo = block.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let expected = (l * (l + 1)) as f64;
            DegreeCluster {
                degree: l,
                multiplicity: block.len(),
                expected,
                mean,
                relative_error: (mean - expected).abs() / expected.max(1.0),
                spread: hi - lo,
            }
        })
        .collect();
    let clusters_separated = (0..max_degree).all(|l| {
        let hi = values[l * l..(l + 1) * (l + 1)]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let lo = values[(l + 1) * (l + 1)..(l + 2) * (l + 2)]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        hi < lo
    });
    let max_cluster_error = clusters
        .iter()
        .map(|c| c.relative_error)
        .fold(0.0, f64::max);

    let a = assemble_mass(mesh)?;
    let c = assemble_cotan(mesh)?;
    let design = harmonic_design(mesh, max_degree)?;
    let columns: Vec<Vec<f64>> = (0..count)
        .map(|j| design.col(j).iter().copied().collect())
        .collect();
    let a_columns: Vec<Vec<f64>> = columns.iter().map(|y| a.mul_vec(y)).collect();
    let mut defect = 0.0f64;
    let mut rayleigh = 0.0f64;
    for i in 0..count {
        for j in i..count {
            let g: f64 = columns[i]
                .iter()
                .zip(&a_columns[j])
                .map(|(x, y)| x * y)
                .sum();
            defect = defect.max((g - if i == j { 1.0 } else { 0.0 }).abs());
        }
        let l = HarmonicIndex::from_linear(i).degree;
        if l > 0 {
            let expected = (l * (l + 1)) as f64;
            let q = c.bilinear(&columns[i], &columns[i]) / a.bilinear(&columns[i], &columns[i]);
            rayleigh = rayleigh.max((q - expected).abs() / expected);
        }
    }
    Ok(SpectrumReport {
        max_degree,
        vertex_count: mesh.vertex_count(),
        clusters,
        clusters_separated,
        max_cluster_error,
        harmonic_orthonormality_defect: defect,
        max_rayleigh_error: rayleigh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_icosphere;

    #[test]
    fn constant_harmonic() {
        for (t, f) in [(0.0, 0.0), (1.0, 2.0), (PI, -1.0)] {
            let y = real_spherical_harmonic(0, 0, t, f).unwrap();
            assert!((y - 0.282_094_791_773_878_1).abs() < 1e-15);
        }
    }

    #[test]
    fn low_degree_closed_forms() {
        let (t, f) = (0.7f64, 1.3f64);
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        let (x, y, z) = (t.sin() * f.cos(), t.sin() * f.sin(), t.cos());
        assert!((real_spherical_harmonic(1, 0, t, f).unwrap() - c1 * z).abs() < 1e-14);
        assert!((real_spherical_harmonic(1, 1, t, f).unwrap() - c1 * x).abs() < 1e-14);
        assert!((real_spherical_harmonic(1, -1, t, f).unwrap() - c1 * y).abs() < 1e-14);
        let c20 = (5.0 / (16.0 * PI)).sqrt();
        assert!(
            (real_spherical_harmonic(2, 0, t, f).unwrap() - c20 * (3.0 * z * z - 1.0)).abs()
                < 1e-14
        );
        let c22 = (15.0 / (16.0 * PI)).sqrt();
        assert!(
            (real_spherical_harmonic(2, 2, t, f).unwrap() - c22 * (x * x - y * y)).abs() < 1e-14
        );
        let c21 = (15.0 / (4.0 * PI)).sqrt();
        assert!((real_spherical_harmonic(2, -1, t, f).unwrap() - c21 * y * z).abs() < 1e-14);
    }

    #[test]
    fn addition_theorem() {
        // Σ_m Y_lm² = (2l+1)/(4π) at every point.
        let all = spherical_harmonics_upto(60, 0.913, -2.1).unwrap();
        for l in [0usize, 1, 7, 30, 60] {
            let s: f64 = (0..=2 * l).map(|k| all[l * l + k].powi(2)).sum();
            let expect = (2 * l + 1) as f64 / (4.0 * PI);
            assert!(
                (s - expect).abs() < 1e-11 * expect,
                "l = {l}: {s} vs {expect}"
            );
        }
    }

    #[test]
    fn batch_matches_single() {
        let all = spherical_harmonics_upto(12, 2.2, 0.4).unwrap();
        for j in [0, 5, 40, 99, 168] {
            let h = HarmonicIndex::from_linear(j);
            let single = real_spherical_harmonic(h.degree, h.order, 2.2, 0.4).unwrap();
            assert_eq!(h.linear(), j);
            assert!((all[j] - single).abs() < 1e-15);
        }
    }

    #[test]
    fn guards() {
        assert!(real_spherical_harmonic(101, 0, 0.1, 0.1).is_err());
        assert!(real_spherical_harmonic(2, 3, 0.1, 0.1).is_err());
        assert!(real_spherical_harmonic(100, -100, 1.0, 0.1)
            .unwrap()
            .is_finite());
    }

    #[test]
    fn band_membership() {
        let pts = [0.2f64, 0.0, 0.5, 0.13, 0.24, 0.1]
            .iter()
            .map(|t| Point3::new(t.sin(), 0.0, t.cos()))
            .collect::<Vec<_>>();
        let mut v = pts.clone();
        v.extend([Point3::new(0.0, 1.0, 0.0), Point3::new(0.0, 0.0, -1.0)]);
        let m = TriangleMesh::new(
            v,
            vec![
                [0, 6, 7],
                [1, 6, 7],
                [2, 6, 7],
                [3, 6, 7],
                [4, 6, 7],
                [5, 6, 7],
            ],
        )
        .unwrap();
        let s = band_step_field(&m).unwrap();
        assert_eq!(&s.values()[..6], &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn off_sphere_is_rejected() {
        let m = make_icosphere(1)
            .unwrap()
            .map_vertices(|p| Point3::from(p.coords * 1.01))
            .unwrap();
        assert!(matches!(band_step_field(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn zero_bandwidth_matches_lse() {
        let m = make_icosphere(3).unwrap();
        let g = gibbs_experiment(&m, 6, 0.0).unwrap();
        assert!(g.lse_field.rmse(&g.hk_field).unwrap() < 1e-12);
        assert!(g.report.lse_residual_ss <= g.report.hk_residual_ss + 1e-12);
        assert!(gibbs_experiment(&m, 30, 0.0).is_err());
    }

    #[test]
    fn coarse_sphere_spectrum() {
        let mesh = make_icosphere(3).unwrap();
        let r = validate_spectrum(&mesh, 3, &EigenOptions::default()).unwrap();
        assert!(r.clusters_separated, "{r:?}");
        assert_eq!(
            r.clusters
                .iter()
                .map(|c| c.multiplicity)
                .collect::<Vec<_>>(),
            vec![1, 3, 5, 7]
        );
        assert!(r.clusters[0].mean.abs() < 1e-8);
        assert!(r.max_cluster_error < 0.03, "{r:?}");
        assert!(r.max_rayleigh_error < 0.03, "{r:?}");
        assert!(r.harmonic_orthonormality_defect < 0.05, "{r:?}");
        let off = mesh.map_vertices(|p| p * 2.0).unwrap();
        assert!(matches!(
            validate_spectrum(&off, 2, &EigenOptions::default()),
            Err(Error::Validation(_))
        ));
    }
}
