//! Two-group F statistics and random field theory corrected inference on
//! 2-manifolds.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{MeshId, ScalarField, TriangleMesh};

/// Bisection tolerance on the threshold.
pub const THRESHOLD_TOLERANCE: f64 = 1e-4;
const SEARCH_LIMIT: f64 = 1e7;

/// Surface geometry entering the Euler characteristic expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldGeometry {
    pub surface_area: f64,
    pub euler_char: i64,
    /// Smoothing bandwidth `σ` of the field.
    pub sigma: f64,
}

impl FieldGeometry {
    pub fn new(surface_area: f64, euler_char: i64, sigma: f64) -> Result<Self> {
        if !(surface_area > 0.0 && surface_area.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "surface area must be positive, got {surface_area}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {sigma}"
            )));
        }
        Ok(FieldGeometry {
            surface_area,
            euler_char,
            sigma,
        })
    }

    pub fn from_mesh(mesh: &TriangleMesh, sigma: f64) -> Result<Self> {
        Self::new(mesh.total_area(), mesh.euler_characteristic(), sigma)
    }

    /// `μ₂ = area/2`.
    pub fn mu2(&self) -> f64 {
        self.surface_area / 2.0
    }
}

/// Degrees of freedom `(α, β)` of an F statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FDegrees {
    pub numerator: f64,
    pub denominator: f64,
}

impl FDegrees {
    pub fn new(numerator: f64, denominator: f64) -> Result<Self> {
        if !(numerator > 0.0
            && denominator > 0.0
            && numerator.is_finite()
            && denominator.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "degrees of freedom must be positive, got ({numerator}, {denominator})"
            )));
        }
        Ok(FDegrees {
            numerator,
            denominator,
        })
    }

    /// Threshold where the bracket of `ρ₂` changes sign, `β(α−1)/(α(β−1))`.
    pub fn density_zero(&self) -> f64 {
        let (a, b) = (self.numerator, self.denominator);
        b * (a - 1.0) / (a * (b - 1.0))
    }
}

/// Per-vertex F statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct StatField {
    values: Vec<f64>,
    df: FDegrees,
    mesh_id: MeshId,
    infinite_count: usize,
}

impl StatField {
    pub fn new(values: Vec<f64>, df: FDegrees, mesh_id: MeshId) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::Validation(format!(
                "F value at vertex {i} is {}",
                values[i]
            )));
        }
        let infinite_count = values.iter().filter(|v| v.is_infinite()).count();
        Ok(StatField {
            values,
            df,
            mesh_id,
            infinite_count,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn df(&self) -> FDegrees {
        self.df
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh_id
    }

    /// Vertices with zero pooled variance, stored as `+∞`.
    pub fn infinite_count(&self) -> usize {
        self.infinite_count
    }

    /// Largest finite value, or 0 when there is none.
    pub fn finite_max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max)
    }

    /// Writes a `value` column; infinite sentinels are written as `inf`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::mesh::field::write_value_csv(path, &self.values)
    }
}

/// Pooled-variance two-sample t at one vertex.
fn pooled_t(group1: &[&[f64]], group2: &[&[f64]], vertex: usize) -> f64 {
    let mean = |g: &[&[f64]]| g.iter().map(|f| f[vertex]).sum::<f64>() / g.len() as f64;
    let (m1, m2) = (mean(group1), mean(group2));
    let ss = |g: &[&[f64]], m: f64| g.iter().map(|f| (f[vertex] - m).powi(2)).sum::<f64>();
    let (n1, n2) = (group1.len() as f64, group2.len() as f64);
    let pooled = (ss(group1, m1) + ss(group2, m2)) / (n1 + n2 - 2.0);
    let se = (pooled * (1.0 / n1 + 1.0 / n2)).sqrt();
    if se > 0.0 {
        (m1 - m2) / se
    } else {
        f64::NAN
    }
}

fn check_groups(group1: &[ScalarField], group2: &[ScalarField]) -> Result<MeshId> {
    if group1.len() < 2 || group2.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "each group needs at least two subjects, got {} and {}",
            group1.len(),
            group2.len()
        )));
    }
    let id = group1[0].mesh_id();
    if group1
        .iter()
        .chain(group2)
        .any(|f| f.mesh_id() != id || f.len() != group1[0].len())
    {
        return Err(Error::MeshMismatch);
    }
    Ok(id)
}

/// Pooled-variance two-sample t per vertex (group 1 minus group 2). Zero
/// variance gives NaN.
pub fn group_t_stat(group1: &[ScalarField], group2: &[ScalarField]) -> Result<Vec<f64>> {
    check_groups(group1, group2)?;
    let g1: Vec<&[f64]> = group1.iter().map(|f| f.values()).collect();
    let g2: Vec<&[f64]> = group2.iter().map(|f| f.values()).collect();
    Ok((0..group1[0].len())
        .into_par_iter()
        .map(|v| pooled_t(&g1, &g2, v))
        .collect())
}

/// `F = t²` with `(1, n₁+n₂−2)` degrees of freedom; zero-variance vertices
/// become `+∞` and are counted.
pub fn group_f_stat(group1: &[ScalarField], group2: &[ScalarField]) -> Result<StatField> {
    let id = check_groups(group1, group2)?;
    let t = group_t_stat(group1, group2)?;
    let values: Vec<f64> = t
        .iter()
        .map(|t| if t.is_nan() { f64::INFINITY } else { t * t })
        .collect();
    let df = FDegrees::new(1.0, (group1.len() + group2.len() - 2) as f64)?;
    let field = StatField::new(values, df, id)?;
    if field.infinite_count > 0 {
        log::warn!(
            "{} vertices have zero pooled variance",
            field.infinite_count
        );
    }
    Ok(field)
}

/// Regularized incomplete beta `I_x(a, b)` by the Lentz continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * x.ln() + b * (1.0 - x).ln();
    // The fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise.
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_fraction(1.0 - x, b, a) / b
    }
}

fn beta_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// `P(F_{α,β} ≤ h)`.
pub fn f_cdf(h: f64, df: FDegrees) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    let (a, b) = (df.numerator, df.denominator);
    regularized_incomplete_beta(a * h / (a * h + b), a / 2.0, b / 2.0)
}

/// `P(F_{α,β} > h)`, evaluated directly in the tail.
pub fn f_survival(h: f64, df: FDegrees) -> f64 {
    if h <= 0.0 {
        return 1.0;
    }
    if h.is_infinite() {
        return 0.0;
    }
    let (a, b) = (df.numerator, df.denominator);
    regularized_incomplete_beta(b / (b + a * h), b / 2.0, a / 2.0)
}

/// EC densities `(ρ₀, ρ₂)` of an F-field with bandwidth `sigma`.
pub fn ec_density_f(h: f64, df: FDegrees, sigma: f64) -> (f64, f64) {
    let (a, b) = (df.numerator, df.denominator);
    let rho0 = f_survival(h, df);
    let ratio = a * h / b;
    let ln_gamma =
        libm::lgamma((a + b - 2.0) / 2.0) - libm::lgamma(a / 2.0) - libm::lgamma(b / 2.0);
    let bracket = (b - 1.0) * ratio - (a - 1.0);
    let rho2 = if bracket == 0.0 {
        0.0
    } else {
        let ln_mag = ln_gamma + (a - 2.0) / 2.0 * ratio.ln() - (a + b - 2.0) / 2.0 * ratio.ln_1p();
        ln_mag.exp() * bracket / (4.0 * PI * sigma * sigma)
    };
    (rho0, rho2)
}

/// `μ₂ρ₂(h) + χρ₀(h)` clamped to `[0, 1]`. Below the zero of `ρ₂` the
/// surface term is negative and the expansion does not apply, so it is
/// dropped there.
pub fn corrected_pvalue(h: f64, geometry: &FieldGeometry, df: FDegrees) -> f64 {
    let (rho0, rho2) = ec_density_f(h, df, geometry.sigma);
    let surface = if rho2 > 0.0 {
        geometry.mu2() * rho2
    } else {
        0.0
    };
    let p = surface + geometry.euler_char as f64 * rho0;
    if p.is_nan() {
        1.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

/// Smallest `h` with `corrected_pvalue(h) ≤ level`, to within
/// [`THRESHOLD_TOLERANCE`].
pub fn rft_threshold(level: f64, geometry: &FieldGeometry, df: FDegrees) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let p = |h: f64| corrected_pvalue(h, geometry, df);
    // Walk up geometrically to bracket the first crossing, then bisect.
    let mut lo = 0.0;
    let mut hi = df.density_zero().max(1e-3);
    while p(hi) > level {
        lo = hi;
        hi *= 1.1;
        if hi > SEARCH_LIMIT {
            return Err(Error::Numerical(format!(
                "level {level} is not reached below h = {SEARCH_LIMIT:e}"
            )));
        }
    }
    while hi - lo > THRESHOLD_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if p(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub alpha: f64,
    pub threshold: f64,
    pub n_exceeding_vertices: usize,
    pub fraction_exceeding: f64,
    pub p_at_max: f64,
    pub max_statistic: f64,
    pub infinite_vertices: usize,
    pub df: FDegrees,
    pub geometry: FieldGeometry,
}

/// Thresholds `stat` at level `alpha`; infinite sentinels are not counted
/// as exceeding.
pub fn infer(stat: &StatField, geometry: &FieldGeometry, alpha: f64) -> Result<InferenceReport> {
    let threshold = rft_threshold(alpha, geometry, stat.df())?;
    let n_exceeding_vertices = stat
        .values()
        .iter()
        .filter(|v| v.is_finite() && **v > threshold)
        .count();
    let max_statistic = stat.finite_max();
    Ok(InferenceReport {
        alpha,
        threshold,
        n_exceeding_vertices,
        fraction_exceeding: n_exceeding_vertices as f64 / stat.values().len().max(1) as f64,
        p_at_max: corrected_pvalue(max_statistic, geometry, stat.df()),
        max_statistic,
        infinite_vertices: stat.infinite_count(),
        df: stat.df(),
        geometry: *geometry,
    })
}
