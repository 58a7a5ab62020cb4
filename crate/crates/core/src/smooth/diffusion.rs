use crate::error::{Error, Result};
use crate::mesh::ScalarField;
use crate::sparse::{Cholesky, SparseSymmetric};

/// Divergence is declared when the field norm grows by more than this
/// factor over a single step.
pub const DIVERGENCE_GROWTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionOptions {
    /// Replace `A` by its row-sum diagonal.
    pub lump_mass: bool,
    /// Clamp the step to `0.5/λ_max` of the operator `A⁻¹C`.
    pub clamp_step: bool,
    pub power_iterations: usize,
}

impl Default for DiffusionOptions {
    fn default() -> Self {
        DiffusionOptions {
            lump_mass: false,
            clamp_step: true,
            power_iterations: 60,
        }
    }
}

enum MassSolver {
    Full(Cholesky),
    Lumped(Vec<f64>),
}

impl MassSolver {
    fn solve_in_place(&self, x: &mut [f64]) {
        match self {
            MassSolver::Full(l) => l.solve_in_place(x),
            MassSolver::Lumped(d) => x.iter_mut().zip(d).for_each(|(v, d)| *v /= d),
        }
    }
}

/// Forward-Euler integrator of `∂f/∂σ = −A⁻¹Cf` with a prefactored mass
/// matrix, reusable across fields on the same mesh.
pub struct DiffusionSmoother<'m> {
    c: &'m SparseSymmetric,
    mass: MassSolver,
    steps: usize,
    step_size: f64,
    requested_step: f64,
    lambda_max: f64,
    clamped: bool,
}

impl<'m> DiffusionSmoother<'m> {
    pub fn new(
        a: &SparseSymmetric,
        c: &'m SparseSymmetric,
        sigma: f64,
        step: f64,
        options: &DiffusionOptions,
    ) -> Result<Self> {
        if a.dim() != c.dim() {
            return Err(Error::InvalidArgument("A and C differ in dimension".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "diffusion time must be positive, got {sigma}"
            )));
        }
        if !(step > 0.0 && step <= sigma) {
            return Err(Error::InvalidArgument(format!(
                "step must lie in (0, σ = {sigma}], got {step}"
            )));
        }
        let mass = if options.lump_mass {
            let d = a.row_sums();
            if let Some((pivot, &value)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::NotPositiveDefinite { pivot, value });
            }
            MassSolver::Lumped(d)
        } else {
            MassSolver::Full(Cholesky::factor(a)?)
        };
        let mut smoother = DiffusionSmoother {
            c,
            mass,
            steps: 0,
            step_size: 0.0,
            requested_step: step,
            lambda_max: f64::NAN,
            clamped: false,
        };
        let mut limit = step;
        if options.clamp_step {
            smoother.lambda_max = smoother.estimate_lambda_max(options.power_iterations);
            let stable = 0.5 / smoother.lambda_max;
            if stable < step {
                log::warn!(
                    "diffusion step {step} exceeds the stability estimate; using {stable:e}"
                );
                limit = stable;
                smoother.clamped = true;
            }
        }
        let ratio = sigma / limit;
        let steps = if limit < step {
            ratio.ceil()
        } else {
            ratio.round().max(1.0)
        };
        smoother.steps = steps as usize;
        smoother.step_size = sigma / steps;
        Ok(smoother)
    }

    fn apply_operator(&self, f: &[f64], out: &mut [f64]) {
        self.c.mul_vec_into(f, out);
        self.mass.solve_in_place(out);
    }

    /// Power iteration on `A⁻¹C`; its eigenvalues are real and nonnegative
    /// because it is similar to a symmetric PSD matrix.
    fn estimate_lambda_max(&self, iterations: usize) -> f64 {
        let n = self.c.dim();
        let mut x: Vec<f64> = (0..n)
            .map(|i| {
                let h = (i as u64)
                    .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                    .rotate_left(17);
                (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        let mut y = vec![0.0; n];
        let mut estimate = 0.0;
        for _ in 0..iterations.max(1) {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            x.iter_mut().for_each(|v| *v /= norm);
            self.apply_operator(&x, &mut y);
            estimate = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            std::mem::swap(&mut x, &mut y);
        }
        estimate
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn requested_step(&self) -> f64 {
        self.requested_step
    }

    /// Largest eigenvalue estimate of `A⁻¹C`, NaN when clamping is off.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn was_clamped(&self) -> bool {
        self.clamped
    }

    pub fn smooth_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        let n = self.c.dim();
        if values.len() != n {
            return Err(Error::MeshMismatch);
        }
        let mut f = values.to_vec();
        let mut g = vec![0.0; n];
        let mut norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        for step in 0..self.steps {
            self.apply_operator(&f, &mut g);
            f.iter_mut()
                .zip(&g)
                .for_each(|(f, g)| *f -= self.step_size * g);
            let next = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !next.is_finite() || (norm > 0.0 && next > DIVERGENCE_GROWTH * norm) {
                return Err(Error::Unstable {
                    step,
                    step_size: self.step_size,
                });
            }
            norm = next;
        }
        Ok(f)
    }

    pub fn smooth(&self, field: &ScalarField) -> Result<ScalarField> {
        field.with_values(self.smooth_values(field.values())?)
    }
}

/// Explicit diffusion of `field` for time `sigma` with step about `step`.
pub fn diffusion_smooth(
    a: &SparseSymmetric,
    c: &SparseSymmetric,
    field: &ScalarField,
    sigma: f64,
    step: f64,
    options: &DiffusionOptions,
) -> Result<ScalarField> {
    DiffusionSmoother::new(a, c, sigma, step, options)?.smooth(field)
}
