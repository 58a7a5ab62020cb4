//! Synthetic two-group studies on the T-junction: half-normal noise, a unit
//! signal on three regions, and detection rates of each smoothing method.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{EigenBasis, EigenOptions};
use crate::error::{Error, Result};
use crate::fem::{assemble_cotan, assemble_mass};
use crate::mesh::{ScalarField, TJunction, TriangleMesh};
use crate::rft::{group_t_stat, rft_threshold, FDegrees, FieldGeometry};
use crate::smooth::{
    iterated_kernel_smooth, reconstruct, DiffusionOptions, DiffusionSmoother, LeastSquaresFitter,
};
use crate::sparse::SparseSymmetric;

pub const DEFAULT_THRESHOLD: f64 = 4.90;
/// Euclidean radii of the flat, convex and concave signal discs.
pub const REGION_RADII: [f64; 3] = [1.5, 2.5, 3.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Raw,
    HeatKernel,
    Iterated,
    Diffusion,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Raw,
        Method::HeatKernel,
        Method::Iterated,
        Method::Diffusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Raw => "raw",
            Method::HeatKernel => "heat_kernel",
            Method::Iterated => "iterated",
            Method::Diffusion => "diffusion",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// `γ`, the scale of the `|N(0, γ²)|` noise.
    pub noise_sd: f64,
    pub group_sizes: [usize; 2],
    /// Vertices receiving the unit signal in group 2.
    pub signal: Vec<usize>,
    pub sigma: f64,
    /// Passes of iterated kernel smoothing.
    pub iterations: usize,
    /// Eigenpairs beyond the constant one used by heat kernel smoothing.
    pub eigen_count: usize,
    /// Euler step of diffusion smoothing; defaults to `σ/100`.
    #[serde(default)]
    pub diffusion_step: Option<f64>,
    pub threshold: f64,
    /// Replace `threshold` by the square root of the 0.05 F threshold for
    /// the mesh geometry.
    #[serde(default)]
    pub rft_threshold: bool,
    pub seed: u64,
}

impl SimulationConfig {
    /// Low signal-to-noise study: `γ = 2`, `σ = 0.5`.
    pub fn study_one(signal: Vec<usize>, seed: u64) -> Self {
        SimulationConfig {
            noise_sd: 2.0,
            group_sizes: [30, 30],
            signal,
            sigma: 0.5,
            iterations: 100,
            eigen_count: 1000,
            diffusion_step: None,
            threshold: DEFAULT_THRESHOLD,
            rft_threshold: false,
            seed,
        }
    }

    /// High signal-to-noise study: `γ = 0.5`, `σ = 0.1`.
    pub fn study_two(signal: Vec<usize>, seed: u64) -> Self {
        SimulationConfig {
            noise_sd: 0.5,
            sigma: 0.1,
            ..Self::study_one(signal, seed)
        }
    }

    pub fn step(&self) -> f64 {
        self.diffusion_step.unwrap_or(self.sigma / 100.0)
    }

    pub fn validate(&self, vertex_count: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be positive, got {}", self.noise_sd));
        }
        if self.group_sizes.iter().any(|&n| n < 2) {
            return bad(format!(
                "each group needs at least two subjects, got {:?}",
                self.group_sizes
            ));
        }
        if self.signal.is_empty() || self.signal.len() >= vertex_count {
            return bad("signal must be a nonempty strict subset of the vertices".into());
        }
        let mut sorted = self.signal.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.signal.len() || sorted.last().is_some_and(|&v| v >= vertex_count) {
            return bad("signal vertices must be distinct valid indices".into());
        }
        if !(self.sigma > 0.0) || self.iterations == 0 || !(self.step() > 0.0) {
            return bad("sigma, iterations and diffusion_step must be positive".into());
        }
        if self.eigen_count == 0 {
            return bad("eigen_count must be positive".into());
        }
        Ok(())
    }

    pub fn signal_mask(&self, vertex_count: usize) -> Vec<bool> {
        let mut mask = vec![false; vertex_count];
        for &v in &self.signal {
            mask[v] = true;
        }
        mask
    }
}

/// Vertices within [`REGION_RADII`] of the flat, convex and concave zone
/// points of the T-junction.
pub fn default_regions(tj: &TJunction) -> Vec<usize> {
    let centers = [tj.flat_point, tj.convex_point, tj.concave_point];
    let mut out: Vec<usize> = tj
        .mesh
        .vertices()
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            centers
                .iter()
                .zip(REGION_RADII)
                .any(|(c, r)| (*p - c).norm() <= r + 1e-9)
        })
        .map(|(i, _)| i)
        .collect();
    out.sort_unstable();
    out
}

/// Group 1: `|N(0, γ²)|` per vertex; group 2: the same plus 1 on the
/// signal. Subject `s` draws from ChaCha stream `s` of the seed, so the
/// result does not depend on scheduling.
pub fn simulate_fields(
    mesh: &TriangleMesh,
    config: &SimulationConfig,
) -> Result<(Vec<ScalarField>, Vec<ScalarField>)> {
    config.validate(mesh.vertex_count())?;
    let normal =
        Normal::new(0.0, config.noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mask = config.signal_mask(mesh.vertex_count());
    let [n1, n2] = config.group_sizes;
    let subjects: Vec<ScalarField> = (0..n1 + n2)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(s as u64);
            let values = mask
                .iter()
                .map(|&signal| {
                    let noise = normal.sample(&mut rng).abs();
                    if s >= n1 && signal {
                        noise + 1.0
                    } else {
                        noise
                    }
                })
                .collect();
            ScalarField::new(mesh, values)
        })
        .collect::<Result<_>>()?;
    let mut first = subjects;
    let second = first.split_off(n1);
    Ok((first, second))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub threshold: f64,
    pub true_positive_rate: f64,
    pub false_positive_rate: f64,
    pub exceeding_vertices: usize,
    /// Two-sample t (group 2 minus group 1) per vertex; `null` where the
    /// pooled variance vanishes.
    pub t_stat: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub config: SimulationConfig,
    pub vertex_count: usize,
    pub threshold: f64,
    pub methods: Vec<MethodOutcome>,
}

impl DetectionReport {
    pub fn outcome(&self, method: Method) -> Option<&MethodOutcome> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// `(TPR, FPR, count)` of `t > threshold` against the signal mask.
pub fn detection_rates(t: &[f64], mask: &[bool], threshold: f64) -> (f64, f64, usize) {
    let (mut tp, mut fp, mut pos) = (0usize, 0usize, 0usize);
    for (&t, &m) in t.iter().zip(mask) {
        let hit = t > threshold;
        pos += m as usize;
        tp += (hit && m) as usize;
        fp += (hit && !m) as usize;
    }
    let neg = mask.len() - pos;
    (
        tp as f64 / pos.max(1) as f64,
        fp as f64 / neg.max(1) as f64,
        tp + fp,
    )
}

/// Mesh-level data shared across studies: FEM matrices and, once needed,
/// the eigenbasis.
pub struct StudyContext<'m> {
    mesh: &'m TriangleMesh,
    a: SparseSymmetric,
    c: SparseSymmetric,
    basis: Option<EigenBasis>,
    fitter: Option<(usize, EigenBasis, LeastSquaresFitter)>,
}

impl<'m> StudyContext<'m> {
    pub fn new(mesh: &'m TriangleMesh) -> Result<Self> {
        Ok(StudyContext {
            mesh,
            a: assemble_mass(mesh)?,
            c: assemble_cotan(mesh)?,
            basis: None,
            fitter: None,
        })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        self.mesh
    }

    /// Eigenbasis with at least `k + 1` pairs, computed on first use and
    /// kept for later studies.
    pub fn basis(&mut self, k: usize) -> Result<&EigenBasis> {
        let stale = self.basis.as_ref().is_none_or(|b| b.len() < k + 1);
        if stale {
            let basis = EigenBasis::compute(self.mesh, k, &EigenOptions::default())?;
            self.basis = Some(basis);
        }
        Ok(self.basis.as_ref().expect("basis computed"))
    }

    fn smooth(
        &mut self,
        method: Method,
        config: &SimulationConfig,
        fields: &[ScalarField],
    ) -> Result<Vec<ScalarField>> {
        match method {
            Method::Raw => Ok(fields.to_vec()),
            Method::Iterated => fields
                .par_iter()
                .map(|f| iterated_kernel_smooth(self.mesh, f, config.sigma, config.iterations))
                .collect(),
            Method::Diffusion => {
                let d = DiffusionSmoother::new(
                    &self.a,
                    &self.c,
                    config.sigma,
                    config.step(),
                    &DiffusionOptions::default(),
                )?;
                fields.par_iter().map(|f| d.smooth(f)).collect()
            }
            Method::HeatKernel => {
                let k = config.eigen_count;
                if self.fitter.as_ref().is_none_or(|f| f.0 != k) {
                    let basis = self.basis(k)?.truncated(k + 1)?;
                    let fitter = LeastSquaresFitter::new(&basis)?;
                    self.fitter = Some((k, basis, fitter));
                }
                let (_, basis, fitter) = self.fitter.as_ref().expect("fitter cached");
                let columns: Vec<&[f64]> = fields.iter().map(|f| f.values()).collect();
                let mut betas = fitter.fit_columns(&columns);
                for beta in &mut betas {
                    for (b, l) in beta.iter_mut().zip(basis.eigenvalues()) {
                        *b *= (-l * config.sigma).exp();
                    }
                }
                let refs: Vec<&[f64]> = betas.iter().map(|b| b.as_slice()).collect();
                reconstruct(basis, &refs)
                    .into_iter()
                    .zip(fields)
                    .map(|(v, f)| f.with_values(v))
                    .collect()
            }
        }
    }

    /// Threshold used by `config`: the fixed value, or `√h` for the 0.05 F
    /// threshold `h` on this mesh with df `(1, n₁+n₂−2)`.
    pub fn threshold(&self, config: &SimulationConfig) -> Result<f64> {
        if !config.rft_threshold {
            return Ok(config.threshold);
        }
        let geometry = FieldGeometry::from_mesh(self.mesh, config.sigma)?;
        let df = FDegrees::new(
            1.0,
            (config.group_sizes[0] + config.group_sizes[1] - 2) as f64,
        )?;
        Ok(rft_threshold(0.05, &geometry, df)?.sqrt())
    }

    pub fn run_study(
        &mut self,
        config: &SimulationConfig,
        methods: &[Method],
    ) -> Result<DetectionReport> {
        let n = self.mesh.vertex_count();
        config.validate(n)?;
        let threshold = self.threshold(config)?;
        let mask = config.signal_mask(n);
        let mut outcomes = Vec::with_capacity(methods.len());
        if !methods.is_empty() {
            let (g1, g2) = simulate_fields(self.mesh, config)?;
            for &method in methods {
                let s1 = self.smooth(method, config, &g1)?;
                let s2 = self.smooth(method, config, &g2)?;
                let t = group_t_stat(&s2, &s1)?;
                let (tpr, fpr, count) = detection_rates(&t, &mask, threshold);
                outcomes.push(MethodOutcome {
                    method,
                    threshold,
                    true_positive_rate: tpr,
                    false_positive_rate: fpr,
                    exceeding_vertices: count,
                    t_stat: t.iter().map(|v| v.is_finite().then_some(*v)).collect(),
                });
            }
        }
        Ok(DetectionReport {
            config: config.clone(),
            vertex_count: n,
            threshold,
            methods: outcomes,
        })
    }
}

/// Convenience wrapper building a fresh [`StudyContext`].
pub fn run_study(
    mesh: &TriangleMesh,
    config: &SimulationConfig,
    methods: &[Method],
) -> Result<DetectionReport> {
    StudyContext::new(mesh)?.run_study(config, methods)
}

/// Writes `simulation_report.json`, `simulation_stats.csv` (vertex, x, y,
/// z, signal, one t column per method) and `simulation.gp` into `dir`.
pub fn write_study_outputs(
    dir: impl AsRef<Path>,
    mesh: &TriangleMesh,
    report: &DetectionReport,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let json = dir.join("simulation_report.json");
    std::fs::write(&json, serde_json::to_string_pretty(report)? + "\n")?;

    let stats = dir.join("simulation_stats.csv");
    let mask = report.config.signal_mask(mesh.vertex_count());
    let mut w = csv::Writer::from_path(&stats)?;
    let mut header = vec![
        "vertex".to_string(),
        "x".into(),
        "y".into(),
        "z".into(),
        "signal".into(),
    ];
    header.extend(report.methods.iter().map(|m| m.method.name().to_string()));
    w.write_record(&header)?;
    for (i, p) in mesh.vertices().iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            p.x.to_string(),
            p.y.to_string(),
            p.z.to_string(),
            (mask[i] as u8).to_string(),
        ];
        row.extend(
            report
                .methods
                .iter()
                .map(|m| m.t_stat[i].map_or("nan".to_string(), |t| t.to_string())),
        );
        w.write_record(&row)?;
    }
    w.flush()?;

    let script = dir.join("simulation.gp");
    let mut f = std::fs::File::create(&script)?;
    writeln!(f, "set datafile separator ','")?;
    writeln!(
        f,
        "set terminal pngcairo size 1400,{}",
        450 * report.methods.len().max(1).div_ceil(2)
    )?;
    writeln!(f, "set output 'simulation.png'")?;
    writeln!(f, "set view equal xyz")?;
    writeln!(f, "set palette rgbformulae 33,13,10")?;
    writeln!(f, "set cbrange [0:{}]", 2.0 * report.threshold)?;
    writeln!(f, "unset key")?;
    writeln!(
        f,
        "set multiplot layout {},2",
        report.methods.len().max(1).div_ceil(2)
    )?;
    for (k, m) in report.methods.iter().enumerate() {
        writeln!(
            f,
            "set title '{} (TPR {:.3}, FPR {:.4})'",
            m.method.name(),
            m.true_positive_rate,
            m.false_positive_rate
        )?;
        writeln!(
            f,
            "splot 'simulation_stats.csv' every ::1 using 2:3:4:{} with points pt 7 ps 0.4 palette",
            6 + k
        )?;
    }
    writeln!(f, "unset multiplot")?;
    Ok(vec![json, stats, script])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_t_junction;

    fn small() -> TJunction {
        make_t_junction(6.0, 2.0, 1.0).unwrap()
    }

    #[test]
    fn noiseless_limit() {
        let tj = small();
        let signal = vec![0, 5, 9];
        let mut cfg = SimulationConfig::study_one(signal.clone(), 3);
        cfg.noise_sd = 1e-9;
        let (g1, g2) = simulate_fields(&tj.mesh, &cfg).unwrap();
        for v in 0..tj.mesh.vertex_count() {
            let m1 = g1.iter().map(|f| f.values()[v]).sum::<f64>() / 30.0;
            let m2 = g2.iter().map(|f| f.values()[v]).sum::<f64>() / 30.0;
            let expect = if signal.contains(&v) { 1.0 } else { 0.0 };
            assert!((m2 - m1 - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn deterministic_and_half_normal() {
        let tj = small();
        let cfg = SimulationConfig::study_one(vec![1, 2], 11);
        let (a1, b1) = simulate_fields(&tj.mesh, &cfg).unwrap();
        let (a2, b2) = simulate_fields(&tj.mesh, &cfg).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        let all: Vec<f64> = a1.iter().flat_map(|f| f.values().to_vec()).collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let expect = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
        let sd = 2.0 * (1.0 - 2.0 / std::f64::consts::PI).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * sd / n.sqrt(),
            "{mean} vs {expect}"
        );
    }

    #[test]
    fn config_validation() {
        let tj = small();
        let n = tj.mesh.vertex_count();
        assert!(SimulationConfig::study_one(vec![], 1).validate(n).is_err());
        assert!(SimulationConfig::study_one((0..n).collect(), 1)
            .validate(n)
            .is_err());
        assert!(SimulationConfig::study_one(vec![n], 1).validate(n).is_err());
        assert!(SimulationConfig::study_one(vec![3, 3], 1)
            .validate(n)
            .is_err());
        let cfg = SimulationConfig::study_two(vec![1], 1);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(
            serde_json::from_str::<SimulationConfig>(&json).unwrap(),
            cfg
        );
    }

    #[test]
    fn empty_method_set() {
        let tj = small();
        let r = run_study(&tj.mesh, &SimulationConfig::study_two(vec![1, 2], 1), &[]).unwrap();
        assert!(r.methods.is_empty());
    }

    #[test]
    fn rates_match_embedded_stats() {
        let tj = small();
        let mut cfg = SimulationConfig::study_two(default_regions(&tj), 5);
        cfg.eigen_count = 40;
        let r = run_study(&tj.mesh, &cfg, &Method::ALL).unwrap();
        let mask = cfg.signal_mask(tj.mesh.vertex_count());
        for m in &r.methods {
            let t: Vec<f64> = m.t_stat.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
            let (tpr, fpr, _) = detection_rates(&t, &mask, r.threshold);
            assert_eq!((tpr, fpr), (m.true_positive_rate, m.false_positive_rate));
            assert!((0.0..=1.0).contains(&tpr) && (0.0..=1.0).contains(&fpr));
        }
    }
}
