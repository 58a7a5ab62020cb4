use std::io::Write;
use std::path::{Path, PathBuf};

use heatkernel::eigen::{verify_basis, EigenBasis, EigenMethod, EigenOptions};
use heatkernel::fem::{assemble_cotan, assemble_mass};
use heatkernel::mesh::io::{load_mesh, save_mesh, MeshFormat};
use heatkernel::mesh::{make_icosphere, make_t_junction, ScalarField, TriangleMesh};
use heatkernel::rft::{group_f_stat, infer, FieldGeometry};
use heatkernel::simulate::{
    default_regions, write_study_outputs, Method, SimulationConfig, StudyContext,
};
use heatkernel::smooth::{
    fit_coefficients, fit_coefficients_mass, heat_kernel_column, heat_kernel_eval,
    heat_kernel_smooth, iterated_kernel_smooth, DiffusionOptions, DiffusionSmoother,
};
use heatkernel::sphere::{gibbs_experiment, validate_spectrum, write_gibbs_outputs};
use heatkernel::volume::{
    marching_cubes, topo_correct, validate_closed, BinaryVolume, Connectivity, TopoOptions,
};
use heatkernel::{Error, Result};
use serde::Serialize;

use crate::manifest::{beside, Recorder};
use crate::{
    BasisArgs, Command, ConnectivityArg, DiffuseArgs, EigsArgs, ExtractArgs, FitArg, GibbsArgs,
    IterateArgs, KernelEvalArgs, RftArgs, SimulateArgs, SmoothArgs, SolverArg, SphereValidateArgs,
    StudyArg, TopofixArgs, ValidateMeshArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Eigs(a) => eigs(&a),
        Command::Smooth(a) => smooth(&a),
        Command::Diffuse(a) => diffuse(&a),
        Command::Iterate(a) => iterate(&a),
        Command::KernelEval(a) => kernel_eval(&a),
        Command::SphereValidate(a) => sphere_validate(&a),
        Command::Gibbs(a) => gibbs(&a),
        Command::Rft(a) => rft(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Topofix(a) => topofix(&a),
        Command::Extract(a) => extract(&a),
        Command::ValidateMesh(a) => validate_mesh(&a),
    }
}

fn mesh_format(path: &Path) -> Result<MeshFormat> {
    MeshFormat::from_path(path).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{}: expected a .off or .ply extension",
            path.display()
        ))
    })
}

fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    load_mesh(path, mesh_format(path)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => Ok(std::fs::create_dir_all(dir)?),
        _ => Ok(()),
    }
}

fn eigen_options(b: &BasisArgs) -> EigenOptions {
    EigenOptions {
        tolerance: b.tol,
        method: match b.solver {
            SolverArg::Auto => EigenMethod::Auto,
            SolverArg::Krylov => EigenMethod::Krylov,
            SolverArg::Dense => EigenMethod::Dense,
        },
        seed: b.seed,
        ..EigenOptions::default()
    }
}

fn basis_files(dir: &Path) -> [PathBuf; 2] {
    [dir.join("eigenvalues.csv"), dir.join("eigenvectors.csv")]
}

/// Input files the basis flags will read.
fn basis_inputs(b: &BasisArgs) -> Vec<PathBuf> {
    b.eigs
        .as_deref()
        .map(|d| basis_files(d).to_vec())
        .unwrap_or_default()
}

/// Loads a stored basis (keeping its first `k + 1` pairs) or computes one.
fn load_basis(mesh: &TriangleMesh, b: &BasisArgs) -> Result<EigenBasis> {
    match &b.eigs {
        Some(dir) => {
            let [values, vectors] = basis_files(dir);
            let basis = EigenBasis::read_csv(values, vectors)?.bind(mesh)?;
            if basis.len() < b.k + 1 {
                return Err(Error::Validation(format!(
                    "{} holds {} eigenpairs; {} requested",
                    dir.display(),
                    basis.len(),
                    b.k + 1
                )));
            }
            basis.truncated(b.k + 1)
        }
        None => EigenBasis::compute(mesh, b.k, &eigen_options(b)),
    }
}

fn eigs(args: &EigsArgs) -> Result<()> {
    let rec = Recorder::start("eigs", args, std::slice::from_ref(&args.mesh))?;
    let mesh = read_mesh(&args.mesh)?;
    let basis = EigenBasis::compute(&mesh, args.basis.k, &eigen_options(&args.basis))?;
    let report = verify_basis(&basis, &assemble_mass(&mesh)?, &assemble_cotan(&mesh)?)?;
    std::fs::create_dir_all(&args.out)?;
    let [values, vectors] = basis_files(&args.out);
    basis.write_eigenvalues_csv(&values)?;
    basis.write_eigenvectors_csv(&vectors)?;
    let check = args.out.join("basis_report.json");
    write_json(&check, &report)?;
    rec.finish(&[values, vectors, check], &args.out.join("manifest.json"))
}

fn smooth(args: &SmoothArgs) -> Result<()> {
    let mut inputs = vec![args.mesh.clone(), args.field.clone()];
    inputs.extend(basis_inputs(&args.basis));
    let rec = Recorder::start("smooth", args, &inputs)?;
    let mesh = read_mesh(&args.mesh)?;
    let field = ScalarField::read_csv(&args.field, &mesh)?;
    let basis = load_basis(&mesh, &args.basis)?;
    let coeffs = match args.fit {
        FitArg::Lse => fit_coefficients(&basis, &field)?,
        FitArg::Mass => fit_coefficients_mass(&basis, &assemble_mass(&mesh)?, &field)?,
    };
    let smoothed = heat_kernel_smooth(&basis, &coeffs, args.sigma)?;
    create_parent(&args.out)?;
    smoothed.write_csv(&args.out)?;
    let mut outputs = vec![args.out.clone()];
    if let Some(path) = &args.coefficients {
        create_parent(path)?;
        coeffs.write_csv(path)?;
        outputs.push(path.clone());
    }
    rec.finish(&outputs, &beside(&args.out))
}

fn diffuse(args: &DiffuseArgs) -> Result<()> {
    let rec = Recorder::start("diffuse", args, &[args.mesh.clone(), args.field.clone()])?;
    let mesh = read_mesh(&args.mesh)?;
    let field = ScalarField::read_csv(&args.field, &mesh)?;
    let options = DiffusionOptions {
        lump_mass: args.lump_mass,
        clamp_step: !args.no_clamp,
        ..DiffusionOptions::default()
    };
    let (a, c) = (assemble_mass(&mesh)?, assemble_cotan(&mesh)?);
    let step = args.step.unwrap_or(args.sigma / 100.0);
    let smoother = DiffusionSmoother::new(&a, &c, args.sigma, step, &options)?;
    log::info!("{} steps of {:e}", smoother.steps(), smoother.step_size());
    let smoothed = smoother.smooth(&field)?;
    create_parent(&args.out)?;
    smoothed.write_csv(&args.out)?;
    rec.finish(std::slice::from_ref(&args.out), &beside(&args.out))
}

fn iterate(args: &IterateArgs) -> Result<()> {
    let rec = Recorder::start("iterate", args, &[args.mesh.clone(), args.field.clone()])?;
    let mesh = read_mesh(&args.mesh)?;
    let field = ScalarField::read_csv(&args.field, &mesh)?;
    let smoothed = iterated_kernel_smooth(&mesh, &field, args.sigma, args.iterations)?;
    create_parent(&args.out)?;
    smoothed.write_csv(&args.out)?;
    rec.finish(std::slice::from_ref(&args.out), &beside(&args.out))
}

#[derive(Serialize)]
struct KernelValue {
    p: usize,
    q: usize,
    sigma: f64,
    eigenpairs: usize,
    value: f64,
}

fn kernel_eval(args: &KernelEvalArgs) -> Result<()> {
    let mut inputs = vec![args.mesh.clone()];
    inputs.extend(basis_inputs(&args.basis));
    let rec = Recorder::start("kernel-eval", args, &inputs)?;
    let mesh = read_mesh(&args.mesh)?;
    let basis = load_basis(&mesh, &args.basis)?;
    let value = KernelValue {
        p: args.p,
        q: args.q,
        sigma: args.sigma,
        eigenpairs: basis.len(),
        value: heat_kernel_eval(&basis, args.sigma, args.p, args.q)?,
    };
    create_parent(&args.out)?;
    write_json(&args.out, &value)?;
    let mut outputs = vec![args.out.clone()];
    if let Some(path) = &args.column {
        let column = ScalarField::new(&mesh, heat_kernel_column(&basis, args.sigma, args.q)?)?;
        create_parent(path)?;
        column.write_csv(path)?;
        outputs.push(path.clone());
    }
    rec.finish(&outputs, &beside(&args.out))
}

/// The given mesh or an icosphere.
fn sphere_mesh(mesh: &Option<PathBuf>, subdivisions: u32) -> Result<TriangleMesh> {
    match mesh {
        Some(path) => read_mesh(path),
        None => make_icosphere(subdivisions),
    }
}

fn sphere_validate(args: &SphereValidateArgs) -> Result<()> {
    let rec = Recorder::start(
        "sphere-validate",
        args,
        &args.mesh.iter().cloned().collect::<Vec<_>>(),
    )?;
    let mesh = sphere_mesh(&args.mesh, args.subdivisions)?;
    let options = EigenOptions {
        tolerance: args.tol,
        ..EigenOptions::default()
    };
    let report = validate_spectrum(&mesh, args.max_degree, &options)?;
    std::fs::create_dir_all(&args.out)?;
    let json = args.out.join("sphere_report.json");
    write_json(&json, &report)?;
    let csv = args.out.join("sphere_clusters.csv");
    let mut w = std::fs::File::create(&csv)?;
    writeln!(w, "degree,multiplicity,expected,mean,relative_error,spread")?;
    for c in &report.clusters {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            c.degree, c.multiplicity, c.expected, c.mean, c.relative_error, c.spread
        )?;
    }
    rec.finish(&[json, csv], &args.out.join("manifest.json"))
}

fn gibbs(args: &GibbsArgs) -> Result<()> {
    let rec = Recorder::start(
        "gibbs",
        args,
        &args.mesh.iter().cloned().collect::<Vec<_>>(),
    )?;
    let mesh = sphere_mesh(&args.mesh, args.subdivisions)?;
    let outcome = gibbs_experiment(&mesh, args.degree, args.sigma)?;
    let outputs = write_gibbs_outputs(&args.out, &mesh, &outcome)?;
    rec.finish(&outputs, &args.out.join("manifest.json"))
}

fn rft(args: &RftArgs) -> Result<()> {
    let mut inputs = vec![args.mesh.clone()];
    inputs.extend(args.group1.iter().cloned());
    inputs.extend(args.group2.iter().cloned());
    let rec = Recorder::start("rft", args, &inputs)?;
    let mesh = read_mesh(&args.mesh)?;
    let read = |paths: &[PathBuf]| -> Result<Vec<ScalarField>> {
        paths
            .iter()
            .map(|p| ScalarField::read_csv(p, &mesh))
            .collect()
    };
    let (g1, g2) = (read(&args.group1)?, read(&args.group2)?);
    let stat = group_f_stat(&g1, &g2)?;
    let geometry = FieldGeometry::from_mesh(&mesh, args.sigma)?;
    let report = infer(&stat, &geometry, args.alpha)?;
    std::fs::create_dir_all(&args.out)?;
    let stat_csv = args.out.join("f_stat.csv");
    stat.write_csv(&stat_csv)?;
    let json = args.out.join("inference.json");
    write_json(&json, &report)?;
    rec.finish(&[stat_csv, json], &args.out.join("manifest.json"))
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let rec = Recorder::start(
        "simulate",
        args,
        &args.config.iter().cloned().collect::<Vec<_>>(),
    )?;
    let tj = make_t_junction(args.arm_length, args.width, args.resolution)?;
    let config = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => {
            let signal = default_regions(&tj);
            let mut c = match args.study {
                StudyArg::One => SimulationConfig::study_one(signal, args.seed),
                StudyArg::Two => SimulationConfig::study_two(signal, args.seed),
            };
            c.noise_sd = args.noise_sd.unwrap_or(c.noise_sd);
            c.sigma = args.sigma.unwrap_or(c.sigma);
            c.iterations = args.iterations.unwrap_or(c.iterations);
            c.eigen_count = args.k.unwrap_or(c.eigen_count);
            c.diffusion_step = args.step.or(c.diffusion_step);
            c.threshold = args.threshold.unwrap_or(c.threshold);
            c.rft_threshold = args.rft_threshold;
            c
        }
    };
    let methods = args
        .methods
        .iter()
        .map(|m| Method::parse(m.trim()))
        .collect::<Result<Vec<_>>>()?;
    let report = StudyContext::new(&tj.mesh)?.run_study(&config, &methods)?;
    let mut outputs = write_study_outputs(&args.out, &tj.mesh, &report)?;
    let mesh_path = args.out.join("t_junction.off");
    save_mesh(&tj.mesh, &mesh_path, MeshFormat::Off)?;
    outputs.push(mesh_path);
    for m in &report.methods {
        println!(
            "{:<12} TPR {:.4}  FPR {:.4}",
            m.method.name(),
            m.true_positive_rate,
            m.false_positive_rate
        );
    }
    rec.finish(&outputs, &args.out.join("manifest.json"))
}

fn sidecar_path(vol: &Path, sidecar: &Option<PathBuf>) -> PathBuf {
    sidecar
        .clone()
        .unwrap_or_else(|| BinaryVolume::companion_paths(vol).1)
}

fn topofix(args: &TopofixArgs) -> Result<()> {
    let json = sidecar_path(&args.vol, &args.sidecar);
    let rec = Recorder::start("topofix", args, &[args.vol.clone(), json.clone()])?;
    let vol = BinaryVolume::load_pair(&args.vol, &json)?;
    let options = TopoOptions {
        radius: args.radius,
        connectivity: match args.connectivity {
            ConnectivityArg::Six => Connectivity::Six,
            ConnectivityArg::TwentySix => Connectivity::TwentySix,
        },
    };
    let fixed = topo_correct(&vol, &options)?;
    create_parent(&args.out)?;
    fixed.save(&args.out)?;
    let (raw, sidecar) = BinaryVolume::companion_paths(&args.out);
    rec.finish(&[raw.clone(), sidecar], &beside(&raw))
}

fn extract(args: &ExtractArgs) -> Result<()> {
    let json = sidecar_path(&args.vol, &args.sidecar);
    let rec = Recorder::start("extract", args, &[args.vol.clone(), json.clone()])?;
    let format = mesh_format(&args.out)?;
    let vol = BinaryVolume::load_pair(&args.vol, &json)?;
    let mesh = marching_cubes(&vol)?;
    create_parent(&args.out)?;
    save_mesh(&mesh, &args.out, format)?;
    rec.finish(std::slice::from_ref(&args.out), &beside(&args.out))
}

fn validate_mesh(args: &ValidateMeshArgs) -> Result<()> {
    let rec = Recorder::start("validate-mesh", args, std::slice::from_ref(&args.mesh))?;
    let mesh = read_mesh(&args.mesh)?;
    let report = validate_closed(&mesh);
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    match &args.out {
        Some(path) => {
            create_parent(path)?;
            std::fs::write(path, text + "\n")?;
            rec.finish(std::slice::from_ref(path), &beside(path))
        }
        None => Ok(()),
    }
}
