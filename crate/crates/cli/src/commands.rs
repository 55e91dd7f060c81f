use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rotgpe_core::diagnostics::{export_vtk, load_field_csv, save_field_csv};
use rotgpe_core::groundstate::dngf;
use rotgpe_core::model::validate_assumptions;
use rotgpe_core::regularizer::{estimate_m, verify_properties, Property, DEFAULT_SAFETY};
use rotgpe_core::verification::{
    run_projection_eoc, run_space_eoc, run_time_eoc, table1_csv, table1_experiment, BenchmarkCase, ProjectionCase,
    TimeReference, EIGENMODE_COARSE,
};
use rotgpe_core::{
    gpe_rotating, harmonic_potential, run, AssumptionCheck, Complex64, ComplexField, CsvSink, DiagnosticsRecord,
    DiagnosticsSink, FeSpace, GradientFlowConfig, Mesh, NewtonOptions, Rect, Scheme, SeedProfile, StepperConfig,
    Systems,
};

use crate::config::{InitialCondition, RawConfig, RunConfig};
use crate::{CaseName, Cli, CliError, Command, Kind, SchemeName};

/// Accumulates the manifest while a subcommand runs.
struct Manifest {
    dir: PathBuf,
    subcommand: &'static str,
    start: Instant,
    lines: Vec<(String, String)>,
    notes: Vec<String>,
}

impl Manifest {
    fn new(dir: &Path, subcommand: &'static str) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            subcommand,
            start: Instant::now(),
            lines: Vec::new(),
            notes: Vec::new(),
        })
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn write(&self, status: &str) -> Result<(), CliError> {
        let mut s = String::new();
        let _ = writeln!(s, "# rotgpe {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# subcommand: {}", self.subcommand);
        let _ = writeln!(s, "# elapsed_s: {:.3}", self.start.elapsed().as_secs_f64());
        let _ = writeln!(s, "# status: {status}");
        for n in &self.notes {
            let _ = writeln!(s, "# {n}");
        }
        for (k, v) in &self.lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        fs::write(self.dir.join("manifest.txt"), s)?;
        Ok(())
    }
}

fn load_config(cli: &Cli, extra_required: &[&str]) -> Result<RunConfig, CliError> {
    let mut raw = match &cli.config {
        Some(p) => RawConfig::read(p)?,
        None => RawConfig::default(),
    };
    for o in &cli.overrides {
        raw.set(o)?;
    }
    if let Some(out) = &cli.out {
        raw.set(&format!("out={}", out.display()))?;
    }
    Ok(RunConfig::from_raw(&raw, extra_required)?)
}

fn out_dir_without_config(cli: &Cli) -> Result<PathBuf, CliError> {
    if cli.config.is_some() || !cli.overrides.is_empty() {
        return Ok(load_config(cli, &[])?.out);
    }
    Ok(cli.out.clone().unwrap_or_else(|| PathBuf::from("out")))
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run => with_config(cli, "run", &["tau", "T"], cmd_run),
        Command::Groundstate => with_config(cli, "groundstate", &[], cmd_groundstate),
        Command::Table1(args) => with_config(cli, "table1", &[], |cfg, m| {
            cmd_table1(cfg, &args.taus, args.steps, m)
        }),
        Command::VerifyAssumptions(args) => with_config(cli, "verify-assumptions", &[], |cfg, m| {
            cmd_verify_assumptions(cfg, args.zeta1, m)
        }),
        Command::Convergence(args) => {
            let mut m = Manifest::new(&out_dir_without_config(cli)?, "convergence")?;
            finish(cmd_convergence(args, &mut m), &m)
        }
        Command::VerifyFm(args) => {
            let seed = match (&args.seed, cli.config.is_some()) {
                (Some(s), _) => *s,
                (None, true) => load_config(cli, &[])?.seed,
                (None, false) => rotgpe_core::regularizer::DEFAULT_SEED,
            };
            let mut m = Manifest::new(&out_dir_without_config(cli)?, "verify-fm")?;
            finish(cmd_verify_fm(args.m, args.samples, seed, &mut m), &m)
        }
    }
}

fn with_config(
    cli: &Cli,
    name: &'static str,
    extra_required: &[&str],
    body: impl FnOnce(&RunConfig, &mut Manifest) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let cfg = load_config(cli, extra_required)?;
    let mut m = Manifest::new(&cfg.out, name)?;
    m.lines = cfg.resolved.clone();
    finish(body(&cfg, &mut m), &m)
}

fn finish(result: Result<(), CliError>, m: &Manifest) -> Result<(), CliError> {
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("failed (exit {}): {e}", e.exit_code()),
    };
    m.write(&status)?;
    result
}

fn build_space(cfg: &RunConfig) -> Result<FeSpace, CliError> {
    let rect = Rect::new(cfg.x_min, cfg.x_max, cfg.y_min, cfg.y_max)?;
    let mesh = Mesh::rectangle(rect, cfg.nx, cfg.ny)?;
    Ok(FeSpace::new(Arc::new(mesh), cfg.quadrature)?)
}

fn build_systems(space: FeSpace, cfg: &RunConfig, omega: f64, beta: f64, gx: f64, gy: f64) -> Result<Systems, CliError> {
    let mut coeffs = gpe_rotating(omega, harmonic_potential(gx, gy), beta)?;
    if cfg.kappa_re != 0.0 || cfg.kappa_im != 0.0 {
        let k = Complex64::new(cfg.kappa_re, cfg.kappa_im);
        coeffs = coeffs.with_kappa(move |_| k);
    }
    Ok(Systems::new(space, coeffs))
}

fn run_systems(cfg: &RunConfig, space: FeSpace) -> Result<Systems, CliError> {
    build_systems(space, cfg, cfg.omega, cfg.beta, cfg.gamma_x, cfg.gamma_y)
}

fn flow_config(cfg: &RunConfig) -> GradientFlowConfig {
    GradientFlowConfig {
        tau_flow: cfg.tau_flow,
        tol: cfg.flow_tol,
        max_steps: cfg.flow_max_steps,
        seed: cfg.seed_profile(),
        energy_tol: cfg.flow_energy_tol,
    }
}

fn ground_state(cfg: &RunConfig, space: &FeSpace, m: &mut Manifest) -> Result<ComplexField, CliError> {
    let sys = build_systems(space.clone(), cfg, cfg.gs_omega, cfg.gs_beta, cfg.gs_gamma_x, cfg.gs_gamma_y)?;
    let gs = dngf(&sys, &flow_config(cfg))?;
    log::info!("ground state: energy {:.8}, mu {:.8}, {} flow steps", gs.energy, gs.chemical_potential, gs.steps);
    m.note(format!("ground_state_energy: {:.10}", gs.energy));
    m.note(format!("ground_state_mu: {:.10}", gs.chemical_potential));
    m.note(format!("ground_state_steps: {}", gs.steps));
    Ok(gs.field)
}

fn normalized_seed(space: &FeSpace, profile: SeedProfile) -> Result<ComplexField, CliError> {
    let u = space.interpolate(|p| profile.evaluate(p));
    let norm = space.assemble_mass().quadratic_form(&u.values).re.sqrt();
    if !(norm > 0.0) {
        return Err(CliError::Usage("initial profile vanishes on the mesh".into()));
    }
    Ok(u.scaled(Complex64::new(1.0 / norm, 0.0)))
}

fn initial_field(cfg: &RunConfig, space: &FeSpace, m: &mut Manifest) -> Result<ComplexField, CliError> {
    match &cfg.initial {
        InitialCondition::GroundState => ground_state(cfg, space, m),
        InitialCondition::Gaussian => normalized_seed(space, SeedProfile::Gaussian),
        InitialCondition::Vortex => normalized_seed(space, SeedProfile::Vortex { charge: 1 }),
        InitialCondition::File(path) => Ok(load_field_csv(space, path)?),
    }
}

fn resolve_scheme(cfg: &RunConfig, space: &FeSpace, u0: &ComplexField, m: &mut Manifest) -> Result<Scheme, CliError> {
    Ok(match cfg.scheme {
        Scheme::IrkRegularized { m: 0.0 } => {
            let est = estimate_m(space, std::slice::from_ref(u0), DEFAULT_SAFETY)?;
            log::info!("cutoff M estimated from the initial field: {est:.6}");
            m.note(format!("estimated_M: {est:.10}"));
            Scheme::IrkRegularized { m: est }
        }
        s => s,
    })
}

fn newton_options(cfg: &RunConfig) -> NewtonOptions {
    NewtonOptions {
        tol: cfg.newton_tol,
        max_iter: cfg.newton_max_iter,
        ..NewtonOptions::default()
    }
}

/// Diagnostics CSV plus one VTK snapshot per recorded step.
struct RunSink<'a> {
    csv: CsvSink<BufWriter<File>>,
    dir: &'a Path,
    space: &'a FeSpace,
}

impl DiagnosticsSink for RunSink<'_> {
    fn record(&mut self, record: &DiagnosticsRecord, field: &ComplexField) -> rotgpe_core::Result<()> {
        self.csv.record(record, field)?;
        export_vtk(field, self.space, self.dir.join(format!("snapshot_{}.vtk", record.step)))
    }
}

fn cmd_run(cfg: &RunConfig, m: &mut Manifest) -> Result<(), CliError> {
    let space = build_space(cfg)?;
    let u0 = initial_field(cfg, &space, m)?;
    let systems = run_systems(cfg, space.clone())?;
    let scheme = resolve_scheme(cfg, &space, &u0, m)?;
    let mut sc = StepperConfig::new(scheme, cfg.tau.expect("required"), cfg.t_final.expect("required"))?;
    sc.newton = newton_options(cfg);
    sc.record_every = cfg.record_every;
    sc.predictor = cfg.predictor;
    sc.solver = cfg.solver;

    let mut sink = RunSink {
        csv: CsvSink::new(BufWriter::new(File::create(cfg.out.join("diagnostics.csv"))?)),
        dir: &cfg.out,
        space: &space,
    };
    let traj = run(&u0, &sc, &systems, &mut sink);
    save_field_csv(&traj.last, &space, cfg.out.join("final_field.csv"))?;
    let first = traj.records.first().copied();
    let last = traj.records.last().copied();
    if let (Some(a), Some(b)) = (first, last) {
        let mass_drift = (b.mass - a.mass).abs() / a.mass;
        let energy_drift = (b.energy - a.energy).abs() / a.energy.abs();
        println!(
            "{} steps, t = {:.6}: mass {:.12} (rel. drift {mass_drift:.3e}), energy {:.10} (rel. drift {energy_drift:.3e})",
            traj.steps_done, b.t, b.mass, b.energy
        );
        m.note(format!("steps_done: {}", traj.steps_done));
        m.note(format!("relative_mass_drift: {mass_drift:.6e}"));
        m.note(format!("relative_energy_drift: {energy_drift:.6e}"));
    }
    match traj.failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn cmd_groundstate(cfg: &RunConfig, m: &mut Manifest) -> Result<(), CliError> {
    let space = build_space(cfg)?;
    let u = ground_state(cfg, &space, m)?;
    export_vtk(&u, &space, cfg.out.join("groundstate.vtk"))?;
    save_field_csv(&u, &space, cfg.out.join("groundstate.csv"))?;
    for n in m.notes.iter().filter(|n| n.starts_with("ground_state")) {
        println!("{n}");
    }
    Ok(())
}

fn cmd_table1(cfg: &RunConfig, taus: &[f64], steps: usize, m: &mut Manifest) -> Result<(), CliError> {
    if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0)) {
        return Err(CliError::Usage("--taus must list positive step sizes".into()));
    }
    if steps == 0 {
        return Err(CliError::Usage("--steps must be at least 1".into()));
    }
    let space = build_space(cfg)?;
    let u0 = initial_field(cfg, &space, m)?;
    let systems = run_systems(cfg, space)?;
    m.note(format!("taus: {taus:?}"));
    m.note(format!("steps: {steps}"));
    let rows = table1_experiment(&systems, &u0, taus, steps, newton_options(cfg))?;
    let csv = table1_csv(&rows);
    fs::write(cfg.out.join("table1.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_convergence(args: &crate::ConvergenceArgs, m: &mut Manifest) -> Result<(), CliError> {
    if args.levels < 2 {
        return Err(CliError::Usage("--levels must be at least 2".into()));
    }
    let scheme = match args.scheme {
        SchemeName::Irk => Scheme::Irk,
        SchemeName::Be => Scheme::BackwardEuler,
    };
    m.note(format!("{args:?}"));
    let table = match (args.case, args.kind) {
        (CaseName::RitzLaplace | CaseName::RitzRotating, Kind::Time) => {
            return Err(CliError::Usage("projection cases have no time refinement".into()))
        }
        (CaseName::RitzLaplace, Kind::Space) => {
            run_projection_eoc(&ProjectionCase::laplace(), args.n.unwrap_or(8), args.levels)?
        }
        (CaseName::RitzRotating, Kind::Space) => {
            run_projection_eoc(&ProjectionCase::rotating(args.omega), args.n.unwrap_or(8), args.levels)?
        }
        (case, Kind::Space) => {
            let mut case = benchmark(case);
            if let Some(t) = args.t_final {
                case.t_final = t;
            }
            run_space_eoc(&case, args.n.unwrap_or(EIGENMODE_COARSE), args.levels, args.tau, scheme)?
        }
        (case, Kind::Time) => {
            let reference = match case {
                CaseName::Eigenmode => TimeReference::DiscreteEigenmode,
                _ => TimeReference::SelfConvergence { factor: 8 },
            };
            let mut case = benchmark(case);
            case.t_final = args.t_final.unwrap_or(1.0);
            let taus: Vec<f64> = (0..args.levels).map(|k| args.tau0 / (1u64 << k) as f64).collect();
            run_time_eoc(&case, args.n.unwrap_or(64), &taus, scheme, reference)?
        }
    };
    fs::write(m.dir.join("eoc.csv"), table.to_csv())?;
    print!("{}", table.to_text());
    Ok(())
}

fn benchmark(case: CaseName) -> BenchmarkCase {
    match case {
        CaseName::Manufactured => BenchmarkCase::manufactured(),
        _ => BenchmarkCase::eigenmode(),
    }
}

fn cmd_verify_fm(cut: f64, samples: usize, seed: u64, m: &mut Manifest) -> Result<(), CliError> {
    m.note(format!("M: {cut}"));
    m.note(format!("samples: {samples}"));
    m.note(format!("seed: {seed}"));
    let rep = verify_properties(cut, samples, seed)?;
    println!("M = {cut}, {samples} samples, seed {seed} ({} on the disk |z| <= M)", rep.disk_samples);
    println!("max |f_M(z)| / (M^2 |z|)            = {:.6} (bound 2)", rep.max_growth_ratio);
    println!("max |f_M(z)-f_M(w)| / (M^2 |z-w|)   = {:.6} (bound 10)", rep.max_lipschitz_ratio);
    println!("max junction defect                 = {:.3e} (tol 1e-9)", rep.max_junction_defect);
    for p in [
        Property::IdentityOnDisk,
        Property::Positivity,
        Property::Growth,
        Property::Lipschitz,
        Property::JunctionSmoothness,
        Property::Monotonicity,
    ] {
        println!("{:<20} violations: {}", format!("{p:?}"), rep.count(p));
    }
    if rep.passed() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("{} property violations", rep.violations.len())))
    }
}

fn cmd_verify_assumptions(cfg: &RunConfig, zeta1: f64, m: &mut Manifest) -> Result<(), CliError> {
    let space = build_space(cfg)?;
    let systems = run_systems(cfg, space.clone())?;
    m.note(format!("zeta1: {zeta1}"));
    match validate_assumptions(systems.coeffs(), space.mesh(), space.rule(), zeta1)? {
        AssumptionCheck::Certified(c) => {
            println!(
                "certified at {} points: gamma_min {:.6}, gamma_max {:.6}, zeta0 {:.6e}, zeta1 {}",
                c.sample_points.len(),
                c.gamma_min,
                c.gamma_max,
                c.zeta0,
                c.zeta1
            );
            Ok(())
        }
        AssumptionCheck::Violated(r) => {
            println!(
                "{} violations at {} sampled points (zeta1 = {}), worst confinement value {:.6e}",
                r.violations.len(),
                r.n_points,
                r.zeta1,
                r.worst_confinement
            );
            for v in r.violations.iter().take(10) {
                println!("  ({:.4}, {:.4}): {:?}", v.point[0], v.point[1], v.kind);
            }
            Err(CliError::Verification(format!("{} assumption violations", r.violations.len())))
        }
    }
}
