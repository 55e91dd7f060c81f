//! Time stepping: the mass-conserving implicit midpoint (IRK) scheme,
//! Backward Euler, and the IRK scheme with the truncated nonlinearity.
//!
//! One step solves
//! `M(uⁿ − uⁿ⁻¹) + iτ[(L + K)w + r(w) + F(t*)] = 0` with
//! `w = θuⁿ + (1 − θ)uⁿ⁻¹`, `θ = ½` for IRK and `θ = 1` for Backward Euler,
//! and `t* = tⁿ⁻¹ + θτ`. `F` is an optional source term (zero for the GPE).

use std::sync::Arc;

use num_complex::Complex64;

use crate::assembly::{ComplexField, Cubic, FeSpace, PointNonlinearity};
use crate::diagnostics::{self, DiagnosticsRecord, DiagnosticsSink};
use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::model::Coefficients;
use crate::newton::{newton_solve, NewtonOptions};
use crate::regularizer::RegularizedCubic;
use crate::sparse::{BlockSolver, BlockSparse, SolverKind, SparseComplexMatrix};

/// Source term `F(x, t)` entering as `i∂ₜu = Lu + (κ + β|u|²)u + F`.
pub type Forcing = Arc<dyn Fn(Point, f64) -> Complex64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Irk,
    BackwardEuler,
    IrkRegularized { m: f64 },
}

impl Scheme {
    /// Weight of the new time level in the evaluation point.
    pub fn theta(&self) -> f64 {
        match self {
            Scheme::BackwardEuler => 1.0,
            _ => 0.5,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Irk => "irk",
            Scheme::BackwardEuler => "be",
            Scheme::IrkRegularized { .. } => "irk_regularized",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub tau: f64,
    pub t_final: f64,
    pub newton: NewtonOptions,
    /// Diagnostics (and stored fields) every this many steps; the final step
    /// is always recorded.
    pub record_every: usize,
    /// Start Newton from the linear extrapolation of the last two levels
    /// instead of the previous level.
    pub predictor: bool,
    pub solver: SolverKind,
    /// Optional nonuniform step sizes; must sum to `t_final`.
    pub schedule: Option<Vec<f64>>,
}

impl StepperConfig {
    pub fn new(scheme: Scheme, tau: f64, t_final: f64) -> Result<Self> {
        let cfg = Self {
            scheme,
            tau,
            t_final,
            newton: NewtonOptions::default(),
            record_every: 1,
            predictor: false,
            solver: SolverKind::Direct,
            schedule: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::param("tau", format!("must be > 0, got {}", self.tau)));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::param("T", format!("must be >= 0, got {}", self.t_final)));
        }
        if !(self.newton.tol > 0.0) {
            return Err(Error::param("newton_tol", "must be > 0"));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every", "must be >= 1"));
        }
        if let Scheme::IrkRegularized { m } = self.scheme {
            RegularizedCubic::new(m)?;
        }
        Ok(())
    }

    /// Step sizes `τ₁, …, τ_N`.
    pub fn step_sizes(&self) -> Result<Vec<f64>> {
        self.validate()?;
        if let Some(s) = &self.schedule {
            if s.iter().any(|t| !(*t > 0.0)) {
                return Err(Error::param("schedule", "step sizes must be > 0"));
            }
            let total: f64 = s.iter().sum();
            if (total - self.t_final).abs() > 1e-12 * self.t_final.max(1.0) {
                return Err(Error::param("schedule", format!("steps sum to {total}, not T = {}", self.t_final)));
            }
            return Ok(s.clone());
        }
        let ratio = self.t_final / self.tau;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-12 * ratio.max(1.0) {
            return Err(Error::param("tau", format!("T / tau = {ratio} is not an integer")));
        }
        Ok(vec![self.tau; n as usize])
    }
}

/// Outcome of one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub field: ComplexField,
    pub t: f64,
    pub newton_iters: usize,
    pub final_residual: f64,
    pub residuals: Vec<f64>,
    pub mass: f64,
    pub energy: f64,
}

/// Assembled matrices of one problem on one space.
pub struct Systems {
    space: FeSpace,
    coeffs: Coefficients,
    mass: SparseComplexMatrix,
    l: SparseComplexMatrix,
    e: SparseComplexMatrix,
    kappa: SparseComplexMatrix,
    linear: SparseComplexMatrix,
    forcing: Option<Forcing>,
}

impl std::fmt::Debug for Systems {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Systems")
            .field("n_dofs", &self.space.n_dofs())
            .field("coeffs", &self.coeffs)
            .field("forced", &self.forcing.is_some())
            .finish_non_exhaustive()
    }
}

impl Systems {
    pub fn new(space: FeSpace, coeffs: Coefficients) -> Self {
        let mass = space.assemble_mass();
        let l = space.assemble_l(&coeffs);
        let e = space.assemble_e(&coeffs);
        let kappa = space.assemble_kappa(&coeffs);
        let one = Complex64::new(1.0, 0.0);
        let linear = l.combine(one, &kappa, one);
        Self {
            space,
            coeffs,
            mass,
            l,
            e,
            kappa,
            linear,
            forcing: None,
        }
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn space(&self) -> &FeSpace {
        &self.space
    }

    pub fn coeffs(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn mass_matrix(&self) -> &SparseComplexMatrix {
        &self.mass
    }

    pub fn l_matrix(&self) -> &SparseComplexMatrix {
        &self.l
    }

    pub fn e_matrix(&self) -> &SparseComplexMatrix {
        &self.e
    }

    pub fn kappa_matrix(&self) -> &SparseComplexMatrix {
        &self.kappa
    }

    /// `L + K`.
    pub fn linear_operator(&self) -> &SparseComplexMatrix {
        &self.linear
    }

    pub fn forcing(&self) -> Option<&Forcing> {
        self.forcing.as_ref()
    }

    pub fn mass_of(&self, u: &ComplexField) -> f64 {
        diagnostics::mass(u, &self.mass)
    }

    pub fn energy_of(&self, u: &ComplexField) -> f64 {
        diagnostics::energy(u, &self.e, &self.kappa, &self.space, self.coeffs.beta())
    }

    fn forcing_load(&self, t: f64) -> Option<Vec<Complex64>> {
        self.forcing.as_ref().map(|f| self.space.load(|p| f(p, t)))
    }
}

/// `2 / (‖Im κ‖_∞ + 10βM²)`, infinite when the denominator vanishes.
pub fn uniqueness_bound(m: f64, kappa_im_sup: f64, beta: f64) -> f64 {
    let denom = kappa_im_sup + 10.0 * beta * m * m;
    if denom == 0.0 {
        f64::INFINITY
    } else {
        2.0 / denom
    }
}

/// Stateful stepper: keeps the symbolic factorization and the linear part
/// of the Newton matrix across steps.
pub struct Stepper<'a> {
    systems: &'a Systems,
    config: StepperConfig,
    solver: BlockSolver,
    linear_block: Option<(f64, BlockSparse)>,
}

impl<'a> Stepper<'a> {
    pub fn new(systems: &'a Systems, config: StepperConfig) -> Result<Self> {
        config.validate()?;
        if let Scheme::IrkRegularized { m } = config.scheme {
            let bound = uniqueness_bound(m, systems.coeffs.kappa_im_sup(systems.space.mesh(), systems.space.rule()), systems.coeffs.beta());
            if config.tau >= bound {
                log::warn!("tau = {} exceeds the uniqueness bound {bound:.4e} of the regularized scheme", config.tau);
            }
        }
        Ok(Self {
            solver: BlockSolver::new(config.solver),
            systems,
            config,
            linear_block: None,
        })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.config
    }

    /// Real form of `M + iτθ(L + K)`, rebuilt only when `τ` changes.
    fn linear_block(&mut self, tau: f64) -> BlockSparse {
        match &self.linear_block {
            Some((t, b)) if *t == tau => b.clone(),
            _ => {
                let theta = self.config.scheme.theta();
                let a = self.systems.mass.combine(
                    Complex64::new(1.0, 0.0),
                    &self.systems.linear,
                    Complex64::new(0.0, tau * theta),
                );
                let b = a.to_block_real();
                self.linear_block = Some((tau, b.clone()));
                b
            }
        }
    }

    /// Advances `u_prev` at time `t_prev` by `tau`; `guess` overrides the
    /// Newton start (default `u_prev`).
    pub fn step(
        &mut self,
        u_prev: &ComplexField,
        t_prev: f64,
        tau: f64,
        guess: Option<&ComplexField>,
    ) -> Result<StepResult> {
        self.systems.space.check_len(u_prev)?;
        if !(tau > 0.0) {
            return Err(Error::param("tau", "must be > 0"));
        }
        match self.config.scheme {
            Scheme::IrkRegularized { m } => {
                let nl = RegularizedCubic::new(m)?;
                self.step_with(u_prev, t_prev, tau, guess, &nl)
            }
            _ => self.step_with(u_prev, t_prev, tau, guess, &Cubic),
        }
    }

    fn step_with(
        &mut self,
        u_prev: &ComplexField,
        t_prev: f64,
        tau: f64,
        guess: Option<&ComplexField>,
        nl: &impl PointNonlinearity,
    ) -> Result<StepResult> {
        let theta = self.config.scheme.theta();
        let sys = self.systems;
        let beta = sys.coeffs.beta();
        let forcing = sys.forcing_load(t_prev + theta * tau);
        let linear_block = self.linear_block(tau);
        let itau = Complex64::new(0.0, tau);

        let eval_point = |u: &ComplexField| -> ComplexField {
            if theta == 1.0 {
                u.clone()
            } else {
                ComplexField::new(u.values.iter().zip(&u_prev.values).map(|(a, b)| (a + b) * 0.5).collect())
            }
        };

        let residual = |x: &[f64]| -> Vec<f64> {
            let u = ComplexField::from_real_split(x);
            let w = eval_point(&u);
            let diff: Vec<Complex64> = u.values.iter().zip(&u_prev.values).map(|(a, b)| a - b).collect();
            let md = sys.mass.mul_vec(&diff);
            let lw = sys.linear.mul_vec(&w.values);
            let rw = sys.space.nonlinear_residual(&w, beta, nl);
            let mut out = Vec::with_capacity(x.len());
            for i in 0..md.len() {
                let mut inner = lw[i] + rw[i];
                if let Some(f) = &forcing {
                    inner += f[i];
                }
                let v = md[i] + itau * inner;
                out.push(v.re);
                out.push(v.im);
            }
            out
        };

        let jacobian = |x: &[f64]| -> BlockSparse {
            let mut jac = linear_block.clone();
            if beta == 0.0 {
                return jac;
            }
            let w = eval_point(&ComplexField::from_real_split(x));
            let jr = sys.space.nonlinear_jacobian(&w, beta, nl);
            let s = tau * theta;
            // multiplication by i: (a, b) ↦ (−b, a)
            for (j, b) in jac.blocks_mut().iter_mut().zip(jr.blocks()) {
                j[0] -= s * b[2];
                j[1] -= s * b[3];
                j[2] += s * b[0];
                j[3] += s * b[1];
            }
            jac
        };

        let start = guess.unwrap_or(u_prev).to_real_split();
        let out = newton_solve(residual, jacobian, start, &self.config.newton, &mut self.solver)?;
        let field = ComplexField::from_real_split(&out.solution).with_time(t_prev + tau);
        Ok(StepResult {
            mass: sys.mass_of(&field),
            energy: sys.energy_of(&field),
            t: t_prev + tau,
            newton_iters: out.iterations,
            final_residual: out.final_residual(),
            residuals: out.residuals,
            field,
        })
    }
}

fn single_step(u_prev: &ComplexField, tau: f64, systems: &Systems, config: &StepperConfig, scheme: Scheme) -> Result<StepResult> {
    let mut cfg = config.clone();
    cfg.scheme = scheme;
    cfg.tau = tau;
    let t_prev = u_prev.time.unwrap_or(0.0);
    Stepper::new(systems, cfg)?.step(u_prev, t_prev, tau, None)
}

/// One implicit-midpoint step.
pub fn irk_step(u_prev: &ComplexField, tau: f64, systems: &Systems, config: &StepperConfig) -> Result<StepResult> {
    single_step(u_prev, tau, systems, config, Scheme::Irk)
}

/// One Backward-Euler step.
pub fn be_step(u_prev: &ComplexField, tau: f64, systems: &Systems, config: &StepperConfig) -> Result<StepResult> {
    single_step(u_prev, tau, systems, config, Scheme::BackwardEuler)
}

/// One implicit-midpoint step with `β|·|²·` replaced by `β f_M`.
pub fn irk_regularized_step(
    u_prev: &ComplexField,
    tau: f64,
    systems: &Systems,
    m: f64,
    config: &StepperConfig,
) -> Result<StepResult> {
    single_step(u_prev, tau, systems, config, Scheme::IrkRegularized { m })
}

/// Result of [`run`]: everything recorded up to the end or up to a failure.
#[derive(Debug)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    /// Fields at the recorded steps, starting with the initial one.
    pub fields: Vec<ComplexField>,
    /// Last successfully computed field.
    pub last: ComplexField,
    pub steps_done: usize,
    pub failure: Option<Error>,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// Time loop from `u0` at `t = 0` to `config.t_final`.
pub fn run(u0: &ComplexField, config: &StepperConfig, systems: &Systems, sink: &mut dyn DiagnosticsSink) -> Trajectory {
    let mut traj = Trajectory {
        records: Vec::new(),
        fields: Vec::new(),
        last: u0.clone().with_time(0.0),
        steps_done: 0,
        failure: None,
    };
    let steps = match config.step_sizes().and_then(|s| systems.space.check_len(u0).map(|_| s)) {
        Ok(s) => s,
        Err(e) => {
            traj.failure = Some(e);
            return traj;
        }
    };
    let mut stepper = match Stepper::new(systems, config.clone()) {
        Ok(s) => s,
        Err(e) => {
            traj.failure = Some(e);
            return traj;
        }
    };
    if let Ok(lh) = systems.space.mesh().log_factor(2) {
        let tau_max = steps.iter().copied().fold(0.0, f64::max);
        log::info!(
            "l_h (h_max + tau^2) = {:.4e}",
            lh * (systems.space.mesh().h_max() + tau_max * tau_max)
        );
    }

    let mut emit = |traj: &mut Trajectory, rec: DiagnosticsRecord, field: &ComplexField| -> Result<()> {
        sink.record(&rec, field)?;
        traj.records.push(rec);
        traj.fields.push(field.clone());
        Ok(())
    };
    let first = DiagnosticsRecord {
        step: 0,
        t: 0.0,
        mass: systems.mass_of(u0),
        energy: systems.energy_of(u0),
        newton_iters: 0,
        residual: 0.0,
    };
    let u_init = traj.last.clone();
    if let Err(e) = emit(&mut traj, first, &u_init) {
        traj.failure = Some(e);
        return traj;
    }

    let uniform = config.schedule.is_none();
    let mut t = 0.0;
    let mut before_last: Option<(ComplexField, f64)> = None;
    for (k, &tau) in steps.iter().enumerate() {
        let n = k + 1;
        let guess = match (&before_last, config.predictor) {
            (Some((older, tau_old)), true) => {
                let r = tau / tau_old;
                Some(ComplexField::new(
                    traj.last
                        .values
                        .iter()
                        .zip(&older.values)
                        .map(|(a, b)| a + (a - b) * r)
                        .collect(),
                ))
            }
            _ => None,
        };
        let res = match stepper.step(&traj.last, t, tau, guess.as_ref()) {
            Ok(r) => r,
            Err(e) => {
                traj.failure = Some(Error::StepFailure {
                    step: n,
                    t: t + tau,
                    source: Box::new(e),
                });
                return traj;
            }
        };
        t = if uniform { n as f64 * config.tau } else { t + tau };
        let field = res.field.with_time(t);
        before_last = Some((std::mem::replace(&mut traj.last, field), tau));
        traj.steps_done = n;
        if n % config.record_every == 0 || n == steps.len() {
            let rec = DiagnosticsRecord {
                step: n,
                t,
                mass: res.mass,
                energy: res.energy,
                newton_iters: res.newton_iters,
                residual: res.final_residual,
            };
            let current = traj.last.clone();
            if let Err(e) = emit(&mut traj, rec, &current) {
                traj.failure = Some(e);
                return traj;
            }
        }
    }
    traj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Mesh, Rect};
    use crate::quadrature::QuadratureDegree;
    use std::f64::consts::PI;

    fn heat_systems(n: usize, beta: f64) -> Systems {
        let mesh = Mesh::rectangle(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), n, n).unwrap();
        let space = FeSpace::new(Arc::new(mesh), QuadratureDegree::Four).unwrap();
        let coeffs = Coefficients::new(beta).unwrap().with_scalar_diffusion(0.5);
        Systems::new(space, coeffs)
    }

    fn mode(s: &Systems) -> ComplexField {
        s.space().interpolate(|p| Complex64::new(2.0 * (PI * p[0]).sin() * (PI * p[1]).sin(), 0.0))
    }

    #[test]
    fn config_validation() {
        assert!(StepperConfig::new(Scheme::Irk, -0.1, 1.0).is_err());
        assert!(StepperConfig::new(Scheme::Irk, 0.1, -1.0).is_err());
        assert!(StepperConfig::new(Scheme::IrkRegularized { m: 0.0 }, 0.1, 1.0).is_err());
        let c = StepperConfig::new(Scheme::Irk, 0.1, 1.0).unwrap();
        assert_eq!(c.step_sizes().unwrap().len(), 10);
        let bad = StepperConfig::new(Scheme::Irk, 0.3, 1.0).unwrap();
        assert!(bad.step_sizes().is_err());
        let mut sched = c.clone();
        sched.schedule = Some(vec![0.25, 0.5, 0.25]);
        assert_eq!(sched.step_sizes().unwrap().len(), 3);
        sched.schedule = Some(vec![0.25, 0.5]);
        assert!(sched.step_sizes().is_err());
    }

    #[test]
    fn uniqueness_bound_cases() {
        assert!((uniqueness_bound(1.0, 0.0, 100.0) - 0.002).abs() < 1e-15);
        assert!(uniqueness_bound(1.0, 0.0, 0.0).is_infinite());
        assert!((uniqueness_bound(2.0, 0.5, 1.0) - 2.0 / 40.5).abs() < 1e-15);
    }

    #[test]
    fn irk_linear_mass_exact() {
        let s = heat_systems(8, 0.0);
        let cfg = StepperConfig::new(Scheme::Irk, 0.05, 1.0).unwrap();
        let u0 = mode(&s);
        let m0 = s.mass_of(&u0);
        let r = irk_step(&u0, 0.05, &s, &cfg).unwrap();
        assert_eq!(r.newton_iters, 1);
        assert!((r.mass - m0).abs() <= 1e-12 * m0);
    }

    #[test]
    fn be_linear_mass_decays() {
        let s = heat_systems(8, 0.0);
        let cfg = StepperConfig::new(Scheme::BackwardEuler, 0.05, 1.0).unwrap();
        let u0 = mode(&s);
        let r = be_step(&u0, 0.05, &s, &cfg).unwrap();
        assert!(r.mass < s.mass_of(&u0));
    }

    #[test]
    fn tiny_step_is_consistent() {
        let s = heat_systems(6, 1.0);
        let cfg = StepperConfig::new(Scheme::Irk, 1e-12, 1.0).unwrap();
        let u0 = mode(&s);
        let r = irk_step(&u0, 1e-12, &s, &cfg).unwrap();
        assert!(r.field.max_abs_diff(&u0) < 1e-9);
    }

    #[test]
    fn run_with_zero_horizon() {
        let s = heat_systems(6, 1.0);
        let cfg = StepperConfig::new(Scheme::Irk, 0.1, 0.0).unwrap();
        let mut sink = Vec::new();
        let traj = run(&mode(&s), &cfg, &s, &mut sink);
        assert!(traj.is_complete());
        assert_eq!(traj.fields.len(), 1);
        assert_eq!(sink.len(), 1);
        assert_eq!(sink[0].step, 0);
    }

    #[test]
    fn nonlinear_irk_conserves_be_dissipates() {
        let s = heat_systems(8, 10.0);
        let u0 = mode(&s);
        let m0 = s.mass_of(&u0);
        let mut cfg = StepperConfig::new(Scheme::Irk, 0.05, 0.5).unwrap();
        cfg.record_every = 2;
        let irk = run(&u0, &cfg, &s, &mut crate::diagnostics::NullSink).into_result().unwrap();
        assert_eq!(irk.records.len(), 1 + 5);
        for r in &irk.records {
            assert!((r.mass - m0).abs() <= 10.0 * cfg.newton.tol * m0);
        }
        cfg.scheme = Scheme::BackwardEuler;
        cfg.record_every = 1;
        let be = run(&u0, &cfg, &s, &mut crate::diagnostics::NullSink).into_result().unwrap();
        for w in be.records.windows(2) {
            assert!(w[1].mass < w[0].mass);
        }
    }

    #[test]
    fn predictor_reaches_same_solution() {
        let s = heat_systems(8, 10.0);
        let u0 = mode(&s);
        let mut cfg = StepperConfig::new(Scheme::Irk, 0.05, 0.25).unwrap();
        cfg.newton.tol = 1e-12;
        let plain = run(&u0, &cfg, &s, &mut crate::diagnostics::NullSink).into_result().unwrap();
        cfg.predictor = true;
        let pred = run(&u0, &cfg, &s, &mut crate::diagnostics::NullSink).into_result().unwrap();
        assert!(plain.last.max_abs_diff(&pred.last) < 1e-10);
    }

    #[test]
    fn newton_failure_is_reported() {
        let s = heat_systems(6, 50.0);
        let mut cfg = StepperConfig::new(Scheme::Irk, 0.5, 1.0).unwrap();
        cfg.newton.max_iter = 1;
        cfg.newton.tol = 1e-14;
        let traj = run(&mode(&s), &cfg, &s, &mut crate::diagnostics::NullSink);
        match traj.failure {
            Some(Error::StepFailure { step: 1, source, .. }) => {
                assert!(matches!(*source, Error::NewtonNonConvergence { .. }))
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(traj.fields.len(), 1);
    }
}
