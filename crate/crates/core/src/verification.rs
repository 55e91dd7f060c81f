//! Convergence-order harness: benchmark cases, EOC tables and the
//! Backward-Euler / IRK comparison table.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;

use crate::assembly::{ComplexField, FeSpace};
use crate::diagnostics::NullSink;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, Rect};
use crate::model::{gpe_rotating, Coefficients};
use crate::newton::NewtonOptions;
use crate::quadrature::QuadratureDegree;
use crate::sparse::ComplexLu;
use crate::steppers::{run, Forcing, Scheme, StepperConfig, Systems};

pub type SpaceTimeFn = Arc<dyn Fn(Point, f64) -> Complex64 + Send + Sync>;
pub type SpaceTimeGrad = Arc<dyn Fn(Point, f64) -> [Complex64; 2] + Send + Sync>;

/// A problem with known solution.
#[derive(Clone)]
pub struct BenchmarkCase {
    pub name: String,
    pub domain: Rect,
    pub coeffs: Coefficients,
    pub exact: SpaceTimeFn,
    pub exact_gradient: SpaceTimeGrad,
    pub forcing: Option<Forcing>,
    pub t_final: f64,
}

impl std::fmt::Debug for BenchmarkCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BenchmarkCase")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("t_final", &self.t_final)
            .finish_non_exhaustive()
    }
}

/// Coarsest mesh of the eigenmode case.
pub const EIGENMODE_COARSE: usize = 16;

impl BenchmarkCase {
    /// `A = ½I`, `b = 0`, `c = 0`, `β = 0` on `[0, π]²`:
    /// `u = e^{−it} sin x sin y`. The horizon is `16 (π/16)²` so that
    /// `τ = h²` divides it on every dyadic level.
    pub fn eigenmode() -> Self {
        let h0 = PI / EIGENMODE_COARSE as f64;
        Self {
            name: "eigenmode".into(),
            domain: Rect::new(0.0, PI, 0.0, PI).expect("valid domain"),
            coeffs: Coefficients::new(0.0).expect("beta = 0").with_scalar_diffusion(0.5),
            exact: Arc::new(|p, t| Complex64::from_polar(p[0].sin() * p[1].sin(), -t)),
            exact_gradient: Arc::new(|p, t| {
                let ph = Complex64::from_polar(1.0, -t);
                [ph * (p[0].cos() * p[1].sin()), ph * (p[0].sin() * p[1].cos())]
            }),
            forcing: None,
            t_final: 16.0 * h0 * h0,
        }
    }

    /// `A = ½I`, `β = 1` on `[0, 1]²` with the source chosen such that
    /// `u = e^{−it} sin(πx) sin(πy)`.
    pub fn manufactured() -> Self {
        let shape = |p: Point| (PI * p[0]).sin() * (PI * p[1]).sin();
        let exact = move |p: Point, t: f64| Complex64::from_polar(shape(p), -t);
        let h0 = 1.0 / 8.0;
        Self {
            name: "manufactured".into(),
            domain: Rect::new(0.0, 1.0, 0.0, 1.0).expect("valid domain"),
            coeffs: Coefficients::new(1.0).expect("beta = 1").with_scalar_diffusion(0.5),
            exact: Arc::new(exact),
            exact_gradient: Arc::new(move |p, t| {
                let ph = Complex64::from_polar(PI, -t);
                [
                    ph * ((PI * p[0]).cos() * (PI * p[1]).sin()),
                    ph * ((PI * p[0]).sin() * (PI * p[1]).cos()),
                ]
            }),
            forcing: Some(Arc::new(move |p, t| {
                let u = exact(p, t);
                u * (1.0 - PI * PI) - u * u.norm_sqr()
            })),
            t_final: 16.0 * h0 * h0,
        }
    }

    /// Zero data, zero solution.
    pub fn zero() -> Self {
        Self {
            name: "zero".into(),
            domain: Rect::new(0.0, 1.0, 0.0, 1.0).expect("valid domain"),
            coeffs: Coefficients::new(1.0).expect("beta = 1").with_scalar_diffusion(0.5),
            exact: Arc::new(|_, _| Complex64::new(0.0, 0.0)),
            exact_gradient: Arc::new(|_, _| [Complex64::new(0.0, 0.0); 2]),
            forcing: None,
            t_final: 0.25,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "eigenmode" => Some(Self::eigenmode()),
            "manufactured" => Some(Self::manufactured()),
            "zero" => Some(Self::zero()),
            _ => None,
        }
    }

    pub fn systems(&self, mesh: Arc<Mesh>) -> Result<Systems> {
        let space = FeSpace::new(mesh, QuadratureDegree::Four)?;
        let sys = Systems::new(space, self.coeffs.clone());
        Ok(match &self.forcing {
            Some(f) => sys.with_forcing(f.clone()),
            None => sys,
        })
    }
}

/// One row of an EOC table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EocLevel {
    /// Cells per side.
    pub n: usize,
    pub h: f64,
    pub tau: f64,
    pub l2: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    Space,
    Time,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EocTable {
    pub label: String,
    pub refinement: Refinement,
    pub levels: Vec<EocLevel>,
}

/// `log₂(e_{k−1} / e_k)`.
pub fn eoc(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

impl EocTable {
    pub fn l2_errors(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.l2).collect()
    }

    pub fn energy_errors(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy).collect()
    }

    pub fn eoc_l2(&self) -> Vec<f64> {
        eoc(&self.l2_errors())
    }

    pub fn eoc_energy(&self) -> Vec<f64> {
        eoc(&self.energy_errors())
    }

    /// Orders from the two finest levels.
    pub fn final_orders(&self) -> Option<(f64, f64)> {
        Some((*self.eoc_l2().last()?, *self.eoc_energy().last()?))
    }

    pub fn to_csv(&self) -> String {
        let (o2, oe) = (self.eoc_l2(), self.eoc_energy());
        let mut s = String::from("level,n,h,tau,l2_error,energy_error,eoc_l2,eoc_energy\n");
        for (k, l) in self.levels.iter().enumerate() {
            let fmt = |v: Option<&f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
            let _ = writeln!(
                s,
                "{k},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                l.n,
                l.h,
                l.tau,
                l.l2,
                l.energy,
                fmt(k.checked_sub(1).and_then(|j| o2.get(j))),
                fmt(k.checked_sub(1).and_then(|j| oe.get(j))),
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let (o2, oe) = (self.eoc_l2(), self.eoc_energy());
        let mut s = format!("{}\n", self.label);
        let _ = writeln!(s, "{:>5} {:>12} {:>12} {:>12} {:>12} {:>7} {:>7}", "n", "h", "tau", "L2", "E", "eoc", "eoc");
        for (k, l) in self.levels.iter().enumerate() {
            let fmt = |v: Option<&f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
            let _ = writeln!(
                s,
                "{:>5} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>7} {:>7}",
                l.n,
                l.h,
                l.tau,
                l.l2,
                l.energy,
                fmt(k.checked_sub(1).and_then(|j| o2.get(j))),
                fmt(k.checked_sub(1).and_then(|j| oe.get(j))),
            );
        }
        s
    }
}

/// Dyadically refined meshes `n0, 2n0, …` of `domain`.
pub fn nested_meshes(domain: Rect, n0: usize, n_levels: usize) -> Result<Vec<Arc<Mesh>>> {
    if n_levels == 0 {
        return Err(Error::NonNestedLevels("at least one level required".into()));
    }
    let mut meshes = vec![Arc::new(Mesh::rectangle(domain, n0, n0)?)];
    for _ in 1..n_levels {
        let next = meshes.last().expect("non-empty").refine_uniform();
        meshes.push(Arc::new(next));
    }
    Ok(meshes)
}

fn check_nested(values: &[f64], what: &str) -> Result<()> {
    for w in values.windows(2) {
        if (w[0] / w[1] - 2.0).abs() > 1e-12 {
            return Err(Error::NonNestedLevels(format!("{what} levels {} and {} are not halved", w[0], w[1])));
        }
    }
    Ok(())
}

fn newton_for_eoc() -> NewtonOptions {
    NewtonOptions {
        tol: 1e-12,
        ..Default::default()
    }
}

/// Spatial EOC at the horizon of `case`. The step `tau` defaults to the
/// square of the finest cell width and is shared by all levels.
pub fn run_space_eoc(case: &BenchmarkCase, n0: usize, n_levels: usize, tau: Option<f64>, scheme: Scheme) -> Result<EocTable> {
    let meshes = nested_meshes(case.domain, n0, n_levels)?;
    let n_finest = n0 << (n_levels - 1);
    let width = case.domain.width() / n_finest as f64;
    let tau = tau.unwrap_or(width * width);
    let mut cfg = StepperConfig::new(scheme, tau, case.t_final)?;
    cfg.newton = newton_for_eoc();
    cfg.record_every = usize::MAX;
    let t = case.t_final;
    let mut levels = Vec::new();
    for (k, mesh) in meshes.into_iter().enumerate() {
        let n = n0 << k;
        let h = mesh.h_max();
        let sys = case.systems(mesh)?;
        let u0 = sys.space().interpolate(|p| (case.exact)(p, 0.0));
        let traj = run(&u0, &cfg, &sys, &mut NullSink).into_result()?;
        let u = &traj.last;
        let l2 = sys.space().l2_error(u, |p| (case.exact)(p, t));
        let energy = sys
            .space()
            .energy_error(u, |p| (case.exact)(p, t), |p| (case.exact_gradient)(p, t), &case.coeffs);
        log::info!("{} n = {n}: L2 {l2:.4e}, E {energy:.4e}", case.name);
        levels.push(EocLevel { n, h, tau, l2, energy });
    }
    Ok(EocTable {
        label: format!("space EOC, case {}, scheme {}, tau = {tau:.4e}, T = {t}", case.name, scheme.name()),
        refinement: Refinement::Space,
        levels,
    })
}

/// Lowest generalized eigenpair of `(L + K, M)` by inverse iteration, the
/// eigenvector normalized in L².
pub fn discrete_eigenpair(systems: &Systems, iterations: usize) -> Result<(f64, ComplexField)> {
    let lu = ComplexLu::new(systems.linear_operator())?;
    let mut phi = systems
        .space()
        .interpolate(|p| Complex64::new(1.0 + 0.1 * p[0] - 0.05 * p[1], 0.0));
    let mut lambda = 0.0;
    for _ in 0..iterations.max(1) {
        let rhs = systems.mass_matrix().mul_vec(&phi.values);
        phi = ComplexField::new(lu.solve(&rhs)?);
        let m = systems.mass_of(&phi);
        for v in &mut phi.values {
            *v /= m;
        }
        lambda = systems.linear_operator().quadratic_form(&phi.values).re;
    }
    Ok((lambda, phi))
}

/// How temporal errors are measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeReference {
    /// Start from the discrete eigenvector `φ_h` (requires `β = 0`, no
    /// source) and compare with `e^{−iλ_h T} φ_h`, the exact-in-time
    /// solution of the semi-discrete problem.
    DiscreteEigenmode,
    /// Start from the interpolant of the exact initial value and compare
    /// with a same-mesh run at `τ_finest / factor`.
    SelfConvergence { factor: usize },
}

/// Temporal EOC on a fixed `n × n` mesh of `case.domain`.
pub fn run_time_eoc(
    case: &BenchmarkCase,
    n: usize,
    taus: &[f64],
    scheme: Scheme,
    reference: TimeReference,
) -> Result<EocTable> {
    if taus.is_empty() {
        return Err(Error::NonNestedLevels("no step sizes".into()));
    }
    check_nested(taus, "tau")?;
    let mesh = Arc::new(Mesh::rectangle(case.domain, n, n)?);
    let h = mesh.h_max();
    let sys = case.systems(mesh)?;
    let t = case.t_final;
    let simulate = |u0: &ComplexField, tau: f64| -> Result<ComplexField> {
        let mut cfg = StepperConfig::new(scheme, tau, t)?;
        cfg.newton = newton_for_eoc();
        cfg.record_every = usize::MAX;
        Ok(run(u0, &cfg, &sys, &mut NullSink).into_result()?.last)
    };
    let (u0, target) = match reference {
        TimeReference::DiscreteEigenmode => {
            if case.coeffs.beta() != 0.0 || case.forcing.is_some() {
                return Err(Error::param("reference", "the eigenmode reference needs a linear, unforced case"));
            }
            let (lambda, phi) = discrete_eigenpair(&sys, 200)?;
            let target = phi.scaled(Complex64::from_polar(1.0, -lambda * t));
            (phi, target)
        }
        TimeReference::SelfConvergence { factor } => {
            let u0 = sys.space().interpolate(|p| (case.exact)(p, 0.0));
            let finest = *taus.last().expect("non-empty");
            let target = simulate(&u0, finest / factor.max(1) as f64)?;
            (u0, target)
        }
    };
    let mut levels = Vec::new();
    for &tau in taus {
        let u = simulate(&u0, tau)?;
        let d = ComplexField::new(u.values.iter().zip(&target.values).map(|(a, b)| a - b).collect());
        let l2 = sys.mass_of(&d);
        let energy = sys.e_matrix().quadratic_form(&d.values).re.max(0.0).sqrt();
        log::info!("{} tau = {tau}: L2 {l2:.4e}, E {energy:.4e}", case.name);
        levels.push(EocLevel { n, h, tau, l2, energy });
    }
    Ok(EocTable {
        label: format!("time EOC, case {}, scheme {}, n = {n}, T = {t}", case.name, scheme.name()),
        refinement: Refinement::Time,
        levels,
    })
}

/// Smooth function and coefficients for the Ritz-projection rates.
#[derive(Clone)]
pub struct ProjectionCase {
    pub name: String,
    pub domain: Rect,
    pub coeffs: Coefficients,
    pub f: Arc<dyn Fn(Point) -> Complex64 + Send + Sync>,
    pub grad_f: Arc<dyn Fn(Point) -> [Complex64; 2] + Send + Sync>,
}

impl ProjectionCase {
    fn sine(name: &str, coeffs: Coefficients) -> Self {
        Self {
            name: name.into(),
            domain: Rect::new(0.0, 1.0, 0.0, 1.0).expect("valid domain"),
            coeffs,
            f: Arc::new(|p| Complex64::new((PI * p[0]).sin() * (PI * p[1]).sin(), 0.0)),
            grad_f: Arc::new(|p| {
                [
                    Complex64::new(PI * (PI * p[0]).cos() * (PI * p[1]).sin(), 0.0),
                    Complex64::new(PI * (PI * p[0]).sin() * (PI * p[1]).cos(), 0.0),
                ]
            }),
        }
    }

    /// `sin(πx) sin(πy)` on `[0,1]²` with `A = I`, `b = 0`, `c = 1`.
    pub fn laplace() -> Self {
        Self::sine("laplace", Coefficients::new(0.0).expect("beta = 0").with_potential(|_| 1.0))
    }

    /// Same function under the rotating form `A = ½I`, `b = Ω(−y, x)`,
    /// `c = 1`; on `[0,1]²` the reduced potential `1 − Ω²|x|²/2` stays
    /// positive for `|Ω| ≤ 0.9`.
    pub fn rotating(omega: f64) -> Self {
        Self::sine("rotating", gpe_rotating(omega, |_| 1.0, 0.0).expect("finite omega"))
    }
}

/// Ritz-projection errors on nested meshes.
pub fn run_projection_eoc(case: &ProjectionCase, n0: usize, n_levels: usize) -> Result<EocTable> {
    let mut levels = Vec::new();
    for (k, mesh) in nested_meshes(case.domain, n0, n_levels)?.into_iter().enumerate() {
        let h = mesh.h_max();
        let space = FeSpace::new(mesh, QuadratureDegree::Four)?;
        let p = space.ritz_project(|x| (case.f)(x), |x| (case.grad_f)(x), &case.coeffs)?;
        let l2 = space.l2_error(&p, |x| (case.f)(x));
        let energy = space.energy_error(&p, |x| (case.f)(x), |x| (case.grad_f)(x), &case.coeffs);
        levels.push(EocLevel {
            n: n0 << k,
            h,
            tau: 0.0,
            l2,
            energy,
        });
    }
    Ok(EocTable {
        label: format!("Ritz projection EOC, case {}", case.name),
        refinement: Refinement::Space,
        levels,
    })
}

/// One row of the Backward-Euler / IRK comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table1Row {
    pub tau: f64,
    pub t_final: f64,
    pub mass_be: f64,
    pub mass_irk: f64,
    pub energy_be: f64,
    pub energy_irk: f64,
}

pub const TABLE1_HEADER: &str = "tau,T,mass_be,mass_irk,energy_be,energy_irk";

impl Table1Row {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.tau, self.t_final, self.mass_be, self.mass_irk, self.energy_be, self.energy_irk
        )
    }
}

pub fn table1_csv(rows: &[Table1Row]) -> String {
    let mut s = format!("{TABLE1_HEADER}\n");
    for r in rows {
        s.push_str(&r.to_csv_row());
        s.push('\n');
    }
    s
}

/// `n_steps` steps of Backward Euler and of IRK from `u0` for each `τ`.
pub fn table1_experiment(
    systems: &Systems,
    u0: &ComplexField,
    taus: &[f64],
    n_steps: usize,
    newton: NewtonOptions,
) -> Result<Vec<Table1Row>> {
    let mut rows = Vec::new();
    for &tau in taus {
        let t_final = tau * n_steps as f64;
        let mut out = [(0.0, 0.0); 2];
        for (slot, scheme) in [Scheme::BackwardEuler, Scheme::Irk].into_iter().enumerate() {
            let mut cfg = StepperConfig::new(scheme, tau, t_final)?;
            cfg.schedule = Some(vec![tau; n_steps]);
            cfg.newton = newton;
            cfg.record_every = usize::MAX;
            let traj = run(u0, &cfg, systems, &mut NullSink).into_result()?;
            let r = traj.records.last().expect("final record");
            log::info!("tau = {tau}, {}: mass {:.6e}, energy {:.6e}", scheme.name(), r.mass, r.energy);
            out[slot] = (r.mass, r.energy);
        }
        rows.push(Table1Row {
            tau,
            t_final,
            mass_be: out[0].0,
            mass_irk: out[1].0,
            energy_be: out[0].1,
            energy_irk: out[1].1,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eoc_of_exact_powers() {
        let e = [1.0, 0.25, 0.0625];
        for v in eoc(&e) {
            assert!((v - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn nested_check() {
        assert!(check_nested(&[0.2, 0.1, 0.05], "tau").is_ok());
        assert!(check_nested(&[0.2, 0.15], "tau").is_err());
        let case = BenchmarkCase::eigenmode();
        assert!(matches!(
            run_time_eoc(&case, 4, &[0.2, 0.07], Scheme::Irk, TimeReference::DiscreteEigenmode),
            Err(Error::NonNestedLevels(_))
        ));
    }

    #[test]
    fn zero_case_has_zero_errors() {
        let t = run_space_eoc(&BenchmarkCase::zero(), 4, 2, Some(0.05), Scheme::Irk).unwrap();
        assert!(t.levels.iter().all(|l| l.l2 == 0.0 && l.energy == 0.0));
    }

    #[test]
    fn exact_solutions_vanish_on_boundary() {
        for case in [BenchmarkCase::eigenmode(), BenchmarkCase::manufactured()] {
            let d = case.domain;
            for s in [0.0, 0.3, 0.77, 1.0] {
                for p in [
                    [d.x0, d.y0 + s * d.height()],
                    [d.x1, d.y0 + s * d.height()],
                    [d.x0 + s * d.width(), d.y0],
                    [d.x0 + s * d.width(), d.y1],
                ] {
                    assert!((case.exact)(p, 0.4).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn manufactured_forcing_matches_equation() {
        // i u_t − (−½Δu) − |u|²u − F = 0 checked by finite differences
        let case = BenchmarkCase::manufactured();
        let (p, t, h) = ([0.31, 0.62], 0.4, 1e-4);
        let u = |q: Point, s: f64| (case.exact)(q, s);
        let ut = (u(p, t + h) - u(p, t - h)) / (2.0 * h);
        let lap = (u([p[0] + h, p[1]], t) + u([p[0] - h, p[1]], t) + u([p[0], p[1] + h], t) + u([p[0], p[1] - h], t)
            - u(p, t) * 4.0)
            / (h * h);
        let f = (case.forcing.as_ref().unwrap())(p, t);
        let v = u(p, t);
        let defect = Complex64::new(0.0, 1.0) * ut + 0.5 * lap - v * v.norm_sqr() - f;
        assert!(defect.norm() < 1e-5, "{defect}");
    }

    #[test]
    fn projection_of_space_member_is_exact_on_coarse_level() {
        // a pyramid that is piecewise linear on the 2×2 mesh
        let mut case = ProjectionCase::laplace();
        case.f = Arc::new(|p| Complex64::new(((1.0 - (2.0 * p[0] - 1.0).abs()).min(1.0 - (2.0 * p[1] - 1.0).abs())).max(0.0), 0.0));
        let mesh = Arc::new(Mesh::rectangle(case.domain, 2, 2).unwrap());
        let space = FeSpace::new(mesh, QuadratureDegree::Four).unwrap();
        let u = space.interpolate(|x| (case.f)(x));
        assert!((u.values[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn eigenpair_of_sine_mode() {
        let case = BenchmarkCase::eigenmode();
        let sys = case.systems(Arc::new(Mesh::rectangle(case.domain, 16, 16).unwrap())).unwrap();
        let (lambda, phi) = discrete_eigenpair(&sys, 100).unwrap();
        assert!((lambda - 1.0).abs() < 0.02, "{lambda}");
        let lphi = sys.linear_operator().mul_vec(&phi.values);
        let mphi = sys.mass_matrix().mul_vec(&phi.values);
        let res: f64 = lphi.iter().zip(&mphi).map(|(a, b)| (a - b * lambda).norm()).fold(0.0, f64::max);
        assert!(res < 1e-10);
    }

    #[test]
    fn table_csv_schema() {
        let row = Table1Row {
            tau: 0.1,
            t_final: 10.0,
            mass_be: 0.5,
            mass_irk: 1.0,
            energy_be: 1.0,
            energy_irk: 3.0,
        };
        let csv = table1_csv(&[row]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TABLE1_HEADER));
        assert_eq!(lines.next().unwrap().split(',').count(), 6);
    }
}
