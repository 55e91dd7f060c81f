//! Ground states by a discrete normalized gradient flow in imaginary time.
//!
//! Each flow step is a linearly implicit step of
//! `∂ₜu = −(Lu + κu + β|u|²u − μ(u)u)` with the linear part implicit and
//! the cubic term and the multiplier `μ(u) = ⟨(L + κ)u + β|u|²u, u⟩/‖u‖²`
//! taken at the previous iterate, followed by L²-normalization:
//!
//! `(M + τ(L + K)) δ = (L + K)uᵏ + r(uᵏ) − μₖ M uᵏ`, `uᵏ⁺¹ = (uᵏ − τδ)/‖uᵏ − τδ‖`.
//!
//! The system matrix is constant and factored once. Stationary points are
//! exactly the solutions of the nonlinear eigenproblem.

use num_complex::Complex64;

use crate::assembly::ComplexField;
use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::sparse::ComplexLu;
use crate::steppers::Systems;

/// Initial guess of the flow, before normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeedProfile {
    /// `exp(−(x² + y²)/2)`.
    Gaussian,
    /// Gaussian times the phase `e^{i n arg(x + iy)}`.
    Vortex { charge: i32 },
    /// `(1 − ω)φ + ω(x + iy)φ` with the Gaussian `φ`; breaks the rotational
    /// symmetry so that vortices can enter.
    RotatingMix { omega: f64 },
}

impl SeedProfile {
    pub fn evaluate(&self, p: Point) -> Complex64 {
        let g = (-(p[0] * p[0] + p[1] * p[1]) / 2.0).exp();
        match *self {
            SeedProfile::Gaussian => Complex64::new(g, 0.0),
            SeedProfile::Vortex { charge } => Complex64::from_polar(g, charge as f64 * p[1].atan2(p[0])),
            SeedProfile::RotatingMix { omega } => Complex64::new((1.0 - omega) * g + omega * p[0] * g, omega * p[1] * g),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientFlowConfig {
    pub tau_flow: f64,
    /// Stop when `‖uᵏ⁺¹ − uᵏ‖_{L²} / τ ≤ tol`.
    pub tol: f64,
    pub max_steps: usize,
    pub seed: SeedProfile,
    /// Optional second stopping rule: the energy decreased by at most this
    /// much over the last [`ENERGY_WINDOW`] steps. Vortex lattices drift
    /// along nearly flat directions long after the energy has settled.
    pub energy_tol: Option<f64>,
}

/// Window of the energy stagnation test.
pub const ENERGY_WINDOW: usize = 100;

impl Default for GradientFlowConfig {
    fn default() -> Self {
        Self {
            tau_flow: 0.05,
            tol: 1e-8,
            max_steps: 200_000,
            seed: SeedProfile::Gaussian,
            energy_tol: None,
        }
    }
}

impl GradientFlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_flow > 0.0) || !self.tau_flow.is_finite() {
            return Err(Error::param("tau_flow", "must be > 0"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be > 0"));
        }
        if self.max_steps == 0 {
            return Err(Error::param("max_steps", "must be >= 1"));
        }
        if let Some(t) = self.energy_tol {
            if !(t > 0.0) {
                return Err(Error::param("energy_tol", "must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundState {
    pub field: ComplexField,
    pub energy: f64,
    pub chemical_potential: f64,
    pub steps: usize,
    pub last_change: f64,
    /// Energy after every flow step, starting with the normalized seed.
    pub energies: Vec<f64>,
}

fn normalize(u: &mut ComplexField, systems: &Systems) -> Result<()> {
    let m = systems.mass_of(u);
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::param("seed", "initial guess has zero or non-finite mass"));
    }
    for v in &mut u.values {
        *v /= m;
    }
    Ok(())
}

/// Flow from the configured seed profile.
pub fn dngf(systems: &Systems, config: &GradientFlowConfig) -> Result<GroundState> {
    let seed = systems.space().interpolate(|p| config.seed.evaluate(p));
    dngf_from(systems, seed, config)
}

/// Flow from an explicit initial field.
pub fn dngf_from(systems: &Systems, mut u: ComplexField, config: &GradientFlowConfig) -> Result<GroundState> {
    config.validate()?;
    systems.space().check_len(&u)?;
    normalize(&mut u, systems)?;
    let tau = config.tau_flow;
    let beta = systems.coeffs().beta();
    let mass = systems.mass_matrix();
    let linear = systems.linear_operator();
    let one = Complex64::new(1.0, 0.0);
    let lu = ComplexLu::new(&mass.combine(one, linear, Complex64::new(tau, 0.0)))?;

    let mut energies = vec![systems.energy_of(&u)];
    let mut increases = 0usize;
    let mut last_change = f64::INFINITY;
    let mut mu = 0.0;
    for step in 1..=config.max_steps {
        let lu_u = linear.mul_vec(&u.values);
        let r = systems.space().cubic_residual(&u, beta);
        let mu_u = mass.mul_vec(&u.values);
        let grad: Vec<Complex64> = lu_u.iter().zip(&r).map(|(a, b)| a + b).collect();
        let num: f64 = grad.iter().zip(&u.values).map(|(g, v)| (v.conj() * g).re).sum();
        let den: f64 = mu_u.iter().zip(&u.values).map(|(m, v)| (v.conj() * m).re).sum();
        mu = num / den;
        let rhs: Vec<Complex64> = grad.iter().zip(&mu_u).map(|(g, m)| g - m * mu).collect();
        let delta = lu.solve(&rhs)?;
        let mut next = ComplexField::new(u.values.iter().zip(&delta).map(|(v, d)| v - d * tau).collect());
        normalize(&mut next, systems)?;
        let diff = ComplexField::new(next.values.iter().zip(&u.values).map(|(a, b)| a - b).collect());
        last_change = systems.mass_of(&diff) / tau;
        u = next;
        let e = systems.energy_of(&u);
        let prev = *energies.last().expect("non-empty");
        if e > prev + 1e-10 {
            increases += 1;
            if increases <= 3 {
                log::warn!("flow step {step}: energy increased from {prev:.10} to {e:.10}; tau_flow may be too large");
            }
        }
        energies.push(e);
        if step % 500 == 0 {
            log::debug!("flow step {step}: energy {e:.10}, change {last_change:.3e}");
        }
        let stagnated = match config.energy_tol {
            Some(tol) if step >= ENERGY_WINDOW => energies[step - ENERGY_WINDOW] - e <= tol,
            _ => false,
        };
        if last_change <= config.tol || stagnated {
            return Ok(GroundState {
                energy: e,
                chemical_potential: mu,
                field: u,
                steps: step,
                last_change,
                energies,
            });
        }
        if !e.is_finite() {
            break;
        }
    }
    log::warn!("gradient flow stopped with mu = {mu:.6}");
    Err(Error::FlowNonConvergence {
        steps: config.max_steps,
        last_change,
        energies,
    })
}

/// Runs the flow from several seeds and keeps the lowest-energy state.
pub fn dngf_best_of(systems: &Systems, config: &GradientFlowConfig, seeds: &[SeedProfile]) -> Result<GroundState> {
    let mut best: Option<GroundState> = None;
    let mut last_err = None;
    for seed in seeds {
        let cfg = GradientFlowConfig {
            seed: *seed,
            ..config.clone()
        };
        match dngf(systems, &cfg) {
            Ok(g) => {
                log::info!("seed {seed:?}: energy {:.8} after {} steps", g.energy, g.steps);
                if !best.as_ref().is_some_and(|b| g.energy >= b.energy) {
                    best = Some(g);
                }
            }
            Err(e) => {
                log::warn!("seed {seed:?}: {e}");
                last_err = Some(e);
            }
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::param("seeds", "no seed given")))
}
