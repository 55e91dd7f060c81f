//! Coefficient data of the operator
//! `⟨Lv, w⟩ = ∫ A∇v·∇w̄ + i (b·∇v) w̄ + c v w̄` and the nonlinearity
//! `(κ + β|u|²) u`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::QuadratureRule;

pub type Matrix2 = [[f64; 2]; 2];

type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
type MatrixFn = Arc<dyn Fn(Point) -> Matrix2 + Send + Sync>;
type ComplexFn = Arc<dyn Fn(Point) -> Complex64 + Send + Sync>;

/// Coefficients `(A, b, c, κ, β)`. Cheap to clone; evaluation is pure.
#[derive(Clone)]
pub struct Coefficients {
    diffusion: MatrixFn,
    drift: VectorFn,
    potential: ScalarFn,
    kappa: ComplexFn,
    beta: f64,
    drift_divergence_free: bool,
    kappa_is_zero: bool,
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficients")
            .field("beta", &self.beta)
            .field("drift_divergence_free", &self.drift_divergence_free)
            .field("kappa_is_zero", &self.kappa_is_zero)
            .finish_non_exhaustive()
    }
}

impl Coefficients {
    /// `A = I`, `b = 0`, `c = 0`, `κ = 0` with the given interaction strength.
    pub fn new(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self {
            diffusion: Arc::new(|_| [[1.0, 0.0], [0.0, 1.0]]),
            drift: Arc::new(|_| [0.0, 0.0]),
            potential: Arc::new(|_| 0.0),
            kappa: Arc::new(|_| Complex64::new(0.0, 0.0)),
            beta,
            drift_divergence_free: true,
            kappa_is_zero: true,
        })
    }

    pub fn with_diffusion(mut self, a: impl Fn(Point) -> Matrix2 + Send + Sync + 'static) -> Self {
        self.diffusion = Arc::new(a);
        self
    }

    /// Constant isotropic diffusion `a·I`.
    pub fn with_scalar_diffusion(self, a: f64) -> Self {
        self.with_diffusion(move |_| [[a, 0.0], [0.0, a]])
    }

    /// Sets the drift `b` together with the declared divergence-free flag.
    pub fn with_drift(
        mut self,
        b: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
        divergence_free: bool,
    ) -> Self {
        self.drift = Arc::new(b);
        self.drift_divergence_free = divergence_free;
        self
    }

    pub fn with_potential(mut self, c: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        self.potential = Arc::new(c);
        self
    }

    pub fn with_kappa(mut self, kappa: impl Fn(Point) -> Complex64 + Send + Sync + 'static) -> Self {
        self.kappa = Arc::new(kappa);
        self.kappa_is_zero = false;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        self.beta = beta;
        Ok(self)
    }

    pub fn diffusion(&self, p: Point) -> Matrix2 {
        (self.diffusion)(p)
    }

    pub fn drift(&self, p: Point) -> [f64; 2] {
        (self.drift)(p)
    }

    pub fn potential(&self, p: Point) -> f64 {
        (self.potential)(p)
    }

    pub fn kappa(&self, p: Point) -> Complex64 {
        (self.kappa)(p)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn drift_divergence_free(&self) -> bool {
        self.drift_divergence_free
    }

    /// True when κ was never set (κ ≡ 0); lets assembly skip the κ-form.
    pub fn kappa_is_zero(&self) -> bool {
        self.kappa_is_zero
    }

    /// `|A^{-1/2} b|² = bᵀ A⁻¹ b` at `p`.
    pub fn drift_energy_density(&self, p: Point) -> f64 {
        let a = self.diffusion(p);
        let b = self.drift(p);
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        (a[1][1] * b[0] * b[0] - (a[0][1] + a[1][0]) * b[0] * b[1] + a[0][0] * b[1] * b[1]) / det
    }

    /// Largest `|Im κ|` over the quadrature points of `mesh`.
    pub fn kappa_im_sup(&self, mesh: &Mesh, rule: &QuadratureRule) -> f64 {
        if self.kappa_is_zero {
            return 0.0;
        }
        let mut sup = 0.0f64;
        for e in mesh.elements() {
            for (bary, _) in rule.iter() {
                sup = sup.max(self.kappa(e.point(bary)).im.abs());
            }
            for v in e.vertices {
                sup = sup.max(self.kappa(v).im.abs());
            }
        }
        sup
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::param("beta", format!("must be a finite value >= 0, got {beta}")));
    }
    Ok(())
}

/// Rotating Gross–Pitaevskii coefficients: `A = I/2`, `b = Ω(-y, x)`,
/// `c = V`, `κ = 0`. With this sign the form `i b·∇u` equals `-Ω L_z u` for
/// `L_z = -i(x∂_y - y∂_x)`.
pub fn gpe_rotating(
    omega: f64,
    potential: impl Fn(Point) -> f64 + Send + Sync + 'static,
    beta: f64,
) -> Result<Coefficients> {
    if !omega.is_finite() {
        return Err(Error::param("omega", "must be finite"));
    }
    Ok(Coefficients::new(beta)?
        .with_scalar_diffusion(0.5)
        .with_drift(move |p| [-omega * p[1], omega * p[0]], true)
        .with_potential(potential))
}

/// Harmonic trap `(γ_x² x² + γ_y² y²) / 2`.
pub fn harmonic_potential(gamma_x: f64, gamma_y: f64) -> impl Fn(Point) -> f64 + Send + Sync + Clone {
    let (gx2, gy2) = (gamma_x * gamma_x, gamma_y * gamma_y);
    move |p: Point| 0.5 * (gx2 * p[0] * p[0] + gy2 * p[1] * p[1])
}

/// Spectral and confinement constants certified at sampled points.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticityCertificate {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub zeta0: f64,
    pub zeta1: f64,
    pub sample_points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    /// `A(x)` is not symmetric (max off-diagonal mismatch).
    AsymmetricDiffusion(f64),
    /// Smallest eigenvalue of `A(x)` is not positive.
    IndefiniteDiffusion(f64),
    /// `Re κ(x) < 0`.
    NegativeKappa(f64),
    /// `4c − (2+ζ₁)|A^{-1/2}b|² ≤ 0`; carries the value.
    Confinement(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub point: Point,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationReport {
    pub zeta1: f64,
    pub violations: Vec<Violation>,
    /// Minimum of `(4c − (2+ζ₁)|A^{-1/2}b|²)/4` over all sampled points.
    pub worst_confinement: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssumptionCheck {
    Certified(EllipticityCertificate),
    Violated(ViolationReport),
}

impl AssumptionCheck {
    pub fn certificate(&self) -> Option<&EllipticityCertificate> {
        match self {
            AssumptionCheck::Certified(c) => Some(c),
            AssumptionCheck::Violated(_) => None,
        }
    }
}

/// Checks ellipticity, `Re κ ≥ 0` and the confinement inequality at every
/// quadrature point of every element.
pub fn validate_assumptions(
    coeffs: &Coefficients,
    mesh: &Mesh,
    rule: &QuadratureRule,
    zeta1: f64,
) -> Result<AssumptionCheck> {
    if !(zeta1 > 1.0) {
        return Err(Error::param("zeta1", format!("must exceed 1, got {zeta1}")));
    }
    let mut gamma_min = f64::INFINITY;
    let mut gamma_max = f64::NEG_INFINITY;
    let mut worst = f64::INFINITY;
    let mut points = Vec::with_capacity(mesh.n_triangles() * rule.len());
    let mut violations = Vec::new();
    for e in mesh.elements() {
        for (bary, _) in rule.iter() {
            let p = e.point(bary);
            points.push(p);
            let a = coeffs.diffusion(p);
            let asym = (a[0][1] - a[1][0]).abs();
            if asym > 1e-14 * (a[0][0].abs() + a[1][1].abs()).max(1.0) {
                violations.push(Violation { point: p, kind: ViolationKind::AsymmetricDiffusion(asym) });
            }
            let (lo, hi) = symmetric_eigenvalues(&a);
            gamma_min = gamma_min.min(lo);
            gamma_max = gamma_max.max(hi);
            if lo <= 0.0 {
                violations.push(Violation { point: p, kind: ViolationKind::IndefiniteDiffusion(lo) });
                continue;
            }
            let re_kappa = coeffs.kappa(p).re;
            if re_kappa < 0.0 {
                violations.push(Violation { point: p, kind: ViolationKind::NegativeKappa(re_kappa) });
            }
            let conf = 4.0 * coeffs.potential(p) - (2.0 + zeta1) * coeffs.drift_energy_density(p);
            worst = worst.min(0.25 * conf);
            if !(conf > 0.0) {
                violations.push(Violation { point: p, kind: ViolationKind::Confinement(conf) });
            }
        }
    }
    if violations.is_empty() {
        Ok(AssumptionCheck::Certified(EllipticityCertificate {
            gamma_min,
            gamma_max,
            zeta0: worst,
            zeta1,
            sample_points: points,
        }))
    } else {
        Ok(AssumptionCheck::Violated(ViolationReport {
            zeta1,
            violations,
            worst_confinement: worst,
            n_points: points.len(),
        }))
    }
}

/// Central-difference estimate of `max |∇·b|` over element barycenters,
/// compared against `tol`.
pub fn check_divergence_free(coeffs: &Coefficients, mesh: &Mesh, tol: f64) -> bool {
    max_divergence(coeffs, mesh) <= tol
}

pub fn max_divergence(coeffs: &Coefficients, mesh: &Mesh) -> f64 {
    let mut worst = 0.0f64;
    for (k, e) in mesh.elements().enumerate() {
        let [x, y] = e.barycenter();
        let d = 1e-2 * mesh.element_diameter(k);
        let dbx = coeffs.drift([x + d, y])[0] - coeffs.drift([x - d, y])[0];
        let dby = coeffs.drift([x, y + d])[1] - coeffs.drift([x, y - d])[1];
        worst = worst.max(((dbx + dby) / (2.0 * d)).abs());
    }
    worst
}

/// Eigenvalues `(min, max)` of a symmetric 2×2 matrix.
pub fn symmetric_eigenvalues(a: &Matrix2) -> (f64, f64) {
    let off = 0.5 * (a[0][1] + a[1][0]);
    let mean = 0.5 * (a[0][0] + a[1][1]);
    let rad = (0.5 * (a[0][0] - a[1][1])).hypot(off);
    (mean - rad, mean + rad)
}

/// Principal square root of a symmetric positive definite 2×2 matrix.
pub fn sqrt_spd(a: &Matrix2) -> Matrix2 {
    let s = (a[0][0] * a[1][1] - a[0][1] * a[1][0]).sqrt();
    let t = (a[0][0] + a[1][1] + 2.0 * s).sqrt();
    [
        [(a[0][0] + s) / t, a[0][1] / t],
        [a[1][0] / t, (a[1][1] + s) / t],
    ]
}

pub fn inverse2(a: &Matrix2) -> Matrix2 {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
}
