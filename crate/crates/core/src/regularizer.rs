//! Globally Lipschitz truncation `f_M` of the cubic `|z|²z`.
//!
//! With `θ = M²` and the quintic blend
//! `g(s) = 3θ⁻⁴s⁵ − 7θ⁻³s⁴ + 4θ⁻²s³ + s`, the modulus profile is
//! `γ(s) = s` on `[0, θ]`, `g(s − θ) + θ` on `[θ, 2θ]` and `2θ` beyond, and
//! `f_M(z) = γ(|z|²) z`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{ComplexField, Cubic, FeSpace, PointNonlinearity};
use crate::error::{Error, Result};

/// Seed used by [`verify_properties`] unless the caller supplies one.
pub const DEFAULT_SEED: u64 = 0x5eed_2024;

/// Default safety factor of [`estimate_m`].
pub const DEFAULT_SAFETY: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedCubic {
    m: f64,
    theta: f64,
}

impl RegularizedCubic {
    pub fn new(m: f64) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::param("M", format!("must be a finite value > 0, got {m}")));
        }
        Ok(Self { m, theta: m * m })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn blend(&self, s: f64) -> f64 {
        let t = self.theta;
        let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
        3.0 / t4 * s.powi(5) - 7.0 / t3 * s.powi(4) + 4.0 / t2 * s.powi(3) + s
    }

    fn blend_prime(&self, s: f64) -> f64 {
        let t = self.theta;
        15.0 / t.powi(4) * s.powi(4) - 28.0 / t.powi(3) * s.powi(3) + 12.0 / t.powi(2) * s * s + 1.0
    }

    fn blend_second(&self, s: f64) -> f64 {
        let t = self.theta;
        60.0 / t.powi(4) * s.powi(3) - 84.0 / t.powi(3) * s * s + 24.0 / t.powi(2) * s
    }

    /// Modulus profile γ.
    pub fn gamma(&self, s: f64) -> f64 {
        if s <= self.theta {
            s
        } else if s <= 2.0 * self.theta {
            self.blend(s - self.theta) + self.theta
        } else {
            2.0 * self.theta
        }
    }

    pub fn gamma_prime(&self, s: f64) -> f64 {
        if s <= self.theta {
            1.0
        } else if s <= 2.0 * self.theta {
            self.blend_prime(s - self.theta)
        } else {
            0.0
        }
    }

    pub fn gamma_second(&self, s: f64) -> f64 {
        if s <= self.theta {
            0.0
        } else if s <= 2.0 * self.theta {
            self.blend_second(s - self.theta)
        } else {
            0.0
        }
    }

    /// `f_M(z) = γ(|z|²) z`. On the disk `|z| ≤ M` this is computed by the
    /// very same operations as the plain cubic, so the two agree bitwise.
    pub fn f_m(&self, z: Complex64) -> Complex64 {
        let s = z.norm_sqr();
        if s <= self.theta {
            Cubic.value(z)
        } else {
            z * self.gamma(s)
        }
    }
}

impl PointNonlinearity for RegularizedCubic {
    fn value(&self, z: Complex64) -> Complex64 {
        self.f_m(z)
    }

    fn jacobian(&self, z: Complex64) -> [f64; 4] {
        let s = z.norm_sqr();
        if s <= self.theta {
            return Cubic.jacobian(z);
        }
        let (p, q) = (z.re, z.im);
        let g = self.gamma(s);
        let dg = 2.0 * self.gamma_prime(s);
        [g + dg * p * p, dg * p * q, dg * p * q, g + dg * q * q]
    }
}

/// Which statement a sample violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    IdentityOnDisk,
    Positivity,
    Growth,
    Lipschitz,
    JunctionSmoothness,
    Monotonicity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyViolation {
    pub property: Property,
    pub z: Complex64,
    pub w: Complex64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub m: f64,
    pub samples: usize,
    pub seed: u64,
    pub disk_samples: usize,
    /// Largest `|f_M(z)| / (M²|z|)`; bounded by 2.
    pub max_growth_ratio: f64,
    /// Largest `|f_M(z) − f_M(w)| / (M²|z − w|)`; bounded by 10.
    pub max_lipschitz_ratio: f64,
    /// Largest mismatch of value/slope/curvature of the pieces of γ at the
    /// two junctions, in units of θ, 1 and 1/θ respectively.
    pub max_junction_defect: f64,
    pub violations: Vec<PropertyViolation>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, property: Property) -> usize {
        self.violations.iter().filter(|v| v.property == property).count()
    }
}

/// Junction tolerance for the C² check of γ.
pub const JUNCTION_TOL: f64 = 1e-9;

/// Relative rounding slack for the inequality bounds.
const ROUNDING: f64 = 1e-12;

/// Sample `n_samples` pairs `(z, w)` with `|z|, |w| ≤ 4M` and check the
/// truncation properties; also checks C² continuity of γ at both junctions
/// and monotonicity of γ on a grid of `[0, 3θ]`.
pub fn verify_properties(m: f64, n_samples: usize, seed: u64) -> Result<PropertyReport> {
    if n_samples == 0 {
        return Err(Error::param("samples", "must be at least 1"));
    }
    let reg = RegularizedCubic::new(m)?;
    let theta = reg.theta();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = 4.0 * m;
    let sample_disk = |rng: &mut ChaCha8Rng| {
        let r = radius * rng.gen::<f64>().sqrt();
        Complex64::from_polar(r, 2.0 * PI * rng.gen::<f64>())
    };

    let mut report = PropertyReport {
        m,
        samples: n_samples,
        seed,
        disk_samples: 0,
        max_growth_ratio: 0.0,
        max_lipschitz_ratio: 0.0,
        max_junction_defect: 0.0,
        violations: Vec::new(),
    };
    let flag = |report: &mut PropertyReport, property, z, w, value| {
        report.violations.push(PropertyViolation { property, z, w, value });
    };

    for k in 0..n_samples {
        let z = sample_disk(&mut rng);
        // every other pair is a close neighbour to probe local slopes
        let w = if k % 2 == 0 {
            sample_disk(&mut rng)
        } else {
            let dz = Complex64::from_polar(1e-3 * m * rng.gen::<f64>(), 2.0 * PI * rng.gen::<f64>());
            let w = z + dz;
            if w.norm() <= radius { w } else { z - dz }
        };
        let fz = reg.f_m(z);
        let fw = reg.f_m(w);

        if z.norm() <= m {
            report.disk_samples += 1;
            if fz != Cubic.value(z) {
                flag(&mut report, Property::IdentityOnDisk, z, w, (fz - Cubic.value(z)).norm());
            }
        }
        let pos = (fz * z.conj()).re;
        if pos < 0.0 {
            flag(&mut report, Property::Positivity, z, w, pos);
        }
        if z.norm() > 0.0 {
            let ratio = fz.norm() / (theta * z.norm());
            report.max_growth_ratio = report.max_growth_ratio.max(ratio);
            if ratio > 2.0 * (1.0 + ROUNDING) {
                flag(&mut report, Property::Growth, z, w, ratio);
            }
        }
        let dist = (z - w).norm();
        if dist > 0.0 {
            let ratio = (fz - fw).norm() / (theta * dist);
            report.max_lipschitz_ratio = report.max_lipschitz_ratio.max(ratio);
            if ratio > 10.0 * (1.0 + ROUNDING) {
                flag(&mut report, Property::Lipschitz, z, w, ratio);
            }
        }
    }

    let zero = Complex64::new(0.0, 0.0);
    let junctions = [
        // s = θ: inner piece s ↦ s, outer piece g(s − θ) + θ
        (
            (theta - (reg.blend(0.0) + theta)) / theta,
            1.0 - reg.blend_prime(0.0),
            (0.0 - reg.blend_second(0.0)) * theta,
        ),
        // s = 2θ: g(θ) + θ against the constant 2θ
        (
            (reg.blend(theta) + theta - 2.0 * theta) / theta,
            reg.blend_prime(theta),
            reg.blend_second(theta) * theta,
        ),
    ];
    for (s, (dv, d1, d2)) in [theta, 2.0 * theta].into_iter().zip(junctions) {
        let worst = dv.abs().max(d1.abs()).max(d2.abs());
        report.max_junction_defect = report.max_junction_defect.max(worst);
        if worst > JUNCTION_TOL {
            flag(&mut report, Property::JunctionSmoothness, Complex64::new(s.sqrt(), 0.0), zero, worst);
        }
    }

    let n_grid = 30_000;
    let mut prev = reg.gamma(0.0);
    for i in 1..=n_grid {
        let s = 3.0 * theta * i as f64 / n_grid as f64;
        let g = reg.gamma(s);
        if g < prev {
            flag(&mut report, Property::Monotonicity, Complex64::new(s.sqrt(), 0.0), zero, prev - g);
        }
        prev = g;
    }
    Ok(report)
}

/// Practical surrogate for the cutoff: `safety · max_n (sup|u_h^n| + sup|∇u_h^n|)`.
pub fn estimate_m(space: &FeSpace, trajectory: &[ComplexField], safety: f64) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if !(safety > 0.0) {
        return Err(Error::param("safety", "must be > 0"));
    }
    let mut sup = 0.0f64;
    for u in trajectory {
        space.check_len(u)?;
        sup = sup.max(u.sup_norm() + space.gradient_sup(u));
    }
    let m = safety * sup;
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::param("M", format!("estimated cutoff {m} is not positive")));
    }
    Ok(m)
}
