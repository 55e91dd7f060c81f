//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use rotgpe_core::{
    gpe_rotating, harmonic_potential, Complex64, ComplexField, FeSpace, Mesh, QuadratureDegree, Rect, Systems,
};

/// Anisotropic rotating trap on `[-6, 6]²` with an `n × n` mesh.
pub fn rotating_systems(n: usize) -> Systems {
    let mesh = Mesh::rectangle(Rect::centered_square(6.0).expect("valid"), n, n).expect("valid mesh");
    let space = FeSpace::new(Arc::new(mesh), QuadratureDegree::Four).expect("valid space");
    Systems::new(space, gpe_rotating(0.8, harmonic_potential(0.9, 1.1), 100.0).expect("valid coefficients"))
}

/// Unit-mass Gaussian with a vortex-like phase.
pub fn initial_field(systems: &Systems) -> ComplexField {
    let u = systems.space().interpolate(|p| {
        let g = (-(p[0] * p[0] + p[1] * p[1]) / 2.0).exp();
        Complex64::new(g * (1.0 + 0.3 * p[0]), 0.3 * g * p[1])
    });
    let m = systems.mass_of(&u);
    u.scaled(Complex64::new(1.0 / m, 0.0))
}
