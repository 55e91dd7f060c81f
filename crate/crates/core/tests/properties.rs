use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use rotgpe_core::{
    gpe_rotating, harmonic_potential, ComplexField, FeSpace, Mesh, PointNonlinearity, QuadratureDegree, Rect,
    RegularizedCubic, SparseComplexMatrix, Systems,
};

const N: usize = 5;

fn space() -> FeSpace {
    let mesh = Mesh::rectangle(Rect::centered_square(2.0).unwrap(), N, N).unwrap();
    FeSpace::new(Arc::new(mesh), QuadratureDegree::Four).unwrap()
}

fn systems() -> Systems {
    Systems::new(space(), gpe_rotating(0.6, harmonic_potential(0.9, 1.1), 7.0).unwrap())
}

fn field() -> impl Strategy<Value = ComplexField> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), (N - 1) * (N - 1))
        .prop_map(|v| ComplexField::new(v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()))
}

fn add(u: &ComplexField, v: &ComplexField, s: f64) -> ComplexField {
    ComplexField::new(u.values.iter().zip(&v.values).map(|(a, b)| a + b * s).collect())
}

fn dense_diff(a: &SparseComplexMatrix, b: &SparseComplexMatrix) -> f64 {
    let (a, b) = (a.to_dense(), b.to_dense());
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mass_and_energy_are_phase_invariant(u in field(), alpha in -3.2f64..3.2) {
        let s = systems();
        let r = u.scaled(Complex64::from_polar(1.0, alpha));
        prop_assert!((s.mass_of(&r) - s.mass_of(&u)).abs() <= 1e-13 * s.mass_of(&u).max(1.0));
        prop_assert!((s.energy_of(&r) - s.energy_of(&u)).abs() <= 1e-12 * s.energy_of(&u).abs().max(1.0));
    }

    #[test]
    fn cubic_residual_is_gradient_of_quartic_energy(u in field(), v in field()) {
        let sp = space();
        let beta = 3.0;
        let r = sp.cubic_residual(&u, beta);
        let directional: f64 = r.iter().zip(&v.values).map(|(a, b)| (b.conj() * a).re).sum();
        let h = 1e-5;
        let fd = beta / 4.0 * (sp.quartic_integral(&add(&u, &v, h)) - sp.quartic_integral(&add(&u, &v, -h))) / (2.0 * h);
        prop_assert!((directional - fd).abs() <= 1e-7 * fd.abs().max(1.0), "{} vs {}", directional, fd);
    }

    #[test]
    fn cubic_jacobian_matches_central_differences(u in field(), v in field()) {
        let sp = space();
        let beta = 2.0;
        let jv = sp.cubic_jacobian(&u, beta).mul_vec(&v.to_real_split());
        let h = 1e-6;
        let rp = ComplexField::new(sp.cubic_residual(&add(&u, &v, h), beta)).to_real_split();
        let rm = ComplexField::new(sp.cubic_residual(&add(&u, &v, -h), beta)).to_real_split();
        let scale = jv.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-3);
        for i in 0..jv.len() {
            let fd = (rp[i] - rm[i]) / (2.0 * h);
            prop_assert!((jv[i] - fd).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn assembly_ignores_element_order(seed in any::<u64>()) {
        let base = Mesh::rectangle(Rect::centered_square(2.0).unwrap(), N, N).unwrap();
        let mut tris: Vec<[usize; 3]> = base.triangles().to_vec();
        // deterministic shuffle plus cyclic relabelling of local vertices
        let mut state = seed | 1;
        for i in (1..tris.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let j = (state % (i as u64 + 1)) as usize;
            tris.swap(i, j);
            let t = tris[i];
            tris[i] = match state % 3 { 0 => t, 1 => [t[1], t[2], t[0]], _ => [t[2], t[0], t[1]] };
        }
        let shuffled = Mesh::from_parts(base.nodes().to_vec(), tris, base.bounds()).unwrap();
        let coeffs = gpe_rotating(0.6, harmonic_potential(0.9, 1.1), 7.0).unwrap();
        let a = FeSpace::new(Arc::new(base), QuadratureDegree::Four).unwrap();
        let b = FeSpace::new(Arc::new(shuffled), QuadratureDegree::Four).unwrap();
        prop_assert!(dense_diff(&a.assemble_l(&coeffs), &b.assemble_l(&coeffs)) < 1e-13);
        prop_assert!(dense_diff(&a.assemble_e(&coeffs), &b.assemble_e(&coeffs)) < 1e-13);
        prop_assert!(dense_diff(&a.assemble_mass(), &b.assemble_mass()) < 1e-15);
    }

    #[test]
    fn truncated_cubic_bounds(m in 0.1f64..10.0, r in 0.0f64..5.0, phi in -3.2f64..3.2) {
        let reg = RegularizedCubic::new(m).unwrap();
        let z = Complex64::from_polar(r * m, phi);
        let f = reg.value(z);
        prop_assert!(f.norm() <= 2.0 * m * m * z.norm() * (1.0 + 1e-12));
        prop_assert!((f * z.conj()).re >= 0.0);
        let s = z.norm_sqr();
        prop_assert!(reg.gamma(s * 1.01 + 1e-12) >= reg.gamma(s));
    }
}
