//! P1 assembly of the sesquilinear forms, the cubic term and its Newton
//! Jacobian, nodal interpolation and the L² / Ritz projections.
//!
//! Matrix convention: row `i` is the test function, column `j` the trial
//! function, i.e. `A[i][j] = a(λ_j, λ_i)`, so that `(A u)_i = a(u_h, λ_i)`.
//! Elements are accumulated sequentially in index order.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mesh::{ElementGeometry, Mesh, Point};
use crate::model::{inverse2, sqrt_spd, Coefficients};
use crate::quadrature::{QuadratureDegree, QuadratureRule};
use crate::sparse::{solve_complex, BlockSparse, SparseComplexMatrix, SparsityPattern};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Numbering of the unknowns. Boundary nodes carry no dof under the
/// homogeneous Dirichlet condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    interior_nodes: Vec<usize>,
    node_to_dof: Vec<Option<usize>>,
}

impl DofMap {
    /// One dof per interior node (homogeneous Dirichlet elimination).
    pub fn dirichlet(mesh: &Mesh) -> Self {
        Self::from_filter(mesh, |i| !mesh.is_boundary(i))
    }

    /// One dof per node, no elimination.
    pub fn all_nodes(mesh: &Mesh) -> Self {
        Self::from_filter(mesh, |_| true)
    }

    fn from_filter(mesh: &Mesh, keep: impl Fn(usize) -> bool) -> Self {
        let mut interior_nodes = Vec::new();
        let mut node_to_dof = vec![None; mesh.n_nodes()];
        for (node, slot) in node_to_dof.iter_mut().enumerate() {
            if keep(node) {
                *slot = Some(interior_nodes.len());
                interior_nodes.push(node);
            }
        }
        Self {
            interior_nodes,
            node_to_dof,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.interior_nodes.len()
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    pub fn node(&self, dof: usize) -> usize {
        self.interior_nodes[dof]
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }
}

/// Coefficient vector of a P1 function, one complex value per dof.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub values: Vec<Complex64>,
    pub time: Option<f64>,
}

impl ComplexField {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self { values, time: None }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![ZERO; n])
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Interleaved `(re_0, im_0, re_1, im_1, …)`.
    pub fn to_real_split(&self) -> Vec<f64> {
        self.values.iter().flat_map(|z| [z.re, z.im]).collect()
    }

    pub fn from_real_split(x: &[f64]) -> Self {
        Self::new(x.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        Self {
            values: self.values.iter().map(|v| a * v).collect(),
            time: self.time,
        }
    }

    /// Largest nodal modulus, i.e. `‖u_h‖_{L∞}` for P1 functions.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Pointwise nonlinearity `z ↦ f(z)` together with the real Jacobian of
/// `(Re z, Im z) ↦ (Re f, Im f)`, laid out `[d_re/d_p, d_re/d_q, d_im/d_p, d_im/d_q]`.
pub trait PointNonlinearity {
    fn value(&self, z: Complex64) -> Complex64;
    fn jacobian(&self, z: Complex64) -> [f64; 4];
}

/// `f(z) = |z|² z`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cubic;

impl PointNonlinearity for Cubic {
    #[inline]
    fn value(&self, z: Complex64) -> Complex64 {
        z * z.norm_sqr()
    }

    #[inline]
    fn jacobian(&self, z: Complex64) -> [f64; 4] {
        let (p, q) = (z.re, z.im);
        let off = 2.0 * p * q;
        [3.0 * p * p + q * q, off, off, p * p + 3.0 * q * q]
    }
}

type LocalMatrix = [[Complex64; 3]; 3];

/// P1 finite-element space on a mesh with a fixed dof map and quadrature.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    dofmap: DofMap,
    pattern: Arc<SparsityPattern>,
    elements: Vec<ElementGeometry>,
    local_dofs: Vec<[Option<usize>; 3]>,
    rule: QuadratureRule,
    fine_rule: QuadratureRule,
}

impl FeSpace {
    /// Space with homogeneous Dirichlet elimination and the given rule.
    pub fn new(mesh: Arc<Mesh>, degree: QuadratureDegree) -> Result<Self> {
        let dofmap = DofMap::dirichlet(&mesh);
        Self::with_dofmap(mesh, dofmap, degree)
    }

    pub fn with_dofmap(mesh: Arc<Mesh>, dofmap: DofMap, degree: QuadratureDegree) -> Result<Self> {
        if dofmap.n_dofs() == 0 {
            return Err(Error::InvalidMesh("mesh has no interior nodes".into()));
        }
        let elements: Vec<_> = mesh.elements().collect();
        let local_dofs: Vec<[Option<usize>; 3]> = mesh
            .triangles()
            .iter()
            .map(|t| [dofmap.dof(t[0]), dofmap.dof(t[1]), dofmap.dof(t[2])])
            .collect();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); dofmap.n_dofs()];
        for ld in &local_dofs {
            for a in ld.iter().flatten() {
                rows[*a].extend(ld.iter().flatten());
            }
        }
        let pattern = Arc::new(SparsityPattern::from_rows(rows)?);
        Ok(Self {
            mesh,
            dofmap,
            pattern,
            elements,
            local_dofs,
            rule: degree.rule(),
            fine_rule: QuadratureRule::degree6(),
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dofmap(&self) -> &DofMap {
        &self.dofmap
    }

    pub fn n_dofs(&self) -> usize {
        self.dofmap.n_dofs()
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn zero_field(&self) -> ComplexField {
        ComplexField::zeros(self.n_dofs())
    }

    pub(crate) fn check_len(&self, u: &ComplexField) -> Result<()> {
        if u.len() != self.n_dofs() {
            return Err(Error::LengthMismatch {
                expected: self.n_dofs(),
                found: u.len(),
            });
        }
        Ok(())
    }

    fn assemble(&self, mut local: impl FnMut(&ElementGeometry, &mut LocalMatrix)) -> SparseComplexMatrix {
        let mut m = SparseComplexMatrix::zeros(self.pattern.clone());
        for (geo, dofs) in self.elements.iter().zip(&self.local_dofs) {
            let mut lm = [[ZERO; 3]; 3];
            local(geo, &mut lm);
            for (a, da) in dofs.iter().enumerate() {
                let Some(i) = *da else { continue };
                for (b, db) in dofs.iter().enumerate() {
                    if let Some(j) = *db {
                        m.add(i, j, lm[a][b]);
                    }
                }
            }
        }
        m
    }

    /// `M[i][j] = ∫ λ_j λ_i`.
    pub fn assemble_mass(&self) -> SparseComplexMatrix {
        self.assemble(|geo, lm| {
            for (bary, w) in self.rule.iter() {
                let wa = w * geo.area;
                for a in 0..3 {
                    for b in 0..3 {
                        lm[a][b] += wa * bary[a] * bary[b];
                    }
                }
            }
        })
    }

    /// Diffusion part only, `∫ A∇λ_j·∇λ_i`.
    pub fn assemble_stiffness(&self, coeffs: &Coefficients) -> SparseComplexMatrix {
        self.assemble(|geo, lm| {
            for (bary, w) in self.rule.iter() {
                let wa = w * geo.area;
                let a_mat = coeffs.diffusion(geo.point(bary));
                for a in 0..3 {
                    for b in 0..3 {
                        lm[a][b] += wa * a_grad_dot(&a_mat, &geo.grads[b], &geo.grads[a]);
                    }
                }
            }
        })
    }

    /// `⟨L λ_j, λ_i⟩ = ∫ A∇λ_j·∇λ_i + i (b·∇λ_j) λ_i + c λ_j λ_i`.
    pub fn assemble_l(&self, coeffs: &Coefficients) -> SparseComplexMatrix {
        self.assemble(|geo, lm| {
            for (bary, w) in self.rule.iter() {
                let wa = w * geo.area;
                let p = geo.point(bary);
                let a_mat = coeffs.diffusion(p);
                let drift = coeffs.drift(p);
                let c = coeffs.potential(p);
                for a in 0..3 {
                    for b in 0..3 {
                        let b_grad = drift[0] * geo.grads[b][0] + drift[1] * geo.grads[b][1];
                        let re = a_grad_dot(&a_mat, &geo.grads[b], &geo.grads[a]) + c * bary[b] * bary[a];
                        lm[a][b] += wa * Complex64::new(re, b_grad * bary[a]);
                    }
                }
            }
        })
    }

    /// Completed-square scalar product
    /// `∫ (A^{1/2}∇v − ½i A^{-1/2} b v)·conj(…) + (c − ¼|A^{-1/2}b|²) v w̄`.
    ///
    /// Logs a warning when `c − ¼|A^{-1/2}b|²` is negative at some
    /// quadrature point (the matrix may then lose definiteness).
    pub fn assemble_e(&self, coeffs: &Coefficients) -> SparseComplexMatrix {
        let mut worst = f64::INFINITY;
        let m = self.assemble(|geo, lm| {
            for (bary, w) in self.rule.iter() {
                let wa = w * geo.area;
                let p = geo.point(bary);
                let a_mat = coeffs.diffusion(p);
                let drift = coeffs.drift(p);
                let quarter = 0.25 * coeffs.drift_energy_density(p);
                let reduced = coeffs.potential(p) - quarter;
                worst = worst.min(reduced);
                for a in 0..3 {
                    let bga = drift[0] * geo.grads[a][0] + drift[1] * geo.grads[a][1];
                    for b in 0..3 {
                        let bgb = drift[0] * geo.grads[b][0] + drift[1] * geo.grads[b][1];
                        let square = a_grad_dot(&a_mat, &geo.grads[b], &geo.grads[a]) + quarter * bary[b] * bary[a];
                        let cross = 0.5 * (bgb * bary[a] - bary[b] * bga);
                        lm[a][b] += wa * Complex64::new(square + reduced * bary[b] * bary[a], cross);
                    }
                }
            }
        });
        if worst < 0.0 {
            log::warn!("c - |A^(-1/2) b|^2 / 4 reaches {worst:.4e} < 0; the energy form may be indefinite");
        }
        m
    }

    /// `∫ κ λ_j λ_i`.
    pub fn assemble_kappa(&self, coeffs: &Coefficients) -> SparseComplexMatrix {
        if coeffs.kappa_is_zero() {
            return SparseComplexMatrix::zeros(self.pattern.clone());
        }
        self.assemble(|geo, lm| {
            for (bary, w) in self.rule.iter() {
                let wk = coeffs.kappa(geo.point(bary)) * (w * geo.area);
                for a in 0..3 {
                    for b in 0..3 {
                        lm[a][b] += wk * (bary[a] * bary[b]);
                    }
                }
            }
        })
    }

    /// Element-local coefficients of `u` (zero on boundary nodes).
    #[inline]
    fn local_values(&self, u: &ComplexField, k: usize) -> [Complex64; 3] {
        let d = &self.local_dofs[k];
        [
            d[0].map_or(ZERO, |i| u.values[i]),
            d[1].map_or(ZERO, |i| u.values[i]),
            d[2].map_or(ZERO, |i| u.values[i]),
        ]
    }

    #[inline]
    fn eval_local(vals: &[Complex64; 3], bary: &[f64; 3]) -> Complex64 {
        vals[0] * bary[0] + vals[1] * bary[1] + vals[2] * bary[2]
    }

    fn local_gradient(vals: &[Complex64; 3], geo: &ElementGeometry) -> [Complex64; 2] {
        let mut g = [ZERO; 2];
        for a in 0..3 {
            g[0] += vals[a] * geo.grads[a][0];
            g[1] += vals[a] * geo.grads[a][1];
        }
        g
    }

    /// `r_i = β ∫ f(u_h) λ_i` for a pointwise nonlinearity `f`.
    pub fn nonlinear_residual(&self, u: &ComplexField, beta: f64, nl: &impl PointNonlinearity) -> Vec<Complex64> {
        let mut r = vec![ZERO; self.n_dofs()];
        if beta == 0.0 {
            return r;
        }
        for (k, (geo, dofs)) in self.elements.iter().zip(&self.local_dofs).enumerate() {
            let vals = self.local_values(u, k);
            let mut local = [ZERO; 3];
            for (bary, w) in self.rule.iter() {
                let f = nl.value(Self::eval_local(&vals, bary)) * (beta * w * geo.area);
                for a in 0..3 {
                    local[a] += f * bary[a];
                }
            }
            for (a, d) in dofs.iter().enumerate() {
                if let Some(i) = *d {
                    r[i] += local[a];
                }
            }
        }
        r
    }

    /// `r_i = β ∫ |u_h|² u_h λ_i`.
    pub fn cubic_residual(&self, u: &ComplexField, beta: f64) -> Vec<Complex64> {
        self.nonlinear_residual(u, beta, &Cubic)
    }

    /// Real 2×2-block Jacobian of `(Re u, Im u) ↦ (Re r, Im r)`.
    pub fn nonlinear_jacobian(&self, u: &ComplexField, beta: f64, nl: &impl PointNonlinearity) -> BlockSparse {
        let mut jac = BlockSparse::zeros(self.pattern.clone());
        if beta == 0.0 {
            return jac;
        }
        let blocks = jac.blocks_mut();
        for (k, (geo, dofs)) in self.elements.iter().zip(&self.local_dofs).enumerate() {
            let vals = self.local_values(u, k);
            let mut local = [[[0.0; 4]; 3]; 3];
            for (bary, w) in self.rule.iter() {
                let d = nl.jacobian(Self::eval_local(&vals, bary));
                let s = beta * w * geo.area;
                for a in 0..3 {
                    for b in 0..3 {
                        let f = s * bary[a] * bary[b];
                        for r in 0..4 {
                            local[a][b][r] += f * d[r];
                        }
                    }
                }
            }
            for (a, da) in dofs.iter().enumerate() {
                let Some(i) = *da else { continue };
                for (b, db) in dofs.iter().enumerate() {
                    let Some(j) = *db else { continue };
                    let slot = self.pattern.find(i, j).expect("element pair in pattern");
                    for r in 0..4 {
                        blocks[slot][r] += local[a][b][r];
                    }
                }
            }
        }
        jac
    }

    pub fn cubic_jacobian(&self, u: &ComplexField, beta: f64) -> BlockSparse {
        self.nonlinear_jacobian(u, beta, &Cubic)
    }

    /// `∫ |u_h|⁴`, exact for P1 with the degree-4 rule.
    pub fn quartic_integral(&self, u: &ComplexField) -> f64 {
        let mut total = 0.0;
        for (k, geo) in self.elements.iter().enumerate() {
            let vals = self.local_values(u, k);
            for (bary, w) in self.rule.iter() {
                let s = Self::eval_local(&vals, bary).norm_sqr();
                total += w * geo.area * s * s;
            }
        }
        total
    }

    /// Nodal interpolant; boundary values are implicitly zero.
    pub fn interpolate(&self, f: impl Fn(Point) -> Complex64) -> ComplexField {
        let nodes = self.mesh.nodes();
        ComplexField::new(self.dofmap.interior_nodes().iter().map(|&n| f(nodes[n])).collect())
    }

    /// `∫ f λ_i` with the degree-6 rule.
    pub fn load(&self, f: impl Fn(Point) -> Complex64) -> Vec<Complex64> {
        let mut r = vec![ZERO; self.n_dofs()];
        for (geo, dofs) in self.elements.iter().zip(&self.local_dofs) {
            for (bary, w) in self.fine_rule.iter() {
                let fv = f(geo.point(bary)) * (w * geo.area);
                for (a, d) in dofs.iter().enumerate() {
                    if let Some(i) = *d {
                        r[i] += fv * bary[a];
                    }
                }
            }
        }
        r
    }

    /// `⟨L f, λ_i⟩` for a smooth `f` with known gradient.
    pub fn l_form_load(
        &self,
        f: impl Fn(Point) -> Complex64,
        grad_f: impl Fn(Point) -> [Complex64; 2],
        coeffs: &Coefficients,
    ) -> Vec<Complex64> {
        let mut r = vec![ZERO; self.n_dofs()];
        for (geo, dofs) in self.elements.iter().zip(&self.local_dofs) {
            for (bary, w) in self.fine_rule.iter() {
                let p = geo.point(bary);
                let wa = w * geo.area;
                let fv = f(p);
                let g = grad_f(p);
                let a_mat = coeffs.diffusion(p);
                let drift = coeffs.drift(p);
                let ag = [
                    g[0] * a_mat[0][0] + g[1] * a_mat[0][1],
                    g[0] * a_mat[1][0] + g[1] * a_mat[1][1],
                ];
                let bg = g[0] * drift[0] + g[1] * drift[1];
                for (a, d) in dofs.iter().enumerate() {
                    if let Some(i) = *d {
                        let grad_term = ag[0] * geo.grads[a][0] + ag[1] * geo.grads[a][1];
                        r[i] += wa * (grad_term + I * bg * bary[a] + coeffs.potential(p) * fv * bary[a]);
                    }
                }
            }
        }
        r
    }

    /// L²-projection onto the space.
    pub fn l2_project(&self, f: impl Fn(Point) -> Complex64) -> Result<ComplexField> {
        let m = self.assemble_mass();
        Ok(ComplexField::new(solve_complex(&m, &self.load(f))?))
    }

    /// Ritz projection associated with the L-form (κ excluded).
    pub fn ritz_project(
        &self,
        f: impl Fn(Point) -> Complex64,
        grad_f: impl Fn(Point) -> [Complex64; 2],
        coeffs: &Coefficients,
    ) -> Result<ComplexField> {
        let l = self.assemble_l(coeffs);
        let rhs = self.l_form_load(f, grad_f, coeffs);
        Ok(ComplexField::new(solve_complex(&l, &rhs)?))
    }

    /// Values at every mesh node, zero on eliminated boundary nodes.
    pub fn nodal_values(&self, u: &ComplexField) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.mesh.n_nodes()];
        for (dof, &node) in self.dofmap.interior_nodes().iter().enumerate() {
            out[node] = u.values[dof];
        }
        out
    }

    /// Inverse of [`FeSpace::nodal_values`]; boundary entries are dropped.
    pub fn from_nodal_values(&self, nodal: &[Complex64]) -> Result<ComplexField> {
        if nodal.len() != self.mesh.n_nodes() {
            return Err(Error::LengthMismatch {
                expected: self.mesh.n_nodes(),
                found: nodal.len(),
            });
        }
        Ok(ComplexField::new(
            self.dofmap.interior_nodes().iter().map(|&n| nodal[n]).collect(),
        ))
    }

    /// Largest elementwise `|∇u_h|` (Euclidean norm of the complex gradient).
    pub fn gradient_sup(&self, u: &ComplexField) -> f64 {
        let mut sup = 0.0f64;
        for (k, geo) in self.elements.iter().enumerate() {
            let g = Self::local_gradient(&self.local_values(u, k), geo);
            sup = sup.max((g[0].norm_sqr() + g[1].norm_sqr()).sqrt());
        }
        sup
    }

    /// `‖u_h − u‖_{L²}` with the degree-6 rule.
    pub fn l2_error(&self, u: &ComplexField, exact: impl Fn(Point) -> Complex64) -> f64 {
        let mut total = 0.0;
        for (k, geo) in self.elements.iter().enumerate() {
            let vals = self.local_values(u, k);
            for (bary, w) in self.fine_rule.iter() {
                let e = Self::eval_local(&vals, bary) - exact(geo.point(bary));
                total += w * geo.area * e.norm_sqr();
            }
        }
        total.sqrt()
    }

    /// `‖u_h − u‖_E` with the degree-6 rule, from the completed-square
    /// integrand.
    pub fn energy_error(
        &self,
        u: &ComplexField,
        exact: impl Fn(Point) -> Complex64,
        grad_exact: impl Fn(Point) -> [Complex64; 2],
        coeffs: &Coefficients,
    ) -> f64 {
        let mut total = 0.0;
        for (k, geo) in self.elements.iter().enumerate() {
            let vals = self.local_values(u, k);
            let gh = Self::local_gradient(&vals, geo);
            for (bary, w) in self.fine_rule.iter() {
                let p = geo.point(bary);
                let e = Self::eval_local(&vals, bary) - exact(p);
                let ge = grad_exact(p);
                let grad_e = [gh[0] - ge[0], gh[1] - ge[1]];
                total += w * geo.area * energy_density(coeffs, p, e, grad_e);
            }
        }
        total.max(0.0).sqrt()
    }

    /// `(u, u)_E` evaluated by direct quadrature of the completed-square
    /// integrand, independent of any assembled matrix.
    pub fn energy_norm_sq_by_quadrature(&self, u: &ComplexField, coeffs: &Coefficients) -> f64 {
        let mut total = 0.0;
        for (k, geo) in self.elements.iter().enumerate() {
            let vals = self.local_values(u, k);
            let g = Self::local_gradient(&vals, geo);
            for (bary, w) in self.fine_rule.iter() {
                let p = geo.point(bary);
                total += w * geo.area * energy_density(coeffs, p, Self::eval_local(&vals, bary), g);
            }
        }
        total
    }

    /// `∫ Re κ |u_h|²` by direct quadrature.
    pub fn kappa_energy_by_quadrature(&self, u: &ComplexField, coeffs: &Coefficients) -> f64 {
        if coeffs.kappa_is_zero() {
            return 0.0;
        }
        let mut total = 0.0;
        for (k, geo) in self.elements.iter().enumerate() {
            let vals = self.local_values(u, k);
            for (bary, w) in self.fine_rule.iter() {
                let p = geo.point(bary);
                total += w * geo.area * coeffs.kappa(p).re * Self::eval_local(&vals, bary).norm_sqr();
            }
        }
        total
    }
}

/// `A∇λ_b · ∇λ_a`.
#[inline]
fn a_grad_dot(a: &[[f64; 2]; 2], gb: &[f64; 2], ga: &[f64; 2]) -> f64 {
    (a[0][0] * gb[0] + a[0][1] * gb[1]) * ga[0] + (a[1][0] * gb[0] + a[1][1] * gb[1]) * ga[1]
}

/// `|A^{1/2}∇v − ½i A^{-1/2} b v|² + (c − ¼|A^{-1/2}b|²)|v|²` at one point.
fn energy_density(coeffs: &Coefficients, p: Point, v: Complex64, grad_v: [Complex64; 2]) -> f64 {
    let a_mat = coeffs.diffusion(p);
    let sqrt_a = sqrt_spd(&a_mat);
    let inv_sqrt_a = inverse2(&sqrt_a);
    let drift = coeffs.drift(p);
    let mut sq = 0.0;
    for r in 0..2 {
        let agrad = sqrt_a[r][0] * grad_v[0] + sqrt_a[r][1] * grad_v[1];
        let ab = inv_sqrt_a[r][0] * drift[0] + inv_sqrt_a[r][1] * drift[1];
        sq += (agrad - 0.5 * I * ab * v).norm_sqr();
    }
    let quarter = 0.25 * coeffs.drift_energy_density(p);
    sq + (coeffs.potential(p) - quarter) * v.norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Rect;
    use crate::model::gpe_rotating;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn reference_triangle_space() -> FeSpace {
        let mesh = Mesh::from_parts(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let dm = DofMap::all_nodes(&mesh);
        FeSpace::with_dofmap(Arc::new(mesh), dm, QuadratureDegree::Four).unwrap()
    }

    fn unit_space(n: usize, all_nodes: bool) -> FeSpace {
        let mesh = Mesh::rectangle(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), n, n).unwrap();
        let dm = if all_nodes { DofMap::all_nodes(&mesh) } else { DofMap::dirichlet(&mesh) };
        FeSpace::with_dofmap(Arc::new(mesh), dm, QuadratureDegree::Four).unwrap()
    }

    #[test]
    fn dofmap_roundtrip() {
        let mesh = Mesh::rectangle(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), 4, 3).unwrap();
        let dm = DofMap::dirichlet(&mesh);
        assert_eq!(dm.n_dofs(), 3 * 2);
        for d in 0..dm.n_dofs() {
            assert_eq!(dm.dof(dm.node(d)), Some(d));
        }
        for b in mesh.boundary_nodes() {
            assert_eq!(dm.dof(b), None);
        }
    }

    #[test]
    fn reference_mass_matrix() {
        let m = reference_triangle_space().assemble_mass().to_dense();
        for a in 0..3 {
            for b in 0..3 {
                let expected = if a == b { 2.0 } else { 1.0 } / 24.0;
                assert!((m[a][b] - c(expected)).norm() < 1e-16);
            }
        }
    }

    #[test]
    fn reference_stiffness_matrix() {
        let coeffs = Coefficients::new(0.0).unwrap();
        let l = reference_triangle_space().assemble_l(&coeffs).to_dense();
        let expected = [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]];
        for a in 0..3 {
            for b in 0..3 {
                assert!((l[a][b] - c(0.5 * expected[a][b])).norm() < 1e-15);
            }
        }
        let half = reference_triangle_space().assemble_l(&coeffs.clone().with_scalar_diffusion(0.5));
        let full = reference_triangle_space().assemble_l(&coeffs);
        for (h, f) in half.values().iter().zip(full.values()) {
            assert!((h * 2.0 - f).norm() < 1e-15);
        }
    }

    #[test]
    fn mass_total_and_symmetry() {
        let s = unit_space(5, true);
        let m = s.assemble_mass();
        let ones = vec![c(1.0); s.n_dofs()];
        assert!((m.quadratic_form(&ones) - c(1.0)).norm() < 1e-14);
        assert_eq!(m.hermitian_defect(), 0.0);
        assert!(m.values().iter().all(|v| v.im == 0.0));
    }

    #[test]
    fn kappa_forms() {
        let s = unit_space(4, false);
        let base = Coefficients::new(0.0).unwrap();
        assert_eq!(s.assemble_kappa(&base).max_abs(), 0.0);
        let m = s.assemble_mass();
        let one = s.assemble_kappa(&base.clone().with_kappa(|_| c(1.0)));
        assert!(one.max_abs_diff(&m) < 1e-16);
        let imag = s.assemble_kappa(&base.with_kappa(|_| Complex64::new(0.0, 1.0)));
        assert!(imag.max_abs_diff(&m.scale(I)) < 1e-16);
        // anti-Hermitian: A + Aᴴ = 0
        let anti = imag.anti_hermitian_part();
        assert!(anti.max_abs_diff(&imag) < 1e-16);
    }

    #[test]
    fn rotation_term_is_odd_in_omega() {
        let mesh = Mesh::rectangle(Rect::centered_square(1.0).unwrap(), 6, 6).unwrap();
        let s = FeSpace::new(Arc::new(mesh), QuadratureDegree::Four).unwrap();
        let plus = s.assemble_l(&gpe_rotating(0.8, |_| 1.0, 0.0).unwrap());
        let minus = s.assemble_l(&gpe_rotating(-0.8, |_| 1.0, 0.0).unwrap());
        let still = s.assemble_l(&gpe_rotating(0.0, |_| 1.0, 0.0).unwrap());
        let a_plus = plus.anti_hermitian_part();
        let a_minus = minus.anti_hermitian_part();
        assert!(a_plus.combine(c(1.0), &a_minus, c(1.0)).max_abs() < 1e-15);
        // Hermitian for divergence-free drift
        assert!(plus.hermitian_defect() < 1e-15);
        // the drift block is linear in Ω: L(Ω) − L(0) flips sign with Ω
        let d_plus = plus.combine(c(1.0), &still, c(-1.0));
        let d_minus = minus.combine(c(1.0), &still, c(-1.0));
        assert!(d_plus.combine(c(1.0), &d_minus, c(1.0)).max_abs() < 1e-15);
        assert!(d_plus.max_abs() > 1e-3);
    }

    #[test]
    fn e_form_equals_l_form_without_drift() {
        let s = unit_space(5, false);
        let coeffs = Coefficients::new(0.0).unwrap().with_potential(|p| 1.0 + p[0] * p[1]);
        let e = s.assemble_e(&coeffs);
        let l = s.assemble_l(&coeffs);
        assert!(e.max_abs_diff(&l) <= 1e-15 * l.max_abs());
    }

    #[test]
    fn cubic_residual_cases() {
        let s = unit_space(3, true);
        let zero = s.zero_field();
        assert!(s.cubic_residual(&zero, 2.0).iter().all(|v| v.norm() == 0.0));
        let c0 = Complex64::new(0.7, -0.4);
        let u = ComplexField::new(vec![c0; s.n_dofs()]);
        assert!(s.cubic_residual(&u, 0.0).iter().all(|v| v.norm() == 0.0));
        let beta = 3.0;
        let r = s.cubic_residual(&u, beta);
        let m = s.assemble_mass();
        let row_sums = m.mul_vec(&vec![c(1.0); s.n_dofs()]);
        for (ri, mi) in r.iter().zip(&row_sums) {
            let expected = c0 * (beta * c0.norm_sqr()) * mi;
            assert!((ri - expected).norm() < 1e-15);
        }
    }

    #[test]
    fn cubic_jacobian_zero_and_symmetric() {
        let s = unit_space(4, false);
        assert_eq!(s.cubic_jacobian(&s.zero_field(), 5.0).max_abs(), 0.0);
        let u = s.interpolate(|p| Complex64::new(p[0].sin(), p[1] * p[0]));
        assert!(s.cubic_jacobian(&u, 5.0).symmetry_defect() < 1e-14);
    }

    #[test]
    fn interpolation_cases() {
        let s = unit_space(2, false);
        let u = s.interpolate(|p| {
            c((std::f64::consts::PI * p[0]).sin() * (std::f64::consts::PI * p[1]).sin())
        });
        assert_eq!(u.len(), 1);
        assert!((u.values[0] - c(1.0)).norm() < 1e-15);
        assert!(s.interpolate(|_| c(0.0)).values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn l2_projection_is_identity_on_space() {
        let s = unit_space(6, false);
        let u = s.interpolate(|p| Complex64::new(p[0] * p[1], -p[0]));
        let nodal = s.nodal_values(&u);
        let mesh = s.mesh().clone();
        // evaluate u_h at arbitrary points through the element containing them
        let eval = move |p: Point| -> Complex64 {
            for (k, t) in mesh.triangles().iter().enumerate() {
                let g = mesh.element(k);
                let bary = barycentric(&g, p);
                if bary.iter().all(|&b| b >= -1e-12) {
                    return nodal[t[0]] * bary[0] + nodal[t[1]] * bary[1] + nodal[t[2]] * bary[2];
                }
            }
            unreachable!()
        };
        let p = s.l2_project(eval).unwrap();
        assert!(p.max_abs_diff(&u) < 1e-12);
    }

    fn barycentric(g: &ElementGeometry, p: Point) -> [f64; 3] {
        let v = g.vertices;
        let l1 = g.grads[1][0] * (p[0] - v[0][0]) + g.grads[1][1] * (p[1] - v[0][1]);
        let l2 = g.grads[2][0] * (p[0] - v[0][0]) + g.grads[2][1] * (p[1] - v[0][1]);
        [1.0 - l1 - l2, l1, l2]
    }

    #[test]
    fn nodal_value_roundtrip() {
        let s = unit_space(4, false);
        let u = s.interpolate(|p| Complex64::new(p[0], p[1]));
        let back = s.from_nodal_values(&s.nodal_values(&u)).unwrap();
        assert_eq!(back, u);
        assert!(s.from_nodal_values(&[c(1.0)]).is_err());
    }
}
