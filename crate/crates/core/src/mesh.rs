//! Conforming triangulations of rectangles.
//!
//! Meshes are immutable once built. Structured meshes split every grid cell
//! along the lower-left to upper-right diagonal, so runs are reproducible
//! bit-for-bit.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        let finite = [x0, x1, y0, y1].iter().all(|v| v.is_finite());
        if !finite || x0 >= x1 || y0 >= y1 {
            return Err(Error::InvalidDomain(format!(
                "[{x0}, {x1}] x [{y0}, {y1}] is degenerate"
            )));
        }
        Ok(Self { x0, x1, y0, y1 })
    }

    /// The square `[-a, a]^2`.
    pub fn centered_square(a: f64) -> Result<Self> {
        Self::new(-a, a, -a, a)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }
}

/// Geometric data of one triangle, precomputed for assembly.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub vertices: [Point; 3],
    pub area: f64,
    /// Constant gradients of the three barycentric coordinates.
    pub grads: [[f64; 2]; 3],
}

impl ElementGeometry {
    fn new(vertices: [Point; 3]) -> Self {
        let [a, b, c] = vertices;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let area = 0.5 * det;
        let inv = 1.0 / det;
        let grads = [
            [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv],
            [(c[1] - a[1]) * inv, (a[0] - c[0]) * inv],
            [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
        ];
        Self {
            vertices,
            area,
            grads,
        }
    }

    /// Maps barycentric coordinates to a physical point.
    pub fn point(&self, bary: &[f64; 3]) -> Point {
        let v = &self.vertices;
        [
            bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
            bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
        ]
    }

    pub fn barycenter(&self) -> Point {
        self.point(&[1.0 / 3.0; 3])
    }

    pub fn edge_lengths(&self) -> [f64; 3] {
        let v = &self.vertices;
        let len = |p: Point, q: Point| (p[0] - q[0]).hypot(p[1] - q[1]);
        [len(v[1], v[2]), len(v[2], v[0]), len(v[0], v[1])]
    }

    pub fn diameter(&self) -> f64 {
        self.edge_lengths().into_iter().fold(0.0, f64::max)
    }

    pub fn inradius(&self) -> f64 {
        let perimeter: f64 = self.edge_lengths().iter().sum();
        2.0 * self.area / perimeter
    }
}

/// A conforming, positively oriented triangulation of a rectangle.
#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    h_elem: Vec<f64>,
    h_min: f64,
    h_max: f64,
    bounds: Rect,
}

impl Mesh {
    /// Structured triangulation with `(nx+1)(ny+1)` nodes; every cell is
    /// split along its lower-left to upper-right diagonal.
    pub fn rectangle(bounds: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::param("nx/ny", "cell counts must be at least 1"));
        }
        let hx = bounds.width() / nx as f64;
        let hy = bounds.height() / ny as f64;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            // Pin the last row/column to the exact bound.
            let y = if j == ny { bounds.y1 } else { bounds.y0 + j as f64 * hy };
            for i in 0..=nx {
                let x = if i == nx { bounds.x1 } else { bounds.x0 + i as f64 * hx };
                nodes.push([x, y]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Self::from_parts(nodes, triangles, bounds)
    }

    /// Builds a mesh from raw node/triangle lists, validating orientation and
    /// conformity. Boundary nodes are the endpoints of edges owned by a
    /// single triangle.
    pub fn from_parts(nodes: Vec<Point>, triangles: Vec<[usize; 3]>, bounds: Rect) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        let mut h_elem = Vec::with_capacity(triangles.len());
        for (k, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nodes.len()) {
                return Err(Error::InvalidMesh(format!("triangle {k} references a missing node")));
            }
            let geo = ElementGeometry::new([nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]]);
            if !(geo.area > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {k} has non-positive signed area {}",
                    geo.area
                )));
            }
            h_elem.push(geo.diameter());
        }

        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for (a, b) in local_edges(tri) {
                *edge_count.entry(edge_key(a, b)).or_insert(0) += 1;
            }
        }
        let mut boundary = vec![false; nodes.len()];
        for (&(a, b), &count) in &edge_count {
            match count {
                1 => {
                    boundary[a] = true;
                    boundary[b] = true;
                }
                2 => {}
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({a}, {b}) is shared by {count} triangles"
                    )))
                }
            }
        }

        let h_min = h_elem.iter().copied().fold(f64::INFINITY, f64::min);
        let h_max = h_elem.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            nodes,
            triangles,
            boundary,
            h_elem,
            h_min,
            h_max,
            bounds,
        })
    }

    /// Red refinement: each triangle is split into four congruent children
    /// through its edge midpoints.
    pub fn refine_uniform(&self) -> Self {
        let mut nodes = self.nodes.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
            *midpoint.entry(edge_key(a, b)).or_insert_with(|| {
                let (p, q) = (nodes[a], nodes[b]);
                nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = mid(a, b, &mut nodes);
            let bc = mid(b, c, &mut nodes);
            let ca = mid(c, a, &mut nodes);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        Self::from_parts(nodes, triangles, self.bounds)
            .expect("refinement of a valid mesh is valid")
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.boundary[i]).collect()
    }

    /// Spatial dimension of the mesh. Always 2.
    pub fn dimension(&self) -> usize {
        2
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    /// Diameter `h_K` (longest edge) of element `k`.
    pub fn element_diameter(&self, k: usize) -> f64 {
        self.h_elem[k]
    }

    pub fn element(&self, k: usize) -> ElementGeometry {
        let t = self.triangles[k];
        ElementGeometry::new([self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]])
    }

    pub fn elements(&self) -> impl Iterator<Item = ElementGeometry> + '_ {
        (0..self.triangles.len()).map(|k| self.element(k))
    }

    pub fn total_area(&self) -> f64 {
        self.elements().map(|e| e.area).sum()
    }

    /// `min_K diam(B_K) / diam(K)` with `B_K` the inscribed ball.
    pub fn shape_regularity(&self) -> f64 {
        self.elements()
            .map(|e| 2.0 * e.inradius() / e.diameter())
            .fold(f64::INFINITY, f64::min)
    }

    /// Inverse-inequality factor `|ln h_min|^{1/2}` (d = 2).
    pub fn log_factor(&self, dim: usize) -> Result<f64> {
        log_factor(self.h_min, dim)
    }

    /// Writes the bare geometry as a legacy-VTK unstructured grid.
    pub fn write_vtk(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        crate::diagnostics::write_vtk(&mut out, self, &[])?;
        out.flush()?;
        Ok(())
    }
}

/// `ℓ_h = |ln h_min|^{1/2}` for d = 2.
pub fn log_factor(h_min: f64, dim: usize) -> Result<f64> {
    match dim {
        2 => {
            if !(h_min > 0.0) || h_min >= 1.0 {
                return Err(Error::LogFactorDomain(h_min));
            }
            Ok(h_min.ln().abs().sqrt())
        }
        d => Err(Error::UnsupportedDimension(d)),
    }
}

fn local_edges(tri: &[usize; 3]) -> [(usize, usize); 3] {
    [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])]
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}
