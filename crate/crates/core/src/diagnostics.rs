//! Mass, energy, CSV diagnostics and legacy-VTK / CSV field export.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::assembly::{ComplexField, FeSpace};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::model::Coefficients;
use crate::sparse::SparseComplexMatrix;

/// `‖u_h‖_{L²} = (uᴴMu)^{1/2}`.
pub fn mass(u: &ComplexField, mass_matrix: &SparseComplexMatrix) -> f64 {
    mass_matrix.quadratic_form(&u.values).re.max(0.0).sqrt()
}

/// `Re(uᴴEu) + Re(uᴴKu) + (β/2)∫|u_h|⁴`.
pub fn energy(
    u: &ComplexField,
    e_matrix: &SparseComplexMatrix,
    kappa_matrix: &SparseComplexMatrix,
    space: &FeSpace,
    beta: f64,
) -> f64 {
    let quartic = if beta == 0.0 { 0.0 } else { 0.5 * beta * space.quartic_integral(u) };
    e_matrix.quadratic_form(&u.values).re + kappa_matrix.quadratic_form(&u.values).re + quartic
}

/// Same functional, with the quadratic part integrated directly from the
/// completed-square integrand instead of an assembled matrix.
pub fn energy_by_quadrature(u: &ComplexField, space: &FeSpace, coeffs: &Coefficients) -> f64 {
    let beta = coeffs.beta();
    space.energy_norm_sq_by_quadrature(u, coeffs)
        + space.kappa_energy_by_quadrature(u, coeffs)
        + 0.5 * beta * space.quartic_integral(u)
}

/// One row of the diagnostics stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub newton_iters: usize,
    pub residual: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str = "step,t,mass,energy,newton_iters,residual";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            self.step, self.t, self.mass, self.energy, self.newton_iters, self.residual
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(Error::Parse(format!("expected 6 columns, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s}: {e}")));
        Ok(Self {
            step: int(f[0])?,
            t: num(f[1])?,
            mass: num(f[2])?,
            energy: num(f[3])?,
            newton_iters: int(f[4])?,
            residual: num(f[5])?,
        })
    }
}

/// Receives diagnostics (and the current field) at the recording cadence.
pub trait DiagnosticsSink {
    fn record(&mut self, record: &DiagnosticsRecord, field: &ComplexField) -> Result<()>;
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl DiagnosticsSink for NullSink {
    fn record(&mut self, _: &DiagnosticsRecord, _: &ComplexField) -> Result<()> {
        Ok(())
    }
}

impl DiagnosticsSink for Vec<DiagnosticsRecord> {
    fn record(&mut self, record: &DiagnosticsRecord, _: &ComplexField) -> Result<()> {
        self.push(*record);
        Ok(())
    }
}

/// Streams records as CSV, header first.
pub struct CsvSink<W: Write> {
    writer: W,
    header_written: bool,
}

impl<W: Write> CsvSink<W> {
    pub fn new(writer: W) -> Self {
        Self {
            writer,
            header_written: false,
        }
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write> DiagnosticsSink for CsvSink<W> {
    fn record(&mut self, record: &DiagnosticsRecord, _: &ComplexField) -> Result<()> {
        if !self.header_written {
            writeln!(self.writer, "{}", DiagnosticsRecord::CSV_HEADER)?;
            self.header_written = true;
        }
        writeln!(self.writer, "{}", record.to_csv_row())?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Reads a diagnostics CSV written by [`CsvSink`].
pub fn read_diagnostics_csv(path: impl AsRef<Path>) -> Result<Vec<DiagnosticsRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if k == 0 {
            if line.trim() != DiagnosticsRecord::CSV_HEADER {
                return Err(Error::Parse(format!("unexpected header `{line}`")));
            }
            continue;
        }
        if !line.trim().is_empty() {
            out.push(DiagnosticsRecord::from_csv_row(&line)?);
        }
    }
    Ok(out)
}

/// Legacy-VTK ASCII unstructured grid with scalar point data.
pub fn write_vtk(out: &mut impl Write, mesh: &Mesh, point_data: &[(&str, Vec<f64>)]) -> io::Result<()> {
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "rotgpe field")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.n_nodes())?;
    for p in mesh.nodes() {
        writeln!(out, "{:.16e} {:.16e} 0", p[0], p[1])?;
    }
    let nt = mesh.n_triangles();
    writeln!(out, "CELLS {} {}", nt, 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(out, "5")?;
    }
    if !point_data.is_empty() {
        writeln!(out, "POINT_DATA {}", mesh.n_nodes())?;
        for (name, values) in point_data {
            assert_eq!(values.len(), mesh.n_nodes(), "point data `{name}` has wrong length");
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in values {
                writeln!(out, "{v:.16e}")?;
            }
        }
    }
    Ok(())
}

/// Writes `density`, `re_u` and `im_u` at every node (zero on the boundary).
pub fn export_vtk(u: &ComplexField, space: &FeSpace, path: impl AsRef<Path>) -> Result<()> {
    space.check_len(u)?;
    let nodal = space.nodal_values(u);
    let data = [
        ("density", nodal.iter().map(|z| z.norm_sqr()).collect()),
        ("re_u", nodal.iter().map(|z| z.re).collect()),
        ("im_u", nodal.iter().map(|z| z.im).collect()),
    ];
    let mut out = BufWriter::new(File::create(path)?);
    write_vtk(&mut out, space.mesh(), &data)?;
    out.flush()?;
    Ok(())
}

/// Contents of a legacy-VTK file written by [`write_vtk`].
#[derive(Debug, Clone, PartialEq)]
pub struct VtkData {
    pub points: Vec<Point>,
    pub cells: Vec<[usize; 3]>,
    pub point_data: Vec<(String, Vec<f64>)>,
}

impl VtkData {
    pub fn scalars(&self, name: &str) -> Option<&[f64]> {
        self.point_data.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

pub fn read_vtk(path: impl AsRef<Path>) -> Result<VtkData> {
    let text = std::fs::read_to_string(path)?;
    let mut tokens = text.split_whitespace().peekable();
    let bad = |what: &str| Error::Parse(format!("vtk: {what}"));
    let num = |s: Option<&str>| -> Result<f64> {
        s.ok_or_else(|| bad("unexpected end of file"))?
            .parse::<f64>()
            .map_err(|e| bad(&e.to_string()))
    };
    let int = |s: Option<&str>| -> Result<usize> {
        s.ok_or_else(|| bad("unexpected end of file"))?
            .parse::<usize>()
            .map_err(|e| bad(&e.to_string()))
    };
    let mut data = VtkData {
        points: Vec::new(),
        cells: Vec::new(),
        point_data: Vec::new(),
    };
    let mut n_points = 0;
    while let Some(tok) = tokens.next() {
        match tok {
            "POINTS" => {
                n_points = int(tokens.next())?;
                tokens.next();
                for _ in 0..n_points {
                    let x = num(tokens.next())?;
                    let y = num(tokens.next())?;
                    num(tokens.next())?;
                    data.points.push([x, y]);
                }
            }
            "CELLS" => {
                let n = int(tokens.next())?;
                tokens.next();
                for _ in 0..n {
                    if int(tokens.next())? != 3 {
                        return Err(bad("only triangles are supported"));
                    }
                    data.cells.push([int(tokens.next())?, int(tokens.next())?, int(tokens.next())?]);
                }
            }
            "SCALARS" => {
                let name = tokens.next().ok_or_else(|| bad("missing scalar name"))?.to_string();
                // type, optional component count, then LOOKUP_TABLE <name>
                while let Some(t) = tokens.next() {
                    if t == "LOOKUP_TABLE" {
                        tokens.next();
                        break;
                    }
                }
                let values = (0..n_points).map(|_| num(tokens.next())).collect::<Result<Vec<_>>>()?;
                data.point_data.push((name, values));
            }
            _ => {}
        }
    }
    Ok(data)
}

/// Coefficient dump: `node,x,y,re,im` for every mesh node.
pub fn write_field_csv(u: &ComplexField, space: &FeSpace, out: &mut impl Write) -> Result<()> {
    space.check_len(u)?;
    writeln!(out, "node,x,y,re,im")?;
    if let Some(t) = u.time {
        writeln!(out, "# t = {t:.16e}")?;
    }
    for (i, (p, z)) in space.mesh().nodes().iter().zip(space.nodal_values(u)).enumerate() {
        writeln!(out, "{i},{:.16e},{:.16e},{:.16e},{:.16e}", p[0], p[1], z.re, z.im)?;
    }
    Ok(())
}

pub fn save_field_csv(u: &ComplexField, space: &FeSpace, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_field_csv(u, space, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Reads a dump written by [`write_field_csv`] back onto `space`; the node
/// coordinates must match the mesh.
pub fn load_field_csv(space: &FeSpace, path: impl AsRef<Path>) -> Result<ComplexField> {
    let reader = BufReader::new(File::open(path)?);
    let mesh = space.mesh();
    let mut nodal = vec![Complex64::new(0.0, 0.0); mesh.n_nodes()];
    let mut seen = vec![false; mesh.n_nodes()];
    let mut time = None;
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if k == 0 || line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# t =") {
            time = Some(rest.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", k + 1)))?);
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let perr = |e: String| Error::Parse(format!("line {}: {e}", k + 1));
        if f.len() != 5 {
            return Err(perr(format!("expected 5 columns, got {}", f.len())));
        }
        let i: usize = f[0].parse().map_err(|e| perr(format!("{e}")))?;
        let vals = f[1..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| perr(format!("{e}"))))
            .collect::<Result<Vec<_>>>()?;
        if i >= mesh.n_nodes() {
            return Err(perr(format!("node {i} out of range")));
        }
        let p = mesh.nodes()[i];
        let tol = 1e-9 * (1.0 + p[0].abs().max(p[1].abs()));
        if (p[0] - vals[0]).abs() > tol || (p[1] - vals[1]).abs() > tol {
            return Err(perr(format!("node {i} coordinates do not match the mesh")));
        }
        nodal[i] = Complex64::new(vals[2], vals[3]);
        seen[i] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Parse(format!("node {missing} missing from field dump")));
    }
    let mut field = space.from_nodal_values(&nodal)?;
    field.time = time;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::DofMap;
    use crate::mesh::Rect;
    use crate::quadrature::QuadratureDegree;
    use std::sync::Arc;

    fn space(all: bool) -> FeSpace {
        let mesh = Mesh::rectangle(Rect::new(0.0, 2.0, 0.0, 1.5).unwrap(), 6, 5).unwrap();
        let dm = if all { DofMap::all_nodes(&mesh) } else { DofMap::dirichlet(&mesh) };
        FeSpace::with_dofmap(Arc::new(mesh), dm, QuadratureDegree::Four).unwrap()
    }

    #[test]
    fn mass_cases() {
        let s = space(true);
        let m = s.assemble_mass();
        assert_eq!(mass(&s.zero_field(), &m), 0.0);
        let c0 = Complex64::new(0.6, -0.8);
        let u = ComplexField::new(vec![c0; s.n_dofs()]);
        assert!((mass(&u, &m) - c0.norm() * 3.0f64.sqrt()).abs() < 1e-14);
        let rotated = u.scaled(Complex64::from_polar(1.0, 0.7));
        assert!((mass(&rotated, &m) - mass(&u, &m)).abs() < 1e-15);
    }

    #[test]
    fn energy_two_ways_agree() {
        let s = space(false);
        let coeffs = crate::model::gpe_rotating(0.7, crate::model::harmonic_potential(1.0, 1.3), 5.0)
            .unwrap()
            .with_kappa(|p| Complex64::new(0.3 + p[0], 0.1));
        let u = s.interpolate(|p| Complex64::new(p[0] * (2.0 - p[0]), p[1] * (1.5 - p[1]) * p[0]));
        let a = energy(&u, &s.assemble_e(&coeffs), &s.assemble_kappa(&coeffs), &s, coeffs.beta());
        let b = energy_by_quadrature(&u, &s, &coeffs);
        assert!((a - b).abs() <= 1e-10 * a.abs());
        assert_eq!(energy(&s.zero_field(), &s.assemble_e(&coeffs), &s.assemble_kappa(&coeffs), &s, 5.0), 0.0);
    }

    #[test]
    fn csv_row_roundtrip() {
        let r = DiagnosticsRecord {
            step: 3,
            t: 0.30000000000000004,
            mass: 0.999_999_999_9,
            energy: 3.193_8,
            newton_iters: 4,
            residual: 1.2e-11,
        };
        assert_eq!(DiagnosticsRecord::from_csv_row(&r.to_csv_row()).unwrap(), r);
    }

    #[test]
    fn vtk_roundtrip() {
        let s = space(false);
        let u = s.interpolate(|p| Complex64::new((p[0] * 1.234567).sin(), 1.0 / 3.0 * p[1]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.vtk");
        export_vtk(&u, &s, &path).unwrap();
        let data = read_vtk(&path).unwrap();
        assert_eq!(data.points.len(), s.mesh().n_nodes());
        assert_eq!(data.cells.len(), s.mesh().n_triangles());
        let nodal = s.nodal_values(&u);
        let re = data.scalars("re_u").unwrap();
        let im = data.scalars("im_u").unwrap();
        let rho = data.scalars("density").unwrap();
        for (k, z) in nodal.iter().enumerate() {
            assert_eq!(re[k], z.re);
            assert_eq!(im[k], z.im);
            assert_eq!(rho[k], z.norm_sqr());
        }
        for b in s.mesh().boundary_nodes() {
            assert_eq!(rho[b], 0.0);
        }
    }

    #[test]
    fn field_csv_roundtrip() {
        let s = space(false);
        let u = s.interpolate(|p| Complex64::new(p[0].exp(), -p[1])).with_time(2.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        save_field_csv(&u, &s, &path).unwrap();
        assert_eq!(load_field_csv(&s, &path).unwrap(), u);
        let other = FeSpace::new(
            Arc::new(Mesh::rectangle(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), 6, 5).unwrap()),
            QuadratureDegree::Four,
        )
        .unwrap();
        assert!(load_field_csv(&other, &path).is_err());
    }
}
