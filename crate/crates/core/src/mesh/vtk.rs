//! Legacy ASCII VTK output (DATASET UNSTRUCTURED_GRID with POINT_DATA).
//! Coordinates and field values are printed with 13 significant digits so a
//! re-read reproduces them to at least 12. Layout documented in
//! `docs/formats.md`.

use super::TriangleMesh;
use crate::error::{CoreError, Result};
use std::io::Write;
use std::path::Path;

/// A named node field to attach to the output.
pub enum VtkField<'a> {
    Scalar(&'a str, &'a [f64]),
    Vector(&'a str, &'a [[f64; 2]]),
}

pub fn write_vtk(mesh: &TriangleMesh, fields: &[VtkField<'_>], path: &Path) -> Result<()> {
    for f in fields {
        let (name, len) = match f {
            VtkField::Scalar(n, v) => (*n, v.len()),
            VtkField::Vector(n, v) => (*n, v.len()),
        };
        if len != mesh.n_nodes() {
            return Err(CoreError::Mesh(format!(
                "field {name:?} has {len} values for {} nodes",
                mesh.n_nodes()
            )));
        }
    }
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "movemesh output")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_nodes())?;
    for p in mesh.nodes() {
        writeln!(w, "{:.12e} {:.12e} 0", p[0], p[1])?;
    }
    let nt = mesh.n_triangles();
    writeln!(w, "CELLS {} {}", nt, 4 * nt)?;
    for tri in mesh.triangles() {
        writeln!(w, "3 {} {} {}", tri[0], tri[1], tri[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    if !fields.is_empty() {
        writeln!(w, "POINT_DATA {}", mesh.n_nodes())?;
        for f in fields {
            match f {
                VtkField::Scalar(name, vals) => {
                    writeln!(w, "SCALARS {name} double 1")?;
                    writeln!(w, "LOOKUP_TABLE default")?;
                    for v in *vals {
                        writeln!(w, "{v:.12e}")?;
                    }
                }
                VtkField::Vector(name, vals) => {
                    writeln!(w, "VECTORS {name} double")?;
                    for v in *vals {
                        writeln!(w, "{:.12e} {:.12e} 0", v[0], v[1])?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
