//! Python bindings for the moving-mesh toolkit: meshes, derivative
//! recovery, monitor construction, mesh relaxation, chemistry, and the
//! coupled channel-flame runs.

use movemesh_core::chemistry;
use movemesh_core::driver;
use movemesh_core::femsolver;
use movemesh_core::mesh;
use movemesh_core::mmpde;
use movemesh_core::monitor;
use movemesh_core::recovery;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use std::path::PathBuf;

fn err_py(e: movemesh_core::CoreError) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Fixed-topology 2D triangulation.
#[pyclass(name = "TriangleMesh", skip_from_py_object)]
#[derive(Clone)]
struct PyTriangleMesh {
    inner: mesh::TriangleMesh,
}

#[pymethods]
impl PyTriangleMesh {
    /// Uniform rectangle mesh with nx x ny nodes.
    #[staticmethod]
    #[pyo3(signature = (nx, ny, x0=0.0, x1=1.0, y0=0.0, y1=1.0))]
    fn rectangle(nx: usize, ny: usize, x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self {
            inner: mesh::TriangleMesh::rectangle(nx, ny, x0, x1, y0, y1),
        }
    }

    /// Parse a Triangle .node/.ele file pair (contents, not paths).
    #[staticmethod]
    fn from_triangle_files(node_text: &str, ele_text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: mesh::load_triangle_mesh(node_text, ele_text).map_err(err_py)?,
        })
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_triangles(&self) -> usize {
        self.inner.n_triangles()
    }

    fn nodes(&self) -> Vec<(f64, f64)> {
        self.inner.nodes().iter().map(|p| (p[0], p[1])).collect()
    }

    fn triangles(&self) -> Vec<(usize, usize, usize)> {
        self.inner
            .triangles()
            .iter()
            .map(|t| (t[0], t[1], t[2]))
            .collect()
    }

    fn boundary_markers(&self) -> Vec<i32> {
        (0..self.inner.n_nodes())
            .map(|i| self.inner.boundary_marker(i))
            .collect()
    }

    /// Quality summary: (min_area, max_area, min_angle_deg, tangled).
    fn quality(&self) -> (f64, f64, f64, bool) {
        let q = mesh::mesh_quality(&self.inner);
        (q.min_area, q.max_area, q.min_angle_deg, q.tangled)
    }

    fn total_area(&self) -> f64 {
        self.inner.total_area()
    }

    /// Write a legacy ASCII VTK file with optional named scalar fields.
    #[pyo3(signature = (path, scalars=None))]
    fn write_vtk(&self, path: PathBuf, scalars: Option<Vec<(String, Vec<f64>)>>) -> PyResult<()> {
        let scalars = scalars.unwrap_or_default();
        let fields: Vec<mesh::VtkField> = scalars
            .iter()
            .map(|(name, values)| mesh::VtkField::Scalar(name, values))
            .collect();
        mesh::write_vtk(&self.inner, &fields, &path).map_err(err_py)
    }

    /// Domain mean of a nodal field by exact P1 quadrature.
    fn mean(&self, field: Vec<f64>) -> PyResult<f64> {
        if field.len() != self.inner.n_nodes() {
            return Err(PyValueError::new_err("field length mismatch"));
        }
        Ok(femsolver::evaluate_qoi_mean(&self.inner, &field))
    }
}

/// Recovered gradient (order 1) of a nodal field: list of (d/dx, d/dy).
#[pyfunction]
fn recover_gradient(mesh: &PyTriangleMesh, values: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    let r = recovery::recover_gradient(&mesh.inner, &values).map_err(err_py)?;
    Ok(r.values.iter().map(|v| (v[0], v[1])).collect())
}

/// Recovered pure second derivatives (d2/dx2, d2/dy2) of a nodal field.
#[pyfunction]
fn recover_second_derivatives(
    mesh: &PyTriangleMesh,
    values: Vec<f64>,
) -> PyResult<Vec<(f64, f64)>> {
    let r = recovery::recover_second_derivatives(&mesh.inner, &values).map_err(err_py)?;
    Ok(r.values.iter().map(|v| (v[0], v[1])).collect())
}

/// Euclidean norm of the recovered second derivatives per node.
#[pyfunction]
fn interpolation_error_indicator(mesh: &PyTriangleMesh, values: Vec<f64>) -> PyResult<Vec<f64>> {
    recovery::interpolation_error_indicator(&mesh.inner, &values).map_err(err_py)
}

/// Node-wise SPD monitor matrices.
#[pyclass(name = "MonitorField", skip_from_py_object)]
#[derive(Clone)]
struct PyMonitorField {
    inner: monitor::MonitorField,
}

#[pymethods]
impl PyMonitorField {
    /// Entries (g11, g12, g22) per node.
    fn matrices(&self) -> Vec<(f64, f64, f64)> {
        self.inner
            .matrices
            .iter()
            .map(|m| (m[0], m[1], m[2]))
            .collect()
    }

    /// Mesh density sqrt(det G) per node.
    fn density(&self) -> PyResult<Vec<f64>> {
        monitor::monitor_density(&self.inner).map_err(err_py)
    }

    /// Averaged over the computational cells for the given cycles.
    #[pyo3(signature = (mesh, cycles, reproject_det=true))]
    fn smoothed(
        &self,
        mesh: &PyTriangleMesh,
        cycles: usize,
        reproject_det: bool,
    ) -> PyMonitorField {
        PyMonitorField {
            inner: monitor::smooth_monitor(&self.inner, &mesh.inner, cycles, reproject_det),
        }
    }
}

/// Monitor from a per-node vector quantity psi.
#[pyfunction]
#[pyo3(signature = (psi, alpha, normalize=true))]
fn build_monitor(psi: Vec<(f64, f64)>, alpha: f64, normalize: bool) -> PyResult<PyMonitorField> {
    let psi: Vec<[f64; 2]> = psi.iter().map(|&(x, y)| [x, y]).collect();
    Ok(PyMonitorField {
        inner: monitor::build_monitor(&psi, alpha, normalize).map_err(err_py)?,
    })
}

/// The computational-to-physical map of the moving mesh.
#[pyclass(name = "MeshMapping")]
struct PyMeshMapping {
    inner: mmpde::MeshMapping,
}

#[pymethods]
impl PyMeshMapping {
    #[new]
    fn new(computational: &PyTriangleMesh) -> Self {
        Self {
            inner: mmpde::MeshMapping::identity(computational.inner.clone()),
        }
    }

    fn physical_coords(&self) -> Vec<(f64, f64)> {
        self.inner
            .physical_coords()
            .iter()
            .map(|p| (p[0], p[1]))
            .collect()
    }

    fn physical_mesh(&self) -> PyTriangleMesh {
        PyTriangleMesh {
            inner: self.inner.physical_mesh(),
        }
    }

    fn is_untangled(&self) -> bool {
        self.inner.is_untangled()
    }

    /// Mesh velocity under the given monitor; list of (vx, vy).
    fn velocity(&self, g: &PyMonitorField) -> PyResult<Vec<(f64, f64)>> {
        let v = mmpde::assemble_mmpde_velocity(&self.inner, &g.inner).map_err(err_py)?;
        Ok(v.iter().map(|w| (w[0], w[1])).collect())
    }

    /// One explicit Euler step with tangling rollback; returns the
    /// accepted step size.
    fn step(&mut self, g: &PyMonitorField, dt: f64) -> PyResult<f64> {
        let out = mmpde::step_mesh(&mut self.inner, &g.inner, dt).map_err(err_py)?;
        Ok(out.accepted_dt)
    }

    /// Relax under a fixed monitor; returns (steps, converged,
    /// last_max_displacement).
    #[pyo3(signature = (g, max_steps, displacement_tol=0.0, slide_boundary=false))]
    fn relax(
        &mut self,
        g: &PyMonitorField,
        max_steps: usize,
        displacement_tol: f64,
        slide_boundary: bool,
    ) -> PyResult<(usize, bool, f64)> {
        let opts = mmpde::RelaxOptions {
            max_steps,
            displacement_tol,
            boundary: if slide_boundary {
                mmpde::BoundaryMode::Slide
            } else {
                mmpde::BoundaryMode::Fixed
            },
            ..Default::default()
        };
        let monitor = g.inner.clone();
        let report = mmpde::relax_mesh(&mut self.inner, move |_| Ok(monitor.clone()), &opts)
            .map_err(err_py)?;
        Ok((report.steps, report.converged, report.last_max_displacement))
    }
}

/// 1D equidistribution reference: abscissas placing equal mass of the
/// sampled density in every interval.
#[pyfunction]
#[pyo3(signature = (density, x0, x1, n_nodes, n_samples=10_000))]
fn equidistribute_1d(
    density: Bound<'_, PyAny>,
    x0: f64,
    x1: f64,
    n_nodes: usize,
    n_samples: usize,
) -> PyResult<Vec<f64>> {
    let failure = std::cell::RefCell::new(None::<PyErr>);
    let xs = mmpde::equidistribute_1d(
        |x| match density.call1((x,)).and_then(|v| v.extract::<f64>()) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                1.0
            }
        },
        x0,
        x1,
        n_nodes,
        n_samples,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(xs),
    }
}

/// A parsed reaction mechanism.
#[pyclass(name = "Mechanism")]
struct PyMechanism {
    inner: chemistry::Mechanism,
}

#[pymethods]
impl PyMechanism {
    /// Parse from mechanism-file text.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: chemistry::Mechanism::parse(text).map_err(err_py)?,
        })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: chemistry::Mechanism::from_file(&path).map_err(err_py)?,
        })
    }

    #[getter]
    fn species_names(&self) -> Vec<String> {
        self.inner.species.iter().map(|s| s.name.clone()).collect()
    }

    #[getter]
    fn n_reactions(&self) -> usize {
        self.inner.reactions.len()
    }

    /// Molar production rates (mol/m^3/s) at (T, mass fractions, density).
    fn production_rates(&self, temperature: f64, w: Vec<f64>, density: f64) -> PyResult<Vec<f64>> {
        Ok(
            chemistry::production_rates(&self.inner, temperature, &w, density)
                .map_err(err_py)?
                .molar,
        )
    }

    /// Mass source terms f_i = M_i wdot_i (kg/m^3/s).
    fn mass_sources(&self, temperature: f64, w: Vec<f64>, density: f64) -> PyResult<Vec<f64>> {
        Ok(
            chemistry::production_rates(&self.inner, temperature, &w, density)
                .map_err(err_py)?
                .mass,
        )
    }

    /// Heat release f0 in W/m^3.
    fn heat_release(&self, temperature: f64, w: Vec<f64>, density: f64) -> PyResult<f64> {
        chemistry::heat_release(&self.inner, temperature, &w, density).map_err(err_py)
    }

    fn mixture_molar_mass(&self, w: Vec<f64>) -> PyResult<f64> {
        chemistry::mixture_molar_mass(&self.inner, &w).map_err(err_py)
    }
}

/// Ideal-gas low-Mach density rho = P Mbar / (R T).
#[pyfunction]
fn density_eos(p_thermodynamic: f64, mixture_molar_mass: f64, temperature: f64) -> PyResult<f64> {
    chemistry::density_eos(p_thermodynamic, mixture_molar_mass, temperature).map_err(err_py)
}

/// Run a coupled case from a config file; returns a summary dict.
#[pyfunction]
fn run_case<'py>(
    py: Python<'py>,
    config: PathBuf,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let cfg = driver::CaseConfig::load(&config).map_err(err_py)?;
    let artifacts = driver::run_coupled(&cfg).map_err(err_py)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("qoi", artifacts.qoi)?;
    dict.set_item("stage1_steps", artifacts.stage1_steps)?;
    dict.set_item("stage2_steps", artifacts.stage2_steps)?;
    dict.set_item("min_element_area", artifacts.min_area)?;
    dict.set_item("max_element_area", artifacts.max_area)?;
    dict.set_item("csv", artifacts.csv_path)?;
    Ok(dict)
}

#[pymodule]
fn movemesh_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTriangleMesh>()?;
    m.add_class::<PyMonitorField>()?;
    m.add_class::<PyMeshMapping>()?;
    m.add_class::<PyMechanism>()?;
    m.add_function(wrap_pyfunction!(recover_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(recover_second_derivatives, m)?)?;
    m.add_function(wrap_pyfunction!(interpolation_error_indicator, m)?)?;
    m.add_function(wrap_pyfunction!(build_monitor, m)?)?;
    m.add_function(wrap_pyfunction!(equidistribute_1d, m)?)?;
    m.add_function(wrap_pyfunction!(density_eos, m)?)?;
    m.add_function(wrap_pyfunction!(run_case, m)?)?;
    m.add("GAS_CONSTANT", chemistry::GAS_CONSTANT)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
