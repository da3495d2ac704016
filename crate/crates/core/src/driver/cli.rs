//! Command-line entry points.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 on numerical
//! failures (non-convergence, tangling stalls, singular solves). Logging
//! level comes from the MOVEMESH_LOG environment variable
//! (error, info, debug).

use super::config::{CaseConfig, Ini};
use super::coupled::run_coupled;
use crate::error::{CoreError, Result};
use crate::mesh::{load_triangle_mesh, mesh_quality, write_vtk, TriangleMesh, VtkField};
use crate::mmpde::{equidistribute_1d, relax_mesh, BoundaryMode, MeshMapping, RelaxOptions};
use crate::monitor::{build_monitor, monitor_density, smooth_monitor, MonitorField};
use crate::recovery::{recover_gradient, recover_second_derivatives};
use std::io::Write;
use std::path::Path;

const USAGE: &str = "\
movemesh - r-adaptive moving-mesh solver for stationary low-Mach reacting flows

USAGE:
    movemesh [--threads N] <COMMAND>

COMMANDS:
    run <config.ini>               run the coupled physics-mesh case
    check-mesh <file.node> <file.ele>
                                   load a Triangle mesh and print quality
    monitor-demo <config.ini>      build/smooth/export a monitor from an
                                   analytic field
    equidistribute-1d <config.ini> relax the stratified-monitor strip and
                                   compare with the 1D equidistribution
                                   reference
    --version                      print the version
    --help                         print this help

Set MOVEMESH_LOG=info or debug for progress output.";

/// Parses argv (without the program name) and runs; returns the exit code.
pub fn cli_main(args: &[String]) -> i32 {
    let _ = env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("MOVEMESH_LOG", "error"),
    )
    .format_timestamp(None)
    .try_init();

    let mut args = args.to_vec();
    // Global --threads flag caps the assembly parallelism.
    if let Some(pos) = args.iter().position(|a| a == "--threads") {
        if pos + 1 >= args.len() {
            eprintln!("error: --threads needs a value");
            return 1;
        }
        let n: usize = match args[pos + 1].parse() {
            Ok(n) if n >= 1 => n,
            _ => {
                eprintln!("error: --threads needs a positive integer");
                return 1;
            }
        };
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        args.drain(pos..=pos + 1);
    }

    match args.first().map(String::as_str) {
        Some("--help") | Some("-h") => {
            println!("{USAGE}");
            0
        }
        Some("--version") | Some("-V") => {
            println!("movemesh {}", env!("CARGO_PKG_VERSION"));
            0
        }
        Some("run") => match args.get(1) {
            Some(path) => report(cmd_run(Path::new(path))),
            None => usage_error("run needs a config file"),
        },
        Some("check-mesh") => match (args.get(1), args.get(2)) {
            (Some(node), Some(ele)) => report(cmd_check_mesh(Path::new(node), Path::new(ele))),
            _ => usage_error("check-mesh needs <file.node> <file.ele>"),
        },
        Some("monitor-demo") => match args.get(1) {
            Some(path) => report(cmd_monitor_demo(Path::new(path))),
            None => usage_error("monitor-demo needs a config file"),
        },
        Some("equidistribute-1d") => match args.get(1) {
            Some(path) => report(cmd_equidistribute(Path::new(path))),
            None => usage_error("equidistribute-1d needs a config file"),
        },
        Some(other) => usage_error(&format!("unknown command {other:?}")),
        None => usage_error("no command given"),
    }
}

fn usage_error(msg: &str) -> i32 {
    eprintln!("error: {msg}\n\n{USAGE}");
    1
}

fn report(result: Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_run(config: &Path) -> Result<()> {
    let cfg = CaseConfig::load(config)?;
    let artifacts = run_coupled(&cfg)?;
    println!(
        "run finished: J(u_h) = {:.8} (stage 1: {} steps, stage 2: {} steps)",
        artifacts.qoi, artifacts.stage1_steps, artifacts.stage2_steps
    );
    println!(
        "element areas [{:.3e}, {:.3e}]; monitor density [{:.3}, {:.3}]",
        artifacts.min_area,
        artifacts.max_area,
        artifacts.monitor_density_range.0,
        artifacts.monitor_density_range.1
    );
    println!("results written to {}", artifacts.csv_path.display());
    Ok(())
}

fn cmd_check_mesh(node: &Path, ele: &Path) -> Result<()> {
    let node_text = std::fs::read_to_string(node)?;
    let ele_text = std::fs::read_to_string(ele)?;
    let mesh = load_triangle_mesh(&node_text, &ele_text)?;
    let q = mesh_quality(&mesh);
    println!("nodes:     {}", mesh.n_nodes());
    println!("triangles: {}", mesh.n_triangles());
    println!("area:      [{:.6e}, {:.6e}]", q.min_area, q.max_area);
    println!("min angle: {:.3} deg", q.min_angle_deg);
    println!("tangled:   {}", q.tangled);
    println!(
        "boundary:  {} nodes",
        (0..mesh.n_nodes()).filter(|&i| mesh.is_boundary(i)).count()
    );
    Ok(())
}

fn cmd_monitor_demo(config: &Path) -> Result<()> {
    let ini = Ini::from_file(config)?;
    let s = "monitor_demo";
    let nx = ini.get_usize(s, "nx", 65)?;
    let ny = ini.get_usize(s, "ny", 33)?;
    let x1 = ini.get_f64(s, "x1", 1.0)?;
    let y1 = ini.get_f64(s, "y1", 0.5)?;
    let mesh = TriangleMesh::rectangle(nx, ny, 0.0, x1, 0.0, y1);

    // Analytic field: a tanh front `tanh(steepness (x1 - center))`.
    let steepness = ini.get_f64(s, "steepness", 30.0)?;
    let center = ini.get_f64(s, "center", 0.5)?;
    let field: Vec<f64> = mesh
        .nodes()
        .iter()
        .map(|p| (steepness * (p[0] - center)).tanh())
        .collect();

    let order = ini.get_usize(s, "order", 1)?;
    let psi = match order {
        1 => recover_gradient(&mesh, &field)?.values,
        2 => recover_second_derivatives(&mesh, &field)?.values,
        other => {
            return Err(CoreError::Config(format!(
                "[monitor_demo] order must be 1 or 2, got {other}"
            )))
        }
    };
    let alpha = ini.get_f64(s, "alpha", 80.0)?;
    let cycles = ini.get_usize(s, "smoothing_cycles", 8)?;
    // Plain entry-wise smoothing spreads det G away from 1; the density
    // plot is only informative without the unit-det reprojection.
    let reproject = ini.get_bool(s, "reproject_det", false)?;
    let g = build_monitor(&psi, alpha, true)?;
    let smoothed = smooth_monitor(&g, &mesh, cycles, reproject);
    let density_raw = monitor_density(&g)?;
    let density_smooth = monitor_density(&smoothed)?;

    let out = std::path::PathBuf::from(ini.get(s, "output").unwrap_or("monitor_demo.vtk"));
    write_vtk(
        &mesh,
        &[
            VtkField::Scalar("field", &field),
            VtkField::Scalar("density", &density_raw),
            VtkField::Scalar("density_smoothed", &density_smooth),
        ],
        &out,
    )?;
    println!(
        "monitor demo written to {} (density range [{:.3}, {:.3}] -> [{:.3}, {:.3}] after {} cycles)",
        out.display(),
        density_raw.iter().copied().fold(f64::INFINITY, f64::min),
        density_raw.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        density_smooth.iter().copied().fold(f64::INFINITY, f64::min),
        density_smooth.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        cycles,
    );
    Ok(())
}

fn cmd_equidistribute(config: &Path) -> Result<()> {
    let ini = Ini::from_file(config)?;
    let s = "equidistribute";
    let nx = ini.get_usize(s, "nx", 65)?;
    let ny = ini.get_usize(s, "ny", 9)?;
    let x1 = ini.get_f64(s, "x1", 1.0)?;
    let y1 = ini.get_f64(s, "y1", 0.125)?;
    let amplitude = ini.get_f64(s, "amplitude", 50.0)?;
    let center = ini.get_f64(s, "center", 0.5)?;
    let coeff = ini.get_f64(s, "coeff", 500.0)?;
    let max_steps = ini.get_usize(s, "max_steps", 100_000)?;
    let boundary = match ini.get(s, "boundary").unwrap_or("slide") {
        "fixed" => BoundaryMode::Fixed,
        "slide" => BoundaryMode::Slide,
        other => {
            return Err(CoreError::Config(format!(
                "[equidistribute] boundary: expected fixed or slide, got {other:?}"
            )))
        }
    };

    let density = move |x: f64| 1.0 + amplitude * (-coeff * (x - center) * (x - center)).exp();
    let mesh = TriangleMesh::rectangle(nx, ny, 0.0, x1, 0.0, y1);
    let mut map = MeshMapping::identity(mesh);
    let monitor = |m: &MeshMapping| {
        let mut g = MonitorField::identity(m.computational().n_nodes(), 1.0);
        for (i, p) in m.physical_coords().iter().enumerate() {
            g.matrices[i] = [density(p[0]), 0.0, 1.0];
        }
        Ok(g)
    };
    let opts = RelaxOptions {
        max_steps,
        displacement_tol: 1e-10 * map.physical_mesh().diameter(),
        boundary,
        ..Default::default()
    };
    let report = relax_mesh(&mut map, monitor, &opts)?;

    let oracle = equidistribute_1d(density, 0.0, x1, nx, 10_000);
    let out = std::path::PathBuf::from(ini.get(s, "csv").unwrap_or("equidistribute.csv"));
    let mut csv = std::io::BufWriter::new(std::fs::File::create(&out)?);
    writeln!(csv, "index,abscissa,reference")?;
    let mid_row = ny / 2;
    let mut max_err = 0.0f64;
    for i in 0..nx {
        let x = map.physical_coords()[mid_row * nx + i][0];
        writeln!(csv, "{i},{x:.12e},{:.12e}", oracle[i])?;
        max_err = max_err.max((x - oracle[i]).abs());
    }
    writeln!(csv, "# max_error,{max_err:.12e}")?;
    csv.flush()?;
    println!(
        "equidistribution finished in {} steps (converged: {}); max abscissa error {:.4e}; csv: {}",
        report.steps,
        report.converged,
        max_err,
        out.display()
    );
    Ok(())
}
