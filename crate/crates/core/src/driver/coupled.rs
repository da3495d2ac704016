//! The coupled physics-mesh run: stage 1 marches flow and temperature with
//! chemistry off on the frozen mesh; stage 2 enables the reaction sources
//! and, after every accepted pseudo-time step, rebuilds the monitor from
//! the current solution, advances the mesh equation a few substeps, and
//! applies the mesh-velocity convective correction to the physics residual.
//! The run ends when the physics residual rate and the mesh displacement
//! are jointly below their thresholds.

use super::case::{build_case, monitor_psi, Case};
use super::config::CaseConfig;
use crate::error::{CoreError, Result};
use crate::femsolver::{
    evaluate_qoi_mean, AssemblyOptions, FlowProblem, SolutionState, COMP_VX,
};
use crate::mesh::{mesh_quality, write_vtk, VtkField};
use crate::mmpde::{ale_convective_term, relax_mesh_with, MeshMapping, MmpdeWorkspace, RelaxOptions};
use crate::monitor::{build_monitor, monitor_density, smooth_monitor};
use crate::timeint::{march_to_steady, MarchConfig, RosenbrockTableau, StepDirective};
use log::{debug, info, warn};
use std::io::Write;

/// Summary of a finished coupled run.
pub struct RunArtifacts {
    /// Domain-mean mass fraction of the QoI species on the final mesh.
    pub qoi: f64,
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    pub min_area: f64,
    pub max_area: f64,
    pub monitor_density_range: (f64, f64),
    pub mesh: crate::mesh::TriangleMesh,
    pub state: SolutionState,
    pub csv_path: std::path::PathBuf,
}

fn march_config(cfg: &CaseConfig) -> Result<MarchConfig> {
    Ok(MarchConfig {
        tableau: RosenbrockTableau::by_name(&cfg.march.tableau)?,
        rtol: cfg.march.rtol,
        atol: cfg.march.atol,
        dt0: cfg.march.dt0,
        dt_min: cfg.march.dt_min,
        dt_max: cfg.march.dt_max,
        steady_tol: cfg.march.steady_tol,
        max_steps: cfg.march.max_steps,
        jacobian_max_age: cfg.march.jacobian_max_age,
    })
}

pub fn run_coupled(cfg: &CaseConfig) -> Result<RunArtifacts> {
    std::fs::create_dir_all(&cfg.output.directory)?;
    let case = build_case(cfg)?;
    let Case {
        mesh,
        mech,
        transport,
        bcs,
        state0,
        qoi_species,
    } = case;


    let mut problem = FlowProblem::new(
        mesh.clone(),
        mech,
        transport,
        bcs,
        AssemblyOptions {
            reactions: false,
            ..Default::default()
        },
    )?;
    let mut u = state0.into_vec();
    let march_cfg = march_config(cfg)?;

    // Stage 1: flow and temperature without combustion, mesh frozen.
    info!("stage 1: marching flow field without reaction sources");
    let report1 = march_to_steady(&mut problem, &mut u, &march_cfg, |problem, u, record| {
        let mut state = problem.state_from(u)?;
        let clipped = state.clip_species();
        if clipped > 0 {
            warn!("clipped {clipped} species values at step {}", record.step);
            *u = state.into_vec();
        }
        debug!(
            "stage1 step {} dt {:.3e} steady {:.3e}",
            record.step, record.dt, record.steady_norm
        );
        Ok(StepDirective::Continue)
    })?;
    info!(
        "stage 1 steady after {} steps (residual rate {:.3e})",
        report1.accepted_steps, report1.final_residual
    );

    // Stage 2: enable chemistry; couple the mesh equation.
    problem.opts.reactions = true;
    let mut mapping = MeshMapping::identity(mesh.clone());
    mapping.tau = cfg.mmpde.tau;
    let move_mesh = cfg.mesh_motion && cfg.monitor.is_some();
    // The computational mesh is frozen for the whole run; the mesh-motion
    // patch fitters are built once.
    let mesh_ws = if move_mesh {
        Some(MmpdeWorkspace::new(mapping.computational())?)
    } else {
        None
    };
    let diam = mesh.diameter();
    let disp_tol = cfg.displacement_tol * diam;

    let mut stage2_cfg = march_cfg.clone();
    // Joint steadiness is decided in the callback (physics AND mesh).
    if move_mesh {
        stage2_cfg.steady_tol = 0.0;
    }

    let mut relax_dt: Option<f64> = None;
    let mut vtk_counter = 0usize;
    let mut frame = 0usize;
    let cadence = cfg.output.vtk_cadence;
    let monitor_spec = cfg.monitor.clone();
    let mmpde_spec = cfg.mmpde.clone();
    let out_dir = cfg.output.directory.clone();
    let steady_tol = cfg.march.steady_tol;

    info!("stage 2: reactions on, mesh motion {}", move_mesh);
    let report2 = march_to_steady(&mut problem, &mut u, &stage2_cfg, |problem, u, record| {
        let mut state = problem.state_from(u)?;
        let clipped = state.clip_species();
        if clipped > 0 {
            debug!("clipped {clipped} species values at step {}", record.step);
            *u = state.clone().into_vec();
        }

        let mut max_disp = 0.0f64;
        let t_mesh = std::time::Instant::now();
        if move_mesh {
            let spec = monitor_spec.as_ref().expect("mesh motion needs a monitor");
            // Monitor from the current solution on the current mesh,
            // smoothed over the computational cells.
            let psi = monitor_psi(&problem.mesh, &state, &problem.mech, spec)?;
            let g = build_monitor(&psi, spec.alpha, spec.normalize_psi)?;
            let g = smooth_monitor(
                &g,
                mapping.computational(),
                spec.smoothing_cycles,
                spec.reproject_det,
            );

            let before = mapping.physical_coords().to_vec();
            let opts = RelaxOptions {
                max_steps: mmpde_spec.substeps,
                displacement_tol: 0.0,
                dt0: relax_dt,
                boundary: mmpde_spec.boundary,
                ..Default::default()
            };
            let ws = mesh_ws.as_ref().expect("workspace built for moving runs");
            let relax = relax_mesh_with(&mut mapping, |_| Ok(g.clone()), &opts, ws)?;
            log::debug!("timing mesh relax: {} substeps", relax.steps);
            relax_dt = Some(relax.dt);

            // Realized mesh velocity over the physics step.
            let n = before.len();
            let mut mesh_velocity = vec![[0.0f64; 2]; n];
            for i in 0..n {
                let after = mapping.physical_coords()[i];
                mesh_velocity[i] = [
                    (after[0] - before[i][0]) / record.dt,
                    (after[1] - before[i][1]) / record.dt,
                ];
                max_disp = max_disp
                    .max((after[0] - before[i][0]).hypot(after[1] - before[i][1]));
            }

            // Swap in the moved mesh and the ALE convective correction for
            // the differential components (nodal values ride with their
            // nodes; the correction accounts for the transport).
            problem.mesh = mapping.physical_mesh();
            let nc = problem.nc();
            let mut src = vec![0.0f64; n * nc];
            for comp in COMP_VX..nc {
                let field: Vec<f64> = (0..n).map(|i| state.get(i, comp)).collect();
                let conv = ale_convective_term(&mapping, &mesh_velocity, &field)?;
                for i in 0..n {
                    src[i * nc + comp] = conv[i];
                }
            }
            problem.body_source = Some(src);
        }

        if cadence > 0 {
            vtk_counter += 1;
            if vtk_counter % cadence == 0 {
                let path = out_dir.join(format!("run_{frame:05}.vtk"));
                write_state_vtk(problem, &state, &path)?;
                frame += 1;
            }
        }

        debug!(
            "stage2 step {} dt {:.3e} steady {:.3e} disp {:.3e} mesh_time {:?}",
            record.step, record.dt, record.steady_norm, max_disp, t_mesh.elapsed()
        );
        let physics_steady = record.steady_norm < steady_tol;
        let mesh_steady = !move_mesh || max_disp < disp_tol;
        if physics_steady && mesh_steady {
            info!(
                "joint steadiness at step {} (residual rate {:.3e}, displacement {:.3e})",
                record.step, record.steady_norm, max_disp
            );
            Ok(StepDirective::Stop)
        } else {
            Ok(StepDirective::Continue)
        }
    })?;

    // Final artifacts.
    let state = problem.state_from(&u)?;
    let quality = mesh_quality(&problem.mesh);
    if quality.tangled {
        return Err(CoreError::Mesh(
            "final mesh is tangled; this is a bug, rollback must prevent it".into(),
        ));
    }
    let qoi_field: Vec<f64> = (0..state.n_nodes)
        .map(|i| state.mass_fractions(i)[qoi_species])
        .collect();
    let qoi = evaluate_qoi_mean(&problem.mesh, &qoi_field);

    let density_range = if let Some(spec) = &cfg.monitor {
        let psi = monitor_psi(&problem.mesh, &state, &problem.mech, spec)?;
        let g = build_monitor(&psi, spec.alpha, spec.normalize_psi)?;
        let g = smooth_monitor(
            &g,
            mapping.computational(),
            spec.smoothing_cycles,
            spec.reproject_det,
        );
        let d = monitor_density(&g)?;
        (
            d.iter().copied().fold(f64::INFINITY, f64::min),
            d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    } else {
        (1.0, 1.0)
    };

    let final_vtk = cfg.output.directory.join("final.vtk");
    write_state_vtk(&problem, &state, &final_vtk)?;

    let csv_path = cfg.output.directory.join(&cfg.output.csv);
    let mut csv = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    writeln!(
        csv,
        "qoi_mean_w,stage1_steps,stage2_steps,min_element_area,max_element_area,monitor_density_min,monitor_density_max"
    )?;
    writeln!(
        csv,
        "{:.12e},{},{},{:.12e},{:.12e},{:.12e},{:.12e}",
        qoi,
        report1.accepted_steps,
        report2.accepted_steps,
        quality.min_area,
        quality.max_area,
        density_range.0,
        density_range.1
    )?;
    csv.flush()?;

    info!("run finished: J(u_h) = {qoi:.8}");
    Ok(RunArtifacts {
        qoi,
        stage1_steps: report1.accepted_steps,
        stage2_steps: report2.accepted_steps,
        min_area: quality.min_area,
        max_area: quality.max_area,
        monitor_density_range: density_range,
        mesh: problem.mesh.clone(),
        state,
        csv_path,
    })
}

/// Writes the state fields on the problem's current mesh.
fn write_state_vtk(
    problem: &FlowProblem,
    state: &SolutionState,
    path: &std::path::Path,
) -> Result<()> {
    let n = state.n_nodes;
    let pressure: Vec<f64> = (0..n).map(|i| state.pressure(i)).collect();
    let temperature: Vec<f64> = (0..n).map(|i| state.temperature(i)).collect();
    let velocity: Vec<[f64; 2]> = (0..n).map(|i| state.velocity(i)).collect();
    let mut fields = vec![
        VtkField::Scalar("p_hyd", &pressure),
        VtkField::Scalar("T", &temperature),
        VtkField::Vector("velocity", &velocity),
    ];
    let mut species_fields = Vec::new();
    for k in 0..problem.mech.n_species() {
        let values: Vec<f64> = (0..n).map(|i| state.mass_fractions(i)[k]).collect();
        species_fields.push((format!("w_{}", problem.mech.species[k].name), values));
    }
    for (name, values) in &species_fields {
        fields.push(VtkField::Scalar(name, values));
    }
    write_vtk(&problem.mesh, &fields, path)
}
