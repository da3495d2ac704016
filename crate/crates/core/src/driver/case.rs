//! Case construction: mesh, mechanism, boundary conditions, and the
//! initial state from a [`CaseConfig`].

use super::config::{BcKind, CaseConfig, MeshSpec, MonitorSpec};
use crate::chemistry::Mechanism;
use crate::error::{CoreError, Result};
use crate::femsolver::{
    BoundaryConditions, SolutionState, TransportConfig, COMP_P, COMP_T, COMP_VX, COMP_VY, COMP_W1,
};
use crate::mesh::{load_triangle_mesh, TriangleMesh};
use crate::recovery::{recover_gradient, recover_second_derivatives};

/// Everything needed to run a case.
pub struct Case {
    pub mesh: TriangleMesh,
    pub mech: Mechanism,
    pub transport: TransportConfig,
    pub bcs: BoundaryConditions,
    pub state0: SolutionState,
    /// Index of the quantity-of-interest species.
    pub qoi_species: usize,
}

/// Builds the case: generates or loads the mesh, parses the mechanism,
/// expands boundary conditions per marker, and fills the initial state
/// (temperature profile, uniform composition, extruded inflow velocity).
pub fn build_case(cfg: &CaseConfig) -> Result<Case> {
    let mesh = match &cfg.mesh {
        MeshSpec::Rectangle {
            nx,
            ny,
            x0,
            x1,
            y0,
            y1,
        } => TriangleMesh::rectangle(*nx, *ny, *x0, *x1, *y0, *y1),
        MeshSpec::Files { node, ele } => {
            let node_text = std::fs::read_to_string(node).map_err(|e| {
                CoreError::Config(format!("cannot read mesh file {}: {e}", node.display()))
            })?;
            let ele_text = std::fs::read_to_string(ele).map_err(|e| {
                CoreError::Config(format!("cannot read mesh file {}: {e}", ele.display()))
            })?;
            load_triangle_mesh(&node_text, &ele_text)?
        }
    };
    let mech = if cfg.mechanism.exists() {
        Mechanism::from_file(&cfg.mechanism)?
    } else {
        return Err(CoreError::Config(format!(
            "mechanism file not found: {}",
            cfg.mechanism.display()
        )));
    };
    let n_species = mech.n_species();

    let qoi_species = mech
        .species_index(&cfg.qoi_species)
        .ok_or(CoreError::Config(format!(
            "QoI species {:?} is not in the mechanism",
            cfg.qoi_species
        )))?;

    let mut diffusivities = vec![cfg.diffusivity.0; n_species];
    for (name, value) in &cfg.diffusivity.1 {
        let idx = mech.species_index(name).ok_or(CoreError::Config(format!(
            "diffusivity override for unknown species {name:?}"
        )))?;
        diffusivities[idx] = *value;
    }
    let transport = TransportConfig {
        mu: cfg.mu,
        lambda_cond: cfg.lambda_cond,
        diffusivities,
        v_ref: cfg.v_ref,
        p_th: cfg.p_th,
    };

    // The y-extent of the inflow parabola: the bounding box of the
    // inflow-marked nodes.
    let geometry_bounds = |marker: i32| -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..mesh.n_nodes() {
            if mesh.boundary_marker(i) == marker {
                lo = lo.min(mesh.node(i)[1]);
                hi = hi.max(mesh.node(i)[1]);
            }
        }
        (hi > lo).then_some((lo, hi))
    };

    let solved_index = |name: &str| -> Result<Option<usize>> {
        let idx = mech.species_index(name).ok_or(CoreError::Config(format!(
            "boundary or initial data for unknown species {name:?}"
        )))?;
        // The last mechanism species closes the sum and carries no Dirichlet
        // row of its own.
        Ok((idx + 1 < n_species).then_some(idx))
    };

    let mut bcs = BoundaryConditions::none(mesh.n_nodes(), n_species);
    let mut has_outflow = false;
    for (marker, kind) in &cfg.boundaries {
        match kind {
            BcKind::Outflow => {
                has_outflow = true;
            }
            BcKind::Wall { temperature } => {
                for i in 0..mesh.n_nodes() {
                    if mesh.boundary_marker(i) == *marker {
                        bcs.set(i, COMP_VX, 0.0);
                        bcs.set(i, COMP_VY, 0.0);
                        bcs.set(i, COMP_T, temperature.eval(mesh.node(i)[0]));
                    }
                }
            }
            BcKind::Inflow {
                peak_velocity,
                temperature,
                species,
            } => {
                let (y0, y1) = geometry_bounds(*marker).ok_or(CoreError::Config(format!(
                    "inflow marker {marker} matches no boundary segment"
                )))?;
                let span = y1 - y0;
                let total: f64 = species.iter().map(|(_, v)| v).sum();
                if (total - 1.0).abs() > 1e-8 {
                    return Err(CoreError::Config(format!(
                        "inflow mass fractions on marker {marker} sum to {total}, expected 1"
                    )));
                }
                for i in 0..mesh.n_nodes() {
                    if mesh.boundary_marker(i) != *marker {
                        continue;
                    }
                    let p = mesh.node(i);
                    let s = (p[1] - y0) / span;
                    bcs.set(i, COMP_VX, peak_velocity * 4.0 * s * (1.0 - s));
                    bcs.set(i, COMP_VY, 0.0);
                    bcs.set(i, COMP_T, temperature.eval(p[0]));
                    for (name, value) in species {
                        if let Some(k) = solved_index(name)? {
                            bcs.set(i, COMP_W1 + k, *value);
                        }
                    }
                }
            }
        }
    }
    if !has_outflow {
        // No natural-pressure boundary: fix the pressure level at one node.
        bcs.pressure_pin = Some(0);
    }

    // Initial state.
    let mut state0 = SolutionState::zeros(mesh.n_nodes(), n_species);
    let init_total: f64 = cfg.initial_species.iter().map(|(_, v)| v).sum();
    if (init_total - 1.0).abs() > 1e-8 {
        return Err(CoreError::Config(format!(
            "initial mass fractions sum to {init_total}, expected 1"
        )));
    }
    // Extrude the first inflow parabola over the whole domain when asked.
    let inflow = cfg.boundaries.iter().find_map(|(m, k)| match k {
        BcKind::Inflow { peak_velocity, .. } => {
            geometry_bounds(*m).map(|(y0, y1)| (*peak_velocity, y0, y1))
        }
        _ => None,
    });
    for i in 0..mesh.n_nodes() {
        let p = mesh.node(i);
        state0.set(i, COMP_P, 0.0);
        if cfg.initial_velocity_profile {
            if let Some((peak, y0, y1)) = inflow {
                let s = ((p[1] - y0) / (y1 - y0)).clamp(0.0, 1.0);
                state0.set(i, COMP_VX, peak * 4.0 * s * (1.0 - s));
            }
        }
        state0.set(i, COMP_T, cfg.initial_temperature.eval(p[0]));
        for (name, value) in &cfg.initial_species {
            if let Some(k) = solved_index(name)? {
                state0.set(i, COMP_W1 + k, *value);
            }
        }
    }
    bcs.apply_to(&mut state0);

    Ok(Case {
        mesh,
        mech,
        transport,
        bcs,
        state0,
        qoi_species,
    })
}

/// Nodal values of a monitor source field: `T`, `speed`, or `w.<species>`.
pub fn source_field(
    state: &SolutionState,
    mech: &Mechanism,
    source: &str,
) -> Result<Vec<f64>> {
    let n = state.n_nodes;
    if source == "T" {
        return Ok((0..n).map(|i| state.temperature(i)).collect());
    }
    if source == "speed" {
        return Ok((0..n)
            .map(|i| {
                let v = state.velocity(i);
                v[0].hypot(v[1])
            })
            .collect());
    }
    if let Some(name) = source.strip_prefix("w.") {
        let idx = mech.species_index(name).ok_or(CoreError::Config(format!(
            "monitor source references unknown species {name:?}"
        )))?;
        return Ok((0..n).map(|i| state.mass_fractions(i)[idx]).collect());
    }
    Err(CoreError::Config(format!(
        "unknown field {source:?}: expected `T`, `speed`, or `w.<species>`"
    )))
}

/// The monitor driving vector psi: recovered gradient (order 1) or pure
/// second derivatives (order 2) of the configured source field on the given
/// mesh.
pub fn monitor_psi(
    mesh: &TriangleMesh,
    state: &SolutionState,
    mech: &Mechanism,
    spec: &MonitorSpec,
) -> Result<Vec<[f64; 2]>> {
    let field = source_field(state, mech, &spec.source)?;
    let recovered = match spec.order {
        1 => recover_gradient(mesh, &field)?,
        2 => recover_second_derivatives(mesh, &field)?,
        other => {
            return Err(CoreError::Config(format!(
                "monitor order must be 1 or 2, got {other}"
            )))
        }
    };
    Ok(recovered.values)
}
