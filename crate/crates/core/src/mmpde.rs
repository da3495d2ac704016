//! Moving-mesh PDE integration.
//!
//! The node positions x are the image of a time-dependent map from the
//! frozen computational mesh (coordinates xi). The map relaxes by a gradient
//! flow whose steady state places nodes according to the monitor function G:
//!
//! ```text
//! tau dx/dt = B ( sum_ij A_ij d2x/dxi_i dxi_j - sum_i b_i dx/dxi_i )
//! A_ij = grad xi_i . G^-1 grad xi_j
//! b_i  = sum_j grad xi_i . (dG^-1/dxi_j) grad xi_j
//! ```
//!
//! The balance function `B = 1/sqrt(sum_i A_ii^2 + b_i^2)` keeps the
//! right-hand side O(1) so one pseudo-time scale fits all nodes, and makes
//! the flow invariant under rescaling of the domain and of G. Boundary
//! nodes never move.
//!
//! Discretization: the right-hand side equals the interchanged form of the
//! flow `dxi/dt = (B/tau) div(G^-1 grad xi)`, so the nodal velocity is
//! evaluated as `dx/dt = (B/tau) J (K xi)_i / m_i`, where K is the P1
//! stiffness matrix of the diffusion tensor G^-1 assembled on the current
//! physical mesh, m the lumped mass, and J the star-averaged mapping
//! Jacobian. The flux form keeps the discrete equilibrium at exact flux
//! equidistribution and is monotone; a node-wise strong-form evaluation of
//! the second-derivative sum stalls in spurious equilibria once the monitor
//! is sharp relative to the mesh. The balance coefficients A_ij, b_i are
//! still evaluated node-wise (quadratic xi-star fits of G^-1 shared with
//! the recovery module). Explicit Euler steps with a tangling rollback
//! drive the flow; the step size tracks the explicit stability bound.
//! Since the computational mesh never changes, the patch fitters and
//! element data are built once and reused across steps.

use crate::error::{CoreError, Result};
use crate::mesh::TriangleMesh;
use crate::monitor::{sym_inverse_2x2, MonitorField};
use crate::recovery::{recover_gradient, PatchFitter};

/// The computational-to-physical map: frozen reference mesh plus movable
/// physical coordinates sharing its topology.
#[derive(Debug, Clone)]
pub struct MeshMapping {
    computational: TriangleMesh,
    physical_coords: Vec<[f64; 2]>,
    /// Relaxation time of the gradient flow (seconds).
    pub tau: f64,
}

impl MeshMapping {
    /// Starts from the identity map: physical coordinates equal to the
    /// computational ones.
    pub fn identity(computational: TriangleMesh) -> Self {
        let physical_coords = computational.nodes().to_vec();
        Self {
            computational,
            physical_coords,
            tau: 1.0,
        }
    }

    pub fn computational(&self) -> &TriangleMesh {
        &self.computational
    }

    pub fn physical_coords(&self) -> &[[f64; 2]] {
        &self.physical_coords
    }

    /// Replaces the physical coordinates (same topology). Intended for
    /// constructing test configurations; the solver moves nodes through
    /// [`step_mesh`].
    pub fn set_physical_coords(&mut self, coords: Vec<[f64; 2]>) -> Result<()> {
        if coords.len() != self.computational.n_nodes() {
            return Err(CoreError::Mesh(format!(
                "coordinate count {} does not match node count {}",
                coords.len(),
                self.computational.n_nodes()
            )));
        }
        self.physical_coords = coords;
        Ok(())
    }

    /// The physical mesh: computational topology with current coordinates.
    pub fn physical_mesh(&self) -> TriangleMesh {
        self.computational
            .with_coords(self.physical_coords.clone())
            .expect("coordinate count preserved")
    }

    /// Element-constant Jacobian `J = dx/dxi` of the P1 map on triangle `k`
    /// and its determinant. Errors when the element is inverted.
    pub fn mapping_jacobian(&self, k: usize) -> Result<([[f64; 2]; 2], f64)> {
        let grads = computational_gradients(&self.computational, k);
        let (j, det) = jacobian_from(&self.computational, &self.physical_coords, k, &grads);
        if det <= 0.0 {
            return Err(CoreError::TangledElement {
                element: k,
                area: det,
            });
        }
        Ok((j, det))
    }

    /// True iff every element of the physical mesh has positive area.
    pub fn is_untangled(&self) -> bool {
        (0..self.computational.n_triangles()).all(|k| {
            let tri = self.computational.triangle(k);
            let (pa, pb, pc) = (
                self.physical_coords[tri[0]],
                self.physical_coords[tri[1]],
                self.physical_coords[tri[2]],
            );
            (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]) > 0.0
        })
    }

    /// Smallest physical edge-equivalent length, `sqrt(min signed area)`.
    pub fn min_physical_scale(&self) -> f64 {
        let phys = &self.physical_coords;
        (0..self.computational.n_triangles())
            .map(|k| {
                let tri = self.computational.triangle(k);
                let (pa, pb, pc) = (phys[tri[0]], phys[tri[1]], phys[tri[2]]);
                let area2 =
                    (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
                (0.5 * area2).max(0.0).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn computational_gradients(mesh: &TriangleMesh, k: usize) -> [[f64; 2]; 3] {
    let tri = mesh.triangle(k);
    let area = mesh.signed_area(k);
    let mut grads = [[0.0f64; 2]; 3];
    for a in 0..3 {
        let pb = mesh.node(tri[(a + 1) % 3]);
        let pc = mesh.node(tri[(a + 2) % 3]);
        grads[a] = [(pb[1] - pc[1]) / (2.0 * area), (pc[0] - pb[0]) / (2.0 * area)];
    }
    grads
}

fn jacobian_from(
    mesh: &TriangleMesh,
    phys: &[[f64; 2]],
    k: usize,
    grads: &[[f64; 2]; 3],
) -> ([[f64; 2]; 2], f64) {
    let tri = mesh.triangle(k);
    let mut j = [[0.0f64; 2]; 2];
    for a in 0..3 {
        let x = phys[tri[a]];
        for d in 0..2 {
            for e in 0..2 {
                j[d][e] += x[d] * grads[a][e];
            }
        }
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    (j, det)
}

/// Node-wise coefficients of the mesh equation; exposed for diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct MmpdeCoefficients {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    /// Balance function value.
    pub balance: f64,
}

// Guards the balance denominator on exactly-uniform patches.
const BALANCE_GUARD: f64 = 1e-30;

/// Treatment of boundary nodes during mesh motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// All boundary nodes keep their coordinates exactly.
    #[default]
    Fixed,
    /// Nodes interior to a straight boundary segment slide along it,
    /// driven by the 1D restriction of the mesh equation (tangential
    /// equidistribution); corner nodes stay fixed. With the boundary fully
    /// pinned, a monitor with structure along a wall cannot equidistribute
    /// there, and the wall anchoring propagates into the domain.
    Slide,
}

/// A boundary node free to move along a straight segment.
#[derive(Debug, Clone, Copy)]
struct SlidingNode {
    node: usize,
    /// Boundary neighbors ordered along the tangent.
    prev: usize,
    next: usize,
    /// Unit tangent of the segment (computational = physical line).
    tangent: [f64; 2],
}

/// Per-mesh immutable data for the velocity assembly: patch fitters for the
/// interior nodes, element basis gradients and areas of the computational
/// mesh, the sliding-node table of the boundary, and the domain length
/// scale.
pub struct MmpdeWorkspace {
    fitters: Vec<Option<PatchFitter>>,
    elem_grads: Vec<[[f64; 2]; 3]>,
    elem_areas: Vec<f64>,
    sliding: Vec<SlidingNode>,
    /// Diameter of the computational domain. The mesh equation is
    /// evolved in coordinates normalized by this scale: the balance
    /// formula sums the dimensionless A_ii with b_i of dimension
    /// 1/length, so its O(1) property only holds on an O(1) domain.
    scale: f64,
}

impl MmpdeWorkspace {
    pub fn new(mesh: &TriangleMesh) -> Result<Self> {
        let mut fitters = Vec::with_capacity(mesh.n_nodes());
        for node in 0..mesh.n_nodes() {
            if mesh.is_boundary(node) {
                fitters.push(None);
            } else {
                fitters.push(Some(PatchFitter::new(mesh, node)?));
            }
        }
        let elem_grads = (0..mesh.n_triangles())
            .map(|k| computational_gradients(mesh, k))
            .collect();
        let elem_areas = (0..mesh.n_triangles()).map(|k| mesh.signed_area(k)).collect();
        Ok(Self {
            fitters,
            elem_grads,
            elem_areas,
            sliding: sliding_nodes(mesh),
            scale: mesh.diameter(),
        })
    }
}

/// Boundary nodes whose two boundary edges are collinear, with their
/// neighbors ordered along the tangent.
fn sliding_nodes(mesh: &TriangleMesh) -> Vec<SlidingNode> {
    use std::collections::HashMap;
    let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
    for tri in mesh.triangles() {
        for e in 0..3 {
            let a = tri[e];
            let b = tri[(e + 1) % 3];
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut bnd_neighbors: HashMap<usize, Vec<usize>> = HashMap::new();
    for (&(a, b), &c) in &counts {
        if c == 1 {
            bnd_neighbors.entry(a).or_default().push(b);
            bnd_neighbors.entry(b).or_default().push(a);
        }
    }
    let mut out = Vec::new();
    for (&node, nbrs) in &bnd_neighbors {
        if nbrs.len() != 2 {
            continue;
        }
        let p = mesh.node(node);
        let (q0, q1) = (mesh.node(nbrs[0]), mesh.node(nbrs[1]));
        let u = [p[0] - q0[0], p[1] - q0[1]];
        let v = [q1[0] - p[0], q1[1] - p[1]];
        let cross = u[0] * v[1] - u[1] * v[0];
        let scale = (u[0].hypot(u[1])) * (v[0].hypot(v[1]));
        if cross.abs() > 1e-10 * scale {
            continue; // corner
        }
        let t = {
            let d = [q1[0] - q0[0], q1[1] - q0[1]];
            let n = d[0].hypot(d[1]);
            [d[0] / n, d[1] / n]
        };
        out.push(SlidingNode {
            node,
            prev: nbrs[0],
            next: nbrs[1],
            tangent: t,
        });
    }
    out.sort_by_key(|s| s.node);
    out
}

struct VelocityField {
    velocity: Vec<[f64; 2]>,
    max_velocity: f64,
    /// Largest explicit-Euler rate over the nodes; `dt < 2/max_rate` is the
    /// linear stability bound of the update.
    max_rate: f64,
}

fn velocity_core(
    map: &MeshMapping,
    g: &MonitorField,
    ws: &MmpdeWorkspace,
    boundary: BoundaryMode,
) -> Result<VelocityField> {
    let mesh = map.computational();
    if g.n_nodes() != mesh.n_nodes() {
        return Err(CoreError::Monitor(format!(
            "monitor has {} nodes, mesh has {}",
            g.n_nodes(),
            mesh.n_nodes()
        )));
    }
    let n = mesh.n_nodes();
    let mut gi = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for m in &g.matrices {
        let inv = sym_inverse_2x2(*m)?;
        gi[0].push(inv[0]);
        gi[1].push(inv[1]);
        gi[2].push(inv[2]);
    }

    // (K xi)_i, lumped mass, and row magnitudes of the P1 stiffness of the
    // diffusion tensor G^-1 on the current physical mesh.
    let phys = &map.physical_coords;
    let mut kxi = vec![[0.0f64; 2]; n];
    let mut row_abs = vec![0.0f64; n];
    let mut mass = vec![0.0f64; n];
    for k in 0..mesh.n_triangles() {
        let tri = mesh.triangle(k);
        let (pa, pb, pc) = (phys[tri[0]], phys[tri[1]], phys[tri[2]]);
        let area =
            0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]));
        if area <= 0.0 {
            return Err(CoreError::TangledElement {
                element: k,
                area,
            });
        }
        let p = [pa, pb, pc];
        let mut grads = [[0.0f64; 2]; 3];
        for a in 0..3 {
            let b = p[(a + 1) % 3];
            let c = p[(a + 2) % 3];
            grads[a] = [(b[1] - c[1]) / (2.0 * area), (c[0] - b[0]) / (2.0 * area)];
        }
        // Element diffusion tensor: vertex mean of nodal G^-1.
        let ge = [
            (gi[0][tri[0]] + gi[0][tri[1]] + gi[0][tri[2]]) / 3.0,
            (gi[1][tri[0]] + gi[1][tri[1]] + gi[1][tri[2]]) / 3.0,
            (gi[2][tri[0]] + gi[2][tri[1]] + gi[2][tri[2]]) / 3.0,
        ];
        for a in 0..3 {
            for b in 0..3 {
                let gb = grads[b];
                let flux = [
                    ge[0] * gb[0] + ge[1] * gb[1],
                    ge[1] * gb[0] + ge[2] * gb[1],
                ];
                let kab = area * (grads[a][0] * flux[0] + grads[a][1] * flux[1]);
                let xi_b = mesh.node(tri[b]);
                kxi[tri[a]][0] += kab * xi_b[0];
                kxi[tri[a]][1] += kab * xi_b[1];
                row_abs[tri[a]] += kab.abs();
            }
            mass[tri[a]] += area / 3.0;
        }
    }

    let mut velocity = vec![[0.0f64; 2]; n];
    let mut max_rate = 0.0f64;
    let mut max_velocity = 0.0f64;
    let length = ws.scale;
    for node in 0..n {
        let Some(fitter) = &ws.fitters[node] else {
            continue;
        };
        let derivs = node_derivatives(map, ws, fitter, &gi, node)?;
        let coeff = coefficients_from(&derivs, length);
        let j = &derivs.jacobian;
        // Normalized coordinates: r_hat = L (K xi)/m; velocity in physical
        // units picks up another factor L.
        let r = [
            length * kxi[node][0] / mass[node],
            length * kxi[node][1] / mass[node],
        ];
        let scale = coeff.balance / map.tau;
        velocity[node] = [
            length * scale * (j[0][0] * r[0] + j[0][1] * r[1]),
            length * scale * (j[1][0] * r[0] + j[1][1] * r[1]),
        ];
        max_velocity = max_velocity.max(velocity[node][0].hypot(velocity[node][1]));
        let j_norm = (j[0][0] * j[0][0]
            + j[0][1] * j[0][1]
            + j[1][0] * j[1][0]
            + j[1][1] * j[1][1])
            .sqrt();
        max_rate = max_rate.max(scale * j_norm * row_abs[node] * length * length / mass[node]);
    }

    if boundary == BoundaryMode::Slide {
        for s in &ws.sliding {
            let (v, rate) = sliding_velocity(map, &gi, s, length)?;
            velocity[s.node] = v;
            max_velocity = max_velocity.max(v[0].hypot(v[1]));
            max_rate = max_rate.max(rate);
        }
    }
    Ok(VelocityField {
        velocity,
        max_velocity,
        max_rate,
    })
}

/// 1D mesh equation along a straight boundary segment: the node
/// equidistributes the tangential diffusion coefficient `t' G^-1 t` between
/// its two boundary neighbors.
fn sliding_velocity(
    map: &MeshMapping,
    gi: &[Vec<f64>; 3],
    s: &SlidingNode,
    length: f64,
) -> Result<([f64; 2], f64)> {
    let mesh = map.computational();
    let t = s.tangent;
    let coef = |n: usize| {
        t[0] * (gi[0][n] * t[0] + gi[1][n] * t[1]) + t[1] * (gi[1][n] * t[0] + gi[2][n] * t[1])
    };
    let arc_xi = |n: usize| {
        let q = mesh.node(n);
        t[0] * q[0] + t[1] * q[1]
    };
    let arc_x = |n: usize| {
        let q = map.physical_coords[n];
        t[0] * q[0] + t[1] * q[1]
    };
    // Order neighbors along the tangent.
    let (prev, next) = if arc_xi(s.prev) < arc_xi(s.next) {
        (s.prev, s.next)
    } else {
        (s.next, s.prev)
    };
    let (h_m, h_p) = (
        arc_xi(s.node) - arc_xi(prev),
        arc_xi(next) - arc_xi(s.node),
    );
    let (dx_m, dx_p) = (arc_x(s.node) - arc_x(prev), arc_x(next) - arc_x(s.node));
    if dx_m <= 0.0 || dx_p <= 0.0 {
        return Err(CoreError::Mesh(format!(
            "boundary node {} slid past a neighbor",
            s.node
        )));
    }
    let (a_m, a_i, a_p) = (coef(prev), coef(s.node), coef(next));
    let flux_m = 0.5 * (a_m + a_i) * h_m / dx_m;
    let flux_p = 0.5 * (a_i + a_p) * h_p / dx_p;
    let m_1d = 0.5 * (dx_m + dx_p);
    let j_1d = (dx_m + dx_p) / (h_m + h_p);
    let a11 = a_i / (j_1d * j_1d);
    // Same normalization as the interior assembly: b in 1/length units
    // times the domain scale, fluxes dimensionless, mass over length^2.
    let b1 = (a_p - a_m) / ((h_m + h_p) * j_1d * j_1d) * length;
    let balance = 1.0 / (a11 * a11 + b1 * b1 + BALANCE_GUARD).sqrt();
    let coef_v = balance / map.tau * j_1d * length * length / m_1d;
    let scale = coef_v * (flux_m - flux_p);
    // Euler rate: |dv/dx| = coef_v (flux-/dx- + flux+/dx+).
    let rate = 2.0 * coef_v * (flux_m / dx_m + flux_p / dx_p);
    Ok(([scale * t[0], scale * t[1]], rate))
}

struct NodeDerivatives {
    /// Star-averaged mapping Jacobian.
    jacobian: [[f64; 2]; 2],
    grad_xi: [[f64; 2]; 2],
    ginv_grad: [[f64; 2]; 3],
    ginv: [f64; 3],
}

fn node_derivatives(
    map: &MeshMapping,
    ws: &MmpdeWorkspace,
    fitter: &PatchFitter,
    gi: &[Vec<f64>; 3],
    node: usize,
) -> Result<NodeDerivatives> {
    let mesh = map.computational();
    // Star-averaged mapping Jacobian, weighted by computational areas.
    let mut j_avg = [[0.0f64; 2]; 2];
    let mut area_sum = 0.0;
    for &k in mesh.node_star(node) {
        let (j, det) = jacobian_from(mesh, &map.physical_coords, k, &ws.elem_grads[k]);
        if det <= 0.0 {
            return Err(CoreError::TangledElement {
                element: k,
                area: det,
            });
        }
        let a = ws.elem_areas[k];
        for d in 0..2 {
            for e in 0..2 {
                j_avg[d][e] += a * j[d][e];
            }
        }
        area_sum += a;
    }
    for row in &mut j_avg {
        for v in row {
            *v /= area_sum;
        }
    }
    let det = j_avg[0][0] * j_avg[1][1] - j_avg[0][1] * j_avg[1][0];
    if det <= 0.0 {
        return Err(CoreError::Mesh(format!(
            "mapping degenerate at node {node}: averaged Jacobian determinant {det:.3e}"
        )));
    }
    // grad xi_i = row i of J^-1.
    let grad_xi = [
        [j_avg[1][1] / det, -j_avg[0][1] / det],
        [-j_avg[1][0] / det, j_avg[0][0] / det],
    ];
    Ok(NodeDerivatives {
        jacobian: j_avg,
        grad_xi,
        ginv_grad: [
            fitter.fit(&gi[0]).gradient,
            fitter.fit(&gi[1]).gradient,
            fitter.fit(&gi[2]).gradient,
        ],
        ginv: [gi[0][node], gi[1][node], gi[2][node]],
    })
}

/// A_ij, b_i, and the balance in coordinates normalized by `length`:
/// b picks up one factor of the length scale so both balance terms are
/// dimensionless.
fn coefficients_from(derivs: &NodeDerivatives, length: f64) -> MmpdeCoefficients {
    let gx = &derivs.grad_xi;
    let gi = derivs.ginv;
    let dot_ginv = |u: &[f64; 2], m: &[f64; 3], v: &[f64; 2]| {
        u[0] * (m[0] * v[0] + m[1] * v[1]) + u[1] * (m[1] * v[0] + m[2] * v[1])
    };
    let mut a = [[0.0f64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            a[i][j] = dot_ginv(&gx[i], &gi, &gx[j]);
        }
    }
    // dG^-1/dxi_j assembled from the fitted entry gradients.
    let mut b = [0.0f64; 2];
    for i in 0..2 {
        for j in 0..2 {
            let dg = [
                derivs.ginv_grad[0][j],
                derivs.ginv_grad[1][j],
                derivs.ginv_grad[2][j],
            ];
            b[i] += dot_ginv(&gx[i], &dg, &gx[j]) * length;
        }
    }
    let denom =
        (a[0][0] * a[0][0] + a[1][1] * a[1][1] + b[0] * b[0] + b[1] * b[1] + BALANCE_GUARD).sqrt();
    MmpdeCoefficients {
        a,
        b,
        balance: 1.0 / denom,
    }
}

/// Pseudo-time velocity `dx/dt` of every node; zero on the boundary.
pub fn assemble_mmpde_velocity(map: &MeshMapping, g: &MonitorField) -> Result<Vec<[f64; 2]>> {
    let ws = MmpdeWorkspace::new(map.computational())?;
    Ok(velocity_core(map, g, &ws, BoundaryMode::Fixed)?.velocity)
}

/// Coefficients at a single interior node, for diagnostics and tests.
pub fn node_coefficients(
    map: &MeshMapping,
    g: &MonitorField,
    node: usize,
) -> Result<MmpdeCoefficients> {
    if map.computational().is_boundary(node) {
        return Err(CoreError::Mesh(format!(
            "node {node} is on the boundary; the mesh equation only drives interior nodes"
        )));
    }
    let ws = MmpdeWorkspace::new(map.computational())?;
    let n = map.computational().n_nodes();
    let mut gi = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for m in &g.matrices {
        let inv = sym_inverse_2x2(*m)?;
        gi[0].push(inv[0]);
        gi[1].push(inv[1]);
        gi[2].push(inv[2]);
    }
    let fitter = ws.fitters[node].as_ref().expect("interior node has a fitter");
    let derivs = node_derivatives(map, &ws, fitter, &gi, node)?;
    Ok(coefficients_from(&derivs, ws.scale))
}

/// Result of one accepted explicit Euler mesh step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    /// Step size actually taken, after any rollback halvings.
    pub accepted_dt: f64,
    pub max_displacement: f64,
    pub max_velocity: f64,
}

/// Forward-Euler update of the physical coordinates with rollback: whenever
/// the update tangles an element the step is retried at half the size, up
/// to 20 halvings. Boundary nodes do not move.
pub fn step_mesh(map: &mut MeshMapping, g: &MonitorField, dt: f64) -> Result<StepOutcome> {
    let ws = MmpdeWorkspace::new(map.computational())?;
    let field = velocity_core(map, g, &ws, BoundaryMode::Fixed)?;
    apply_euler_step(map, &field, dt)
}

fn apply_euler_step(map: &mut MeshMapping, field: &VelocityField, dt: f64) -> Result<StepOutcome> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(CoreError::Step(format!("mesh step needs dt > 0, got {dt}")));
    }
    let original = map.physical_coords.clone();
    let mut dt_try = dt;
    for _ in 0..=20 {
        for (p, (o, v)) in map
            .physical_coords
            .iter_mut()
            .zip(original.iter().zip(&field.velocity))
        {
            p[0] = o[0] + dt_try * v[0];
            p[1] = o[1] + dt_try * v[1];
        }
        if map.is_untangled() {
            return Ok(StepOutcome {
                accepted_dt: dt_try,
                max_displacement: field.max_velocity * dt_try,
                max_velocity: field.max_velocity,
            });
        }
        dt_try *= 0.5;
    }
    map.physical_coords = original;
    Err(CoreError::MeshStall { halvings: 20 })
}

/// Options for [`relax_mesh`].
#[derive(Debug, Clone, Copy)]
pub struct RelaxOptions {
    pub max_steps: usize,
    /// Converged when the max node displacement of a step falls below this
    /// absolute length.
    pub displacement_tol: f64,
    /// Per-step displacement cap as a fraction of the smallest physical
    /// element scale.
    pub step_fraction: f64,
    /// Safety factor on the explicit stability bound `2/max_rate`.
    pub stability_safety: f64,
    /// Upper bound for the pseudo-time step.
    pub dt_max: f64,
    /// Resume value for the step size; `None` starts from the caps.
    pub dt0: Option<f64>,
    pub boundary: BoundaryMode,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            max_steps: 2000,
            displacement_tol: 0.0,
            step_fraction: 0.5,
            stability_safety: 0.9,
            dt_max: 1.0,
            dt0: None,
            boundary: BoundaryMode::Fixed,
        }
    }
}

/// Outcome of a relaxation loop.
#[derive(Debug, Clone, Copy)]
pub struct RelaxReport {
    pub steps: usize,
    pub converged: bool,
    pub last_max_displacement: f64,
    /// Step size in effect after the loop; feed back as `dt0` to resume.
    pub dt: f64,
}

/// Repeated mesh stepping under a (possibly position-dependent) monitor.
/// `monitor_of` is re-evaluated from the current mapping before every step.
/// The step size tracks the explicit stability bound of the velocity field
/// and is additionally capped so no node jumps further than a fraction of
/// the smallest cell.
pub fn relax_mesh<F>(
    map: &mut MeshMapping,
    monitor_of: F,
    opts: &RelaxOptions,
) -> Result<RelaxReport>
where
    F: FnMut(&MeshMapping) -> Result<MonitorField>,
{
    let ws = MmpdeWorkspace::new(map.computational())?;
    relax_mesh_with(map, monitor_of, opts, &ws)
}

/// [`relax_mesh`] with a caller-held workspace; the coupled driver keeps
/// one alive for the whole run since the computational mesh never changes.
pub fn relax_mesh_with<F>(
    map: &mut MeshMapping,
    mut monitor_of: F,
    opts: &RelaxOptions,
    ws: &MmpdeWorkspace,
) -> Result<RelaxReport>
where
    F: FnMut(&MeshMapping) -> Result<MonitorField>,
{
    let mut dt_prev = opts.dt0;
    let mut last_disp = f64::INFINITY;
    for step in 0..opts.max_steps {
        let g = monitor_of(map)?;
        let field = velocity_core(map, &g, ws, opts.boundary)?;
        let mut dt = match dt_prev {
            Some(d) => (d * 1.5).min(opts.dt_max),
            None => opts.dt_max,
        };
        if field.max_rate > 0.0 {
            dt = dt.min(opts.stability_safety * 2.0 / field.max_rate);
        }
        if field.max_velocity > 0.0 {
            let cap = opts.step_fraction * map.min_physical_scale();
            dt = dt.min(cap / field.max_velocity);
        }
        let out = apply_euler_step(map, &field, dt)?;
        dt_prev = Some(out.accepted_dt);
        last_disp = out.max_displacement;
        if last_disp < opts.displacement_tol {
            return Ok(RelaxReport {
                steps: step + 1,
                converged: true,
                last_max_displacement: last_disp,
                dt: out.accepted_dt,
            });
        }
    }
    Ok(RelaxReport {
        steps: opts.max_steps,
        converged: last_disp < opts.displacement_tol,
        last_max_displacement: last_disp,
        dt: dt_prev.unwrap_or(opts.dt_max),
    })
}

/// Mesh-velocity convection `(dx/dt . grad) u` evaluated at the nodes, with
/// the gradient recovered on the current physical mesh. This is the
/// correction the physics residual needs on a moving mesh.
pub fn ale_convective_term(
    map: &MeshMapping,
    mesh_velocity: &[[f64; 2]],
    u: &[f64],
) -> Result<Vec<f64>> {
    if mesh_velocity.len() != u.len() || u.len() != map.computational().n_nodes() {
        return Err(CoreError::Mesh(format!(
            "inconsistent lengths: velocity {}, field {}, nodes {}",
            mesh_velocity.len(),
            u.len(),
            map.computational().n_nodes()
        )));
    }
    let physical = map.physical_mesh();
    let grad = recover_gradient(&physical, u)?;
    Ok(mesh_velocity
        .iter()
        .zip(&grad.values)
        .map(|(w, g)| w[0] * g[0] + w[1] * g[1])
        .collect())
}

/// Reference node abscissas equidistributing a 1D density `m` over
/// `[x0, x1]`: node k of `n_nodes` sits where the cumulative integral of m
/// reaches fraction k/(n_nodes-1) of the total. Computed by trapezoidal
/// quadrature on `n_samples` intervals and monotone inversion; independent
/// of the mesh-motion machinery it serves as an oracle for.
pub fn equidistribute_1d<M: Fn(f64) -> f64>(
    m: M,
    x0: f64,
    x1: f64,
    n_nodes: usize,
    n_samples: usize,
) -> Vec<f64> {
    assert!(n_nodes >= 2 && n_samples >= n_nodes);
    let h = (x1 - x0) / n_samples as f64;
    let mut cumulative = Vec::with_capacity(n_samples + 1);
    cumulative.push(0.0);
    let mut acc = 0.0;
    let mut prev = m(x0);
    for s in 1..=n_samples {
        let x = x0 + h * s as f64;
        let cur = m(x);
        acc += 0.5 * h * (prev + cur);
        cumulative.push(acc);
        prev = cur;
    }
    let total = acc;
    let mut out = Vec::with_capacity(n_nodes);
    let mut cursor = 0usize;
    for k in 0..n_nodes {
        let target = total * k as f64 / (n_nodes - 1) as f64;
        while cursor + 1 < cumulative.len() && cumulative[cursor + 1] < target {
            cursor += 1;
        }
        let c0 = cumulative[cursor];
        let c1 = cumulative[(cursor + 1).min(n_samples)];
        let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        out.push(x0 + h * (cursor as f64 + frac));
    }
    out[n_nodes - 1] = x1;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TriangleMesh;

    fn strip(nx: usize, ny: usize) -> TriangleMesh {
        TriangleMesh::rectangle(nx, ny, 0.0, 1.0, 0.0, 0.125)
    }

    #[test]
    fn jacobian_identity_scale_shear() {
        let mesh = strip(5, 3);
        let mut map = MeshMapping::identity(mesh);
        for k in 0..map.computational().n_triangles() {
            let (j, det) = map.mapping_jacobian(k).unwrap();
            assert!((j[0][0] - 1.0).abs() < 1e-13 && (j[1][1] - 1.0).abs() < 1e-13);
            assert!(j[0][1].abs() < 1e-13 && j[1][0].abs() < 1e-13);
            assert!((det - 1.0).abs() < 1e-13);
        }
        // x = 2 xi
        let doubled: Vec<[f64; 2]> = map
            .computational()
            .nodes()
            .iter()
            .map(|p| [2.0 * p[0], 2.0 * p[1]])
            .collect();
        map.set_physical_coords(doubled).unwrap();
        let (j, det) = map.mapping_jacobian(0).unwrap();
        assert!((j[0][0] - 2.0).abs() < 1e-13 && (j[1][1] - 2.0).abs() < 1e-13);
        assert!((det - 4.0).abs() < 1e-12);
        // Shear x = (xi1 + 0.1 xi2, xi2)
        let sheared: Vec<[f64; 2]> = map
            .computational()
            .nodes()
            .iter()
            .map(|p| [p[0] + 0.1 * p[1], p[1]])
            .collect();
        map.set_physical_coords(sheared).unwrap();
        let (_, det) = map.mapping_jacobian(0).unwrap();
        assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_monitor_identity_map_is_steady() {
        let map = MeshMapping::identity(strip(9, 5));
        let g = MonitorField::identity(map.computational().n_nodes(), 1.0);
        let v = assemble_mmpde_velocity(&map, &g).unwrap();
        for w in &v {
            assert!(w[0].abs() < 1e-11 && w[1].abs() < 1e-11, "{w:?}");
        }
    }

    #[test]
    fn identity_monitor_affine_map_is_steady() {
        let mut map = MeshMapping::identity(strip(9, 5));
        let affine: Vec<[f64; 2]> = map
            .computational()
            .nodes()
            .iter()
            .map(|p| [1.4 * p[0] + 0.2 * p[1] + 3.0, 0.9 * p[1] - 1.0])
            .collect();
        map.set_physical_coords(affine).unwrap();
        let g = MonitorField::identity(map.computational().n_nodes(), 1.0);
        let v = assemble_mmpde_velocity(&map, &g).unwrap();
        for w in &v {
            assert!(w[0].abs() < 1e-11 && w[1].abs() < 1e-11, "{w:?}");
        }
    }

    #[test]
    fn zero_velocity_step_keeps_mesh() {
        let mut map = MeshMapping::identity(strip(9, 5));
        let g = MonitorField::identity(map.computational().n_nodes(), 1.0);
        let before = map.physical_coords().to_vec();
        let out = step_mesh(&mut map, &g, 5.0).unwrap();
        assert_eq!(out.accepted_dt, 5.0);
        for (a, b) in before.iter().zip(map.physical_coords()) {
            assert_eq!(a, b);
        }
    }

    fn stratified_monitor(map: &MeshMapping, alpha: f64) -> MonitorField {
        // G = diag(M(x1), 1) with a strong bump at x1 = 0.5.
        let mut g = MonitorField::identity(map.computational().n_nodes(), alpha);
        for (i, p) in map.physical_coords().iter().enumerate() {
            let m = 1.0 + 50.0 * (-500.0 * (p[0] - 0.5) * (p[0] - 0.5)).exp();
            g.matrices[i] = [m, 0.0, 1.0];
        }
        g
    }

    #[test]
    fn oversized_step_rolls_back() {
        let mut map = MeshMapping::identity(strip(17, 3));
        let g = stratified_monitor(&map, 1.0);
        let v = assemble_mmpde_velocity(&map, &g).unwrap();
        let vmax = v.iter().map(|w| w[0].hypot(w[1])).fold(0.0f64, f64::max);
        assert!(vmax > 0.0);
        // Request a step that would move the fastest node across several
        // cells: it must be halved, not invert elements.
        let dt_req = 3.0 * (1.0 / 16.0) / vmax;
        let out = step_mesh(&mut map, &g, dt_req).unwrap();
        assert!(out.accepted_dt < dt_req);
        assert!(map.is_untangled());
    }

    #[test]
    fn boundary_nodes_never_move() {
        let mut map = MeshMapping::identity(strip(17, 5));
        let original = map.physical_coords().to_vec();
        let monitor = |m: &MeshMapping| Ok(stratified_monitor(m, 1.0));
        let opts = RelaxOptions {
            max_steps: 50,
            ..Default::default()
        };
        relax_mesh(&mut map, monitor, &opts).unwrap();
        let mesh = map.computational();
        let mut interior_moved = false;
        for i in 0..mesh.n_nodes() {
            if mesh.is_boundary(i) {
                assert_eq!(original[i], map.physical_coords()[i], "boundary node {i}");
            } else if (original[i][0] - map.physical_coords()[i][0]).abs() > 1e-6 {
                interior_moved = true;
            }
        }
        assert!(interior_moved, "relaxation did nothing");
    }

    #[test]
    fn monitor_scaling_invariance() {
        let mut map = MeshMapping::identity(strip(17, 5));
        // Perturb interior nodes so the state is not a steady point.
        let mut coords = map.physical_coords().to_vec();
        for (i, c) in coords.iter_mut().enumerate() {
            if !map.computational().is_boundary(i) {
                c[0] += 0.003 * ((i * 7919 % 13) as f64 - 6.0) / 6.0;
            }
        }
        map.set_physical_coords(coords).unwrap();
        let g1 = stratified_monitor(&map, 1.0);
        let mut g2 = g1.clone();
        for m in &mut g2.matrices {
            for v in m.iter_mut() {
                *v *= 37.5;
            }
        }
        let v1 = assemble_mmpde_velocity(&map, &g1).unwrap();
        let v2 = assemble_mmpde_velocity(&map, &g2).unwrap();
        let scale = v1.iter().map(|v| v[0].hypot(v[1])).fold(0.0f64, f64::max);
        for (a, b) in v1.iter().zip(&v2) {
            for d in 0..2 {
                assert!((a[d] - b[d]).abs() <= 1e-10 * scale, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn domain_scaling_scales_velocity() {
        let base = MeshMapping::identity(strip(17, 5));
        let mut perturbed = base.clone();
        let mut coords = perturbed.physical_coords().to_vec();
        for (i, c) in coords.iter_mut().enumerate() {
            if !perturbed.computational().is_boundary(i) {
                c[0] += 0.004 * ((i % 5) as f64 - 2.0);
            }
        }
        perturbed.set_physical_coords(coords).unwrap();
        let g = stratified_monitor(&perturbed, 1.0);
        let v = assemble_mmpde_velocity(&perturbed, &g).unwrap();

        let s = 3.0;
        let mut scaled = perturbed.clone();
        let coords: Vec<[f64; 2]> = scaled
            .physical_coords()
            .iter()
            .map(|p| [s * p[0], s * p[1]])
            .collect();
        scaled.set_physical_coords(coords).unwrap();
        // Same nodal monitor values (the monitor rides with the nodes).
        let vs = assemble_mmpde_velocity(&scaled, &g).unwrap();
        let vmax = v.iter().map(|w| w[0].hypot(w[1])).fold(0.0f64, f64::max);
        for (a, b) in v.iter().zip(&vs) {
            for d in 0..2 {
                assert!((s * a[d] - b[d]).abs() <= 1e-9 * s * vmax, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn relaxation_converges_to_equidistribution() {
        // Shrunk version of the acceptance case: the steady abscissas of a
        // 1D-stratified monitor must equidistribute its density. Wall nodes
        // slide; with the boundary fully pinned the wall rows would anchor
        // the interior away from the 1D profile.
        let nx = 33;
        let mesh = TriangleMesh::rectangle(nx, 5, 0.0, 1.0, 0.0, 0.125);
        let mut map = MeshMapping::identity(mesh);
        let monitor = |m: &MeshMapping| Ok(stratified_monitor(m, 1.0));
        let opts = RelaxOptions {
            max_steps: 60_000,
            displacement_tol: 1e-9,
            boundary: BoundaryMode::Slide,
            ..Default::default()
        };
        let report = relax_mesh(&mut map, monitor, &opts).unwrap();
        assert!(map.is_untangled());
        let density = |x: f64| 1.0 + 50.0 * (-500.0 * (x - 0.5) * (x - 0.5)).exp();
        let oracle = equidistribute_1d(density, 0.0, 1.0, nx, 20_000);
        // Every row must track the 1D solution to the resolution limit of
        // this coarse mesh.
        let mut max_err = 0.0f64;
        for row in 0..5 {
            for i in 0..nx {
                let x = map.physical_coords()[row * nx + i][0];
                max_err = max_err.max((x - oracle[i]).abs());
            }
        }
        assert!(
            max_err < 0.05,
            "equidistribution error {max_err:.4} (steps {}, converged {})",
            report.steps,
            report.converged
        );
    }

    #[test]
    fn ale_term_trivial_cases() {
        let map = MeshMapping::identity(strip(9, 5));
        let n = map.computational().n_nodes();
        let u: Vec<f64> = map.physical_coords().iter().map(|p| p[0]).collect();
        // Zero mesh velocity.
        let zero = vec![[0.0, 0.0]; n];
        for v in ale_convective_term(&map, &zero, &u).unwrap() {
            assert_eq!(v, 0.0);
        }
        // Constant field.
        let w = vec![[0.5, -0.2]; n];
        let constant = vec![3.0; n];
        for v in ale_convective_term(&map, &w, &constant).unwrap() {
            assert!(v.abs() < 1e-13);
        }
        // u = x1 with velocity (c, 0) gives c everywhere.
        let c = 0.37;
        let vel = vec![[c, 0.0]; n];
        for v in ale_convective_term(&map, &vel, &u).unwrap() {
            assert!((v - c).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_uniform_density_is_uniform_grid() {
        let xs = equidistribute_1d(|_| 1.0, 0.0, 2.0, 11, 1000);
        for (k, x) in xs.iter().enumerate() {
            assert!((x - 0.2 * k as f64).abs() < 1e-9);
        }
    }
}
