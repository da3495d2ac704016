//! Fixed-topology triangular mesh: geometry, connectivity, boundary
//! classification, quality metrics, and file I/O.

mod triangle_io;
mod vtk;

pub use triangle_io::load_triangle_mesh;
pub use vtk::{write_vtk, VtkField};

use crate::error::{CoreError, Result};

/// A 2D triangulation with per-node boundary markers.
///
/// The same type serves as the physical mesh (moving node coordinates) and
/// as the computational mesh (frozen reference coordinates). Topology never
/// changes after construction; all triangles are stored counterclockwise.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_markers: Vec<i32>,
    node_stars: Vec<Vec<usize>>,
}

impl TriangleMesh {
    /// Builds a mesh from raw arrays, reorienting clockwise triangles and
    /// deriving node stars. When `markers` is `None`, boundary nodes get
    /// marker 1 and interior nodes 0; when given, markers are checked
    /// against the topological boundary.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        mut triangles: Vec<[usize; 3]>,
        markers: Option<Vec<i32>>,
    ) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(CoreError::Mesh("mesh needs at least 3 nodes".into()));
        }
        for (k, tri) in triangles.iter_mut().enumerate() {
            for &v in tri.iter() {
                if v >= nodes.len() {
                    return Err(CoreError::Mesh(format!(
                        "triangle {k} has dangling index {v} (only {} nodes)",
                        nodes.len()
                    )));
                }
            }
            let area = signed_area(&nodes, tri);
            if area < 0.0 {
                tri.swap(1, 2);
            } else if area == 0.0 {
                return Err(CoreError::TangledElement { element: k, area });
            }
        }

        let mut node_stars = vec![Vec::new(); nodes.len()];
        for (k, tri) in triangles.iter().enumerate() {
            for &v in tri {
                node_stars[v].push(k);
            }
        }
        if let Some(i) = node_stars.iter().position(|s| s.is_empty()) {
            return Err(CoreError::Mesh(format!(
                "node {i} is not referenced by any triangle"
            )));
        }

        let on_boundary = topological_boundary(nodes.len(), &triangles);
        let boundary_markers = match markers {
            Some(m) => {
                if m.len() != nodes.len() {
                    return Err(CoreError::Mesh(format!(
                        "marker count {} does not match node count {}",
                        m.len(),
                        nodes.len()
                    )));
                }
                for (i, (&mk, &on_b)) in m.iter().zip(on_boundary.iter()).enumerate() {
                    if (mk > 0) != on_b {
                        return Err(CoreError::Mesh(format!(
                            "boundary marker inconsistency at node {i}: marker {mk} but node is {}",
                            if on_b { "on the boundary" } else { "interior" }
                        )));
                    }
                }
                m
            }
            None => on_boundary.iter().map(|&b| i32::from(b)).collect(),
        };

        Ok(Self {
            nodes,
            triangles,
            boundary_markers,
            node_stars,
        })
    }

    /// Uniform triangulation of the rectangle `[x0,x1] x [y0,y1]` with
    /// `nx` by `ny` nodes. Each grid cell is split along the `/` diagonal.
    ///
    /// Boundary markers: 1 on `x = x0`, 2 on `y = y0` and `y = y1`
    /// (excluding the left corners), 3 on `x = x1` (excluding corners).
    /// This matches the inflow/wall/outflow precedence of the channel cases.
    pub fn rectangle(nx: usize, ny: usize, x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        assert!(nx >= 2 && ny >= 2, "rectangle mesh needs at least 2x2 nodes");
        let mut nodes = Vec::with_capacity(nx * ny);
        let mut markers = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let x = x0 + (x1 - x0) * i as f64 / (nx - 1) as f64;
                let y = y0 + (y1 - y0) * j as f64 / (ny - 1) as f64;
                nodes.push([x, y]);
                let marker = if i == 0 {
                    1
                } else if j == 0 || j == ny - 1 {
                    2
                } else if i == nx - 1 {
                    3
                } else {
                    0
                };
                markers.push(marker);
            }
        }
        let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
        let id = |i: usize, j: usize| j * nx + i;
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Self::new(nodes, triangles, Some(markers)).expect("rectangle mesh is always valid")
    }

    /// Same topology with replaced node coordinates.
    pub fn with_coords(&self, coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.len() != self.nodes.len() {
            return Err(CoreError::Mesh(format!(
                "coordinate count {} does not match node count {}",
                coords.len(),
                self.nodes.len()
            )));
        }
        Ok(Self {
            nodes: coords,
            triangles: self.triangles.clone(),
            boundary_markers: self.boundary_markers.clone(),
            node_stars: self.node_stars.clone(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn node(&self, i: usize) -> [f64; 2] {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangle(&self, k: usize) -> [usize; 3] {
        self.triangles[k]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_marker(&self, i: usize) -> i32 {
        self.boundary_markers[i]
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary_markers[i] > 0
    }

    /// Triangles incident to node `i`.
    pub fn node_star(&self, i: usize) -> &[usize] {
        &self.node_stars[i]
    }

    /// Distinct nodes sharing an element with node `i`, excluding `i` itself.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(8);
        for &k in &self.node_stars[i] {
            for &v in &self.triangles[k] {
                if v != i && !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    pub fn signed_area(&self, k: usize) -> f64 {
        signed_area(&self.nodes, &self.triangles[k])
    }

    pub fn centroid(&self, k: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[k];
        [
            (self.nodes[a][0] + self.nodes[b][0] + self.nodes[c][0]) / 3.0,
            (self.nodes[a][1] + self.nodes[b][1] + self.nodes[c][1]) / 3.0,
        ]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|k| self.signed_area(k)).sum()
    }

    /// Diagonal of the bounding box; used as the domain length scale.
    pub fn diameter(&self) -> f64 {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
    }

    /// Area enclosed by the outer boundary loop (shoelace formula).
    pub fn boundary_loop_area(&self) -> Result<f64> {
        // Directed boundary edges: those whose reverse never occurs.
        let mut edges = std::collections::HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let a = tri[e];
                let b = tri[(e + 1) % 3];
                edges.insert((a, b), ());
            }
        }
        let mut next = std::collections::HashMap::new();
        for &(a, b) in edges.keys() {
            if !edges.contains_key(&(b, a)) {
                next.insert(a, b);
            }
        }
        let start = *next
            .keys()
            .next()
            .ok_or_else(|| CoreError::Mesh("mesh has no boundary".into()))?;
        let mut area2 = 0.0;
        let mut a = start;
        let mut count = 0usize;
        loop {
            let b = *next
                .get(&a)
                .ok_or_else(|| CoreError::Mesh("boundary loop is not closed".into()))?;
            area2 += self.nodes[a][0] * self.nodes[b][1] - self.nodes[b][0] * self.nodes[a][1];
            a = b;
            count += 1;
            if a == start {
                break;
            }
            if count > next.len() {
                return Err(CoreError::Mesh("boundary walk did not close".into()));
            }
        }
        if count != next.len() {
            return Err(CoreError::Mesh(
                "boundary has more than one loop (holes are not supported)".into(),
            ));
        }
        Ok(0.5 * area2)
    }
}

fn signed_area(nodes: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = *tri;
    let (pa, pb, pc) = (nodes[a], nodes[b], nodes[c]);
    0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
}

/// Per-node flags: true iff the node lies on an edge shared by one triangle.
fn topological_boundary(n_nodes: usize, triangles: &[[usize; 3]]) -> Vec<bool> {
    let mut counts = std::collections::HashMap::new();
    for tri in triangles {
        for e in 0..3 {
            let a = tri[e];
            let b = tri[(e + 1) % 3];
            let key = (a.min(b), a.max(b));
            *counts.entry(key).or_insert(0u32) += 1;
        }
    }
    let mut flags = vec![false; n_nodes];
    for (&(a, b), &c) in &counts {
        if c == 1 {
            flags[a] = true;
            flags[b] = true;
        }
    }
    flags
}

/// Exact P1 geometric quantities of a single triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    /// Element area (m^2).
    pub area: f64,
    /// Gradients of the three barycentric basis functions (1/m); they sum
    /// to the zero vector.
    pub basis_gradients: [[f64; 2]; 3],
    /// Diameter of the disk with the same area: `2 sqrt(area/pi)`.
    pub h_sharp: f64,
    /// Length of the chord through the centroid along the query direction.
    pub h_dir: f64,
    /// Full extent of the element along the query direction (the width of
    /// its projection onto the direction). Always >= `h_dir`; this is the
    /// streamwise length the stabilization weights use.
    pub h_span: f64,
}

/// Computes the P1 geometry of element `k`. `direction` must have unit norm;
/// it defines the streamwise length `h_dir` (chord through the centroid).
pub fn element_geometry(
    mesh: &TriangleMesh,
    k: usize,
    direction: [f64; 2],
) -> Result<ElementGeometry> {
    let tri = mesh.triangle(k);
    let p: Vec<[f64; 2]> = tri.iter().map(|&v| mesh.node(v)).collect();
    let area = mesh.signed_area(k);
    if area <= 0.0 {
        return Err(CoreError::TangledElement { element: k, area });
    }
    // grad phi_a = rot90(p_c - p_b) / (2 area) with (a, b, c) cyclic.
    let mut basis_gradients = [[0.0; 2]; 3];
    for a in 0..3 {
        let b = p[(a + 1) % 3];
        let c = p[(a + 2) % 3];
        basis_gradients[a] = [(b[1] - c[1]) / (2.0 * area), (c[0] - b[0]) / (2.0 * area)];
    }
    let centroid = [
        (p[0][0] + p[1][0] + p[2][0]) / 3.0,
        (p[0][1] + p[1][1] + p[2][1]) / 3.0,
    ];
    let h_dir = chord_through(&p, centroid, direction);
    let mut proj_min = f64::INFINITY;
    let mut proj_max = f64::NEG_INFINITY;
    for q in &p {
        let s = q[0] * direction[0] + q[1] * direction[1];
        proj_min = proj_min.min(s);
        proj_max = proj_max.max(s);
    }
    Ok(ElementGeometry {
        area,
        basis_gradients,
        h_sharp: 2.0 * (area / std::f64::consts::PI).sqrt(),
        h_dir,
        h_span: proj_max - proj_min,
    })
}

/// Unit direction of the longest edge of element `k`; the fallback
/// streamwise direction where the local velocity vanishes.
pub fn longest_edge_direction(mesh: &TriangleMesh, k: usize) -> [f64; 2] {
    let tri = mesh.triangle(k);
    let mut best = [1.0, 0.0];
    let mut best_len = -1.0;
    for e in 0..3 {
        let a = mesh.node(tri[e]);
        let b = mesh.node(tri[(e + 1) % 3]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if len > best_len {
            best_len = len;
            best = [d[0] / len, d[1] / len];
        }
    }
    best
}

/// Length of the intersection of the triangle with the line through `point`
/// along `dir`.
fn chord_through(p: &[[f64; 2]], point: [f64; 2], dir: [f64; 2]) -> f64 {
    let mut t_min = f64::INFINITY;
    let mut t_max = f64::NEG_INFINITY;
    for e in 0..3 {
        let a = p[e];
        let b = p[(e + 1) % 3];
        let eb = [b[0] - a[0], b[1] - a[1]];
        // point + t dir = a + s (b - a)
        let det = dir[0] * (-eb[1]) - dir[1] * (-eb[0]);
        if det.abs() < 1e-300 {
            continue;
        }
        let rx = a[0] - point[0];
        let ry = a[1] - point[1];
        let t = (rx * (-eb[1]) - ry * (-eb[0])) / det;
        let s = (dir[0] * ry - dir[1] * rx) / det;
        if (-1e-12..=1.0 + 1e-12).contains(&s) {
            t_min = t_min.min(t);
            t_max = t_max.max(t);
        }
    }
    if t_max > t_min {
        t_max - t_min
    } else {
        0.0
    }
}

/// Summary statistics of the current node positions.
#[derive(Debug, Clone, Copy)]
pub struct QualityReport {
    pub min_area: f64,
    pub max_area: f64,
    /// Smallest interior angle over all elements, degrees.
    pub min_angle_deg: f64,
    /// True iff any signed area is non-positive.
    pub tangled: bool,
}

pub fn mesh_quality(mesh: &TriangleMesh) -> QualityReport {
    let mut min_area = f64::INFINITY;
    let mut max_area = f64::NEG_INFINITY;
    let mut min_angle = f64::INFINITY;
    let mut tangled = false;
    for k in 0..mesh.n_triangles() {
        let area = mesh.signed_area(k);
        min_area = min_area.min(area);
        max_area = max_area.max(area);
        if area <= 0.0 {
            tangled = true;
        }
        let tri = mesh.triangle(k);
        for a in 0..3 {
            let pa = mesh.node(tri[a]);
            let pb = mesh.node(tri[(a + 1) % 3]);
            let pc = mesh.node(tri[(a + 2) % 3]);
            let u = [pb[0] - pa[0], pb[1] - pa[1]];
            let v = [pc[0] - pa[0], pc[1] - pa[1]];
            let nu = (u[0] * u[0] + u[1] * u[1]).sqrt();
            let nv = (v[0] * v[0] + v[1] * v[1]).sqrt();
            if nu > 0.0 && nv > 0.0 {
                let cosv = ((u[0] * v[0] + u[1] * v[1]) / (nu * nv)).clamp(-1.0, 1.0);
                min_angle = min_angle.min(cosv.acos().to_degrees());
            }
        }
    }
    QualityReport {
        min_area,
        max_area,
        min_angle_deg: min_angle,
        tangled,
    }
}
