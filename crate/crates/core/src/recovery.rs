//! Nodal recovery of first and second derivatives of P1 fields.
//!
//! First derivatives use the patch-averaging variant of Zienkiewicz-Zhu
//! recovery: at each node the constant element gradients of the incident
//! triangles are averaged with area weights. Second derivatives come from a
//! least-squares quadratic fit over the node's patch. Both operators are
//! exact on the polynomial degree they target.

use crate::error::{CoreError, Result};
use crate::mesh::TriangleMesh;
use nalgebra::DMatrix;

/// Per-node recovered derivative data.
#[derive(Debug, Clone)]
pub struct RecoveredField {
    /// One 2-vector per mesh node. For `order` 1 this is the recovered
    /// gradient, for `order` 2 the pure second derivatives
    /// `(d2u/dx1^2, d2u/dx2^2)`.
    pub values: Vec<[f64; 2]>,
    pub order: u8,
}

/// Area-weighted average of the constant element gradients over each node's
/// star. Boundary nodes use their one-sided star.
pub fn recover_gradient(mesh: &TriangleMesh, u: &[f64]) -> Result<RecoveredField> {
    check_len(mesh, u)?;
    let n = mesh.n_nodes();
    let mut grads = vec![[0.0f64; 2]; mesh.n_triangles()];
    let mut areas = vec![0.0f64; mesh.n_triangles()];
    for k in 0..mesh.n_triangles() {
        let (g, a) = element_gradient(mesh, u, k)?;
        grads[k] = g;
        areas[k] = a;
    }
    let mut values = vec![[0.0f64; 2]; n];
    for i in 0..n {
        let star = mesh.node_star(i);
        if star.is_empty() {
            return Err(CoreError::Recovery {
                node: i,
                msg: "empty star (isolated node)".into(),
            });
        }
        let mut acc = [0.0f64; 2];
        let mut wsum = 0.0;
        for &k in star {
            acc[0] += areas[k] * grads[k][0];
            acc[1] += areas[k] * grads[k][1];
            wsum += areas[k];
        }
        values[i] = [acc[0] / wsum, acc[1] / wsum];
    }
    Ok(RecoveredField { values, order: 1 })
}

/// Constant gradient of the P1 interpolant on element `k`, with its area.
pub fn element_gradient(mesh: &TriangleMesh, u: &[f64], k: usize) -> Result<([f64; 2], f64)> {
    let tri = mesh.triangle(k);
    let area = mesh.signed_area(k);
    if area <= 0.0 {
        return Err(CoreError::TangledElement { element: k, area });
    }
    let mut g = [0.0f64; 2];
    for a in 0..3 {
        let pb = mesh.node(tri[(a + 1) % 3]);
        let pc = mesh.node(tri[(a + 2) % 3]);
        let gb = [(pb[1] - pc[1]) / (2.0 * area), (pc[0] - pb[0]) / (2.0 * area)];
        g[0] += u[tri[a]] * gb[0];
        g[1] += u[tri[a]] * gb[1];
    }
    Ok((g, area))
}

/// Full output of a quadratic patch fit at one node.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticFit {
    pub gradient: [f64; 2],
    /// Symmetric Hessian `[[uxx, uxy], [uxy, uyy]]`.
    pub hessian: [[f64; 2]; 2],
}

/// Fitted coefficients below this relative level are floating-point noise of
/// the least-squares solve; they are snapped to zero so that polynomial data
/// reproduces its derivatives exactly (a linear field must yield an exactly
/// zero Hessian, or steady meshes would drift).
const FIT_NOISE_FLOOR: f64 = 1e-13;

/// Precomputed least-squares machinery for the quadratic patch fit at one
/// node: the patch never changes, so its pseudo-inverse is built once and
/// applied to any number of fields.
#[derive(Debug, Clone)]
pub struct PatchFitter {
    node: usize,
    patch: Vec<usize>,
    /// Row-major 6 x m pseudo-inverse of the scaled design matrix.
    pinv: Vec<f64>,
    radius: f64,
}

impl PatchFitter {
    /// Builds the fitter for `node`: the patch is the node plus its
    /// neighbors, widened by one ring when it has fewer than 6 distinct
    /// nodes. Coordinates are centered on the node and scaled by the patch
    /// radius; the design matrix uses the basis
    /// `1, x, y, x^2, xy, y^2`.
    pub fn new(mesh: &TriangleMesh, node: usize) -> Result<Self> {
        let mut patch = vec![node];
        patch.extend(mesh.neighbors(node));
        if patch.len() < 6 {
            let ring: Vec<usize> = patch.clone();
            for &p in &ring {
                for q in mesh.neighbors(p) {
                    if !patch.contains(&q) {
                        patch.push(q);
                    }
                }
            }
        }
        if patch.len() < 6 {
            return Err(CoreError::Recovery {
                node,
                msg: format!("patch has only {} nodes after widening", patch.len()),
            });
        }

        let origin = mesh.node(node);
        let mut radius = 0.0f64;
        for &p in &patch {
            let q = mesh.node(p);
            radius = radius.max(((q[0] - origin[0]).powi(2) + (q[1] - origin[1]).powi(2)).sqrt());
        }
        if radius <= 0.0 {
            return Err(CoreError::Recovery {
                node,
                msg: "degenerate patch: all nodes coincide".into(),
            });
        }

        let m = patch.len();
        let mut a = DMatrix::zeros(m, 6);
        for (r, &p) in patch.iter().enumerate() {
            let q = mesh.node(p);
            let x = (q[0] - origin[0]) / radius;
            let y = (q[1] - origin[1]) / radius;
            a[(r, 0)] = 1.0;
            a[(r, 1)] = x;
            a[(r, 2)] = y;
            a[(r, 3)] = x * x;
            a[(r, 4)] = x * y;
            a[(r, 5)] = y * y;
        }
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= 1e-10 * smax {
            return Err(CoreError::Recovery {
                node,
                msg: "rank-deficient patch after widening".into(),
            });
        }
        let pinv_mat = svd.pseudo_inverse(0.0).map_err(|e| CoreError::Recovery {
            node,
            msg: format!("pseudo-inverse failed: {e}"),
        })?;
        let mut pinv = vec![0.0f64; 6 * m];
        for k in 0..6 {
            for j in 0..m {
                pinv[k * m + j] = pinv_mat[(k, j)];
            }
        }
        Ok(Self {
            node,
            patch,
            pinv,
            radius,
        })
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn patch(&self) -> &[usize] {
        &self.patch
    }

    /// Smallest distance from the node to a patch neighbor; a local length
    /// scale for step-size control.
    pub fn min_neighbor_distance(&self, mesh: &TriangleMesh) -> f64 {
        let origin = mesh.node(self.node);
        self.patch[1..]
            .iter()
            .map(|&p| {
                let q = mesh.node(p);
                (q[0] - origin[0]).hypot(q[1] - origin[1])
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Applies the fit to one global field.
    pub fn fit(&self, field: &[f64]) -> QuadraticFit {
        let m = self.patch.len();
        let mut c = [0.0f64; 6];
        let mut bmax = 0.0f64;
        for (j, &p) in self.patch.iter().enumerate() {
            let b = field[p];
            bmax = bmax.max(b.abs());
            for (k, ck) in c.iter_mut().enumerate() {
                *ck += self.pinv[k * m + j] * b;
            }
        }
        let floor = FIT_NOISE_FLOOR * bmax;
        for ck in &mut c {
            if ck.abs() <= floor {
                *ck = 0.0;
            }
        }
        let r = self.radius;
        QuadraticFit {
            gradient: [c[1] / r, c[2] / r],
            hessian: [
                [2.0 * c[3] / (r * r), c[4] / (r * r)],
                [c[4] / (r * r), 2.0 * c[5] / (r * r)],
            ],
        }
    }
}

/// Quadratic patch fits of several fields at one node.
pub fn fit_quadratic_patch_multi(
    mesh: &TriangleMesh,
    fields: &[&[f64]],
    node: usize,
) -> Result<Vec<QuadraticFit>> {
    for f in fields {
        check_len(mesh, f)?;
    }
    let fitter = PatchFitter::new(mesh, node)?;
    Ok(fields.iter().map(|f| fitter.fit(f)).collect())
}

/// Pure second derivatives `(d2u/dx1^2, d2u/dx2^2)` from the quadratic
/// patch fit at every node.
pub fn recover_second_derivatives(mesh: &TriangleMesh, u: &[f64]) -> Result<RecoveredField> {
    check_len(mesh, u)?;
    let mut values = vec![[0.0f64; 2]; mesh.n_nodes()];
    for i in 0..mesh.n_nodes() {
        let fit = fit_quadratic_patch_multi(mesh, &[u], i)?;
        values[i] = [fit[0].hessian[0][0], fit[0].hessian[1][1]];
    }
    Ok(RecoveredField { values, order: 2 })
}

/// Euclidean norm of the recovered pure second derivatives per node.
pub fn interpolation_error_indicator(mesh: &TriangleMesh, u: &[f64]) -> Result<Vec<f64>> {
    let d2 = recover_second_derivatives(mesh, u)?;
    Ok(d2.values.iter().map(|v| v[0].hypot(v[1])).collect())
}

fn check_len(mesh: &TriangleMesh, u: &[f64]) -> Result<()> {
    if u.len() != mesh.n_nodes() {
        return Err(CoreError::Recovery {
            node: usize::MAX,
            msg: format!("field has {} values for {} nodes", u.len(), mesh.n_nodes()),
        });
    }
    Ok(())
}
