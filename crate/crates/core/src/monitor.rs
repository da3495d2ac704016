//! Matrix-valued monitor functions controlling mesh density and anisotropy.
//!
//! At each node a symmetric positive-definite 2x2 matrix G is built from a
//! vector quantity psi: the leading eigenvector is psi's direction, the
//! leading eigenvalue grows with |psi|, and the second eigenvalue is its
//! reciprocal so that det G = 1. Smoothing averages G over computational
//! cells to ease the stiffness of the resulting mesh motion.

use crate::error::{CoreError, Result};
use crate::mesh::TriangleMesh;

/// Per-node symmetric 2x2 matrices, stored as `[g11, g12, g22]`.
#[derive(Debug, Clone)]
pub struct MonitorField {
    pub matrices: Vec<[f64; 3]>,
    /// Intensity parameter used to build the field.
    pub alpha: f64,
    /// Number of smoothing cycles already applied.
    pub smoothing_cycles: usize,
}

impl MonitorField {
    pub fn identity(n_nodes: usize, alpha: f64) -> Self {
        Self {
            matrices: vec![[1.0, 0.0, 1.0]; n_nodes],
            alpha,
            smoothing_cycles: 0,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.matrices.len()
    }
}

/// Eigenvalues (descending) and eigenvectors of a symmetric 2x2 matrix.
pub fn sym_eigen_2x2(m: [f64; 3]) -> (f64, f64, [f64; 2], [f64; 2]) {
    let [a, b, c] = m;
    let half_tr = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let l1 = half_tr + disc;
    let l2 = half_tr - disc;
    let v1 = if b.abs() > 1e-300 {
        normalize([b, l1 - a])
    } else if a >= c {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let v2 = [-v1[1], v1[0]];
    (l1, l2, v1, v2)
}

/// Inverse of a symmetric 2x2 matrix in `[g11, g12, g22]` storage.
pub fn sym_inverse_2x2(m: [f64; 3]) -> Result<[f64; 3]> {
    let det = m[0] * m[2] - m[1] * m[1];
    if det <= 0.0 {
        return Err(CoreError::Monitor(format!(
            "matrix is not positive definite (det {det:.3e})"
        )));
    }
    Ok([m[2] / det, -m[1] / det, m[0] / det])
}

fn normalize(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    [v[0] / n, v[1] / n]
}

/// Builds the monitor from a per-node vector quantity.
///
/// At nodes where |psi| is above the degeneracy threshold the leading
/// eigenvector is psi/|psi| with eigenvalue `sqrt(1 + alpha |psi|^2)`, the
/// trailing eigenvalue is its reciprocal; elsewhere G is the identity.
///
/// With `normalize` set, psi is first scaled by its maximum nodal norm so
/// that `alpha` acts independently of mesh units; this is the default used
/// by the driver.
pub fn build_monitor(psi: &[[f64; 2]], alpha: f64, normalize_psi: bool) -> Result<MonitorField> {
    if alpha <= 0.0 {
        return Err(CoreError::Monitor(format!(
            "intensity parameter must be positive, got {alpha}"
        )));
    }
    let max_norm = psi
        .iter()
        .map(|p| p[0].hypot(p[1]))
        .fold(0.0f64, f64::max);
    if !max_norm.is_finite() {
        return Err(CoreError::Monitor("psi contains non-finite values".into()));
    }
    let scale = if normalize_psi && max_norm > 0.0 {
        1.0 / max_norm
    } else {
        1.0
    };
    // Below this, psi's direction is meaningless and G continues as identity.
    let eps = if max_norm > 0.0 {
        1e-12 * max_norm
    } else {
        1e-300
    };

    let matrices = psi
        .iter()
        .map(|p| {
            let norm = p[0].hypot(p[1]);
            if norm < eps {
                return [1.0, 0.0, 1.0];
            }
            let v1 = [p[0] / norm, p[1] / norm];
            let s = norm * scale;
            let l1 = (1.0 + alpha * s * s).sqrt();
            let l2 = 1.0 / l1;
            // G = l1 v1 v1' + l2 v2 v2' with v2 = rot90(v1).
            [
                l1 * v1[0] * v1[0] + l2 * v1[1] * v1[1],
                (l1 - l2) * v1[0] * v1[1],
                l1 * v1[1] * v1[1] + l2 * v1[0] * v1[0],
            ]
        })
        .collect();
    Ok(MonitorField {
        matrices,
        alpha,
        smoothing_cycles: 0,
    })
}

/// One smoothing cycle replaces each nodal G by its mean over the union of
/// computational cells touching the node, evaluated entry-wise by exact P1
/// quadrature (`integral = area * vertex-mean` per cell). `reproject_det`
/// restores det G = 1 after each cycle by rescaling the eigenvalues while
/// keeping the eigenvectors.
pub fn smooth_monitor(
    field: &MonitorField,
    computational: &TriangleMesh,
    cycles: usize,
    reproject_det: bool,
) -> MonitorField {
    assert_eq!(
        field.n_nodes(),
        computational.n_nodes(),
        "monitor/mesh size mismatch"
    );
    let mut current = field.matrices.clone();
    for _ in 0..cycles {
        let mut next = vec![[0.0f64; 3]; current.len()];
        for i in 0..current.len() {
            let mut acc = [0.0f64; 3];
            let mut total = 0.0;
            for &k in computational.node_star(i) {
                let tri = computational.triangle(k);
                let area = computational.signed_area(k);
                for e in 0..3 {
                    let g = current[tri[e]];
                    acc[0] += area * g[0] / 3.0;
                    acc[1] += area * g[1] / 3.0;
                    acc[2] += area * g[2] / 3.0;
                }
                total += area;
            }
            next[i] = [acc[0] / total, acc[1] / total, acc[2] / total];
            if reproject_det {
                next[i] = reproject_unit_det(next[i]);
            }
        }
        current = next;
    }
    MonitorField {
        matrices: current,
        alpha: field.alpha,
        smoothing_cycles: field.smoothing_cycles + cycles,
    }
}

/// Closest matrix with reciprocal eigenvalues: keep the eigenvectors and map
/// (l1, l2) to (sqrt(l1/l2), sqrt(l2/l1)).
fn reproject_unit_det(m: [f64; 3]) -> [f64; 3] {
    let (l1, l2, v1, v2) = sym_eigen_2x2(m);
    // Averages of SPD matrices stay SPD; guard anyway.
    let l2 = l2.max(1e-300);
    let s1 = (l1 / l2).sqrt();
    let s2 = 1.0 / s1;
    [
        s1 * v1[0] * v1[0] + s2 * v2[0] * v2[0],
        s1 * v1[0] * v1[1] + s2 * v2[0] * v2[1],
        s1 * v1[1] * v1[1] + s2 * v2[1] * v2[1],
    ]
}

/// Per-node mesh density `sqrt(det G)`.
pub fn monitor_density(field: &MonitorField) -> Result<Vec<f64>> {
    field
        .matrices
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let det = g[0] * g[2] - g[1] * g[1];
            if det <= 0.0 {
                Err(CoreError::Monitor(format!(
                    "monitor at node {i} is not positive definite (det {det:.3e})"
                )))
            } else {
                Ok(det.sqrt())
            }
        })
        .collect()
}
