//! Distance-2 graph coloring of the mesh nodes and the colored one-sided
//! finite-difference Jacobian. Two nodes share a color only when no third
//! node is adjacent to both, so perturbing every same-colored node at once
//! leaves each residual row influenced by at most one perturbed column.

use super::FlowProblem;
use crate::error::Result;
use crate::linalg::SparseTriplets;
use crate::mesh::TriangleMesh;
use rayon::prelude::*;

/// Greedy distance-2 coloring; returns per-node colors and the color count.
pub fn color_nodes_distance2(mesh: &TriangleMesh) -> (Vec<usize>, usize) {
    let n = mesh.n_nodes();
    let mut colors = vec![usize::MAX; n];
    let mut n_colors = 0;
    let mut forbidden = vec![usize::MAX; 0];
    for node in 0..n {
        forbidden.clear();
        for nbr in mesh.neighbors(node) {
            if colors[nbr] != usize::MAX {
                forbidden.push(colors[nbr]);
            }
            for nbr2 in mesh.neighbors(nbr) {
                if colors[nbr2] != usize::MAX {
                    forbidden.push(colors[nbr2]);
                }
            }
        }
        let mut color = 0;
        while forbidden.contains(&color) {
            color += 1;
        }
        colors[node] = color;
        n_colors = n_colors.max(color + 1);
    }
    (colors, n_colors)
}

/// One-sided finite differences of the residual along the groups
/// (color x component). Group evaluations are independent and run on the
/// rayon pool; triplets are concatenated in deterministic group order.
pub fn jacobian_fd(
    problem: &FlowProblem,
    u: &[f64],
    base_residual: &[f64],
    colors: &[usize],
    n_colors: usize,
) -> Result<SparseTriplets> {
    let nc = problem.nc();
    let n_nodes = problem.mesh.n_nodes();
    let groups: Vec<(usize, usize)> = (0..n_colors)
        .flat_map(|color| (0..nc).map(move |comp| (color, comp)))
        .collect();

    let chunks: Vec<Result<Vec<(usize, usize, f64)>>> = groups
        .par_iter()
        .map(|&(color, comp)| {
            let mut up = u.to_vec();
            let mut eps = vec![0.0f64; n_nodes];
            for node in 0..n_nodes {
                if colors[node] == color {
                    let dof = node * nc + comp;
                    // sqrt(machine epsilon) balances truncation against
                    // cancellation for one-sided differences.
                    let e = 1.4901161193847656e-8 * (1.0 + u[dof].abs());
                    up[dof] += e;
                    eps[node] = e;
                }
            }
            let rp = problem.residual(&up)?;
            let mut entries = Vec::new();
            for node in 0..n_nodes {
                if colors[node] != color {
                    continue;
                }
                let col = node * nc + comp;
                let e = eps[node];
                // Rows affected by this column: the node and its neighbors.
                let mut rows = problem.mesh.neighbors(node);
                rows.push(node);
                for row_node in rows {
                    for row_comp in 0..nc {
                        let row = row_node * nc + row_comp;
                        let d = (rp[row] - base_residual[row]) / e;
                        if d != 0.0 {
                            entries.push((row, col, d));
                        }
                    }
                }
            }
            Ok(entries)
        })
        .collect();

    let mut triplets = SparseTriplets::with_capacity(n_nodes * nc, n_nodes * nc * 8);
    for chunk in chunks {
        for (r, c, v) in chunk? {
            triplets.push(r, c, v);
        }
    }
    Ok(triplets)
}
