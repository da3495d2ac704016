use movemesh_core::chemistry::{self, Mechanism};
use movemesh_core::femsolver::*;
use movemesh_core::mesh::TriangleMesh;

fn main() {
    let mesh = TriangleMesh::rectangle(11, 11, 0.0, 1.0, 0.0, 1.0);
    let mech = Mechanism::parse("[species]\nA 0.03 1.0e6 1000.0\nB 0.03 0.0 1000.0\n[reactions]\nA -> B ; 1.0e3 ; 0.0 ; 4.0e4\n").unwrap();
    let t0 = 400.0;
    let mut tr = TransportConfig { mu: 1e-2, lambda_cond: 2.5e-2, diffusivities: vec![1.0, 1.0], v_ref: 1.0, p_th: 101325.0 };
    let rho = chemistry::density_eos(tr.p_th, 0.03, t0).unwrap();
    tr.diffusivities = vec![1e-3 / rho, 1e-3 / rho];
    let vel = [1.0 / rho, 0.0];
    println!("rho = {rho}, |v| = {}", vel[0]);

    let mut bcs = BoundaryConditions::none(mesh.n_nodes(), 2);
    for node in 0..mesh.n_nodes() {
        bcs.set(node, COMP_P, 0.0);
        bcs.set(node, COMP_VX, vel[0]);
        bcs.set(node, COMP_VY, vel[1]);
        bcs.set(node, COMP_T, t0);
        let p = mesh.node(node);
        if p[0] == 0.0 { bcs.set(node, COMP_W1, 0.0); }
        else if p[0] == 1.0 { bcs.set(node, COMP_W1, 1.0); }
    }
    let opts = AssemblyOptions { reactions: false, stabilize: true, ..Default::default() };
    let mut problem = FlowProblem::new(mesh.clone(), mech, tr, bcs, opts).unwrap();
    let mut state = SolutionState::zeros(mesh.n_nodes(), 2);
    for node in 0..mesh.n_nodes() {
        state.set(node, COMP_VX, vel[0]);
        state.set(node, COMP_VY, vel[1]);
        state.set(node, COMP_T, t0);
    }
    problem.bcs.apply_to(&mut state);
    let mut u = state.into_vec();
    let norm = newton_solve(&problem, &mut u, 8, 1e-11).unwrap();
    println!("newton residual: {norm:.3e}");
    let sol = problem.state_from(&u).unwrap();
    // mid-row profile (j=5) and top-row (j=10, natural bc)
    for j in [0usize, 5, 10] {
        let prof: Vec<String> = (0..11).map(|i| format!("{:+.3}", sol.get(j*11+i, COMP_W1))).collect();
        println!("row {j}: {}", prof.join(" "));
    }
}
