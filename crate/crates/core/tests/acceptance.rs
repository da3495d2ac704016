//! Shipped verification suite: one test per acceptance check, each
//! printing a PASS line with the measured quantity (run with
//! `-- --nocapture` to see them).
//!
//! The two coupled flame checks (`flame_*`) are the slow part; everything
//! else carries the `quick` marker in its name, so
//! `cargo test --test acceptance quick` runs the fast subset.

use movemesh_core::chemistry::{self, Mechanism};
use movemesh_core::driver::{self, CaseConfig};
use movemesh_core::femsolver::{
    self, evaluate_qoi_mean, stabilization_parameters, AssemblyOptions, BoundaryConditions,
    FlowProblem, SolutionState, COMP_T, COMP_VX, COMP_VY, COMP_W1,
};
use movemesh_core::mesh::{element_geometry, TriangleMesh};
use movemesh_core::mmpde::{
    equidistribute_1d, relax_mesh, step_mesh, BoundaryMode, MeshMapping, RelaxOptions,
};
use movemesh_core::monitor::{build_monitor, smooth_monitor, sym_eigen_2x2, MonitorField};
use movemesh_core::recovery::{recover_gradient, recover_second_derivatives};
use movemesh_core::timeint::{rosenbrock_step, DaeSystem, RosenbrockTableau};
use std::path::{Path, PathBuf};
use std::time::Instant;

fn cases_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases")
}

struct Lcg(u64);
impl Lcg {
    fn next01(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
    fn sym(&mut self) -> f64 {
        2.0 * self.next01() - 1.0
    }
}

/// Monitor algebra over 10^4 random samples: symmetry, eigenpairs to
/// 1e-12, unit determinant to relative 1e-12, in under a second.
#[test]
fn quick_monitor_algebra_property() {
    let start = Instant::now();
    let mut rng = Lcg(0x5eed);
    let n = 10_000;
    let psi: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let scale = 10f64.powf(4.0 * rng.sym());
            [scale * rng.sym(), scale * rng.sym()]
        })
        .collect();
    // A spread of intensity parameters, one field per decade.
    for alpha in [0.5, 8.0, 80.0, 500.0] {
        let g = build_monitor(&psi, alpha, true).unwrap();
        for m in &g.matrices {
            let (l1, l2, v1, v2) = sym_eigen_2x2(*m);
            let gv1 = [m[0] * v1[0] + m[1] * v1[1], m[1] * v1[0] + m[2] * v1[1]];
            let gv2 = [m[0] * v2[0] + m[1] * v2[1], m[1] * v2[0] + m[2] * v2[1]];
            for d in 0..2 {
                assert!((gv1[d] - l1 * v1[d]).abs() < 1e-12, "eigenpair 1");
                assert!((gv2[d] - l2 * v2[d]).abs() < 1e-12, "eigenpair 2");
            }
            let det = m[0] * m[2] - m[1] * m[1];
            assert!((det - 1.0).abs() < 1e-12, "det {det}");
            assert!(l1 >= 1.0 - 1e-12 && l2 > 0.0);
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "[PASS] monitor algebra: 4x10^4 samples, eigenpairs and det G = 1 within 1e-12 in {:.2?}",
        elapsed
    );
}

/// Identity monitor on a uniform strip is a steady point: no node drifts
/// more than 1e-10 of the domain diameter over 1000 pseudo-steps.
#[test]
fn quick_mmpde_identity_monitor_steady() {
    let start = Instant::now();
    let mesh = TriangleMesh::rectangle(33, 9, 0.0, 1.0, 0.0, 0.125);
    let diam = mesh.diameter();
    let mut map = MeshMapping::identity(mesh);
    let initial = map.physical_coords().to_vec();
    let g = MonitorField::identity(map.computational().n_nodes(), 1.0);
    let opts = RelaxOptions {
        max_steps: 1000,
        displacement_tol: 0.0,
        ..Default::default()
    };
    relax_mesh(&mut map, |_| Ok(g.clone()), &opts).unwrap();
    let mut drift = 0.0f64;
    for (a, b) in initial.iter().zip(map.physical_coords()) {
        drift = drift.max((a[0] - b[0]).hypot(a[1] - b[1]));
    }
    let elapsed = start.elapsed();
    assert!(drift < 1e-10 * diam, "drift {drift:.3e}");
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "[PASS] identity-monitor steady state: max drift {drift:.2e} (< {:.1e}) after 1000 steps in {:.2?}",
        1e-10 * diam,
        elapsed
    );
}

fn stratified_monitor(map: &MeshMapping) -> MonitorField {
    let mut g = MonitorField::identity(map.computational().n_nodes(), 1.0);
    for (i, p) in map.physical_coords().iter().enumerate() {
        let m = 1.0 + 50.0 * (-500.0 * (p[0] - 0.5) * (p[0] - 0.5)).exp();
        g.matrices[i] = [m, 0.0, 1.0];
    }
    g
}

/// The steady mesh under the 1D-stratified monitor equidistributes its
/// density: abscissas match the independent 1D two-point solve within 2%
/// of the domain length on the 64x8-cell strip.
#[test]
fn quick_mmpde_equidistribution_oracle() {
    let start = Instant::now();
    let nx = 65;
    let ny = 9;
    let mesh = TriangleMesh::rectangle(nx, ny, 0.0, 1.0, 0.0, 0.125);
    let mut map = MeshMapping::identity(mesh);
    let opts = RelaxOptions {
        max_steps: 80_000,
        displacement_tol: 1e-9,
        boundary: BoundaryMode::Slide,
        ..Default::default()
    };
    relax_mesh(&mut map, |m| Ok(stratified_monitor(m)), &opts).unwrap();
    assert!(map.is_untangled());
    let density = |x: f64| 1.0 + 50.0 * (-500.0 * (x - 0.5) * (x - 0.5)).exp();
    let oracle = equidistribute_1d(density, 0.0, 1.0, nx, 10_000);
    let mut max_err = 0.0f64;
    for row in 0..ny {
        for i in 0..nx {
            let x = map.physical_coords()[row * nx + i][0];
            max_err = max_err.max((x - oracle[i]).abs());
        }
    }
    let elapsed = start.elapsed();
    assert!(max_err < 0.02, "max abscissa error {max_err:.4}");
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "[PASS] equidistribution oracle: max abscissa error {max_err:.4} (< 0.02) in {:.2?}",
        elapsed
    );
}

/// Twenty randomized monitor relaxations never produce a tangled state
/// after any accepted step.
#[test]
fn quick_non_tangling_randomized_runs() {
    let mut rng = Lcg(0xA11CE);
    for run in 0..20 {
        let mesh = TriangleMesh::rectangle(17, 9, 0.0, 1.0, 0.0, 0.5);
        let mut map = MeshMapping::identity(mesh.clone());
        // A random smooth psi field, random intensity, random smoothing.
        let (kx, ky) = (2.0 + 5.0 * rng.next01(), 2.0 + 5.0 * rng.next01());
        let (px, py) = (rng.sym(), rng.sym());
        let alpha = 5.0 + 195.0 * rng.next01();
        let cycles = (rng.next01() * 8.0) as usize;
        let psi: Vec<[f64; 2]> = mesh
            .nodes()
            .iter()
            .map(|p| {
                [
                    (kx * p[0] + px).sin() * 3.0,
                    (ky * p[1] + py).cos() * 2.0,
                ]
            })
            .collect();
        let g = build_monitor(&psi, alpha, true).unwrap();
        let g = smooth_monitor(&g, &mesh, cycles, true);
        let mut dt = 1e-4;
        for _ in 0..60 {
            let out = step_mesh(&mut map, &g, dt).unwrap();
            assert!(map.is_untangled(), "run {run} tangled");
            dt = (out.accepted_dt * 1.5).min(0.05);
        }
    }
    println!("[PASS] non-tangling: 20 randomized monitor runs, every accepted state untangled");
}

/// Recovery exactness: gradients exact on linears at all nodes, second
/// derivatives exact on quadratics at interior nodes, both to 1e-10.
#[test]
fn quick_recovery_exactness() {
    for (nx, ny, w, h) in [(9, 7, 1.0, 1.0), (14, 6, 2.0, 0.7), (33, 5, 0.02, 0.005)] {
        let mesh = TriangleMesh::rectangle(nx, ny, 0.0, w, 0.0, h);
        let lin: Vec<f64> = mesh.nodes().iter().map(|p| 2.0 * p[0] + 3.0 * p[1]).collect();
        let g = recover_gradient(&mesh, &lin).unwrap();
        for v in &g.values {
            assert!((v[0] - 2.0).abs() < 1e-10 && (v[1] - 3.0).abs() < 1e-10);
        }
        let scale = w.max(h);
        let quad: Vec<f64> = mesh
            .nodes()
            .iter()
            .map(|p| {
                let (x, y) = (p[0] / scale, p[1] / scale);
                3.0 * x * x + 5.0 * y * y - x * y
            })
            .collect();
        let d2 = recover_second_derivatives(&mesh, &quad).unwrap();
        for (i, v) in d2.values.iter().enumerate() {
            if mesh.is_boundary(i) {
                continue;
            }
            let s2 = scale * scale;
            assert!(
                (v[0] - 6.0 / s2).abs() < 1e-10 * (6.0 / s2)
                    && (v[1] - 10.0 / s2).abs() < 1e-10 * (10.0 / s2),
                "node {i}: {v:?}"
            );
        }
    }
    println!("[PASS] recovery exactness: D1 on linears (all nodes), D2 on quadratics (interior), 1e-10");
}

fn two_species_mech() -> Mechanism {
    Mechanism::parse(
        "\
[species]
A 0.03 1.0e6 1000.0
B 0.03 0.0   1000.0
[reactions]
A -> B ; 1.0e3 ; 0.0 ; 4.0e4
",
    )
    .unwrap()
}

/// Manufactured convection-diffusion solve on the species row with frozen
/// uniform flow; returns the L2 error.
fn mms_l2_error(n: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let mesh = TriangleMesh::rectangle(n, n, 0.0, 1.0, 0.0, 1.0);
    let mech = two_species_mech();
    let tr = femsolver::TransportConfig {
        mu: 1e-2,
        lambda_cond: 2.5e-2,
        diffusivities: vec![0.05, 0.05],
        v_ref: 1.0,
        p_th: 101_325.0,
    };
    let t0 = 400.0;
    let rho = chemistry::density_eos(tr.p_th, 0.03, t0).unwrap();
    let vel = [0.6, 0.4];
    let beta = [rho * vel[0], rho * vel[1]];
    let nu = rho * tr.diffusivities[0];
    let exact = |x: f64, y: f64| (pi * x).sin() * (pi * y).sin();
    let source = |x: f64, y: f64| {
        beta[0] * pi * (pi * x).cos() * (pi * y).sin()
            + beta[1] * pi * (pi * x).sin() * (pi * y).cos()
            + nu * 2.0 * pi * pi * exact(x, y)
    };
    let mut bcs = BoundaryConditions::none(mesh.n_nodes(), 2);
    for node in 0..mesh.n_nodes() {
        bcs.set(node, femsolver::COMP_P, 0.0);
        bcs.set(node, COMP_VX, vel[0]);
        bcs.set(node, COMP_VY, vel[1]);
        bcs.set(node, COMP_T, t0);
        if mesh.is_boundary(node) {
            let p = mesh.node(node);
            bcs.set(node, COMP_W1, exact(p[0], p[1]));
        }
    }
    let opts = AssemblyOptions {
        reactions: false,
        ..Default::default()
    };
    let mut problem = FlowProblem::new(mesh.clone(), mech, tr, bcs, opts).unwrap();
    let nc = problem.nc();
    let mut src = vec![0.0; mesh.n_nodes() * nc];
    for node in 0..mesh.n_nodes() {
        let p = mesh.node(node);
        src[node * nc + COMP_W1] = source(p[0], p[1]);
    }
    problem.body_source = Some(src);
    let mut state = SolutionState::zeros(mesh.n_nodes(), 2);
    for node in 0..mesh.n_nodes() {
        state.set(node, COMP_VX, vel[0]);
        state.set(node, COMP_VY, vel[1]);
        state.set(node, COMP_T, t0);
    }
    problem.bcs.apply_to(&mut state);
    let mut u = state.into_vec();
    femsolver::newton_solve(&problem, &mut u, 6, 1e-11).unwrap();
    let sol = problem.state_from(&u).unwrap();
    let mut err2 = 0.0;
    for k in 0..mesh.n_triangles() {
        let tri = mesh.triangle(k);
        let area = mesh.signed_area(k);
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            let (pa, pb) = (mesh.node(a), mesh.node(b));
            let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
            let uh = 0.5 * (sol.get(a, COMP_W1) + sol.get(b, COMP_W1));
            let diff = uh - exact(mid[0], mid[1]);
            err2 += area / 3.0 * diff * diff;
        }
    }
    err2.sqrt()
}

/// Six-point (degree-4) quadrature of the squared H1-seminorm of the P1
/// interpolation error of a smooth field.
fn interpolation_h1_error(n: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let exact_grad = |x: f64, y: f64| {
        [
            pi * (pi * x).cos() * (pi * y).sin(),
            pi * (pi * x).sin() * (pi * y).cos(),
        ]
    };
    let mesh = TriangleMesh::rectangle(n, n, 0.0, 1.0, 0.0, 1.0);
    let u: Vec<f64> = mesh
        .nodes()
        .iter()
        .map(|p| (pi * p[0]).sin() * (pi * p[1]).sin())
        .collect();
    // Degree-4 rule on the triangle (6 points).
    let w1 = 0.223381589678011;
    let w2 = 0.109951743655322;
    let a1 = 0.445948490915965;
    let a2 = 0.091576213509771;
    let points = [
        ([a1, a1, 1.0 - 2.0 * a1], w1),
        ([a1, 1.0 - 2.0 * a1, a1], w1),
        ([1.0 - 2.0 * a1, a1, a1], w1),
        ([a2, a2, 1.0 - 2.0 * a2], w2),
        ([a2, 1.0 - 2.0 * a2, a2], w2),
        ([1.0 - 2.0 * a2, a2, a2], w2),
    ];
    let mut total = 0.0;
    for k in 0..mesh.n_triangles() {
        let tri = mesh.triangle(k);
        let geom = element_geometry(&mesh, k, [1.0, 0.0]).unwrap();
        // Constant interpolant gradient.
        let mut gh = [0.0f64; 2];
        for (a, &node) in tri.iter().enumerate() {
            gh[0] += u[node] * geom.basis_gradients[a][0];
            gh[1] += u[node] * geom.basis_gradients[a][1];
        }
        for (bary, w) in points {
            let mut x = 0.0;
            let mut y = 0.0;
            for (e, &node) in tri.iter().enumerate() {
                x += bary[e] * mesh.node(node)[0];
                y += bary[e] * mesh.node(node)[1];
            }
            let ge = exact_grad(x, y);
            let dx = ge[0] - gh[0];
            let dy = ge[1] - gh[1];
            total += w * geom.area * (dx * dx + dy * dy);
        }
    }
    total.sqrt()
}

/// Stabilized FEM convergence: manufactured-solution L2 order >= 1.5 over
/// three meshes, and the P1 interpolation-error H1 slope is 1.0 +- 0.15.
#[test]
fn quick_stabilized_fem_convergence() {
    let start = Instant::now();
    let e = [mms_l2_error(17), mms_l2_error(33), mms_l2_error(65)];
    let o1 = (e[0] / e[1]).log2();
    let o2 = (e[1] / e[2]).log2();
    assert!(o1 >= 1.5 && o2 >= 1.5, "L2 orders {o1:.2} {o2:.2}");

    let h = [interpolation_h1_error(9), interpolation_h1_error(17), interpolation_h1_error(33)];
    let s1 = (h[0] / h[1]).log2();
    let s2 = (h[1] / h[2]).log2();
    let slope = 0.5 * (s1 + s2);
    assert!((slope - 1.0).abs() <= 0.15, "H1 interpolation slope {slope:.3}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "[PASS] stabilized FEM convergence: L2 orders {o1:.2}/{o2:.2} (>= 1.5), H1 interpolation slope {slope:.3} (1.0 +- 0.15) in {:.2?}",
        elapsed
    );
}

struct ScalarOde {
    rate: f64,
    target: f64,
}
impl DaeSystem for ScalarOde {
    fn dim(&self) -> usize {
        1
    }
    fn residual(&mut self, u: &[f64], out: &mut [f64]) -> movemesh_core::Result<()> {
        out[0] = self.rate * (u[0] - self.target);
        Ok(())
    }
    fn jacobian(&mut self, _u: &[f64]) -> movemesh_core::Result<movemesh_core::linalg::SparseTriplets> {
        let mut t = movemesh_core::linalg::SparseTriplets::new(1);
        t.push(0, 0, self.rate);
        Ok(t)
    }
    fn mass_diagonal(&mut self) -> movemesh_core::Result<Vec<f64>> {
        Ok(vec![1.0])
    }
}

/// Rosenbrock order and stability: exponential-decay error ratio 16 +- 3
/// under dt halving; the stiff relaxation lands within 1e-3 of its
/// equilibrium in at most 3 unit steps.
#[test]
fn quick_rosenbrock_order_and_stability() {
    let tableau = RosenbrockTableau::rodas3();
    for (i, r) in tableau.order_condition_residuals().iter().enumerate() {
        assert!(r.abs() < 1e-12, "order condition {i}: {r:.2e}");
    }
    let mut sys = ScalarOde {
        rate: 1.0,
        target: 0.0,
    };
    let err = |dt: f64, sys: &mut ScalarOde| {
        let out = rosenbrock_step(sys, &tableau, &[1.0], dt, 1e-12, 1e-14).unwrap();
        (out.u_new[0] - (-dt).exp()).abs()
    };
    let ratio = err(0.1, &mut sys) / err(0.05, &mut sys);
    assert!((13.0..=19.0).contains(&ratio), "ratio {ratio:.2}");

    let mut stiff = ScalarOde {
        rate: 1e6,
        target: 1.0,
    };
    let mut u = vec![0.0];
    let mut steps = 0;
    while steps < 3 {
        let out = rosenbrock_step(&mut stiff, &tableau, &u, 1.0, 1e-6, 1e-9).unwrap();
        u = out.u_new;
        steps += 1;
        assert!(u[0].abs() < 2.0);
        if (u[0] - 1.0).abs() < 1e-3 {
            break;
        }
    }
    assert!((u[0] - 1.0).abs() < 1e-3, "after {steps} steps: {}", u[0]);
    println!(
        "[PASS] Rosenbrock: halving ratio {ratio:.1} (16 +- 3), stiff |u-1| = {:.1e} after {steps} step(s)",
        (u[0] - 1.0).abs()
    );
}

/// Chemistry identities on the shipped ozone mechanism over 10^3 random
/// states: total mass production vanishes to machine precision, and the
/// heat release vanishes when every species has the same enthalpy.
#[test]
fn quick_chemistry_identities() {
    let mech = Mechanism::from_file(&cases_dir().join("ozone.mech")).unwrap();
    let mut rng = Lcg(0xC0FFEE);
    for _ in 0..1000 {
        let a = rng.next01();
        let b = rng.next01() * (1.0 - a);
        let w = [a, b, 1.0 - a - b];
        let t = 250.0 + 1800.0 * rng.next01();
        let rho = 0.05 + 3.0 * rng.next01();
        let rates = chemistry::production_rates(&mech, t, &w, rho).unwrap();
        let total: f64 = rates.mass.iter().sum();
        let scale: f64 = rates.mass.iter().map(|f| f.abs()).sum::<f64>().max(1e-300);
        assert!(total.abs() <= 1e-12 * scale, "sum {total:.3e} scale {scale:.3e}");
    }
    // Equal enthalpies cancel exactly through the same identity.
    let mut equal = mech.clone();
    for s in &mut equal.species {
        s.formation_enthalpy = 2.5e6;
        s.specific_heat = 1000.0;
    }
    let w = [0.1, 0.2, 0.7];
    let f0 = chemistry::heat_release(&equal, 900.0, &w, 0.8).unwrap();
    let rates = chemistry::production_rates(&equal, 900.0, &w, 0.8).unwrap();
    let scale: f64 = rates.mass.iter().map(|f| f.abs()).sum::<f64>() * 3.2e6;
    assert!(f0.abs() <= 1e-10 * scale.max(1.0), "f0 {f0:.3e}");
    println!(
        "[PASS] chemistry identities: sum M_i wdot_i = 0 (1e3 random states), f0 = 0 for equal enthalpies"
    );
}

/// QoI evaluator: exact on constants to 1e-14 and on x1 over the channel
/// rectangle to 1e-12.
#[test]
fn quick_qoi_evaluator() {
    let mesh = TriangleMesh::rectangle(109, 28, 0.0, 0.02, 0.0, 0.005);
    let c = vec![0.2; mesh.n_nodes()];
    let jc = evaluate_qoi_mean(&mesh, &c);
    assert!((jc - 0.2).abs() < 1e-14, "constant: {jc}");
    let x1: Vec<f64> = mesh.nodes().iter().map(|p| p[0]).collect();
    let jx = evaluate_qoi_mean(&mesh, &x1);
    assert!((jx - 0.01).abs() < 1e-12, "x1: {jx}");
    println!("[PASS] QoI evaluator: J(0.2) = {jc}, J(x1) = {jx}");
}

/// Stabilization weights stay below their asymptotic bound.
#[test]
fn quick_stabilization_bound() {
    let mesh = TriangleMesh::rectangle(5, 5, 0.0, 1.0, 0.0, 1.0);
    let geom = element_geometry(&mesh, 3, [0.8, 0.6]).unwrap();
    let mut rng = Lcg(0xBEEF);
    for _ in 0..200 {
        let mu = 10f64.powf(4.0 * rng.sym() - 2.0);
        let v_ref = 0.05 + rng.next01();
        let p = stabilization_parameters(
            &geom,
            [rng.sym(), rng.sym()],
            0.2 + rng.next01(),
            900.0,
            mu,
            &[0.01, 0.02],
            v_ref,
        );
        assert!(p.alpha <= geom.h_sharp / (2.0 * v_ref) + 1e-15);
    }
    println!("[PASS] pressure-stabilization weight never exceeds h#/(2 V)");
}

struct FlameRun {
    qoi: f64,
    min_width: f64,
    band_width: f64,
    uniform_width: f64,
    elapsed: std::time::Duration,
}

fn run_flame(config: &str) -> FlameRun {
    let start = Instant::now();
    let cfg_path = cases_dir().join(config);
    let mut cfg = CaseConfig::load(&cfg_path).unwrap();
    // Redirect outputs into the test target directory.
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join(config.replace(".ini", ""));
    cfg.output.directory = out;
    cfg.output.vtk_cadence = 0;
    let artifacts = driver::run_coupled(&cfg).unwrap();
    let elapsed = start.elapsed();

    // Element widths across the (x-directed) front: bounding-box x-extents.
    let mesh = &artifacts.mesh;
    let mut widths: Vec<(f64, f64)> = Vec::with_capacity(mesh.n_triangles());
    for k in 0..mesh.n_triangles() {
        let tri = mesh.triangle(k);
        let xs: Vec<f64> = tri.iter().map(|&v| mesh.node(v)[0]).collect();
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let centroid = xs.iter().sum::<f64>() / 3.0;
        widths.push((centroid, max - min));
    }
    let uniform_width = 0.02 / 108.0;
    let min_width = widths.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);
    // Width of the band of compressed elements (5th-95th percentile of the
    // centroids of elements at least 25% narrower than uniform).
    let mut compressed: Vec<f64> = widths
        .iter()
        .filter(|(_, w)| *w < 0.75 * uniform_width)
        .map(|(c, _)| *c)
        .collect();
    compressed.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let band_width = if compressed.len() >= 20 {
        let lo = compressed[compressed.len() / 20];
        let hi = compressed[compressed.len() - 1 - compressed.len() / 20];
        hi - lo
    } else if let (Some(first), Some(last)) = (compressed.first(), compressed.last()) {
        last - first
    } else {
        0.0
    };
    FlameRun {
        qoi: artifacts.qoi,
        min_width,
        band_width,
        uniform_width,
        elapsed,
    }
}

/// End-to-end ozone flame on the ~3000-node mesh with both monitors:
/// joint steadiness within the time budget, front compression at least
/// 2x, and a wider compressed band for the curvature monitor than for
/// the gradient monitor. The mean ozone mass fraction is reported next
/// to the 0.03350442 reference for orientation only (the shipped rate
/// constants are representative).
#[test]
fn flame_end_to_end_monitor_comparison() {
    let d2 = run_flame("ozone_d2.ini");
    assert!(
        d2.elapsed.as_secs_f64() < 600.0,
        "curvature-monitor run took {:?}",
        d2.elapsed
    );
    assert!(
        d2.min_width <= 0.5 * d2.uniform_width,
        "min element width {:.3e} vs uniform {:.3e}",
        d2.min_width,
        d2.uniform_width
    );

    let d1 = run_flame("ozone_d1.ini");
    assert!(
        d1.elapsed.as_secs_f64() < 600.0,
        "gradient-monitor run took {:?}",
        d1.elapsed
    );
    assert!(
        d2.band_width > d1.band_width,
        "band widths: curvature {:.3e} vs gradient {:.3e}",
        d2.band_width,
        d1.band_width
    );
    println!(
        "[PASS] ozone end-to-end: min width {:.2e} <= 0.5x uniform {:.2e}; compressed band {:.2e} (D2) > {:.2e} (D1); J = {:.8} (D2) / {:.8} (D1) vs reference 0.03350442; {:.0?} + {:.0?}",
        d2.min_width,
        d2.uniform_width,
        d2.band_width,
        d1.band_width,
        d2.qoi,
        d1.qoi,
        d2.elapsed,
        d1.elapsed
    );
}
