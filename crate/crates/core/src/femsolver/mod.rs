//! Stabilized P1 Galerkin assembly of the compact stationary low-Mach
//! system: residual and finite-difference Jacobian of
//!
//! ```text
//! div v - l beta.grad w0 + v.m                    = 0        (constraint)
//! (beta.grad) v - div(mu grad v) + grad p_hyd     = 0        (momentum)
//! beta_bar.grad w_i - div(nu_i grad w_i)          = f_i      (T and species)
//! ```
//!
//! with `beta = rho v`, `beta_bar = cp beta` on the temperature row,
//! `l = 1/(rho T)`, `m = grad(Mbar)/Mbar` from gradient recovery, and
//! pressure-stabilization / streamline-diffusion terms weighted by the
//! element parameters `alpha_K`, `delta_K`, `delta_{K,i}`. Equal-order P1
//! for every component; nonlinear coefficients by centroid quadrature,
//! P1 bilinear terms exact. Dirichlet rows are replaced by
//! `value - prescribed`.

mod coloring;

pub use coloring::color_nodes_distance2;

use crate::chemistry::{
    density_eos, heat_release_from, mixture_cp, mixture_molar_mass, production_rates,
    Mechanism,
};
use crate::error::{CoreError, Result};
use crate::linalg::SparseTriplets;
use crate::mesh::{element_geometry, longest_edge_direction, ElementGeometry, TriangleMesh};
use crate::recovery::recover_gradient;
use crate::timeint::DaeSystem;

/// Component indices within a node block.
pub const COMP_P: usize = 0;
pub const COMP_VX: usize = 1;
pub const COMP_VY: usize = 2;
pub const COMP_T: usize = 3;
/// First solved species component.
pub const COMP_W1: usize = 4;

/// Constant transport coefficients of the mixture.
#[derive(Debug, Clone)]
pub struct TransportConfig {
    /// Dynamic viscosity, Pa s.
    pub mu: f64,
    /// Thermal conductivity, W/(m K).
    pub lambda_cond: f64,
    /// Species diffusivities, m^2/s, one per mechanism species.
    pub diffusivities: Vec<f64>,
    /// Global reference velocity for the pressure stabilization, m/s.
    pub v_ref: f64,
    /// Thermodynamic pressure, Pa.
    pub p_th: f64,
}

/// Per-node unknowns in node-major blocks `[p, v1, v2, T, w_1..w_{ns-1}]`.
/// The last mechanism species closes the mass-fraction sum.
#[derive(Debug, Clone)]
pub struct SolutionState {
    pub n_nodes: usize,
    pub n_species: usize,
    data: Vec<f64>,
}

impl SolutionState {
    pub fn n_components(n_species: usize) -> usize {
        4 + n_species - 1
    }

    pub fn zeros(n_nodes: usize, n_species: usize) -> Self {
        Self {
            n_nodes,
            n_species,
            data: vec![0.0; n_nodes * Self::n_components(n_species)],
        }
    }

    pub fn from_vec(data: Vec<f64>, n_nodes: usize, n_species: usize) -> Result<Self> {
        if data.len() != n_nodes * Self::n_components(n_species) {
            return Err(CoreError::Assembly(format!(
                "state length {} does not match {} nodes x {} components",
                data.len(),
                n_nodes,
                Self::n_components(n_species)
            )));
        }
        Ok(Self {
            n_nodes,
            n_species,
            data,
        })
    }

    pub fn nc(&self) -> usize {
        Self::n_components(self.n_species)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn dof(&self, node: usize, comp: usize) -> usize {
        node * self.nc() + comp
    }

    pub fn get(&self, node: usize, comp: usize) -> f64 {
        self.data[self.dof(node, comp)]
    }

    pub fn set(&mut self, node: usize, comp: usize, value: f64) {
        let i = self.dof(node, comp);
        self.data[i] = value;
    }

    pub fn pressure(&self, node: usize) -> f64 {
        self.get(node, COMP_P)
    }

    pub fn velocity(&self, node: usize) -> [f64; 2] {
        [self.get(node, COMP_VX), self.get(node, COMP_VY)]
    }

    pub fn temperature(&self, node: usize) -> f64 {
        self.get(node, COMP_T)
    }

    /// Full mass-fraction vector including the closure species.
    pub fn mass_fractions(&self, node: usize) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.n_species);
        let mut sum = 0.0;
        for k in 0..self.n_species - 1 {
            let v = self.get(node, COMP_W1 + k);
            w.push(v);
            sum += v;
        }
        w.push(1.0 - sum);
        w
    }

    /// Clips solved mass fractions that leave [0, 1] by more than the
    /// tolerance band, and rescales when their sum exceeds 1 beyond it, so
    /// the closure species stays essentially non-negative. Small
    /// excursions are left alone: a piecewise-linear solution of an
    /// under-resolved front undershoots slightly at its discrete steady
    /// state, and snapping those values every step turns the march into a
    /// limit cycle. Chemistry evaluations clamp internally either way.
    /// Returns the number of adjustments.
    pub fn clip_species(&mut self) -> usize {
        const BAND: f64 = 1e-2;
        let mut clipped = 0;
        for node in 0..self.n_nodes {
            let mut sum = 0.0;
            for k in 0..self.n_species - 1 {
                let i = self.dof(node, COMP_W1 + k);
                let v = self.data[i];
                if !(-BAND..=1.0 + BAND).contains(&v) {
                    self.data[i] = v.clamp(0.0, 1.0);
                    clipped += 1;
                }
                sum += self.data[i];
            }
            if sum > 1.0 + BAND {
                clipped += 1;
                for k in 0..self.n_species - 1 {
                    let i = self.dof(node, COMP_W1 + k);
                    self.data[i] /= sum;
                }
            }
        }
        clipped
    }
}

/// Per-node derived thermodynamic fields.
#[derive(Debug, Clone)]
pub struct DerivedFields {
    pub density: Vec<f64>,
    pub molar_mass: Vec<f64>,
}

/// Clamps a mass-fraction vector into [0,1] and renormalizes its sum to 1.
/// Solver iterates and finite-difference probes wander slightly outside the
/// physical simplex; property evaluations must stay defined there.
fn sanitize_mass_fractions(w: &mut [f64]) {
    let mut sum = 0.0;
    for wi in w.iter_mut() {
        *wi = wi.clamp(0.0, 1.0);
        sum += *wi;
    }
    if sum > 0.0 && (sum - 1.0).abs() > 1e-14 {
        for wi in w.iter_mut() {
            *wi /= sum;
        }
    }
}

pub fn derived_fields(
    state: &SolutionState,
    mech: &Mechanism,
    p_th: f64,
) -> Result<DerivedFields> {
    let mut density = Vec::with_capacity(state.n_nodes);
    let mut molar_mass = Vec::with_capacity(state.n_nodes);
    for node in 0..state.n_nodes {
        let mut w = state.mass_fractions(node);
        sanitize_mass_fractions(&mut w);
        let mbar = mixture_molar_mass(mech, &w)?;
        let t = state.temperature(node);
        density.push(density_eos(p_th, mbar, t)?);
        molar_mass.push(mbar);
    }
    Ok(DerivedFields {
        density,
        molar_mass,
    })
}

/// Dirichlet data per degree of freedom, plus an optional pressure pin for
/// closed domains (no natural-pressure boundary).
#[derive(Debug, Clone)]
pub struct BoundaryConditions {
    dirichlet: Vec<Option<f64>>,
    pub pressure_pin: Option<usize>,
    nc: usize,
}

impl BoundaryConditions {
    pub fn none(n_nodes: usize, n_species: usize) -> Self {
        let nc = SolutionState::n_components(n_species);
        Self {
            dirichlet: vec![None; n_nodes * nc],
            pressure_pin: None,
            nc,
        }
    }

    pub fn set(&mut self, node: usize, comp: usize, value: f64) {
        self.dirichlet[node * self.nc + comp] = Some(value);
    }

    pub fn get(&self, node: usize, comp: usize) -> Option<f64> {
        self.dirichlet[node * self.nc + comp]
    }

    pub fn is_dirichlet_dof(&self, dof: usize) -> bool {
        self.dirichlet[dof].is_some()
    }

    /// Writes every prescribed value into the state.
    pub fn apply_to(&self, state: &mut SolutionState) {
        for (dof, v) in self.dirichlet.iter().enumerate() {
            if let Some(v) = v {
                state.data[dof] = *v;
            }
        }
    }
}

/// Element stabilization weights.
#[derive(Debug, Clone)]
pub struct StabilizationParams {
    /// Pressure stabilization weight (continuity row).
    pub alpha: f64,
    /// Streamline-diffusion weight of the momentum rows.
    pub delta_momentum: f64,
    /// Streamline-diffusion weight per transported scalar row
    /// (temperature first).
    pub delta_transport: Vec<f64>,
}

/// Element stabilization parameters:
///
/// ```text
/// alpha_K     = h#/(2 V) Re/sqrt(1+Re^2),  Re = h# V / mu
/// delta_K     = h^2 rho / (2 mu sqrt(1+Re^2)),  Re = h |beta| / mu
/// delta_{K,i} = h^2 bfac / (2 nu_i sqrt(1+Re^2)), Re = h |beta_bar| / nu_i
/// ```
///
/// written so the `|v| -> 0` limits are explicit (`|beta|/|v| = rho`,
/// `|beta_bar|/|v| = cp rho` on the temperature row). `nus` lists the
/// diffusion coefficient of each transported row, temperature first.
///
/// The streamwise length `h` is the element's projection extent along the
/// velocity (`h_span`), not the centroid chord: on right triangles the
/// chord is 2/3 of the cell and leaves the effective cell Peclet above the
/// oscillation threshold of the convective limit.
pub fn stabilization_parameters(
    geom: &ElementGeometry,
    velocity: [f64; 2],
    rho: f64,
    cp: f64,
    mu: f64,
    nus: &[f64],
    v_ref: f64,
) -> StabilizationParams {
    let speed = velocity[0].hypot(velocity[1]);
    let beta_norm = rho * speed;
    let re_global = geom.h_sharp * v_ref / mu;
    let alpha = geom.h_sharp / (2.0 * v_ref) * re_global / (1.0 + re_global * re_global).sqrt();
    let h = geom.h_span;
    let re_m = h * beta_norm / mu;
    let delta_momentum = h * h * rho / (2.0 * mu * (1.0 + re_m * re_m).sqrt());
    let delta_transport = nus
        .iter()
        .enumerate()
        .map(|(i, &nu)| {
            let bfac = if i == 0 { cp * rho } else { rho };
            let re = h * bfac * speed / nu;
            h * h * bfac / (2.0 * nu * (1.0 + re * re).sqrt())
        })
        .collect();
    StabilizationParams {
        alpha,
        delta_momentum,
        delta_transport,
    }
}

/// Assembly switches.
#[derive(Debug, Clone, Copy)]
pub struct AssemblyOptions {
    /// Include the stabilization terms.
    pub stabilize: bool,
    /// Include the chemistry source terms.
    pub reactions: bool,
    /// Replace Dirichlet rows by `value - prescribed`.
    pub apply_dirichlet: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            stabilize: true,
            reactions: true,
            apply_dirichlet: true,
        }
    }
}

/// The discrete stationary problem on the current physical mesh. The
/// coupled driver mutates `mesh` and `body_source` between pseudo-time
/// steps as the mesh moves.
pub struct FlowProblem {
    pub mesh: TriangleMesh,
    pub mech: Mechanism,
    pub transport: TransportConfig,
    pub bcs: BoundaryConditions,
    pub opts: AssemblyOptions,
    /// Extra volumetric source per dof (the ALE mesh-velocity correction
    /// and manufactured-solution forcing enter here); layout matches the
    /// state vector.
    pub body_source: Option<Vec<f64>>,
    n_species: usize,
    colors: Vec<usize>,
    n_colors: usize,
}

impl FlowProblem {
    pub fn new(
        mesh: TriangleMesh,
        mech: Mechanism,
        transport: TransportConfig,
        bcs: BoundaryConditions,
        opts: AssemblyOptions,
    ) -> Result<Self> {
        if transport.diffusivities.len() != mech.n_species() {
            return Err(CoreError::Assembly(format!(
                "{} diffusivities for {} species",
                transport.diffusivities.len(),
                mech.n_species()
            )));
        }
        let (colors, n_colors) = color_nodes_distance2(&mesh);
        Ok(Self {
            n_species: mech.n_species(),
            mesh,
            mech,
            transport,
            bcs,
            opts,
            body_source: None,
            colors,
            n_colors,
        })
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn nc(&self) -> usize {
        SolutionState::n_components(self.n_species)
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_nodes() * self.nc()
    }

    pub fn state_from(&self, u: &[f64]) -> Result<SolutionState> {
        SolutionState::from_vec(u.to_vec(), self.mesh.n_nodes(), self.n_species)
    }

    /// Galerkin + stabilization residual; see the module docs for the rows.
    pub fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        let nc = self.nc();
        let n_nodes = self.mesh.n_nodes();
        if u.len() != n_nodes * nc {
            return Err(CoreError::Assembly(format!(
                "state length {} for {} dofs",
                u.len(),
                n_nodes * nc
            )));
        }
        let state = SolutionState::from_vec(u.to_vec(), n_nodes, self.n_species)?;
        let derived = derived_fields(&state, &self.mech, self.transport.p_th)?;

        // m = grad(Mbar)/Mbar from nodal recovery.
        let m_grad = recover_gradient(&self.mesh, &derived.molar_mass)?;
        let m_field: Vec<[f64; 2]> = m_grad
            .values
            .iter()
            .zip(&derived.molar_mass)
            .map(|(g, &mb)| [g[0] / mb, g[1] / mb])
            .collect();

        let n_w = 1 + self.n_species - 1;
        let mut residual = vec![0.0f64; n_nodes * nc];
        let mut nus = vec![0.0f64; n_w];

        for k in 0..self.mesh.n_triangles() {
            let tri = self.mesh.triangle(k);

            // Centroid state.
            let mut v_c = [0.0f64; 2];
            let mut p_c = 0.0;
            let mut t_c = 0.0;
            let mut rho_c = 0.0;
            let mut w_c = vec![0.0f64; self.n_species];
            let mut m_c = [0.0f64; 2];
            for &node in &tri {
                let vv = state.velocity(node);
                v_c[0] += vv[0] / 3.0;
                v_c[1] += vv[1] / 3.0;
                p_c += state.pressure(node) / 3.0;
                t_c += state.temperature(node) / 3.0;
                rho_c += derived.density[node] / 3.0;
                for (wc, wi) in w_c.iter_mut().zip(state.mass_fractions(node)) {
                    *wc += wi / 3.0;
                }
                m_c[0] += m_field[node][0] / 3.0;
                m_c[1] += m_field[node][1] / 3.0;
            }
            sanitize_mass_fractions(&mut w_c);
            if !(t_c.is_finite() && rho_c.is_finite()) {
                return Err(CoreError::Assembly(format!(
                    "non-finite centroid state on element {k}"
                )));
            }
            let speed = v_c[0].hypot(v_c[1]);
            let direction = if speed > 0.0 {
                [v_c[0] / speed, v_c[1] / speed]
            } else {
                longest_edge_direction(&self.mesh, k)
            };
            let geom = element_geometry(&self.mesh, k, direction)?;
            let area = geom.area;
            let grads = geom.basis_gradients;

            // Constant field gradients.
            let mut grad = vec![[0.0f64; 2]; nc];
            for (a, &node) in tri.iter().enumerate() {
                for comp in 0..nc {
                    let val = state.get(node, comp);
                    grad[comp][0] += val * grads[a][0];
                    grad[comp][1] += val * grads[a][1];
                }
            }

            let beta = [rho_c * v_c[0], rho_c * v_c[1]];
            let cp_c = mixture_cp(&self.mech, &w_c);
            let l_c = 1.0 / (rho_c * t_c);

            // Sources at the centroid.
            let mut f = vec![0.0f64; n_w]; // temperature row first
            if self.opts.reactions {
                let rates = production_rates(&self.mech, t_c, &w_c, rho_c)?;
                f[0] = heat_release_from(&self.mech, t_c, &rates);
                for i in 0..self.n_species - 1 {
                    f[1 + i] = rates.mass[i];
                }
            }
            // Extra body sources (ALE correction, manufactured forcing).
            let mut s = vec![0.0f64; nc];
            if let Some(src) = &self.body_source {
                for &node in &tri {
                    for (comp, sc) in s.iter_mut().enumerate() {
                        *sc += src[node * nc + comp] / 3.0;
                    }
                }
            }

            nus[0] = self.transport.lambda_cond;
            for i in 0..self.n_species - 1 {
                nus[1 + i] = rho_c * self.transport.diffusivities[i];
            }
            let stab = if self.opts.stabilize {
                Some(stabilization_parameters(
                    &geom,
                    v_c,
                    rho_c,
                    cp_c,
                    self.transport.mu,
                    &nus,
                    self.transport.v_ref,
                ))
            } else {
                None
            };

            let div_v = grad[COMP_VX][0] + grad[COMP_VY][1];
            let beta_grad_t = beta[0] * grad[COMP_T][0] + beta[1] * grad[COMP_T][1];
            // Momentum strong residual for the stabilization terms.
            let r_m = [
                beta[0] * grad[COMP_VX][0] + beta[1] * grad[COMP_VX][1] + grad[COMP_P][0]
                    - s[COMP_VX],
                beta[0] * grad[COMP_VY][0] + beta[1] * grad[COMP_VY][1] + grad[COMP_P][1]
                    - s[COMP_VY],
            ];

            let third = area / 3.0;
            for (a, &node) in tri.iter().enumerate() {
                let ga = grads[a];
                let beta_ga = beta[0] * ga[0] + beta[1] * ga[1];

                // Continuity/pressure row.
                let mut r_p = third * (div_v - l_c * beta_grad_t + (v_c[0] * m_c[0] + v_c[1] * m_c[1]));
                if let Some(stab) = &stab {
                    r_p += stab.alpha * area * (r_m[0] * ga[0] + r_m[1] * ga[1]);
                }
                residual[node * nc + COMP_P] += r_p;

                // Momentum rows.
                for d in 0..2 {
                    let comp = COMP_VX + d;
                    let conv = beta[0] * grad[comp][0] + beta[1] * grad[comp][1];
                    let mut r_v = third * (conv - s[comp])
                        + self.transport.mu
                            * area
                            * (grad[comp][0] * ga[0] + grad[comp][1] * ga[1])
                        - p_c * area * ga[d];
                    if let Some(stab) = &stab {
                        r_v += stab.delta_momentum * area * r_m[d] * beta_ga;
                    }
                    residual[node * nc + comp] += r_v;
                }

                // Temperature and species rows.
                for i in 0..n_w {
                    let comp = COMP_T + i;
                    let bbar = if i == 0 {
                        [cp_c * beta[0], cp_c * beta[1]]
                    } else {
                        beta
                    };
                    let conv = bbar[0] * grad[comp][0] + bbar[1] * grad[comp][1];
                    let mut r_w = third * (conv - f[i] - s[comp])
                        + nus[i] * area * (grad[comp][0] * ga[0] + grad[comp][1] * ga[1]);
                    if let Some(stab) = &stab {
                        let bbar_ga = bbar[0] * ga[0] + bbar[1] * ga[1];
                        r_w += stab.delta_transport[i]
                            * area
                            * (conv - f[i] - s[comp])
                            * bbar_ga;
                    }
                    residual[node * nc + comp] += r_w;
                }
            }
        }

        if self.opts.apply_dirichlet {
            for dof in 0..residual.len() {
                if let Some(g) = self.bcs.dirichlet[dof] {
                    residual[dof] = u[dof] - g;
                }
            }
            if let Some(pin) = self.bcs.pressure_pin {
                residual[pin * nc + COMP_P] = u[pin * nc + COMP_P];
            }
        }
        Ok(residual)
    }

    /// Lumped mass diagonal of the pseudo-time term: element-area thirds on
    /// the differential components, zero on the pressure row and on
    /// Dirichlet/pinned dofs.
    pub fn mass_diagonal_vec(&self) -> Vec<f64> {
        let nc = self.nc();
        let mut mass = vec![0.0f64; self.n_dofs()];
        for k in 0..self.mesh.n_triangles() {
            let area = self.mesh.signed_area(k);
            for &node in &self.mesh.triangle(k) {
                for comp in 1..nc {
                    mass[node * nc + comp] += area / 3.0;
                }
            }
        }
        for dof in 0..mass.len() {
            if self.bcs.dirichlet[dof].is_some() {
                mass[dof] = 0.0;
            }
        }
        if let Some(pin) = self.bcs.pressure_pin {
            mass[pin * nc + COMP_P] = 0.0;
        }
        mass
    }

    /// One-sided finite-difference Jacobian along distance-2-colored
    /// unknown groups; sparsity is the node-adjacency block pattern.
    pub fn jacobian_fd(&self, u: &[f64]) -> Result<SparseTriplets> {
        let base = self.residual(u)?;
        coloring::jacobian_fd(self, u, &base, &self.colors, self.n_colors)
    }
}

impl DaeSystem for FlowProblem {
    fn dim(&self) -> usize {
        self.n_dofs()
    }

    fn residual(&mut self, u: &[f64], out: &mut [f64]) -> Result<()> {
        let r = FlowProblem::residual(self, u)?;
        out.copy_from_slice(&r);
        Ok(())
    }

    fn jacobian(&mut self, u: &[f64]) -> Result<SparseTriplets> {
        self.jacobian_fd(u)
    }

    fn mass_diagonal(&mut self) -> Result<Vec<f64>> {
        Ok(self.mass_diagonal_vec())
    }
}

/// Domain mean of a nodal field by exact P1 quadrature:
/// `(1/|Omega|) sum_K |K| (mean of the vertex values)`.
pub fn evaluate_qoi_mean(mesh: &TriangleMesh, field: &[f64]) -> f64 {
    assert_eq!(field.len(), mesh.n_nodes());
    let mut total = 0.0;
    let mut area_total = 0.0;
    for k in 0..mesh.n_triangles() {
        let tri = mesh.triangle(k);
        let area = mesh.signed_area(k);
        let mean = (field[tri[0]] + field[tri[1]] + field[tri[2]]) / 3.0;
        total += area * mean;
        area_total += area;
    }
    total / area_total
}

/// Damped Newton iteration on the stationary residual, for linear and
/// mildly nonlinear configurations (manufactured-solution and scalar
/// convection-diffusion tests; the flame cases march in pseudo-time
/// instead).
pub fn newton_solve(problem: &FlowProblem, u: &mut Vec<f64>, max_iter: usize, tol: f64) -> Result<f64> {
    let mut norm = f64::INFINITY;
    for _ in 0..max_iter {
        let r = problem.residual(u)?;
        norm = r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if norm < tol {
            return Ok(norm);
        }
        let jac = problem.jacobian_fd(u)?;
        let factors = jac.factorize()?;
        let mut delta = r;
        factors.solve_in_place(&mut delta)?;
        for (ui, di) in u.iter_mut().zip(&delta) {
            *ui -= di;
        }
    }
    let r = problem.residual(u)?;
    norm = r.iter().fold(norm.min(f64::INFINITY), |acc, v| acc.max(v.abs()));
    Ok(norm)
}
