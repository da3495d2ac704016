//! Linearly implicit Rosenbrock pseudo-time marching of the
//! differential-algebraic system `M u' + F(u) = 0` to steady state.
//!
//! The mass matrix is diagonal (lumped, with zero rows for algebraic
//! components such as the hydrodynamic pressure and Dirichlet constraints),
//! so the system is an index-1 DAE. Each step factorizes
//! `M/(gamma dt) + J` once and performs one back-solve per stage; the
//! embedded lower-order solution drives the step-size controller.
//!
//! The shipped tableau is a 4-stage, third-order, L-stable, stiffly
//! accurate method with a second-order embedding, stated in the transformed
//! form
//!
//! ```text
//! (M/(gamma dt) + J) k_i = -F(u + sum_j a_ij k_j) + M sum_j (c_ij/dt) k_j
//! u_new = u + sum_i m_i k_i,   err = sum_i (m_i - m_hat_i) k_i
//! ```
//!
//! Tableaus are checked against the Rosenbrock order conditions rather
//! than against fixed coefficients, so alternative methods of the same
//! class can be plugged in.

use crate::error::{CoreError, Result};
use crate::linalg::SparseTriplets;

/// Coefficients of a linearly implicit Rosenbrock method in transformed
/// (solve-per-stage) form.
#[derive(Debug, Clone)]
pub struct RosenbrockTableau {
    pub name: String,
    pub stages: usize,
    pub gamma: f64,
    /// Strictly lower triangular stage-combination weights `a_ij`.
    pub a: Vec<Vec<f64>>,
    /// Strictly lower triangular stiff correction weights `c_ij`.
    pub c: Vec<Vec<f64>>,
    /// Solution weights.
    pub m: Vec<f64>,
    /// Embedded (lower-order) solution weights.
    pub m_hat: Vec<f64>,
    pub order: u32,
    pub embedded_order: u32,
}

impl RosenbrockTableau {
    /// 4-stage, order 3(2), L-stable, stiffly accurate; suitable for
    /// index-1 DAEs.
    pub fn rodas3() -> Self {
        Self {
            name: "rodas3".into(),
            stages: 4,
            gamma: 0.5,
            a: vec![
                vec![],
                vec![0.0],
                vec![2.0, 0.0],
                vec![2.0, 0.0, 1.0],
            ],
            c: vec![
                vec![],
                vec![4.0],
                vec![1.0, -1.0],
                vec![1.0, -1.0, -8.0 / 3.0],
            ],
            m: vec![2.0, 0.0, 1.0, 1.0],
            m_hat: vec![2.0, 0.0, 1.0, 0.0],
            order: 3,
            embedded_order: 2,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "rodas3" => Ok(Self::rodas3()),
            other => Err(CoreError::Config(format!(
                "unknown Rosenbrock tableau {other:?} (available: rodas3)"
            ))),
        }
    }

    /// Classical (alpha, Gamma, b) coefficients recovered from the
    /// transformed form: `Gamma = (I/gamma - C)^-1`, `alpha = A Gamma`,
    /// `b = Gamma^T m`.
    fn classical(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let s = self.stages;
        // Invert the lower-triangular I/gamma - C by forward substitution.
        let mut gamma_mat = vec![vec![0.0; s]; s];
        for col in 0..s {
            let mut x = vec![0.0; s];
            for row in 0..s {
                let mut rhs = if row == col { 1.0 } else { 0.0 };
                for k in 0..row {
                    let lrk = -self.c[row][k];
                    rhs -= lrk * x[k];
                }
                x[row] = rhs * self.gamma;
            }
            for row in 0..s {
                gamma_mat[row][col] = x[row];
            }
        }
        let mut alpha = vec![vec![0.0; s]; s];
        for i in 0..s {
            for j in 0..s {
                for (k, &aik) in self.a[i].iter().enumerate() {
                    alpha[i][j] += aik * gamma_mat[k][j];
                }
            }
        }
        let mut b = vec![0.0; s];
        let mut b_hat = vec![0.0; s];
        for j in 0..s {
            for i in 0..s {
                b[j] += gamma_mat[i][j] * self.m[i];
                b_hat[j] += gamma_mat[i][j] * self.m_hat[i];
            }
        }
        (alpha, gamma_mat, b, b_hat)
    }

    /// Residuals of the order conditions for (order, embedded_order) =
    /// (3, 2): `[b.e - 1, b.beta' - 1/2, b.alpha^2 - 1/3, b.B.beta' - 1/6,
    /// bhat.e - 1, bhat.beta' - 1/2]`.
    pub fn order_condition_residuals(&self) -> Vec<f64> {
        let s = self.stages;
        let (alpha, gamma_mat, b, b_hat) = self.classical();
        let mut beta = vec![vec![0.0; s]; s];
        for i in 0..s {
            for j in 0..s {
                beta[i][j] = alpha[i][j] + gamma_mat[i][j];
            }
        }
        let alpha_sum: Vec<f64> = alpha.iter().map(|r| r.iter().sum()).collect();
        let beta_sum: Vec<f64> = beta.iter().map(|r| r.iter().sum()).collect();
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        let b_beta = dot(&b, &beta_sum);
        let b_alpha2 = b
            .iter()
            .zip(&alpha_sum)
            .map(|(bi, ai)| bi * ai * ai)
            .sum::<f64>();
        let mut bb = vec![0.0; s];
        for i in 0..s {
            bb[i] = dot(&beta[i], &beta_sum);
        }
        let b_bb = dot(&b, &bb);
        vec![
            b.iter().sum::<f64>() - 1.0,
            b_beta - 0.5,
            b_alpha2 - 1.0 / 3.0,
            b_bb - 1.0 / 6.0,
            b_hat.iter().sum::<f64>() - 1.0,
            dot(&b_hat, &beta_sum) - 0.5,
        ]
    }

    /// Value of the linear stability function at real `z` (solve of the
    /// lower-triangular `(I - z B) w = e`, then `1 + z b.w`).
    pub fn stability_at(&self, z: f64) -> f64 {
        let s = self.stages;
        let (alpha, gamma_mat, b, _) = self.classical();
        let mut w = vec![0.0; s];
        for i in 0..s {
            let mut rhs = 1.0;
            for j in 0..i {
                rhs += z * (alpha[i][j] + gamma_mat[i][j]) * w[j];
            }
            w[i] = rhs / (1.0 - z * (alpha[i][i] + gamma_mat[i][i]));
        }
        1.0 + z * b.iter().zip(&w).map(|(bi, wi)| bi * wi).sum::<f64>()
    }

    /// True when the solution weights equal the last row of `alpha + Gamma`
    /// (the final stage evaluates the step result).
    pub fn stiffly_accurate(&self) -> bool {
        let s = self.stages;
        let (alpha, gamma_mat, b, _) = self.classical();
        (0..s).all(|j| (b[j] - alpha[s - 1][j] - gamma_mat[s - 1][j]).abs() < 1e-12)
    }
}

/// A steady-state problem `M u' + F(u) = 0` with diagonal mass.
pub trait DaeSystem {
    fn dim(&self) -> usize;
    /// Steady residual `F(u)`.
    fn residual(&mut self, u: &[f64], out: &mut [f64]) -> Result<()>;
    /// Jacobian `dF/du` at `u`.
    fn jacobian(&mut self, u: &[f64]) -> Result<SparseTriplets>;
    /// Lumped mass diagonal; zero entries mark algebraic components.
    fn mass_diagonal(&mut self) -> Result<Vec<f64>>;
}

/// Result of one Rosenbrock step attempt.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub u_new: Vec<f64>,
    /// Scaled norm of the embedded error estimate; accept when <= 1.
    pub error_estimate: f64,
}

/// One linearly implicit step of size `dt` from `u`, reusing nothing: the
/// Jacobian and mass are evaluated at `u` and the stage matrix
/// `M/(gamma dt) + J` is factorized once.
pub fn rosenbrock_step<S: DaeSystem>(
    sys: &mut S,
    tableau: &RosenbrockTableau,
    u: &[f64],
    dt: f64,
    rtol: f64,
    atol: f64,
) -> Result<StepResult> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(CoreError::Step(format!("step size must be positive, got {dt}")));
    }
    let jac = sys.jacobian(u)?;
    let mass = sys.mass_diagonal()?;
    step_with_jacobian(sys, tableau, u, dt, rtol, atol, &jac, &mass)
}

/// Step with a caller-supplied Jacobian and mass (the marcher reuses them
/// across step-size retries).
#[allow(clippy::too_many_arguments)]
fn step_with_jacobian<S: DaeSystem>(
    sys: &mut S,
    tableau: &RosenbrockTableau,
    u: &[f64],
    dt: f64,
    rtol: f64,
    atol: f64,
    jac: &SparseTriplets,
    mass: &[f64],
) -> Result<StepResult> {
    let factors = factorize_stage_matrix(jac, mass, tableau.gamma, dt)?;
    step_with_factors(sys, tableau, u, dt, rtol, atol, &factors, mass)
}

/// LU of the stage matrix `M/(gamma dt) + J`.
fn factorize_stage_matrix(
    jac: &SparseTriplets,
    mass: &[f64],
    gamma: f64,
    dt: f64,
) -> Result<crate::linalg::LuFactors> {
    let shift: Vec<f64> = mass.iter().map(|&m| m / (gamma * dt)).collect();
    jac.factorize_with_shift(&shift)
}

/// Stage sweep against a prepared factorization.
#[allow(clippy::too_many_arguments)]
fn step_with_factors<S: DaeSystem>(
    sys: &mut S,
    tableau: &RosenbrockTableau,
    u: &[f64],
    dt: f64,
    rtol: f64,
    atol: f64,
    factors: &crate::linalg::LuFactors,
    mass: &[f64],
) -> Result<StepResult> {
    let n = u.len();
    let s = tableau.stages;
    let mut stages: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut stage_u = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..s {
        stage_u.copy_from_slice(u);
        for (j, k) in stages.iter().enumerate() {
            let aij = tableau.a[i][j];
            if aij != 0.0 {
                for (su, kv) in stage_u.iter_mut().zip(k) {
                    *su += aij * kv;
                }
            }
        }
        sys.residual(&stage_u, &mut rhs)?;
        for r in rhs.iter_mut() {
            *r = -*r;
        }
        for (j, k) in stages.iter().enumerate() {
            let cij = tableau.c[i][j] / dt;
            if cij != 0.0 {
                for ((r, &m), kv) in rhs.iter_mut().zip(mass).zip(k) {
                    *r += cij * m * kv;
                }
            }
        }
        factors.solve_in_place(&mut rhs)?;
        stages.push(rhs.clone());
    }

    let mut u_new = u.to_vec();
    let mut err_vec = vec![0.0; n];
    for (i, k) in stages.iter().enumerate() {
        let mi = tableau.m[i];
        let ei = tableau.m[i] - tableau.m_hat[i];
        for ((un, ev), kv) in u_new.iter_mut().zip(err_vec.iter_mut()).zip(k) {
            *un += mi * kv;
            *ev += ei * kv;
        }
    }
    // Weighted RMS of the embedded error over the differential components.
    // Algebraic rows (zero mass) are excluded: the stiffly accurate final
    // stage places them on the constraint manifold in every step, and an
    // inconsistent start would otherwise reject any dt.
    let mut acc = 0.0;
    let mut count = 0usize;
    for (((&e, &ui), &un), &m) in err_vec.iter().zip(u).zip(&u_new).zip(mass) {
        if m <= 0.0 {
            continue;
        }
        let scale = atol + rtol * ui.abs().max(un.abs());
        acc += (e / scale) * (e / scale);
        count += 1;
    }
    let error_estimate = if count > 0 {
        (acc / count as f64).sqrt()
    } else {
        0.0
    };
    Ok(StepResult {
        u_new,
        error_estimate,
    })
}

/// Standard step-size controller: grow at most 5x, shrink at most 5x,
/// target 0.9; a step is rejected when the scaled error exceeds 1.
pub fn adapt_step(err: f64, dt: f64, embedded_order: u32, dt_min: f64, dt_max: f64) -> (f64, bool) {
    let rejected = err > 1.0;
    let factor = if err > 0.0 {
        (0.9 * err.powf(-1.0 / (embedded_order as f64 + 1.0))).clamp(0.2, 5.0)
    } else {
        5.0
    };
    ((dt * factor).clamp(dt_min, dt_max), rejected)
}

/// Settings for [`march_to_steady`].
#[derive(Debug, Clone)]
pub struct MarchConfig {
    pub tableau: RosenbrockTableau,
    pub rtol: f64,
    pub atol: f64,
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Steady when `max_i |F_i| / (m_i (atol + rtol |u_i|))` over the
    /// differential rows falls below this rate (1/s).
    pub steady_tol: f64,
    pub max_steps: usize,
    /// Accepted steps a Jacobian factorization may serve before a refresh
    /// (1 = refresh every step). Only pseudo-time accuracy, never the
    /// steady state, depends on Jacobian freshness; rejections force a
    /// refresh regardless.
    pub jacobian_max_age: usize,
}

impl Default for MarchConfig {
    fn default() -> Self {
        Self {
            tableau: RosenbrockTableau::rodas3(),
            rtol: 1e-2,
            atol: 1e-4,
            dt0: 1e-4,
            dt_min: 1e-14,
            dt_max: 1e6,
            steady_tol: 1e-3,
            max_steps: 10_000,
            jacobian_max_age: 1,
        }
    }
}

/// One accepted step of the pseudo-time march.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub error_estimate: f64,
    /// Scaled steady-state residual rate after the step.
    pub steady_norm: f64,
    pub rejections: usize,
}

/// Callback verdict after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepDirective {
    Continue,
    /// End the march now (the caller decided the coupled system is done).
    Stop,
}

#[derive(Debug, Clone)]
pub struct MarchReport {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub history: Vec<StepRecord>,
}

/// Stage-matrix factorization reused across steps while the step size is
/// unchanged and the age budget allows.
struct FactorCache {
    factors: Option<crate::linalg::LuFactors>,
    dt: f64,
    age: usize,
}

impl FactorCache {
    fn new() -> Self {
        Self {
            factors: None,
            dt: 0.0,
            age: 0,
        }
    }

    fn invalidate(&mut self) {
        self.factors = None;
    }

    /// Ensures a factorization for the current state and step size;
    /// returns true when it was rebuilt in this call.
    fn refresh<S: DaeSystem>(
        &mut self,
        sys: &mut S,
        u: &[f64],
        dt: f64,
        mass: &[f64],
        tableau: &RosenbrockTableau,
        max_age: usize,
    ) -> Result<bool> {
        let stale = self.factors.is_none() || self.dt != dt || self.age >= max_age.max(1);
        if !stale {
            return Ok(false);
        }
        let jac = sys.jacobian(u)?;
        self.factors = Some(factorize_stage_matrix(&jac, mass, tableau.gamma, dt)?);
        self.dt = dt;
        self.age = 0;
        Ok(true)
    }
}

/// Scaled steady-state rate of the current residual.
fn steady_norm(residual: &[f64], mass: &[f64], u: &[f64], rtol: f64, atol: f64) -> f64 {
    let mut worst = 0.0f64;
    for ((&f, &m), &ui) in residual.iter().zip(mass).zip(u) {
        if m > 0.0 {
            worst = worst.max(f.abs() / (m * (atol + rtol * ui.abs())));
        }
    }
    worst
}

/// Marches `M u' = -F(u)` until the scaled residual rate drops below the
/// steady threshold. `on_step` runs after every accepted step and may
/// mutate the system (the coupled driver moves the mesh there) and the
/// state (mass-fraction clipping).
pub fn march_to_steady<S: DaeSystem, CB>(
    sys: &mut S,
    u: &mut Vec<f64>,
    cfg: &MarchConfig,
    mut on_step: CB,
) -> Result<MarchReport>
where
    CB: FnMut(&mut S, &mut Vec<f64>, &StepRecord) -> Result<StepDirective>,
{
    let n = sys.dim();
    if u.len() != n {
        return Err(CoreError::Step(format!(
            "state has {} entries, system has {n}",
            u.len()
        )));
    }
    let mut residual = vec![0.0; n];
    let mut history = Vec::new();
    let mut cache = FactorCache::new();
    let mut dt = cfg.dt0.clamp(cfg.dt_min, cfg.dt_max);
    let mut time = 0.0;
    let mut accepted = 0usize;
    let mut rejected_total = 0usize;
    // Stall guard: the embedded error can accept large steps that make no
    // progress at all -- the steady residual repeats to working precision
    // when step motion is cancelled outside the marcher (state clipping
    // against strong sources). A soft ceiling then pulls the step size
    // down until the residual moves again, and eases back off afterwards.
    let mut soft_cap = cfg.dt_max;
    let mut stagnant = 0usize;
    let mut last_norm = f64::INFINITY;

    for step in 0..cfg.max_steps {
        sys.residual(u, &mut residual)?;
        let mass = sys.mass_diagonal()?;
        let norm = steady_norm(&residual, &mass, u, cfg.rtol, cfg.atol);
        if norm < cfg.steady_tol {
            return Ok(MarchReport {
                accepted_steps: accepted,
                rejected_steps: rejected_total,
                converged: true,
                final_residual: norm,
                history,
            });
        }

        let mut rejections = 0usize;
        loop {
            // Stage evaluations can leave the physical domain on an
            // oversized trial step (negative temperatures, singular
            // matrices); those failures reject the step like a large error
            // estimate would.
            let fresh = cache.refresh(sys, u, dt, &mass, &cfg.tableau, cfg.jacobian_max_age)?;
            let result = match step_with_factors(
                sys,
                &cfg.tableau,
                u,
                dt,
                cfg.rtol,
                cfg.atol,
                cache.factors.as_ref().expect("factorization just built"),
                &mass,
            ) {
                Ok(r) => r,
                Err(e) => {
                    rejections += 1;
                    rejected_total += 1;
                    if !fresh {
                        // Retry once with a current Jacobian before
                        // shrinking the step.
                        cache.invalidate();
                        continue;
                    }
                    if dt * 0.25 <= cfg.dt_min || rejections > 40 {
                        return Err(e);
                    }
                    dt *= 0.25;
                    continue;
                }
            };
            let (dt_next, reject) = adapt_step(
                result.error_estimate,
                dt,
                cfg.tableau.embedded_order,
                cfg.dt_min,
                cfg.dt_max,
            );
            if reject {
                rejections += 1;
                rejected_total += 1;
                if !fresh {
                    cache.invalidate();
                    continue;
                }
                if dt_next <= cfg.dt_min && dt <= cfg.dt_min {
                    return Err(CoreError::Step(format!(
                        "step size underflow at pseudo-time {time:.3e} (error {:.3e})",
                        result.error_estimate
                    )));
                }
                dt = dt_next;
                continue;
            }
            let u_old = std::mem::replace(u, result.u_new);
            match sys.residual(u, &mut residual) {
                Ok(()) => {}
                Err(e) => {
                    // The accepted state left the physical domain; roll back.
                    *u = u_old;
                    rejections += 1;
                    rejected_total += 1;
                    if dt * 0.25 <= cfg.dt_min || rejections > 40 {
                        return Err(e);
                    }
                    dt *= 0.25;
                    continue;
                }
            }
            time += dt;
            accepted += 1;
            cache.age += 1;
            let mass = sys.mass_diagonal()?;
            let norm_after = steady_norm(&residual, &mass, u, cfg.rtol, cfg.atol);
            if (norm_after - last_norm).abs() <= 1e-6 * norm_after.max(1e-300) {
                stagnant += 1;
                if stagnant >= 8 {
                    soft_cap = (dt * 0.25).max(cfg.dt_min);
                    stagnant = 0;
                    cache.invalidate();
                }
            } else {
                stagnant = 0;
                soft_cap = (soft_cap * 1.5).min(cfg.dt_max);
            }
            last_norm = norm_after;
            let record = StepRecord {
                step,
                time,
                dt,
                error_estimate: result.error_estimate,
                steady_norm: norm_after,
                rejections,
            };
            history.push(record);
            dt = dt_next.min(soft_cap);
            if on_step(sys, u, &record)? == StepDirective::Stop {
                return Ok(MarchReport {
                    accepted_steps: accepted,
                    rejected_steps: rejected_total,
                    converged: true,
                    final_residual: norm_after,
                    history,
                });
            }
            break;
        }
    }

    sys.residual(u, &mut residual)?;
    let mass = sys.mass_diagonal()?;
    let norm = steady_norm(&residual, &mass, u, cfg.rtol, cfg.atol);
    Err(CoreError::NotConverged {
        steps: cfg.max_steps,
        residual: norm,
    })
}
