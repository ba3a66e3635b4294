//! Time integration of the discrete flow problem.
//!
//! Each step solves for the theta-averaged unknowns (U*, P*) of the
//! one-parameter family: with alpha = (1 + theta) / 2 and data evaluated at
//! t + alpha dt,
//!
//! ```text
//!   M U* - B^T P* = G,      (|c| / (alpha dt)) P* + B U* = F + (|c| / (alpha dt)) P^n.
//! ```
//!
//! Because M is diagonal, U* is eliminated and P* solves the SPD Schur
//! system (D + B M^-1 B^T) P* = F + D P^n - B M^-1 G. The new pressure is
//! P^n + (P* - P^n) / alpha; theta = 1 is backward Euler (P* is already
//! P^{n+1}) and theta = 0 is Crank-Nicolson. One Schur factorization serves
//! the whole march since the matrix does not change between steps.

pub mod newton;
pub mod spd;

use thiserror::Error;

use crate::assembly::{
    assemble_boundary_term, assemble_divergence, assemble_initial_pressure, assemble_source,
    assemble_velocity_mass, AssemblyError, DiagonalMatrix, PermeabilityField, SparseDivergence,
};
use crate::fespace::{DofMap, FluxVector, PressureVector};

pub use newton::{run_transient_compressible, CompressibilityParams, NewtonError, NewtonReport};
pub use spd::{solve_spd, SolveError, SparseSpd, SpdSolver};

/// Default relative-residual tolerance for the pressure solves.
pub const DEFAULT_SOLVE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid theta configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: SolveError,
    },
}

/// Time discretization parameters; the final time is `n_steps * dt`.
#[derive(Debug, Clone, Copy)]
pub struct ThetaConfig {
    pub theta: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl ThetaConfig {
    pub fn new(theta: f64, dt: f64, n_steps: usize) -> Result<Self, SolverError> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(SolverError::BadConfig(format!(
                "theta must lie in [0, 1], got {theta}"
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SolverError::BadConfig(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            theta,
            dt,
            n_steps,
        })
    }

    /// Weight of the new time level in the theta average.
    pub fn alpha(&self) -> f64 {
        0.5 * (1.0 + self.theta)
    }

    pub fn final_time(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }
}

/// Pressure and flux at one time level.
#[derive(Debug, Clone)]
pub struct DiscreteState {
    pub pressure: PressureVector,
    pub flux: FluxVector,
    pub time: f64,
}

/// Everything a step needs: diagonal mass, divergence, cell measures.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub mass: DiagonalMatrix,
    pub div: SparseDivergence,
    pub cell_measures: Vec<f64>,
}

impl OperatorSet {
    pub fn build(dofmap: &DofMap, k: &PermeabilityField) -> Result<Self, AssemblyError> {
        Ok(Self {
            mass: assemble_velocity_mass(dofmap, k)?,
            div: assemble_divergence(dofmap),
            cell_measures: dofmap.cells.iter().map(|c| c.area).collect(),
        })
    }
}

/// Problem data as closures of (x, y, t).
pub struct ProblemData<'a> {
    pub source: &'a (dyn Fn(f64, f64, f64) -> f64 + Sync),
    pub boundary: &'a (dyn Fn(f64, f64, f64) -> f64 + Sync),
    pub initial: &'a (dyn Fn(f64, f64) -> f64 + Sync),
}

/// Assemble D + B W M^-1 B^T where D is a diagonal over cells and W an
/// optional per-edge weight (used by the Newton stepper for density-weighted
/// fluxes). Symmetric positive definite by construction.
pub fn schur_matrix(
    dofmap: &DofMap,
    mass: &DiagonalMatrix,
    accumulation_diag: &[f64],
    edge_weight: Option<&[f64]>,
) -> SparseSpd {
    let n = dofmap.pressure_len();
    let mut triplets = Vec::with_capacity(5 * n);
    for (c, &d) in accumulation_diag.iter().enumerate() {
        triplets.push((c, c, d));
    }
    for (e, dof) in dofmap.velocity.iter().enumerate() {
        let weight = edge_weight.map_or(1.0, |w| w[e]);
        let w = weight * dof.length * dof.length / mass.diag[e];
        match (dof.minus_cell, dof.plus_cell) {
            (Some(cm), Some(cp)) => {
                triplets.push((cm, cm, w));
                triplets.push((cp, cp, w));
                triplets.push((cm, cp, -w));
                triplets.push((cp, cm, -w));
            }
            (Some(c), None) | (None, Some(c)) => triplets.push((c, c, w)),
            (None, None) => unreachable!("velocity dof without adjacent cell"),
        }
    }
    SparseSpd::from_triplets(n, triplets)
}

/// Recover the flux from the pressure through the discrete constitutive
/// relation M U = B^T P + G.
pub fn flux_from_pressure(
    pressure: &[f64],
    g_vec: &[f64],
    ops: &OperatorSet,
) -> FluxVector {
    let bt = ops.div.apply_transpose(pressure);
    let values = bt
        .iter()
        .zip(g_vec)
        .zip(&ops.mass.diag)
        .map(|((b, g), m)| (b + g) / m)
        .collect();
    FluxVector { values }
}

/// Outcome of one theta step.
pub struct StepOutcome {
    pub next: DiscreteState,
    /// Flux at the theta point t^n + alpha dt; this is what the scheme
    /// actually constrains and what time-integrated error norms sample.
    pub theta_flux: FluxVector,
    pub theta_time: f64,
    /// Infinity norm of the per-cell mass-balance residual
    /// |c| (P^{n+1} - P^n) / dt + (B U*)_c - F_c.
    pub mass_residual_inf: f64,
    /// Euclidean norm of the Schur right-hand side, the natural scale for
    /// the residual above.
    pub rhs_norm: f64,
}

/// A factored stepper reused across a march.
pub struct TimeStepper<'a> {
    dofmap: &'a DofMap,
    ops: &'a OperatorSet,
    cfg: ThetaConfig,
    solver: SpdSolver,
    tol: f64,
}

impl<'a> TimeStepper<'a> {
    pub fn new(
        dofmap: &'a DofMap,
        ops: &'a OperatorSet,
        cfg: ThetaConfig,
        tol: f64,
    ) -> Result<Self, SolverError> {
        let alpha_dt = cfg.alpha() * cfg.dt;
        let accumulation: Vec<f64> = ops.cell_measures.iter().map(|m| m / alpha_dt).collect();
        let schur = schur_matrix(dofmap, &ops.mass, &accumulation, None);
        let solver = SpdSolver::new(schur)?;
        Ok(Self {
            dofmap,
            ops,
            cfg,
            solver,
            tol,
        })
    }

    pub fn config(&self) -> ThetaConfig {
        self.cfg
    }

    pub fn step(
        &self,
        state: &DiscreteState,
        data: &ProblemData<'_>,
    ) -> Result<StepOutcome, SolveError> {
        let alpha = self.cfg.alpha();
        let dt = self.cfg.dt;
        let t_theta = state.time + alpha * dt;
        let n = self.dofmap.pressure_len();

        let f_vec = assemble_source(data.source, t_theta, self.dofmap);
        let g_vec = assemble_boundary_term(data.boundary, t_theta, self.dofmap);

        // rhs = F + D P^n - B M^-1 G
        let mut rhs = f_vec.clone();
        for c in 0..n {
            rhs[c] += self.ops.cell_measures[c] / (alpha * dt) * state.pressure.values[c];
        }
        let m_inv_g: Vec<f64> = g_vec
            .iter()
            .zip(&self.ops.mass.diag)
            .map(|(g, m)| g / m)
            .collect();
        let b_m_inv_g = self.ops.div.apply(&m_inv_g);
        for c in 0..n {
            rhs[c] -= b_m_inv_g[c];
        }
        let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();

        let p_star = self.solver.solve(&rhs, self.tol)?;
        let theta_flux = flux_from_pressure(&p_star, &g_vec, self.ops);

        let p_next: Vec<f64> = state
            .pressure
            .values
            .iter()
            .zip(&p_star)
            .map(|(pn, ps)| pn + (ps - pn) / alpha)
            .collect();

        // Mass balance per cell; equals the linear-solver residual by
        // construction but is recomputed from the physical quantities.
        let b_u = self.ops.div.apply(&theta_flux.values);
        let mut mass_residual_inf = 0.0f64;
        for c in 0..n {
            let accum =
                self.ops.cell_measures[c] * (p_next[c] - state.pressure.values[c]) / dt;
            let r = accum + b_u[c] - f_vec[c];
            mass_residual_inf = mass_residual_inf.max(r.abs());
        }

        let t_next = state.time + dt;
        let g_next = assemble_boundary_term(data.boundary, t_next, self.dofmap);
        let flux_next = flux_from_pressure(&p_next, &g_next, self.ops);

        Ok(StepOutcome {
            next: DiscreteState {
                pressure: PressureVector { values: p_next },
                flux: flux_next,
                time: t_next,
            },
            theta_flux,
            theta_time: t_theta,
            mass_residual_inf,
            rhs_norm,
        })
    }
}

/// Single theta step; factors the Schur complement on every call, so marches
/// should use [`TimeStepper`] directly.
pub fn theta_step(
    state: &DiscreteState,
    dofmap: &DofMap,
    ops: &OperatorSet,
    cfg: ThetaConfig,
    data: &ProblemData<'_>,
    tol: f64,
) -> Result<StepOutcome, SolverError> {
    let stepper = TimeStepper::new(dofmap, ops, cfg, tol)?;
    Ok(stepper.step(state, data)?)
}

/// What a march keeps in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retention {
    /// Every node state plus every theta-point flux (needed for error norms).
    All,
    /// Only the initial and final state.
    FinalOnly,
}

/// Flux at one theta point.
pub struct ThetaFlux {
    pub time: f64,
    pub flux: FluxVector,
}

/// Per-step conservation record.
#[derive(Debug, Clone, Copy)]
pub struct StepMeta {
    pub mass_residual_inf: f64,
    pub rhs_norm: f64,
}

pub struct Trajectory {
    pub states: Vec<DiscreteState>,
    pub theta_fluxes: Vec<ThetaFlux>,
    pub step_meta: Vec<StepMeta>,
}

impl Trajectory {
    pub fn initial(&self) -> &DiscreteState {
        self.states.first().expect("trajectory has initial state")
    }

    pub fn last(&self) -> &DiscreteState {
        self.states.last().expect("trajectory has final state")
    }
}

/// March the transient problem: project the initial pressure, recover the
/// initial flux from the constitutive relation at t = 0, then apply
/// `cfg.n_steps` theta steps.
pub fn run_transient(
    dofmap: &DofMap,
    ops: &OperatorSet,
    data: &ProblemData<'_>,
    cfg: ThetaConfig,
    tol: f64,
    retention: Retention,
) -> Result<Trajectory, SolverError> {
    let p0 = assemble_initial_pressure(data.initial, dofmap);
    let g0 = assemble_boundary_term(data.boundary, 0.0, dofmap);
    let u0 = flux_from_pressure(&p0.values, &g0, ops);
    let mut state = DiscreteState {
        pressure: p0,
        flux: u0,
        time: 0.0,
    };

    let stepper = TimeStepper::new(dofmap, ops, cfg, tol)?;
    let mut states = Vec::with_capacity(if retention == Retention::All {
        cfg.n_steps + 1
    } else {
        2
    });
    states.push(state.clone());
    let mut theta_fluxes = Vec::new();
    let mut step_meta = Vec::with_capacity(cfg.n_steps);

    for step in 0..cfg.n_steps {
        let outcome = stepper
            .step(&state, data)
            .map_err(|source| SolverError::StepFailed { step, source })?;
        step_meta.push(StepMeta {
            mass_residual_inf: outcome.mass_residual_inf,
            rhs_norm: outcome.rhs_norm,
        });
        if retention == Retention::All {
            theta_fluxes.push(ThetaFlux {
                time: outcome.theta_time,
                flux: outcome.theta_flux,
            });
        }
        state = outcome.next;
        if retention == Retention::All {
            states.push(state.clone());
        }
    }
    if retention == Retention::FinalOnly {
        states.push(state);
    }

    Ok(Trajectory {
        states,
        theta_fluxes,
        step_meta,
    })
}

/// Weighted discrete energy sum over cells of |c| P_c^2.
pub fn weighted_pressure_energy(pressure: &PressureVector, measures: &[f64]) -> f64 {
    pressure
        .values
        .iter()
        .zip(measures)
        .map(|(p, m)| m * p * p)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::enumerate_dofs;
    use crate::mesh::{single_block, two_block};

    fn zero_data() -> ProblemData<'static> {
        ProblemData {
            source: &|_, _, _| 0.0,
            boundary: &|_, _, _| 0.0,
            initial: &|_, _| 0.0,
        }
    }

    #[test]
    fn theta_outside_unit_interval_rejected() {
        assert!(ThetaConfig::new(2.0, 0.1, 1).is_err());
        assert!(ThetaConfig::new(-0.1, 0.1, 1).is_err());
        assert!(ThetaConfig::new(1.0, 0.0, 1).is_err());
        assert!(ThetaConfig::new(0.5, 0.1, 3).is_ok());
    }

    #[test]
    fn zero_data_stays_zero_for_any_theta() {
        let mesh = two_block(2, 2, 3, 3).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let k = PermeabilityField::uniform(dofs.pressure_len(), 1.0).unwrap();
        let ops = OperatorSet::build(&dofs, &k).unwrap();
        for theta in [0.0, 0.5, 1.0] {
            let cfg = ThetaConfig::new(theta, 0.05, 4).unwrap();
            let traj =
                run_transient(&dofs, &ops, &zero_data(), cfg, 1e-12, Retention::All).unwrap();
            for s in &traj.states {
                assert!(s.pressure.values.iter().all(|v| v.abs() < 1e-14));
                assert!(s.flux.values.iter().all(|v| v.abs() < 1e-14));
            }
        }
    }

    #[test]
    fn single_cell_backward_euler_hand_check() {
        // One unit cell, K = I: every boundary edge has mass 1/2, so the
        // scalar Schur value is sum of l^2 / M = 4 * 2 = 8. With g = 0 and
        // constant f the update is P1 = (F + P0/dt) / (1/dt + 8).
        let mesh = single_block(1, 1).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let k = PermeabilityField::uniform(1, 1.0).unwrap();
        let ops = OperatorSet::build(&dofs, &k).unwrap();
        let cfg = ThetaConfig::new(1.0, 0.25, 1).unwrap();
        let f = 3.0;
        let data = ProblemData {
            source: &move |_, _, _| f,
            boundary: &|_, _, _| 0.0,
            initial: &|_, _| 0.5,
        };
        let traj = run_transient(&dofs, &ops, &data, cfg, 1e-13, Retention::All).unwrap();
        let p0 = 0.5;
        let expect = (f + p0 / 0.25) / (1.0 / 0.25 + 8.0);
        let got = traj.last().pressure.values[0];
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn backward_euler_theta_point_is_new_time_level() {
        let mesh = single_block(2, 2).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let k = PermeabilityField::uniform(dofs.pressure_len(), 1.0).unwrap();
        let ops = OperatorSet::build(&dofs, &k).unwrap();
        let cfg = ThetaConfig::new(1.0, 0.1, 2).unwrap();
        let data = ProblemData {
            source: &|x, _, t| x + t,
            boundary: &|_, _, _| 0.0,
            initial: &|_, _| 0.0,
        };
        let traj = run_transient(&dofs, &ops, &data, cfg, 1e-12, Retention::All).unwrap();
        assert!((traj.theta_fluxes[0].time - 0.1).abs() < 1e-15);
        assert!((traj.theta_fluxes[1].time - 0.2).abs() < 1e-15);
        // For theta = 1 the theta-point flux is the node flux.
        for (tf, s) in traj.theta_fluxes.iter().zip(traj.states.iter().skip(1)) {
            for (a, b) in tf.flux.values.iter().zip(&s.flux.values) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn crank_nicolson_theta_point_is_midpoint() {
        let cfg = ThetaConfig::new(0.0, 0.2, 1).unwrap();
        assert!((cfg.alpha() - 0.5).abs() < 1e-15);
        let mesh = single_block(2, 2).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let k = PermeabilityField::uniform(dofs.pressure_len(), 1.0).unwrap();
        let ops = OperatorSet::build(&dofs, &k).unwrap();
        let data = ProblemData {
            source: &|_, _, t| t,
            boundary: &|_, _, _| 0.0,
            initial: &|_, _| 0.0,
        };
        let traj = run_transient(&dofs, &ops, &data, cfg, 1e-12, Retention::All).unwrap();
        assert!((traj.theta_fluxes[0].time - 0.1).abs() < 1e-15);
    }

    #[test]
    fn empty_march_keeps_initial_state() {
        let mesh = single_block(2, 2).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let k = PermeabilityField::uniform(dofs.pressure_len(), 1.0).unwrap();
        let ops = OperatorSet::build(&dofs, &k).unwrap();
        let cfg = ThetaConfig::new(1.0, 0.1, 0).unwrap();
        let data = ProblemData {
            source: &|_, _, _| 1.0,
            boundary: &|_, _, _| 0.0,
            initial: &|x, _| x,
        };
        let traj = run_transient(&dofs, &ops, &data, cfg, 1e-12, Retention::All).unwrap();
        assert_eq!(traj.states.len(), 1);
        assert_eq!(traj.theta_fluxes.len(), 0);
        assert_eq!(traj.initial().time, 0.0);
    }

    #[test]
    fn schur_matrix_is_symmetric() {
        let mesh = two_block(3, 2, 2, 3).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let k = PermeabilityField::uniform(dofs.pressure_len(), 1.0).unwrap();
        let ops = OperatorSet::build(&dofs, &k).unwrap();
        let d: Vec<f64> = ops.cell_measures.iter().map(|m| m / 0.01).collect();
        let s = schur_matrix(&dofs, &ops.mass, &d, None);
        assert!(s.asymmetry() <= 1e-14);
    }

    #[test]
    fn mass_balance_residual_tracks_solver_tolerance() {
        let mesh = two_block(3, 3, 2, 2).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let k = PermeabilityField::uniform(dofs.pressure_len(), 1.0).unwrap();
        let ops = OperatorSet::build(&dofs, &k).unwrap();
        let cfg = ThetaConfig::new(1.0, 0.02, 5).unwrap();
        let tol = 1e-12;
        let data = ProblemData {
            source: &|x, y, t| x * y + t,
            boundary: &|_, _, t| 0.1 * t,
            initial: &|x, y| x * (1.0 - x) * y * (1.0 - y),
        };
        let traj = run_transient(&dofs, &ops, &data, cfg, tol, Retention::All).unwrap();
        for meta in &traj.step_meta {
            assert!(
                meta.mass_residual_inf <= 10.0 * tol * meta.rhs_norm.max(1.0),
                "residual {:e} vs rhs scale {:e}",
                meta.mass_residual_inf,
                meta.rhs_norm
            );
        }
    }

    #[test]
    fn homogeneous_backward_euler_energy_decays() {
        let mesh = single_block(8, 8).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let k = PermeabilityField::uniform(dofs.pressure_len(), 1.0).unwrap();
        let ops = OperatorSet::build(&dofs, &k).unwrap();
        let cfg = ThetaConfig::new(1.0, 0.01, 100).unwrap();
        let data = ProblemData {
            source: &|_, _, _| 0.0,
            boundary: &|_, _, _| 0.0,
            initial: &|x, y| {
                (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()
            },
        };
        let traj = run_transient(&dofs, &ops, &data, cfg, 1e-12, Retention::All).unwrap();
        let mut prev = f64::INFINITY;
        for s in &traj.states {
            let e = weighted_pressure_energy(&s.pressure, &ops.cell_measures);
            assert!(e <= prev + 1e-14, "energy grew: {e} > {prev}");
            prev = e;
        }
    }
}
